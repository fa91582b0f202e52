//! Boundary annotations as CSV with columns `record, lead, wave, kind, sample, time_ms`.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{EcgError, Result};
use crate::record::{AnnotationSet, BoundaryAnnotation, BoundaryKind, Wave};

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    record: String,
    lead: String,
    wave: Wave,
    kind: BoundaryKind,
    sample: usize,
    time_ms: f64,
}

fn csv_err(row: usize, e: impl std::fmt::Display) -> EcgError {
    EcgError::Csv { row, msg: e.to_string() }
}

/// Write sets in order, each sorted by sample.
pub fn write_annotation_csv<W: Write>(out: W, sets: &[AnnotationSet]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut n = 0;
    for set in sets {
        let mut set = set.clone();
        set.sort();
        for a in &set.items {
            n += 1;
            w.serialize(Row {
                record: set.record_id.clone(),
                lead: a.lead.clone(),
                wave: a.wave,
                kind: a.kind,
                sample: a.sample,
                time_ms: a.sample as f64 * 1000.0 / set.source_fs,
            })
            .map_err(|e| csv_err(n, e))?;
        }
    }
    if n == 0 {
        w.write_record(["record", "lead", "wave", "kind", "sample", "time_ms"])
            .map_err(|e| csv_err(0, e))?;
    }
    w.flush()?;
    Ok(())
}

/// Read annotation CSV, grouped by record in order of first appearance.
///
/// The sampling rate of each set is recovered from `sample / time_ms`;
/// `default_fs` is used when no row has a nonzero time. Row numbers in errors
/// count the header as row 1.
pub fn read_annotation_csv<R: Read>(input: R, default_fs: f64) -> Result<Vec<AnnotationSet>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, (AnnotationSet, Option<f64>)> = BTreeMap::new();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let rowno = i + 2;
        let row = row.map_err(|e| csv_err(rowno, e))?;
        if !row.time_ms.is_finite() || row.time_ms < 0.0 {
            return Err(csv_err(rowno, format!("invalid time_ms {}", row.time_ms)));
        }
        let entry = groups.entry(row.record.clone()).or_insert_with(|| {
            order.push(row.record.clone());
            (AnnotationSet::new(row.record.clone(), default_fs), None)
        });
        if row.time_ms > 0.0 {
            let fs = row.sample as f64 * 1000.0 / row.time_ms;
            match entry.1 {
                None => entry.1 = Some(fs),
                Some(prev) if (prev - fs).abs() > prev * 1e-3 + 1e3 / row.time_ms => {
                    return Err(csv_err(rowno, format!("sample/time_ms implies {fs:.3} Hz, earlier rows {prev:.3} Hz")));
                }
                _ => {}
            }
        }
        entry.0.items.push(BoundaryAnnotation::new(row.wave, row.kind, row.sample, row.lead));
    }
    Ok(order
        .into_iter()
        .map(|id| {
            let (mut set, fs) = groups.remove(&id).expect("group exists");
            if let Some(fs) = fs {
                set.source_fs = snap_rate(fs);
            }
            set.sort();
            set
        })
        .collect())
}

/// Undo rounding in the written times for the usual integer rates.
fn snap_rate(fs: f64) -> f64 {
    let r = fs.round();
    if (fs - r).abs() < 1e-3 * r.max(1.0) {
        r
    } else {
        fs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_set() -> AnnotationSet {
        let mut s = AnnotationSet::new("rec1", 500.0);
        s.items.push(BoundaryAnnotation::new(Wave::Qrs, BoundaryKind::Offset, 1020, "ii"));
        s.items.push(BoundaryAnnotation::new(Wave::Qrs, BoundaryKind::Onset, 1000, "ii"));
        s
    }

    #[test]
    fn round_trip() {
        let mut buf = Vec::new();
        write_annotation_csv(&mut buf, &[sample_set()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("record,lead,wave,kind,sample,time_ms\nrec1,ii,QRS,onset,1000,2000.0\n"), "{text}");
        let back = read_annotation_csv(&buf[..], 250.0).unwrap();
        let mut expected = sample_set();
        expected.sort();
        assert_eq!(back, vec![expected]);
    }

    #[test]
    fn bad_row_is_cited() {
        let text = "record,lead,wave,kind,sample,time_ms\nr,ii,P,onset,1,2\nr,ii,X,onset,1,2\n";
        match read_annotation_csv(text.as_bytes(), 500.0) {
            Err(EcgError::Csv { row, .. }) => assert_eq!(row, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_file_has_header() {
        let mut buf = Vec::new();
        write_annotation_csv(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim(), "record,lead,wave,kind,sample,time_ms");
        assert!(read_annotation_csv(&b"record,lead,wave,kind,sample,time_ms\n"[..], 500.0).unwrap().is_empty());
    }
}
