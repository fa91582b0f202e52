//! Decoding checked against files written and read back by an independent
//! WFDB implementation (values stored in `data/reference.json`).

use std::path::PathBuf;

use ecgseg::wfdb::{self, decode_annotations, decode_raw, LeadAssignment, SignalFormat, SymbolMap};
use ecgseg::{BoundaryKind, Wave};
use serde_json::Value;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn reference() -> Value {
    serde_json::from_str(&std::fs::read_to_string(data("reference.json")).unwrap()).unwrap()
}

fn frames(v: &Value) -> Vec<Vec<i64>> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|r| r.as_array().unwrap().iter().map(|x| x.as_i64().unwrap()).collect())
        .collect()
}

#[test]
fn format_212_matches_reference_reader() {
    let expected = frames(&reference()["ref212"]["d"]);
    let bytes = std::fs::read(data("ref212.dat")).unwrap();
    let raw = decode_raw(&bytes, SignalFormat::F212).unwrap();
    let flat: Vec<i64> = expected.iter().flatten().copied().collect();
    assert_eq!(raw.iter().map(|&x| x as i64).collect::<Vec<_>>(), flat);
    assert_eq!(wfdb::encode_raw(&raw, SignalFormat::F212), bytes);

    let (desc, rec) = wfdb::read_record(&data("ref212")).unwrap();
    assert_eq!((desc.fs, desc.n_sig(), desc.n_samples), (250.0, 2, Some(1001)));
    assert_eq!(rec.leads[1].name, "V5");
    for (i, row) in expected.iter().enumerate() {
        for (j, &d) in row.iter().enumerate() {
            assert_eq!(rec.leads[j].samples[i], (d as f64 / 200.0) as f32);
        }
    }
}

#[test]
fn format_16_matches_reference_reader() {
    let r = reference();
    let expected = frames(&r["ref16"]["d"]);
    let (desc, rec) = wfdb::read_record(&data("ref16")).unwrap();
    assert_eq!(desc.signals[2].baseline, -7);
    assert_eq!(rec.comments, vec!["Rhythm: Atrial fibrillation."]);
    let bytes = std::fs::read(data("ref16.dat")).unwrap();
    let raw = decode_raw(&bytes, SignalFormat::F16).unwrap();
    assert_eq!(raw.iter().map(|&x| x as i64).collect::<Vec<_>>(), expected.iter().flatten().copied().collect::<Vec<_>>());
    for (i, row) in r["ref16"]["p_first"].as_array().unwrap().iter().enumerate() {
        for (j, p) in row.as_array().unwrap().iter().enumerate() {
            let p = p.as_f64().unwrap();
            assert!((rec.leads[j].samples[i] as f64 - p).abs() < 1e-6, "sample {i} lead {j}");
        }
    }
}

#[test]
fn annotation_stream_matches_reference_reader() {
    let r = &reference()["refann"];
    let raw = decode_annotations(&std::fs::read(data("refann.atr")).unwrap()).unwrap();
    // The reference writer prepends a note carrying the time resolution and a
    // code-0 placeholder.
    assert_eq!(raw[0].aux.as_deref(), Some(&b"## time resolution: 500"[..]));
    let raw: Vec<_> = raw.into_iter().filter(|a| a.code != 22 && a.code != 0).collect();
    let samples: Vec<i64> = r["sample"].as_array().unwrap().iter().map(|x| x.as_i64().unwrap()).collect();
    let symbols: Vec<&str> = r["symbol"].as_array().unwrap().iter().map(|x| x.as_str().unwrap()).collect();
    let chans: Vec<i64> = r["chan"].as_array().unwrap().iter().map(|x| x.as_i64().unwrap()).collect();
    assert_eq!(raw.iter().map(|a| a.sample).collect::<Vec<_>>(), samples);
    assert_eq!(raw.iter().map(|a| a.symbol().unwrap()).collect::<Vec<_>>(), symbols);
    assert_eq!(raw.iter().map(|a| a.chan as i64).collect::<Vec<_>>(), chans);
    assert_eq!(raw[11].aux.as_deref(), Some(&b"(AFIB"[..]));
}

#[test]
fn annotation_file_to_boundaries() {
    let desc = wfdb::read_header(&data("ref16")).unwrap();
    let set = wfdb::read_annotation_file(
        &data("refann"),
        "atr",
        &ecgseg::wfdb::HeaderDescriptor { n_samples: None, ..desc },
        &SymbolMap::default(),
        &LeadAssignment::Fixed("ii".into()),
    )
    .unwrap();
    let got: Vec<(Wave, BoundaryKind, usize)> = set.items.iter().map(|a| (a.wave, a.kind, a.sample)).collect();
    use BoundaryKind::*;
    assert_eq!(
        got,
        vec![
            (Wave::P, Onset, 10),
            (Wave::P, Offset, 20),
            (Wave::Qrs, Onset, 30),
            (Wave::Qrs, Offset, 40),
            (Wave::T, Onset, 50),
            (Wave::T, Offset, 70),
            (Wave::Qrs, Offset, 3005),
        ]
    );
    assert_eq!(set.dropped, 1, "trailing onset marker");
}
