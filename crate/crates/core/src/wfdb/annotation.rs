//! MIT-format annotation streams and their mapping to wave boundaries.

use std::collections::HashMap;

use crate::error::{EcgError, Result};
use crate::record::{AnnotationSet, BoundaryAnnotation, BoundaryKind, Wave, GLOBAL_LEAD};

use super::header::HeaderDescriptor;

const SKIP: u16 = 59;
const NUM: u16 = 60;
const SUB: u16 = 61;
const CHN: u16 = 62;
const AUX: u16 = 63;
const MAX_CODE: u16 = 49;

/// Mnemonics of the standard annotation codes, indexed by code.
const CODE_SYMBOLS: [&str; 42] = [
    "", "N", "L", "R", "a", "V", "F", "J", "A", "S", "E", "j", "/", "Q", "~", "", "|", "", "s", "T", "*", "D",
    "\"", "=", "p", "B", "^", "t", "+", "u", "?", "!", "[", "]", "e", "n", "@", "x", "f", "(", ")", "r",
];

pub fn code_symbol(code: u8) -> Option<&'static str> {
    CODE_SYMBOLS.get(code as usize).copied().filter(|s| !s.is_empty())
}

pub fn symbol_code(symbol: &str) -> Option<u8> {
    CODE_SYMBOLS
        .iter()
        .position(|s| !s.is_empty() && *s == symbol)
        .map(|i| i as u8)
}

/// One decoded annotation with its modifier fields.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawAnnotation {
    pub sample: i64,
    pub code: u8,
    pub subtype: i8,
    pub chan: u8,
    pub num: i8,
    pub aux: Option<Vec<u8>>,
}

impl RawAnnotation {
    pub fn new(sample: i64, code: u8) -> Self {
        Self {
            sample,
            code,
            subtype: 0,
            chan: 0,
            num: 0,
            aux: None,
        }
    }

    pub fn symbol(&self) -> Option<&'static str> {
        code_symbol(self.code)
    }
}

fn word(bytes: &[u8], pos: usize) -> Result<u16> {
    bytes
        .get(pos..pos + 2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]))
        .ok_or_else(|| EcgError::Annotation(format!("stream truncated at byte {pos}")))
}

/// Decode an annotation stream. A missing end marker is tolerated.
pub fn decode_annotations(bytes: &[u8]) -> Result<Vec<RawAnnotation>> {
    let mut out: Vec<RawAnnotation> = Vec::new();
    let mut pos = 0;
    let mut time: i64 = 0;
    let (mut chan, mut num) = (0u8, 0i8);
    if bytes.len() % 2 != 0 {
        log::warn!("annotation stream has an odd byte count; last byte ignored");
    }
    while pos + 1 < bytes.len() {
        let w = word(bytes, pos)?;
        pos += 2;
        let (a, i) = (w >> 10, w & 0x3FF);
        match a {
            0 if i == 0 => return Ok(out),
            SKIP => {
                let hi = word(bytes, pos)? as u32;
                let lo = word(bytes, pos + 2)? as u32;
                time += ((hi << 16) | lo) as i32 as i64;
                pos += 4;
            }
            NUM | SUB | CHN | AUX => {
                let Some(last) = out.last_mut() else {
                    return Err(EcgError::Annotation(format!(
                        "modifier code {a} at byte {} precedes any annotation",
                        pos - 2
                    )));
                };
                let low = (i & 0xFF) as u8;
                match a {
                    NUM => {
                        num = low as i8;
                        last.num = num;
                    }
                    SUB => last.subtype = low as i8,
                    CHN => {
                        chan = low;
                        last.chan = chan;
                    }
                    _ => {
                        let n = low as usize;
                        let text = bytes.get(pos..pos + n).ok_or_else(|| {
                            EcgError::Annotation(format!("auxiliary text truncated at byte {pos}"))
                        })?;
                        last.aux = Some(text.to_vec());
                        pos += n + (n & 1);
                    }
                }
            }
            code => {
                time += i as i64;
                out.push(RawAnnotation {
                    sample: time,
                    code: code as u8,
                    subtype: 0,
                    chan,
                    num,
                    aux: None,
                });
            }
        }
    }
    log::warn!("annotation stream ended without an end marker");
    Ok(out)
}

/// Encode annotations, which must be sorted by sample.
pub fn encode_annotations(anns: &[RawAnnotation]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let push = |out: &mut Vec<u8>, a: u16, i: u16| out.extend_from_slice(&((a << 10) | (i & 0x3FF)).to_le_bytes());
    let mut time: i64 = 0;
    let (mut chan, mut num) = (0u8, 0i8);
    for ann in anns {
        if ann.code as u16 > MAX_CODE || ann.code == 0 {
            return Err(EcgError::Annotation(format!("cannot encode annotation code {}", ann.code)));
        }
        let delta = ann.sample - time;
        if !(0..=1023).contains(&delta) {
            let d = i32::try_from(delta)
                .map_err(|_| EcgError::Annotation(format!("sample gap {delta} too large")))? as u32;
            push(&mut out, SKIP, 0);
            out.extend_from_slice(&((d >> 16) as u16).to_le_bytes());
            out.extend_from_slice(&(d as u16).to_le_bytes());
            push(&mut out, ann.code as u16, 0);
        } else {
            push(&mut out, ann.code as u16, delta as u16);
        }
        time = ann.sample;
        if ann.subtype != 0 {
            push(&mut out, SUB, ann.subtype as u8 as u16);
        }
        if ann.chan != chan {
            chan = ann.chan;
            push(&mut out, CHN, chan as u16);
        }
        if ann.num != num {
            num = ann.num;
            push(&mut out, NUM, num as u8 as u16);
        }
        if let Some(aux) = &ann.aux {
            if aux.len() > 255 {
                return Err(EcgError::Annotation("auxiliary text longer than 255 bytes".into()));
            }
            push(&mut out, AUX, aux.len() as u16);
            out.extend_from_slice(aux);
            if aux.len() % 2 == 1 {
                out.push(0);
            }
        }
    }
    push(&mut out, 0, 0);
    Ok(out)
}

/// Maps annotation mnemonics to waves and names the boundary markers.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolMap {
    pub waves: HashMap<String, Wave>,
    pub onset: String,
    pub offset: String,
}

/// Beat mnemonics treated as QRS complexes by default.
pub const BEAT_SYMBOLS: [&str; 18] = [
    "N", "L", "R", "a", "V", "F", "J", "A", "S", "E", "j", "/", "Q", "e", "n", "f", "B", "r",
];

impl Default for SymbolMap {
    fn default() -> Self {
        let mut waves: HashMap<String, Wave> = BEAT_SYMBOLS.iter().map(|s| (s.to_string(), Wave::Qrs)).collect();
        waves.insert("p".into(), Wave::P);
        waves.insert("t".into(), Wave::T);
        Self {
            waves,
            onset: "(".into(),
            offset: ")".into(),
        }
    }
}

/// How decoded annotations are assigned to leads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LeadAssignment {
    /// Every event belongs to the named lead (one annotation file per lead).
    Fixed(String),
    /// Use the annotation's channel number to index the header's signals.
    Channel,
    /// Lead-independent events.
    Global,
}

#[derive(Default)]
struct PairState {
    open: Option<i64>,
    wave: Option<Wave>,
}

/// Turn an annotation stream into boundary events.
///
/// An onset marker directly before a wave symbol becomes that wave's onset, an
/// offset marker after it becomes its offset. Markers with no wave to attach
/// to, dangling onsets at the end and events beyond the record are dropped
/// and counted in [`AnnotationSet::dropped`]. Unmapped symbols are skipped.
pub fn read_annotations(
    bytes: &[u8],
    desc: &HeaderDescriptor,
    map: &SymbolMap,
    lead: &LeadAssignment,
) -> Result<AnnotationSet> {
    let raw = decode_annotations(bytes)?;
    let mut set = AnnotationSet::new(desc.record_name.clone(), desc.fs);
    let mut states: HashMap<u8, PairState> = HashMap::new();
    let lead_of = |chan: u8| -> String {
        match lead {
            LeadAssignment::Fixed(name) => name.clone(),
            LeadAssignment::Global => GLOBAL_LEAD.to_string(),
            LeadAssignment::Channel => desc
                .signals
                .get(chan as usize)
                .map_or_else(|| GLOBAL_LEAD.to_string(), |s| s.description.clone()),
        }
    };
    let key = |chan: u8| if *lead == LeadAssignment::Channel { chan } else { 0 };
    let in_range = |s: i64| s >= 0 && desc.n_samples.is_none_or(|n| (s as u64) < n as u64);
    let push = |set: &mut AnnotationSet, wave: Wave, kind: BoundaryKind, sample: i64, chan: u8| {
        if in_range(sample) {
            set.items.push(BoundaryAnnotation::new(wave, kind, sample as usize, lead_of(chan)));
        } else {
            set.dropped += 1;
        }
    };

    for ann in &raw {
        let Some(sym) = ann.symbol() else { continue };
        let st = states.entry(key(ann.chan)).or_default();
        if sym == map.onset {
            if st.open.replace(ann.sample).is_some() {
                set.dropped += 1;
            }
            st.wave = None;
        } else if sym == map.offset {
            match st.wave.take() {
                Some(w) => push(&mut set, w, BoundaryKind::Offset, ann.sample, ann.chan),
                None => set.dropped += 1,
            }
            if st.open.take().is_some() {
                set.dropped += 1;
            }
        } else if let Some(&w) = map.waves.get(sym) {
            if let Some(s) = st.open.take() {
                push(&mut set, w, BoundaryKind::Onset, s, ann.chan);
            }
            st.wave = Some(w);
        }
    }
    let dangling = states.values().filter(|s| s.open.is_some()).count();
    if dangling > 0 {
        log::warn!("record {}: {dangling} onset marker(s) never followed by a wave", desc.record_name);
        set.dropped += dangling;
    }
    if set.dropped > 0 {
        log::warn!("record {}: {} annotation event(s) dropped", desc.record_name, set.dropped);
    }
    set.sort();
    Ok(set)
}

/// Inverse of [`read_annotations`] for one lead: each boundary pair becomes
/// `( symbol )`, with the symbol placed midway between onset and offset.
pub fn boundaries_to_raw(items: &[BoundaryAnnotation], peak_symbols: &dyn Fn(Wave) -> &'static str) -> Vec<RawAnnotation> {
    let mut out = Vec::new();
    let onset = symbol_code("(").expect("onset code");
    let offset = symbol_code(")").expect("offset code");
    for w in Wave::ALL {
        let mut ons: Vec<usize> = items.iter().filter(|a| a.wave == w && a.kind == BoundaryKind::Onset).map(|a| a.sample).collect();
        let mut offs: Vec<usize> = items.iter().filter(|a| a.wave == w && a.kind == BoundaryKind::Offset).map(|a| a.sample).collect();
        ons.sort_unstable();
        offs.sort_unstable();
        let code = symbol_code(peak_symbols(w)).expect("peak symbol has a code");
        let mut j = 0;
        for &on in &ons {
            while j < offs.len() && offs[j] < on {
                j += 1;
            }
            if j < offs.len() {
                let off = offs[j];
                j += 1;
                out.push(RawAnnotation::new(on as i64, onset));
                out.push(RawAnnotation::new(((on + off) / 2) as i64, code));
                out.push(RawAnnotation::new(off as i64, offset));
            }
        }
    }
    out.sort_by_key(|a| a.sample);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wfdb::header::parse_header;

    fn desc() -> HeaderDescriptor {
        parse_header(b"r 1 500 5000\nr.dat 16 200 16 0 0 0 0 ii\n").unwrap()
    }

    fn stream(events: &[(i64, &str)]) -> Vec<u8> {
        let raw: Vec<RawAnnotation> = events
            .iter()
            .map(|&(s, sym)| RawAnnotation::new(s, symbol_code(sym).unwrap()))
            .collect();
        encode_annotations(&raw).unwrap()
    }

    fn read(bytes: &[u8]) -> AnnotationSet {
        read_annotations(bytes, &desc(), &SymbolMap::default(), &LeadAssignment::Fixed("ii".into())).unwrap()
    }

    #[test]
    fn code_table_spot_checks() {
        assert_eq!(code_symbol(1), Some("N"));
        assert_eq!(code_symbol(24), Some("p"));
        assert_eq!(code_symbol(27), Some("t"));
        assert_eq!(code_symbol(39), Some("("));
        assert_eq!(code_symbol(40), Some(")"));
        assert_eq!(code_symbol(15), None);
        assert_eq!(symbol_code("N"), Some(1));
    }

    #[test]
    fn full_triplets_give_six_boundaries() {
        let bytes = stream(&[(10, "("), (15, "p"), (20, ")"), (30, "("), (35, "N"), (40, ")"), (50, "("), (60, "t"), (70, ")")]);
        let set = read(&bytes);
        let got: Vec<(Wave, BoundaryKind, usize)> = set.items.iter().map(|a| (a.wave, a.kind, a.sample)).collect();
        use BoundaryKind::*;
        assert_eq!(
            got,
            vec![(Wave::P, Onset, 10), (Wave::P, Offset, 20), (Wave::Qrs, Onset, 30), (Wave::Qrs, Offset, 40), (Wave::T, Onset, 50), (Wave::T, Offset, 70)]
        );
        assert_eq!(set.dropped, 0);
        assert!(set.items.iter().all(|a| a.lead == "ii"));
    }

    #[test]
    fn offset_without_onset_marker() {
        let set = read(&stream(&[(100, "N"), (120, ")")]));
        assert_eq!(set.items.len(), 1);
        assert_eq!((set.items[0].wave, set.items[0].kind), (Wave::Qrs, BoundaryKind::Offset));
        assert_eq!(set.dropped, 0);
    }

    #[test]
    fn empty_stream() {
        assert!(read(&[0, 0]).is_empty());
        assert!(read(&[]).is_empty());
    }

    #[test]
    fn unmatched_markers_are_counted() {
        let set = read(&stream(&[(5, ")"), (10, "("), (12, "("), (15, "N"), (30, "+"), (40, "(")]));
        assert_eq!(set.items.len(), 1, "only the onset at 12");
        assert_eq!(set.items[0].sample, 12);
        assert_eq!(set.dropped, 3);
    }

    #[test]
    fn events_past_the_record_end_dropped() {
        let set = read(&stream(&[(4990, "("), (4995, "N"), (5003, ")")]));
        assert_eq!(set.items.len(), 1);
        assert_eq!(set.dropped, 1);
    }

    #[test]
    fn long_gaps_use_skip_and_modifiers_round_trip() {
        let mut a = RawAnnotation::new(5, 1);
        a.subtype = -2;
        a.aux = Some(b"(AFIB".to_vec());
        let mut b = RawAnnotation::new(100_000, 28);
        b.chan = 1;
        b.num = -3;
        let mut c = RawAnnotation::new(100_001, 5);
        c.chan = 1;
        c.num = -3;
        let bytes = encode_annotations(&[a.clone(), b.clone(), c.clone()]).unwrap();
        // word, SUB, AUX + 6 bytes, SKIP + 4 bytes, word, CHN, NUM, word, end
        assert_eq!(bytes.len(), 2 + 2 + 2 + 6 + 2 + 4 + 2 + 2 + 2 + 2 + 2);
        assert_eq!(decode_annotations(&bytes).unwrap(), vec![a, b, c]);
    }

    #[test]
    fn channel_assignment() {
        let d = parse_header(b"r 2 250\nr.dat 212 200 12 0 0 0 0 MLII\nr.dat 212 200 12 0 0 0 0 V5\n").unwrap();
        let mut raw = vec![RawAnnotation::new(10, 39), RawAnnotation::new(12, 1), RawAnnotation::new(14, 39)];
        raw[2].chan = 1;
        raw.push({
            let mut r = RawAnnotation::new(16, 1);
            r.chan = 1;
            r
        });
        let bytes = encode_annotations(&raw).unwrap();
        let set = read_annotations(&bytes, &d, &SymbolMap::default(), &LeadAssignment::Channel).unwrap();
        let leads: Vec<&str> = set.items.iter().map(|a| a.lead.as_str()).collect();
        assert_eq!(leads, vec!["MLII", "V5"]);
    }

    #[test]
    fn boundary_pairs_round_trip() {
        let items = vec![
            BoundaryAnnotation::new(Wave::P, BoundaryKind::Onset, 100, "ii"),
            BoundaryAnnotation::new(Wave::P, BoundaryKind::Offset, 150, "ii"),
            BoundaryAnnotation::new(Wave::Qrs, BoundaryKind::Onset, 200, "ii"),
            BoundaryAnnotation::new(Wave::Qrs, BoundaryKind::Offset, 250, "ii"),
        ];
        let peaks = |w: Wave| match w {
            Wave::P => "p",
            Wave::Qrs => "N",
            Wave::T => "t",
        };
        let bytes = encode_annotations(&boundaries_to_raw(&items, &peaks)).unwrap();
        assert_eq!(read(&bytes).items, items);
    }
}
