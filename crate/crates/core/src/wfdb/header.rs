//! `.hea` header grammar.

use std::fmt;

use crate::error::{EcgError, Result};

/// ADC units per physical unit assumed when a header leaves the gain out or sets it to zero.
pub const DEFAULT_GAIN: f64 = 200.0;
/// Sampling frequency assumed when the record line omits it.
pub const DEFAULT_FS: f64 = 250.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SignalFormat {
    /// Two 12-bit two's-complement samples packed into three bytes.
    F212,
    /// 16-bit little-endian two's-complement.
    F16,
}

impl SignalFormat {
    pub fn code(self) -> u32 {
        match self {
            SignalFormat::F212 => 212,
            SignalFormat::F16 => 16,
        }
    }

    pub fn from_code(code: &str) -> Result<Self> {
        match code {
            "212" => Ok(SignalFormat::F212),
            "16" => Ok(SignalFormat::F16),
            other => Err(EcgError::UnsupportedFormat(other.to_string())),
        }
    }
}

impl fmt::Display for SignalFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalSpec {
    pub file_name: String,
    pub format: SignalFormat,
    pub samples_per_frame: usize,
    pub skew: usize,
    pub byte_offset: usize,
    /// ADC units per physical unit.
    pub gain: f64,
    pub baseline: i32,
    pub units: String,
    pub adc_resolution: Option<u32>,
    pub adc_zero: i32,
    pub initial_value: Option<i32>,
    pub checksum: Option<i32>,
    pub block_size: Option<usize>,
    /// Lead name (the header's description field).
    pub description: String,
}

impl SignalSpec {
    /// Factor converting physical units to millivolts.
    pub fn millivolt_scale(&self) -> f64 {
        match self.units.to_ascii_lowercase().as_str() {
            "uv" | "µv" | "microvolt" | "microvolts" => 1e-3,
            "v" | "volt" | "volts" => 1e3,
            _ => 1.0,
        }
    }
}

/// Everything a header says about a record.
#[derive(Debug, Clone, PartialEq)]
pub struct HeaderDescriptor {
    pub record_name: String,
    pub fs: f64,
    pub counter_freq: Option<f64>,
    pub base_counter: Option<f64>,
    /// Samples per signal, when the header states it.
    pub n_samples: Option<usize>,
    pub base_time: Option<String>,
    pub base_date: Option<String>,
    pub signals: Vec<SignalSpec>,
    pub comments: Vec<String>,
}

impl HeaderDescriptor {
    pub fn n_sig(&self) -> usize {
        self.signals.len()
    }

    pub fn lead_names(&self) -> Vec<String> {
        self.signals.iter().map(|s| s.description.clone()).collect()
    }

    /// Record duration in seconds, when the sample count is known.
    pub fn duration_s(&self) -> Option<f64> {
        self.n_samples.map(|n| n as f64 / self.fs)
    }

    /// Render back to header text.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {} {}", self.record_name, self.signals.len(), fmt_num(self.fs));
        if let Some(cf) = self.counter_freq {
            out.push_str(&format!("/{}", fmt_num(cf)));
            if let Some(bc) = self.base_counter {
                out.push_str(&format!("({})", fmt_num(bc)));
            }
        }
        if let Some(n) = self.n_samples {
            out.push_str(&format!(" {n}"));
            if let Some(t) = &self.base_time {
                out.push_str(&format!(" {t}"));
                if let Some(d) = &self.base_date {
                    out.push_str(&format!(" {d}"));
                }
            }
        }
        out.push('\n');
        for s in &self.signals {
            out.push_str(&format!("{} {}", s.file_name, s.format));
            if s.samples_per_frame != 1 {
                out.push_str(&format!("x{}", s.samples_per_frame));
            }
            if s.skew != 0 {
                out.push_str(&format!(":{}", s.skew));
            }
            if s.byte_offset != 0 {
                out.push_str(&format!("+{}", s.byte_offset));
            }
            out.push_str(&format!(" {}({})/{}", fmt_num(s.gain), s.baseline, s.units));
            out.push_str(&format!(" {}", s.adc_resolution.unwrap_or(0)));
            out.push_str(&format!(" {}", s.adc_zero));
            out.push_str(&format!(" {}", s.initial_value.unwrap_or(0)));
            out.push_str(&format!(" {}", s.checksum.unwrap_or(0)));
            out.push_str(&format!(" {}", s.block_size.unwrap_or(0)));
            out.push_str(&format!(" {}\n", s.description));
        }
        for c in &self.comments {
            out.push_str(&format!("#{c}\n"));
        }
        out
    }
}

fn fmt_num(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

fn perr(line: usize, msg: impl Into<String>) -> EcgError {
    EcgError::Parse { line, msg: msg.into() }
}

fn num<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T> {
    tok.parse::<T>()
        .map_err(|_| perr(line, format!("invalid {what} {tok:?}")))
}

/// Parse header text. Comment lines (`#`) are collected, blank lines skipped.
pub fn parse_header(bytes: &[u8]) -> Result<HeaderDescriptor> {
    let text = String::from_utf8_lossy(bytes);
    let mut comments = Vec::new();
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let l = raw.trim();
        if l.is_empty() {
            continue;
        }
        if let Some(c) = l.strip_prefix('#') {
            comments.push(c.trim().to_string());
            continue;
        }
        lines.push((i + 1, l));
    }
    let Some(&(rec_line, record)) = lines.first() else {
        return Err(perr(1, "missing record line"));
    };
    let (mut desc, n_sig) = parse_record_line(record, rec_line)?;
    desc.comments = comments;
    let sig_lines = &lines[1..];
    if sig_lines.len() < n_sig {
        let line = sig_lines.last().map_or(rec_line, |l| l.0) + 1;
        return Err(perr(line, format!("expected {n_sig} signal lines, found {}", sig_lines.len())));
    }
    for &(ln, l) in &sig_lines[..n_sig] {
        desc.signals.push(parse_signal_line(l, ln)?);
    }
    if sig_lines.len() > n_sig {
        log::warn!("header has {} lines beyond the declared signals; ignored", sig_lines.len() - n_sig);
    }
    Ok(desc)
}

fn parse_record_line(l: &str, line: usize) -> Result<(HeaderDescriptor, usize)> {
    let toks: Vec<&str> = l.split_whitespace().collect();
    if toks.len() < 2 {
        return Err(perr(line, "record line needs a name and a signal count"));
    }
    let (name, nseg) = match toks[0].split_once('/') {
        Some((n, s)) => (n, Some(s)),
        None => (toks[0], None),
    };
    if name.is_empty() {
        return Err(perr(line, "empty record name"));
    }
    if let Some(s) = nseg {
        let _: usize = num(s, line, "segment count")?;
        return Err(perr(line, "multi-segment records are not supported"));
    }
    let n_sig: usize = num(toks[1], line, "signal count")?;
    let mut fs = DEFAULT_FS;
    let mut counter_freq = None;
    let mut base_counter = None;
    if let Some(tok) = toks.get(2) {
        let (f, rest) = match tok.split_once('/') {
            Some((f, r)) => (f, Some(r)),
            None => (*tok, None),
        };
        fs = num(f, line, "sampling frequency")?;
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(perr(line, format!("sampling frequency must be positive, got {f}")));
        }
        if let Some(r) = rest {
            let (cf, bc) = match r.split_once('(') {
                Some((cf, bc)) => (cf, Some(bc.trim_end_matches(')'))),
                None => (r, None),
            };
            counter_freq = Some(num(cf, line, "counter frequency")?);
            base_counter = bc.map(|b| num(b, line, "base counter")).transpose()?;
        }
    }
    let n_samples = toks.get(3).map(|t| num(t, line, "sample count")).transpose()?;
    let desc = HeaderDescriptor {
        record_name: name.to_string(),
        fs,
        counter_freq,
        base_counter,
        n_samples,
        base_time: toks.get(4).map(|s| s.to_string()),
        base_date: toks.get(5).map(|s| s.to_string()),
        signals: Vec::with_capacity(n_sig),
        comments: Vec::new(),
    };
    Ok((desc, n_sig))
}

fn parse_signal_line(l: &str, line: usize) -> Result<SignalSpec> {
    // The description is free text, so split only the first eight fields.
    let mut rest = l;
    let mut toks = Vec::with_capacity(8);
    while toks.len() < 8 {
        rest = rest.trim_start();
        if rest.is_empty() {
            break;
        }
        let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
        toks.push(&rest[..end]);
        rest = &rest[end..];
    }
    let description = rest.trim().to_string();
    if toks.len() < 2 {
        return Err(perr(line, "signal line needs a file name and a format"));
    }

    let fmt_tok = toks[1];
    let split_at = fmt_tok.find(['x', ':', '+']).unwrap_or(fmt_tok.len());
    let code = &fmt_tok[..split_at];
    if code.is_empty() || !code.bytes().all(|b| b.is_ascii_digit()) {
        return Err(perr(line, format!("invalid format field {fmt_tok:?}")));
    }
    let format = SignalFormat::from_code(code)?;
    let (mut spf, mut skew, mut offset) = (1usize, 0usize, 0usize);
    let mut tail = &fmt_tok[split_at..];
    while let Some(c) = tail.chars().next() {
        let body = &tail[1..];
        let end = body.find(['x', ':', '+']).unwrap_or(body.len());
        let v: usize = num(&body[..end], line, "format modifier")?;
        match c {
            'x' => spf = v,
            ':' => skew = v,
            _ => offset = v,
        }
        tail = &body[end..];
    }
    if spf == 0 {
        return Err(perr(line, "samples per frame must be positive"));
    }

    let mut gain = DEFAULT_GAIN;
    let mut baseline = None;
    let mut units = String::from("mV");
    if let Some(g) = toks.get(2) {
        let (g, u) = match g.split_once('/') {
            Some((g, u)) => (g, Some(u)),
            None => (*g, None),
        };
        let (g, b) = match g.split_once('(') {
            Some((g, b)) => (g, Some(b.strip_suffix(')').ok_or_else(|| perr(line, "unclosed baseline"))?)),
            None => (g, None),
        };
        let parsed: f64 = num(g, line, "gain")?;
        if parsed != 0.0 {
            gain = parsed;
        }
        baseline = b.map(|b| num::<i32>(b, line, "baseline")).transpose()?;
        if let Some(u) = u {
            units = u.to_string();
        }
    }
    let adc_resolution = toks.get(3).map(|t| num(t, line, "ADC resolution")).transpose()?;
    let adc_zero = toks.get(4).map(|t| num(t, line, "ADC zero")).transpose()?.unwrap_or(0);
    let initial_value = toks.get(5).map(|t| num(t, line, "initial value")).transpose()?;
    let checksum = toks.get(6).map(|t| num(t, line, "checksum")).transpose()?;
    let block_size = toks.get(7).map(|t| num(t, line, "block size")).transpose()?;

    Ok(SignalSpec {
        file_name: toks[0].to_string(),
        format,
        samples_per_frame: spf,
        skew,
        byte_offset: offset,
        gain,
        baseline: baseline.unwrap_or(adc_zero),
        units,
        adc_resolution,
        adc_zero,
        initial_value,
        checksum,
        block_size,
        description,
    })
}
