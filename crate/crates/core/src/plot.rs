//! SVG rendering of a record with its delineation.

use std::fmt::Write as _;

use crate::labels::pair_boundaries;
use crate::record::{AnnotationSet, EcgRecord, Wave};

pub const PX_PER_SECOND: f64 = 100.0;
pub const PANEL_HEIGHT: f64 = 160.0;
const MARGIN: f64 = 40.0;

fn colour(w: Wave) -> &'static str {
    match w {
        Wave::P => "#4c9be8",
        Wave::Qrs => "#e8574c",
        Wave::T => "#52b36b",
    }
}

/// Width of the drawing for a record of `duration_s` seconds.
pub fn svg_width(duration_s: f64) -> f64 {
    (duration_s * PX_PER_SECOND).ceil() + 2.0 * MARGIN
}

/// One panel per lead: the trace, shaded wave intervals and a tick at every
/// boundary. Annotations are expected at the record's sampling rate.
pub fn render_svg(record: &EcgRecord, annotations: &AnnotationSet) -> String {
    let width = svg_width(record.duration_s());
    let height = PANEL_HEIGHT * record.leads.len().max(1) as f64 + MARGIN;
    let x_of = |sample: usize| MARGIN + sample as f64 / record.fs * PX_PER_SECOND;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="16" font-family="sans-serif" font-size="12">{} ({} Hz)</text>"#,
        escape(&record.record_id),
        record.fs
    );
    for (k, lead) in record.leads.iter().enumerate() {
        let top = MARGIN / 2.0 + k as f64 * PANEL_HEIGHT + 10.0;
        let plot_h = PANEL_HEIGHT - 20.0;
        let _ = writeln!(s, r#"<g class="lead" data-lead="{}">"#, escape(&lead.name));
        let _ = writeln!(
            s,
            r#"<text x="4" y="{:.1}" font-family="sans-serif" font-size="11">{}</text>"#,
            top + plot_h / 2.0,
            escape(&lead.name)
        );
        let set = annotations.for_lead(&lead.name);
        for w in Wave::ALL {
            let (pairs, _) = pair_boundaries(&set.items, w);
            for (on, off) in pairs {
                let _ = writeln!(
                    s,
                    r#"<rect class="{w}" x="{:.2}" y="{top:.1}" width="{:.2}" height="{plot_h:.1}" fill="{}" fill-opacity="0.25"/>"#,
                    x_of(on),
                    (x_of(off + 1) - x_of(on)).max(0.5),
                    colour(w)
                );
            }
        }
        for b in &set.items {
            let x = x_of(b.sample);
            let _ = writeln!(
                s,
                r#"<line class="tick" x1="{x:.2}" x2="{x:.2}" y1="{:.1}" y2="{:.1}" stroke="{}" stroke-width="1"/>"#,
                top + plot_h,
                top + plot_h + 6.0,
                colour(b.wave)
            );
        }
        let _ = writeln!(s, r#"<polyline fill="none" stroke="black" stroke-width="0.8" points="{}"/>"#, trace(&lead.samples, record.fs, top, plot_h));
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    s
}

/// Min/max decimation to two points per pixel column.
fn trace(samples: &[f32], fs: f64, top: f64, h: f64) -> String {
    if samples.is_empty() {
        return String::new();
    }
    let (lo, hi) = samples
        .iter()
        .filter(|v| v.is_finite())
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo.is_finite() && hi > lo { (lo as f64, hi as f64) } else { (-1.0, 1.0) };
    let y_of = |v: f32| top + h * (1.0 - (v as f64 - lo) / (hi - lo));
    let per_px = (fs / PX_PER_SECOND).max(1.0) as usize;
    let mut out = String::new();
    for (c, chunk) in samples.chunks(per_px).enumerate() {
        let x = MARGIN + (c * per_px) as f64 / fs * PX_PER_SECOND;
        let (mut mn, mut mx) = (chunk[0], chunk[0]);
        for &v in chunk {
            mn = mn.min(v);
            mx = mx.max(v);
        }
        let _ = write!(out, "{x:.2},{:.2} ", y_of(mn));
        if mx != mn {
            let _ = write!(out, "{x:.2},{:.2} ", y_of(mx));
        }
    }
    out.pop();
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
