//! Line charts of a trace as standalone SVG: proprioceptive error norm,
//! visual error norm and p_self against time, with the learning phase
//! shaded.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::trace::{Phase, TraceRecord};

const W: f64 = 640.0;
const H: f64 = 240.0;
const PAD_L: f64 = 56.0;
const PAD_R: f64 = 16.0;
const PAD_T: f64 = 28.0;
const PAD_B: f64 = 36.0;

/// One chart: points with gaps where the value is absent.
pub struct Series<'a> {
    pub title: &'a str,
    pub points: Vec<(f64, Option<f64>)>,
    /// Fixed y range; derived from the data when absent.
    pub y_range: Option<(f64, f64)>,
}

fn nice_range(points: &[(f64, Option<f64>)]) -> (f64, f64) {
    let ys: Vec<f64> = points.iter().filter_map(|p| p.1).filter(|y| y.is_finite()).collect();
    let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = ys.iter().copied().fold(f64::INFINITY, f64::min).min(0.0);
    if !hi.is_finite() || hi <= lo {
        return (lo.min(0.0), lo.min(0.0) + 1.0);
    }
    (lo, hi * 1.05)
}

/// Render one chart. `shade` spans are drawn as grey bands.
pub fn render_svg(series: &Series, shade: &[(f64, f64)]) -> String {
    let t0 = series.points.first().map(|p| p.0).unwrap_or(0.0);
    let t1 = series.points.last().map(|p| p.0).unwrap_or(1.0).max(t0 + 1e-9);
    let (y0, y1) = series.y_range.unwrap_or_else(|| nice_range(&series.points));
    let pw = W - PAD_L - PAD_R;
    let ph = H - PAD_T - PAD_B;
    let x = |t: f64| PAD_L + (t - t0) / (t1 - t0) * pw;
    let y = |v: f64| PAD_T + (1.0 - (v.clamp(y0, y1) - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    for &(a, b) in shade {
        let (xa, xb) = (x(a.max(t0)), x(b.min(t1)));
        if xb > xa {
            let _ = writeln!(
                s,
                r##"<rect x="{xa:.2}" y="{PAD_T}" width="{:.2}" height="{ph}" fill="#e6e6e6"/>"##,
                xb - xa
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<rect x="{PAD_L}" y="{PAD_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(s, r#"<text x="{PAD_L}" y="18">{}</text>"#, series.title);
    for k in 0..=4 {
        let v = y0 + (y1 - y0) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            PAD_L - 4.0,
            y(v) + 4.0,
            fmt_tick(v)
        );
        let tv = t0 + (t1 - t0) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            x(tv),
            H - PAD_B + 14.0,
            fmt_tick(tv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">t [s]</text>"#,
        PAD_L + pw / 2.0,
        H - 6.0
    );
    let mut run: Vec<String> = Vec::new();
    let flush = |run: &mut Vec<String>, s: &mut String| {
        if run.len() > 1 {
            let _ = writeln!(
                s,
                r##"<polyline fill="none" stroke="#1f5fa8" stroke-width="1.2" points="{}"/>"##,
                run.join(" ")
            );
        }
        run.clear();
    };
    for &(t, v) in &series.points {
        match v.filter(|v| v.is_finite()) {
            Some(v) => run.push(format!("{:.2},{:.2}", x(t), y(v))),
            None => flush(&mut run, &mut s),
        }
    }
    flush(&mut run, &mut s);
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 || (v.abs() >= 0.01 && v.abs() < 1000.0) {
        format!("{:.2}", v)
    } else {
        format!("{:.1e}", v)
    }
}

/// Time spans spent learning.
fn learning_spans(trace: &[TraceRecord]) -> Vec<(f64, f64)> {
    let ts: Vec<f64> = trace.iter().filter(|r| r.phase == Phase::Learning).map(|r| r.t).collect();
    match (ts.first(), ts.last()) {
        (Some(&a), Some(&b)) => vec![(a, b)],
        _ => Vec::new(),
    }
}

/// Write `e_p.svg`, `e_v.svg` and `p_self.svg` into `dir`.
pub fn emit_plots(trace: &[TraceRecord], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let shade = learning_spans(trace);
    let charts = [
        (
            "e_p.svg",
            Series {
                title: "|e_p| (rad)",
                points: trace.iter().map(|r| (r.t, r.e_p_norm)).collect(),
                y_range: None,
            },
        ),
        (
            "e_v.svg",
            Series {
                title: "|e_v| (normalized image units)",
                points: trace.iter().map(|r| (r.t, r.e_v.map(|e| e[0].hypot(e[1])))).collect(),
                y_range: None,
            },
        ),
        (
            "p_self.svg",
            Series {
                title: "p(self)",
                points: trace.iter().map(|r| (r.t, Some(r.p_self))).collect(),
                y_range: Some((0.0, 1.0)),
            },
        ),
    ];
    let mut written = Vec::new();
    for (name, series) in charts {
        let path = dir.join(name);
        std::fs::write(&path, render_svg(&series, &shade)).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
