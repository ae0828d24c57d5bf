//! Detection error trade-off curves and the operating points derived from
//! them.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::ScoredUtterance;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub fp_rate: f64,
    pub fn_rate: f64,
}

/// Operating points sorted by descending threshold. The first point rejects
/// everything (threshold `+inf`), the last accepts everything.
#[derive(Debug, Clone, PartialEq)]
pub struct DetCurve {
    pub points: Vec<OperatingPoint>,
    pub num_pos: usize,
    pub num_neg: usize,
}

/// Sweeps the accept threshold (`score >= threshold`) over every distinct
/// score.
pub fn det_curve(scored: &[ScoredUtterance]) -> Result<DetCurve> {
    let mut entries: Vec<(f64, bool)> = scored
        .iter()
        .map(|s| (s.score, s.polarity.is_positive()))
        .collect();
    if let Some(bad) = scored.iter().find(|s| !s.score.is_finite()) {
        return Err(Error::invalid(format!(
            "utterance {} has a non-finite score",
            bad.utt_id
        )));
    }
    let num_pos = entries.iter().filter(|e| e.1).count();
    let num_neg = entries.len() - num_pos;
    if num_pos == 0 || num_neg == 0 {
        return Err(Error::invalid(
            "a DET curve needs positive and negative utterances",
        ));
    }
    entries.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = vec![OperatingPoint {
        threshold: f64::INFINITY,
        fp_rate: 0.0,
        fn_rate: 1.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < entries.len() {
        let threshold = entries[i].0;
        while i < entries.len() && entries[i].0 == threshold {
            if entries[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(OperatingPoint {
            threshold,
            fp_rate: fp as f64 / num_neg as f64,
            fn_rate: (num_pos - tp) as f64 / num_pos as f64,
        });
    }
    Ok(DetCurve {
        points,
        num_pos,
        num_neg,
    })
}

/// Rate where the FP and FN curves cross, interpolating linearly between the
/// two operating points that bracket the crossing.
pub fn eer(curve: &DetCurve) -> f64 {
    let pts = &curve.points;
    let Some(i) = pts.iter().position(|p| p.fp_rate >= p.fn_rate) else {
        // cannot happen for a curve built by det_curve
        return pts.last().map_or(0.5, |p| 0.5 * (p.fp_rate + p.fn_rate));
    };
    let b = pts[i];
    if b.fp_rate == b.fn_rate || i == 0 {
        return 0.5 * (b.fp_rate + b.fn_rate);
    }
    let a = pts[i - 1];
    let da = a.fp_rate - a.fn_rate;
    let db = b.fp_rate - b.fn_rate;
    let w = -da / (db - da);
    a.fp_rate + w * (b.fp_rate - a.fp_rate)
}

/// FN rate at an FP rate of `fp_target`.
///
/// Takes the most permissive operating point whose FP rate does not exceed
/// the target and interpolates linearly toward the next point.
pub fn fn_at_fp(curve: &DetCurve, fp_target: f64) -> Result<f64> {
    if !(fp_target > 0.0 && fp_target < 1.0) {
        return Err(Error::invalid(format!(
            "FP target {fp_target} must lie in (0, 1)"
        )));
    }
    let pts = &curve.points;
    // the all-reject point has fp 0, so some point always qualifies
    let i = pts
        .iter()
        .rposition(|p| p.fp_rate <= fp_target)
        .unwrap_or(0);
    let a = pts[i];
    if a.fp_rate == fp_target || i + 1 == pts.len() {
        return Ok(a.fn_rate);
    }
    let b = pts[i + 1];
    let w = (fp_target - a.fp_rate) / (b.fp_rate - a.fp_rate);
    Ok(a.fn_rate + w * (b.fn_rate - a.fn_rate))
}

/// Summary row of one system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemMetrics {
    pub system: String,
    pub eer: f64,
    pub fn_at_1pct_fp: f64,
    #[serde(rename = "fn_at_0.5pct_fp")]
    pub fn_at_half_pct_fp: f64,
}

pub fn system_metrics(system: &str, curve: &DetCurve) -> Result<SystemMetrics> {
    Ok(SystemMetrics {
        system: system.to_string(),
        eer: eer(curve),
        fn_at_1pct_fp: fn_at_fp(curve, 0.01)?,
        fn_at_half_pct_fp: fn_at_fp(curve, 0.005)?,
    })
}

fn csv_io(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::io(path, std::io::Error::other(e))
}

/// `threshold,fp_rate,fn_rate`; the all-reject threshold is written `inf`.
pub fn write_det_csv(curve: &DetCurve, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(csv_io(path))?;
    for p in &curve.points {
        w.serialize(p).map_err(csv_io(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_det_csv(path: impl AsRef<Path>) -> Result<Vec<OperatingPoint>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(csv_io(path))?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                message: e.to_string(),
            })
        })
        .collect()
}

/// `system,eer,fn_at_1pct_fp,fn_at_0.5pct_fp`, one row per system.
pub fn write_report(metrics: &[SystemMetrics], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(csv_io(path))?;
    for m in metrics {
        w.serialize(m).map_err(csv_io(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_report(path: impl AsRef<Path>) -> Result<Vec<SystemMetrics>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(csv_io(path))?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Self-contained SVG with log-scaled FP (x) and FN (y) axes.
pub fn det_svg(curves: &[(String, DetCurve)]) -> String {
    const W: f64 = 480.0;
    const H: f64 = 400.0;
    const PAD: f64 = 50.0;
    const FLOOR: f64 = 1e-4;
    let colors = [
        "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
    ];
    let lo = FLOOR.log10();
    let x = |r: f64| PAD + (r.max(FLOOR).log10() - lo) / -lo * (W - 2.0 * PAD);
    let y = |r: f64| H - PAD - (r.max(FLOOR).log10() - lo) / -lo * (H - 2.0 * PAD);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    for decade in [1e-4, 1e-3, 1e-2, 1e-1, 1.0] {
        let (gx, gy) = (x(decade), y(decade));
        let _ = writeln!(
            svg,
            r##"<line x1="{gx:.1}" y1="{:.1}" x2="{gx:.1}" y2="{:.1}" stroke="#ddd"/><line x1="{PAD}" y1="{gy:.1}" x2="{:.1}" y2="{gy:.1}" stroke="#ddd"/>"##,
            PAD,
            H - PAD,
            W - PAD
        );
        let _ = writeln!(
            svg,
            r#"<text x="{gx:.1}" y="{:.1}" font-size="10" text-anchor="middle">{decade}</text><text x="{:.1}" y="{gy:.1}" font-size="10" text-anchor="end">{decade}</text>"#,
            H - PAD + 14.0,
            PAD - 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">false positive rate</text>"#,
        W / 2.0,
        H - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.1})">false negative rate</text>"#,
        H / 2.0,
        H / 2.0
    );
    for (k, (name, curve)) in curves.iter().enumerate() {
        let color = colors[k % colors.len()];
        let pts: Vec<String> = curve
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", x(p.fp_rate), y(p.fn_rate)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" fill="{color}">{}</text>"#,
            W - PAD - 100.0,
            PAD + 14.0 * (k as f64 + 1.0),
            escape(name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
