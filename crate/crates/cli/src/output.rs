use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Result;
use inflate_core::scenarios::InflationReport;
use serde::Serialize;

pub const NORMS_HEADER: [&str; 16] = [
    "case_id", "N", "s", "r", "A", "T", "rho", "rho_hat", "norm_phi", "norm_U1", "norm_Umain", "norm_Ulow",
    "norm_Uhigh", "norm_u", "ratio", "valid",
];

#[derive(Serialize)]
pub struct NormsRow<'a> {
    case_id: &'a str,
    #[serde(rename = "N")]
    n: u64,
    s: f64,
    r: f64,
    #[serde(rename = "A")]
    a: f64,
    #[serde(rename = "T")]
    t: f64,
    rho: f64,
    rho_hat: f64,
    norm_phi: f64,
    #[serde(rename = "norm_U1")]
    norm_u1: f64,
    #[serde(rename = "norm_Umain")]
    norm_umain: f64,
    #[serde(rename = "norm_Ulow")]
    norm_ulow: f64,
    #[serde(rename = "norm_Uhigh")]
    norm_uhigh: f64,
    norm_u: f64,
    ratio: f64,
    valid: bool,
}

impl<'a> From<&'a InflationReport> for NormsRow<'a> {
    fn from(r: &'a InflationReport) -> Self {
        let sc = &r.scenario;
        Self {
            case_id: &sc.case_id,
            n: sc.n,
            s: sc.s,
            r: sc.r,
            a: sc.a,
            t: sc.t,
            rho: sc.rho,
            rho_hat: r.rho_hat,
            norm_phi: r.norm_phi,
            norm_u1: r.norm_u1,
            norm_umain: r.norm_umain,
            norm_ulow: r.norm_ulow,
            norm_uhigh: r.norm_uhigh,
            norm_u: r.norm_u,
            ratio: r.ratio,
            valid: r.valid,
        }
    }
}

pub fn write_norms_csv(path: &Path, reports: &[InflationReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if reports.is_empty() {
        w.write_record(NORMS_HEADER)?;
    }
    for r in reports {
        w.serialize(NormsRow::from(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for rec in records {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Least-squares slope and R² of `log y` against `log x`.
pub struct PowerFit {
    pub exponent: f64,
    pub r_squared: f64,
}

pub fn fit_power_law(points: &[(f64, f64)]) -> Option<PowerFit> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let exponent = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(PowerFit { exponent, r_squared })
}

/// Static log-log line chart.
pub fn loglog_svg(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64)]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const PAD: f64 = 60.0;
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && y.is_finite())
        .map(|(x, y)| (x.log10(), y.log10()))
        .collect();
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    if pts.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let span = |v: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(x), h.max(x)));
        if hi - lo < 1e-9 {
            (lo - 0.5, hi + 0.5)
        } else {
            let m = 0.05 * (hi - lo);
            (lo - m, hi + m)
        }
    };
    let (x0, x1) = span(&mut pts.iter().map(|p| p.0));
    let (y0, y1) = span(&mut pts.iter().map(|p| p.1));
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let _ = writeln!(
        svg,
        r#"<g stroke="black" stroke-width="1"><line x1="{PAD}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{b}"/></g>"#,
        b = H - PAD,
        r = W - PAD
    );
    // ticks at the data points (x) and at the ends of the range (y)
    for &(x, _) in &pts {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="11">{}</text>"#,
            sx(x),
            H - PAD + 16.0,
            short(10f64.powf(x))
        );
    }
    for y in [y0, (y0 + y1) / 2.0, y1] {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-family="sans-serif" font-size="11">{}</text>"#,
            PAD - 6.0,
            sy(y) + 4.0,
            short(10f64.powf(y))
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13">{}</text>"#,
        W / 2.0,
        H - 18.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 18 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
    let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
    let _ = writeln!(
        svg,
        r#"<polyline fill="none" stroke="steelblue" stroke-width="2" points="{}"/>"#,
        path.join(" ")
    );
    for &(x, y) in &pts {
        let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="steelblue"/>"#, sx(x), sy(y));
    }
    svg.push_str("</svg>\n");
    svg
}

fn short(v: f64) -> String {
    if (1e-2..1e5).contains(&v.abs()) {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.2e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let pts: Vec<(f64, f64)> = [64.0f64, 256.0, 1024.0].iter().map(|&n| (n, 3.0 * n.powf(0.25))).collect();
        let fit = fit_power_law(&pts).unwrap();
        assert!((fit.exponent - 0.25).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!(fit_power_law(&pts[..1]).is_none());
    }

    #[test]
    fn svg_is_closed() {
        let svg = loglog_svg("a < b", "N", "ratio", &[(64.0, 1.2), (256.0, 1.9)]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a &lt; b"));
        assert_eq!(svg.matches("<circle").count(), 2);
    }
}
