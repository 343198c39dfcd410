//! CSV, SVG and MatrixMarket writers.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::afem::AfemRecord;
use crate::error::{Error, Result};
use crate::estimate::Indicators;
use crate::linalg::CsrMatrix;

pub const CSV_HEADER: &str = "level,dof,it,stop,lambda,eta,solve_ms,cumulative_ms";

pub fn records_to_csv(records: &[AfemRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{:e},{:.9},{:e},{:e},{:e}",
            r.level, r.dof, r.iterations, r.stop, r.lambda, r.eta, r.solve_ms, r.cumulative_ms
        );
    }
    out
}

pub fn records_from_csv(text: &str) -> Result<Vec<AfemRecord>> {
    let bad = |line: usize, msg: &str| Error::Config(format!("csv line {line}: {msg}"));
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => return Err(bad(1, "unexpected header")),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(bad(i + 1, "expected 8 fields"));
        }
        let int = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| bad(i + 1, &format!("bad integer {s:?}")))
        };
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| bad(i + 1, &format!("bad number {s:?}")))
        };
        out.push(AfemRecord {
            level: int(f[0])?,
            dof: int(f[1])?,
            iterations: int(f[2])?,
            stop: num(f[3])?,
            lambda: num(f[4])?,
            eta: num(f[5])?,
            solve_ms: num(f[6])?,
            cumulative_ms: num(f[7])?,
        });
    }
    Ok(out)
}

/// `element_or_edge_id, value` per line.
pub fn indicators_to_csv(ind: &Indicators) -> String {
    let mut out = String::from("element_or_edge_id,value\n");
    for (id, v) in ind.ids.iter().zip(&ind.values) {
        let _ = writeln!(out, "{id},{v:e}");
    }
    out
}

/// Coordinate-format MatrixMarket text (1-based indices).
pub fn matrix_market(a: &CsrMatrix) -> String {
    let mut out = String::from("%%MatrixMarket matrix coordinate real general\n");
    let _ = writeln!(out, "{} {} {}", a.nrows(), a.ncols(), a.nnz());
    for r in 0..a.nrows() {
        for (c, v) in a.row(r) {
            let _ = writeln!(out, "{} {} {:e}", r + 1, c + 1, v);
        }
    }
    out
}

/// Log-log polyline plot of `(x, y)` pairs with labeled axes.
pub fn loglog_svg(title: &str, xlabel: &str, ylabel: &str, points: &[(f64, f64)]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const PAD: f64 = 70.0;
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.log10(), y.log10()))
        .collect();
    let bounds = |sel: fn(&(f64, f64)) -> f64| {
        let lo = logs.iter().map(sel).fold(f64::INFINITY, f64::min);
        let hi = logs.iter().map(sel).fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-12 {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    };
    let (x0, x1) = bounds(|p| p.0);
    let (y0, y1) = bounds(|p| p.1);
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="30" text-anchor="middle" font-size="16">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{PAD}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        H - PAD,
        W - PAD,
        H - PAD
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{}" stroke="black"/>"#,
        H - PAD
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">log10 {}</text>"#,
        W / 2.0,
        H - 20.0,
        escape(xlabel)
    );
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{}" text-anchor="middle" font-size="13" transform="rotate(-90 20 {})">log10 {}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    );
    for v in [x0, x1] {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="11">{v:.2}</text>"#,
            sx(v),
            H - PAD + 18.0
        );
    }
    for v in [y0, y1] {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end" font-size="11">{v:.2}</text>"#,
            PAD - 6.0,
            sy(v) + 4.0
        );
    }
    let pts: Vec<String> = logs
        .iter()
        .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
        .collect();
    let _ = writeln!(
        svg,
        r#"<polyline fill="none" stroke="steelblue" stroke-width="2" points="{}"/>"#,
        pts.join(" ")
    );
    for &(x, y) in &logs {
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="steelblue"/>"#,
            sx(x),
            sy(y)
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

/// Writes `afem.csv` and, when `svg` is set, `estimator.svg` and `cputime.svg`.
pub fn emit_outputs(records: &[AfemRecord], out_dir: &Path, csv: bool, svg: bool) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Misuse("no records to write".into()));
    }
    fs::create_dir_all(out_dir)?;
    if csv {
        fs::write(out_dir.join("afem.csv"), records_to_csv(records))?;
    }
    if svg {
        let eta: Vec<(f64, f64)> = records.iter().map(|r| (r.dof as f64, r.eta)).collect();
        fs::write(
            out_dir.join("estimator.svg"),
            loglog_svg("A posteriori estimator", "dof", "eta", &eta),
        )?;
        let time: Vec<(f64, f64)> = records
            .iter()
            .map(|r| (r.dof as f64, r.cumulative_ms))
            .collect();
        fs::write(
            out_dir.join("cputime.svg"),
            loglog_svg("Cumulative solve time", "dof", "time [ms]", &time),
        )?;
    }
    Ok(())
}
