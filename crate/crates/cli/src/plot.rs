//! Minimal SVG line and bar charts drawn from the run's CSV files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use crate::run::RunDir;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// A parsed CSV with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = match lines.next() {
            Some(h) => h.split(',').map(str::to_owned).collect(),
            None => bail!("{} is empty", path.display()),
        };
        let rows = lines.map(|l| l.split(',').map(str::to_owned).collect()).collect();
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("missing column {name}"))
    }

    pub fn float(&self, row: usize, col: usize) -> Result<f64> {
        let cell = self.rows[row].get(col).map(String::as_str).unwrap_or("");
        cell.parse()
            .with_context(|| format!("row {}: {cell:?} is not a number", row + 1))
    }
}

/// Named polyline.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

fn bounds(series: &[Series]) -> Option<(f64, f64, f64, f64)> {
    let pts = series.iter().flat_map(|s| &s.points).filter(|(x, y)| x.is_finite() && y.is_finite());
    let mut b: Option<(f64, f64, f64, f64)> = None;
    for &(x, y) in pts {
        b = Some(match b {
            None => (x, x, y, y),
            Some((x0, x1, y0, y1)) => (x0.min(x), x1.max(x), y0.min(y), y1.max(y)),
        });
    }
    b.map(|(x0, x1, y0, y1)| {
        let pad = |lo: f64, hi: f64| if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
        let (x0, x1) = pad(x0, x1);
        let (y0, y1) = pad(y0, y1);
        (x0, x1, y0, y1)
    })
}

fn frame(out: &mut String, title: &str, xlabel: &str, ylabel: &str, b: (f64, f64, f64, f64)) {
    let (x0, x1, y0, y1) = b;
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{title}</text>"#, WIDTH / 2.0);
    let (l, r, t, btm) = (MARGIN, WIDTH - 16.0, 32.0, HEIGHT - MARGIN);
    let _ = writeln!(out, r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#, r - l, btm - t);
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let px = l + f * (r - l);
        let py = btm - f * (btm - t);
        let _ = writeln!(out, r#"<text x="{px}" y="{}" text-anchor="middle">{}</text>"#, btm + 16.0, tick(xv));
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, l - 4.0, py + 4.0, tick(yv));
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>"#, (l + r) / 2.0, HEIGHT - 12.0);
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{ylabel}</text>"#,
        (t + btm) / 2.0,
        (t + btm) / 2.0
    );
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

fn project(b: (f64, f64, f64, f64), (x, y): (f64, f64)) -> (f64, f64) {
    let (x0, x1, y0, y1) = b;
    let (l, r, t, btm) = (MARGIN, WIDTH - 16.0, 32.0, HEIGHT - MARGIN);
    (l + (x - x0) / (x1 - x0) * (r - l), btm - (y - y0) / (y1 - y0) * (btm - t))
}

/// Line chart; errors when there is nothing finite to draw.
pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> Result<String> {
    let Some(b) = bounds(series) else {
        bail!("{title}: no finite data points");
    };
    let mut out = String::new();
    frame(&mut out, title, xlabel, ylabel, b);
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&p| {
                let (px, py) = project(b, p);
                format!("{px:.1},{py:.1}")
            })
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        if series.len() <= PALETTE.len() {
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" fill="{color}" text-anchor="end">{}</text>"#,
                WIDTH - 24.0,
                48.0 + 14.0 * k as f64,
                s.label
            );
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Bar chart with optional error bars.
pub fn bar_chart(title: &str, xlabel: &str, ylabel: &str, bars: &[(f64, f64)]) -> Result<String> {
    if bars.is_empty() || bars.iter().any(|(m, s)| !m.is_finite() || !s.is_finite()) {
        bail!("{title}: no finite data points");
    }
    let n = bars.len() as f64;
    let top = bars.iter().map(|(m, s)| m + s).fold(0.0, f64::max);
    let b = (0.5, n + 0.5, 0.0, if top > 0.0 { top * 1.05 } else { 1.0 });
    let mut out = String::new();
    frame(&mut out, title, xlabel, ylabel, b);
    for (k, &(m, s)) in bars.iter().enumerate() {
        let x = k as f64 + 1.0;
        let (xl, ym) = project(b, (x - 0.35, m));
        let (xr, yz) = project(b, (x + 0.35, 0.0));
        let _ = writeln!(
            out,
            r#"<rect x="{xl:.1}" y="{ym:.1}" width="{:.1}" height="{:.1}" fill="{}"/>"#,
            xr - xl,
            yz - ym,
            PALETTE[0]
        );
        if s > 0.0 {
            let (xc, yh) = project(b, (x, m + s));
            let (_, yl) = project(b, (x, (m - s).max(0.0)));
            let _ = writeln!(out, r#"<line x1="{xc:.1}" y1="{yh:.1}" x2="{xc:.1}" y2="{yl:.1}" stroke="black"/>"#);
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Per-seed series of `column` against `epoch` from `metrics.csv`.
pub fn metric_series(table: &Table, column: &str) -> Result<Vec<Series>> {
    let (cs, ce, cv) = (table.column("seed")?, table.column("epoch")?, table.column(column)?);
    let mut by_seed: BTreeMap<u64, Vec<(f64, f64)>> = BTreeMap::new();
    for r in 0..table.rows.len() {
        let seed = table.float(r, cs)? as u64;
        by_seed.entry(seed).or_default().push((table.float(r, ce)?, table.float(r, cv)?));
    }
    Ok(by_seed
        .into_iter()
        .map(|(s, points)| Series {
            label: format!("seed {s}"),
            points,
        })
        .collect())
}

/// `plot`: writes SVGs for everything the run has produced so far. A chart
/// is either written completely or not at all.
pub fn plot_run(run: &RunDir) -> Result<Vec<PathBuf>> {
    let metrics = Table::read(&run.metrics_csv())?;
    if metrics.rows.is_empty() {
        bail!("{} has no epochs", run.metrics_csv().display());
    }
    let mut charts = Vec::new();
    for (col, label) in [
        ("objective", "objective"),
        ("mean_cost", "mean cost"),
        ("retained_dims", "retained memory dims"),
        ("max_saliency", "max saliency"),
    ] {
        let svg = line_chart(label, "epoch", label, &metric_series(&metrics, col)?)?;
        charts.push((run.plot(&format!("{col}.svg")), svg));
    }
    for tag in ["final", "best", "reduced"] {
        let path = run.report(&format!("saliency-ranks-{tag}.csv"));
        if path.is_file() {
            let t = Table::read(&path)?;
            let (cm, cs) = (t.column("mean")?, t.column("std")?);
            let bars = (0..t.rows.len())
                .map(|r| Ok((t.float(r, cm)?, t.float(r, cs)?)))
                .collect::<Result<Vec<_>>>()?;
            let svg = bar_chart("memory saliency by rank", "rank", "saliency", &bars)?;
            charts.push((run.plot(&format!("saliency-ranks-{tag}.svg")), svg));
        }
    }
    let mut written = Vec::new();
    for (path, svg) in charts {
        fs::write(&path, svg).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_chart_contains_one_polyline_per_series() {
        let s = vec![
            Series { label: "a".into(), points: vec![(0.0, 1.0), (1.0, 2.0)] },
            Series { label: "b".into(), points: vec![(0.0, 3.0), (1.0, 0.5)] },
        ];
        let svg = line_chart("t", "x", "y", &s).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn empty_or_nonfinite_data_is_an_error() {
        assert!(line_chart("t", "x", "y", &[]).is_err());
        let s = vec![Series { label: "a".into(), points: vec![(0.0, f64::NAN)] }];
        assert!(line_chart("t", "x", "y", &s).is_err());
        assert!(bar_chart("t", "x", "y", &[]).is_err());
    }
}
