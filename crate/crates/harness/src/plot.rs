//! Learning-curve plots as deterministic SVG.
//!
//! Each run is drawn as its mean-return line over a shaded `r̄ ± σ̂` band,
//! with episodes on the x axis.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use manip_rl::estimation::{parse_curve_csv, CurveRow};

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 500.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 50.0;
pub const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    /// `(episodes, mean, std)` per evaluation.
    pub points: Vec<(f64, f64, f64)>,
}

impl Series {
    pub fn from_rows(label: impl Into<String>, rows: &[CurveRow]) -> Self {
        Series {
            label: label.into(),
            points: rows
                .iter()
                .map(|r| (r.total_episodes as f64, r.mean_return, r.std_return))
                .collect(),
        }
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let rows = parse_curve_csv(&text)?;
        if rows.is_empty() {
            bail!("{} has no evaluation rows", path.display());
        }
        Ok(Series::from_rows(series_label(path), &rows))
    }

    /// Lower and upper band edges at each point.
    pub fn band(&self) -> Vec<(f64, f64, f64)> {
        self.points.iter().map(|&(x, m, s)| (x, m - s, m + s)).collect()
    }
}

/// Label from the file's parent directories, e.g. `trpo_reach_100x100_6000/seed_0`.
fn series_label(path: &Path) -> String {
    let parts: Vec<String> = path
        .parent()
        .into_iter()
        .flat_map(|p| p.components().rev().take(2))
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect();
    if parts.is_empty() {
        path.display().to_string()
    } else {
        parts.into_iter().rev().collect::<Vec<_>>().join("/")
    }
}

/// Data ranges mapped onto the plot area.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Bounds {
    pub fn covering(series: &[Series]) -> Self {
        let mut b = Bounds {
            x_min: f64::INFINITY,
            x_max: f64::NEG_INFINITY,
            y_min: f64::INFINITY,
            y_max: f64::NEG_INFINITY,
        };
        for s in series {
            for (x, lo, hi) in s.band() {
                b.x_min = b.x_min.min(x);
                b.x_max = b.x_max.max(x);
                b.y_min = b.y_min.min(lo);
                b.y_max = b.y_max.max(hi);
            }
        }
        if b.x_max <= b.x_min {
            b.x_max = b.x_min + 1.0;
        }
        if b.y_max <= b.y_min {
            b.y_min -= 1.0;
            b.y_max += 1.0;
        }
        b
    }

    pub fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - LEFT - RIGHT)
    }

    pub fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - TOP - BOTTOM)
    }
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 1000.0 || v == v.trunc() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

/// SVG group for one series: band polygon then mean polyline.
pub fn series_group(s: &Series, color: &str, b: &Bounds) -> String {
    let band = s.band();
    let mut poly = String::new();
    for &(x, _, hi) in &band {
        write!(poly, "{:.2},{:.2} ", b.px(x), b.py(hi)).unwrap();
    }
    for &(x, lo, _) in band.iter().rev() {
        write!(poly, "{:.2},{:.2} ", b.px(x), b.py(lo)).unwrap();
    }
    let mut line = String::new();
    for &(x, m, _) in &s.points {
        write!(line, "{:.2},{:.2} ", b.px(x), b.py(m)).unwrap();
    }
    format!(
        "<g class=\"series\" data-label=\"{label}\">\n<polygon points=\"{p}\" fill=\"{color}\" fill-opacity=\"0.2\" stroke=\"none\"/>\n<polyline points=\"{l}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n</g>\n",
        label = escape(&s.label),
        p = poly.trim_end(),
        l = line.trim_end(),
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders all series against shared bounds.
pub fn render_svg(series: &[Series], b: &Bounds) -> String {
    let mut svg = String::new();
    writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" font-family=\"DejaVu Sans, sans-serif\" font-size=\"12\">"
    )
    .unwrap();
    writeln!(svg, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>").unwrap();
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    writeln!(svg, "<rect x=\"{x0}\" y=\"{y0}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>", x1 - x0, y1 - y0).unwrap();
    for i in 0..=5 {
        let f = i as f64 / 5.0;
        let xv = b.x_min + f * (b.x_max - b.x_min);
        let yv = b.y_min + f * (b.y_max - b.y_min);
        let (px, py) = (b.px(xv), b.py(yv));
        writeln!(svg, "<line x1=\"{px:.2}\" y1=\"{y1}\" x2=\"{px:.2}\" y2=\"{:.2}\" stroke=\"black\"/>", y1 + 5.0).unwrap();
        writeln!(svg, "<text x=\"{px:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>", y1 + 20.0, fmt_tick(xv)).unwrap();
        writeln!(svg, "<line x1=\"{:.2}\" y1=\"{py:.2}\" x2=\"{x0}\" y2=\"{py:.2}\" stroke=\"black\"/>", x0 - 5.0).unwrap();
        writeln!(svg, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>", x0 - 8.0, py + 4.0, fmt_tick(yv)).unwrap();
    }
    writeln!(svg, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">episodes</text>", (x0 + x1) / 2.0, HEIGHT - 8.0).unwrap();
    writeln!(
        svg,
        "<text x=\"16\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.2})\">average return</text>",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    )
    .unwrap();
    for (i, s) in series.iter().enumerate() {
        svg.push_str(&series_group(s, PALETTE[i % PALETTE.len()], b));
    }
    for (i, s) in series.iter().enumerate() {
        let y = y0 + 16.0 + 16.0 * i as f64;
        let color = PALETTE[i % PALETTE.len()];
        writeln!(svg, "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"{color}\" stroke-width=\"2\"/>", x0 + 10.0, x0 + 30.0).unwrap();
        writeln!(svg, "<text x=\"{:.2}\" y=\"{:.2}\">{}</text>", x0 + 36.0, y + 4.0, escape(&s.label)).unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}

/// Reads learning-curve CSVs and writes one SVG overlaying them.
pub fn plot_curves(csv_paths: &[impl AsRef<Path>], out: &Path) -> anyhow::Result<()> {
    if csv_paths.is_empty() {
        bail!("no learning curves to plot");
    }
    let series: Vec<Series> = csv_paths
        .iter()
        .map(|p| Series::load(p.as_ref()))
        .collect::<anyhow::Result<_>>()?;
    let bounds = Bounds::covering(&series);
    if let Some(parent) = out.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(out, render_svg(&series, &bounds))?;
    Ok(())
}
