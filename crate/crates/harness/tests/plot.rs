use std::fs;

use manip_rl::estimation::{curve_to_csv, CurveRow};
use manip_rl_harness::plot::{plot_curves, render_svg, series_group, Bounds, Series, PALETTE};

fn rows(points: &[(usize, f64, f64)]) -> Vec<CurveRow> {
    points
        .iter()
        .enumerate()
        .map(|(i, &(ep, m, s))| CurveRow {
            iteration: i,
            total_episodes: ep,
            total_timesteps: ep * 10,
            mean_return: m,
            std_return: s,
            kl: f64::NAN,
            surrogate_improvement: f64::NAN,
        })
        .collect()
}

/// Point lists of the first `<polygon>` and `<polyline>` in an SVG fragment.
fn shapes(svg: &str) -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
    let grab = |tag: &str| -> Vec<(f64, f64)> {
        let start = svg.find(tag).unwrap();
        let rest = &svg[start..];
        let p = rest.find("points=\"").unwrap() + 8;
        let end = rest[p..].find('"').unwrap();
        rest[p..p + end]
            .split_whitespace()
            .map(|xy| {
                let (x, y) = xy.split_once(',').unwrap();
                (x.parse().unwrap(), y.parse().unwrap())
            })
            .collect()
    };
    (grab("<polygon"), grab("<polyline"))
}

#[test]
fn constant_curve_draws_flat_line_and_zero_height_band() {
    let s = Series::from_rows("flat", &rows(&[(0, 5.0, 0.0), (20, 5.0, 0.0), (40, 5.0, 0.0)]));
    let b = Bounds::covering(&[s.clone()]);
    let (band, line) = shapes(&series_group(&s, PALETTE[0], &b));
    assert!(line.iter().all(|p| p.1 == line[0].1));
    let n = line.len();
    for i in 0..n {
        // upper edge forward, lower edge backward
        assert_eq!(band[i].1, band[2 * n - 1 - i].1);
        assert_eq!(band[i].1, line[i].1);
    }
}

#[test]
fn band_edges_are_mean_plus_minus_std() {
    let pts = [(0, -200.0, 40.0), (20, -120.0, 30.0), (40, -50.0, 10.0), (60, -20.0, 5.0)];
    let s = Series::from_rows("r", &rows(&pts));
    for ((x, lo, hi), (ep, m, sd)) in s.band().into_iter().zip(pts) {
        assert_eq!((x, lo, hi), (ep as f64, m - sd, m + sd));
    }
    let b = Bounds::covering(&[s.clone()]);
    assert_eq!((b.y_min, b.y_max), (-240.0, -15.0));
    let (band, line) = shapes(&series_group(&s, PALETTE[0], &b));
    let n = pts.len();
    for (i, &(ep, m, sd)) in pts.iter().enumerate() {
        let x = b.px(ep as f64);
        assert!((band[i].0 - x).abs() < 0.006);
        assert!((band[i].1 - b.py(m + sd)).abs() < 0.006);
        assert!((band[2 * n - 1 - i].1 - b.py(m - sd)).abs() < 0.006);
        assert!((line[i].1 - b.py(m)).abs() < 0.006);
    }
}

#[test]
fn overlay_is_the_single_plots_composited() {
    let a = Series::from_rows("a", &rows(&[(0, -100.0, 20.0), (10, -30.0, 5.0)]));
    let c = Series::from_rows("c", &rows(&[(0, -80.0, 10.0), (10, -60.0, 15.0), (20, -10.0, 2.0)]));
    let both = [a.clone(), c.clone()];
    let b = Bounds::covering(&both);
    let overlay = render_svg(&both, &b);
    let single_a = render_svg(&[a.clone()], &b);
    let single_c = render_svg(&[c.clone()], &b);
    let ga = series_group(&a, PALETTE[0], &b);
    let gc = series_group(&c, PALETTE[1], &b);
    assert!(single_a.contains(&ga));
    assert!(single_c.contains(&series_group(&c, PALETTE[0], &b)));
    let ia = overlay.find(&ga).unwrap();
    let ic = overlay.find(&gc).unwrap();
    assert!(ia < ic);
    // Removing the second layer and legend entry leaves the first single plot.
    let strip = |svg: &str, layer: &str, label: &str| {
        svg.replace(layer, "")
            .lines()
            .filter(|l| !l.contains(&format!(">{label}</text>")) && !l.contains("y1=\"52.00\""))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(&overlay, &gc, "c"), strip(&single_a, "", "c"));
}

#[test]
fn plot_files_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("trpo_reach_32x32_600").join("seed_0");
    fs::create_dir_all(&run).unwrap();
    let csv = run.join("curve.csv");
    fs::write(&csv, curve_to_csv(&rows(&[(0, -150.0, 30.0), (20, -40.0, 12.5)]))).unwrap();
    let (p1, p2) = (dir.path().join("a.svg"), dir.path().join("b.svg"));
    plot_curves(&[&csv], &p1).unwrap();
    plot_curves(&[&csv], &p2).unwrap();
    let svg = fs::read_to_string(&p1).unwrap();
    assert_eq!(svg, fs::read_to_string(&p2).unwrap());
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert!(svg.contains("trpo_reach_32x32_600/seed_0"));
}

#[test]
fn empty_or_missing_inputs_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let none: [&std::path::Path; 0] = [];
    assert!(plot_curves(&none, &dir.path().join("x.svg")).is_err());
    assert!(plot_curves(&[dir.path().join("missing.csv")], &dir.path().join("x.svg")).is_err());
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, format!("{}\n", CurveRow::HEADER)).unwrap();
    assert!(plot_curves(&[&empty], &dir.path().join("x.svg")).is_err());
}
