use std::fmt::Write as _;
use std::path::Path;

use crate::energy::ScalarField;
use crate::error::{Error, Result};

use super::record::RunRecord;

const W: f64 = 640.0;
const H: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    /// Draw markers only.
    pub scatter: bool,
}

pub struct LinePlot<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub log_x: bool,
    pub log_y: bool,
}

fn tr(v: f64, log: bool) -> f64 {
    if log {
        v.log10()
    } else {
        v
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn ticks(lo: f64, hi: f64, log: bool) -> Vec<(f64, String)> {
    if log {
        let (a, b) = (lo.floor() as i32, hi.ceil() as i32);
        return (a..=b)
            .map(|e| (e as f64, format!("1e{e}")))
            .filter(|(v, _)| *v >= lo - 1e-9 && *v <= hi + 1e-9)
            .collect();
    }
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + step * 1e-9 {
        out.push((
            t,
            format!("{:.3}", t)
                .trim_end_matches('0')
                .trim_end_matches('.')
                .to_string(),
        ));
        t += step;
    }
    out
}

/// SVG line chart; points that are not positive on a log axis are dropped.
pub fn line_svg(plot: &LinePlot, series: &[Series]) -> Option<String> {
    let kept: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            s.points
                .iter()
                .filter(|(x, y)| {
                    x.is_finite()
                        && y.is_finite()
                        && (!plot.log_x || *x > 0.0)
                        && (!plot.log_y || *y > 0.0)
                })
                .map(|&(x, y)| (tr(x, plot.log_x), tr(y, plot.log_y)))
                .collect()
        })
        .collect();
    let all: Vec<&(f64, f64)> = kept.iter().flatten().collect();
    if all.is_empty() {
        return None;
    }
    let fold = |f: fn(&(f64, f64)) -> f64| {
        let lo = all.iter().map(|p| f(p)).fold(f64::INFINITY, f64::min);
        let hi = all.iter().map(|p| f(p)).fold(f64::NEG_INFINITY, f64::max);
        if hi - lo < 1e-12 * lo.abs().max(1.0) {
            (lo - 0.5, hi + 0.5)
        } else {
            let pad = 0.05 * (hi - lo);
            (lo - pad, hi + pad)
        }
    };
    let (x0, x1) = fold(|p| p.0);
    let (y0, y1) = fold(|p| p.1);
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        W / 2.0,
        esc(plot.title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for (v, label) in ticks(x0, x1, plot.log_x) {
        let x = sx(v);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{TOP}" stroke="#ddd"/>"##,
            TOP + ph
        );
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{}" text-anchor="middle">{label}</text>"#,
            TOP + ph + 16.0
        );
    }
    for (v, label) in ticks(y0, y1, plot.log_y) {
        let y = sy(v);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/>"##,
            LEFT + pw
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{label}</text>"#,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        H - 18.0,
        esc(plot.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        TOP + ph / 2.0,
        esc(plot.y_label)
    );
    for (i, (ser, pts)) in series.iter().zip(&kept).enumerate() {
        let c = COLORS[i % COLORS.len()];
        if !ser.scatter && pts.len() > 1 {
            let path: Vec<String> = pts
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="1.5"/>"#,
                path.join(" ")
            );
        }
        if ser.scatter || pts.len() <= 50 {
            for &(x, y) in pts {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{c}"/>"#,
                    sx(x),
                    sy(y)
                );
            }
        }
        let ly = TOP + 14.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{c}"/>"#,
            LEFT + pw - 150.0,
            ly - 9.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}">{}</text>"#,
            LEFT + pw - 135.0,
            esc(&ser.name)
        );
    }
    s.push_str("</svg>\n");
    Some(s)
}

fn viridis(t: f64) -> (u8, u8, u8) {
    const STOPS: [(f64, f64, f64); 5] = [
        (68.0, 1.0, 84.0),
        (59.0, 82.0, 139.0),
        (33.0, 145.0, 140.0),
        (94.0, 201.0, 98.0),
        (253.0, 231.0, 37.0),
    ];
    let t = t.clamp(0.0, 1.0) * 4.0;
    let i = (t.floor() as usize).min(3);
    let f = t - i as f64;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    let mix = |u: f64, v: f64| (u + (v - u) * f).round() as u8;
    (mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Heat map of a planar field, block-averaged to at most 160 cells a side.
pub fn heatmap_svg(title: &str, u: &ScalarField) -> Option<String> {
    let g = &u.grid;
    if g.dim() != 2 || g.len() == 0 {
        return None;
    }
    let (nx, ny) = (g.dims[0], g.dims[1]);
    let b = nx.max(ny).div_ceil(160).max(1);
    let (cx, cy) = (nx.div_ceil(b), ny.div_ceil(b));
    let mut cells = vec![0.0; cx * cy];
    let mut counts = vec![0usize; cx * cy];
    for i in 0..nx {
        for j in 0..ny {
            let c = (i / b) * cy + j / b;
            cells[c] += u.values[g.linear_index(&[i, j])];
            counts[c] += 1;
        }
    }
    for (v, n) in cells.iter_mut().zip(&counts) {
        *v /= (*n).max(1) as f64;
    }
    let lo = cells.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = cells.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let side = 400.0;
    let px = side / cx.max(cy) as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="12">"#,
        side + 120.0,
        side + 60.0
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        side / 2.0 + 20.0,
        esc(title)
    );
    for i in 0..cx {
        for j in 0..cy {
            let (r, gg, bb) = viridis((cells[i * cy + j] - lo) / span);
            // First axis to the right, second axis up.
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="rgb({r},{gg},{bb})"/>"#,
                20.0 + i as f64 * px,
                40.0 + (cy - 1 - j) as f64 * px,
                px + 0.05,
                px + 0.05
            );
        }
    }
    let bar_x = side + 40.0;
    for k in 0..50 {
        let (r, gg, bb) = viridis(1.0 - k as f64 / 49.0);
        let _ = writeln!(
            s,
            r#"<rect x="{bar_x}" y="{:.2}" width="16" height="{:.2}" fill="rgb({r},{gg},{bb})"/>"#,
            40.0 + k as f64 * side / 50.0,
            side / 50.0 + 0.05
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="48">{hi:.3e}</text>"#, bar_x + 20.0);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}">{lo:.3e}</text>"#,
        bar_x + 20.0,
        40.0 + side
    );
    s.push_str("</svg>\n");
    Some(s)
}

fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
    let header = rd
        .headers()
        .map_err(|e| Error::Format(e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    let rows = rd
        .records()
        .map(|r| {
            r.map(|r| r.iter().map(String::from).collect())
                .map_err(|e| Error::Format(e.to_string()))
        })
        .collect::<Result<_>>()?;
    Ok((header, rows))
}

fn column(header: &[String], rows: &[Vec<String>], name: &str) -> Option<Vec<f64>> {
    let c = header.iter().position(|h| h == name)?;
    rows.iter().map(|r| r.get(c)?.parse().ok()).collect()
}

fn save(
    dir: &Path,
    name: &str,
    svg: Option<String>,
    record: &mut RunRecord,
    what: &str,
) -> Result<()> {
    match svg {
        Some(text) => {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
            record.artifact(name);
        }
        None => record
            .notes
            .push(format!("{what}: no plottable points, plot skipped")),
    }
    Ok(())
}

/// Plots every known table among the record's artifacts, plus `plots.gp`
/// for gnuplot. Missing or empty tables are noted and skipped.
pub fn emit_plots(dir: &Path, record: &mut RunRecord) -> Result<()> {
    let has = |r: &RunRecord, name: &str| {
        r.artifacts.iter().any(|a| a == name) && dir.join(name).exists()
    };
    let mut gp = String::from("set terminal svg size 640,440\n");
    let mut any = false;

    if has(record, "minima.csv") {
        let (h, rows) = read_table(&dir.join("minima.csv"))?;
        let eps = column(&h, &rows, "epsilon").unwrap_or_default();
        let mut series = Vec::new();
        for name in ["gap", "gap_raw"] {
            if let Some(g) = column(&h, &rows, name) {
                series.push(Series {
                    name: name.into(),
                    points: eps.iter().cloned().zip(g).collect(),
                    scatter: false,
                });
            }
        }
        let plot = LinePlot {
            title: "relative gap to the homogenized minimum",
            x_label: "epsilon",
            y_label: "gap",
            log_x: true,
            log_y: true,
        };
        save(
            dir,
            "gap_vs_eps.svg",
            line_svg(&plot, &series),
            record,
            "minima.csv",
        )?;
        gp.push_str(
            "set output 'gap_vs_eps_gp.svg'\nset datafile separator ','\nset logscale xy\nset key autotitle columnhead\n\
             plot 'minima.csv' using 1:4 with linespoints, '' using 1:8 with linespoints\nunset logscale\n",
        );
        any = true;
    }
    if has(record, "random_minima.csv") {
        let (h, rows) = read_table(&dir.join("random_minima.csv"))?;
        let (seed, eps, gap) = (
            column(&h, &rows, "seed").unwrap_or_default(),
            column(&h, &rows, "epsilon").unwrap_or_default(),
            column(&h, &rows, "gap").unwrap_or_default(),
        );
        let mut seeds: Vec<f64> = seed.clone();
        seeds.dedup();
        let series: Vec<Series> = seeds
            .iter()
            .map(|&s| Series {
                name: format!("seed {s}"),
                points: (0..seed.len())
                    .filter(|&i| seed[i] == s)
                    .map(|i| (eps[i], gap[i]))
                    .collect(),
                scatter: false,
            })
            .collect();
        let plot = LinePlot {
            title: "random obstacles: gap per seed",
            x_label: "epsilon",
            y_label: "gap",
            log_x: true,
            log_y: true,
        };
        save(
            dir,
            "random_gap_vs_eps.svg",
            line_svg(&plot, &series),
            record,
            "random_minima.csv",
        )?;
        any = true;
    }
    if has(record, "capacity.csv") {
        let (h, rows) = read_table(&dir.join("capacity.csv"))?;
        let variant = h.iter().position(|c| c == "variant");
        let r = column(&h, &rows, "r").unwrap_or_default();
        let v = column(&h, &rows, "value").unwrap_or_default();
        let series: Vec<Series> = ["truncated", "annulus"]
            .iter()
            .map(|name| Series {
                name: (*name).into(),
                points: (0..rows.len())
                    .filter(|&i| variant.is_some_and(|c| rows[i][c] == *name))
                    .map(|i| (r[i], v[i]))
                    .collect(),
                scatter: false,
            })
            .collect();
        let plot = LinePlot {
            title: "relative capacity",
            x_label: "r",
            y_label: "C",
            log_x: true,
            log_y: false,
        };
        save(
            dir,
            "capacity_vs_r.svg",
            line_svg(&plot, &series),
            record,
            "capacity.csv",
        )?;
        gp.push_str(
            "set output 'capacity_vs_r_gp.svg'\nset datafile separator ','\nset logscale x\n\
             plot 'capacity.csv' using 2:4 with linespoints title 'C(T,B_r)'\nunset logscale\n",
        );
        any = true;
    }
    if has(record, "ergodic_running_mean.csv") {
        let (h, rows) = read_table(&dir.join("ergodic_running_mean.csv"))?;
        let n = column(&h, &rows, "n").unwrap_or_default();
        let mean = column(&h, &rows, "mean").unwrap_or_default();
        let expected = column(&h, &rows, "expected").unwrap_or_default();
        let series = vec![
            Series {
                name: "running mean".into(),
                points: n.iter().cloned().zip(mean).collect(),
                scatter: false,
            },
            Series {
                name: "E[gamma]".into(),
                points: n.iter().cloned().zip(expected).collect(),
                scatter: false,
            },
        ];
        let plot = LinePlot {
            title: "ergodic running mean of gamma",
            x_label: "sites",
            y_label: "mean",
            log_x: true,
            log_y: false,
        };
        save(
            dir,
            "ergodic_running_mean.svg",
            line_svg(&plot, &series),
            record,
            "ergodic_running_mean.csv",
        )?;
        gp.push_str(
            "set output 'ergodic_gp.svg'\nset datafile separator ','\nset logscale x\n\
             plot 'ergodic_running_mean.csv' using 1:2 with lines title 'mean', '' using 1:3 with lines title 'E'\nunset logscale\n",
        );
        any = true;
    }
    let fields: Vec<String> = record
        .artifacts
        .iter()
        .filter(|a| a.ends_with(".bin"))
        .cloned()
        .collect();
    for f in fields {
        let u = ScalarField::load_binary(&dir.join(&f))?;
        let name = f.trim_end_matches(".bin");
        save(
            dir,
            &format!("{name}.svg"),
            heatmap_svg(name, &u),
            record,
            &f,
        )?;
        any = true;
    }
    if any {
        std::fs::write(dir.join("plots.gp"), gp).map_err(|e| Error::io(dir.join("plots.gp"), e))?;
        record.artifact("plots.gp");
    } else {
        record.notes.push("no tables to plot".into());
    }
    Ok(())
}
