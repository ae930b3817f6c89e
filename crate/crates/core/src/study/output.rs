//! CSV tables, SVG and gnuplot convergence plots, solution dumps.

use std::fmt::Write as _;
use std::io::{self, Write};

use super::{eoc, LevelResult, StudyReport, SweepReport};

pub const CSV_HEADER: &str =
    "level,h,ndof,l2_err,h1_err,energy_err,l2_err_exact_domain,eoc_l2,max_rho_h,cond_est,iters,seconds";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per level; failed levels keep their index with empty fields.
pub fn write_csv<W: Write>(mut w: W, report: &StudyReport) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    let mut previous: Option<&LevelResult> = None;
    for (i, level) in report.levels.iter().enumerate() {
        match level {
            Ok(r) => {
                let rate = previous.and_then(|p| eoc(p.errors.l2, r.errors.l2, p.h, r.h));
                writeln!(
                    w,
                    "{i},{},{},{},{},{},{},{},{},{},{},{}",
                    r.h,
                    r.ndof,
                    r.errors.l2,
                    r.errors.h1,
                    r.errors.energy,
                    opt(r.errors.l2_exact_domain),
                    opt(rate),
                    r.max_rho,
                    opt(r.condition),
                    r.iterations,
                    r.seconds
                )?;
                previous = Some(r);
            }
            Err(_) => {
                writeln!(w, "{i},,,,,,,,,,,")?;
            }
        }
    }
    Ok(())
}

struct Series<'a> {
    label: &'a str,
    color: &'a str,
    values: Vec<(f64, f64)>,
}

impl Series<'_> {
    /// Rate between the two finest points.
    fn finest_rate(&self) -> Option<f64> {
        let n = self.values.len();
        (n >= 2).then(|| {
            let (h1, e1) = self.values[n - 2];
            let (h2, e2) = self.values[n - 1];
            eoc(e1, e2, h1, h2)
        })?
    }
}

fn series(report: &StudyReport) -> Vec<Series<'static>> {
    let ok = report.successes();
    let pick = |f: fn(&LevelResult) -> f64| -> Vec<(f64, f64)> {
        ok.iter().map(|r| (r.h, f(r))).filter(|&(_, e)| e > 0.0).collect()
    };
    let mut out = vec![
        Series {
            label: "L2",
            color: "#1f77b4",
            values: pick(|r| r.errors.l2),
        },
        Series {
            label: "H1",
            color: "#d62728",
            values: pick(|r| r.errors.h1),
        },
        Series {
            label: "energy",
            color: "#2ca02c",
            values: pick(|r| r.errors.energy),
        },
    ];
    if ok.iter().all(|r| r.errors.l2_exact_domain.is_some()) {
        out.push(Series {
            label: "L2 exact domain",
            color: "#9467bd",
            values: pick(|r| r.errors.l2_exact_domain.unwrap_or(0.0)),
        });
    }
    out.retain(|s| !s.values.is_empty());
    out
}

fn annotation(s: &Series) -> String {
    match s.finest_rate() {
        Some(r) => format!("{} (slope {r:.2})", s.label),
        None => s.label.to_string(),
    }
}

/// Self-contained log-log chart of the errors against `h`.
pub fn svg_plot(report: &StudyReport, title: &str) -> String {
    let (width, height) = (640.0, 480.0);
    let (left, right, top, bottom) = (80.0, 200.0, 40.0, 60.0);
    let all = series(report);
    let pts: Vec<(f64, f64)> = all.iter().flat_map(|s| s.values.iter().copied()).collect();

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        (left + width - right) / 2.0,
        escape(title)
    );
    if pts.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }

    let decade = |v: f64, up: bool| if up { v.log10().ceil() } else { v.log10().floor() };
    let x0 = decade(pts.iter().map(|p| p.0).fold(f64::MAX, f64::min), false);
    let mut x1 = decade(pts.iter().map(|p| p.0).fold(f64::MIN, f64::max), true);
    if x1 <= x0 {
        x1 += 1.0;
    }
    let (mut y0, mut y1) = (
        decade(pts.iter().map(|p| p.1).fold(f64::MAX, f64::min), false),
        decade(pts.iter().map(|p| p.1).fold(f64::MIN, f64::max), true),
    );
    if y1 <= y0 {
        y0 -= 1.0;
        y1 += 1.0;
    }
    let pw = width - left - right;
    let ph = height - top - bottom;
    let sx = |h: f64| left + (h.log10() - x0) / (x1 - x0) * pw;
    let sy = |e: f64| top + (y1 - e.log10()) / (y1 - y0) * ph;

    let _ = writeln!(
        svg,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for d in (x0 as i32)..=(x1 as i32) {
        let x = sx(10f64.powi(d));
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{top}" x2="{x:.2}" y2="{}" stroke="#ddd"/><text x="{x:.2}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">1e{d}</text>"##,
            top + ph,
            top + ph + 18.0
        );
    }
    for d in (y0 as i32)..=(y1 as i32) {
        let y = sy(10f64.powi(d));
        let _ = writeln!(
            svg,
            r##"<line x1="{left}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/><text x="{}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="12">1e{d}</text>"##,
            left + pw,
            left - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="14">h</text>"#,
        left + pw / 2.0,
        height - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{}" text-anchor="middle" font-family="sans-serif" font-size="14" transform="rotate(-90 20 {})">error</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );

    for (i, s) in all.iter().enumerate() {
        let path: Vec<String> = s
            .values
            .iter()
            .map(|&(h, e)| format!("{:.2},{:.2}", sx(h), sy(e)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
            path.join(" "),
            s.color
        );
        for &(h, e) in &s.values {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}"/>"#,
                sx(h),
                sy(e),
                s.color
            );
        }
        let ly = top + 20.0 + 22.0 * i as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="2"/><text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
            lx + 20.0,
            s.color,
            lx + 26.0,
            ly + 4.0,
            escape(&annotation(s))
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Gnuplot script reading the CSV written by [`write_csv`].
pub fn gnuplot_script(report: &StudyReport, csv_path: &str, title: &str) -> String {
    let all = series(report);
    let column = |label: &str| match label {
        "L2" => 4,
        "H1" => 5,
        "energy" => 6,
        _ => 7,
    };
    let mut gp = String::new();
    let _ = writeln!(gp, "set datafile separator ','");
    let _ = writeln!(gp, "set logscale xy");
    let _ = writeln!(gp, "set format xy '10^{{%L}}'");
    let _ = writeln!(gp, "set xlabel 'h'");
    let _ = writeln!(gp, "set ylabel 'error'");
    let _ = writeln!(gp, "set key bottom right");
    let _ = writeln!(gp, "set title '{}'", title.replace('\'', "''"));
    let plots: Vec<String> = all
        .iter()
        .map(|s| {
            format!(
                "'{}' every ::1 using 2:{} with linespoints lc rgb '{}' title '{}'",
                csv_path.replace('\'', "''"),
                column(s.label),
                s.color,
                annotation(s)
            )
        })
        .collect();
    let _ = writeln!(gp, "plot {}", plots.join(", \\\n     "));
    gp
}

/// Table for the terminal.
pub fn format_report(report: &StudyReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>5} {:>10} {:>8} {:>11} {:>6} {:>11} {:>11} {:>10} {:>6}",
        "n", "h", "ndof", "l2", "eoc", "h1", "energy", "max_rho", "iters"
    );
    let mut previous: Option<&LevelResult> = None;
    for level in &report.levels {
        match level {
            Ok(r) => {
                let rate = previous
                    .and_then(|p| eoc(p.errors.l2, r.errors.l2, p.h, r.h))
                    .map(|v| format!("{v:.2}"))
                    .unwrap_or_else(|| "-".into());
                let _ = writeln!(
                    out,
                    "{:>5} {:>10.4e} {:>8} {:>11.4e} {:>6} {:>11.4e} {:>11.4e} {:>10.3e} {:>6}",
                    r.n, r.h, r.ndof, r.errors.l2, rate, r.errors.h1, r.errors.energy, r.max_rho, r.iterations
                );
                previous = Some(r);
            }
            Err(f) => {
                let _ = writeln!(out, "{:>5} failed: {}", f.n, f.message);
            }
        }
    }
    out
}

pub fn write_sweep_csv<W: Write>(mut w: W, sweep: &SweepReport) -> io::Result<()> {
    writeln!(w, "t,offset,cond_est")?;
    for (t, p) in sweep.points.iter().enumerate() {
        writeln!(w, "{t},{},{}", p.offset, p.kappa)?;
    }
    Ok(())
}

/// `x y u_h u` per dof.
pub fn write_solution<W: Write>(
    mut w: W,
    coordinates: &[crate::Vec2],
    uh: &[f64],
    exact: impl Fn(crate::Vec2) -> Option<f64>,
) -> io::Result<()> {
    for (p, u) in coordinates.iter().zip(uh) {
        match exact(*p) {
            Some(e) => writeln!(w, "{} {} {} {}", p.x, p.y, u, e)?,
            None => writeln!(w, "{} {} {}", p.x, p.y, u)?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::study::{ErrorNorms, LevelFailure};

    fn level(n: usize, l2: f64) -> LevelResult {
        LevelResult {
            n,
            h: 2.0 * 2f64.sqrt() / n as f64,
            ndof: n * n,
            errors: ErrorNorms {
                l2,
                h1: l2.sqrt(),
                energy: l2.sqrt(),
                l2_exact_domain: None,
            },
            max_rho: 0.01,
            condition: None,
            iterations: 3,
            seconds: 0.0,
        }
    }

    fn report() -> StudyReport {
        StudyReport {
            levels: vec![
                Ok(level(8, 1e-2)),
                Ok(level(16, 1.25e-3)),
                Err(LevelFailure {
                    n: 32,
                    message: "boom".into(),
                    config_error: false,
                }),
                Ok(level(64, 1.25e-3 / 64.0)),
            ],
        }
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &report()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 5);
        for l in &lines {
            assert_eq!(l.split(',').count(), 12);
        }
        let eoc_col = |l: &str| l.split(',').nth(7).unwrap().to_string();
        assert_eq!(eoc_col(lines[1]), "");
        assert!((eoc_col(lines[2]).parse::<f64>().unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(lines[3], "2,,,,,,,,,,,");
        // rate across the failed level spans h ratio 4
        assert!((eoc_col(lines[4]).parse::<f64>().unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn plot_annotations_match_csv_rates() {
        let rep = report();
        let svg = svg_plot(&rep, "test");
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("L2 (slope 3.00)"));
        let gp = gnuplot_script(&rep, "out.csv", "test");
        assert!(gp.contains("L2 (slope 3.00)"));
        assert!(gp.contains("using 2:4"));
    }

    #[test]
    fn empty_report_plots() {
        let svg = svg_plot(&StudyReport::default(), "empty");
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
