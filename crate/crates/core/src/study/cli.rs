//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for configuration or input errors, 2 for
//! numerical failures.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use super::output::{format_report, gnuplot_script, svg_plot, write_csv, write_solution, write_sweep_csv};
use super::{compute_errors, condition_sweep, run_study, Discretization, ExperimentConfig};
use crate::error::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "cutfem",
    version,
    about = "Cut finite element Poisson solver with boundary value correction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve on the finest configured level and dump the solution.
    Solve,
    /// Run the refinement study and write CSV and plots.
    Convergence,
    /// Sweep the cut position and report condition numbers.
    Condition,
    /// Print the benchmark configurations.
    Demo,
}

/// Benchmark configurations, as shipped in `configs/`.
pub const DEMO_CONFIGS: &[(&str, &str)] = &[
    ("ring_p2.cfg", include_str!("../../../../configs/ring_p2.cfg")),
    ("ring_p3.cfg", include_str!("../../../../configs/ring_p3.cfg")),
    (
        "ring_p1_condition.cfg",
        include_str!("../../../../configs/ring_p1_condition.cfg"),
    ),
    ("ellipse_p3.cfg", include_str!("../../../../configs/ellipse_p3.cfg")),
];

struct Outcome {
    code: i32,
}

/// Run with process arguments, printing to stdout and stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(args, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = write!(err, "{e}");
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_CONFIG,
            };
        }
    };
    match dispatch(&cli, out, err) {
        Ok(o) => o.code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_config() {
                EXIT_CONFIG
            } else {
                EXIT_NUMERICAL
            }
        }
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("this command needs --config <path>".into()))?;
    ExperimentConfig::from_file(path)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::Config(format!("cannot create output directory '{}': {e}", dir.display())))?;
    let path = dir.join(name);
    let f = File::create(&path).map_err(|e| Error::Config(format!("cannot write '{}': {e}", path.display())))?;
    Ok(BufWriter::new(f))
}

fn dispatch(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<Outcome> {
    match cli.command {
        Command::Demo => {
            for (name, text) in DEMO_CONFIGS {
                writeln!(out, "# --- {name} ---")?;
                write!(out, "{text}")?;
                writeln!(out)?;
            }
            Ok(Outcome { code: EXIT_OK })
        }
        Command::Solve => solve(cli, out),
        Command::Convergence => convergence(cli, out, err),
        Command::Condition => condition(cli, out),
    }
}

fn solve(cli: &Cli, out: &mut dyn Write) -> Result<Outcome> {
    let cfg = load(cli)?;
    let n = *cfg.levels.last().expect("levels validated non-empty");
    let ls = &cfg.level_set;
    let d = Discretization::new(&cfg, ls, n)?;
    let rep = d.solve(cfg.solver_tol)?;

    let mut w = create(&cli.out, &format!("{}_solution.txt", cfg.name))?;
    write_solution(&mut w, &d.dofs.coordinates, &rep.solution, |p| ls.exact_solution(p))?;
    w.flush()?;
    if cfg.mesh_dump {
        let mut w = create(&cli.out, &format!("{}_mesh.txt", cfg.name))?;
        d.active.mesh.write_dump(&mut w, Some(&d.active.classes))?;
        w.flush()?;
    }
    if cfg.matrix_dump {
        let mut w = create(&cli.out, &format!("{}_matrix.txt", cfg.name))?;
        d.system.matrix.write_coordinate(&mut w)?;
        w.flush()?;
    }

    let mut report = format!(
        "n = {n}\nh = {}\nndof = {}\nmethod = {}\nsolver = {}\niterations = {}\nresidual = {:e}\nmax_rho_h = {:e}\n",
        d.active.h(),
        d.dofs.num_dofs(),
        cfg.form.variant,
        rep.method,
        rep.iterations,
        rep.residual,
        d.system.max_rho()
    );
    if ls.solution.is_some() {
        let e = compute_errors(&d, ls, &rep.solution, cfg.form.gamma_j, cfg.exact_domain_error)?;
        report.push_str(&format!(
            "l2_err = {:e}\nh1_err = {:e}\nenergy_err = {:e}\n",
            e.l2, e.h1, e.energy
        ));
        if let Some(v) = e.l2_exact_domain {
            report.push_str(&format!("l2_err_exact_domain = {v:e}\n"));
        }
    }
    let mut w = create(&cli.out, &format!("{}_report.txt", cfg.name))?;
    w.write_all(report.as_bytes())?;
    w.flush()?;
    if !cli.quiet {
        write!(out, "{report}")?;
    }
    Ok(Outcome { code: EXIT_OK })
}

fn convergence(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<Outcome> {
    let cfg = load(cli)?;
    if cfg.level_set.solution.is_none() {
        return Err(Error::Config("a convergence study needs a closed-form solution".into()));
    }
    let report = run_study(&cfg);

    let csv_name = cfg.csv.clone().unwrap_or_else(|| format!("{}.csv", cfg.name));
    let mut w = create(&cli.out, &csv_name)?;
    write_csv(&mut w, &report)?;
    w.flush()?;
    let stem = cfg.plot.clone().unwrap_or_else(|| cfg.name.clone());
    let title = format!("{} P{} {}", cfg.name, cfg.order, cfg.form.variant);
    create(&cli.out, &format!("{stem}.svg"))?.write_all(svg_plot(&report, &title).as_bytes())?;
    create(&cli.out, &format!("{stem}.gp"))?.write_all(gnuplot_script(&report, &csv_name, &title).as_bytes())?;

    if !cli.quiet {
        write!(out, "{}", format_report(&report))?;
    }
    let failures = report.failures();
    for f in &failures {
        writeln!(err, "level n = {} failed: {}", f.n, f.message)?;
    }
    let code = if failures.iter().any(|f| !f.config_error) {
        EXIT_NUMERICAL
    } else if !failures.is_empty() {
        EXIT_CONFIG
    } else {
        EXIT_OK
    };
    Ok(Outcome { code })
}

fn condition(cli: &Cli, out: &mut dyn Write) -> Result<Outcome> {
    let cfg = load(cli)?;
    let sweep = condition_sweep(&cfg)?;
    let mut w = create(&cli.out, &format!("{}_condition.csv", cfg.name))?;
    write_sweep_csv(&mut w, &sweep)?;
    w.flush()?;
    if !cli.quiet {
        writeln!(out, "n = {}, h = {:.4e}", sweep.n, sweep.h)?;
        for (t, p) in sweep.points.iter().enumerate() {
            writeln!(out, "t = {t:>2}  offset = {:.4e}  cond = {:.4e}", p.offset, p.kappa)?;
        }
        writeln!(out, "max/min = {:.3}", sweep.spread())?;
    }
    Ok(Outcome { code: EXIT_OK })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let code = run(args.iter().copied(), &mut o, &mut e);
        (code, String::from_utf8(o).unwrap(), String::from_utf8(e).unwrap())
    }

    #[test]
    fn demo_configs_parse() {
        for (name, text) in DEMO_CONFIGS {
            ExperimentConfig::parse(text).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        let (code, out, _) = run_args(&["cutfem", "demo"]);
        assert_eq!(code, 0);
        assert!(out.contains("ring_p2.cfg") && out.contains("geometry = ellipse"));
    }

    #[test]
    fn missing_config_file_is_a_config_error() {
        let (code, _, err) = run_args(&["cutfem", "convergence", "--config", "/no/such/ring_p2.cfg"]);
        assert_eq!(code, EXIT_CONFIG);
        assert!(err.contains("/no/such/ring_p2.cfg"));
        let (code, _, err) = run_args(&["cutfem", "solve"]);
        assert_eq!(code, EXIT_CONFIG);
        assert!(err.contains("--config"));
    }

    #[test]
    fn unknown_subcommand() {
        let (code, _, _) = run_args(&["cutfem", "frobnicate"]);
        assert_eq!(code, EXIT_CONFIG);
        let (code, _, _) = run_args(&["cutfem", "--help"]);
        assert_eq!(code, EXIT_OK);
    }
}
