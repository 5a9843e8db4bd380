//! Command-line front end.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::config::{ExperimentConfig, LandscapeConfig};
use crate::dynamics::{initial_frame, run, RunStatus, Trajectory, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::verify::{check_all, CheckName, CheckStatus};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_DIVERGED: i32 = 2;
/// `run`: some trajectory stopped at `max_iter`. `verify`: no failures but
/// some checks were inconclusive.
pub const EXIT_INCOMPLETE: i32 = 3;

pub const CSV_HEADER: &str = "t,E,grad_norm,dist,y,z,z_over_g,lambda_min";

#[derive(Debug, Parser)]
#[command(
    name = "hisd",
    version,
    about = "High-index saddle dynamics on degenerate saddle manifolds"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Experiment file (TOML).
    pub config: PathBuf,
    /// Replaces `outputs.dir`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Replaces `init.seed` and the verification seed.
    #[arg(long)]
    pub seed_override: Option<u64>,
    /// Replaces `solver.max_iter`.
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every trajectory of the experiment and write CSV and JSON output.
    Run(CommonArgs),
    /// Run numerical checks and print one JSON report per line.
    Verify {
        #[command(flatten)]
        common: CommonArgs,
        /// Run all checks.
        #[arg(long, conflicts_with = "checks")]
        all: bool,
        /// Check names: descent_3_4, stability_3_5, onestep_3_6, rate_3_7,
        /// alignment_3_8.
        checks: Vec<String>,
        /// Write the reports to this file instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write the dataset of a two-layer tanh experiment as CSV.
    Dataset(CommonArgs),
}

/// Shortest round-trip decimal; exponent notation outside `[1e-5, 1e16)`.
pub fn format_number(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(format_number).unwrap_or_default()
}

pub fn write_trajectory_csv<W: Write>(
    mut out: W,
    comment: &str,
    records: &[TrajectoryRecord],
) -> std::io::Result<()> {
    writeln!(out, "# {comment}")?;
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.t,
            format_number(r.energy),
            format_number(r.grad_norm),
            opt(r.dist),
            opt(r.y),
            opt(r.z),
            opt(r.z_over_g),
            opt(r.lambda_min)
        )?;
    }
    out.flush()
}

fn load(common: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(dir) = &common.out_dir {
        cfg.outputs.dir = dir.clone();
    }
    if let Some(seed) = common.seed_override {
        cfg.init.seed = seed;
        cfg.verify.seed = Some(seed);
    }
    if let Some(n) = common.max_iter {
        cfg.solver.max_iter = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::config(format!("cannot create {}: {e}", dir.display())))
}

fn dataset_seed(cfg: &ExperimentConfig) -> Option<u64> {
    match &cfg.landscape {
        LandscapeConfig::TwoLayerTanh(t) => Some(t.dataset.seed),
        LandscapeConfig::Quadratic(_) => None,
    }
}

fn seed_comment(cfg: &ExperimentConfig, label: &str) -> String {
    let mut s = format!("label={label} init_seed={}", cfg.init.seed);
    if let Some(d) = dataset_seed(cfg) {
        s.push_str(&format!(" dataset_seed={d}"));
    }
    s
}

fn status_json(status: RunStatus) -> serde_json::Value {
    match status {
        RunStatus::Converged => json!("converged"),
        RunStatus::MaxIter => json!("max_iter"),
        RunStatus::Diverged { iteration } => json!({"diverged": iteration}),
    }
}

/// `run` subcommand. Returns the process exit code.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<i32> {
    let land = cfg.build_landscape()?;
    let theta0 = cfg.initial_point(&land.saddle);
    let runs = cfg.runs();
    let results: Vec<Result<Trajectory>> = std::thread::scope(|scope| {
        let handles: Vec<_> = runs
            .iter()
            .map(|(_, solver)| {
                let (land, theta0) = (&land, &theta0);
                scope.spawn(move || {
                    let v0 = initial_frame(land.model.as_ref(), theta0, solver.k)?;
                    run(
                        land.model.as_ref(),
                        solver,
                        theta0.clone(),
                        v0,
                        Some(&land.manifold),
                    )
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("run thread panicked"))
            .collect()
    });

    let dir = &cfg.outputs.dir;
    create_dir(dir)?;
    let mut summaries = Vec::new();
    let mut code = EXIT_OK;
    for ((label, solver), result) in runs.iter().zip(results) {
        let tr = result.map_err(|e| Error::config(format!("run `{label}`: {e}")))?;
        let file = format!("{label}.csv");
        let out = BufWriter::new(File::create(dir.join(&file))?);
        write_trajectory_csv(out, &seed_comment(cfg, label), &tr.records)?;
        match tr.status {
            RunStatus::Diverged { .. } => code = EXIT_DIVERGED,
            RunStatus::MaxIter if code == EXIT_OK => code = EXIT_INCOMPLETE,
            _ => {}
        }
        let last = tr.records.last();
        summaries.push(json!({
            "label": label,
            "csv": file,
            "status": status_json(tr.status),
            "iterations": tr.iterations,
            "final_grad_norm": last.map(|r| r.grad_norm),
            "final_energy": last.map(|r| r.energy),
            "final_dist": last.and_then(|r| r.dist),
            "eigen_misses": tr.eigen_misses,
            "solver": solver,
        }));
    }
    let summary = json!({
        "seeds": {"init": cfg.init.seed, "dataset": dataset_seed(cfg)},
        "manifold": {"index": land.manifold.index, "nullity": land.manifold.nullity},
        "config": cfg,
        "runs": summaries,
    });
    let mut f = File::create(dir.join("summary.json"))?;
    serde_json::to_writer_pretty(&mut f, &summary).map_err(std::io::Error::other)?;
    writeln!(f)?;
    Ok(code)
}

pub fn parse_checks(all: bool, names: &[String]) -> Result<Vec<CheckName>> {
    if all {
        return Ok(CheckName::ALL.to_vec());
    }
    if names.is_empty() {
        return Err(Error::config("name at least one check or pass --all"));
    }
    names.iter().map(|n| n.parse()).collect()
}

/// `verify` subcommand. Returns the process exit code.
pub fn cmd_verify<W: Write>(
    cfg: &ExperimentConfig,
    checks: &[CheckName],
    mut out: W,
) -> Result<i32> {
    let land = cfg.build_landscape()?;
    let reports = check_all(
        checks,
        land.model.as_ref(),
        &land.manifold,
        &cfg.solver,
        &cfg.verify,
        cfg.verify_seed(),
    )?;
    for r in &reports {
        writeln!(out, "{}", r.to_json_line())?;
    }
    out.flush()?;
    Ok(if reports.iter().any(|r| r.status == CheckStatus::Fail) {
        EXIT_DIVERGED
    } else if reports
        .iter()
        .any(|r| r.status == CheckStatus::Inconclusive)
    {
        EXIT_INCOMPLETE
    } else {
        EXIT_OK
    })
}

/// `dataset` subcommand; writes `dataset.csv` into the output directory.
pub fn cmd_dataset(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let ds = cfg
        .dataset()?
        .ok_or_else(|| Error::config("the quadratic landscape has no dataset"))?;
    create_dir(&cfg.outputs.dir)?;
    let path = cfg.outputs.dir.join("dataset.csv");
    ds.write_csv(BufWriter::new(File::create(&path)?))?;
    Ok(path)
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Run(common) => cmd_run(&load(&common)?),
        Command::Verify {
            common,
            all,
            checks,
            output,
        } => {
            let names = parse_checks(all, &checks)?;
            let cfg = load(&common)?;
            match output {
                Some(path) => cmd_verify(&cfg, &names, BufWriter::new(File::create(path)?)),
                None => cmd_verify(&cfg, &names, std::io::stdout().lock()),
            }
        }
        Command::Dataset(common) => {
            let path = cmd_dataset(&load(&common)?)?;
            println!("{}", path.display());
            Ok(EXIT_OK)
        }
    }
}

/// Runs the parsed command and maps errors to exit code 1.
pub fn execute(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_formatting_round_trips() {
        for v in [
            0.0,
            1.0,
            0.1,
            -2.5e-17,
            1e300,
            123456.789,
            3.0e-5,
            f64::MIN_POSITIVE,
        ] {
            let s = format_number(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
        assert_eq!(format_number(1e-20), "1e-20");
        assert_eq!(format_number(0.25), "0.25");
    }

    #[test]
    fn check_selection() {
        assert_eq!(parse_checks(true, &[]).unwrap().len(), 5);
        assert!(parse_checks(false, &[]).is_err());
        assert!(parse_checks(false, &["nope".into()]).is_err());
        assert_eq!(
            parse_checks(false, &["rate_3_7".into()]).unwrap(),
            [CheckName::Rate]
        );
    }

    #[test]
    fn csv_layout() {
        let recs = [TrajectoryRecord {
            t: 0,
            energy: -1.0,
            grad_norm: 2.0,
            dist: None,
            y: None,
            z: None,
            z_over_g: None,
            lambda_min: None,
        }];
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, "label=x init_seed=1", &recs).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            format!("# label=x init_seed=1\n{CSV_HEADER}\n0,-1,2,,,,,\n")
        );
    }
}
