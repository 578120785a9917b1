//! Command-line driver: config in, CSV and JSON artifacts out.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 hypothesis
//! failure, 3 numeric failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::energy::{check_hypotheses, is_experimental_exponent, minimize, Constraint, MinimizeOptions};
use crate::error::{Error, Result};
use crate::form::assemble_with;
use crate::geometry::{domain_mask, Field, HalfSpace};
use crate::kernels::{Family, SampledCheck};
use crate::symmetry::{analyze, radial_center, tol_sym};
use crate::verify::{standard_instance, weak_mp_test, MpOptions};

#[derive(Debug, Parser)]
#[command(name = "nonlocal-lab", version, about = "Nonlocal operators, minimizers and symmetry checks")]
pub struct Cli {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Certify condition (k) for the configured kernel.
    CheckKernel,
    /// Minimize the energy; writes field.csv and iterations.csv.
    Minimize,
    /// Symmetry report for a field (default: <output.dir>/field.csv).
    AnalyzeSymmetry {
        #[arg(long)]
        field: Option<PathBuf>,
    },
    /// Moving-plane sweeps along the coordinate axes and the radial centre.
    MovingPlane {
        #[arg(long)]
        field: Option<PathBuf>,
    },
    /// Weak maximum-principle batteries on Ω ∩ H.
    VerifyMp,
    /// Resample a field CSV onto the configured grid and domain.
    ExportField {
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Hypothesis(_) | Error::InvalidKernel(_) => 2,
        Error::Numeric(_) | Error::NumericOverflow(_) | Error::Convergence { .. } | Error::Inconclusive(_) => 3,
        _ => 1,
    }
}

/// What a subcommand produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub code: i32,
    pub report: Value,
    pub files: Vec<PathBuf>,
}

/// Parses arguments, runs, prints the report and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("warning: thread pool already configured ({e})");
        }
    }
    let cfg = match load_config(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    match run(&cli.command, &cfg) {
        Ok(out) => {
            println!("{}", serde_json::to_string_pretty(&out.report).unwrap_or_default());
            out.code
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Loads and validates a config (or the defaults) and applies the seed override.
pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => {
            let c = RunConfig::default();
            c.validate()?;
            c
        }
    };
    cfg.apply_seed_override()?;
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.resolve(&cfg.output.dir);
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn envelope(cfg: &RunConfig, tolerances: Value, report: impl Serialize) -> Result<Value> {
    Ok(json!({
        "config_hash": cfg.hash()?,
        "tolerances": tolerances,
        "report": serde_json::to_value(report).map_err(|e| Error::Numeric(e.to_string()))?,
    }))
}

fn write(files: &mut Vec<PathBuf>, path: PathBuf, text: &str) -> Result<()> {
    fs::write(&path, text)?;
    files.push(path);
    Ok(())
}

fn write_json(files: &mut Vec<PathBuf>, path: PathBuf, v: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| Error::Numeric(e.to_string()))?;
    write(files, path, &text)
}

fn read_field(cfg: &RunConfig, given: Option<&Path>) -> Result<Field> {
    let path = match given {
        Some(p) => p.to_path_buf(),
        None => out_dir(cfg)?.join("field.csv"),
    };
    Field::from_csv(&fs::read_to_string(&path)?)
}

/// Runs one subcommand against a validated config.
pub fn run(cmd: &Command, cfg: &RunConfig) -> Result<Outcome> {
    let mut files = Vec::new();
    let (code, report) = match cmd {
        Command::CheckKernel => {
            let kernel = cfg.kernel()?;
            let opts = SampledCheck { escape_threshold: cfg.kernel.escape_threshold, ..SampledCheck::default() };
            let cert = kernel.check_condition_k_with(opts)?;
            let family = format!("{:?}", cfg.kernel.family);
            let rep = envelope(
                cfg,
                json!({ "escape_threshold": cfg.kernel.escape_threshold }),
                json!({ "family": family, "dim": kernel.dim, "certificate": &cert }),
            )?;
            write_json(&mut files, out_dir(cfg)?.join("condition_k.json"), &rep)?;
            (if cert.divergence_verified { 0 } else { 2 }, rep)
        }
        Command::Minimize => {
            let grid = cfg.grid()?;
            let kernel = cfg.kernel()?;
            let mask = domain_mask(&cfg.radial_set()?, &grid)?;
            let table = assemble_with(&grid, &kernel, &cfg.form_options())?;
            let nl = cfg.nonlinearity()?;
            let cert = check_hypotheses(&nl, cfg.nonlinearity.k_bound)?;
            let constraint = cfg.constraint();
            let experimental = match (&constraint, &kernel.family) {
                (Constraint::LqSphere(q), Family::Fractional { s } | Family::Bessel { s }) => {
                    is_experimental_exponent(*q, grid.dim, *s)
                }
                _ => false,
            };
            let opts = MinimizeOptions {
                constraint,
                seed: cfg.solver.seed,
                max_iters: cfg.solver.max_iters,
                tol: cfg.solver.tol,
                initial: None,
            };
            let out = minimize(&table, &mask.mask, &nl, &cert, &opts)?;
            let dir = out_dir(cfg)?;
            write(&mut files, dir.join("field.csv"), &out.field.to_csv())?;
            write(&mut files, dir.join("iterations.csv"), &out.log_csv())?;
            let rep = envelope(
                cfg,
                json!({ "solver_tol": cfg.solver.tol }),
                json!({
                    "energy": out.energy,
                    "iterations": out.iterations,
                    "converged": out.converged,
                    "grad_norm": out.grad_norm,
                    "multiplier": out.multiplier,
                    "experimental": experimental,
                    "seed": cfg.solver.seed,
                    "domain_warning": mask.warning,
                    "hypotheses": cert,
                }),
            )?;
            write_json(&mut files, dir.join("minimize.json"), &rep)?;
            (if out.converged { 0 } else { 3 }, rep)
        }
        Command::AnalyzeSymmetry { field } => {
            let u = read_field(cfg, field.as_deref())?.with_positive_mass();
            let rep = analyze(&u, &cfg.analysis_options())?;
            let dir = out_dir(cfg)?;
            if let Some(s) = rep.sweeps.first() {
                write(&mut files, dir.join("rotating_sweep.csv"), &s.csv())?;
            }
            for (k, m) in rep.moving.iter().enumerate() {
                write(&mut files, dir.join(format!("moving_plane_e{}.csv", k + 1)), &m.csv())?;
            }
            let env = envelope(cfg, serde_json::to_value(rep.tolerances).unwrap_or_default(), &rep)?;
            write_json(&mut files, dir.join("symmetry.json"), &env)?;
            (0, env)
        }
        Command::MovingPlane { field } => {
            let u = read_field(cfg, field.as_deref())?.with_positive_mass();
            let tol = cfg.symmetry.tol_sym.unwrap_or_else(|| tol_sym(&u));
            let rc = radial_center(&u, tol)?;
            let dir = out_dir(cfg)?;
            for (k, m) in rc.sweeps.iter().enumerate() {
                write(&mut files, dir.join(format!("moving_plane_e{}.csv", k + 1)), &m.csv())?;
            }
            let env = envelope(cfg, json!({ "sym": tol }), &rc)?;
            write_json(&mut files, dir.join("moving_plane.json"), &env)?;
            (0, env)
        }
        Command::VerifyMp => {
            let grid = cfg.grid()?;
            let kernel = cfg.kernel()?;
            let table = assemble_with(&grid, &kernel, &cfg.form_options())?;
            let domain = domain_mask(&cfg.radial_set()?, &grid)?.mask;
            let mut e = [0.0; 3];
            e[cfg.verify.axis] = 1.0;
            let half = HalfSpace::new(&e[..grid.dim], cfg.verify.offset)?;
            let opts = MpOptions { instances: cfg.verify.instances, seed: cfg.verify.seed };
            let mut certs = Vec::new();
            for &variant in &cfg.verify.variants {
                let (c, u) = standard_instance(&table, &domain, &half, variant)?;
                certs.push(weak_mp_test(&table, &c, &u, &half, variant, &opts)?);
            }
            let failed = certs.iter().any(|c| c.failed());
            let env = envelope(
                cfg,
                json!({ "mp_relative": 1e-8, "form_relative": 1e-10 }),
                json!({ "certificates": certs, "failed": failed }),
            )?;
            write_json(&mut files, out_dir(cfg)?.join("verify_mp.json"), &env)?;
            (if failed { 3 } else { 0 }, env)
        }
        Command::ExportField { field, out } => {
            let src = Field::from_csv(&fs::read_to_string(field)?)?;
            let grid = cfg.grid()?;
            if src.grid.dim != grid.dim {
                return Err(Error::Config(format!("field is {}-dimensional, grid.dim is {}", src.grid.dim, grid.dim)));
            }
            let mask = domain_mask(&cfg.radial_set()?, &grid)?.mask;
            let mut resampled = Field::from_fn(grid, mask, |x| src.interpolate(x));
            for (v, m) in resampled.values.iter_mut().zip(&resampled.mask) {
                if !m {
                    *v = 0.0;
                }
            }
            let path = match out {
                Some(p) => p.clone(),
                None => out_dir(cfg)?.join("export.csv"),
            };
            write(&mut files, path.clone(), &resampled.to_csv())?;
            let env = envelope(cfg, json!({}), json!({ "path": path, "nodes": grid.len() }))?;
            (0, env)
        }
    };
    Ok(Outcome { code, report, files })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg_in(dir: &Path, extra: &str) -> RunConfig {
        let text = format!("[grid]\nn = 9\nbox_radius = 1.0\n[output]\ndir = \"{}\"\n{extra}", dir.display());
        let mut c = RunConfig::parse(&text).unwrap();
        c.validate().unwrap();
        c.base_dir = dir.to_path_buf();
        c
    }

    #[test]
    fn check_kernel_reports_divergence() {
        let tmp = tempfile::tempdir().unwrap();
        let out = run(&Command::CheckKernel, &cfg_in(tmp.path(), "")).unwrap();
        assert_eq!(out.code, 0);
        assert_eq!(out.report["report"]["certificate"]["divergence_verified"], true);
        assert_eq!(out.report["config_hash"].as_str().unwrap().len(), 64);
    }

    #[test]
    fn minimize_is_deterministic() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = cfg_in(tmp.path(), "[solver]\nq = 3.0\nseed = 5\n");
        let a = run(&Command::Minimize, &cfg).unwrap();
        let first = fs::read(tmp.path().join("field.csv")).unwrap();
        let b = run(&Command::Minimize, &cfg).unwrap();
        assert_eq!(first, fs::read(tmp.path().join("field.csv")).unwrap());
        assert_eq!(a.report, b.report);
        assert_eq!(a.code, 0);
        let sym = run(&Command::AnalyzeSymmetry { field: None }, &cfg).unwrap();
        assert!(sym.report["report"]["tolerances"]["sym"].as_f64().unwrap() > 0.0);
        assert!(tmp.path().join("symmetry.json").is_file());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Hypothesis("x".into())), 2);
        assert_eq!(exit_code(&Error::Numeric("x".into())), 3);
        assert_eq!(exit_code(&Error::Config("x".into())), 1);
    }
}
