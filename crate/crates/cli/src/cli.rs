//! Command-line surface. Flags override values from `--config`.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::{Algorithm, Command, ConstraintSpec, RunConfig, SimulateSpec};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "gscatter",
    version,
    about = "Penalized and structured M-estimation of scatter matrices"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Solve once and print a JSON result record.
    Estimate(Args),
    /// Draw an elliptical sample and print it as CSV.
    Simulate(Args),
    /// Solve along an eta grid and print eta, kappa and objective as CSV.
    Path(Args),
    /// Run fixed-point and reweighting from several initial values side by side.
    Compare(Args),
    /// Print existence, convexity, coercivity and optimality diagnostics as JSON.
    Check(Args),
}

impl Sub {
    fn parts(&self) -> (Command, &Args) {
        match self {
            Sub::Estimate(a) => (Command::Estimate, a),
            Sub::Simulate(a) => (Command::Simulate, a),
            Sub::Path(a) => (Command::Path, a),
            Sub::Compare(a) => (Command::Compare, a),
            Sub::Check(a) => (Command::Check, a),
        }
    }
}

#[derive(Debug, Default, clap::Args)]
pub struct Args {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Data CSV, one observation per row.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// gaussian, t(nu), cauchy, huber(r) or tyler.
    #[arg(long)]
    pub loss: Option<String>,
    /// kl, symkl, trace_precision, riemannian, riemannian_shape, log_condition or elasso(a1,...,ap).
    #[arg(long)]
    pub penalty: Option<String>,
    /// A single value or a comma-separated increasing grid.
    #[arg(long, allow_hyphen_values = true)]
    pub eta: Option<String>,
    /// reweight, fixed_point or constrained.
    #[arg(long)]
    pub algorithm: Option<String>,
    /// none, mean or marginal_median.
    #[arg(long)]
    pub centering: Option<String>,
    /// Initial scatter matrix as CSV.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Initial values for `compare`; repeat the flag for several.
    #[arg(long = "compare-init")]
    pub inits: Vec<PathBuf>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol_rel: Option<f64>,
    #[arg(long)]
    pub tol_dist: Option<f64>,
    /// Omit the objective trace from result records.
    #[arg(long)]
    pub no_trace: bool,
    /// Kronecker dimensions as P1xP2.
    #[arg(long)]
    pub kronecker: Option<String>,
    /// Stacked orthogonal matrices acting on the first factor.
    #[arg(long)]
    pub groups1: Option<PathBuf>,
    /// Stacked orthogonal matrices acting on the second factor.
    #[arg(long)]
    pub groups2: Option<PathBuf>,
    /// Sampling family for `simulate`: gaussian, t(nu) or cauchy.
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    /// Scatter matrix CSV for `simulate`.
    #[arg(long)]
    pub sigma: Option<PathBuf>,
}

fn parse_algorithm(s: &str) -> CliResult<Algorithm> {
    match s {
        "reweight" => Ok(Algorithm::Reweight),
        "fixed_point" | "fp" => Ok(Algorithm::FixedPoint),
        "constrained" => Ok(Algorithm::Constrained),
        _ => Err(CliError::usage(format!("unknown algorithm '{s}'"))),
    }
}

fn parse_dims(s: &str) -> CliResult<(usize, usize)> {
    let bad = || {
        CliError::usage(format!(
            "kronecker dimensions must look like 2x3, got '{s}'"
        ))
    };
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    ))
}

impl Cli {
    /// Merges the config file (if any) with the flag overrides.
    pub fn into_config(self) -> CliResult<RunConfig> {
        let (command, a) = self.command.parts();
        let mut cfg = match &a.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                let mut c = RunConfig::from_toml(&text)?;
                c.command = command;
                c
            }
            None => RunConfig::new(command),
        };
        if let Some(v) = &a.data {
            cfg.data_path = Some(v.clone());
        }
        if let Some(v) = &a.loss {
            cfg.loss = v.parse()?;
        }
        if let Some(v) = &a.penalty {
            cfg.penalty = v.parse()?;
        }
        if let Some(v) = &a.eta {
            cfg.eta = v.parse()?;
        }
        if let Some(v) = &a.algorithm {
            cfg.algorithm = parse_algorithm(v)?;
        }
        if let Some(v) = &a.centering {
            cfg.centering = v.parse()?;
        }
        if let Some(v) = &a.init {
            cfg.init = Some(v.clone());
        }
        if !a.inits.is_empty() {
            cfg.inits = a.inits.clone();
        }
        if let Some(v) = &a.output {
            cfg.output_path = Some(v.clone());
        }
        if let Some(v) = a.seed {
            cfg.seed = Some(v);
        }
        if let Some(v) = a.max_iters {
            cfg.solve.max_iters = v;
        }
        if let Some(v) = a.tol_rel {
            cfg.solve.tol_rel = v;
        }
        if let Some(v) = a.tol_dist {
            cfg.solve.tol_dist = v;
        }
        if a.no_trace {
            cfg.solve.record_trace = false;
        }
        if let Some(v) = &a.kronecker {
            let (p1, p2) = parse_dims(v)?;
            cfg.constraint = Some(ConstraintSpec {
                p1,
                p2,
                groups1: a.groups1.clone(),
                groups2: a.groups2.clone(),
            });
            if a.algorithm.is_none() {
                cfg.algorithm = Algorithm::Constrained;
            }
        } else if a.groups1.is_some() || a.groups2.is_some() {
            return Err(CliError::usage("--groups1/--groups2 need --kronecker"));
        }
        if a.family.is_some() || a.n.is_some() || a.p.is_some() || a.sigma.is_some() {
            let base = cfg.simulate.clone();
            let family = match (&a.family, &base) {
                (Some(f), _) => f.parse()?,
                (None, Some(b)) => b.family,
                (None, None) => return Err(CliError::usage("simulate needs --family")),
            };
            let n =
                a.n.or(base.as_ref().map(|b| b.n))
                    .ok_or_else(|| CliError::usage("simulate needs --n"))?;
            let p =
                a.p.or(base.as_ref().map(|b| b.p))
                    .ok_or_else(|| CliError::usage("simulate needs --p"))?;
            let sigma = a.sigma.clone().or(base.and_then(|b| b.sigma));
            cfg.simulate = Some(SimulateSpec {
                family,
                n,
                p,
                sigma,
            });
        }
        Ok(cfg)
    }
}
