//! Command execution.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::time::Instant;

use gscatter::diagnostics::{
    check_gconvexity, directional_optimality, existence_check, gcoercivity_probe, DISCLAIMER,
};
use gscatter::losses::{penalized_loss, Dataset};
use gscatter::sampling::{example1_dataset, sample_elliptical, EllipticalSpec, EXAMPLE1_SEED};
use gscatter::solvers::{default_init, fixed_point_iterate, solve_penalized};
use gscatter::structure::{constrained_reweight_solve, duality_path, KroneckerGroupConstraint};
use gscatter::{ScatterError, SolveReport, SpdMatrix, Status};
use nalgebra::DMatrix;
use serde_json::json;

use crate::config::{Algorithm, Command, ConstraintSpec, RunConfig};
use crate::data::{load_csv, read_matrix_file, write_matrix};
use crate::error::{CliError, CliResult};
use crate::record::ResultRecord;

/// Name of the environment variable holding the default seed.
pub const SEED_ENV: &str = "GSCATTER_SEED";

/// Process-level settings captured once at startup.
#[derive(Clone, Debug, Default)]
pub struct Context {
    pub default_seed: Option<u64>,
}

impl Context {
    pub fn from_env() -> CliResult<Self> {
        let default_seed = match std::env::var(SEED_ENV) {
            Ok(v) => Some(v.trim().parse::<u64>().map_err(|_| {
                CliError::usage(format!("{SEED_ENV} must be an unsigned integer, got '{v}'"))
            })?),
            Err(_) => None,
        };
        Ok(Context { default_seed })
    }
}

/// Config seed, then the environment default, then a fixed constant.
pub fn effective_seed(cfg: &RunConfig, ctx: &Context) -> u64 {
    cfg.seed.or(ctx.default_seed).unwrap_or(EXAMPLE1_SEED)
}

/// Runs one command. Output goes to `output_path` when set, otherwise to
/// `stdout`. A solve that ends without converging yields `NotConverged`
/// after its record has been written.
pub fn run(cfg: &RunConfig, ctx: &Context, stdout: &mut dyn Write) -> CliResult<()> {
    match &cfg.output_path {
        Some(path) => {
            let file = File::create(path).map_err(|e| CliError::io(path, e))?;
            let mut w = BufWriter::new(file);
            let res = dispatch(cfg, ctx, &mut w);
            w.flush().map_err(|e| CliError::io(path, e))?;
            res
        }
        None => dispatch(cfg, ctx, stdout),
    }
}

fn dispatch(cfg: &RunConfig, ctx: &Context, out: &mut dyn Write) -> CliResult<()> {
    match cfg.command {
        Command::Estimate => estimate(cfg, out),
        Command::Simulate => simulate(cfg, ctx, out),
        Command::Path => path(cfg, out),
        Command::Compare => compare(cfg, out),
        Command::Check => check(cfg, ctx, out),
    }
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::io("<output>", e)
}

fn load_data(cfg: &RunConfig) -> CliResult<Dataset> {
    let path = cfg
        .data_path
        .as_ref()
        .ok_or_else(|| CliError::usage("a data file is required"))?;
    let data = load_csv(path, cfg.centering)?;
    cfg.validate(Some(data.p()))?;
    Ok(data)
}

fn load_spd(path: &std::path::Path, p: usize) -> CliResult<SpdMatrix> {
    let m = read_matrix_file(path)?;
    if m.nrows() != p || m.ncols() != p {
        return Err(CliError::usage(format!(
            "{} holds a {}x{} matrix, expected {p}x{p}",
            path.display(),
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(SpdMatrix::new(m)?)
}

/// Splits a CSV of vertically stacked `k×k` blocks into matrices.
fn load_group(path: Option<&std::path::PathBuf>, k: usize) -> CliResult<Vec<DMatrix<f64>>> {
    let Some(path) = path else {
        return Ok(vec![DMatrix::identity(k, k)]);
    };
    let m = read_matrix_file(path)?;
    if m.ncols() != k || m.nrows() % k != 0 {
        return Err(CliError::usage(format!(
            "{} must stack {k}x{k} matrices, found {}x{}",
            path.display(),
            m.nrows(),
            m.ncols()
        )));
    }
    Ok((0..m.nrows() / k)
        .map(|b| m.rows(b * k, k).into_owned())
        .collect())
}

fn build_constraint(spec: &ConstraintSpec, p: usize) -> CliResult<KroneckerGroupConstraint> {
    if spec.p1 * spec.p2 != p {
        return Err(CliError::usage(format!(
            "constraint {}x{} does not match dimension {p}",
            spec.p1, spec.p2
        )));
    }
    let k1 = load_group(spec.groups1.as_ref(), spec.p1)?;
    let k2 = load_group(spec.groups2.as_ref(), spec.p2)?;
    Ok(KroneckerGroupConstraint::new(spec.p1, spec.p2, k1, k2)?)
}

fn solve_once(cfg: &RunConfig, data: &Dataset, init: Option<&SpdMatrix>) -> CliResult<SolveReport> {
    let p = data.p();
    let loss = cfg.loss.build(p)?;
    let eta = cfg.eta.single()?;
    let opts = cfg.solve.options();
    let penalty = &cfg.penalty.0;
    Ok(match cfg.algorithm {
        Algorithm::Reweight => {
            let s0 = init.cloned().unwrap_or_else(|| default_init(data));
            solve_penalized(data, &loss, penalty, eta, &s0, &opts)?
        }
        Algorithm::FixedPoint => {
            let s0 = init.cloned().unwrap_or_else(|| default_init(data));
            fixed_point_iterate(data, &loss, penalty, eta, &s0, &opts)?
        }
        Algorithm::Constrained => {
            let spec = cfg.constraint.as_ref().ok_or_else(|| {
                CliError::usage("the constrained algorithm needs a [constraint] section")
            })?;
            let constraint = build_constraint(spec, p)?;
            let s0 = init.cloned().unwrap_or_else(|| SpdMatrix::identity(p));
            let mut rep = constrained_reweight_solve(data, &loss, &constraint, &s0, &opts)?;
            if eta != 0.0 {
                rep.warnings
                    .push("the constrained algorithm ignores the penalty".into());
            }
            rep
        }
    })
}

fn estimate(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<()> {
    let data = load_data(cfg)?;
    let init = cfg
        .init
        .as_ref()
        .map(|p| load_spd(p, data.p()))
        .transpose()?;
    let start = Instant::now();
    let rep = solve_once(cfg, &data, init.as_ref())?;
    let rec =
        ResultRecord::from_report(cfg, cfg.eta.single()?, &rep, start.elapsed().as_secs_f64());
    writeln!(out, "{}", rec.to_json_line()?).map_err(io_err)?;
    if rep.status != Status::Converged {
        return Err(CliError::NotConverged(rep.status.as_str().into()));
    }
    Ok(())
}

fn simulate(cfg: &RunConfig, ctx: &Context, out: &mut dyn Write) -> CliResult<()> {
    cfg.validate(None)?;
    let spec = cfg
        .simulate
        .as_ref()
        .ok_or_else(|| CliError::usage("missing [simulate] section"))?;
    let sigma = match &spec.sigma {
        Some(path) => load_spd(path, spec.p)?,
        None => SpdMatrix::identity(spec.p),
    };
    let data = sample_elliptical(&EllipticalSpec {
        family: spec.family.0,
        sigma,
        n: spec.n,
        seed: effective_seed(cfg, ctx),
    })?;
    write_matrix(out, data.rows())
}

fn path(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<()> {
    let data = load_data(cfg)?;
    let loss = cfg.loss.build(data.p())?;
    let grid = cfg.eta.values();
    let path = duality_path(&data, &loss, &cfg.penalty.0, &grid, &cfg.solve.options())?;
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| CliError::Config(e.to_string());
    w.write_record(["eta", "kappa", "objective"])
        .map_err(csv_err)?;
    for i in 0..grid.len() {
        w.write_record([
            path.eta_grid[i].to_string(),
            path.kappa_values[i].to_string(),
            path.objectives[i].to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(io_err)
}

/// `I` and `2I + 11ᵀ`, i.e. `[[3,1],[1,3]]` in two dimensions.
fn default_inits(p: usize) -> Vec<SpdMatrix> {
    let spread = DMatrix::from_element(p, p, 1.0) + DMatrix::identity(p, p) * 2.0;
    vec![
        SpdMatrix::identity(p),
        SpdMatrix::new(spread).expect("2I + 11ᵀ is positive definite"),
    ]
}

fn compare(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<()> {
    let data = match &cfg.data_path {
        Some(_) => load_data(cfg)?,
        None => {
            let d = example1_dataset();
            cfg.validate(Some(d.p()))?;
            d
        }
    };
    let p = data.p();
    let inits = if cfg.inits.is_empty() {
        default_inits(p)
    } else {
        cfg.inits
            .iter()
            .map(|path| load_spd(path, p))
            .collect::<CliResult<_>>()?
    };
    let eta = cfg.eta.single()?;
    let mut rows = Vec::new();
    for (k, s0) in inits.iter().enumerate() {
        for algorithm in [Algorithm::FixedPoint, Algorithm::Reweight] {
            let mut run_cfg = cfg.clone();
            run_cfg.algorithm = algorithm;
            let start = Instant::now();
            let label = format!("{} init {k}", algorithm_name(algorithm));
            match solve_once(&run_cfg, &data, Some(s0)) {
                Ok(rep) => rows.push((
                    algorithm,
                    k,
                    Ok(ResultRecord::from_report(
                        &run_cfg,
                        eta,
                        &rep,
                        start.elapsed().as_secs_f64(),
                    )
                    .with_label(label)),
                )),
                Err(CliError::Scatter(e @ ScatterError::Unsupported(_))) => {
                    rows.push((algorithm, k, Err(e.to_string())))
                }
                Err(e) => return Err(e),
            }
        }
    }
    let reference = rows.iter().find_map(|(a, _, r)| match r {
        Ok(rec) if *a == Algorithm::Reweight => rec.estimate_matrix().ok(),
        _ => None,
    });
    writeln!(
        out,
        "{:<12} {:>4} {:<10} {:>6} {:>22} {:>12}",
        "algorithm", "init", "status", "iters", "objective", "gap"
    )
    .map_err(io_err)?;
    for (algorithm, k, r) in &rows {
        match r {
            Ok(rec) => {
                let gap = match (&reference, rec.estimate_matrix()) {
                    (Some(a), Ok(b)) => format!("{:.3e}", a.frobenius_distance(&b)),
                    _ => "-".into(),
                };
                let obj = rec
                    .final_objective
                    .map_or("-".into(), |v| format!("{v:.15e}"));
                writeln!(
                    out,
                    "{:<12} {:>4} {:<10} {:>6} {:>22} {:>12}",
                    algorithm_name(*algorithm),
                    k,
                    rec.status,
                    rec.iters,
                    obj,
                    gap
                )
                .map_err(io_err)?;
            }
            Err(msg) => writeln!(
                out,
                "{:<12} {:>4} unavailable: {msg}",
                algorithm_name(*algorithm),
                k
            )
            .map_err(io_err)?,
        }
    }
    for (_, _, r) in &rows {
        if let Ok(rec) = r {
            writeln!(out, "{}", rec.to_json_line()?).map_err(io_err)?;
        }
    }
    Ok(())
}

fn algorithm_name(a: Algorithm) -> &'static str {
    match a {
        Algorithm::Reweight => "reweight",
        Algorithm::FixedPoint => "fixed_point",
        Algorithm::Constrained => "constrained",
    }
}

fn check(cfg: &RunConfig, ctx: &Context, out: &mut dyn Write) -> CliResult<()> {
    let data = load_data(cfg)?;
    let p = data.p();
    let loss = cfg.loss.build(p)?;
    let eta = cfg.eta.single()?;
    let penalty = &cfg.penalty.0;
    let seed = effective_seed(cfg, ctx);
    let objective =
        |s: &SpdMatrix| penalized_loss(&loss, &data, s, penalty, eta).unwrap_or(f64::INFINITY);

    let existence = match existence_check(&data, &loss) {
        Ok(r) => json!({
            "holds": r.holds,
            "exhaustive": true,
            "subsets_checked": r.subsets_checked.to_string(),
            "witness": r.witness.map(|w| {
                (0..w.ncols()).map(|j| w.column(j).iter().copied().collect::<Vec<f64>>()).collect::<Vec<_>>()
            }),
        }),
        Err(ScatterError::BudgetExceeded {
            subsets,
            heuristic_holds,
        }) => json!({
            "holds": heuristic_holds,
            "exhaustive": false,
            "subsets_checked": subsets.to_string(),
        }),
        Err(e) => return Err(e.into()),
    };
    let convexity = check_gconvexity(objective, p, 200, seed);
    let coercivity = gcoercivity_probe(objective, p, 50, seed);
    let optimality = match solve_once(cfg, &data, None) {
        Ok(rep) => {
            let d = directional_optimality(objective, &rep.estimate, 20, seed);
            json!({ "status": rep.status.as_str(), "iters": rep.iters, "min_directional_derivative": d.min_derivative })
        }
        Err(e) => json!({ "error": e.to_string() }),
    };
    let report = json!({
        "existence": existence,
        "gconvexity": { "max_violation": convexity.max_violation, "passed": convexity.passed(), "trials": convexity.trials },
        "gcoercivity": { "min_growth": coercivity.min_growth },
        "optimality": optimality,
        "disclaimer": DISCLAIMER,
    });
    writeln!(out, "{report}").map_err(io_err)
}
