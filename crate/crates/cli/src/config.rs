//! Run configuration: a TOML file plus command-line overrides.
//!
//! Losses and penalties are written as short specs such as `t(3)`,
//! `huber(0.9)` or `elasso(1,0,-1)`; matrices (initial values, group
//! elements, simulation scatter) are CSV files referenced by path.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use gscatter::losses::LossFamily;
use gscatter::penalties::Penalty;
use gscatter::sampling::Family;
use gscatter::SolveOptions;
use serde::{Deserialize, Serialize};

use crate::data::Centering;
use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Estimate,
    Simulate,
    Path,
    Compare,
    Check,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    Reweight,
    FixedPoint,
    Constrained,
}

/// Splits `name(a,b,...)` into the name and its numeric arguments.
fn split_call(s: &str) -> CliResult<(String, Vec<f64>)> {
    let s = s.trim();
    let Some(open) = s.find('(') else {
        return Ok((s.to_ascii_lowercase(), Vec::new()));
    };
    let inner = s[open + 1..]
        .strip_suffix(')')
        .ok_or_else(|| CliError::Config(format!("missing ')' in '{s}'")))?;
    let args = inner
        .split(',')
        .filter(|a| !a.trim().is_empty())
        .map(|a| {
            a.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Config(format!("bad number '{}' in '{s}'", a.trim())))
        })
        .collect::<CliResult<Vec<f64>>>()?;
    Ok((s[..open].trim().to_ascii_lowercase(), args))
}

fn arity(name: &str, args: &[f64], n: usize) -> CliResult<()> {
    if args.len() != n {
        return Err(CliError::Config(format!(
            "'{name}' takes {n} argument(s), got {}",
            args.len()
        )));
    }
    Ok(())
}

/// Dimension-free description of a loss; bound to `p` once data is known.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum LossSpec {
    Gaussian,
    StudentT(f64),
    Cauchy,
    Huber(f64),
    Tyler,
}

impl LossSpec {
    pub fn build(&self, p: usize) -> CliResult<LossFamily> {
        Ok(match *self {
            LossSpec::Gaussian => LossFamily::gaussian(),
            LossSpec::StudentT(nu) => LossFamily::student_t(nu, p)?,
            LossSpec::Cauchy => LossFamily::cauchy(p)?,
            LossSpec::Huber(r) => LossFamily::huber(r, p)?,
            LossSpec::Tyler => LossFamily::tyler(p)?,
        })
    }
}

impl FromStr for LossSpec {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        let (name, args) = split_call(s)?;
        let spec = match name.as_str() {
            "gaussian" | "normal" => LossSpec::Gaussian,
            "t" | "student_t" => {
                arity(&name, &args, 1)?;
                LossSpec::StudentT(args[0])
            }
            "cauchy" => LossSpec::Cauchy,
            "huber" => {
                arity(&name, &args, 1)?;
                LossSpec::Huber(args[0])
            }
            "tyler" => LossSpec::Tyler,
            _ => return Err(CliError::Config(format!("unknown loss '{s}'"))),
        };
        if matches!(
            spec,
            LossSpec::Gaussian | LossSpec::Cauchy | LossSpec::Tyler
        ) {
            arity(&name, &args, 0)?;
        }
        Ok(spec)
    }
}

impl fmt::Display for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossSpec::Gaussian => write!(f, "gaussian"),
            LossSpec::StudentT(nu) => write!(f, "t({nu})"),
            LossSpec::Cauchy => write!(f, "cauchy"),
            LossSpec::Huber(r) => write!(f, "huber({r})"),
            LossSpec::Tyler => write!(f, "tyler"),
        }
    }
}

impl TryFrom<String> for LossSpec {
    type Error = CliError;
    fn try_from(s: String) -> CliResult<Self> {
        s.parse()
    }
}

impl From<LossSpec> for String {
    fn from(s: LossSpec) -> String {
        s.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PenaltySpec(pub Penalty);

impl FromStr for PenaltySpec {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        let (name, args) = split_call(s)?;
        let pen = match name.as_str() {
            "kl" => Penalty::Kl,
            "symkl" | "sym_kl" => Penalty::SymKl,
            "trace_precision" | "tp" => Penalty::TracePrecision,
            "riemannian" => Penalty::Riemannian,
            "riemannian_shape" => Penalty::RiemannianShape,
            "log_condition" | "log_condition_number" | "lcn" => Penalty::LogConditionNumber,
            "elasso" => return Ok(PenaltySpec(Penalty::elasso(args)?)),
            _ => return Err(CliError::Config(format!("unknown penalty '{s}'"))),
        };
        arity(&name, &args, 0)?;
        Ok(PenaltySpec(pen))
    }
}

impl fmt::Display for PenaltySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0 {
            Penalty::Elasso(a) => {
                let parts: Vec<String> = a.iter().map(|v| v.to_string()).collect();
                write!(f, "elasso({})", parts.join(","))
            }
            other => write!(f, "{}", other.name()),
        }
    }
}

impl TryFrom<String> for PenaltySpec {
    type Error = CliError;
    fn try_from(s: String) -> CliResult<Self> {
        s.parse()
    }
}

impl From<PenaltySpec> for String {
    fn from(s: PenaltySpec) -> String {
        s.to_string()
    }
}

impl Default for PenaltySpec {
    fn default() -> Self {
        PenaltySpec(Penalty::Kl)
    }
}

/// A single penalty weight or an increasing grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EtaSpec {
    Value(f64),
    Grid(Vec<f64>),
}

impl Default for EtaSpec {
    fn default() -> Self {
        EtaSpec::Value(0.0)
    }
}

impl FromStr for EtaSpec {
    type Err = CliError;

    /// `0.5` or a comma-separated list `0.1,0.2,0.5`.
    fn from_str(s: &str) -> CliResult<Self> {
        let values = s
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::usage(format!("bad eta value '{}'", v.trim())))
            })
            .collect::<CliResult<Vec<f64>>>()?;
        Ok(match values.as_slice() {
            [single] => EtaSpec::Value(*single),
            _ => EtaSpec::Grid(values),
        })
    }
}

impl EtaSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            EtaSpec::Value(v) => vec![*v],
            EtaSpec::Grid(g) => g.clone(),
        }
    }

    pub fn single(&self) -> CliResult<f64> {
        match self {
            EtaSpec::Value(v) => Ok(*v),
            EtaSpec::Grid(g) if g.len() == 1 => Ok(g[0]),
            EtaSpec::Grid(_) => Err(CliError::usage(
                "this command takes a single eta, not a grid",
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveSettings {
    pub max_iters: usize,
    pub tol_rel: f64,
    pub tol_dist: f64,
    pub divergence_norm: f64,
    pub record_trace: bool,
}

impl Default for SolveSettings {
    fn default() -> Self {
        let d = SolveOptions::default();
        SolveSettings {
            max_iters: d.max_iters,
            tol_rel: d.tol_rel,
            tol_dist: d.tol_dist,
            divergence_norm: d.divergence_norm,
            record_trace: d.record_trace,
        }
    }
}

impl SolveSettings {
    pub fn options(&self) -> SolveOptions {
        SolveOptions {
            max_iters: self.max_iters,
            tol_rel: self.tol_rel,
            tol_dist: self.tol_dist,
            divergence_norm: self.divergence_norm,
            record_trace: self.record_trace,
        }
    }
}

/// Kronecker structure `Σ = c·Σ₁⊗Σ₂` with optional symmetry groups, each
/// given as a CSV of vertically stacked orthogonal matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    pub p1: usize,
    pub p2: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups1: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups2: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FamilySpec(pub Family);

impl FromStr for FamilySpec {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        let (name, args) = split_call(s)?;
        Ok(FamilySpec(match name.as_str() {
            "gaussian" | "normal" => Family::Gaussian,
            "cauchy" => Family::Cauchy,
            "t" | "student_t" => {
                arity(&name, &args, 1)?;
                Family::StudentT(args[0])
            }
            _ => return Err(CliError::Config(format!("unknown sampling family '{s}'"))),
        }))
    }
}

impl fmt::Display for FamilySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Family::Gaussian => write!(f, "gaussian"),
            Family::Cauchy => write!(f, "cauchy"),
            Family::StudentT(nu) => write!(f, "t({nu})"),
        }
    }
}

impl TryFrom<String> for FamilySpec {
    type Error = CliError;
    fn try_from(s: String) -> CliResult<Self> {
        s.parse()
    }
}

impl From<FamilySpec> for String {
    fn from(s: FamilySpec) -> String {
        s.to_string()
    }
}

/// Sampling setup for `simulate`; the scatter defaults to the identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    pub family: FamilySpec,
    pub n: usize,
    pub p: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_path: Option<PathBuf>,
    #[serde(default = "default_loss")]
    pub loss: LossSpec,
    #[serde(default)]
    pub penalty: PenaltySpec,
    #[serde(default)]
    pub eta: EtaSpec,
    #[serde(default)]
    pub algorithm: Algorithm,
    #[serde(default)]
    pub centering: Centering,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<PathBuf>,
    /// Initial values compared by `compare`; defaults to `I` and `2I + 11ᵀ`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inits: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub solve: SolveSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<ConstraintSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSpec>,
}

fn default_loss() -> LossSpec {
    LossSpec::Gaussian
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        RunConfig {
            command,
            data_path: None,
            loss: default_loss(),
            penalty: PenaltySpec::default(),
            eta: EtaSpec::default(),
            algorithm: Algorithm::default(),
            centering: Centering::default(),
            init: None,
            inits: Vec::new(),
            output_path: None,
            seed: None,
            solve: SolveSettings::default(),
            constraint: None,
            simulate: None,
        }
    }

    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Checks that every field the command needs is present and that `η`
    /// lies in the penalty's admissible range for dimension `p`.
    pub fn validate(&self, p: Option<usize>) -> CliResult<()> {
        self.solve.options().validate()?;
        match self.command {
            Command::Simulate => {
                if self.simulate.is_none() {
                    return Err(CliError::usage(
                        "simulate needs a [simulate] section or --family/--n/--p",
                    ));
                }
            }
            Command::Estimate | Command::Path | Command::Check => {
                if self.data_path.is_none() {
                    return Err(CliError::usage("a data file is required"));
                }
            }
            Command::Compare => {}
        }
        if self.command == Command::Path && self.algorithm != Algorithm::Reweight {
            return Err(CliError::usage("path uses the reweighting algorithm only"));
        }
        if self.algorithm == Algorithm::Constrained && self.constraint.is_none() {
            return Err(CliError::usage(
                "the constrained algorithm needs a [constraint] section",
            ));
        }
        if self.command == Command::Path {
            let g = self.eta.values();
            if g.iter().any(|e| !(*e > 0.0)) || g.windows(2).any(|w| w[1] <= w[0]) {
                return Err(CliError::usage(
                    "path needs a positive, strictly increasing eta grid",
                ));
            }
        } else if self.command != Command::Simulate {
            self.eta.single()?;
        }
        if let Some(p) = p {
            self.penalty.0.check_dim(p)?;
            for eta in self.eta.values() {
                self.penalty.0.check_eta(eta, p)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"
command = "estimate"
data_path = "data.csv"
loss = "t(3)"
penalty = "elasso(1,0,-0.5)"
eta = 0.5
algorithm = "reweight"
centering = "mean"
seed = 42

[solve]
max_iters = 200
tol_rel = 1e-10
tol_dist = 1e-9
divergence_norm = 1e10
record_trace = false

[constraint]
p1 = 2
p2 = 2
"#;

    #[test]
    fn parses_full_config() {
        let c = RunConfig::from_toml(FULL).unwrap();
        assert_eq!(c.command, Command::Estimate);
        assert_eq!(c.loss, LossSpec::StudentT(3.0));
        assert_eq!(c.penalty.0, Penalty::Elasso(vec![1.0, 0.0, -0.5]));
        assert_eq!(c.eta, EtaSpec::Value(0.5));
        assert_eq!(c.centering, Centering::Mean);
        assert_eq!(c.solve.max_iters, 200);
        assert_eq!(c.constraint.as_ref().unwrap().p1, 2);
    }

    #[test]
    fn config_round_trips() {
        let c = RunConfig::from_toml(FULL).unwrap();
        let again = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(c, again);
        let mut g = RunConfig::new(Command::Path);
        g.eta = EtaSpec::Grid(vec![0.1, 0.2, 0.3]);
        g.penalty = "lcn".parse().unwrap();
        assert_eq!(RunConfig::from_toml(&g.to_toml().unwrap()).unwrap(), g);
    }

    #[test]
    fn defaults_apply() {
        let c = RunConfig::from_toml("command = \"check\"\ndata_path = \"x.csv\"").unwrap();
        assert_eq!(c.centering, Centering::MarginalMedian);
        assert_eq!(c.loss, LossSpec::Gaussian);
        assert_eq!(c.algorithm, Algorithm::Reweight);
        assert_eq!(c.solve, SolveSettings::default());
    }

    #[test]
    fn spec_strings() {
        for s in ["gaussian", "t(3)", "cauchy", "huber(0.9)", "tyler"] {
            assert_eq!(s.parse::<LossSpec>().unwrap().to_string(), s);
        }
        for s in [
            "kl",
            "symkl",
            "trace_precision",
            "riemannian",
            "riemannian_shape",
            "log_condition",
            "elasso(2,1,-1)",
        ] {
            let parsed: PenaltySpec = s.parse().unwrap();
            assert_eq!(parsed.to_string().parse::<PenaltySpec>().unwrap(), parsed);
        }
        assert!("t".parse::<LossSpec>().is_err());
        assert!("tyler(2)".parse::<LossSpec>().is_err());
        assert!("huber(0.9".parse::<LossSpec>().is_err());
        assert!("elasso(-1,1)".parse::<PenaltySpec>().is_err());
        assert!("ridge".parse::<PenaltySpec>().is_err());
        assert_eq!(
            "0.1, 0.2".parse::<EtaSpec>().unwrap(),
            EtaSpec::Grid(vec![0.1, 0.2])
        );
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("command = \"check\"\nbogus = 1").is_err());
    }

    #[test]
    fn validation() {
        let mut c = RunConfig::new(Command::Estimate);
        assert!(matches!(c.validate(Some(2)), Err(CliError::Usage(_))));
        c.data_path = Some("x.csv".into());
        c.validate(Some(2)).unwrap();
        c.penalty = "elasso(0,-1)".parse().unwrap();
        c.eta = EtaSpec::Value(2.5);
        assert!(matches!(c.validate(Some(2)), Err(CliError::Scatter(_))));
        c.command = Command::Path;
        c.eta = EtaSpec::Grid(vec![0.5, 0.2]);
        assert!(c.validate(Some(2)).is_err());
    }
}
