//! Run configuration: a TOML file with sectioned tables, unknown keys
//! rejected, every field defaulted.

use std::path::{Path, PathBuf};

use asdglue::algebra::GroupValue;
use asdglue::geometry::{ChartSpec, MetricKind, Stencil};
use asdglue::walls::Kappa;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub lattice: LatticeConfig,
    pub background: BackgroundConfig,
    pub sites: Vec<SiteConfig>,
    pub solver: SolverConfig,
    pub verify: VerifyConfig,
    pub output: OutputConfig,
    pub walls: WallsConfig,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyName {
    Torus,
    Open,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum MetricName {
    Flat,
    RoundS4,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeConfig {
    pub topology: TopologyName,
    /// Sites per axis.
    pub n: usize,
    /// Torus side length, or half-width of an open chart.
    pub extent: f64,
    pub metric: MetricName,
    pub shell: Option<usize>,
    /// `central2`, `central4` or `upwind2`; the topology default otherwise.
    pub stencil: Option<String>,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        LatticeConfig {
            topology: TopologyName::Torus,
            n: 16,
            extent: 4.0,
            metric: MetricName::Flat,
            shell: None,
            stencil: None,
        }
    }
}

impl LatticeConfig {
    pub fn chart_spec(&self) -> Result<ChartSpec<f64>, CliError> {
        let mut spec = match self.topology {
            TopologyName::Torus => ChartSpec::torus(self.n, self.extent),
            TopologyName::Open => ChartSpec::open(self.n, self.extent),
        };
        spec = spec.with_metric(match self.metric {
            MetricName::Flat => MetricKind::Flat,
            MetricName::RoundS4 => MetricKind::RoundS4,
        });
        if let Some(s) = self.shell {
            spec = spec.with_shell(s);
        }
        if let Some(name) = &self.stencil {
            let st = Stencil::parse(name)
                .ok_or_else(|| CliError::Config(format!("lattice.stencil: unknown stencil '{name}'")))?;
            spec = spec.with_stencil(st);
        }
        Ok(spec)
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum BackgroundKind {
    Flat,
    Bpst,
    Dump,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct BackgroundConfig {
    pub kind: BackgroundKind,
    /// Instanton shape for `bpst` backgrounds and the `instanton` command.
    pub rho: f64,
    pub center: [f64; 4],
    pub q: Vec<f64>,
    /// Field dump for `dump` backgrounds.
    pub path: Option<PathBuf>,
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        BackgroundConfig {
            kind: BackgroundKind::Flat,
            rho: 0.25,
            center: [2.0; 4],
            q: vec![1.0, 0.0, 0.0, 0.0],
            path: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SiteConfig {
    pub x: [f64; 4],
    pub lambda: f64,
    #[serde(default = "identity_quaternion")]
    pub q: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

fn identity_quaternion() -> Vec<f64> {
    vec![1.0, 0.0, 0.0, 0.0]
}

/// Parses a unit quaternion `[w, x, y, z]`, naming `key` in errors.
pub fn quaternion(key: &str, q: &[f64]) -> Result<GroupValue<f64>, CliError> {
    if q.len() != 4 {
        return Err(CliError::Config(format!(
            "{key}: expected a unit quaternion [w, x, y, z], got {} components",
            q.len()
        )));
    }
    let g = GroupValue::new(q[0], q[1], q[2], q[3]);
    if !g.is_unit(1e-9) {
        return Err(CliError::Config(format!(
            "{key}: quaternion has norm {} instead of 1",
            g.norm()
        )));
    }
    Ok(g)
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Fixed-point stopping tolerance.
    pub tol: f64,
    pub max_iter: usize,
    pub mu_override: Option<f64>,
    /// Seed for every random choice of a run.
    pub seed: u64,
    pub eigenpairs: usize,
    pub spectral_tol: f64,
    pub lambda0: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-8,
            max_iter: 100,
            mu_override: None,
            seed: 0x5eed,
            eigenpairs: 12,
            spectral_tol: 1e-8,
            lambda0: 0.1,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub lambdas: Vec<f64>,
    /// Lattice size override; each experiment has its own default.
    pub n: Option<usize>,
    pub length: f64,
    pub min_slope: f64,
    pub max_ratio_spread: f64,
    pub cluster_spread: f64,
    pub max_contraction: f64,
    pub residual_ratio: f64,
    pub xi_factor: f64,
    pub ball_fraction: [f64; 2],
    pub energy_drift: f64,
    pub cutoff_ns: Vec<f64>,
    pub cutoff_lambdas: Vec<f64>,
    pub cutoff_spread: f64,
    pub sequence: Vec<usize>,
    pub chebyshev_members: usize,
    pub radii: Vec<f64>,
    pub perturbation_scales: Vec<f64>,
    pub perturbation_background: f64,
    pub perturbation_spread: f64,
    pub gauge_tol: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            lambdas: vec![0.05, 0.025, 0.0125],
            n: None,
            length: 4.0,
            min_slope: 0.9,
            max_ratio_spread: 2.5,
            cluster_spread: 2.0,
            max_contraction: 0.5,
            residual_ratio: 1e-6,
            xi_factor: 2.0,
            ball_fraction: [0.9, 1.0],
            energy_drift: 0.05,
            cutoff_ns: vec![8.0, 32.0, 128.0],
            cutoff_lambdas: vec![1e-2, 1e-4],
            cutoff_spread: 2.0,
            sequence: vec![8, 16, 32, 64],
            chebyshev_members: 10,
            radii: vec![2.0, 5.0, 10.0],
            perturbation_scales: vec![0.005, 0.01, 0.02],
            perturbation_background: 0.3,
            perturbation_spread: 2.0,
            gauge_tol: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    Asdf,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: PathBuf::from("asdglue-out"),
            formats: vec![OutputFormat::Csv, OutputFormat::Asdf],
        }
    }
}

impl OutputConfig {
    pub fn wants(&self, f: OutputFormat) -> bool {
        self.formats.contains(&f)
    }
}

/// `κ` as `"p/q"` text or a number.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(untagged)]
pub enum KappaSpec {
    Number(f64),
    Text(String),
}

impl KappaSpec {
    pub fn parse(&self) -> Result<Kappa, CliError> {
        let bad = |why: String| CliError::Config(format!("walls.kappa: {why}"));
        match self {
            KappaSpec::Number(x) => {
                let q = x * 4.0;
                if !(q.is_finite() && q == q.round()) {
                    return Err(bad(format!("{x} is not a multiple of 1/4")));
                }
                Ok(Kappa::new(q as i64, 4))
            }
            KappaSpec::Text(s) => {
                let (p, q) = s.split_once('/').unwrap_or((s.as_str(), "1"));
                let p: i64 = p.trim().parse().map_err(|_| bad(format!("cannot parse '{s}'")))?;
                let q: i64 = q.trim().parse().map_err(|_| bad(format!("cannot parse '{s}'")))?;
                if q == 0 {
                    return Err(bad("zero denominator".into()));
                }
                Ok(Kappa::new(p, q))
            }
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct WallsConfig {
    /// Intersection matrix, row by row.
    pub q: Vec<Vec<i64>>,
    /// Defaults to the positive index of `q`.
    pub b_plus: Option<usize>,
    pub b1: usize,
    pub w: Vec<i64>,
    pub kappa: KappaSpec,
    pub bound: i64,
}

impl Default for WallsConfig {
    fn default() -> Self {
        WallsConfig {
            q: vec![vec![1, 0], vec![0, -1]],
            b_plus: None,
            b1: 0,
            w: vec![1, 0],
            kappa: KappaSpec::Text("3/4".into()),
            bound: 5,
        }
    }
}

impl RunConfig {
    /// Reads a config file; `None` gives the defaults.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                Self::parse(&text).map_err(|e| match e {
                    CliError::Config(m) => CliError::Config(format!("{}: {m}", p.display())),
                    other => other,
                })
            }
        }
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks that cannot be expressed in the schema.
    pub fn validate(&self) -> Result<(), CliError> {
        quaternion("background.q", &self.background.q)?;
        for (i, s) in self.sites.iter().enumerate() {
            quaternion(&format!("sites[{i}].q"), &s.q)?;
            if s.lambda.is_nan() || s.lambda < 0.0 {
                return Err(CliError::Config(format!("sites[{i}].lambda: must be nonnegative")));
            }
        }
        if self.background.kind == BackgroundKind::Dump && self.background.path.is_none() {
            return Err(CliError::Config("background.path: required for kind = \"dump\"".into()));
        }
        self.walls.kappa.parse()?;
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }
}
