//! Experiments measuring splice curvature scaling, eigenvalue clustering,
//! fixed-point convergence, limits as the scale shrinks and the supporting
//! estimates, with reports that carry every raw series.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::algebra::GroupValue;
use crate::bundle::Bundle;
use crate::calculus::{curvature, curvature_summary, self_dual_curvature};
use crate::error::{Error, Result};
use crate::field::ConnectionField;
use crate::geometry::{build_lattice, ChartSpec, Point};
use crate::instanton::{bpst, chebyshev_tail, InstantonParams, ENERGY_QUANTUM};
use crate::norms::{lp_norm, Exponent, NormReport, Region, SharpOptions};
use crate::solve::{glue, l4_norm, picard_solve, sharp2_norm, GlueOptions, GlueOutcome, PicardOptions};
use crate::spectral::{eigen_perturbation_check, spectrum, FlatSymbol, SpectrumOptions};
use crate::splice::{
    beta_cutoff, beta_inverse_factors, cutoff_norms, splice, splice_fplus_report, CutoffProfile, GluingData, GluingSite,
};

/// First line of every experiment CSV.
pub const CSV_SCHEMA: &str = "# asdglue-schema: experiment v1";

/// Names of the five tracked cutoff norms, in [`cutoff_norms`] order.
pub const CUTOFF_NORM_NAMES: [&str; 5] = ["dL4", "d2L2", "dL2sharp", "dL2", "d2L43"];

/// One measured point with its full parameter tuple.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesEntry {
    pub params: Vec<(String, f64)>,
    pub values: Vec<(String, f64)>,
}

impl SeriesEntry {
    pub fn value(&self, name: &str) -> Option<f64> {
        self.values.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }
}

/// A fitted constant or slope with its fit residual.
#[derive(Clone, Debug, PartialEq)]
pub struct Fit {
    pub name: String,
    pub value: f64,
    pub residual: f64,
}

/// A pass/fail comparison against a declared threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    /// Human-readable bound, e.g. `>= 0.9`.
    pub bound: String,
    pub passed: bool,
}

impl Check {
    pub fn at_least(name: &str, measured: f64, min: f64) -> Self {
        Check {
            name: name.into(),
            measured,
            bound: format!(">= {min}"),
            passed: measured >= min,
        }
    }

    pub fn at_most(name: &str, measured: f64, max: f64) -> Self {
        Check {
            name: name.into(),
            measured,
            bound: format!("<= {max}"),
            passed: measured <= max,
        }
    }

    pub fn within(name: &str, measured: f64, lo: f64, hi: f64) -> Self {
        Check {
            name: name.into(),
            measured,
            bound: format!("in [{lo}, {hi}]"),
            passed: (lo..=hi).contains(&measured),
        }
    }

    /// Boolean condition; `measured` is 1 when it holds.
    pub fn holds(name: &str, ok: bool, bound: &str) -> Self {
        Check {
            name: name.into(),
            measured: if ok { 1.0 } else { 0.0 },
            bound: bound.into(),
            passed: ok,
        }
    }
}

/// Raw series, fits and checks of one experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub id: String,
    /// Parameter grid, e.g. `("lambda", [...])`.
    pub grid: Vec<(String, Vec<f64>)>,
    pub series: Vec<SeriesEntry>,
    pub fits: Vec<Fit>,
    pub checks: Vec<Check>,
}

impl ExperimentReport {
    fn new(id: &str) -> Self {
        ExperimentReport {
            id: id.into(),
            grid: Vec::new(),
            series: Vec::new(),
            fits: Vec::new(),
            checks: Vec::new(),
        }
    }

    /// True when every check passed.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn fit(&self, name: &str) -> Option<&Fit> {
        self.fits.iter().find(|f| f.name == name)
    }

    /// Values of one named series entry across the report.
    pub fn column(&self, name: &str) -> Vec<f64> {
        self.series.iter().filter_map(|e| e.value(name)).collect()
    }

    /// CSV with a schema line and one row per series value, fit and check.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{CSV_SCHEMA}");
        let _ = writeln!(out, "experiment,kind,name,params,value,detail");
        let kv = |p: &[(String, f64)]| p.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";");
        for (name, values) in &self.grid {
            let list = values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";");
            let _ = writeln!(out, "{},grid,{name},,,{list}", self.id);
        }
        for e in &self.series {
            let p = kv(&e.params);
            for (name, v) in &e.values {
                let _ = writeln!(out, "{},series,{name},{p},{v},", self.id);
            }
        }
        for f in &self.fits {
            let _ = writeln!(out, "{},fit,{},,{},residual={}", self.id, f.name, f.value, f.residual);
        }
        for c in &self.checks {
            let verdict = if c.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(
                out,
                "{},check,{},,{},{verdict} {}",
                self.id, c.name, c.measured, c.bound
            );
        }
        out
    }

    /// One `PASS`/`FAIL` line per check.
    pub fn summary_lines(&self) -> Vec<String> {
        self.checks
            .iter()
            .map(|c| {
                let verdict = if c.passed { "PASS" } else { "FAIL" };
                format!("{verdict} {}::{} = {:.6e} ({})", self.id, c.name, c.measured, c.bound)
            })
            .collect()
    }
}

/// Least-squares line through `(x, y)`: `(slope, intercept, rms residual)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let rms = (x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - icpt - slope * a).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (slope, icpt, rms)
}

/// `max / min` of positive values; infinite when any value is not positive
/// and finite.
pub fn spread(values: &[f64]) -> f64 {
    if values.is_empty() || values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return f64::INFINITY;
    }
    let max = values.iter().copied().fold(f64::MIN, f64::max);
    let min = values.iter().copied().fold(f64::MAX, f64::min);
    max / min
}

fn param(name: &str, v: f64) -> (String, f64) {
    (name.to_string(), v)
}

/// Single-site splices on a flat torus, one per scale.
#[derive(Clone, Debug)]
pub struct SpliceFamily {
    pub n: usize,
    pub length: f64,
    pub lambdas: Vec<f64>,
    pub lambda0: f64,
    /// Defaults to the middle of the torus.
    pub point: Option<Point<f64>>,
    pub orientation: GroupValue<f64>,
}

impl SpliceFamily {
    pub fn new(n: usize, length: f64, lambdas: Vec<f64>) -> Self {
        SpliceFamily {
            n,
            length,
            lambdas,
            lambda0: 0.1,
            point: None,
            orientation: GroupValue::identity(),
        }
    }

    pub fn point(&self) -> Point<f64> {
        self.point.unwrap_or([0.5 * self.length; 4])
    }

    pub fn background(&self) -> Result<ConnectionField<f64>> {
        let chart = Arc::new(build_lattice(&ChartSpec::torus(self.n, self.length))?);
        Ok(ConnectionField::zeros(&Bundle::trivial(chart)))
    }

    /// Gluing data at one scale over a shared background.
    pub fn gluing_data(&self, background: &ConnectionField<f64>, lambda: f64) -> GluingData<f64> {
        GluingData {
            background: background.clone(),
            sites: vec![GluingSite::new(self.point(), lambda, self.orientation)],
            lambda0: self.lambda0,
        }
    }

    fn params(&self, lambda: f64) -> Vec<(String, f64)> {
        vec![
            param("N", self.n as f64),
            param("L", self.length),
            param("lambda", lambda),
        ]
    }
}

/// Thresholds of [`fplus_scaling_experiment`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingThresholds {
    pub min_slope: f64,
    pub max_spread: f64,
}

impl Default for ScalingThresholds {
    fn default() -> Self {
        ScalingThresholds {
            min_slope: 0.9,
            max_spread: 2.5,
        }
    }
}

/// `||F^+||` of the splice against the scale in the `L^2` and sharp-2 norms,
/// fitted on a log-log scale. Ideal points (`lambda = 0`) are reported but
/// excluded from the fit.
pub fn fplus_scaling_experiment(
    family: &SpliceFamily,
    sharp: SharpOptions,
    th: ScalingThresholds,
) -> Result<ExperimentReport> {
    let mut distinct: Vec<f64> = family.lambdas.iter().copied().filter(|&l| l > 0.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "scaling fit needs 3 distinct positive scales, got {}",
            distinct.len()
        )));
    }
    let bg = family.background()?;
    let reports: Vec<NormReport> = family
        .lambdas
        .par_iter()
        .map(|&l| splice_fplus_report(&family.gluing_data(&bg, l), sharp))
        .collect::<Result<_>>()?;
    let mut rep = ExperimentReport::new("fplus-scaling");
    rep.grid.push(("lambda".into(), family.lambdas.clone()));
    let (mut lx, mut y2, mut ys, mut r2, mut rs) = (vec![], vec![], vec![], vec![], vec![]);
    for (&l, nr) in family.lambdas.iter().zip(&reports) {
        let s2 = nr.sharp2().ok_or(Error::Unsupported("sharp norms on this chart"))?;
        let mut values = vec![param("L2", nr.l2), param("sharp2", s2)];
        if l > 0.0 {
            values.push(param("L2/lambda", nr.l2 / l));
            values.push(param("sharp2/lambda", s2 / l));
            lx.push(l.ln());
            y2.push(nr.l2.ln());
            ys.push(s2.ln());
            r2.push(nr.l2 / l);
            rs.push(s2 / l);
        }
        rep.series.push(SeriesEntry {
            params: family.params(l),
            values,
        });
    }
    let (s_l2, _, res_l2) = linear_fit(&lx, &y2);
    let (s_sh, _, res_sh) = linear_fit(&lx, &ys);
    rep.fits.push(Fit {
        name: "slope_L2".into(),
        value: s_l2,
        residual: res_l2,
    });
    rep.fits.push(Fit {
        name: "slope_sharp2".into(),
        value: s_sh,
        residual: res_sh,
    });
    rep.checks.push(Check::at_least("slope_L2", s_l2, th.min_slope));
    rep.checks.push(Check::at_least("slope_sharp2", s_sh, th.min_slope));
    rep.checks
        .push(Check::at_most("ratio_spread_L2", spread(&r2), th.max_spread));
    rep.checks
        .push(Check::at_most("ratio_spread_sharp2", spread(&rs), th.max_spread));
    Ok(rep)
}

/// One scale of a glued family.
#[derive(Clone, Debug)]
pub struct FamilyRun {
    pub lambda: f64,
    pub outcome: GlueOutcome<f64>,
}

/// Glues every member of the family, largest scale first.
pub fn run_family(family: &SpliceFamily, opts: &GlueOptions) -> Result<Vec<FamilyRun>> {
    let bg = family.background()?;
    let mut lambdas = family.lambdas.clone();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    lambdas
        .into_iter()
        .map(|l| {
            Ok(FamilyRun {
                lambda: l,
                outcome: glue(&family.gluing_data(&bg, l), opts)?,
            })
        })
        .collect()
}

/// Thresholds of the clustering experiment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClusterThresholds {
    /// Number of eigenvalues expected below the cutoff.
    pub count: usize,
    pub max_spread: f64,
}

impl Default for ClusterThresholds {
    fn default() -> Self {
        ClusterThresholds {
            count: 9,
            max_spread: 2.0,
        }
    }
}

/// Low eigenvalues of one family member.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterPoint {
    pub lambda: f64,
    pub eigenvalues: Vec<f64>,
    pub mu: f64,
    pub below_mu: usize,
    /// Least positive eigenvalue of the background.
    pub nu2: f64,
}

/// Clustering report from computed spectra.
pub fn cluster_report(points: &[ClusterPoint], th: ClusterThresholds) -> Result<ExperimentReport> {
    let n = th.count;
    let mut rep = ExperimentReport::new("eigenvalue-cluster");
    rep.grid
        .push(("lambda".into(), points.iter().map(|p| p.lambda).collect()));
    let (mut c1, mut c2) = (Vec::new(), Vec::new());
    let mut counts_ok = true;
    for p in points {
        if p.eigenvalues.len() <= n {
            return Err(Error::InvalidParameter(format!(
                "need {} eigenvalues, got {}",
                n + 1,
                p.eigenvalues.len()
            )));
        }
        let (mu_n, mu_next) = (p.eigenvalues[n - 1], p.eigenvalues[n]);
        let k1 = mu_n / p.lambda;
        let k2 = (mu_next - p.nu2).abs() / p.lambda.sqrt();
        c1.push(k1);
        c2.push(k2);
        counts_ok &= p.below_mu == n;
        let mut values = vec![
            param("mu", p.mu),
            param("nu2", p.nu2),
            param("below_mu", p.below_mu as f64),
            param("mu_n", mu_n),
            param("mu_n+1", mu_next),
            param("C1", k1),
            param("C2", k2),
        ];
        for (i, e) in p.eigenvalues.iter().enumerate() {
            values.push((format!("ev{}", i + 1), *e));
        }
        rep.series.push(SeriesEntry {
            params: vec![param("lambda", p.lambda)],
            values,
        });
    }
    let fit = |name: &str, v: &[f64]| Fit {
        name: name.into(),
        value: v.iter().copied().fold(0.0, f64::max),
        residual: spread(v),
    };
    rep.fits.push(fit("C1", &c1));
    rep.fits.push(fit("C2", &c2));
    rep.checks.push(Check::holds(
        "count_below_mu",
        counts_ok,
        &format!("== {n} at every scale"),
    ));
    rep.checks.push(Check::at_most("C1_spread", spread(&c1), th.max_spread));
    rep.checks.push(Check::at_most("C2_spread", spread(&c2), th.max_spread));
    Ok(rep)
}

/// Clustering of the low spectrum of the splice family below half the
/// flat gap.
pub fn eigenvalue_cluster_experiment(
    family: &SpliceFamily,
    m: usize,
    opts: &SpectrumOptions,
    th: ClusterThresholds,
) -> Result<ExperimentReport> {
    let bg = family.background()?;
    let nu2 = FlatSymbol::new(bg.bundle().chart_arc())?.gap();
    let points = family
        .lambdas
        .iter()
        .map(|&l| {
            let a = splice(&family.gluing_data(&bg, l))?;
            let sd = spectrum(&a, m, opts)?;
            Ok(ClusterPoint {
                lambda: l,
                eigenvalues: sd.eigenvalues,
                mu: sd.mu,
                below_mu: sd.cluster_count,
                nu2,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    cluster_report(&points, th)
}

/// Clustering report of glued runs.
pub fn cluster_report_from_runs(runs: &[FamilyRun], th: ClusterThresholds) -> Result<ExperimentReport> {
    let points: Vec<ClusterPoint> = runs
        .iter()
        .map(|r| ClusterPoint {
            lambda: r.lambda,
            eigenvalues: r.outcome.spectral.eigenvalues.clone(),
            mu: r.outcome.spectral.mu,
            below_mu: r.outcome.spectral.cluster_count,
            nu2: r.outcome.nu2_background,
        })
        .collect();
    cluster_report(&points, th)
}

/// Thresholds of the fixed-point experiment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PicardThresholds {
    pub max_contraction: f64,
    /// Bound on `||Pi^perp F^+(A + a)|| / ||F_A^+||` in `L^2`.
    pub residual_ratio: f64,
    /// Bound on `||xi||_{sharp,2} / ||F_A^+||_{sharp,2}`.
    pub xi_factor: f64,
}

impl Default for PicardThresholds {
    fn default() -> Self {
        PicardThresholds {
            max_contraction: 0.5,
            residual_ratio: 1e-6,
            xi_factor: 2.0,
        }
    }
}

/// Convergence of the fixed-point iteration on every glued run. A family
/// whose splices carry no self-dual curvature is reported as failing the
/// `nontrivial` check, since the other checks then hold vacuously.
pub fn picard_report(runs: &[FamilyRun], sharp: SharpOptions, th: PicardThresholds) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new("picard");
    rep.grid
        .push(("lambda".into(), runs.iter().map(|r| r.lambda).collect()));
    let (mut worst_c, mut worst_res, mut worst_xi) = (0.0f64, 0.0f64, 0.0f64);
    let mut all_converged = true;
    let mut min_fplus = f64::INFINITY;
    for r in runs {
        let s = &r.outcome.solve;
        let c = s.contraction_factors().into_iter().fold(0.0, f64::max);
        let res = if s.fplus_l2 > 0.0 {
            s.extended_residual / s.fplus_l2
        } else {
            s.extended_residual
        };
        let xi = sharp2_norm(&s.xi, sharp)?;
        let xr = if s.fplus_sharp2 > 0.0 { xi / s.fplus_sharp2 } else { xi };
        worst_c = worst_c.max(c);
        worst_res = worst_res.max(res);
        worst_xi = worst_xi.max(xr);
        all_converged &= s.converged;
        min_fplus = min_fplus.min(s.fplus_l2);
        let mut values = vec![
            param("fplus_L2", s.fplus_l2),
            param("fplus_sharp2", s.fplus_sharp2),
            param("iterations", s.history.len() as f64),
            param("max_contraction", c),
            param("extended_residual", s.extended_residual),
            param("residual_ratio", res),
            param("xi_sharp2", xi),
            param("xi_ratio", xr),
            param("obstruction", s.obstruction_norm()),
            param("solved_fplus_L2", s.solved_fplus_l2),
        ];
        for (i, h) in s.history.iter().enumerate() {
            values.push((format!("step{}", i + 1), *h));
        }
        rep.series.push(SeriesEntry {
            params: vec![param("lambda", r.lambda)],
            values,
        });
    }
    rep.checks.push(Check::holds(
        "nontrivial",
        min_fplus > 0.0,
        "||F+(A)|| > 0 at every scale",
    ));
    rep.checks
        .push(Check::holds("converged", all_converged, "at every scale"));
    rep.checks
        .push(Check::at_most("contraction", worst_c, th.max_contraction));
    rep.checks
        .push(Check::at_most("residual_ratio", worst_res, th.residual_ratio));
    rep.checks.push(Check::at_most("xi_ratio", worst_xi, th.xi_factor));
    Ok(rep)
}

/// Thresholds of the limit experiment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UhlenbeckThresholds {
    pub ball_fraction: (f64, f64),
    /// Allowed relative drift of the total energy across the family.
    pub energy_drift: f64,
}

impl Default for UhlenbeckThresholds {
    fn default() -> Self {
        UhlenbeckThresholds {
            ball_fraction: (0.9, 1.0),
            energy_drift: 0.05,
        }
    }
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

/// Limit diagnostics on a flat background, where the limit solution is
/// zero: the glued connection on the annulus `r < |x - x1| < 2r` with
/// `r = 8 sqrt(lambda_max)` shrinks, and the energy concentrates in the ball
/// `|x - x1| < r`.
pub fn uhlenbeck_report(
    family: &SpliceFamily,
    runs: &[FamilyRun],
    th: UhlenbeckThresholds,
) -> Result<ExperimentReport> {
    if runs.is_empty() {
        return Err(Error::InvalidParameter("empty family".into()));
    }
    let x1 = family.point();
    let lmax = runs.iter().map(|r| r.lambda).fold(0.0, f64::max);
    let r = 8.0 * lmax.sqrt();
    let annulus = Region::Annulus {
        center: x1,
        inner: r,
        outer: 2.0 * r,
    };
    let ball = Region::Ball { center: x1, radius: r };
    let mut rep = ExperimentReport::new("uhlenbeck-limit");
    rep.grid
        .push(("lambda".into(), runs.iter().map(|r| r.lambda).collect()));
    rep.grid.push(("annulus".into(), vec![r, 2.0 * r]));
    let (mut ann, mut vinf, mut frac, mut total) = (vec![], vec![], vec![], vec![]);
    for run in runs {
        let glued = &run.outcome.glued;
        let a_l2 = lp_norm(glued, Exponent::L2, &annulus)?;
        let v = lp_norm(&run.outcome.solve.v, Exponent::Infinity, &annulus)?;
        let f = curvature(glued);
        let e_ball = lp_norm(&f, Exponent::L2, &ball)?.powi(2) / ENERGY_QUANTUM;
        let e_tot = curvature_summary(glued).energy / ENERGY_QUANTUM;
        ann.push(a_l2);
        vinf.push(v);
        frac.push(e_ball);
        total.push(e_tot);
        rep.series.push(SeriesEntry {
            params: family.params(run.lambda),
            values: vec![
                param("annulus_L2", a_l2),
                param("v_Linf_annulus", v),
                param("ball_energy", e_ball),
                param("total_energy", e_tot),
            ],
        });
    }
    let drift = {
        let max = total.iter().copied().fold(f64::MIN, f64::max);
        let min = total.iter().copied().fold(f64::MAX, f64::min);
        if max > 0.0 {
            (max - min) / max
        } else {
            0.0
        }
    };
    let last = runs.len() - 1;
    rep.checks.push(Check::holds(
        "annulus_decreasing",
        strictly_decreasing(&ann),
        "strictly decreasing",
    ));
    rep.checks.push(Check::within(
        "ball_fraction",
        frac[last],
        th.ball_fraction.0,
        th.ball_fraction.1,
    ));
    rep.checks.push(Check::holds(
        "v_decreasing",
        vinf.windows(2).all(|w| w[1] <= w[0]),
        "non-increasing",
    ));
    rep.checks.push(Check::at_most("energy_drift", drift, th.energy_drift));
    Ok(rep)
}

/// The cutoff `beta_{n, n^-4}` of the `n`-th member of a good sequence.
/// The sequence starts at `n = 5`, the first index the cutoff admits.
pub fn good_cutoff_sequence(n: usize) -> Result<CutoffProfile<f64>> {
    let nn = n as f64;
    beta_cutoff(nn, nn.powi(-4))
}

/// Tracked norms of the good sequence decrease and the profiles are nested.
pub fn cutoff_sequence_experiment(ns: &[usize]) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new("good-cutoff-sequence");
    rep.grid.push(("n".into(), ns.iter().map(|&n| n as f64).collect()));
    let profiles: Vec<_> = ns.iter().map(|&n| good_cutoff_sequence(n)).collect::<Result<_>>()?;
    let norms: Vec<[f64; 5]> = profiles.iter().map(cutoff_norms).collect();
    for (&n, v) in ns.iter().zip(&norms) {
        rep.series.push(SeriesEntry {
            params: vec![param("n", n as f64)],
            values: CUTOFF_NORM_NAMES.iter().zip(v).map(|(k, x)| param(k, *x)).collect(),
        });
    }
    for (k, name) in CUTOFF_NORM_NAMES.iter().enumerate() {
        let col: Vec<f64> = norms.iter().map(|v| v[k]).collect();
        rep.checks.push(Check::holds(
            &format!("{name}_decreasing"),
            strictly_decreasing(&col),
            "strictly decreasing",
        ));
    }
    // Nesting on a logarithmic radial grid spanning every transition.
    let radii: Vec<f64> = (0..=400).map(|i| 10f64.powf(-8.0 + 8.0 * i as f64 / 400.0)).collect();
    let nested = profiles.windows(2).all(|w| {
        radii
            .iter()
            .all(|&r| w[0].radial_value(r) <= w[1].radial_value(r) + 1e-15)
    });
    rep.checks
        .push(Check::holds("nested", nested, "chi_m <= chi_n for m <= n"));
    Ok(rep)
}

/// Each cutoff norm of `beta_{N, lambda}` times its inverse factor, with its
/// spread across the grid.
pub fn cutoff_estimate_experiment(ns: &[f64], lambdas: &[f64], max_spread: f64) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new("cutoff-estimates");
    rep.grid.push(("N".into(), ns.to_vec()));
    rep.grid.push(("lambda".into(), lambdas.to_vec()));
    let mut cols = vec![Vec::new(); 5];
    for &n in ns {
        for &l in lambdas {
            let norms = cutoff_norms(&beta_cutoff(n, l)?);
            let inv = beta_inverse_factors(n, l);
            let mut values = Vec::new();
            for k in 0..5 {
                let scaled = norms[k] * inv[k];
                cols[k].push(scaled);
                values.push(param(CUTOFF_NORM_NAMES[k], norms[k]));
                values.push((format!("{}_scaled", CUTOFF_NORM_NAMES[k]), scaled));
            }
            rep.series.push(SeriesEntry {
                params: vec![param("N", n), param("lambda", l)],
                values,
            });
        }
    }
    for (k, col) in cols.iter().enumerate() {
        rep.checks.push(Check::at_most(
            &format!("{}_spread", CUTOFF_NORM_NAMES[k]),
            spread(col),
            max_spread,
        ));
    }
    Ok(rep)
}

/// Tail fractions of a randomized instanton family against `R^-2`.
pub fn chebyshev_experiment(members: usize, radii: &[f64], n: usize, half: f64, seed: u64) -> Result<ExperimentReport> {
    let chart = Arc::new(build_lattice(&ChartSpec::open(n, half))?);
    let bundle = Bundle::trivial(chart);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = ExperimentReport::new("chebyshev");
    rep.grid.push(("R".into(), radii.to_vec()));
    let mut worst = f64::NEG_INFINITY;
    for i in 0..members {
        let center = std::array::from_fn(|_| rng.random_range(-0.25 * half..0.25 * half));
        let rho = rng.random_range(0.1 * half..0.2 * half);
        let q = GroupValue::random(&mut rng);
        let a = bpst(&InstantonParams::new(center, rho, q)?, &bundle)?;
        let mut values = vec![param("rho", rho)];
        for &r in radii {
            let t = chebyshev_tail(&a, r)?;
            worst = worst.max(t * r * r);
            values.push((format!("tail(R={r})"), t));
        }
        rep.series.push(SeriesEntry {
            params: vec![param("member", i as f64), param("N", n as f64)],
            values,
        });
    }
    rep.checks.push(Check::at_most("max_tail_times_R2", worst, 1.0));
    Ok(rep)
}

/// Eigenvalue variation under perturbations of prescribed `L^4` size around
/// a fixed random background, with one constant fitted for all scales.
#[allow(clippy::too_many_arguments)]
pub fn perturbation_experiment(
    n: usize,
    length: f64,
    background_scale: f64,
    scales: &[f64],
    m: usize,
    seed: u64,
    opts: &SpectrumOptions,
    max_spread: f64,
) -> Result<ExperimentReport> {
    let chart = Arc::new(build_lattice(&ChartSpec::torus(n, length))?);
    let bundle = Bundle::trivial(chart);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = ConnectionField::random(&bundle, &mut rng).scaled(background_scale);
    let dir = ConnectionField::random(&bundle, &mut rng);
    let unit = dir.scaled(1.0 / l4_norm(&dir)?);
    let mut rep = ExperimentReport::new("eigen-perturbation");
    rep.grid.push(("t".into(), scales.to_vec()));
    let mut fits = Vec::new();
    let mut reports = Vec::new();
    for &t in scales {
        let pr = eigen_perturbation_check(&a, &unit.scaled(t), m, opts)?;
        fits.push(pr.c_fit());
        let mut values = vec![
            param("a_L4", pr.a_l4),
            param("c_upper", pr.c_upper),
            param("c_lower", pr.c_lower),
            param("c_fit", pr.c_fit()),
        ];
        for (i, (b, x)) in pr.before.iter().zip(&pr.after).enumerate() {
            values.push((format!("before{}", i + 1), *b));
            values.push((format!("after{}", i + 1), *x));
        }
        rep.series.push(SeriesEntry {
            params: vec![param("N", n as f64), param("t", t)],
            values,
        });
        reports.push(pr);
    }
    let c = fits.iter().copied().fold(0.0, f64::max);
    rep.fits.push(Fit {
        name: "C".into(),
        value: c,
        residual: spread(&fits),
    });
    rep.checks.push(Check::holds(
        "bounds_hold",
        reports.iter().all(|r| r.holds(c)),
        "both bounds with one C",
    ));
    rep.checks.push(Check::at_most("C_spread", spread(&fits), max_spread));
    Ok(rep)
}

fn rel_diff(x: f64, y: f64) -> f64 {
    let s = x.abs().max(y.abs());
    if s == 0.0 {
        0.0
    } else {
        (x - y).abs() / s
    }
}

/// Gauge-invariant diagnostics of one run.
fn invariants(
    a: &ConnectionField<f64>,
    m: usize,
    opts: &SpectrumOptions,
    picard: &PicardOptions,
) -> Result<Vec<(String, f64)>> {
    let cs = curvature_summary(a);
    let fp = self_dual_curvature(a);
    let mut out = vec![
        param("energy", cs.energy),
        param("F_L2", cs.energy.sqrt()),
        param("Fplus_L2", lp_norm(&fp, Exponent::L2, &Region::Whole)?),
        param("Fplus_sharp2", sharp2_norm(&fp, picard.sharp)?),
    ];
    let sd = spectrum(a, m, opts)?;
    for (i, e) in sd.eigenvalues.iter().enumerate() {
        out.push((format!("ev{}", i + 1), *e));
    }
    let sol = picard_solve(a, &sd, picard)?;
    for (i, h) in sol.history.iter().enumerate() {
        out.push((format!("step{}", i + 1), *h));
    }
    Ok(out)
}

/// Compares gauge-invariant diagnostics of a run with its twin under a
/// constant gauge rotation: a small random connection on a torus, and a
/// splice whose background and orientation are rotated together.
pub fn gauge_twin_experiment(
    n: usize,
    scale: f64,
    splice_n: usize,
    seed: u64,
    opts: &SpectrumOptions,
    picard: &PicardOptions,
    tol: f64,
) -> Result<ExperimentReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = GroupValue::random(&mut rng);
    let chart = Arc::new(build_lattice(&ChartSpec::torus(n, 4.0))?);
    let bundle = Bundle::trivial(chart);
    let a = ConnectionField::random(&bundle, &mut rng).scaled(scale);
    let twin = a.rotated(&u, &bundle);
    let mut pairs: Vec<(String, f64, f64)> = invariants(&a, 12, opts, picard)?
        .into_iter()
        .zip(invariants(&twin, 12, opts, picard)?)
        .map(|((k, x), (_, y))| (k, x, y))
        .collect();

    let family = SpliceFamily::new(splice_n, 4.0, vec![0.04]);
    let bg = family.background()?;
    let q = GroupValue::random(&mut rng);
    let gd = GluingData {
        background: bg.clone(),
        sites: vec![GluingSite::new(family.point(), 0.04, q)],
        lambda0: 0.1,
    };
    let gd_twin = GluingData {
        background: bg.rotated(&u, bg.bundle()),
        sites: vec![GluingSite::new(family.point(), 0.04, u.mul(&q))],
        lambda0: 0.1,
    };
    let s0 = splice(&gd)?;
    let s1 = splice(&gd_twin)?;
    let (c0, c1) = (curvature_summary(&s0), curvature_summary(&s1));
    pairs.push(("splice_energy".into(), c0.energy, c1.energy));
    pairs.push(("splice_fplus_sq".into(), c0.self_dual_sq, c1.self_dual_sq));

    let mut rep = ExperimentReport::new("gauge-twin");
    rep.grid.push(("seed".into(), vec![seed as f64]));
    let mut worst = 0.0f64;
    for (k, x, y) in &pairs {
        let d = rel_diff(*x, *y);
        worst = worst.max(d);
        rep.series.push(SeriesEntry {
            params: vec![param("seed", seed as f64)],
            values: vec![(k.clone(), *x), (format!("{k}_twin"), *y), (format!("{k}_reldiff"), d)],
        });
    }
    rep.checks.push(Check::at_most("max_relative_difference", worst, tol));
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_fit_recovers_a_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        let (s, i, r) = linear_fit(&x, &y);
        assert!((s - 2.0).abs() < 1e-12 && (i + 1.0).abs() < 1e-12 && r < 1e-12);
        assert_eq!(spread(&[1.0, 2.0]), 2.0);
        assert!(spread(&[0.0, 1.0]).is_infinite());
    }

    #[test]
    fn scaling_rejects_degenerate_grids() {
        let f = SpliceFamily::new(8, 4.0, vec![0.01, 0.01, 0.01]);
        assert!(fplus_scaling_experiment(&f, SharpOptions::default(), ScalingThresholds::default()).is_err());
        let f = SpliceFamily::new(8, 4.0, vec![0.0, 0.01, 0.02]);
        assert!(fplus_scaling_experiment(&f, SharpOptions::default(), ScalingThresholds::default()).is_err());
    }

    #[test]
    fn ideal_point_is_reported_and_excluded() {
        let f = SpliceFamily::new(8, 4.0, vec![0.0, 0.01, 0.02, 0.04]);
        let rep = fplus_scaling_experiment(&f, SharpOptions::default(), ScalingThresholds::default()).unwrap();
        assert_eq!(rep.series.len(), 4);
        assert_eq!(rep.series[0].value("L2"), Some(0.0));
        assert_eq!(rep.series[0].value("L2/lambda"), None);
        assert_eq!(rep.column("L2/lambda").len(), 3);
        assert!(rep.to_csv().starts_with(CSV_SCHEMA));
    }

    #[test]
    fn good_sequence_support_and_monotonicity() {
        let p = good_cutoff_sequence(8).unwrap();
        let s = (8f64).powi(-2);
        assert_eq!(p.radial_value(0.5 * s), 1.0);
        assert_eq!(p.radial_value(0.99 * s / 8.0), 0.0);
        let rep = cutoff_sequence_experiment(&[8, 16, 32]).unwrap();
        assert!(rep.passed(), "{:?}", rep.summary_lines());
    }

    #[test]
    fn cluster_report_counts_and_fits() {
        let pts: Vec<ClusterPoint> = [0.04, 0.02]
            .iter()
            .map(|&l| ClusterPoint {
                lambda: l,
                eigenvalues: (0..12).map(|i| if i < 9 { 0.5 * l } else { 1.0 + l.sqrt() }).collect(),
                mu: 0.5,
                below_mu: 9,
                nu2: 1.0,
            })
            .collect();
        let rep = cluster_report(&pts, ClusterThresholds::default()).unwrap();
        assert!(rep.passed(), "{:?}", rep.summary_lines());
        assert!((rep.fit("C1").unwrap().value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn chebyshev_family_small() {
        let rep = chebyshev_experiment(2, &[2.0, 5.0], 16, 4.0, 1).unwrap();
        assert!(rep.passed(), "{:?}", rep.summary_lines());
    }

    #[test]
    fn ball_energy_matches_total_energy_on_the_whole_chart() {
        let f = SpliceFamily::new(8, 4.0, vec![0.04]);
        let bg = f.background().unwrap();
        let a = splice(&f.gluing_data(&bg, 0.04)).unwrap();
        let whole = lp_norm(&curvature(&a), Exponent::L2, &Region::Whole).unwrap().powi(2);
        let e = curvature_summary(&a).energy;
        assert!((whole - e).abs() <= 1e-12 * e.max(1e-300));
    }
}
