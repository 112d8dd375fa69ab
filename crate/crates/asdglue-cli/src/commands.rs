//! Subcommand pipelines. Each returns whether its declared checks passed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use asdglue::bundle::Bundle;
use asdglue::calculus::curvature_summary;
use asdglue::field::ConnectionField;
use asdglue::geometry::{build_lattice, Topology};
use asdglue::harness::{self, ExperimentReport, SpliceFamily};
use asdglue::instanton::{bpst, center_scale, chebyshev_tail, InstantonParams, ENERGY_QUANTUM};
use asdglue::io::{load_field, save_field};
use asdglue::norms::{NormReport, SharpOptions};
use asdglue::solve::{glue, GlueOptions, PicardOptions};
use asdglue::spectral::{spectrum, SpectrumOptions};
use asdglue::splice::{splice, validate_gluing_data, GluingData, GluingSite};
use asdglue::walls::{enumerate_walls, IntersectionForm};
use clap::ValueEnum;

use crate::config::{quaternion, BackgroundKind, OutputFormat, RunConfig};
use crate::error::CliError;

/// Experiments available to `verify`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    FplusScaling,
    EigenvalueCluster,
    FixedPoint,
    UhlenbeckLimit,
    GoodCutoff,
    CutoffEstimates,
    Chebyshev,
    Perturbation,
    GaugeTwin,
}

/// Resolved configuration plus the output directory.
pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
}

fn schema(name: &str) -> String {
    format!("# asdglue-schema: {name} v1\n")
}

impl Context {
    pub fn new(cfg: RunConfig, out: PathBuf) -> Result<Self, CliError> {
        std::fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
        let ctx = Context { cfg, out };
        let resolved = ctx.cfg.to_toml()?;
        ctx.write("config.resolved.toml", &resolved)?;
        Ok(ctx)
    }

    fn write(&self, name: &str, text: &str) -> Result<PathBuf, CliError> {
        let path = self.out.join(name);
        std::fs::write(&path, text).map_err(|e| io_err(&path, e))?;
        Ok(path)
    }

    fn csv(&self, name: &str, text: &str) -> Result<(), CliError> {
        if self.cfg.output.wants(OutputFormat::Csv) {
            let p = self.write(name, text)?;
            println!("wrote {}", p.display());
        }
        Ok(())
    }

    fn dump(&self, name: &str, f: &ConnectionField<f64>) -> Result<(), CliError> {
        if self.cfg.output.wants(OutputFormat::Asdf) {
            let p = self.out.join(name);
            save_field(f, &p)?;
            println!("wrote {}", p.display());
        }
        Ok(())
    }

    fn bundle(&self) -> Result<Arc<Bundle<f64>>, CliError> {
        let chart = build_lattice(&self.cfg.lattice.chart_spec()?)?;
        Ok(Bundle::trivial(Arc::new(chart)))
    }

    fn instanton_params(&self) -> Result<InstantonParams<f64>, CliError> {
        let bg = &self.cfg.background;
        Ok(InstantonParams::new(
            bg.center,
            bg.rho,
            quaternion("background.q", &bg.q)?,
        )?)
    }

    fn background(&self) -> Result<ConnectionField<f64>, CliError> {
        let b = self.bundle()?;
        let bg = &self.cfg.background;
        Ok(match bg.kind {
            BackgroundKind::Flat => ConnectionField::zeros(&b),
            BackgroundKind::Bpst => bpst(&self.instanton_params()?, &b)?,
            BackgroundKind::Dump => {
                let p = bg.path.as_ref().expect("validated");
                load_field(&b, p)?
            }
        })
    }

    fn gluing_data(&self) -> Result<GluingData<f64>, CliError> {
        let sites = self
            .cfg
            .sites
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let mut g = GluingSite::new(s.x, s.lambda, quaternion(&format!("sites[{i}].q"), &s.q)?);
                g.rho = s.rho;
                Ok(g)
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        Ok(GluingData {
            background: self.background()?,
            sites,
            lambda0: self.cfg.solver.lambda0,
        })
    }

    fn spectrum_options(&self) -> SpectrumOptions {
        SpectrumOptions {
            tol: self.cfg.solver.spectral_tol,
            seed: self.cfg.solver.seed,
            mu: self.cfg.solver.mu_override,
            ..SpectrumOptions::default()
        }
    }

    fn picard_options(&self) -> PicardOptions {
        PicardOptions {
            tol: self.cfg.solver.tol,
            max_iter: self.cfg.solver.max_iter,
            ..PicardOptions::default()
        }
    }
}

fn io_err(p: &Path, e: std::io::Error) -> CliError {
    CliError::Io {
        path: p.display().to_string(),
        source: e,
    }
}

/// BPST field from `[background]` on the configured chart.
pub fn instanton(ctx: &Context) -> Result<bool, CliError> {
    let b = ctx.bundle()?;
    let a = bpst(&ctx.instanton_params()?, &b)?;
    let cs = curvature_summary(&a);
    let mut csv = schema("instanton");
    csv.push_str("quantity,value\n");
    let _ = writeln!(csv, "energy,{}", cs.energy);
    let _ = writeln!(csv, "charge,{}", cs.energy / ENERGY_QUANTUM);
    let _ = writeln!(csv, "fplus_ratio,{}", (cs.self_dual_sq / cs.energy).sqrt());
    if b.chart().topology() == Topology::OpenChart {
        let c = center_scale(&a)?;
        for (mu, z) in c.center.iter().enumerate() {
            let _ = writeln!(csv, "center{mu},{z}");
        }
        let _ = writeln!(csv, "scale,{}", c.scale);
        for r in [2.0, 5.0, 10.0] {
            let _ = writeln!(csv, "tail_R{r},{}", chebyshev_tail(&a, r)?);
        }
    }
    print!("{}", csv.lines().skip(2).map(|l| format!("{l}\n")).collect::<String>());
    ctx.csv("instanton.csv", &csv)?;
    ctx.dump("instanton.asdf", &a)?;
    Ok(true)
}

/// Validated splice of `[background]` and `[[sites]]`.
pub fn splice_cmd(ctx: &Context) -> Result<bool, CliError> {
    let gd = ctx.gluing_data()?;
    let violations = validate_gluing_data(&gd);
    for v in &violations {
        eprintln!("violation: {v}");
    }
    let a = splice(&gd)?;
    let fp = asdglue::calculus::self_dual_curvature(&a);
    let nr = NormReport::compute(
        "F+(splice)",
        &fp,
        &asdglue::norms::Region::Whole,
        SharpOptions::default(),
    )?;
    let cs = curvature_summary(&a);
    let mut csv = schema("splice");
    let _ = writeln!(csv, "{},energy,charge", NormReport::CSV_HEADER);
    let _ = writeln!(csv, "{},{},{}", nr.csv_row(), cs.energy, cs.energy / ENERGY_QUANTUM);
    println!("energy/8pi^2 = {}, |F+|_L2 = {}", cs.energy / ENERGY_QUANTUM, nr.l2);
    ctx.csv("splice.csv", &csv)?;
    ctx.dump("splice.asdf", &a)?;
    Ok(true)
}

/// Low spectrum of the splice, or of the background when no sites are given.
pub fn spectrum_cmd(ctx: &Context) -> Result<bool, CliError> {
    let a = if ctx.cfg.sites.is_empty() {
        ctx.background()?
    } else {
        splice(&ctx.gluing_data()?)?
    };
    let sd = spectrum(&a, ctx.cfg.solver.eigenpairs, &ctx.spectrum_options())?;
    let mut csv = schema("spectrum");
    csv.push_str("index,eigenvalue,residual,below_mu\n");
    for (i, (e, r)) in sd.eigenvalues.iter().zip(&sd.residuals).enumerate() {
        let _ = writeln!(csv, "{},{e},{r},{}", i + 1, u8::from(*e < sd.mu));
    }
    println!(
        "mu = {}, below mu = {}, kernel = {}, nu2 = {:?}",
        sd.mu, sd.cluster_count, sd.kernel_dim, sd.nu2
    );
    ctx.csv("spectrum.csv", &csv)?;
    Ok(true)
}

/// Splice, low spectrum and fixed-point solve. Fails its check when the
/// iteration stops short of the residual bound.
pub fn glue_cmd(ctx: &Context) -> Result<bool, CliError> {
    let opts = GlueOptions {
        eigenpairs: ctx.cfg.solver.eigenpairs,
        spectrum: ctx.spectrum_options(),
        picard: ctx.picard_options(),
        mu: ctx.cfg.solver.mu_override,
    };
    let out = glue(&ctx.gluing_data()?, &opts)?;
    let s = &out.solve;
    let mut csv = schema("glue");
    csv.push_str("kind,index,value\n");
    for (i, h) in s.history.iter().enumerate() {
        let _ = writeln!(csv, "step,{},{h}", i + 1);
    }
    for (i, o) in s.obstruction.iter().enumerate() {
        let _ = writeln!(csv, "obstruction,{},{o}", i + 1);
    }
    for (k, v) in [
        ("fplus_L2", s.fplus_l2),
        ("fplus_sharp2", s.fplus_sharp2),
        ("extended_residual", s.extended_residual),
        ("solved_fplus_L2", s.solved_fplus_l2),
        ("nu2_background", out.nu2_background),
        ("mu", out.spectral.mu),
    ] {
        let _ = writeln!(csv, "{k},,{v}");
    }
    ctx.csv("glue.csv", &csv)?;
    ctx.dump("glued.asdf", &out.glued)?;
    let bound = ctx.cfg.verify.residual_ratio * s.fplus_l2;
    let ok = s.converged && s.extended_residual <= bound;
    println!(
        "{} glue: {} steps, residual {:e} (bound {:e})",
        if ok { "PASS" } else { "FAIL" },
        s.history.len(),
        s.extended_residual,
        bound
    );
    Ok(ok)
}

fn family(ctx: &Context, default_n: usize) -> SpliceFamily {
    let v = &ctx.cfg.verify;
    let mut f = SpliceFamily::new(v.n.unwrap_or(default_n), v.length, v.lambdas.clone());
    f.lambda0 = ctx.cfg.solver.lambda0;
    f
}

/// Runs one experiment, writes its report and prints a line per check.
pub fn verify(ctx: &Context, which: Experiment) -> Result<bool, CliError> {
    let v = &ctx.cfg.verify;
    let seed = ctx.cfg.solver.seed;
    let glue_opts = || GlueOptions {
        eigenpairs: ctx.cfg.solver.eigenpairs,
        spectrum: ctx.spectrum_options(),
        picard: ctx.picard_options(),
        mu: ctx.cfg.solver.mu_override,
    };
    let rep: ExperimentReport = match which {
        Experiment::FplusScaling => harness::fplus_scaling_experiment(
            &family(ctx, 32),
            SharpOptions::default(),
            harness::ScalingThresholds {
                min_slope: v.min_slope,
                max_spread: v.max_ratio_spread,
            },
        )?,
        Experiment::EigenvalueCluster => harness::eigenvalue_cluster_experiment(
            &family(ctx, 16),
            ctx.cfg.solver.eigenpairs,
            &ctx.spectrum_options(),
            harness::ClusterThresholds {
                count: 9,
                max_spread: v.cluster_spread,
            },
        )?,
        Experiment::FixedPoint => {
            let runs = harness::run_family(&family(ctx, 16), &glue_opts())?;
            harness::picard_report(
                &runs,
                SharpOptions::default(),
                harness::PicardThresholds {
                    max_contraction: v.max_contraction,
                    residual_ratio: v.residual_ratio,
                    xi_factor: v.xi_factor,
                },
            )?
        }
        Experiment::UhlenbeckLimit => {
            let fam = family(ctx, 16);
            let runs = harness::run_family(&fam, &glue_opts())?;
            harness::uhlenbeck_report(
                &fam,
                &runs,
                harness::UhlenbeckThresholds {
                    ball_fraction: (v.ball_fraction[0], v.ball_fraction[1]),
                    energy_drift: v.energy_drift,
                },
            )?
        }
        Experiment::GoodCutoff => harness::cutoff_sequence_experiment(&v.sequence)?,
        Experiment::CutoffEstimates => {
            harness::cutoff_estimate_experiment(&v.cutoff_ns, &v.cutoff_lambdas, v.cutoff_spread)?
        }
        Experiment::Chebyshev => {
            harness::chebyshev_experiment(v.chebyshev_members, &v.radii, v.n.unwrap_or(32), v.length, seed)?
        }
        Experiment::Perturbation => harness::perturbation_experiment(
            v.n.unwrap_or(4),
            v.length,
            v.perturbation_background,
            &v.perturbation_scales,
            ctx.cfg.solver.eigenpairs,
            seed,
            &ctx.spectrum_options(),
            v.perturbation_spread,
        )?,
        Experiment::GaugeTwin => harness::gauge_twin_experiment(
            v.n.unwrap_or(4),
            0.02,
            32,
            seed,
            &ctx.spectrum_options(),
            &ctx.picard_options(),
            v.gauge_tol,
        )?,
    };
    for line in rep.summary_lines() {
        println!("{line}");
    }
    ctx.csv(&format!("verify-{}.csv", rep.id), &rep.to_csv())?;
    Ok(rep.passed())
}

/// Wall classes of `[walls]`, one CSV row each.
pub fn walls(ctx: &Context) -> Result<bool, CliError> {
    let w = &ctx.cfg.walls;
    let form = match w.b_plus {
        Some(bp) => IntersectionForm::new(w.q.clone(), bp, w.b1)?,
        None => {
            let n = w.q.len();
            // Positive index read off by trying every admissible value.
            (0..=n)
                .find_map(|bp| IntersectionForm::new(w.q.clone(), bp, w.b1).ok())
                .ok_or_else(|| CliError::Config("walls.q: not a nondegenerate symmetric matrix".into()))?
        }
    };
    let list = enumerate_walls(&form, &w.w, w.kappa.parse()?, w.bound)?;
    let mut csv = schema("walls");
    csv.push_str("xi,xi_sq,level,index,h1,h2\n");
    for wall in &list {
        let xi = wall.xi.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let (h1, h2) = wall
            .dims
            .map_or((String::new(), String::new()), |(a, b)| (a.to_string(), b.to_string()));
        let _ = writeln!(csv, "{xi},{},{},{},{h1},{h2}", wall.xi_sq, wall.level, wall.index);
    }
    print!("{csv}");
    ctx.csv("walls.csv", &csv)?;
    Ok(true)
}
