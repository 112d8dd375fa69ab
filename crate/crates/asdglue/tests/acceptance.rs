//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit when any
//! criterion fails. Tolerances are fixed here and never relaxed.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use asdglue::bundle::Bundle;
use asdglue::calculus::OperatorHandle;
use asdglue::field::{ConnectionField, SelfDualField};
use asdglue::geometry::{build_lattice, ChartSpec};
use asdglue::harness::{
    chebyshev_experiment, cluster_report_from_runs, cutoff_estimate_experiment, fplus_scaling_experiment,
    gauge_twin_experiment, perturbation_experiment, picard_report, run_family, uhlenbeck_report, ClusterThresholds,
    ExperimentReport, PicardThresholds, ScalingThresholds, SpliceFamily, UhlenbeckThresholds,
};
use asdglue::instanton::{bpst_summary_streamed, InstantonParams, ENERGY_QUANTUM};
use asdglue::norms::SharpOptions;
use asdglue::solve::{GlueOptions, PicardOptions};
use asdglue::spectral::{dense_spectrum, spectrum, SpectrumOptions};
use asdglue::splice::splice;
use asdglue::walls::{check_parity, enumerate_walls, IntersectionForm, Kappa};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), String>;

const FAMILY_LAMBDAS: [f64; 3] = [0.05, 0.025, 0.0125];
const TORUS_LENGTH: f64 = 4.0;

fn list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn report_detail(rep: &ExperimentReport, names: &[&str]) -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for n in names {
        match rep.check(n) {
            Some(c) => {
                ok &= c.passed;
                let tag = if c.passed { "ok" } else { "FAILED" };
                parts.push(format!("{n}={:.4e} {} [{tag}]", c.measured, c.bound));
            }
            None => {
                ok = false;
                parts.push(format!("{n} missing"));
            }
        }
    }
    (ok, parts.join("; "))
}

fn bpst_errors() -> Result<[(f64, f64); 2], String> {
    let params = InstantonParams::standard(0.5).map_err(err)?;
    let mut out = [(0.0, 0.0); 2];
    for (k, n) in [64usize, 128].into_iter().enumerate() {
        let chart = build_lattice(&ChartSpec::open(n, 4.0)).map_err(err)?;
        let s = bpst_summary_streamed(&params, &chart).map_err(err)?;
        out[k] = (
            (s.energy / ENERGY_QUANTUM - 1.0).abs(),
            (s.self_dual_sq / s.energy).sqrt(),
        );
    }
    Ok(out)
}

fn c1_chern_weil(bp: &Result<[(f64, f64); 2], String>) -> Outcome {
    let [(e64, _), (e128, _)] = bp.clone()?;
    let ratio = e64 / e128;
    let ok = e64 <= 0.03 && ratio >= 3.0;
    Ok((
        ok,
        format!("|E/8pi^2-1| N=64 {e64:.3e} (<= 0.03), N=128 {e128:.3e}, shrink {ratio:.2}x (>= 3)"),
    ))
}

fn c2_asd_fidelity(bp: &Result<[(f64, f64); 2], String>) -> Outcome {
    let [(_, r64), (_, r128)] = bp.clone()?;
    let ok = r64 <= 1e-2 && r128 <= 3e-3;
    Ok((
        ok,
        format!("|F+|/|F| N=64 {r64:.3e} (<= 1e-2), N=128 {r128:.3e} (<= 3e-3)"),
    ))
}

fn c3_adjointness() -> Outcome {
    let chart = Arc::new(build_lattice(&ChartSpec::<f64>::torus(6, 3.0)).map_err(err)?);
    let b = Bundle::trivial(chart);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let a = ConnectionField::random(&b, &mut rng);
        let x = ConnectionField::random(&b, &mut rng);
        let v = SelfDualField::random(&b, &mut rng);
        let op = OperatorHandle::new(&a).map_err(err)?;
        let lhs = op.d_plus(&x).map_err(err)?.inner(&v).map_err(err)?;
        let rhs = x.inner(&op.d_plus_adjoint(&v).map_err(err)?).map_err(err)?;
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()));
    }
    Ok((
        worst <= 1e-10,
        format!("max relative mismatch over 100 triples {worst:.3e} (<= 1e-10)"),
    ))
}

fn spectra_match(a: &ConnectionField<f64>) -> Result<f64, String> {
    let sd = spectrum(a, 12, &SpectrumOptions::default()).map_err(err)?;
    let dense = dense_spectrum(a).map_err(err)?;
    // Exact zeros have no relative scale; measure them against the operator norm.
    let floor = 1e-8 * dense[dense.len() - 1];
    Ok(sd
        .eigenvalues
        .iter()
        .zip(&dense)
        .map(|(x, y)| (x - y).abs() / y.abs().max(floor))
        .fold(0.0, f64::max))
}

fn c4_oracle_spectrum() -> Outcome {
    let family = SpliceFamily::new(4, TORUS_LENGTH, vec![0.04]);
    let bg = family.background().map_err(err)?;
    let spliced = splice(&family.gluing_data(&bg, 0.04)).map_err(err)?;
    let flat = spectra_match(&bg)?;
    let sp = spectra_match(&spliced)?;
    let ok = flat <= 1e-6 && sp <= 1e-6;
    Ok((
        ok,
        format!("lowest 12 vs dense at N=4: flat {flat:.3e}, spliced {sp:.3e} (<= 1e-6 relative)"),
    ))
}

fn c5_cutoff() -> Outcome {
    let rep = cutoff_estimate_experiment(&[8.0, 32.0, 128.0], &[1e-2, 1e-4], 2.0).map_err(err)?;
    Ok(report_detail(
        &rep,
        &[
            "dL4_spread",
            "d2L2_spread",
            "dL2sharp_spread",
            "dL2_spread",
            "d2L43_spread",
        ],
    ))
}

fn c6_chebyshev() -> Outcome {
    let rep = chebyshev_experiment(10, &[2.0, 5.0, 10.0], 32, 4.0, 6).map_err(err)?;
    Ok(report_detail(&rep, &["max_tail_times_R2"]))
}

fn c7_scaling() -> Outcome {
    let family = SpliceFamily::new(32, TORUS_LENGTH, FAMILY_LAMBDAS.to_vec());
    let rep = fplus_scaling_experiment(&family, SharpOptions::default(), ScalingThresholds::default()).map_err(err)?;
    let (ok, detail) = report_detail(
        &rep,
        &["slope_L2", "slope_sharp2", "ratio_spread_L2", "ratio_spread_sharp2"],
    );
    let l2 = rep.column("L2");
    Ok((ok, format!("{detail}; |F+|_L2 series {}", list(&l2))))
}

fn c8_to_c10() -> Result<[Outcome; 3], String> {
    let family = SpliceFamily::new(16, TORUS_LENGTH, FAMILY_LAMBDAS.to_vec());
    let runs = run_family(&family, &GlueOptions::default()).map_err(err)?;
    let cluster = cluster_report_from_runs(&runs, ClusterThresholds::default()).map_err(err)?;
    let picard = picard_report(&runs, SharpOptions::default(), PicardThresholds::default()).map_err(err)?;
    let limit = uhlenbeck_report(&family, &runs, UhlenbeckThresholds::default()).map_err(err)?;
    let c8 = {
        let (ok, d) = report_detail(&cluster, &["count_below_mu", "C1_spread", "C2_spread"]);
        let mu9 = cluster.column("mu_n");
        let mu10 = cluster.column("mu_n+1");
        Ok((ok, format!("{d}; mu9 {}; mu10 {}", list(&mu9), list(&mu10))))
    };
    let c9 = Ok(report_detail(
        &picard,
        &["nontrivial", "converged", "contraction", "residual_ratio", "xi_ratio"],
    ));
    let c10 = {
        let (ok, d) = report_detail(&limit, &["annulus_decreasing", "ball_fraction"]);
        let ann = limit.column("annulus_L2");
        Ok((ok, format!("{d}; annulus L2 {}", list(&ann))))
    };
    Ok([c8, c9, c10])
}

fn c11_gauge() -> Outcome {
    let rep = gauge_twin_experiment(
        4,
        0.02,
        32,
        11,
        &SpectrumOptions::default(),
        &PicardOptions::default(),
        1e-8,
    )
    .map_err(err)?;
    Ok(report_detail(&rep, &["max_relative_difference"]))
}

/// Independent scan of the box for the wall conditions.
fn brute_force(q: &IntersectionForm, w: &[i64], kappa: Kappa, b: i64) -> Vec<Vec<i64>> {
    let r = q.rank();
    let side = (2 * b + 1) as usize;
    let mut out = Vec::new();
    for code in 0..side.pow(r as u32) {
        let mut c = code;
        let xi: Vec<i64> = (0..r)
            .map(|_| {
                let v = (c % side) as i64 - b;
                c /= side;
                v
            })
            .collect();
        if xi.iter().zip(w).any(|(x, wi)| (x - wi) % 2 != 0) {
            continue;
        }
        let sq = Kappa::from_integer(q.square(&xi));
        if sq < Kappa::from_integer(0) && sq >= -kappa * 4 {
            out.push(xi);
        }
    }
    out.sort();
    out
}

fn c12_walls() -> Outcome {
    let q = IntersectionForm::diagonal(&[1, -1], 0).map_err(err)?;
    let walls = enumerate_walls(&q, &[1, 0], Kappa::new(3, 4), 5).map_err(err)?;
    let classes: Vec<Vec<i64>> = walls.iter().map(|w| w.xi.clone()).collect();
    let example_ok = classes == vec![vec![-1, -2], vec![-1, 2], vec![1, -2], vec![1, 2]]
        && walls
            .iter()
            .all(|w| w.xi_sq == -3 && w.level == 0 && w.index == 1 && w.dims == Some((2, 1)));
    let mut cases = 0;
    let mut mismatches = 0;
    for rank in 1..=4usize {
        for diag_code in 0..3usize.pow(rank as u32) {
            // Diagonal entries drawn from {1, -1, -2}.
            let entries: Vec<i64> = (0..rank)
                .map(|i| [1, -1, -2][(diag_code / 3usize.pow(i as u32)) % 3])
                .collect();
            let form = IntersectionForm::diagonal(&entries, 0).map_err(err)?;
            for wcode in 0..(1usize << rank) {
                let w: Vec<i64> = (0..rank).map(|i| ((wcode >> i) & 1) as i64).collect();
                for kq in 1..=16 {
                    let kappa = Kappa::new(kq, 4);
                    if check_parity(&form, &w, kappa).is_err() {
                        continue;
                    }
                    for b in 0..=5 {
                        let got: Vec<Vec<i64>> = enumerate_walls(&form, &w, kappa, b)
                            .map_err(err)?
                            .into_iter()
                            .map(|x| x.xi)
                            .collect();
                        cases += 1;
                        if got != brute_force(&form, &w, kappa, b) {
                            mismatches += 1;
                        }
                    }
                }
            }
        }
    }
    Ok((
        example_ok && mismatches == 0,
        format!("diag(1,-1) example {classes:?}; oracle mismatches {mismatches} of {cases} cases"),
    ))
}

fn c13_perturbation() -> Outcome {
    let rep = perturbation_experiment(
        4,
        TORUS_LENGTH,
        0.3,
        &[0.005, 0.01, 0.02],
        12,
        7,
        &SpectrumOptions::default(),
        2.0,
    )
    .map_err(err)?;
    let (ok, d) = report_detail(&rep, &["bounds_hold", "C_spread"]);
    let c = rep.fit("C").map(|f| f.value).unwrap_or(f64::NAN);
    Ok((ok, format!("{d}; fitted C {c:.4e}")))
}

fn print(k: usize, name: &str, out: &Outcome, secs: f64) -> bool {
    let (ok, detail) = match out {
        Ok((ok, d)) => (*ok, d.clone()),
        Err(e) => (false, format!("error: {e}")),
    };
    let verdict = if ok { "PASS" } else { "FAIL" };
    println!("{verdict} criterion {k:>2} {name}: {detail} ({secs:.1}s)");
    ok
}

fn run(k: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let out = f();
    print(k, name, &out, t.elapsed().as_secs_f64())
}

fn main() -> ExitCode {
    let mut all = true;
    let t = Instant::now();
    let bp = bpst_errors();
    let bp_secs = t.elapsed().as_secs_f64();
    all &= run(1, "chern-weil", || c1_chern_weil(&bp));
    println!("   (criteria 1 and 2 share the BPST runs: {bp_secs:.1}s)");
    all &= run(2, "asd-fidelity", || c2_asd_fidelity(&bp));
    all &= run(3, "adjointness", c3_adjointness);
    all &= run(4, "oracle-spectrum", c4_oracle_spectrum);
    all &= run(5, "cutoff-estimates", c5_cutoff);
    all &= run(6, "chebyshev", c6_chebyshev);
    all &= run(7, "splice-fplus-scaling", c7_scaling);
    let t = Instant::now();
    let family = c8_to_c10();
    let fam_secs = t.elapsed().as_secs_f64();
    let names = ["eigenvalue-cluster", "fixed-point", "uhlenbeck-limit"];
    match family {
        Ok(outs) => {
            for (i, out) in outs.iter().enumerate() {
                all &= print(8 + i, names[i], out, fam_secs);
            }
        }
        Err(e) => {
            for (i, name) in names.iter().enumerate() {
                all &= print(8 + i, name, &Err(e.clone()), fam_secs);
            }
        }
    }
    all &= run(11, "gauge-invariance", c11_gauge);
    all &= run(12, "walls", c12_walls);
    all &= run(13, "eigen-perturbation", c13_perturbation);
    if all {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: some criteria failed");
        ExitCode::FAILURE
    }
}
