//! Fixed-point solution of the extended anti-self-dual equation, the gluing
//! map and the obstruction section.
//!
//! With `P = d_A^{+,*} G_{A,mu}` and `q(xi) = (P xi ∧ P xi)^+`, the iteration
//! `xi <- -F_A^+ - q(xi)` has fixed points with `a = P xi` solving
//! `Pi^perp F^+(A + a) = 0`.

use crate::calculus::{self_dual_curvature, wedge_plus, OperatorHandle};
use crate::error::{Error, Result};
use crate::field::{ConnectionField, SelfDualField};
use crate::norms::{lp_norm, sharp_norm, Exponent, Region, SharpOptions, SharpVariant};
use crate::scalar::{f64_of, Real};
use crate::spectral::{greens, project_high, spectrum, FlatSymbol, SpectralData, SpectrumOptions};
use crate::splice::{splice, GluingData};

/// `||f||_{sharp} + ||f||_{L^2}` over the whole chart.
pub fn sharp2_norm<T: Real>(f: &SelfDualField<T>, opts: SharpOptions) -> Result<f64> {
    let s = f64_of(sharp_norm(f, SharpVariant::Sharp, &Region::Whole, opts)?);
    Ok(s + f64_of(f.norm_l2()))
}

/// Controls of [`picard_solve`].
#[derive(Clone, Debug)]
pub struct PicardOptions {
    /// Stop when `||xi_{k+1} - xi_k||_{sharp,2} <= tol ||F_A^+||_{sharp,2}`.
    pub tol: f64,
    pub max_iter: usize,
    /// Relative residual of the inner Green's solves.
    pub green_tol: f64,
    pub sharp: SharpOptions,
}

impl Default for PicardOptions {
    fn default() -> Self {
        PicardOptions {
            tol: 1e-8,
            max_iter: 100,
            green_tol: 1e-11,
            sharp: SharpOptions::default(),
        }
    }
}

/// Outcome of [`picard_solve`].
#[derive(Clone, Debug)]
pub struct SolveResult<T> {
    pub xi: SelfDualField<T>,
    /// `v = G_{A,mu} xi`.
    pub v: SelfDualField<T>,
    /// `a = d_A^{+,*} v`.
    pub a: ConnectionField<T>,
    /// `||xi_{k+1} - xi_k||_{sharp,2}` per iterate.
    pub history: Vec<f64>,
    /// `<F^+(A + a), eta_i>` for the eigenvectors below `mu`.
    pub obstruction: Vec<f64>,
    pub converged: bool,
    /// `||F_A^+||_{sharp,2}` of the input connection.
    pub fplus_sharp2: f64,
    /// `||F_A^+||_{L^2}` of the input connection.
    pub fplus_l2: f64,
    /// `||Pi^perp F^+(A + a)||_{L^2}`.
    pub extended_residual: f64,
    /// `||F^+(A + a)||_{L^2}`.
    pub solved_fplus_l2: f64,
}

impl<T: Real> SolveResult<T> {
    /// `A + a`.
    pub fn solved(&self, base: &ConnectionField<T>) -> Result<ConnectionField<T>> {
        base.add(&self.a)
    }

    /// Euclidean length of the obstruction vector.
    pub fn obstruction_norm(&self) -> f64 {
        self.obstruction.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Ratios of successive history entries after the first.
    pub fn contraction_factors(&self) -> Vec<f64> {
        self.history
            .windows(2)
            .skip(1)
            .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 })
            .collect()
    }
}

/// `P_{A,mu} xi` and `G_{A,mu} xi` together.
fn partial<T: Real>(
    sd: &SpectralData<T>,
    a: &ConnectionField<T>,
    op: &OperatorHandle<T>,
    xi: &SelfDualField<T>,
    tol: f64,
) -> Result<(SelfDualField<T>, ConnectionField<T>)> {
    let v = greens(sd, a, xi, tol)?;
    let p = op.d_plus_adjoint(&v)?;
    Ok((v, p))
}

/// `q(xi) = (P xi ∧ P xi)^+`.
pub fn quadratic_term<T: Real>(
    sd: &SpectralData<T>,
    a: &ConnectionField<T>,
    xi: &SelfDualField<T>,
    tol: f64,
) -> Result<SelfDualField<T>> {
    let op = OperatorHandle::new(a)?;
    let (_, p) = partial(sd, a, &op, xi, tol)?;
    Ok(wedge_plus(&p))
}

/// Coefficients `<F^+(A + d_A^{+,*} v), eta_i>` for `mu_i < mu`.
pub fn obstruction<T: Real>(a: &ConnectionField<T>, sd: &SpectralData<T>, v: &SelfDualField<T>) -> Result<Vec<f64>> {
    sd.check(a)?;
    let da = OperatorHandle::new(a)?.d_plus_adjoint(v)?;
    let fp = self_dual_curvature(&a.add(&da)?);
    sd.low_vectors().iter().map(|eta| fp.inner(eta).map(f64_of)).collect()
}

/// Picard iteration `xi_{k+1} = -F_A^+ - (P xi_k ∧ P xi_k)^+` from `xi_0 = 0`.
/// Fails with the residual history when the step grows three times in a row.
pub fn picard_solve<T: Real>(
    a: &ConnectionField<T>,
    sd: &SpectralData<T>,
    opts: &PicardOptions,
) -> Result<SolveResult<T>> {
    sd.check(a)?;
    let op = OperatorHandle::new(a)?;
    let fp = self_dual_curvature(a);
    let fplus_sharp2 = sharp2_norm(&fp, opts.sharp)?;
    let fplus_l2 = f64_of(fp.norm_l2());
    let neg_fp = fp.scaled(-T::one());
    let mut xi = SelfDualField::zeros(a.bundle());
    let mut history = Vec::new();
    let mut growth = 0;
    let mut converged = fplus_sharp2 == 0.0;
    let mut last = (SelfDualField::zeros(a.bundle()), ConnectionField::zeros(a.bundle()));
    if !converged {
        for _ in 0..opts.max_iter {
            let (v, p) = partial(sd, a, &op, &xi, opts.green_tol)?;
            let next = neg_fp.sub(&wedge_plus(&p))?;
            let step = sharp2_norm(&next.sub(&xi)?, opts.sharp)?;
            if let Some(&prev) = history.last() {
                growth = if step > prev { growth + 1 } else { 0 };
            }
            history.push(step);
            xi = next;
            last = (v, p);
            if growth >= 3 || !step.is_finite() {
                return Err(Error::Diverged(history));
            }
            if step <= opts.tol * fplus_sharp2 {
                converged = true;
                break;
            }
        }
    }
    // Final potential from the last iterate.
    if converged && fplus_sharp2 > 0.0 {
        last = partial(sd, a, &op, &xi, opts.green_tol)?;
    }
    let (v, da) = last;
    let solved = a.add(&da)?;
    let fp_solved = self_dual_curvature(&solved);
    let extended_residual = f64_of(project_high(sd, &fp_solved)?.norm_l2());
    let obstruction = sd
        .low_vectors()
        .iter()
        .map(|eta| fp_solved.inner(eta).map(f64_of))
        .collect::<Result<Vec<_>>>()?;
    Ok(SolveResult {
        xi,
        v,
        a: da,
        history,
        obstruction,
        converged,
        fplus_sharp2,
        fplus_l2,
        extended_residual,
        solved_fplus_l2: f64_of(fp_solved.norm_l2()),
    })
}

/// Empirical constant `K` of `||q(x) - q(y)|| <= K (||x|| + ||y||) ||x - y||`
/// in the `sharp,2` norm, maximized over the given pairs.
pub fn fit_quadratic_constant<T: Real>(
    a: &ConnectionField<T>,
    sd: &SpectralData<T>,
    pairs: &[(SelfDualField<T>, SelfDualField<T>)],
    opts: &PicardOptions,
) -> Result<f64> {
    let mut k: f64 = 0.0;
    for (x, y) in pairs {
        let qx = quadratic_term(sd, a, x, opts.green_tol)?;
        let qy = quadratic_term(sd, a, y, opts.green_tol)?;
        let num = sharp2_norm(&qx.sub(&qy)?, opts.sharp)?;
        let den = (sharp2_norm(x, opts.sharp)? + sharp2_norm(y, opts.sharp)?) * sharp2_norm(&x.sub(y)?, opts.sharp)?;
        if den > 0.0 {
            k = k.max(num / den);
        }
    }
    Ok(k)
}

/// Least positive eigenvalue `nu_2[A_0]` of the background; exact from the
/// flat symbol when the background vanishes.
pub fn background_gap<T: Real>(a0: &ConnectionField<T>, opts: &SpectrumOptions) -> Result<f64> {
    if a0.bundle().is_trivial() && f64_of(a0.max_abs()) == 0.0 {
        return Ok(FlatSymbol::new(a0.bundle().chart_arc())?.gap());
    }
    let sd = spectrum(
        a0,
        12,
        &SpectrumOptions {
            mu: Some(f64::MIN_POSITIVE),
            ..opts.clone()
        },
    )?;
    sd.eigenvalues
        .iter()
        .copied()
        .find(|&e| e >= 1e-8 * sd.op_norm)
        .ok_or_else(|| Error::InvalidParameter("background gap above the computed eigenvalues".into()))
}

/// Controls of [`glue`].
#[derive(Clone, Debug)]
pub struct GlueOptions {
    /// Number of eigenpairs computed for the spliced connection.
    pub eigenpairs: usize,
    pub spectrum: SpectrumOptions,
    pub picard: PicardOptions,
    /// Cutoff override; defaults to half the background gap.
    pub mu: Option<f64>,
}

impl Default for GlueOptions {
    fn default() -> Self {
        GlueOptions {
            eigenpairs: 12,
            spectrum: SpectrumOptions::default(),
            picard: PicardOptions::default(),
            mu: None,
        }
    }
}

/// Output of [`glue`].
#[derive(Clone, Debug)]
pub struct GlueOutcome<T> {
    pub spliced: ConnectionField<T>,
    pub glued: ConnectionField<T>,
    pub spectral: SpectralData<T>,
    pub solve: SolveResult<T>,
    /// `||F^+||_{L^2}` of the spliced connection.
    pub splice_fplus_l2: f64,
    /// Background gap used for the cutoff.
    pub nu2_background: f64,
}

/// Splice, compute the low spectrum with `mu = nu_2[A_0] / 2`, solve the
/// extended equation and return `A + a`.
pub fn glue<T: Real>(gd: &GluingData<T>, opts: &GlueOptions) -> Result<GlueOutcome<T>> {
    let spliced = splice(gd)?;
    let nu2_background = background_gap(&gd.background, &opts.spectrum)?;
    let mu = opts.mu.unwrap_or(0.5 * nu2_background);
    let spectral = spectrum(
        &spliced,
        opts.eigenpairs,
        &SpectrumOptions {
            mu: Some(mu),
            ..opts.spectrum.clone()
        },
    )?;
    let solve = picard_solve(&spliced, &spectral, &opts.picard)?;
    let glued = spliced.add(&solve.a)?;
    let splice_fplus_l2 = f64_of(self_dual_curvature(&spliced).norm_l2());
    Ok(GlueOutcome {
        spliced,
        glued,
        spectral,
        solve,
        splice_fplus_l2,
        nu2_background,
    })
}

/// `||a||_{L^4}` helper for perturbation families.
pub fn l4_norm<T: Real>(a: &ConnectionField<T>) -> Result<f64> {
    Ok(f64_of(lp_norm(a, Exponent::L4, &Region::Whole)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::Bundle;
    use crate::geometry::{build_lattice, ChartSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn torus(n: usize, l: f64) -> Arc<Bundle<f64>> {
        Bundle::trivial(Arc::new(build_lattice(&ChartSpec::torus(n, l)).unwrap()))
    }

    #[test]
    fn flat_connection_is_a_fixed_point() {
        let b = torus(4, 4.0);
        let a = ConnectionField::zeros(&b);
        let sd = spectrum(&a, 12, &SpectrumOptions::default()).unwrap();
        let r = picard_solve(&a, &sd, &PicardOptions::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.a.max_abs(), 0.0);
        assert_eq!(r.xi.max_abs(), 0.0);
        assert!(r.obstruction.iter().all(|&c| c == 0.0));
        assert_eq!(r.obstruction.len(), 9);
    }

    #[test]
    fn small_perturbation_solves_the_extended_equation() {
        let b = torus(4, 4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let a = ConnectionField::random(&b, &mut rng).scaled(0.02);
        let sd = spectrum(&a, 12, &SpectrumOptions::default()).unwrap();
        let r = picard_solve(&a, &sd, &PicardOptions::default()).unwrap();
        assert!(r.converged, "{:?}", r.history);
        assert!(
            r.extended_residual <= 1e-6 * r.fplus_l2,
            "{} vs {}",
            r.extended_residual,
            r.fplus_l2
        );
        for f in r.contraction_factors() {
            assert!(f <= 0.5, "{:?}", r.history);
        }
        // Pythagoras between the low and high parts of F^+(A + a).
        let split = (r.obstruction_norm().powi(2) + r.extended_residual.powi(2)).sqrt();
        assert!((split - r.solved_fplus_l2).abs() <= 1e-8 * r.solved_fplus_l2.max(1e-30));
        assert!(sharp2_norm(&r.xi, SharpOptions::default()).unwrap() <= 2.0 * r.fplus_sharp2);
        let chi = obstruction(&a, &sd, &r.v).unwrap();
        for (x, y) in chi.iter().zip(&r.obstruction) {
            assert!((x - y).abs() <= 1e-10 * r.fplus_l2);
        }
    }

    #[test]
    fn large_curvature_is_reported_as_divergence() {
        let b = torus(4, 4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let a = ConnectionField::random(&b, &mut rng).scaled(1.0);
        let sd = spectrum(&a, 12, &SpectrumOptions::default()).unwrap();
        match picard_solve(
            &a,
            &sd,
            &PicardOptions {
                max_iter: 60,
                ..Default::default()
            },
        ) {
            Err(Error::Diverged(h)) => assert!(h.len() >= 4),
            Ok(r) => panic!("{:?} {}", r.history, r.converged),
            Err(e) => panic!("{e}"),
        }
    }
}
