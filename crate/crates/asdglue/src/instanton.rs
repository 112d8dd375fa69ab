//! The charge-one BPST family, centre/scale functionals and tail diagnostics.
//!
//! With `x` the displacement from the centre read as a quaternion, the
//! regular gauge is `A = Im(conj(x) dx) / (|x|^2 + rho^2)` and its curvature
//! density is `|F|^2 = 48 rho^4 / (|x|^2 + rho^2)^4`, integrating to
//! `8 pi^2`. The singular gauge is the gauge transform of the regular one by
//! `xhat = x / |x|`; it decays like `rho^2 / |x|^3`.

use std::sync::Arc;

use rayon::prelude::*;

use crate::algebra::{GroupValue, LieValue};
use crate::bundle::Bundle;
use crate::calculus::curvature_site;
use crate::error::{Error, Result};
use crate::field::ConnectionField;
use crate::geometry::{norm4, Dilation, LatticeChart, Point, Topology};
use crate::scalar::{c, f64_of, from_usize, Real};

/// Continuum ratio of the centre/scale `lambda` to the shape parameter `rho`.
pub const C0: f64 = std::f64::consts::SQRT_2;

/// `8 pi^2`, the energy of a charge-one instanton.
pub const ENERGY_QUANTUM: f64 = 8.0 * std::f64::consts::PI * std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InstantonParams<T> {
    pub center: Point<T>,
    pub rho: T,
    pub orientation: GroupValue<T>,
}

impl<T: Real> InstantonParams<T> {
    pub fn new(center: Point<T>, rho: T, orientation: GroupValue<T>) -> Result<Self> {
        if !(rho > T::zero()) || !rho.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "instanton scale {} must be positive",
                f64_of(rho)
            )));
        }
        if !orientation.is_unit(c(1e-6)) {
            return Err(Error::InvalidParameter("orientation must be a unit quaternion".into()));
        }
        Ok(InstantonParams {
            center,
            rho,
            orientation: orientation.normalized(),
        })
    }

    /// Standard instanton at the origin.
    pub fn standard(rho: T) -> Result<Self> {
        Self::new([T::zero(); 4], rho, GroupValue::identity())
    }
}

/// Regular-gauge components at displacement `x`, in the instanton frame.
#[inline]
pub fn regular_gauge_value<T: Real>(x: &Point<T>, rho: T) -> [LieValue<T>; 4] {
    let r2 = x.iter().fold(T::zero(), |a, &v| a + v * v);
    let inv = T::one() / (r2 + rho * rho);
    let xb = GroupValue::from_point(x).conj();
    std::array::from_fn(|mu| LieValue::from_quaternion_im(&xb.mul(&GroupValue::unit(mu))) * inv)
}

/// Singular-gauge components `u A u^{-1} - (du) u^{-1}` with `u = xhat`,
/// in the instanton frame. Undefined at `x = 0`.
#[inline]
pub fn singular_gauge_value<T: Real>(x: &Point<T>, rho: T) -> [LieValue<T>; 4] {
    let r = norm4(x);
    let inv_r = T::one() / r;
    let u = GroupValue(x.map(|v| v * inv_r));
    let ui = u.conj();
    let reg = regular_gauge_value(x, rho);
    std::array::from_fn(|mu| {
        let du = GroupValue::unit(mu).add(&u.scale(-x[mu] * inv_r)).scale(inv_r);
        u.ad(reg[mu]) - LieValue::from_quaternion_im(&du.mul(&ui))
    })
}

/// Pure-gauge term `u^{-1} du` with `u = xhat`.
#[inline]
pub fn radial_pure_gauge<T: Real>(x: &Point<T>) -> [LieValue<T>; 4] {
    let r = norm4(x);
    let inv_r = T::one() / r;
    let u = GroupValue(x.map(|v| v * inv_r));
    let ui = u.conj();
    std::array::from_fn(|mu| {
        let du = GroupValue::unit(mu).add(&u.scale(-x[mu] * inv_r)).scale(inv_r);
        LieValue::from_quaternion_im(&ui.mul(&du))
    })
}

/// Closed-form curvature density `|F|^2` at distance `r`.
#[inline]
pub fn bpst_density<T: Real>(r: T, rho: T) -> T {
    let d = r * r + rho * rho;
    c::<T>(48.0) * rho.powi(4) / (d * d * d * d)
}

/// Fraction of the energy outside radius `r`.
pub fn bpst_tail_fraction(r: f64, rho: f64) -> f64 {
    let r2 = r * r;
    let p2 = rho * rho;
    // Complement computed directly to avoid cancellation at large r.
    let d = r2 + p2;
    (3.0 * r2 * p2 * p2 + p2 * p2 * p2) / (d * d * d)
}

fn instanton_value<T: Real>(params: &InstantonParams<T>, chart: &LatticeChart<T>, x: &Point<T>) -> [LieValue<T>; 4] {
    let d = chart.displacement(&params.center, x);
    let rot = params.orientation.ad_matrix();
    regular_gauge_value(&d, params.rho).map(|v| v.rotate(&rot))
}

fn check_torus_embedding<T: Real>(chart: &LatticeChart<T>, rho: T) -> Result<()> {
    if chart.topology() == Topology::Torus {
        let lmin = chart.extent().iter().fold(T::infinity(), |a, &b| a.min(b));
        if rho > lmin / c(16.0) {
            return Err(Error::InvalidParameter(format!(
                "rho = {} exceeds extent/16 on the torus",
                f64_of(rho)
            )));
        }
    }
    Ok(())
}

/// Regular-gauge BPST connection with the frame rotated by `Ad(q)`.
pub fn bpst<T: Real>(params: &InstantonParams<T>, bundle: &Arc<Bundle<T>>) -> Result<ConnectionField<T>> {
    let chart = bundle.chart();
    check_torus_embedding(chart, params.rho)?;
    if !bundle.is_trivial() {
        return Err(Error::Unsupported("BPST sampling needs a single trivialization"));
    }
    let mut out = ConnectionField::zeros(bundle);
    out.data_mut().par_chunks_mut(4).enumerate().for_each(|(s, o)| {
        o.copy_from_slice(&instanton_value(params, chart, &chart.position(s)));
    });
    Ok(out)
}

/// Centre and scale of a connection's energy distribution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CenterScale<T> {
    pub center: Point<T>,
    pub scale: T,
    /// `||F||^2 / 8 pi^2`.
    pub charge: T,
}

fn moments<T: Real>(a: &ConnectionField<T>) -> [f64; 6] {
    let bundle = a.bundle();
    let chart = bundle.chart();
    let src = a.data();
    let two = c::<T>(2.0);
    const CHUNK: usize = 4096;
    let parts: Vec<[f64; 6]> = (0..chart.sites().div_ceil(CHUNK))
        .into_par_iter()
        .map(|k| {
            let mut acc = [0.0; 6];
            for s in k * CHUNK..((k + 1) * CHUNK).min(chart.sites()) {
                let w = chart.form_weight(s, 2, two);
                if w == T::zero() {
                    continue;
                }
                let m = chart.multi(s);
                let f = curvature_site(bundle, src, s, &m);
                let dens = f64_of(f.iter().fold(T::zero(), |a, v| a + v.norm_sq()) * w);
                let y = chart.position_of(m).map(f64_of);
                acc[0] += dens;
                for mu in 0..4 {
                    acc[1 + mu] += dens * y[mu];
                }
                acc[5] += dens * y.iter().map(|v| v * v).sum::<f64>();
            }
            acc
        })
        .collect();
    parts.iter().fold([0.0; 6], |mut a, p| {
        for i in 0..6 {
            a[i] += p[i];
        }
        a
    })
}

/// `z = (1/E) int y |F|^2`, `lambda^2 = (1/E) int |y - z|^2 |F|^2` with the
/// energy `E` measured rather than assumed.
pub fn center_scale<T: Real>(a: &ConnectionField<T>) -> Result<CenterScale<T>> {
    if a.chart().topology() != Topology::OpenChart {
        return Err(Error::Unsupported("centre and scale need an open chart"));
    }
    let m = moments(a);
    if !(m[0] > 0.0) {
        return Err(Error::ZeroCurvature);
    }
    let z = [m[1] / m[0], m[2] / m[0], m[3] / m[0], m[4] / m[0]];
    let l2 = m[5] / m[0] - z.iter().map(|v| v * v).sum::<f64>();
    Ok(CenterScale {
        center: z.map(c),
        scale: c(l2.max(0.0).sqrt()),
        charge: c(m[0] / ENERGY_QUANTUM),
    })
}

/// Multilinear interpolation of a connection at an arbitrary point; zero
/// outside the sampled box.
fn interpolate_connection<T: Real>(a: &ConnectionField<T>, x: &Point<T>) -> [LieValue<T>; 4] {
    let chart = a.chart();
    let n = chart.dims();
    let h = chart.spacing();
    let lo = chart.lower();
    let mut base = [0usize; 4];
    let mut frac = [T::zero(); 4];
    for mu in 0..4 {
        let u = (x[mu] - lo[mu]) / h[mu] - c(0.5);
        if !(u >= T::zero()) || u > from_usize::<T>(n[mu] - 1) {
            return [LieValue::zero(); 4];
        }
        let i = u.floor().to_usize().unwrap_or(0).min(n[mu] - 2);
        base[mu] = i;
        frac[mu] = u - from_usize::<T>(i);
    }
    let strides = chart.strides();
    let mut out = [LieValue::zero(); 4];
    for corner in 0..16usize {
        let mut w = T::one();
        let mut idx = 0;
        for mu in 0..4 {
            let bit = (corner >> (3 - mu)) & 1;
            w *= if bit == 1 { frac[mu] } else { T::one() - frac[mu] };
            idx += (base[mu] + bit) * strides[mu];
        }
        if w == T::zero() {
            continue;
        }
        for nu in 0..4 {
            out[nu] += a.get(idx, nu) * w;
        }
    }
    out
}

/// Pullback by the inverse of `d`: `B_mu(y) = lambda A_mu(z + lambda y)`,
/// resampled on the same chart by multilinear interpolation.
pub fn pullback<T: Real>(a: &ConnectionField<T>, d: &Dilation<T>) -> Result<ConnectionField<T>> {
    let bundle = a.bundle();
    if a.chart().topology() != Topology::OpenChart || !bundle.is_trivial() {
        return Err(Error::Unsupported(
            "pullback needs an open chart with one trivialization",
        ));
    }
    let chart = bundle.chart();
    let mut out = ConnectionField::zeros(bundle);
    out.data_mut().par_chunks_mut(4).enumerate().for_each(|(s, o)| {
        let y = chart.position(s);
        let x: Point<T> = std::array::from_fn(|mu| d.center[mu] + d.scale * y[mu]);
        let v = interpolate_connection(a, &x);
        for nu in 0..4 {
            o[nu] = v[nu] * d.scale;
        }
    });
    Ok(out)
}

/// Pulls `A` back so that its centre is the origin and its scale is one.
pub fn recenter<T: Real>(a: &ConnectionField<T>) -> Result<ConnectionField<T>> {
    let cs = center_scale(a)?;
    pullback(a, &Dilation::new(cs.scale, cs.center)?)
}

/// `(1/E) int_{|y - z| >= R lambda} |F|^2` for the centre/scale of `A`.
pub fn chebyshev_tail<T: Real>(a: &ConnectionField<T>, r: T) -> Result<T> {
    let cs = center_scale(a)?;
    let bundle = a.bundle();
    let chart = bundle.chart();
    let radius = f64_of(r * cs.scale);
    if !radius.is_finite() {
        return Ok(T::zero());
    }
    let z = cs.center.map(f64_of);
    let src = a.data();
    let two = c::<T>(2.0);
    let (tail, total) = (0..chart.sites())
        .into_par_iter()
        .fold(
            || (0.0, 0.0),
            |(t, e), s| {
                let w = chart.form_weight(s, 2, two);
                if w == T::zero() {
                    return (t, e);
                }
                let m = chart.multi(s);
                let f = curvature_site(bundle, src, s, &m);
                let dens = f64_of(f.iter().fold(T::zero(), |a, v| a + v.norm_sq()) * w);
                let y = chart.position_of(m).map(f64_of);
                let d = (0..4).map(|mu| (y[mu] - z[mu]).powi(2)).sum::<f64>().sqrt();
                (if d >= radius { t + dens } else { t }, e + dens)
            },
        )
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    if !(total > 0.0) {
        return Err(Error::ZeroCurvature);
    }
    Ok(c(tail / total))
}

/// Sums `f(position, F, weight)` over the interior of an open chart for a
/// connection given in closed form, holding only `2 shell + 1` planes of
/// the connection at a time. The result is independent of thread count.
pub fn stream_curvature<T, G, F, const K: usize>(chart: &LatticeChart<T>, gen: G, f: F) -> Result<[f64; K]>
where
    T: Real,
    G: Fn(&Point<T>) -> [LieValue<T>; 4] + Sync,
    F: Fn(&Point<T>, &[LieValue<T>; 6], T) -> [f64; K] + Sync,
{
    if chart.topology() != Topology::OpenChart {
        return Err(Error::Unsupported("streaming needs an open chart"));
    }
    let shell = chart.shell();
    let n0 = chart.dims()[0];
    let planes = 2 * shell + 1;
    let first = chart.slab(0, planes);
    let plane_sites = first.sites() / planes;
    let mut data = vec![LieValue::zero(); first.sites() * 4];
    let two = c::<T>(2.0);
    let mut total = [0.0; K];
    for i in shell..n0 - shell {
        let slab = Arc::new(chart.slab((i - shell) as isize, planes));
        if i == shell {
            data.par_chunks_mut(4)
                .enumerate()
                .for_each(|(s, o)| o.copy_from_slice(&gen(&slab.position(s))));
        } else {
            data.copy_within(plane_sites * 4.., 0);
            let off = (planes - 1) * plane_sites;
            data[off * 4..].par_chunks_mut(4).enumerate().for_each(|(k, o)| {
                o.copy_from_slice(&gen(&slab.position(off + k)));
            });
        }
        let bundle = Bundle::trivial(slab.clone());
        let start = shell * plane_sites;
        const CHUNK: usize = 4096;
        let parts: Vec<[f64; K]> = (0..plane_sites.div_ceil(CHUNK))
            .into_par_iter()
            .map(|k| {
                let mut acc = [0.0; K];
                for s in start + k * CHUNK..start + ((k + 1) * CHUNK).min(plane_sites) {
                    let w = slab.form_weight(s, 2, two);
                    if w == T::zero() {
                        continue;
                    }
                    let m = slab.multi(s);
                    let fv = curvature_site(&bundle, &data, s, &m);
                    let v = f(&slab.position_of(m), &fv, w);
                    for j in 0..K {
                        acc[j] += v[j];
                    }
                }
                acc
            })
            .collect();
        for p in parts {
            for j in 0..K {
                total[j] += p[j];
            }
        }
    }
    Ok(total)
}

/// Curvature norms of a BPST field together with the quadrature of the
/// closed-form density over the same sites.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BpstSummary {
    pub energy: f64,
    pub self_dual_sq: f64,
    pub exact_energy: f64,
}

/// [`BpstSummary`] computed by streaming, without storing the field.
pub fn bpst_summary_streamed<T: Real>(params: &InstantonParams<T>, chart: &LatticeChart<T>) -> Result<BpstSummary> {
    let rot = params.orientation.ad_matrix();
    let gen = |x: &Point<T>| {
        let d: Point<T> = std::array::from_fn(|mu| x[mu] - params.center[mu]);
        regular_gauge_value(&d, params.rho).map(|v| v.rotate(&rot))
    };
    let rho = params.rho;
    let center = params.center;
    let [e, sd, ex] = stream_curvature(chart, gen, |x, f, w| {
        let p = crate::calculus::project_self_dual(f);
        let sp = p.iter().fold(T::zero(), |a, v| a + v.norm_sq()) * c(2.0);
        let full = f.iter().fold(T::zero(), |a, v| a + v.norm_sq());
        let d: Point<T> = std::array::from_fn(|mu| x[mu] - center[mu]);
        [
            f64_of(full * w),
            f64_of(sp * w),
            f64_of(bpst_density(norm4(&d), rho) * w),
        ]
    })?;
    Ok(BpstSummary {
        energy: e,
        self_dual_sq: sd,
        exact_energy: ex,
    })
}
