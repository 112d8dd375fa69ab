//! Discrete covariant exterior calculus on lattice charts.
//!
//! Every derivative uses the chart's one-dimensional stencil. On open charts
//! the operators act on interior sites only; perturbation fields (`a` in
//! `d_A^+ a`) are read as zero outside the interior, while the background
//! connection is read in the shell as well. The adjoint `d_A^{+,*}` is the
//! literal transpose of `d_A^+` under the quadrature inner products.

use std::sync::Arc;

use rayon::prelude::*;

use crate::algebra::{GroupValue, LieValue};
use crate::bundle::Bundle;
use crate::error::{Error, Result};
use crate::field::{ConnectionField, FormKind, LatticeField, SelfDualField, TensorField, TwoFormField, PAIRS};
use crate::geometry::{LatticeChart, MetricKind, Point, Topology};
use crate::scalar::{c, from_usize, Real};

/// Self-dual coefficients `c_a = (F_{0a} + F_{bc}) / 2` of a 2-form.
#[inline(always)]
pub fn project_self_dual<T: Real>(f: &[LieValue<T>]) -> [LieValue<T>; 3] {
    let h = c::<T>(0.5);
    [(f[0] + f[5]) * h, (f[1] - f[4]) * h, (f[2] + f[3]) * h]
}

/// Anti-self-dual coefficients `(F_{0a} - F_{bc}) / 2`.
#[inline(always)]
pub fn project_anti_self_dual<T: Real>(f: &[LieValue<T>]) -> [LieValue<T>; 3] {
    let h = c::<T>(0.5);
    [(f[0] - f[5]) * h, (f[1] + f[4]) * h, (f[2] - f[3]) * h]
}

/// The 2-form `sum_a c_a omega_a`.
#[inline(always)]
pub fn embed_self_dual_values<T: Real>(v: &[LieValue<T>]) -> [LieValue<T>; 6] {
    [v[0], v[1], v[2], v[2], -v[1], v[0]]
}

/// Upwind stencil mirrored for the far edge of an open chart.
const BACKWARD2: [(isize, f64); 3] = [(0, 1.5), (-1, -2.0), (-2, 0.5)];
const FORWARD2: [(isize, f64); 3] = [(0, -1.5), (1, 2.0), (2, -0.5)];

/// Stencil taps usable at multi-index `m` along `axis`: the chart stencil
/// where it fits, a one-sided second-order stencil near open edges.
fn taps_at<T: Real>(chart: &LatticeChart<T>, m: &[usize; 4], axis: usize) -> &'static [(isize, f64)] {
    let taps = chart.stencil().taps();
    if chart.topology() == Topology::Torus {
        return taps;
    }
    let n = chart.dims()[axis] as isize;
    let i = m[axis] as isize;
    let fits = |t: &[(isize, f64)]| t.iter().all(|&(o, _)| i + o >= 0 && i + o < n);
    if fits(taps) {
        taps
    } else if fits(&FORWARD2) {
        &FORWARD2
    } else {
        &BACKWARD2
    }
}

/// Curvature components at one interior site.
#[inline]
pub(crate) fn curvature_site<T: Real>(
    bundle: &Bundle<T>,
    a: &[LieValue<T>],
    s: usize,
    m: &[usize; 4],
) -> [LieValue<T>; 6] {
    let chart = bundle.chart();
    let taps = chart.stencil().taps();
    let h = chart.spacing();
    let own: [LieValue<T>; 4] = std::array::from_fn(|nu| a[s * 4 + nu]);
    // d[mu][nu] = partial_mu A_nu
    let mut d = [[LieValue::zero(); 4]; 4];
    for mu in 0..4 {
        let inv_h = T::one() / h[mu];
        for &(off, w) in taps {
            let wt = c::<T>(w) * inv_h;
            let vals = if off == 0 {
                own
            } else {
                let n = chart.neighbor(s, m, mu, off).expect("stencil stays on the chart");
                let nb: [LieValue<T>; 4] = std::array::from_fn(|nu| a[n * 4 + nu]);
                bundle.transport_connection(s, mu, off, nb)
            };
            for nu in 0..4 {
                if nu != mu {
                    d[mu][nu] += vals[nu] * wt;
                }
            }
        }
    }
    std::array::from_fn(|p| {
        let (mu, nu) = PAIRS[p];
        d[mu][nu] - d[nu][mu] + own[mu].bracket(own[nu])
    })
}

fn check_connection<T: Real>(a: &ConnectionField<T>) -> Result<()> {
    if a.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter("connection has non-finite entries".into()))
    }
}

/// Curvature `F_{mu nu} = d_mu A_nu - d_nu A_mu + [A_mu, A_nu]`; zero on the
/// boundary shell of open charts.
pub fn curvature<T: Real>(a: &ConnectionField<T>) -> TwoFormField<T> {
    let bundle = a.bundle().clone();
    let chart = bundle.chart();
    let mut out = TwoFormField::zeros(&bundle);
    let src = a.data();
    out.data_mut().par_chunks_mut(6).enumerate().for_each(|(s, o)| {
        let m = chart.multi(s);
        if chart.is_interior_multi(m) {
            o.copy_from_slice(&curvature_site(&bundle, src, s, &m));
        }
    });
    out
}

/// Self-dual part of the curvature, without storing the full 2-form.
pub fn self_dual_curvature<T: Real>(a: &ConnectionField<T>) -> SelfDualField<T> {
    let bundle = a.bundle().clone();
    let chart = bundle.chart();
    let mut out = SelfDualField::zeros(&bundle);
    let src = a.data();
    out.data_mut().par_chunks_mut(3).enumerate().for_each(|(s, o)| {
        let m = chart.multi(s);
        if chart.is_interior_multi(m) {
            o.copy_from_slice(&project_self_dual(&curvature_site(&bundle, src, s, &m)));
        }
    });
    out
}

/// Squared L^2 norms of `F`, `F^+` and `F^-`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvatureSummary<T> {
    pub energy: T,
    pub self_dual_sq: T,
    pub anti_self_dual_sq: T,
}

/// Deterministic parallel sum over sites in fixed-size chunks.
pub(crate) fn chunked_sum<T: Real, F>(sites: usize, f: F) -> T
where
    F: Fn(usize) -> T + Sync,
{
    const CHUNK: usize = 4096;
    let parts: Vec<T> = (0..sites.div_ceil(CHUNK))
        .into_par_iter()
        .map(|k| {
            let lo = k * CHUNK;
            let hi = (lo + CHUNK).min(sites);
            let mut acc = T::zero();
            for s in lo..hi {
                acc += f(s);
            }
            acc
        })
        .collect();
    parts.into_iter().fold(T::zero(), |a, b| a + b)
}

/// L^2 norms of the curvature computed site by site.
pub fn curvature_summary<T: Real>(a: &ConnectionField<T>) -> CurvatureSummary<T> {
    let bundle = a.bundle();
    let chart = bundle.chart();
    let src = a.data();
    let two = c::<T>(2.0);
    let parts: Vec<[T; 2]> = {
        const CHUNK: usize = 4096;
        (0..chart.sites().div_ceil(CHUNK))
            .into_par_iter()
            .map(|k| {
                let lo = k * CHUNK;
                let hi = (lo + CHUNK).min(chart.sites());
                let mut acc = [T::zero(); 2];
                for s in lo..hi {
                    let w = chart.form_weight(s, 2, two);
                    if w == T::zero() {
                        continue;
                    }
                    let m = chart.multi(s);
                    let f = curvature_site(bundle, src, s, &m);
                    let p = project_self_dual(&f);
                    let q = project_anti_self_dual(&f);
                    let sp = p.iter().fold(T::zero(), |a, v| a + v.norm_sq());
                    let sq = q.iter().fold(T::zero(), |a, v| a + v.norm_sq());
                    acc[0] += w * two * sp;
                    acc[1] += w * two * sq;
                }
                acc
            })
            .collect()
    };
    let (sd, asd) = parts
        .iter()
        .fold((T::zero(), T::zero()), |(a, b), p| (a + p[0], b + p[1]));
    CurvatureSummary {
        energy: sd + asd,
        self_dual_sq: sd,
        anti_self_dual_sq: asd,
    }
}

/// Yang-Mills energy `||F_A||^2_{L^2}`.
pub fn energy<T: Real>(a: &ConnectionField<T>) -> T {
    curvature_summary(a).energy
}

/// Orthogonal projection onto self-dual 2-forms.
pub fn self_dual_part<T: Real>(f: &TwoFormField<T>) -> SelfDualField<T> {
    map_sites::<T, _, _, 6, 3>(f, |x| project_self_dual(x))
}

/// Coefficients of the anti-self-dual part in the basis `e^{0a} - e^{bc}`.
pub fn anti_self_dual_part<T: Real>(f: &TwoFormField<T>) -> SelfDualField<T> {
    map_sites::<T, _, _, 6, 3>(f, |x| project_anti_self_dual(x))
}

/// The 2-form represented by self-dual coefficients.
pub fn embed_self_dual<T: Real>(v: &SelfDualField<T>) -> TwoFormField<T> {
    map_sites::<T, _, _, 3, 6>(v, |x| embed_self_dual_values(x))
}

fn map_sites<T: Real, K: FormKind, K2: FormKind, const A: usize, const B: usize>(
    f: &LatticeField<T, K>,
    g: impl Fn(&[LieValue<T>]) -> [LieValue<T>; B] + Sync,
) -> LatticeField<T, K2> {
    debug_assert_eq!(K::COMPONENTS, A);
    debug_assert_eq!(K2::COMPONENTS, B);
    let mut out = LatticeField::<T, K2>::zeros(f.bundle());
    out.data_mut()
        .par_chunks_mut(B)
        .zip(f.data().par_chunks(A))
        .for_each(|(o, x)| o.copy_from_slice(&g(x)));
    out
}

/// `(a ^ b)_{mu nu} = [a_mu, b_nu] - [a_nu, b_mu]`.
pub fn lie_bracket_field<T: Real>(a: &ConnectionField<T>, b: &ConnectionField<T>) -> Result<TwoFormField<T>> {
    a.ensure_same_bundle(b)?;
    let mut out = TwoFormField::zeros(a.bundle());
    out.data_mut()
        .par_chunks_mut(6)
        .zip(a.data().par_chunks(4).zip(b.data().par_chunks(4)))
        .for_each(|(o, (x, y))| {
            for (p, &(mu, nu)) in PAIRS.iter().enumerate() {
                o[p] = x[mu].bracket(y[nu]) - x[nu].bracket(y[mu]);
            }
        });
    Ok(out)
}

/// Quadratic term of the curvature, `[a_mu, a_nu]`, i.e. half of
/// `lie_bracket_field(a, a)`.
pub fn wedge_square<T: Real>(a: &ConnectionField<T>) -> TwoFormField<T> {
    let mut out = TwoFormField::zeros(a.bundle());
    out.data_mut()
        .par_chunks_mut(6)
        .zip(a.data().par_chunks(4))
        .for_each(|(o, x)| {
            for (p, &(mu, nu)) in PAIRS.iter().enumerate() {
                o[p] = x[mu].bracket(x[nu]);
            }
        });
    out
}

/// Self-dual part of `[a_mu, a_nu]`.
pub fn wedge_plus<T: Real>(a: &ConnectionField<T>) -> SelfDualField<T> {
    let mut out = SelfDualField::zeros(a.bundle());
    out.data_mut()
        .par_chunks_mut(3)
        .zip(a.data().par_chunks(4))
        .for_each(|(o, x)| {
            let mut f = [LieValue::zero(); 6];
            for (p, &(mu, nu)) in PAIRS.iter().enumerate() {
                f[p] = x[mu].bracket(x[nu]);
            }
            o.copy_from_slice(&project_self_dual(&f));
        });
    out
}

/// Matrix-free `d_A^+`, its transpose and `Delta_A = d_A^+ d_A^{+,*}` for a
/// fixed connection.
#[derive(Clone, Debug)]
pub struct OperatorHandle<T> {
    connection: ConnectionField<T>,
    /// `2 h^4 / w_1(s)` for interior sites, zero on the shell.
    adjoint_scale: Vec<T>,
}

impl<T: Real> OperatorHandle<T> {
    pub fn new(a: &ConnectionField<T>) -> Result<Self> {
        check_connection(a)?;
        let chart = a.chart();
        let two = c::<T>(2.0);
        let adjoint_scale = (0..chart.sites())
            .map(|s| {
                if !chart.is_interior(s) {
                    return T::zero();
                }
                match chart.metric() {
                    MetricKind::Flat => two,
                    MetricKind::RoundS4 => {
                        let om = chart.conformal_factor(&chart.position(s));
                        two / (om * om)
                    }
                }
            })
            .collect();
        Ok(OperatorHandle {
            connection: a.clone(),
            adjoint_scale,
        })
    }

    pub fn connection(&self) -> &ConnectionField<T> {
        &self.connection
    }

    pub fn bundle(&self) -> &Arc<Bundle<T>> {
        self.connection.bundle()
    }

    pub fn chart(&self) -> &LatticeChart<T> {
        self.connection.chart()
    }

    /// Number of real unknowns of a self-dual field.
    pub fn self_dual_dim(&self) -> usize {
        self.chart().sites() * 9
    }

    fn check<K: FormKind>(&self, f: &LatticeField<T, K>) -> Result<()> {
        if self.bundle().compatible(f.bundle()) {
            Ok(())
        } else {
            Err(Error::ChartMismatch)
        }
    }

    /// `d_A^+ a` into `out` (self-dual, 3 values per site).
    pub fn apply_d_plus(&self, a: &[LieValue<T>], out: &mut [LieValue<T>]) {
        let bundle = self.bundle();
        let chart = bundle.chart();
        let conn = self.connection.data();
        let taps = chart.stencil().taps();
        let h = chart.spacing();
        out.par_chunks_mut(3).enumerate().for_each(|(s, o)| {
            let m = chart.multi(s);
            if !chart.is_interior_multi(m) {
                o.fill(LieValue::zero());
                return;
            }
            let own: [LieValue<T>; 4] = std::array::from_fn(|nu| a[s * 4 + nu]);
            let mut d = [[LieValue::zero(); 4]; 4];
            for mu in 0..4 {
                let inv_h = T::one() / h[mu];
                for &(off, w) in taps {
                    let wt = c::<T>(w) * inv_h;
                    if off == 0 {
                        for nu in 0..4 {
                            if nu != mu {
                                d[mu][nu] += own[nu] * wt;
                            }
                        }
                        continue;
                    }
                    let n = chart.neighbor(s, &m, mu, off).expect("stencil stays on the chart");
                    if !chart.is_interior(n) {
                        continue;
                    }
                    for nu in 0..4 {
                        if nu != mu {
                            d[mu][nu] += bundle.transport(s, mu, off, a[n * 4 + nu]) * wt;
                        }
                    }
                }
            }
            let am = &conn[s * 4..s * 4 + 4];
            let mut f = [LieValue::zero(); 6];
            for (p, &(mu, nu)) in PAIRS.iter().enumerate() {
                f[p] = d[mu][nu] - d[nu][mu] + am[mu].bracket(own[nu]) - am[nu].bracket(own[mu]);
            }
            o.copy_from_slice(&project_self_dual(&f));
        });
    }

    /// Transpose of [`OperatorHandle::apply_d_plus`] under the quadrature
    /// inner products, into `out` (1-form, 4 values per site).
    pub fn apply_d_plus_adjoint(&self, v: &[LieValue<T>], out: &mut [LieValue<T>]) {
        let bundle = self.bundle();
        let chart = bundle.chart();
        let conn = self.connection.data();
        let taps = chart.stencil().taps();
        let h = chart.spacing();
        let half = c::<T>(0.5);
        // Antisymmetric Y_{mu nu} = (1/2) sum_k S[k][p] v_k at a site.
        let y_at = |s: usize| -> [[LieValue<T>; 4]; 4] {
            let e = embed_self_dual_values(&v[s * 3..s * 3 + 3]);
            let mut y = [[LieValue::zero(); 4]; 4];
            for (p, &(mu, nu)) in PAIRS.iter().enumerate() {
                y[mu][nu] = e[p] * half;
                y[nu][mu] = -(e[p] * half);
            }
            y
        };
        out.par_chunks_mut(4).enumerate().for_each(|(n, o)| {
            let scale = self.adjoint_scale[n];
            if scale == T::zero() {
                o.fill(LieValue::zero());
                return;
            }
            let m = chart.multi(n);
            let mut acc = [LieValue::zero(); 4];
            let yn = y_at(n);
            let an = &conn[n * 4..n * 4 + 4];
            for nu in 0..4 {
                for mu in 0..4 {
                    if mu != nu {
                        acc[nu] += yn[mu][nu].bracket(an[mu]);
                    }
                }
            }
            for mu in 0..4 {
                let inv_h = T::one() / h[mu];
                for &(off, w) in taps {
                    let wt = c::<T>(w) * inv_h;
                    let (s, ys) = if off == 0 {
                        (n, yn)
                    } else {
                        let s = chart.neighbor(n, &m, mu, -off).expect("stencil stays on the chart");
                        if !chart.is_interior(s) {
                            continue;
                        }
                        (s, y_at(s))
                    };
                    for nu in 0..4 {
                        if nu != mu {
                            let t = if off == 0 {
                                ys[mu][nu]
                            } else {
                                bundle.transport_t(s, mu, off, ys[mu][nu])
                            };
                            acc[nu] += t * wt;
                        }
                    }
                }
            }
            for nu in 0..4 {
                o[nu] = acc[nu] * scale;
            }
        });
    }

    /// `Delta_A v = d_A^+ d_A^{+,*} v`, using `tmp` as 1-form scratch.
    pub fn apply_laplacian(&self, v: &[LieValue<T>], tmp: &mut [LieValue<T>], out: &mut [LieValue<T>]) {
        self.apply_d_plus_adjoint(v, tmp);
        self.apply_d_plus(tmp, out);
    }

    pub fn d_plus(&self, a: &ConnectionField<T>) -> Result<SelfDualField<T>> {
        self.check(a)?;
        let mut out = SelfDualField::zeros(self.bundle());
        self.apply_d_plus(a.data(), out.data_mut());
        Ok(out)
    }

    pub fn d_plus_adjoint(&self, v: &SelfDualField<T>) -> Result<ConnectionField<T>> {
        self.check(v)?;
        let mut out = ConnectionField::zeros(self.bundle());
        self.apply_d_plus_adjoint(v.data(), out.data_mut());
        Ok(out)
    }

    pub fn laplacian(&self, v: &SelfDualField<T>) -> Result<SelfDualField<T>> {
        self.check(v)?;
        let mut tmp = vec![LieValue::zero(); self.chart().sites() * 4];
        let mut out = SelfDualField::zeros(self.bundle());
        self.apply_laplacian(v.data(), &mut tmp, out.data_mut());
        Ok(out)
    }
}

/// Self-dual part of the covariant exterior derivative of `a`.
pub fn d_plus<T: Real>(conn: &ConnectionField<T>, a: &ConnectionField<T>) -> Result<SelfDualField<T>> {
    conn.ensure_same_bundle(a)?;
    OperatorHandle::new(conn)?.d_plus(a)
}

/// Transpose of [`d_plus`] with respect to the quadrature inner products.
pub fn d_plus_adjoint<T: Real>(conn: &ConnectionField<T>, v: &SelfDualField<T>) -> Result<ConnectionField<T>> {
    conn.ensure_same_bundle(v)?;
    OperatorHandle::new(conn)?.d_plus_adjoint(v)
}

/// `d_A^+ d_A^{+,*} v`.
pub fn laplacian_plus<T: Real>(conn: &ConnectionField<T>, v: &SelfDualField<T>) -> Result<SelfDualField<T>> {
    conn.ensure_same_bundle(v)?;
    OperatorHandle::new(conn)?.laplacian(v)
}

/// An SU(2)-valued function on a chart, expressed in the bundle's frames.
#[derive(Clone, Debug)]
pub struct GaugeField<T> {
    bundle: Arc<Bundle<T>>,
    data: Vec<GroupValue<T>>,
}

impl<T: Real> GaugeField<T> {
    pub fn identity(bundle: &Arc<Bundle<T>>) -> Self {
        GaugeField {
            bundle: bundle.clone(),
            data: vec![GroupValue::identity(); bundle.chart().sites()],
        }
    }

    pub fn constant(bundle: &Arc<Bundle<T>>, u: GroupValue<T>) -> Self {
        GaugeField {
            bundle: bundle.clone(),
            data: vec![u; bundle.chart().sites()],
        }
    }

    /// `exp(X(x))` for a Lie-algebra-valued function `X`.
    pub fn from_fn<F: FnMut(usize, Point<T>) -> GroupValue<T>>(bundle: &Arc<Bundle<T>>, mut f: F) -> Self {
        let chart = bundle.chart();
        GaugeField {
            bundle: bundle.clone(),
            data: (0..chart.sites()).map(|s| f(s, chart.position(s))).collect(),
        }
    }

    pub fn bundle(&self) -> &Arc<Bundle<T>> {
        &self.bundle
    }

    pub fn data(&self) -> &[GroupValue<T>] {
        &self.data
    }

    /// Pointwise product `(u v)(x) = u(x) v(x)`.
    pub fn mul(&self, other: &GaugeField<T>) -> Result<GaugeField<T>> {
        if !self.bundle.compatible(&other.bundle) {
            return Err(Error::ChartMismatch);
        }
        Ok(GaugeField {
            bundle: self.bundle.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| a.mul(b)).collect(),
        })
    }
}

/// `u(A) = u A u^{-1} - (du) u^{-1}` with `du` from the chart stencil
/// (one-sided near open-chart edges).
pub fn gauge_transform<T: Real>(u: &GaugeField<T>, a: &ConnectionField<T>) -> Result<ConnectionField<T>> {
    if !u.bundle.compatible(a.bundle()) {
        return Err(Error::ChartMismatch);
    }
    let bundle = a.bundle().clone();
    let chart = bundle.chart();
    let h = chart.spacing();
    let mut out = ConnectionField::zeros(&bundle);
    let ud = &u.data;
    let src = a.data();
    out.data_mut().par_chunks_mut(4).enumerate().for_each(|(s, o)| {
        let m = chart.multi(s);
        let us = ud[s];
        let usi = us.conj();
        let rot = us.ad_matrix();
        for mu in 0..4 {
            let mut du = GroupValue([T::zero(); 4]);
            let inv_h = T::one() / h[mu];
            for &(off, w) in taps_at(chart, &m, mu) {
                let wt = c::<T>(w) * inv_h;
                let un = if off == 0 {
                    us
                } else {
                    let n = chart.neighbor(s, &m, mu, off).expect("taps stay on the chart");
                    bundle.transport_group(s, mu, off, ud[n])
                };
                du = du.add(&un.scale(wt));
            }
            o[mu] = src[s * 4 + mu].rotate(&rot) - LieValue::from_quaternion_im(&du.mul(&usi));
        }
    });
    Ok(out)
}

/// Applies a constant `Ad(u)` to a self-dual field.
pub fn rotate_field<T: Real, K: FormKind>(u: &GroupValue<T>, f: &LatticeField<T, K>) -> LatticeField<T, K> {
    f.rotated(u, f.bundle())
}

/// `nabla_A f`: components ordered `[mu][component]`, one more form index
/// for conformal weighting. Zero on the boundary shell.
pub fn covariant_derivative<T: Real>(conn: &ConnectionField<T>, f: &TensorField<T>) -> Result<TensorField<T>> {
    if !conn.bundle().compatible(f.bundle()) {
        return Err(Error::ChartMismatch);
    }
    let bundle = conn.bundle().clone();
    let chart = bundle.chart();
    let k = f.components();
    let h = chart.spacing();
    let taps = chart.stencil().taps();
    let mut out = TensorField::zeros(&bundle, 4 * k, f.degree() + 1, f.norm_factor());
    let src = f.data();
    let a = conn.data();
    out.data_mut().par_chunks_mut(4 * k).enumerate().for_each(|(s, o)| {
        let m = chart.multi(s);
        if !chart.is_interior_multi(m) {
            return;
        }
        for mu in 0..4 {
            let inv_h = T::one() / h[mu];
            let am = a[s * 4 + mu];
            for j in 0..k {
                let mut acc = am.bracket(src[s * k + j]);
                for &(off, w) in taps {
                    let wt = c::<T>(w) * inv_h;
                    let v = if off == 0 {
                        src[s * k + j]
                    } else {
                        let n = chart.neighbor(s, &m, mu, off).expect("stencil stays on the chart");
                        bundle.transport(s, mu, off, src[n * k + j])
                    };
                    acc += v * wt;
                }
                o[mu * k + j] = acc;
            }
        }
    });
    Ok(out)
}

/// Number of midpoint nodes per ray in [`radial_gauge_oneform`].
pub const RADIAL_NODES: usize = 64;

/// Multilinear interpolation of a 2-form at a point of an open chart,
/// contracted with `d`: returns `d^mu F_{mu nu}(y)`.
fn contracted_interp<T: Real>(
    chart: &LatticeChart<T>,
    f: &[LieValue<T>],
    y: &Point<T>,
    d: &Point<T>,
) -> [LieValue<T>; 4] {
    let n = chart.dims();
    let h = chart.spacing();
    let lo = chart.lower();
    let mut base = [0usize; 4];
    let mut frac = [T::zero(); 4];
    for mu in 0..4 {
        let u = (y[mu] - lo[mu]) / h[mu] - c::<T>(0.5);
        let maxi = from_usize::<T>(n[mu] - 2);
        let u = u.max(T::zero()).min(maxi);
        let i = u.floor().to_usize().unwrap_or(0).min(n[mu] - 2);
        base[mu] = i;
        frac[mu] = u - from_usize::<T>(i);
    }
    let strides = chart.strides();
    let mut g = [LieValue::zero(); 6];
    for corner in 0..16usize {
        let mut w = T::one();
        let mut idx = 0usize;
        for mu in 0..4 {
            let bit = (corner >> (3 - mu)) & 1;
            w *= if bit == 1 { frac[mu] } else { T::one() - frac[mu] };
            idx += (base[mu] + bit) * strides[mu];
        }
        if w == T::zero() {
            continue;
        }
        for p in 0..6 {
            g[p] += f[idx * 6 + p] * w;
        }
    }
    let mut out = [LieValue::zero(); 4];
    for (p, &(mu, nu)) in PAIRS.iter().enumerate() {
        out[nu] += g[p] * d[mu];
        out[mu] -= g[p] * d[nu];
    }
    out
}

/// Connection in radial gauge about `x0` with the given curvature:
/// `a_nu(x) = int_0^1 t (x - x0)^mu F_{mu nu}(x0 + t (x - x0)) dt`, by the
/// midpoint rule on [`RADIAL_NODES`] nodes with multilinear interpolation.
pub fn radial_gauge_oneform<T: Real>(f: &TwoFormField<T>, x0: &Point<T>) -> Result<ConnectionField<T>> {
    let bundle = f.bundle().clone();
    let chart = bundle.chart();
    if chart.topology() != Topology::OpenChart {
        return Err(Error::Unsupported("radial gauge needs an open chart"));
    }
    if !bundle.is_trivial() {
        return Err(Error::Unsupported("radial gauge needs a single trivialization"));
    }
    let lo = chart.lower();
    let h = chart.spacing();
    let shell = from_usize::<T>(chart.shell());
    for mu in 0..4 {
        let a = lo[mu] + shell * h[mu];
        let b = lo[mu] + chart.extent()[mu] - shell * h[mu];
        if !(x0[mu] > a && x0[mu] < b) {
            return Err(Error::OutsideChart(x0.map(crate::scalar::f64_of)));
        }
    }
    let mut out = ConnectionField::zeros(&bundle);
    let fd = f.data();
    let inv_nodes = T::one() / from_usize::<T>(RADIAL_NODES);
    out.data_mut().par_chunks_mut(4).enumerate().for_each(|(s, o)| {
        let m = chart.multi(s);
        if !chart.is_interior_multi(m) {
            return;
        }
        let x = chart.position_of(m);
        let d: Point<T> = std::array::from_fn(|mu| x[mu] - x0[mu]);
        let mut acc = [LieValue::zero(); 4];
        for k in 0..RADIAL_NODES {
            let t = (from_usize::<T>(k) + c(0.5)) * inv_nodes;
            let y: Point<T> = std::array::from_fn(|mu| x0[mu] + t * d[mu]);
            let g = contracted_interp(chart, fd, &y, &d);
            for nu in 0..4 {
                acc[nu] += g[nu] * (t * inv_nodes);
            }
        }
        o.copy_from_slice(&acc);
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_lattice, ChartSpec, Stencil};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn torus(n: usize) -> Arc<Bundle<f64>> {
        Bundle::trivial(Arc::new(build_lattice(&ChartSpec::torus(n, 1.0)).unwrap()))
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn zero_connection_is_flat() {
        let b = torus(4);
        let a = ConnectionField::zeros(&b);
        assert_eq!(curvature(&a).max_abs(), 0.0);
    }

    #[test]
    fn constant_abelian_connection_is_flat() {
        let b = torus(4);
        let a = ConnectionField::from_fn(&b, |_, _| {
            (0..4)
                .map(|mu| LieValue::new(0.3 * (mu as f64 + 1.0), 0.0, 0.0))
                .collect()
        });
        assert!(curvature(&a).max_abs() < 1e-14);
    }

    #[test]
    fn self_dual_basis_round_trip_and_split() {
        let b = torus(4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = SelfDualField::random(&b, &mut rng);
        let back = self_dual_part(&embed_self_dual(&v));
        assert!(back.sub(&v).unwrap().max_abs() < 1e-15);
        let f = TwoFormField::random(&b, &mut rng);
        let p = self_dual_part(&f);
        let q = anti_self_dual_part(&f);
        let total = f.norm_l2().powi(2);
        let split = p.norm_l2().powi(2) + q.norm_l2().powi(2);
        assert!(rel(total, split) < 1e-12);
        // Anti-self-dual forms project to zero.
        let asd = TwoFormField::from_fn(&b, |_, _| {
            let x = LieValue::new(1.0, 0.0, 0.0);
            vec![
                x,
                LieValue::zero(),
                LieValue::zero(),
                LieValue::zero(),
                LieValue::zero(),
                -x,
            ]
        });
        assert!(self_dual_part(&asd).max_abs() < 1e-15);
    }

    #[test]
    fn wedge_of_basis_forms() {
        let b = torus(4);
        let a = ConnectionField::from_fn(&b, |_, _| {
            vec![LieValue::basis(0), LieValue::zero(), LieValue::zero(), LieValue::zero()]
        });
        let bb = ConnectionField::from_fn(&b, |_, _| {
            vec![LieValue::zero(), LieValue::basis(1), LieValue::zero(), LieValue::zero()]
        });
        let w = lie_bracket_field(&a, &bb).unwrap();
        for s in 0..b.chart().sites() {
            assert_eq!(w.get(s, 0), LieValue::basis(2));
            for p in 1..6 {
                assert_eq!(w.get(s, p), LieValue::zero());
            }
        }
    }

    #[test]
    fn curvature_expansion_identity() {
        for stencil in [Stencil::Central2, Stencil::Central4, Stencil::Upwind2] {
            let chart = build_lattice(&ChartSpec::torus(6, 1.0).with_stencil(stencil)).unwrap();
            let b = Bundle::trivial(Arc::new(chart));
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let a0 = ConnectionField::random(&b, &mut rng);
            let a = ConnectionField::random(&b, &mut rng);
            let lhs = self_dual_curvature(&a0.add(&a).unwrap());
            let mut rhs = self_dual_curvature(&a0);
            rhs.axpy(1.0, &d_plus(&a0, &a).unwrap()).unwrap();
            rhs.axpy(1.0, &wedge_plus(&a)).unwrap();
            assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-11 * lhs.max_abs());
        }
    }

    #[test]
    fn adjoint_is_transpose_on_torus_and_open_charts() {
        let specs = [
            ChartSpec::torus(6, 1.0),
            ChartSpec::open(10, 2.0),
            ChartSpec::open(10, 2.0).with_metric(MetricKind::RoundS4),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for spec in specs {
            let b = Bundle::trivial(Arc::new(build_lattice(&spec).unwrap()));
            let conn = ConnectionField::random(&b, &mut rng);
            let op = OperatorHandle::new(&conn).unwrap();
            let a = ConnectionField::random(&b, &mut rng);
            let v = SelfDualField::random(&b, &mut rng);
            let lhs = op.d_plus(&a).unwrap().inner(&v).unwrap();
            let rhs = a.inner(&op.d_plus_adjoint(&v).unwrap()).unwrap();
            assert!(rel(lhs, rhs) < 1e-12, "{lhs} {rhs}");
        }
    }

    #[test]
    fn flat_laplacian_kernel_contains_constants() {
        let b = torus(6);
        let zero = ConnectionField::zeros(&b);
        let v = SelfDualField::from_fn(&b, |_, _| {
            vec![
                LieValue::new(1.0, 2.0, 3.0),
                LieValue::new(-1.0, 0.5, 0.0),
                LieValue::new(0.0, 0.0, 1.0),
            ]
        });
        assert!(d_plus_adjoint(&zero, &v).unwrap().max_abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = SelfDualField::random(&b, &mut rng);
        let lw = laplacian_plus(&zero, &w).unwrap();
        assert!(w.inner(&lw).unwrap() >= 0.0);
    }

    #[test]
    fn constant_gauge_rotation_is_exactly_covariant() {
        let b = torus(6);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = ConnectionField::random(&b, &mut rng).scaled(0.3);
        let u = GroupValue::random(&mut rng);
        let ua = gauge_transform(&GaugeField::constant(&b, u), &a).unwrap();
        let f = curvature(&a);
        let g = curvature(&ua);
        let expect = rotate_field(&u, &f);
        assert!(g.sub(&expect).unwrap().max_abs() < 1e-12);
        let unchanged = gauge_transform(&GaugeField::identity(&b), &a).unwrap();
        assert!(unchanged.sub(&a).unwrap().max_abs() == 0.0);
        let zero = gauge_transform(&GaugeField::constant(&b, u), &ConnectionField::zeros(&b)).unwrap();
        assert!(zero.max_abs() < 1e-14);
    }

    #[test]
    fn smooth_gauge_transform_preserves_curvature_norm() {
        // Smooth u on a fine torus: ||F(u(A))|| matches ||F(A)|| up to stencil error.
        let b = torus(16);
        let two_pi = std::f64::consts::TAU;
        let a = ConnectionField::from_fn(&b, |_, x| {
            (0..4)
                .map(|mu| {
                    LieValue::new(
                        (two_pi * x[(mu + 1) % 4]).sin(),
                        0.5 * (two_pi * x[(mu + 2) % 4]).cos(),
                        0.2,
                    )
                })
                .collect()
        });
        let u = GaugeField::from_fn(&b, |_, x| {
            GroupValue::exp(LieValue::new(
                (two_pi * x[0]).sin(),
                (two_pi * x[1]).cos(),
                0.3 * (two_pi * x[2]).sin(),
            ))
        });
        let e0 = energy(&a);
        let e1 = energy(&gauge_transform(&u, &a).unwrap());
        assert!(rel(e0, e1) < 0.05, "{e0} {e1}");
    }

    #[test]
    fn gauge_transform_composes() {
        let b = torus(6);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = ConnectionField::random(&b, &mut rng).scaled(0.2);
        let u = GaugeField::constant(&b, GroupValue::random(&mut rng));
        let v = GaugeField::constant(&b, GroupValue::random(&mut rng));
        let lhs = gauge_transform(&u.mul(&v).unwrap(), &a).unwrap();
        let rhs = gauge_transform(&u, &gauge_transform(&v, &a).unwrap()).unwrap();
        assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn covariant_derivative_of_constant_is_zero() {
        let b = torus(4);
        let a = ConnectionField::zeros(&b);
        let v = SelfDualField::from_fn(&b, |_, _| vec![LieValue::new(1.0, 2.0, 3.0); 3]);
        let d = covariant_derivative(&a, &TensorField::from_form(&v)).unwrap();
        assert!(d.data().iter().all(|x| x.norm() < 1e-12));
    }

    #[test]
    fn radial_gauge_contracts_to_zero() {
        let chart = build_lattice(&ChartSpec::open(12, 2.0)).unwrap();
        let b = Bundle::trivial(Arc::new(chart));
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = TwoFormField::random(&b, &mut rng);
        let x0 = [0.1, -0.2, 0.0, 0.05];
        let a = radial_gauge_oneform(&f, &x0).unwrap();
        let amax: f64 = a.max_abs();
        for s in 0..b.chart().sites() {
            let x = b.chart().position(s);
            let mut contr = LieValue::zero();
            for mu in 0..4 {
                contr += a.get(s, mu) * (x[mu] - x0[mu]);
            }
            assert!(contr.norm() <= 1e-12 * amax.max(1.0));
        }
        let zero = radial_gauge_oneform(&TwoFormField::zeros(&b), &x0).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
        assert!(radial_gauge_oneform(&f, &[1.9, 0.0, 0.0, 0.0]).is_err());
    }
}
