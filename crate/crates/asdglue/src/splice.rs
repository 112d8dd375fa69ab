//! Cutoff profiles and the spliced connection.
//!
//! A splice attaches a rescaled instanton at each gluing site. Near the site
//! the field is written in the instanton's own frame (a core patch of radius
//! `sqrt(lambda)`); everywhere else in the background frame. Region by
//! region, at distance `r` from a site:
//!
//! * `r < sqrt(lambda)/4`: the instanton, in regular gauge;
//! * `sqrt(lambda)/4 < r < sqrt(lambda)/2`: instanton cut off towards the
//!   flat connection;
//! * `sqrt(lambda)/2 < r < 2 sqrt(lambda)`: the product connection;
//! * `2 sqrt(lambda) < r < 4 sqrt(lambda)`: the background cut off by `chi`;
//! * `r > 4 sqrt(lambda)`: the background, bit for bit.

use std::sync::Arc;

use rayon::prelude::*;

use crate::algebra::{GroupValue, LieValue};
use crate::bundle::{Bundle, CorePatch};
use crate::calculus::self_dual_curvature;
use crate::error::{Error, Result};
use crate::field::ConnectionField;
use crate::geometry::{norm4, LatticeChart, Point, Topology};
use crate::instanton::{radial_pure_gauge, regular_gauge_value, singular_gauge_value, C0};
use crate::norms::{NormReport, Region, SharpOptions};
use crate::scalar::{c, f64_of, Real};

/// Quintic smooth step: 0 for `t <= 0`, 1 for `t >= 1`, with two vanishing
/// derivatives at both ends.
#[inline]
pub fn smooth_step<T: Real>(t: T) -> T {
    if t <= T::zero() {
        T::zero()
    } else if t >= T::one() {
        T::one()
    } else {
        t * t * t * (t * (t * c(6.0) - c(15.0)) + c(10.0))
    }
}

#[inline]
fn smooth_step_d1(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        30.0 * t * t * (1.0 - t) * (1.0 - t)
    }
}

#[inline]
fn smooth_step_d2(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        60.0 * t * (1.0 - t) * (1.0 - 2.0 * t)
    }
}

/// Radial cutoff functions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CutoffProfile<T> {
    /// 0 on `B(center, radius/2)`, 1 outside `B(center, radius)`.
    Chi { center: Point<T>, radius: T },
    /// 0 for `|x| <= sqrt(lambda)/n`, 1 for `|x| >= sqrt(lambda)/2`, with a
    /// logarithmic ramp in between.
    Beta { n: T, lambda: T, center: Point<T> },
}

pub fn chi_cutoff<T: Real>(center: Point<T>, radius: T) -> Result<CutoffProfile<T>> {
    if !(radius > T::zero()) {
        return Err(Error::InvalidParameter("cutoff radius must be positive".into()));
    }
    Ok(CutoffProfile::Chi { center, radius })
}

pub fn beta_cutoff<T: Real>(n: T, lambda: T) -> Result<CutoffProfile<T>> {
    if !(n > c(4.0)) {
        return Err(Error::InvalidParameter(format!(
            "beta cutoff needs N > 4, got {}",
            f64_of(n)
        )));
    }
    if !(lambda > T::zero()) {
        return Err(Error::InvalidParameter("beta cutoff needs lambda > 0".into()));
    }
    Ok(CutoffProfile::Beta {
        n,
        lambda,
        center: [T::zero(); 4],
    })
}

impl<T: Real> CutoffProfile<T> {
    pub fn center(&self) -> Point<T> {
        match *self {
            CutoffProfile::Chi { center, .. } | CutoffProfile::Beta { center, .. } => center,
        }
    }

    /// Ramp variable `t(r)`: the profile is `smooth_step(t)`.
    fn ramp(&self, r: f64) -> (f64, f64, f64) {
        match *self {
            CutoffProfile::Chi { radius, .. } => {
                let e = f64_of(radius);
                (2.0 * r / e - 1.0, 2.0 / e, 0.0)
            }
            CutoffProfile::Beta { n, lambda, .. } => {
                let ln = f64_of(n).ln();
                let l = ln - 2f64.ln();
                if r <= 0.0 {
                    return (f64::NEG_INFINITY, 0.0, 0.0);
                }
                let t = (ln + (r / f64_of(lambda).sqrt()).ln()) / l;
                (t, 1.0 / (l * r), -1.0 / (l * r * r))
            }
        }
    }

    /// Profile value at radius `r`.
    pub fn radial_value(&self, r: T) -> T {
        match *self {
            CutoffProfile::Chi { radius, .. } => smooth_step(c::<T>(2.0) * r / radius - T::one()),
            CutoffProfile::Beta { .. } => c(smooth_step(self.ramp(f64_of(r)).0)),
        }
    }

    /// `(f, f', f'')` at radius `r`.
    pub fn radial_derivatives(&self, r: f64) -> (f64, f64, f64) {
        let (t, t1, t2) = self.ramp(r);
        let k1 = smooth_step_d1(t);
        let k2 = smooth_step_d2(t);
        (smooth_step(t), k1 * t1, k2 * t1 * t1 + k1 * t2)
    }

    /// Value at a chart point (distance measured in the chart).
    pub fn value_at(&self, chart: &LatticeChart<T>, x: &Point<T>) -> T {
        self.radial_value(norm4(&chart.displacement(&self.center(), x)))
    }

    /// Radii between which the profile varies.
    pub fn transition(&self) -> (f64, f64) {
        match *self {
            CutoffProfile::Chi { radius, .. } => (f64_of(radius) / 2.0, f64_of(radius)),
            CutoffProfile::Beta { n, lambda, .. } => {
                let s = f64_of(lambda).sqrt();
                (s / f64_of(n), s / 2.0)
            }
        }
    }
}

/// Composite Simpson rule in `u = log r` over the transition annulus of a
/// radial profile: `int g(r, f, f', f'') r^k dr`.
fn radial_log_integral<T: Real>(p: &CutoffProfile<T>, k: i32, g: impl Fn(f64, f64, f64, f64) -> f64) -> f64 {
    const PANELS: usize = 8192;
    let (r0, r1) = p.transition();
    let (u0, u1) = (r0.ln(), r1.ln());
    let du = (u1 - u0) / PANELS as f64;
    let mut acc = 0.0;
    for i in 0..=PANELS {
        let u = u0 + du * i as f64;
        let r = u.exp();
        let (f, f1, f2) = p.radial_derivatives(r);
        let w = if i == 0 || i == PANELS {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w * g(r, f, f1, f2) * r.powi(k + 1);
    }
    acc * du / 3.0
}

const TWO_PI_SQ: f64 = 2.0 * std::f64::consts::PI * std::f64::consts::PI;

/// Norms of a radial cutoff's derivatives, by one-dimensional quadrature:
/// `[||grad f||_{L4}, ||grad^2 f||_{L2}, ||grad f||_{L2sharp}, ||grad f||_{L2},
/// ||grad^2 f||_{L4/3}]`. For a radial function `|grad^2 f|^2 = f''^2 +
/// 3 (f'/r)^2`, and the `L2sharp` supremum sits at the centre.
pub fn cutoff_norms<T: Real>(p: &CutoffProfile<T>) -> [f64; 5] {
    let hess = |r: f64, f1: f64, f2: f64| (f2 * f2 + 3.0 * (f1 / r).powi(2)).sqrt();
    let l4 = (TWO_PI_SQ * radial_log_integral(p, 3, |_, _, f1, _| f1.powi(4))).powf(0.25);
    let h2 = (TWO_PI_SQ * radial_log_integral(p, 3, |r, _, f1, f2| hess(r, f1, f2).powi(2))).sqrt();
    let sharp = (TWO_PI_SQ * radial_log_integral(p, 1, |_, _, f1, _| f1 * f1)).sqrt();
    let l2 = (TWO_PI_SQ * radial_log_integral(p, 3, |_, _, f1, _| f1 * f1)).sqrt();
    let h43 = (TWO_PI_SQ * radial_log_integral(p, 3, |r, _, f1, f2| hess(r, f1, f2).powf(4.0 / 3.0))).powf(0.75);
    [l4, h2, sharp, l2, h43]
}

/// Inverse factors for [`cutoff_norms`] of `beta_{N, lambda}`:
/// `(log N)^{3/4}`, `(log N)^{1/2}`, `(log N)^{1/2}`, `log N / sqrt(lambda)`
/// (twice).
pub fn beta_inverse_factors(n: f64, lambda: f64) -> [f64; 5] {
    let ln = n.ln();
    let s = lambda.sqrt();
    [ln.powf(0.75), ln.sqrt(), ln.sqrt(), ln / s, ln / s]
}

/// One gluing site. `lambda = 0` marks an ideal point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GluingSite<T> {
    pub point: Point<T>,
    pub lambda: T,
    pub orientation: GroupValue<T>,
    /// Instanton shape parameter; defaults to `lambda / C0`.
    pub rho: Option<T>,
}

impl<T: Real> GluingSite<T> {
    pub fn new(point: Point<T>, lambda: T, orientation: GroupValue<T>) -> Self {
        GluingSite {
            point,
            lambda,
            orientation,
            rho: None,
        }
    }

    pub fn rho(&self) -> T {
        self.rho.unwrap_or(self.lambda / c(C0))
    }

    pub fn is_ideal(&self) -> bool {
        self.lambda == T::zero()
    }
}

/// Background connection, gluing sites and the scale bound `lambda0`.
#[derive(Clone, Debug)]
pub struct GluingData<T> {
    pub background: ConnectionField<T>,
    pub sites: Vec<GluingSite<T>>,
    pub lambda0: T,
}

/// One failed condition of [`validate_gluing_data`].
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    /// `8 sqrt(lambda_i) + 8 sqrt(lambda_j) >= dist(x_i, x_j)`.
    Separation {
        i: usize,
        j: usize,
        required: f64,
        distance: f64,
    },
    /// `lambda_i` outside `[0, lambda0)`.
    Scale { i: usize, lambda: f64, lambda0: f64 },
    /// `B(x_i, 8 sqrt(lambda_i))` leaves the chart interior.
    NotInterior { i: usize },
    /// Site point outside the chart.
    Outside { i: usize },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::Separation {
                i,
                j,
                required,
                distance,
            } => {
                write!(f, "sites {i},{j}: separation {distance} <= {required}")
            }
            Violation::Scale { i, lambda, lambda0 } => write!(f, "site {i}: lambda {lambda} not in [0, {lambda0})"),
            Violation::NotInterior { i } => write!(f, "site {i}: ball of radius 8 sqrt(lambda) leaves the chart"),
            Violation::Outside { i } => write!(f, "site {i}: point outside the chart"),
        }
    }
}

/// Checks the scale bound, interiority and the pairwise constraint
/// `8 sqrt(lambda_i) + 8 sqrt(lambda_j) < dist(x_i, x_j)`; lists every
/// violation.
pub fn validate_gluing_data<T: Real>(gd: &GluingData<T>) -> Vec<Violation> {
    let chart = gd.background.chart();
    let mut out = Vec::new();
    let l0 = f64_of(gd.lambda0);
    for (i, s) in gd.sites.iter().enumerate() {
        let l = f64_of(s.lambda);
        if !(l >= 0.0 && l < l0) {
            out.push(Violation::Scale {
                i,
                lambda: l,
                lambda0: l0,
            });
        }
        if !chart.contains(&s.point) {
            out.push(Violation::Outside { i });
            continue;
        }
        let r = 8.0 * l.max(0.0).sqrt();
        let inside = match chart.topology() {
            Topology::Torus => chart.extent().iter().all(|&e| r < f64_of(e) / 2.0),
            Topology::OpenChart => {
                let h = chart.spacing();
                (0..4).all(|mu| {
                    let lo = f64_of(chart.lower()[mu] + h[mu] * c(chart.shell() as f64));
                    let hi = f64_of(chart.lower()[mu] + chart.extent()[mu] - h[mu] * c(chart.shell() as f64));
                    let x = f64_of(s.point[mu]);
                    x - r > lo && x + r < hi
                })
            }
        };
        if !inside {
            out.push(Violation::NotInterior { i });
        }
    }
    for i in 0..gd.sites.len() {
        for j in i + 1..gd.sites.len() {
            let (a, b) = (&gd.sites[i], &gd.sites[j]);
            if !chart.contains(&a.point) || !chart.contains(&b.point) {
                continue;
            }
            let d = f64_of(norm4(&chart.displacement(&a.point, &b.point)));
            let req = 8.0 * f64_of(a.lambda).max(0.0).sqrt() + 8.0 * f64_of(b.lambda).max(0.0).sqrt();
            if !(req < d) {
                out.push(Violation::Separation {
                    i,
                    j,
                    required: req,
                    distance: d,
                });
            }
        }
    }
    out
}

/// The bundle atlas used by a splice: one core patch of radius
/// `sqrt(lambda_i)` per non-ideal site.
pub fn splice_bundle<T: Real>(chart: &Arc<LatticeChart<T>>, sites: &[GluingSite<T>]) -> Result<Arc<Bundle<T>>> {
    let patches = sites
        .iter()
        .filter(|s| !s.is_ideal())
        .map(|s| CorePatch {
            center: s.point,
            radius: s.lambda.sqrt(),
            orientation: s.orientation,
        })
        .collect();
    Bundle::with_patches(chart.clone(), patches)
}

/// Spliced connection after validation.
pub fn splice<T: Real>(gd: &GluingData<T>) -> Result<ConnectionField<T>> {
    let v = validate_gluing_data(gd);
    if !v.is_empty() {
        return Err(Error::GluingDataInvalid(v.len()));
    }
    splice_unchecked(gd)
}

/// Spliced connection without the separation and scale checks; sites must
/// still have disjoint core patches.
pub fn splice_unchecked<T: Real>(gd: &GluingData<T>) -> Result<ConnectionField<T>> {
    if !gd.background.bundle().is_trivial() {
        return Err(Error::Unsupported("background must use a single trivialization"));
    }
    if gd.sites.iter().any(|s| !(s.lambda >= T::zero())) {
        return Err(Error::InvalidParameter("negative lambda".into()));
    }
    let chart_arc = gd.background.bundle().chart_arc().clone();
    let bundle = splice_bundle(&chart_arc, &gd.sites)?;
    let chart = bundle.chart();
    let active: Vec<&GluingSite<T>> = gd.sites.iter().filter(|s| !s.is_ideal()).collect();
    let cut_bg: Vec<CutoffProfile<T>> = active
        .iter()
        .map(|s| CutoffProfile::Chi {
            center: s.point,
            radius: c::<T>(4.0) * s.lambda.sqrt(),
        })
        .collect();
    let cut_core: Vec<CutoffProfile<T>> = active
        .iter()
        .map(|s| CutoffProfile::Chi {
            center: s.point,
            radius: s.lambda.sqrt() / c(2.0),
        })
        .collect();
    let rots: Vec<[[T; 3]; 3]> = active.iter().map(|s| s.orientation.ad_matrix()).collect();
    let bg = gd.background.data();
    let mut out = ConnectionField::zeros(&bundle);
    out.data_mut().par_chunks_mut(4).enumerate().for_each(|(s, o)| {
        let x = chart.position(s);
        let p = bundle.patch_of(s);
        if p > 0 {
            let i = p - 1;
            let site = active[i];
            let d = chart.displacement(&site.point, &x);
            let inst = T::one() - cut_core[i].value_at(chart, &x);
            let mut v = [LieValue::zero(); 4];
            if inst > T::zero() {
                let a = regular_gauge_value(&d, site.rho());
                for nu in 0..4 {
                    v[nu] += a[nu] * inst;
                }
            }
            if inst < T::one() {
                let g = radial_pure_gauge(&d);
                for nu in 0..4 {
                    v[nu] += g[nu] * (T::one() - inst);
                }
            }
            for nu in 0..4 {
                o[nu] = v[nu].rotate(&rots[i]);
            }
            return;
        }
        let mut weight = T::one();
        for cut in &cut_bg {
            weight *= cut.value_at(chart, &x);
        }
        for nu in 0..4 {
            o[nu] = if weight == T::one() {
                bg[s * 4 + nu]
            } else {
                bg[s * 4 + nu] * weight
            };
        }
        for (i, site) in active.iter().enumerate() {
            let inst = T::one() - cut_core[i].value_at(chart, &x);
            if inst > T::zero() {
                let d = chart.displacement(&site.point, &x);
                let a = singular_gauge_value(&d, site.rho());
                for nu in 0..4 {
                    o[nu] += a[nu].rotate(&rots[i]) * inst;
                }
            }
        }
    });
    Ok(out)
}

/// Norms of `F^+` of the splice.
pub fn splice_fplus_report<T: Real>(gd: &GluingData<T>, opts: SharpOptions) -> Result<NormReport> {
    let a = splice(gd)?;
    let fp = self_dual_curvature(&a);
    NormReport::compute("F+(splice)", &fp, &Region::Whole, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{curvature_summary, d_plus, OperatorHandle};
    use crate::field::SelfDualField;
    use crate::geometry::{build_lattice, ChartSpec};
    use crate::instanton::ENERGY_QUANTUM;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn flat_torus(n: usize, l: f64) -> ConnectionField<f64> {
        ConnectionField::zeros(&Bundle::trivial(Arc::new(
            build_lattice(&ChartSpec::torus(n, l)).unwrap(),
        )))
    }

    #[test]
    fn smooth_step_endpoints() {
        assert_eq!(smooth_step(0.0), 0.0);
        assert_eq!(smooth_step(1.0), 1.0);
        assert!((smooth_step(0.5_f64) - 0.5).abs() < 1e-15);
        assert_eq!(smooth_step(-1.0), 0.0);
    }

    #[test]
    fn beta_support() {
        let b = beta_cutoff(8.0, 0.01).unwrap();
        assert_eq!(b.radial_value(0.05), 1.0);
        assert_eq!(b.radial_value(0.0125), 0.0);
        assert_eq!(b.radial_value(0.0), 0.0);
        assert!(beta_cutoff(4.0, 0.01).is_err());
        assert!(beta_cutoff(8.0, 0.0).is_err());
        let chi = chi_cutoff([0.0; 4], 1.0).unwrap();
        assert_eq!(chi.radial_value(0.5), 0.0);
        assert_eq!(chi.radial_value(1.0), 1.0);
        assert!(chi_cutoff([0.0; 4], 0.0).is_err());
    }

    #[test]
    fn radial_quadrature_matches_closed_form_for_chi() {
        // int |chi'|^2 over the annulus computed against a fine direct sum.
        let p = chi_cutoff::<f64>([0.0; 4], 2.0).unwrap();
        let n = 200_000;
        let (r0, r1) = p.transition();
        let h = (r1 - r0) / n as f64;
        let mut direct = 0.0;
        for i in 0..n {
            let r = r0 + (i as f64 + 0.5) * h;
            direct += TWO_PI_SQ * r.powi(3) * p.radial_derivatives(r).1.powi(2) * h;
        }
        let q = cutoff_norms(&p);
        assert!((q[3] - direct.sqrt()).abs() < 1e-8 * q[3]);
    }

    #[test]
    fn validation_examples() {
        let bg = flat_torus(8, 4.0);
        let q = GroupValue::identity();
        let one = GluingData {
            background: bg.clone(),
            sites: vec![GluingSite::new([1.0, 1.0, 1.0, 1.0], 0.01, q)],
            lambda0: 0.1,
        };
        assert!(validate_gluing_data(&one).is_empty());
        let pair = |l: f64| GluingData {
            background: bg.clone(),
            sites: vec![
                GluingSite::new([1.0, 1.0, 1.0, 1.0], l, q),
                GluingSite::new([1.5, 1.0, 1.0, 1.0], l, q),
            ],
            lambda0: 0.1,
        };
        let v = validate_gluing_data(&pair(0.001));
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::Separation { i: 0, j: 1, .. }));
        assert!(validate_gluing_data(&pair(0.0005)).is_empty());
        let big = GluingData {
            background: bg,
            sites: vec![GluingSite::new([1.0, 1.0, 1.0, 1.0], 0.2, q)],
            lambda0: 0.1,
        };
        let v = validate_gluing_data(&big);
        assert!(v.iter().any(|x| matches!(x, Violation::Scale { .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::NotInterior { .. })));
    }

    #[test]
    fn empty_and_ideal_sites_leave_background() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let bg = ConnectionField::random(
            &Bundle::trivial(flat_torus(8, 4.0).bundle().chart_arc().clone()),
            &mut rng,
        );
        let gd = GluingData {
            background: bg.clone(),
            sites: vec![GluingSite::new([1.0; 4], 0.0, GroupValue::identity())],
            lambda0: 0.1,
        };
        let a = splice(&gd).unwrap();
        assert_eq!(a.data(), bg.data());
        let gd = GluingData { sites: vec![], ..gd };
        assert_eq!(splice(&gd).unwrap().data(), bg.data());
    }

    #[test]
    fn support_is_exact_and_frames_are_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let bg = ConnectionField::random(flat_torus(32, 4.0).bundle(), &mut rng).scaled(0.1);
        let site = GluingSite::new([2.0, 2.0, 2.0, 2.0], 0.04, GroupValue::random(&mut rng));
        let gd = GluingData {
            background: bg.clone(),
            sites: vec![site],
            lambda0: 0.1,
        };
        let a = splice(&gd).unwrap();
        let chart = a.chart();
        let mut outside = 0;
        for s in 0..chart.sites() {
            let d = norm4(&chart.displacement(&site.point, &chart.position(s)));
            if d >= 4.0 * 0.2 {
                outside += 1;
                for nu in 0..4 {
                    assert_eq!(a.get(s, nu), bg.get(s, nu));
                }
            }
        }
        assert!(outside > 0);
        assert!(a.bundle().crossing_count() > 0);
        // Adjointness holds on the patched bundle.
        let op = OperatorHandle::new(&a).unwrap();
        let x = ConnectionField::random(a.bundle(), &mut rng);
        let v = SelfDualField::random(a.bundle(), &mut rng);
        let lhs = d_plus(&a, &x).unwrap().inner(&v).unwrap();
        let rhs = x.inner(&op.d_plus_adjoint(&v).unwrap()).unwrap();
        assert!((lhs - rhs).abs() < 1e-11 * lhs.abs().max(rhs.abs()));
    }

    #[test]
    fn curvature_vanishes_outside_the_instanton_ball() {
        // Flat background: the splice is flat beyond sqrt(lambda)/2, in both
        // frames and across the patch boundary.
        let bg = flat_torus(24, 6.0);
        let mut site = GluingSite::new([3.0, 3.0, 3.0, 3.0], 2.25, GroupValue::new(0.5, 0.5, 0.5, 0.5));
        site.rho = Some(0.5);
        let gd = GluingData {
            background: bg,
            sites: vec![site],
            lambda0: 4.0,
        };
        let a = splice_unchecked(&gd).unwrap();
        let f = crate::calculus::curvature(&a);
        let chart = a.chart();
        let h = chart.spacing()[0];
        let mut checked = 0;
        for s in 0..chart.sites() {
            let r = norm4(&chart.displacement(&site.point, &chart.position(s)));
            if r > 0.75 + 3.0 * h {
                checked += 1;
                assert!(f.pointwise_norm_sq(s) < 1e-24, "r = {r}");
            }
        }
        assert!(checked > 0);
        let e = curvature_summary(&a).energy / ENERGY_QUANTUM;
        assert!(e > 0.5 && e.is_finite());
    }
}
