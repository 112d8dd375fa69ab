//! Lattice-sampled su(2)-valued forms.

use std::marker::PhantomData;
use std::sync::Arc;

use rand::Rng;

use crate::algebra::{GroupValue, LieValue};
use crate::bundle::Bundle;
use crate::error::{Error, Result};
use crate::geometry::LatticeChart;
use crate::scalar::{c, Real};

/// Form type stored at each site.
pub trait FormKind: Copy + Send + Sync + 'static {
    /// LieValue components per site.
    const COMPONENTS: usize;
    /// Rank code used by the ASDF1 dump format.
    const RANK_CODE: u8;
    /// Form degree, used by conformal weights.
    const DEGREE: u32;
    /// Metric factor relating the pointwise norm to the sum of component norms.
    const NORM_FACTOR: f64;
    const NAME: &'static str;
}

/// One-form: components `A_mu`, mu = 0..3.
#[derive(Clone, Copy, Debug)]
pub struct OneForm;
/// Two-form: components `F_{mu nu}`, mu < nu, in the order of [`PAIRS`].
#[derive(Clone, Copy, Debug)]
pub struct TwoForm;
/// Self-dual two-form: coefficients `c_a` of the basis `omega_a`.
#[derive(Clone, Copy, Debug)]
pub struct SelfDual;

impl FormKind for OneForm {
    const COMPONENTS: usize = 4;
    const RANK_CODE: u8 = 1;
    const DEGREE: u32 = 1;
    const NORM_FACTOR: f64 = 1.0;
    const NAME: &'static str = "1-form";
}

impl FormKind for TwoForm {
    const COMPONENTS: usize = 6;
    const RANK_CODE: u8 = 2;
    const DEGREE: u32 = 2;
    const NORM_FACTOR: f64 = 1.0;
    const NAME: &'static str = "2-form";
}

impl FormKind for SelfDual {
    const COMPONENTS: usize = 3;
    const RANK_CODE: u8 = 3;
    const DEGREE: u32 = 2;
    // |omega_a|^2 = 2
    const NORM_FACTOR: f64 = 2.0;
    const NAME: &'static str = "self-dual";
}

/// Index pairs of two-form components.
pub const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// Position of `(mu, nu)` in [`PAIRS`] and the sign of the reordering.
pub fn pair_index(mu: usize, nu: usize) -> Option<(usize, i8)> {
    let (a, b, s) = if mu < nu { (mu, nu, 1) } else { (nu, mu, -1) };
    PAIRS.iter().position(|&p| p == (a, b)).map(|k| (k, s))
}

/// A field of `K`-forms valued in su(2), one value per component per site.
#[derive(Clone, Debug)]
pub struct LatticeField<T, K> {
    bundle: Arc<Bundle<T>>,
    data: Vec<LieValue<T>>,
    _kind: PhantomData<K>,
}

pub type ConnectionField<T> = LatticeField<T, OneForm>;
pub type TwoFormField<T> = LatticeField<T, TwoForm>;
pub type SelfDualField<T> = LatticeField<T, SelfDual>;

impl<T: Real, K: FormKind> LatticeField<T, K> {
    pub fn zeros(bundle: &Arc<Bundle<T>>) -> Self {
        let n = bundle.chart().sites() * K::COMPONENTS;
        LatticeField {
            bundle: bundle.clone(),
            data: vec![LieValue::zero(); n],
            _kind: PhantomData,
        }
    }

    pub fn from_data(bundle: &Arc<Bundle<T>>, data: Vec<LieValue<T>>) -> Result<Self> {
        if data.len() != bundle.chart().sites() * K::COMPONENTS {
            return Err(Error::InvalidParameter(format!(
                "{} data length {} does not match the chart",
                K::NAME,
                data.len()
            )));
        }
        Ok(LatticeField {
            bundle: bundle.clone(),
            data,
            _kind: PhantomData,
        })
    }

    /// Field with values `f(site, position)` per site.
    pub fn from_fn<F>(bundle: &Arc<Bundle<T>>, mut f: F) -> Self
    where
        F: FnMut(usize, [T; 4]) -> Vec<LieValue<T>>,
    {
        let chart = bundle.chart();
        let mut data = Vec::with_capacity(chart.sites() * K::COMPONENTS);
        for s in 0..chart.sites() {
            let vals = f(s, chart.position(s));
            debug_assert_eq!(vals.len(), K::COMPONENTS);
            data.extend_from_slice(&vals);
        }
        LatticeField {
            bundle: bundle.clone(),
            data,
            _kind: PhantomData,
        }
    }

    /// Independent standard-normal coefficients; zero on the boundary shell.
    pub fn random<R: Rng + ?Sized>(bundle: &Arc<Bundle<T>>, rng: &mut R) -> Self {
        let mut f = Self::zeros(bundle);
        let chart = bundle.chart();
        for s in 0..chart.sites() {
            let interior = chart.is_interior(s);
            for k in 0..K::COMPONENTS {
                let v = LieValue::random(rng);
                if interior {
                    f.data[s * K::COMPONENTS + k] = v;
                }
            }
        }
        f
    }

    pub fn bundle(&self) -> &Arc<Bundle<T>> {
        &self.bundle
    }

    pub fn chart(&self) -> &LatticeChart<T> {
        self.bundle.chart()
    }

    pub fn data(&self) -> &[LieValue<T>] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [LieValue<T>] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<LieValue<T>> {
        self.data
    }

    /// Coefficients as a flat scalar slice (site-major, component, then su(2) index).
    pub fn as_flat(&self) -> &[T] {
        // SAFETY: LieValue<T> is repr(transparent) over [T; 3].
        unsafe { std::slice::from_raw_parts(self.data.as_ptr() as *const T, self.data.len() * 3) }
    }

    pub fn as_flat_mut(&mut self) -> &mut [T] {
        // SAFETY: LieValue<T> is repr(transparent) over [T; 3].
        unsafe { std::slice::from_raw_parts_mut(self.data.as_mut_ptr() as *mut T, self.data.len() * 3) }
    }

    #[inline(always)]
    pub fn site(&self, s: usize) -> &[LieValue<T>] {
        &self.data[s * K::COMPONENTS..(s + 1) * K::COMPONENTS]
    }

    #[inline(always)]
    pub fn site_mut(&mut self, s: usize) -> &mut [LieValue<T>] {
        &mut self.data[s * K::COMPONENTS..(s + 1) * K::COMPONENTS]
    }

    #[inline(always)]
    pub fn get(&self, s: usize, k: usize) -> LieValue<T> {
        self.data[s * K::COMPONENTS + k]
    }

    pub fn ensure_same_bundle<K2: FormKind>(&self, other: &LatticeField<T, K2>) -> Result<()> {
        if self.bundle.compatible(&other.bundle) {
            Ok(())
        } else {
            Err(Error::ChartMismatch)
        }
    }

    /// Squared pointwise norm at a site in the flat metric.
    #[inline]
    pub fn pointwise_norm_sq(&self, s: usize) -> T {
        let sum = self.site(s).iter().fold(T::zero(), |a, v| a + v.norm_sq());
        sum * c(K::NORM_FACTOR)
    }

    /// L^2 inner product with quadrature weights.
    pub fn inner(&self, other: &Self) -> Result<T> {
        self.ensure_same_bundle(other)?;
        Ok(self.inner_unchecked(other))
    }

    pub(crate) fn inner_unchecked(&self, other: &Self) -> T {
        let chart = self.chart();
        let two = c::<T>(2.0);
        let mut acc = T::zero();
        for s in 0..chart.sites() {
            let w = chart.form_weight(s, K::DEGREE, two);
            if w == T::zero() {
                continue;
            }
            let a = self.site(s);
            let b = other.site(s);
            let mut local = T::zero();
            for k in 0..K::COMPONENTS {
                local += a[k].dot(b[k]);
            }
            acc += w * local;
        }
        acc * c(K::NORM_FACTOR)
    }

    pub fn norm_l2(&self) -> T {
        self.inner_unchecked(self).sqrt()
    }

    pub fn scale(&mut self, s: T) {
        for v in &mut self.data {
            *v = *v * s;
        }
    }

    pub fn scaled(&self, s: T) -> Self {
        let mut f = self.clone();
        f.scale(s);
        f
    }

    /// `self += alpha * x`.
    pub fn axpy(&mut self, alpha: T, x: &Self) -> Result<()> {
        self.ensure_same_bundle(x)?;
        for (a, b) in self.data.iter_mut().zip(&x.data) {
            *a += *b * alpha;
        }
        Ok(())
    }

    pub fn add(&self, x: &Self) -> Result<Self> {
        let mut f = self.clone();
        f.axpy(T::one(), x)?;
        Ok(f)
    }

    pub fn sub(&self, x: &Self) -> Result<Self> {
        let mut f = self.clone();
        f.axpy(-T::one(), x)?;
        Ok(f)
    }

    /// Zeroes the boundary shell.
    pub fn clear_shell(&mut self) {
        let chart = self.bundle.chart().clone();
        if chart.shell() == 0 {
            return;
        }
        for s in 0..chart.sites() {
            if !chart.is_interior(s) {
                for v in self.site_mut(s) {
                    *v = LieValue::zero();
                }
            }
        }
    }

    /// Applies the constant adjoint rotation `Ad(u)` to every value.
    pub fn rotated(&self, u: &GroupValue<T>, bundle: &Arc<Bundle<T>>) -> Self {
        let r = u.ad_matrix();
        LatticeField {
            bundle: bundle.clone(),
            data: self.data.iter().map(|v| v.rotate(&r)).collect(),
            _kind: PhantomData,
        }
    }

    /// The same values re-labelled onto a compatible bundle.
    pub fn with_bundle(self, bundle: &Arc<Bundle<T>>) -> Result<Self> {
        if !self.bundle.compatible(bundle) {
            return Err(Error::ChartMismatch);
        }
        Ok(LatticeField {
            bundle: bundle.clone(),
            data: self.data,
            _kind: PhantomData,
        })
    }

    pub fn max_abs(&self) -> T {
        self.as_flat().iter().fold(T::zero(), |a, v| a.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.as_flat().iter().all(|v| v.is_finite())
    }
}

/// A field with an arbitrary number of su(2) components per site, used for
/// iterated covariant derivatives. `degree` counts form indices for the
/// conformal weight.
#[derive(Clone, Debug)]
pub struct TensorField<T> {
    bundle: Arc<Bundle<T>>,
    components: usize,
    degree: u32,
    norm_factor: T,
    data: Vec<LieValue<T>>,
}

impl<T: Real> TensorField<T> {
    pub fn zeros(bundle: &Arc<Bundle<T>>, components: usize, degree: u32, norm_factor: T) -> Self {
        TensorField {
            bundle: bundle.clone(),
            components,
            degree,
            norm_factor,
            data: vec![LieValue::zero(); bundle.chart().sites() * components],
        }
    }

    pub fn from_form<K: FormKind>(f: &LatticeField<T, K>) -> Self {
        TensorField {
            bundle: f.bundle.clone(),
            components: K::COMPONENTS,
            degree: K::DEGREE,
            norm_factor: c(K::NORM_FACTOR),
            data: f.data.clone(),
        }
    }

    pub fn bundle(&self) -> &Arc<Bundle<T>> {
        &self.bundle
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn norm_factor(&self) -> T {
        self.norm_factor
    }

    pub fn data(&self) -> &[LieValue<T>] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [LieValue<T>] {
        &mut self.data
    }

    #[inline]
    pub fn site(&self, s: usize) -> &[LieValue<T>] {
        &self.data[s * self.components..(s + 1) * self.components]
    }

    #[inline]
    pub fn pointwise_norm_sq(&self, s: usize) -> T {
        self.site(s).iter().fold(T::zero(), |a, v| a + v.norm_sq()) * self.norm_factor
    }
}

/// Sites-by-components view used by the norm module.
pub trait PointwiseField<T: Real> {
    fn chart(&self) -> &LatticeChart<T>;
    /// Form degree for conformal weights.
    fn degree(&self) -> u32;
    /// Squared pointwise norm in the flat metric.
    fn norm_sq_at(&self, s: usize) -> T;
}

impl<T: Real, K: FormKind> PointwiseField<T> for LatticeField<T, K> {
    fn chart(&self) -> &LatticeChart<T> {
        self.bundle.chart()
    }
    fn degree(&self) -> u32 {
        K::DEGREE
    }
    fn norm_sq_at(&self, s: usize) -> T {
        self.pointwise_norm_sq(s)
    }
}

impl<T: Real> PointwiseField<T> for TensorField<T> {
    fn chart(&self) -> &LatticeChart<T> {
        self.bundle.chart()
    }
    fn degree(&self) -> u32 {
        self.degree
    }
    fn norm_sq_at(&self, s: usize) -> T {
        self.pointwise_norm_sq(s)
    }
}

/// A real scalar function sampled on a chart (cutoff profiles, densities).
#[derive(Clone, Debug)]
pub struct ScalarField<'a, T> {
    pub chart: &'a LatticeChart<T>,
    pub values: Vec<T>,
    pub degree: u32,
}

impl<T: Real> PointwiseField<T> for ScalarField<'_, T> {
    fn chart(&self) -> &LatticeChart<T> {
        self.chart
    }
    fn degree(&self) -> u32 {
        self.degree
    }
    fn norm_sq_at(&self, s: usize) -> T {
        self.values[s] * self.values[s]
    }
}
