//! Trivialisations of the SU(2) bundle over a lattice chart.
//!
//! A bundle is either trivial (one global frame) or carries core patches:
//! small balls around gluing sites in which fields are expressed in the
//! instanton's own frame. The transition from a core patch to the outer
//! frame is `tau(x) = q xhat q^{-1}` with `xhat` the unit quaternion along
//! `x - center`. Difference stencils that straddle a patch boundary bring the
//! neighbour's value into the evaluating site's frame.

use std::collections::HashMap;
use std::sync::Arc;

use crate::algebra::{GroupValue, LieValue};
use crate::error::{Error, Result};
use crate::geometry::{norm4, LatticeChart, Point};
use crate::scalar::Real;

/// A ball in which fields use the frame of a glued instanton.
#[derive(Clone, Debug, PartialEq)]
pub struct CorePatch<T> {
    pub center: Point<T>,
    pub radius: T,
    pub orientation: GroupValue<T>,
}

impl<T: Real> CorePatch<T> {
    /// Transition `tau` to the outer frame and its derivatives
    /// `d_nu tau` at a point of the patch's closure (excluding the centre).
    pub fn transition(&self, chart: &LatticeChart<T>, x: &Point<T>) -> (GroupValue<T>, [GroupValue<T>; 4]) {
        let d = chart.displacement(&self.center, x);
        let r = norm4(&d);
        let inv_r = T::one() / r;
        let xhat = GroupValue(d.map(|v| v * inv_r));
        let q = self.orientation;
        let qi = q.conj();
        let tau = q.mul(&xhat).mul(&qi);
        let dtau = std::array::from_fn(|nu| {
            let e = GroupValue::unit(nu);
            let dx = e.add(&xhat.scale(-d[nu] * inv_r)).scale(inv_r);
            q.mul(&dx).mul(&qi)
        });
        (tau, dtau)
    }
}

/// Frame change applied to a neighbour value read across a patch boundary.
#[derive(Clone, Debug)]
pub struct Crossing<T> {
    /// Group element mapping the neighbour's frame to the evaluating frame.
    pub g: GroupValue<T>,
    /// `Ad(g)` on coefficients.
    pub rot: [[T; 3]; 3],
    /// Inhomogeneous term of the connection transformation.
    pub omega: [LieValue<T>; 4],
}

/// Offsets that may appear in any supported stencil.
pub const MAX_REACH: isize = 2;

#[derive(Clone, Debug)]
pub struct Bundle<T> {
    chart: Arc<LatticeChart<T>>,
    patches: Vec<CorePatch<T>>,
    patch_of: Vec<u16>,
    near: Vec<bool>,
    crossings: HashMap<u64, Crossing<T>>,
}

#[inline(always)]
fn key(s: usize, axis: usize, off: isize) -> u64 {
    ((s as u64 * 4 + axis as u64) * 5) + (off + MAX_REACH) as u64
}

impl<T: Real> Bundle<T> {
    pub fn trivial(chart: Arc<LatticeChart<T>>) -> Arc<Self> {
        Arc::new(Bundle {
            chart,
            patches: Vec::new(),
            patch_of: Vec::new(),
            near: Vec::new(),
            crossings: HashMap::new(),
        })
    }

    /// Bundle with the given core patches; patches must be pairwise disjoint
    /// even after widening by the stencil reach.
    pub fn with_patches(chart: Arc<LatticeChart<T>>, patches: Vec<CorePatch<T>>) -> Result<Arc<Self>> {
        if patches.is_empty() {
            return Ok(Self::trivial(chart));
        }
        if patches.len() >= u16::MAX as usize {
            return Err(Error::InvalidParameter("too many core patches".into()));
        }
        let hmax = chart.spacing().iter().fold(T::zero(), |a, &b| a.max(b));
        let pad = hmax * T::from_isize(2 * MAX_REACH + 1).unwrap();
        for (i, p) in patches.iter().enumerate() {
            if !(p.radius > T::zero()) {
                return Err(Error::InvalidParameter("core patch radius must be positive".into()));
            }
            for q in &patches[..i] {
                let d = norm4(&chart.displacement(&p.center, &q.center));
                if d <= p.radius + q.radius + pad {
                    return Err(Error::InvalidParameter("core patches overlap".into()));
                }
            }
        }
        let v = chart.sites();
        let mut patch_of = vec![0u16; v];
        for s in 0..v {
            let x = chart.position(s);
            for (k, p) in patches.iter().enumerate() {
                if norm4(&chart.displacement(&p.center, &x)) < p.radius {
                    patch_of[s] = (k + 1) as u16;
                }
            }
        }
        let mut near = vec![false; v];
        let mut crossings = HashMap::new();
        for s in 0..v {
            let m = chart.multi(s);
            for axis in 0..4 {
                for off in -MAX_REACH..=MAX_REACH {
                    if off == 0 {
                        continue;
                    }
                    let Some(n) = chart.neighbor(s, &m, axis, off) else {
                        continue;
                    };
                    if patch_of[n] == patch_of[s] {
                        continue;
                    }
                    let x = chart.position(n);
                    let cross = Self::build_crossing(&chart, &patches, patch_of[s], patch_of[n], &x);
                    crossings.insert(key(s, axis, off), cross);
                    near[s] = true;
                }
            }
        }
        Ok(Arc::new(Bundle {
            chart,
            patches,
            patch_of,
            near,
            crossings,
        }))
    }

    fn build_crossing(
        chart: &LatticeChart<T>,
        patches: &[CorePatch<T>],
        ps: u16,
        pn: u16,
        x: &Point<T>,
    ) -> Crossing<T> {
        // Frame of the neighbour -> outer frame.
        let (tn, dtn) = if pn == 0 {
            (GroupValue::identity(), [GroupValue([T::zero(); 4]); 4])
        } else {
            patches[pn as usize - 1].transition(chart, x)
        };
        // Frame of the evaluating site -> outer frame.
        let (ts, dts) = if ps == 0 {
            (GroupValue::identity(), [GroupValue([T::zero(); 4]); 4])
        } else {
            patches[ps as usize - 1].transition(chart, x)
        };
        let tsi = ts.conj();
        let g = tsi.mul(&tn);
        let omega = std::array::from_fn(|nu| {
            // A_out = Ad(tn) A_n - (d tn) tn^{-1}; A_s = Ad(ts^{-1}) A_out + ts^{-1} d ts.
            let inhom_n = LieValue::from_quaternion_im(&dtn[nu].mul(&tn.conj()));
            let inhom_s = LieValue::from_quaternion_im(&tsi.mul(&dts[nu]));
            inhom_s - tsi.ad(inhom_n)
        });
        Crossing {
            g,
            rot: g.ad_matrix(),
            omega,
        }
    }

    pub fn chart(&self) -> &LatticeChart<T> {
        &self.chart
    }

    pub fn chart_arc(&self) -> &Arc<LatticeChart<T>> {
        &self.chart
    }

    pub fn patches(&self) -> &[CorePatch<T>] {
        &self.patches
    }

    pub fn is_trivial(&self) -> bool {
        self.patches.is_empty()
    }

    /// Patch index of a site: 0 for the outer frame, k for core patch k-1.
    #[inline]
    pub fn patch_of(&self, s: usize) -> usize {
        if self.patch_of.is_empty() {
            0
        } else {
            self.patch_of[s] as usize
        }
    }

    /// Number of stencil crossings between frames.
    pub fn crossing_count(&self) -> usize {
        self.crossings.len()
    }

    #[inline(always)]
    pub fn crossing(&self, s: usize, axis: usize, off: isize) -> Option<&Crossing<T>> {
        if self.near.is_empty() || !self.near[s] {
            return None;
        }
        self.crossings.get(&key(s, axis, off))
    }

    /// Brings an adjoint-valued neighbour value into the frame of site `s`.
    #[inline(always)]
    pub fn transport(&self, s: usize, axis: usize, off: isize, v: LieValue<T>) -> LieValue<T> {
        match self.crossing(s, axis, off) {
            Some(c) => v.rotate(&c.rot),
            None => v,
        }
    }

    /// Transpose of [`Bundle::transport`].
    #[inline(always)]
    pub fn transport_t(&self, s: usize, axis: usize, off: isize, v: LieValue<T>) -> LieValue<T> {
        match self.crossing(s, axis, off) {
            Some(c) => v.rotate_t(&c.rot),
            None => v,
        }
    }

    /// Brings a neighbour's connection components into the frame of site `s`.
    #[inline(always)]
    pub fn transport_connection(&self, s: usize, axis: usize, off: isize, a: [LieValue<T>; 4]) -> [LieValue<T>; 4] {
        match self.crossing(s, axis, off) {
            Some(c) => std::array::from_fn(|nu| a[nu].rotate(&c.rot) + c.omega[nu]),
            None => a,
        }
    }

    /// Brings a neighbour's gauge-transformation value into the frame of `s`.
    #[inline(always)]
    pub fn transport_group(&self, s: usize, axis: usize, off: isize, u: GroupValue<T>) -> GroupValue<T> {
        match self.crossing(s, axis, off) {
            Some(c) => c.g.mul(&u).mul(&c.g.conj()),
            None => u,
        }
    }

    /// Rotation taking the value at site `s` to the outer frame, if `s` lies
    /// in a core patch.
    pub fn to_outer(&self, s: usize) -> Option<GroupValue<T>> {
        let p = self.patch_of(s);
        if p == 0 {
            return None;
        }
        let x = self.chart.position(s);
        let patch = &self.patches[p - 1];
        if norm4(&self.chart.displacement(&patch.center, &x)) == T::zero() {
            return Some(patch.orientation);
        }
        Some(patch.transition(&self.chart, &x).0)
    }

    /// The same bundle with every frame rotated by a constant `u`.
    pub fn rotated(&self, u: &GroupValue<T>) -> Result<Arc<Self>> {
        let patches = self
            .patches
            .iter()
            .map(|p| CorePatch {
                center: p.center,
                radius: p.radius,
                orientation: u.mul(&p.orientation),
            })
            .collect();
        Self::with_patches(self.chart.clone(), patches)
    }

    /// True when both bundles describe the same chart and frames.
    pub fn compatible(&self, other: &Bundle<T>) -> bool {
        if std::ptr::eq(self, other) {
            return true;
        }
        let (a, b) = (&*self.chart, &*other.chart);
        a.dims() == b.dims()
            && a.topology() == b.topology()
            && a.lower() == b.lower()
            && a.extent() == b.extent()
            && a.metric() == b.metric()
            && a.shell() == b.shell()
            && a.stencil() == b.stencil()
            && self.patches == other.patches
    }
}
