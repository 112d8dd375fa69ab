//! Lattice charts of the flat four-torus and of a Euclidean chart of R^4,
//! together with quadrature weights, distances and dilations.

use crate::error::{Error, Result};
use crate::scalar::{c, f64_of, from_usize, Real};

/// A point of the four-dimensional chart.
pub type Point<T> = [T; 4];

/// Global shape of the chart.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Topology {
    Torus,
    OpenChart,
}

/// Metric used for quadrature and pointwise norms.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetricKind {
    Flat,
    /// Pullback of the round metric on S^4 by inverse stereographic
    /// projection: g = (2 / (1 + |x|^2))^2 dx^2.
    RoundS4,
}

/// One-dimensional difference stencil used for every derivative on a chart.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stencil {
    /// `(f[1] - f[-1]) / 2h`.
    Central2,
    /// `(-f[2] + 8 f[1] - 8 f[-1] + f[-2]) / 12h`.
    Central4,
    /// `(-3 f[0] + 4 f[1] - f[2]) / 2h`.
    Upwind2,
}

const CENTRAL2: [(isize, f64); 2] = [(-1, -0.5), (1, 0.5)];
const CENTRAL4: [(isize, f64); 4] = [(-2, 1.0 / 12.0), (-1, -8.0 / 12.0), (1, 8.0 / 12.0), (2, -1.0 / 12.0)];
const UPWIND2: [(isize, f64); 3] = [(0, -1.5), (1, 2.0), (2, -0.5)];

impl Stencil {
    /// Offsets and weights in units of `1/h`.
    pub fn taps(self) -> &'static [(isize, f64)] {
        match self {
            Stencil::Central2 => &CENTRAL2,
            Stencil::Central4 => &CENTRAL4,
            Stencil::Upwind2 => &UPWIND2,
        }
    }

    /// Largest absolute offset touched by the stencil.
    pub fn reach(self) -> usize {
        self.taps().iter().map(|&(o, _)| o.unsigned_abs()).max().unwrap_or(0)
    }

    pub fn name(self) -> &'static str {
        match self {
            Stencil::Central2 => "central2",
            Stencil::Central4 => "central4",
            Stencil::Upwind2 => "upwind2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "central2" => Some(Stencil::Central2),
            "central4" => Some(Stencil::Central4),
            "upwind2" => Some(Stencil::Upwind2),
            _ => None,
        }
    }
}

/// Parameters accepted by [`build_lattice`].
#[derive(Clone, Debug)]
pub struct ChartSpec<T> {
    pub topology: Topology,
    /// Lower corner of the chart.
    pub lower: Point<T>,
    /// Side length per axis.
    pub extent: [T; 4],
    pub sites: [usize; 4],
    pub metric: MetricKind,
    /// Boundary shell width in sites (open charts only).
    pub shell: usize,
    /// Difference stencil; `None` picks the topology default.
    pub stencil: Option<Stencil>,
}

impl<T: Real> ChartSpec<T> {
    /// Flat torus `[0, L)^4` with `n` sites per axis.
    pub fn torus(n: usize, length: T) -> Self {
        ChartSpec {
            topology: Topology::Torus,
            lower: [T::zero(); 4],
            extent: [length; 4],
            sites: [n; 4],
            metric: MetricKind::Flat,
            shell: 0,
            stencil: None,
        }
    }

    /// Open chart `[-half, half]^4` with `n` sites per axis and a shell of two sites.
    pub fn open(n: usize, half: T) -> Self {
        ChartSpec {
            topology: Topology::OpenChart,
            lower: [-half; 4],
            extent: [half + half; 4],
            sites: [n; 4],
            metric: MetricKind::Flat,
            shell: 2,
            stencil: None,
        }
    }

    pub fn with_metric(mut self, metric: MetricKind) -> Self {
        self.metric = metric;
        self
    }

    pub fn with_stencil(mut self, stencil: Stencil) -> Self {
        self.stencil = Some(stencil);
        self
    }

    pub fn with_shell(mut self, shell: usize) -> Self {
        self.shell = shell;
        self
    }
}

/// A regular lattice on a chart. Sites sit at cell centres
/// `lower + (i + 1/2) h` and are ordered with axis 0 slowest.
#[derive(Clone, Debug)]
pub struct LatticeChart<T> {
    topology: Topology,
    metric: MetricKind,
    stencil: Stencil,
    lower: Point<T>,
    extent: [T; 4],
    n: [usize; 4],
    h: [T; 4],
    shell: usize,
    strides: [usize; 4],
    coords: [Vec<T>; 4],
    cell: T,
}

/// Validates chart parameters and precomputes coordinates and weights.
pub fn build_lattice<T: Real>(spec: &ChartSpec<T>) -> Result<LatticeChart<T>> {
    for mu in 0..4 {
        if spec.sites[mu] < 4 {
            return Err(Error::InvalidLattice(format!(
                "axis {mu} has {} sites, at least 4 are required",
                spec.sites[mu]
            )));
        }
        if !(spec.extent[mu] > T::zero()) || !spec.extent[mu].is_finite() {
            return Err(Error::InvalidLattice(format!("axis {mu} has non-positive extent")));
        }
    }
    let stencil = spec.stencil.unwrap_or(match spec.topology {
        Topology::Torus => Stencil::Upwind2,
        Topology::OpenChart => Stencil::Central4,
    });
    match spec.topology {
        Topology::Torus => {
            if spec.metric != MetricKind::Flat {
                return Err(Error::InvalidLattice(
                    "the round S^4 metric is only available on open charts".into(),
                ));
            }
        }
        Topology::OpenChart => {
            for mu in 0..4 {
                if 4 * spec.shell >= spec.sites[mu] {
                    return Err(Error::InvalidLattice(format!(
                        "boundary shell {} is not below N/4 on axis {mu}",
                        spec.shell
                    )));
                }
            }
            if spec.shell < stencil.reach() {
                return Err(Error::InvalidLattice(format!(
                    "boundary shell {} is narrower than the {} stencil reach {}",
                    spec.shell,
                    stencil.name(),
                    stencil.reach()
                )));
            }
        }
    }
    let shell = match spec.topology {
        Topology::Torus => 0,
        Topology::OpenChart => spec.shell,
    };
    Ok(LatticeChart::assemble(
        spec.topology,
        spec.metric,
        stencil,
        spec.lower,
        spec.extent,
        spec.sites,
        shell,
    ))
}

impl<T: Real> LatticeChart<T> {
    fn assemble(
        topology: Topology,
        metric: MetricKind,
        stencil: Stencil,
        lower: Point<T>,
        extent: [T; 4],
        n: [usize; 4],
        shell: usize,
    ) -> Self {
        let h: [T; 4] = std::array::from_fn(|mu| extent[mu] / from_usize::<T>(n[mu]));
        let strides = [n[1] * n[2] * n[3], n[2] * n[3], n[3], 1];
        let coords = std::array::from_fn(|mu| {
            (0..n[mu])
                .map(|i| lower[mu] + (from_usize::<T>(i) + c(0.5)) * h[mu])
                .collect()
        });
        LatticeChart {
            topology,
            metric,
            stencil,
            lower,
            extent,
            n,
            h,
            shell,
            strides,
            coords,
            cell: h[0] * h[1] * h[2] * h[3],
        }
    }

    /// Sub-chart made of `planes` consecutive axis-0 planes starting at
    /// `start`, sharing the shell width. Used for slab-wise streaming, where
    /// only the middle planes are interior.
    pub(crate) fn slab(&self, start: isize, planes: usize) -> Self {
        let mut lower = self.lower;
        lower[0] = self.lower[0] + c::<T>(start as f64) * self.h[0];
        let mut extent = self.extent;
        extent[0] = from_usize::<T>(planes) * self.h[0];
        let mut n = self.n;
        n[0] = planes;
        LatticeChart::assemble(
            Topology::OpenChart,
            self.metric,
            self.stencil,
            lower,
            extent,
            n,
            self.shell,
        )
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn metric(&self) -> MetricKind {
        self.metric
    }

    pub fn stencil(&self) -> Stencil {
        self.stencil
    }

    pub fn dims(&self) -> [usize; 4] {
        self.n
    }

    pub fn spacing(&self) -> [T; 4] {
        self.h
    }

    pub fn lower(&self) -> Point<T> {
        self.lower
    }

    pub fn extent(&self) -> [T; 4] {
        self.extent
    }

    pub fn shell(&self) -> usize {
        self.shell
    }

    pub fn strides(&self) -> [usize; 4] {
        self.strides
    }

    /// Flat cell volume `h0 h1 h2 h3`.
    pub fn cell_volume(&self) -> T {
        self.cell
    }

    pub fn sites(&self) -> usize {
        self.n.iter().product()
    }

    #[inline]
    pub fn index(&self, m: [usize; 4]) -> usize {
        m[0] * self.strides[0] + m[1] * self.strides[1] + m[2] * self.strides[2] + m[3]
    }

    #[inline]
    pub fn multi(&self, s: usize) -> [usize; 4] {
        let i3 = s % self.n[3];
        let r = s / self.n[3];
        let i2 = r % self.n[2];
        let r = r / self.n[2];
        let i1 = r % self.n[1];
        [r / self.n[1], i1, i2, i3]
    }

    #[inline]
    pub fn coordinate(&self, axis: usize, i: usize) -> T {
        self.coords[axis][i]
    }

    #[inline]
    pub fn position(&self, s: usize) -> Point<T> {
        let m = self.multi(s);
        self.position_of(m)
    }

    #[inline]
    pub fn position_of(&self, m: [usize; 4]) -> Point<T> {
        std::array::from_fn(|mu| self.coords[mu][m[mu]])
    }

    /// Index range of interior sites along one axis.
    pub fn interior_range(&self, axis: usize) -> std::ops::Range<usize> {
        self.shell..self.n[axis] - self.shell
    }

    #[inline]
    pub fn is_interior_multi(&self, m: [usize; 4]) -> bool {
        if self.shell == 0 {
            return true;
        }
        (0..4).all(|mu| m[mu] >= self.shell && m[mu] + self.shell < self.n[mu])
    }

    #[inline]
    pub fn is_interior(&self, s: usize) -> bool {
        self.shell == 0 || self.is_interior_multi(self.multi(s))
    }

    /// Number of sites used by quadrature.
    pub fn interior_sites(&self) -> usize {
        (0..4).map(|mu| self.n[mu] - 2 * self.shell).product()
    }

    /// Neighbour of site `s` (multi-index `m`) shifted by `off` along `axis`;
    /// wraps on the torus, `None` past the edge of an open chart.
    #[inline]
    pub fn neighbor(&self, s: usize, m: &[usize; 4], axis: usize, off: isize) -> Option<usize> {
        let n = self.n[axis] as isize;
        let i = m[axis] as isize + off;
        let j = match self.topology {
            Topology::Torus => i.rem_euclid(n),
            Topology::OpenChart => {
                if i < 0 || i >= n {
                    return None;
                }
                i
            }
        };
        let stride = self.strides[axis] as isize;
        Some((s as isize + (j - m[axis] as isize) * stride) as usize)
    }

    /// Conformal factor of the metric at `x`: `2 / (1 + |x|^2)` for the round
    /// pullback, 1 for the flat metric.
    #[inline]
    pub fn conformal_factor(&self, x: &Point<T>) -> T {
        match self.metric {
            MetricKind::Flat => T::one(),
            MetricKind::RoundS4 => {
                let r2 = x.iter().fold(T::zero(), |a, &v| a + v * v);
                c::<T>(2.0) / (T::one() + r2)
            }
        }
    }

    /// Volume weight of a site: conformal volume times flat cell volume,
    /// zero on the boundary shell.
    #[inline]
    pub fn weight(&self, s: usize) -> T {
        self.form_weight(s, 0, T::one())
    }

    /// Quadrature weight for the p-th power of the pointwise norm of a
    /// k-form: `Omega^(4 - k p) h^4`, zero on the shell.
    #[inline]
    pub fn form_weight(&self, s: usize, degree: u32, p: T) -> T {
        let m = self.multi(s);
        if !self.is_interior_multi(m) {
            return T::zero();
        }
        match self.metric {
            MetricKind::Flat => self.cell,
            MetricKind::RoundS4 => {
                let om = self.conformal_factor(&self.position_of(m));
                om.powf(c::<T>(4.0) - from_usize::<T>(degree as usize) * p) * self.cell
            }
        }
    }

    /// Total quadrature volume.
    pub fn total_volume(&self) -> T {
        (0..self.sites()).map(|s| self.weight(s)).sum()
    }

    /// True when `x` lies in the closed box of the chart.
    pub fn contains(&self, x: &Point<T>) -> bool {
        match self.topology {
            Topology::Torus => x.iter().all(|v| v.is_finite()),
            Topology::OpenChart => {
                (0..4).all(|mu| x[mu] >= self.lower[mu] && x[mu] <= self.lower[mu] + self.extent[mu])
            }
        }
    }

    /// Displacement `y - x`, using the minimal periodic image on the torus.
    #[inline]
    pub fn displacement(&self, x: &Point<T>, y: &Point<T>) -> Point<T> {
        std::array::from_fn(|mu| {
            let d = y[mu] - x[mu];
            match self.topology {
                Topology::OpenChart => d,
                Topology::Torus => {
                    let l = self.extent[mu];
                    d - (d / l).round() * l
                }
            }
        })
    }

    /// Geodesic distance on the torus, Euclidean distance on open charts.
    pub fn distance(&self, x: &Point<T>, y: &Point<T>) -> Result<T> {
        for p in [x, y] {
            if !self.contains(p) {
                return Err(Error::OutsideChart(p.map(f64_of)));
            }
        }
        Ok(norm4(&self.displacement(x, y)))
    }
}

#[inline]
pub fn norm4<T: Real>(x: &Point<T>) -> T {
    x.iter().fold(T::zero(), |a, &v| a + v * v).sqrt()
}

/// The dilation `y -> (y - z) / lambda`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dilation<T> {
    pub center: Point<T>,
    pub scale: T,
}

impl<T: Real> Dilation<T> {
    pub fn new(scale: T, center: Point<T>) -> Result<Self> {
        if !(scale > T::zero()) {
            return Err(Error::InvalidParameter("dilation scale must be positive".into()));
        }
        Ok(Dilation { center, scale })
    }

    pub fn identity() -> Self {
        Dilation {
            center: [T::zero(); 4],
            scale: T::one(),
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Dilation<T>) -> Dilation<T> {
        Dilation {
            center: std::array::from_fn(|mu| other.center[mu] + other.scale * self.center[mu]),
            scale: self.scale * other.scale,
        }
    }

    pub fn inverse(&self) -> Dilation<T> {
        let inv = T::one() / self.scale;
        Dilation {
            center: std::array::from_fn(|mu| -self.center[mu] * inv),
            scale: inv,
        }
    }
}

/// Returns `(x - z) / lambda`.
pub fn apply_dilation<T: Real>(d: &Dilation<T>, x: &Point<T>) -> Point<T> {
    std::array::from_fn(|mu| (x[mu] - d.center[mu]) / d.scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torus_volume_is_product_of_extents() {
        let chart = build_lattice(&ChartSpec::torus(8, 1.0f64)).unwrap();
        assert!((chart.total_volume() - 1.0).abs() < 1e-12);
        let spec = ChartSpec {
            extent: [1.0, 2.0, 0.5, 3.0],
            ..ChartSpec::torus(6, 1.0f64)
        };
        let chart = build_lattice(&spec).unwrap();
        assert!((chart.total_volume() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_specs() {
        let mut spec = ChartSpec::torus(8, 1.0f64);
        spec.sites = [2, 8, 8, 8];
        assert!(build_lattice(&spec).is_err());
        let spec = ChartSpec::torus(8, 1.0f64).with_metric(MetricKind::RoundS4);
        assert!(build_lattice(&spec).is_err());
        let mut spec = ChartSpec::torus(8, 1.0f64);
        spec.extent[2] = 0.0;
        assert!(build_lattice(&spec).is_err());
        assert!(build_lattice(&ChartSpec::open(8, 4.0f64)).is_err());
        let narrow = ChartSpec::open(16, 4.0f64).with_shell(1);
        assert!(build_lattice(&narrow).is_err());
        assert!(build_lattice(&narrow.with_stencil(Stencil::Central2)).is_ok());
    }

    #[test]
    fn index_round_trip_and_neighbors() {
        let chart = build_lattice(&ChartSpec::torus(5, 1.0f64)).unwrap();
        for s in [0, 17, 311, 624] {
            let m = chart.multi(s);
            assert_eq!(chart.index(m), s);
        }
        let s = chart.index([4, 0, 2, 3]);
        let m = chart.multi(s);
        assert_eq!(chart.neighbor(s, &m, 0, 1), Some(chart.index([0, 0, 2, 3])));
        assert_eq!(chart.neighbor(s, &m, 1, -1), Some(chart.index([4, 4, 2, 3])));
        let open = build_lattice(&ChartSpec::open(12, 1.0f64)).unwrap();
        let s = open.index([0, 5, 5, 5]);
        assert_eq!(open.neighbor(s, &open.multi(s), 0, -1), None);
        assert!(!open.is_interior(s));
        assert!(open.is_interior(open.index([2, 2, 9, 5])));
    }

    #[test]
    fn distances() {
        let chart = build_lattice(&ChartSpec::torus(8, 1.0f64)).unwrap();
        let d = chart.distance(&[0.1, 0.0, 0.0, 0.0], &[0.9, 0.0, 0.0, 0.0]).unwrap();
        assert!((d - 0.2).abs() < 1e-12);
        let x = [0.3, 0.2, 0.7, 0.1];
        assert_eq!(chart.distance(&x, &x).unwrap(), 0.0);
        let open = build_lattice(&ChartSpec::open(16, 5.0f64)).unwrap();
        let d = open.distance(&[0.0; 4], &[3.0, 4.0, 0.0, 0.0]).unwrap();
        assert!((d - 5.0).abs() < 1e-12);
        assert!(open.distance(&[0.0; 4], &[6.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn dilation_examples() {
        let id = Dilation::<f64>::identity();
        assert_eq!(apply_dilation(&id, &[1.0, 2.0, 3.0, 4.0]), [1.0, 2.0, 3.0, 4.0]);
        let d = Dilation::new(2.0, [0.0; 4]).unwrap();
        assert_eq!(apply_dilation(&d, &[2.0, 0.0, 0.0, 0.0]), [1.0, 0.0, 0.0, 0.0]);
        let d = Dilation::new(0.5, [1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(apply_dilation(&d, &[1.0, 1.0, 0.0, 0.0]), [0.0, 2.0, 0.0, 0.0]);
        assert!(Dilation::new(0.0, [0.0f64; 4]).is_err());
    }

    #[test]
    fn single_precision_chart() {
        let chart = build_lattice(&ChartSpec::torus(6, 2.0f32)).unwrap();
        assert!((chart.total_volume() - 16.0).abs() < 1e-3);
    }
}
