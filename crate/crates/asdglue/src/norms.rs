//! L^p, covariant Sobolev and inverse-square-kernel ("sharp") norms.
//!
//! Sharp norms of a field `f` with pointwise norm `|f|`:
//!
//! * `sharp(f)  = sup_x  int dist(x, y)^-2 |f(y)| dV(y)`
//! * `2sharp(f) = sup_x (int dist(x, y)^-2 |f(y)|^2 dV(y))^(1/2)`
//! * `sharp2 = sharp + L2`, `2sharp4 = 2sharp + L4`
//!
//! The supremum runs over a sub-lattice of centres (every `stride`-th site
//! per axis). On the self cell the kernel is replaced by its cell average,
//! `SELF_CELL / h^2`. On the round metric the distance is the chordal one,
//! `|x - y| (Omega(x) Omega(y))^(1/2)`, which keeps the kernel separable so
//! that the sums are FFT convolutions.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::calculus::covariant_derivative;
use crate::error::{Error, Result};
use crate::fft::Fft4;
use crate::field::{ConnectionField, FormKind, LatticeField, PointwiseField, TensorField};
use crate::geometry::{norm4, LatticeChart, Point, Topology};
use crate::scalar::{c, f64_of, Real};

/// `int_{[-1/2,1/2]^4} |y|^-2 dy`: the cell average of the inverse-square
/// kernel on a unit cube.
pub const SELF_CELL: f64 = 4.286_854_062_301_842;

/// Largest FFT grid used for sharp norms.
pub const MAX_SHARP_GRID: usize = 1 << 24;

/// Lebesgue exponent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Exponent {
    pub const L43: Exponent = Exponent::Finite(4.0 / 3.0);
    pub const L2: Exponent = Exponent::Finite(2.0);
    pub const L4: Exponent = Exponent::Finite(4.0);
}

/// Subset of a chart over which a norm is taken.
#[derive(Clone, Debug, PartialEq)]
pub enum Region<T> {
    Whole,
    /// `|x - center| < radius`.
    Ball {
        center: Point<T>,
        radius: T,
    },
    /// `inner < |x - center| < outer`.
    Annulus {
        center: Point<T>,
        inner: T,
        outer: T,
    },
    /// `|x - center| >= radius`.
    Exterior {
        center: Point<T>,
        radius: T,
    },
}

impl<T: Real> Region<T> {
    pub fn contains(&self, chart: &LatticeChart<T>, x: &Point<T>) -> bool {
        match self {
            Region::Whole => true,
            Region::Ball { center, radius } => norm4(&chart.displacement(center, x)) < *radius,
            Region::Annulus { center, inner, outer } => {
                let r = norm4(&chart.displacement(center, x));
                r > *inner && r < *outer
            }
            Region::Exterior { center, radius } => norm4(&chart.displacement(center, x)) >= *radius,
        }
    }

    pub fn label(&self) -> String {
        let p = |x: &Point<T>| {
            x.iter()
                .map(|v| format!("{}", f64_of(*v)))
                .collect::<Vec<_>>()
                .join(" ")
        };
        match self {
            Region::Whole => "all".into(),
            Region::Ball { center, radius } => format!("ball({};{})", p(center), f64_of(*radius)),
            Region::Annulus { center, inner, outer } => {
                format!("annulus({};{};{})", p(center), f64_of(*inner), f64_of(*outer))
            }
            Region::Exterior { center, radius } => format!("exterior({};{})", p(center), f64_of(*radius)),
        }
    }

    fn mask(&self, chart: &LatticeChart<T>) -> Option<Vec<bool>> {
        match self {
            Region::Whole => None,
            _ => Some(
                (0..chart.sites())
                    .map(|s| self.contains(chart, &chart.position(s)))
                    .collect(),
            ),
        }
    }
}

/// Pointwise norm in the chart metric: `Omega^-k |f|_flat` for a k-form.
fn metric_norm<T: Real, F: PointwiseField<T> + ?Sized>(f: &F, s: usize) -> T {
    let chart = f.chart();
    let n = f.norm_sq_at(s).sqrt();
    if f.degree() == 0 {
        return n;
    }
    let om = chart.conformal_factor(&chart.position(s));
    if om == T::one() {
        n
    } else {
        n / om.powi(f.degree() as i32)
    }
}

/// Quadrature-weighted `p`-norm of the pointwise norm, restricted to a
/// region. Errors when the region contains no quadrature site.
pub fn lp_norm<T: Real, F: PointwiseField<T> + Sync + ?Sized>(f: &F, p: Exponent, region: &Region<T>) -> Result<T> {
    let chart = f.chart();
    let mask = region.mask(chart);
    let inside = |s: usize| chart.is_interior(s) && mask.as_ref().is_none_or(|m| m[s]);
    let any = (0..chart.sites()).any(inside);
    if !any {
        return Err(Error::EmptyRegion);
    }
    match p {
        Exponent::Infinity => Ok((0..chart.sites())
            .into_par_iter()
            .filter(|&s| inside(s))
            .map(|s| metric_norm(f, s))
            .reduce(|| T::zero(), |a, b| a.max(b))),
        Exponent::Finite(pp) => {
            if pp < 1.0 {
                return Err(Error::InvalidParameter(format!("exponent {pp} < 1")));
            }
            let pt = c::<T>(pp);
            let sum = crate::calculus::chunked_sum(chart.sites(), |s| {
                if !inside(s) {
                    return T::zero();
                }
                let w = chart.weight(s);
                let n = metric_norm(f, s);
                if n == T::zero() {
                    T::zero()
                } else if pp == 2.0 {
                    w * n * n
                } else {
                    w * n.powf(pt)
                }
            });
            Ok(sum.powf(T::one() / pt))
        }
    }
}

/// Which sharp norm to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SharpVariant {
    Sharp,
    TwoSharp,
}

/// Centre subsampling for sharp norms.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SharpOptions {
    pub stride: usize,
}

impl Default for SharpOptions {
    fn default() -> Self {
        SharpOptions { stride: 2 }
    }
}

fn self_cell<T: Real>(chart: &LatticeChart<T>) -> f64 {
    // Geometric-mean spacing for anisotropic cells.
    let h = chart.spacing().iter().fold(1.0, |a, &v| a * f64_of(v)).powf(0.25);
    SELF_CELL / (h * h)
}

fn is_center<T: Real>(chart: &LatticeChart<T>, s: usize, stride: usize) -> bool {
    let m = chart.multi(s);
    chart.is_interior_multi(m) && m.iter().all(|&i| (i - chart.shell()).is_multiple_of(stride))
}

/// Source density `|f|_g^power dV / Omega` at every site (zero outside the
/// region and the interior).
fn sharp_source<T: Real, F: PointwiseField<T> + Sync + ?Sized>(f: &F, power: u32, region: &Region<T>) -> Vec<f64> {
    let chart = f.chart();
    let mask = region.mask(chart);
    (0..chart.sites())
        .into_par_iter()
        .map(|s| {
            if !chart.is_interior(s) || mask.as_ref().is_some_and(|m| !m[s]) {
                return 0.0;
            }
            let n = f64_of(metric_norm(f, s)).powi(power as i32);
            let om = f64_of(chart.conformal_factor(&chart.position(s)));
            n * f64_of(chart.weight(s)) / om
        })
        .collect()
}

/// Sharp norm by FFT convolution. Errors on open charts too large for the
/// zero-padded grid.
pub fn sharp_norm<T: Real, F: PointwiseField<T> + Sync + ?Sized>(
    f: &F,
    variant: SharpVariant,
    region: &Region<T>,
    opts: SharpOptions,
) -> Result<T> {
    let chart = f.chart();
    if opts.stride == 0 {
        return Err(Error::InvalidParameter("sharp stride must be positive".into()));
    }
    let power = match variant {
        SharpVariant::Sharp => 1,
        SharpVariant::TwoSharp => 2,
    };
    let src = sharp_source(f, power, region);
    let n = chart.dims();
    let torus = chart.topology() == Topology::Torus;
    let grid: [usize; 4] = if torus { n } else { std::array::from_fn(|a| 2 * n[a]) };
    let total: usize = grid.iter().product();
    if total > MAX_SHARP_GRID {
        return Err(Error::Unsupported("chart too large for sharp norms"));
    }
    let h = chart.spacing().map(f64_of);
    let ext = chart.extent().map(f64_of);
    let gstr = [grid[1] * grid[2] * grid[3], grid[2] * grid[3], grid[3], 1];
    let fft = Fft4::new(grid);
    // Kernel indexed by displacement (wrapping).
    let sc = self_cell(chart);
    let mut kern: Vec<Complex64> = (0..total)
        .into_par_iter()
        .map(|i| {
            let mut r2 = 0.0;
            let mut rem = i;
            for a in 0..4 {
                let k = rem / gstr[a];
                rem %= gstr[a];
                let g = grid[a] as isize;
                let kk = if (k as isize) <= g / 2 {
                    k as isize
                } else {
                    k as isize - g
                };
                let mut d = kk as f64 * h[a];
                if torus {
                    d -= (d / ext[a]).round() * ext[a];
                }
                r2 += d * d;
            }
            Complex64::new(if r2 == 0.0 { sc } else { 1.0 / r2 }, 0.0)
        })
        .collect();
    let mut data = vec![Complex64::new(0.0, 0.0); total];
    for s in 0..chart.sites() {
        if src[s] != 0.0 {
            let m = chart.multi(s);
            let idx = m[0] * gstr[0] + m[1] * gstr[1] + m[2] * gstr[2] + m[3];
            data[idx] = Complex64::new(src[s], 0.0);
        }
    }
    fft.forward(&mut kern);
    fft.forward(&mut data);
    data.par_iter_mut().zip(kern.par_iter()).for_each(|(a, k)| *a *= k);
    fft.inverse(&mut data);
    let mask = region.mask(chart);
    let best = (0..chart.sites())
        .into_par_iter()
        .filter(|&s| is_center(chart, s, opts.stride) && mask.as_ref().is_none_or(|m| m[s]))
        .map(|s| {
            let m = chart.multi(s);
            let idx = m[0] * gstr[0] + m[1] * gstr[1] + m[2] * gstr[2] + m[3];
            let om = f64_of(chart.conformal_factor(&chart.position(s)));
            data[idx].re.max(0.0) / om
        })
        .reduce(|| 0.0, f64::max);
    Ok(c(match variant {
        SharpVariant::Sharp => best,
        SharpVariant::TwoSharp => best.sqrt(),
    }))
}

/// Sharp norm by direct summation (reference implementation).
pub fn sharp_norm_direct<T: Real, F: PointwiseField<T> + Sync + ?Sized>(
    f: &F,
    variant: SharpVariant,
    region: &Region<T>,
    opts: SharpOptions,
) -> Result<T> {
    let chart = f.chart();
    let power = match variant {
        SharpVariant::Sharp => 1,
        SharpVariant::TwoSharp => 2,
    };
    let src = sharp_source(f, power, region);
    let nz: Vec<(Point<f64>, f64)> = (0..chart.sites())
        .filter(|&s| src[s] != 0.0)
        .map(|s| (chart.position(s).map(f64_of), src[s]))
        .collect();
    let sc = self_cell(chart);
    let mask = region.mask(chart);
    let best = (0..chart.sites())
        .into_par_iter()
        .filter(|&s| is_center(chart, s, opts.stride.max(1)) && mask.as_ref().is_none_or(|m| m[s]))
        .map(|s| {
            let x = chart.position(s);
            let xf = x.map(f64_of);
            let mut acc = 0.0;
            for (y, w) in &nz {
                let yt: Point<T> = y.map(c);
                let d = chart.displacement(&x, &yt).map(f64_of);
                let r2: f64 = d.iter().map(|v| v * v).sum();
                let r2 = if r2 < 1e-300 || (xf == *y) { 0.0 } else { r2 };
                acc += w * if r2 == 0.0 { sc } else { 1.0 / r2 };
            }
            acc / f64_of(chart.conformal_factor(&x))
        })
        .reduce(|| 0.0, f64::max);
    Ok(c(match variant {
        SharpVariant::Sharp => best,
        SharpVariant::TwoSharp => best.sqrt(),
    }))
}

/// `(sum_{i <= k} ||nabla_A^i f||^2)^(1/2)` for `k <= 3`.
pub fn sobolev_norm<T: Real, K: FormKind>(conn: &ConnectionField<T>, f: &LatticeField<T, K>, k: u32) -> Result<T> {
    sobolev_norm_tensor(conn, &TensorField::from_form(f), k)
}

pub fn sobolev_norm_tensor<T: Real>(conn: &ConnectionField<T>, f: &TensorField<T>, k: u32) -> Result<T> {
    if k > 3 {
        return Err(Error::InvalidParameter(format!("Sobolev order {k} > 3")));
    }
    let mut total = lp_norm(f, Exponent::L2, &Region::Whole)?.powi(2);
    let mut cur = f.clone();
    for _ in 0..k {
        cur = covariant_derivative(conn, &cur)?;
        total += lp_norm(&cur, Exponent::L2, &Region::Whole)?.powi(2);
    }
    Ok(total.sqrt())
}

/// The norm families of one field over one region.
#[derive(Clone, Debug, PartialEq)]
pub struct NormReport {
    pub field_id: String,
    pub region: String,
    pub l2: f64,
    pub l4: f64,
    pub linf: f64,
    pub l43: f64,
    /// `None` when the chart is too large for the sharp convolution.
    pub sharp: Option<f64>,
    pub two_sharp: Option<f64>,
    /// `(k, ||f||_{L^2_{k,A}})` pairs when requested.
    pub sobolev: Vec<(u32, f64)>,
}

impl NormReport {
    pub const CSV_HEADER: &'static str = "field_id,region,L2,L4,Linf,L43,sharp,sharp2,2sharp,2sharp4";

    pub fn compute<T: Real, F: PointwiseField<T> + Sync + ?Sized>(
        field_id: &str,
        f: &F,
        region: &Region<T>,
        opts: SharpOptions,
    ) -> Result<Self> {
        let g = |p| lp_norm(f, p, region).map(f64_of);
        let sharp = |v| match sharp_norm(f, v, region, opts) {
            Ok(x) => Ok(Some(f64_of(x))),
            Err(Error::Unsupported(_)) => Ok(None),
            Err(e) => Err(e),
        };
        Ok(NormReport {
            field_id: field_id.to_string(),
            region: region.label(),
            l2: g(Exponent::L2)?,
            l4: g(Exponent::L4)?,
            linf: g(Exponent::Infinity)?,
            l43: g(Exponent::L43)?,
            sharp: sharp(SharpVariant::Sharp)?,
            two_sharp: sharp(SharpVariant::TwoSharp)?,
            sobolev: Vec::new(),
        })
    }

    pub fn sharp2(&self) -> Option<f64> {
        self.sharp.map(|s| s + self.l2)
    }

    pub fn two_sharp4(&self) -> Option<f64> {
        self.two_sharp.map(|s| s + self.l4)
    }

    /// Value by tag: `L2`, `L4`, `Linf`, `L43`, `sharp`, `sharp2`, `2sharp`,
    /// `2sharp4` or `L2kA(k)`.
    pub fn get(&self, tag: &str) -> Option<f64> {
        match tag {
            "L2" => Some(self.l2),
            "L4" => Some(self.l4),
            "Linf" => Some(self.linf),
            "L43" => Some(self.l43),
            "sharp" => self.sharp,
            "sharp2" => self.sharp2(),
            "2sharp" => self.two_sharp,
            "2sharp4" => self.two_sharp4(),
            _ => {
                let k: u32 = tag.strip_prefix("L2kA(")?.strip_suffix(')')?.parse().ok()?;
                self.sobolev.iter().find(|(j, _)| *j == k).map(|&(_, v)| v)
            }
        }
    }

    pub fn csv_row(&self) -> String {
        let o = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.field_id,
            self.region.replace(',', ";"),
            self.l2,
            self.l4,
            self.linf,
            self.l43,
            o(self.sharp),
            o(self.sharp2()),
            o(self.two_sharp),
            o(self.two_sharp4())
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::LieValue;
    use crate::bundle::Bundle;
    use crate::field::{ScalarField, SelfDualField, TwoFormField};
    use crate::geometry::{build_lattice, ChartSpec, MetricKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn torus(n: usize, l: f64) -> Arc<Bundle<f64>> {
        Bundle::trivial(Arc::new(build_lattice(&ChartSpec::torus(n, l)).unwrap()))
    }

    #[test]
    fn constant_field_on_unit_torus() {
        let b = torus(4, 1.0);
        let f = SelfDualField::from_fn(&b, |_, _| {
            vec![LieValue::new(1.0, 0.0, 0.0), LieValue::zero(), LieValue::zero()]
        });
        let pointwise = f.pointwise_norm_sq(0).sqrt();
        for p in [Exponent::L2, Exponent::L4, Exponent::L43, Exponent::Infinity] {
            let v = lp_norm(&f, p, &Region::Whole).unwrap();
            assert!((v - pointwise).abs() < 1e-12, "{p:?}");
        }
    }

    #[test]
    fn homogeneity_holder_and_ordering() {
        let b = torus(6, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = TwoFormField::random(&b, &mut rng);
        let g = f.scaled(2.0);
        for p in [Exponent::L2, Exponent::L4, Exponent::Infinity] {
            let a = lp_norm(&f, p, &Region::Whole).unwrap();
            let bb = lp_norm(&g, p, &Region::Whole).unwrap();
            assert!((bb - 2.0 * a).abs() < 1e-12 * bb);
        }
        let r = NormReport::compute("f", &f, &Region::Whole, SharpOptions::default()).unwrap();
        assert!(r.l2 * r.l2 <= r.l4 * r.l43 * (1.0 + 1e-12));
        assert!(r.l2 <= r.sharp2().unwrap());
        assert!(r.get("2sharp4").unwrap() >= r.l4);
    }

    #[test]
    fn empty_region_is_error() {
        let b = torus(4, 1.0);
        let f = SelfDualField::<f64>::zeros(&b);
        let r = Region::Ball {
            center: [0.0; 4],
            radius: 1e-6,
        };
        assert!(matches!(lp_norm(&f, Exponent::L2, &r), Err(Error::EmptyRegion)));
    }

    #[test]
    fn spike_sharp_is_self_cell_value() {
        let b = torus(8, 1.0);
        let chart = b.chart();
        let h = chart.spacing()[0];
        let center = chart.index([2, 2, 2, 2]);
        let mass = 3.0;
        let values = (0..chart.sites())
            .map(|s| if s == center { mass / chart.cell_volume() } else { 0.0 })
            .collect();
        let f = ScalarField {
            chart,
            values,
            degree: 0,
        };
        let sharp = sharp_norm(&f, SharpVariant::Sharp, &Region::Whole, SharpOptions::default()).unwrap();
        assert!((sharp - mass * SELF_CELL / (h * h)).abs() < 1e-9 * sharp);
        let zero = ScalarField {
            chart,
            values: vec![0.0; chart.sites()],
            degree: 0,
        };
        assert_eq!(
            sharp_norm(&zero, SharpVariant::TwoSharp, &Region::Whole, SharpOptions::default()).unwrap(),
            0.0
        );
    }

    #[test]
    fn fft_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let charts = [
            ChartSpec::torus(6, 1.3),
            ChartSpec::open(10, 2.0),
            ChartSpec::open(10, 2.0).with_metric(MetricKind::RoundS4),
        ];
        for spec in charts {
            let b = Bundle::trivial(Arc::new(build_lattice(&spec).unwrap()));
            let f = SelfDualField::random(&b, &mut rng);
            for v in [SharpVariant::Sharp, SharpVariant::TwoSharp] {
                let region = Region::Ball {
                    center: [0.1; 4],
                    radius: 1.5,
                };
                let a: f64 = sharp_norm(&f, v, &region, SharpOptions::default()).unwrap();
                let d = sharp_norm_direct(&f, v, &region, SharpOptions::default()).unwrap();
                assert!((a - d).abs() < 1e-9 * d, "{a} {d}");
            }
        }
    }

    #[test]
    fn sobolev_plane_wave() {
        let n = 16;
        let b = torus(n, 1.0);
        let zero = ConnectionField::zeros(&b);
        let f = SelfDualField::from_fn(&b, |_, x| {
            vec![
                LieValue::new((std::f64::consts::TAU * x[1]).sin(), 0.0, 0.0),
                LieValue::zero(),
                LieValue::zero(),
            ]
        });
        let k0 = sobolev_norm(&zero, &f, 0).unwrap();
        let k1 = sobolev_norm(&zero, &f, 1).unwrap();
        let k2 = sobolev_norm(&zero, &f, 2).unwrap();
        assert!((k0 - lp_norm(&f, Exponent::L2, &Region::Whole).unwrap()).abs() < 1e-14);
        // Discrete symbol of the chart stencil at the plane-wave frequency.
        let h = 1.0 / n as f64;
        let th = std::f64::consts::TAU * h;
        let sym = b
            .chart()
            .stencil()
            .taps()
            .iter()
            .fold(num_complex::Complex64::new(0.0, 0.0), |a, &(o, w)| {
                a + num_complex::Complex64::from_polar(w / h, th * o as f64)
            });
        let expect = (1.0 + sym.norm_sqr()).sqrt();
        assert!((k1 / k0 - expect).abs() < 1e-9 * expect);
        // Continuum factor (1 + 4 pi^2 |k|^2)^(1/2) to stencil accuracy.
        let cont = (1.0 + std::f64::consts::TAU.powi(2)).sqrt();
        assert!((k1 / k0 - cont).abs() < 0.05 * cont);
        assert!(k0 <= k1 && k1 <= k2);
        assert!(sobolev_norm(&zero, &f, 4).is_err());
    }
}
