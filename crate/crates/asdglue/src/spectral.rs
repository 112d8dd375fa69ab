//! Low spectrum of `Delta_A = d_A^+ d_A^{+,*}` on self-dual fields over a
//! torus chart, the spectral projection onto eigenvalues below a cutoff
//! `mu`, the Green's operator on its complement and the partial right
//! inverse `d_A^{+,*} G`.
//!
//! Internally a self-dual field is a flat `f64` vector of `9 * sites`
//! coefficients. On a flat torus the field inner product is a constant
//! multiple of the Euclidean one, so all dense linear algebra is Euclidean.

use std::hash::{Hash, Hasher};
use std::sync::Arc;

use nalgebra::{DMatrix, Matrix3, SymmetricEigen, Vector3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::algebra::LieValue;
use crate::bundle::Bundle;
use crate::calculus::OperatorHandle;
use crate::error::{Error, Result};
use crate::fft::Fft4;
use crate::field::{ConnectionField, SelfDualField};
use crate::geometry::{LatticeChart, MetricKind, Topology};
use crate::norms::{lp_norm, Exponent, Region};
use crate::scalar::{c, f64_of, Real};

/// Largest supported number of requested eigenpairs.
pub const MAX_EIGENPAIRS: usize = 40;
/// Largest operator dimension handled by [`dense_spectrum`].
pub const DENSE_LIMIT: usize = 6000;

/// Options of the block eigensolver.
#[derive(Clone, Debug)]
pub struct SpectrumOptions {
    /// Residual bound `||Delta eta - mu eta|| <= tol * max(1, mu)`.
    pub tol: f64,
    /// Seed of the start block.
    pub seed: u64,
    pub max_iterations: usize,
    /// Guard vectors carried beyond the requested count.
    pub extra: usize,
    /// Upper bound on the block size when a cluster straddles the block edge.
    pub max_block: usize,
    /// Shift of the inner solves; defaults to a tenth of the flat gap.
    pub shift: Option<f64>,
    /// Spectral cutoff; defaults to half the flat gap.
    pub mu: Option<f64>,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions {
            tol: 1e-8,
            seed: 0x5eed,
            max_iterations: 300,
            extra: 6,
            max_block: 128,
            shift: None,
            mu: None,
        }
    }
}

/// Computed low spectrum of `Delta_A`.
#[derive(Clone, Debug)]
pub struct SpectralData<T> {
    /// Cutoff `mu`.
    pub mu: f64,
    /// Eigenvalues in increasing order.
    pub eigenvalues: Vec<f64>,
    /// `L^2`-orthonormal eigenvectors.
    pub eigenvectors: Vec<SelfDualField<T>>,
    pub residuals: Vec<f64>,
    /// Number of eigenvalues below `mu`.
    pub cluster_count: usize,
    /// Number of eigenvalues below `1e-8 ||Delta||`.
    pub kernel_dim: usize,
    /// Least computed eigenvalue `>= mu`.
    pub nu2: Option<f64>,
    /// Power-iteration estimate of `||Delta||`.
    pub op_norm: f64,
    /// Shift used by the inner solves.
    pub shift: f64,
    pub iterations: usize,
    pub block: usize,
    fingerprint: u64,
}

impl<T: Real> SpectralData<T> {
    /// True when no computed eigenvalue lies in `[mu/2, mu]`.
    pub fn separated(&self) -> bool {
        !self.eigenvalues.iter().any(|&e| e >= self.mu / 2.0 && e <= self.mu)
    }

    /// Largest entry of `G - I` for the Gram matrix of the eigenvectors.
    pub fn gram_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, a) in self.eigenvectors.iter().enumerate() {
            for (j, b) in self.eigenvectors.iter().enumerate() {
                let g = f64_of(a.inner_unchecked(b));
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
        }
        worst
    }

    /// Eigenvectors spanning the range of the low projection.
    pub fn low_vectors(&self) -> &[SelfDualField<T>] {
        &self.eigenvectors[..self.cluster_count]
    }

    /// Fails unless `a` is the connection this data was computed for.
    pub fn check(&self, a: &ConnectionField<T>) -> Result<()> {
        if connection_fingerprint(a) == self.fingerprint {
            Ok(())
        } else {
            Err(Error::SpectralMismatch)
        }
    }
}

fn connection_fingerprint<T: Real>(a: &ConnectionField<T>) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    a.chart().dims().hash(&mut h);
    a.bundle().patches().len().hash(&mut h);
    for v in a.as_flat() {
        f64_of(*v).to_bits().hash(&mut h);
    }
    h.finish()
}

fn require_flat_torus<T: Real>(chart: &LatticeChart<T>) -> Result<()> {
    if chart.topology() != Topology::Torus || chart.metric() != MetricKind::Flat {
        return Err(Error::Unsupported("a flat torus chart"));
    }
    Ok(())
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

fn field_to_vec<T: Real>(f: &SelfDualField<T>) -> Vec<f64> {
    f.as_flat().iter().map(|&v| f64_of(v)).collect()
}

fn vec_to_field<T: Real>(bundle: &Arc<Bundle<T>>, x: &[f64], scale: f64) -> Result<SelfDualField<T>> {
    let data = x
        .chunks_exact(3)
        .map(|v| LieValue([c(v[0] * scale), c(v[1] * scale), c(v[2] * scale)]))
        .collect();
    SelfDualField::from_data(bundle, data)
}

/// Field inner product per Euclidean coefficient product on a flat torus.
fn coefficient_weight<T: Real>(chart: &LatticeChart<T>) -> f64 {
    // Self-dual norm factor 2 times the half coefficient dot.
    f64_of(chart.form_weight(0, 2, c(2.0)))
}

/// Flat operator `Delta_0` of the trivial bundle with zero connection,
/// diagonalized by the discrete Fourier transform: one Hermitian 3x3 block
/// per wave vector, acting identically on the three Lie coefficients.
pub struct FlatSymbol {
    fft: Fft4,
    symbol: Vec<Matrix3<Complex64>>,
}

impl FlatSymbol {
    /// Symbol read off from the responses to unit impulses at the origin.
    pub fn new<T: Real>(chart: &Arc<LatticeChart<T>>) -> Result<Self> {
        require_flat_torus(chart)?;
        let bundle = Bundle::trivial(chart.clone());
        let op = OperatorHandle::new(&ConnectionField::zeros(&bundle))?;
        let v = chart.sites();
        let fft = Fft4::new(chart.dims());
        let mut symbol = vec![Matrix3::zeros(); v];
        let mut x = vec![LieValue::zero(); v * 3];
        let mut tmp = vec![LieValue::zero(); v * 4];
        let mut out = vec![LieValue::zero(); v * 3];
        let mut line = vec![Complex64::new(0.0, 0.0); v];
        for j in 0..3 {
            x.iter_mut().for_each(|e| *e = LieValue::zero());
            x[j] = LieValue::basis(0);
            op.apply_laplacian(&x, &mut tmp, &mut out);
            for i in 0..3 {
                for (s, l) in line.iter_mut().enumerate() {
                    *l = Complex64::new(f64_of(out[s * 3 + i].0[0]), 0.0);
                }
                fft.forward(&mut line);
                for (k, l) in line.iter().enumerate() {
                    symbol[k][(i, j)] = *l;
                }
            }
        }
        for m in &mut symbol {
            *m = (*m + m.adjoint()) * Complex64::new(0.5, 0.0);
        }
        Ok(FlatSymbol { fft, symbol })
    }

    /// All eigenvalues of `Delta_0`, each Fourier block eigenvalue repeated
    /// for the three Lie coefficients, sorted increasingly.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut all = Vec::with_capacity(self.symbol.len() * 9);
        for m in &self.symbol {
            let e = SymmetricEigen::new(*m).eigenvalues;
            for v in e.iter() {
                all.extend([*v, *v, *v]);
            }
        }
        all.sort_by(f64::total_cmp);
        all
    }

    /// Least eigenvalue above `1e-8` times the largest.
    pub fn gap(&self) -> f64 {
        let all = self.eigenvalues();
        let top = *all.last().unwrap_or(&0.0);
        all.into_iter().find(|&e| e > 1e-8 * top).unwrap_or(top)
    }

    pub fn max(&self) -> f64 {
        *self.eigenvalues().last().unwrap_or(&0.0)
    }

    /// `(Delta_0 + sigma)^{-1}` with the per-block inverses cached.
    pub fn preconditioner(&self, sigma: f64) -> FlatPreconditioner<'_> {
        let shift = Matrix3::identity() * Complex64::new(sigma, 0.0);
        let inv = self
            .symbol
            .iter()
            .map(|m| (m + shift).try_inverse().unwrap_or_else(Matrix3::zeros))
            .collect();
        FlatPreconditioner { symbol: self, inv }
    }
}

/// Inverse of the shifted flat operator, applied by FFT.
pub struct FlatPreconditioner<'a> {
    symbol: &'a FlatSymbol,
    inv: Vec<Matrix3<Complex64>>,
}

impl FlatPreconditioner<'_> {
    /// `z = (Delta_0 + sigma)^{-1} r` on flat coefficient vectors.
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let v = self.inv.len();
        let fft = &self.symbol.fft;
        let mut bufs = [
            vec![Complex64::new(0.0, 0.0); v],
            vec![Complex64::new(0.0, 0.0); v],
            vec![Complex64::new(0.0, 0.0); v],
        ];
        // The filter is real, so two Lie coefficients share one complex pass.
        for (re, im) in [(0usize, Some(1usize)), (2, None)] {
            for (j, b) in bufs.iter_mut().enumerate() {
                for (s, e) in b.iter_mut().enumerate() {
                    let base = (s * 3 + j) * 3;
                    *e = Complex64::new(r[base + re], im.map_or(0.0, |a| r[base + a]));
                }
                fft.forward(b);
            }
            for k in 0..v {
                let w = self.inv[k] * Vector3::new(bufs[0][k], bufs[1][k], bufs[2][k]);
                for j in 0..3 {
                    bufs[j][k] = w[j];
                }
            }
            for (j, b) in bufs.iter_mut().enumerate() {
                fft.inverse(b);
                for (s, e) in b.iter().enumerate() {
                    let base = (s * 3 + j) * 3;
                    z[base + re] = e.re;
                    if let Some(a) = im {
                        z[base + a] = e.im;
                    }
                }
            }
        }
    }
}

/// Exact lowest `m` eigenvalues of the flat operator on a torus chart.
pub fn flat_spectrum<T: Real>(chart: &Arc<LatticeChart<T>>, m: usize) -> Result<Vec<f64>> {
    let mut all = FlatSymbol::new(chart)?.eigenvalues();
    all.truncate(m);
    Ok(all)
}

/// Matrix-free `Delta_A` (optionally compressed to the orthogonal
/// complement of a set of vectors) with its flat preconditioner.
struct Engine<'a, T> {
    op: &'a OperatorHandle<T>,
    pre: FlatPreconditioner<'a>,
    sigma: f64,
    constraints: Vec<Vec<f64>>,
    vin: Vec<LieValue<T>>,
    tmp: Vec<LieValue<T>>,
    vout: Vec<LieValue<T>>,
    n: usize,
}

impl<'a, T: Real> Engine<'a, T> {
    fn new(op: &'a OperatorHandle<T>, symbol: &'a FlatSymbol, sigma: f64, constraints: Vec<Vec<f64>>) -> Self {
        let sites = op.chart().sites();
        Engine {
            op,
            pre: symbol.preconditioner(sigma),
            sigma,
            constraints,
            vin: vec![LieValue::zero(); sites * 3],
            tmp: vec![LieValue::zero(); sites * 4],
            vout: vec![LieValue::zero(); sites * 3],
            n: sites * 9,
        }
    }

    fn project(&self, x: &mut [f64]) {
        for q in &self.constraints {
            let d = dot(q, x);
            axpy(-d, q, x);
        }
    }

    /// `y = Delta x`, compressed when constraints are present.
    fn apply(&mut self, x: &[f64], y: &mut [f64]) {
        for (v, xs) in self.vin.iter_mut().zip(x.chunks_exact(3)) {
            *v = LieValue([c(xs[0]), c(xs[1]), c(xs[2])]);
        }
        self.op.apply_laplacian(&self.vin, &mut self.tmp, &mut self.vout);
        for (ys, v) in y.chunks_exact_mut(3).zip(&self.vout) {
            ys[0] = f64_of(v.0[0]);
            ys[1] = f64_of(v.0[1]);
            ys[2] = f64_of(v.0[2]);
        }
        if !self.constraints.is_empty() {
            self.project(y);
        }
    }

    fn precondition(&self, r: &[f64], z: &mut [f64]) {
        self.pre.apply(r, z);
        self.project(z);
    }

    /// Preconditioned conjugate gradients for `(Delta + shift) x = b`,
    /// starting from `x`; stops at `||residual|| <= tol`.
    fn pcg(&mut self, shift: f64, b: &[f64], x: &mut [f64], tol: f64, max_it: usize) -> (usize, f64) {
        let n = self.n;
        let mut r = vec![0.0; n];
        let mut q = vec![0.0; n];
        self.apply(x, &mut q);
        axpy(shift, x, &mut q);
        for i in 0..n {
            r[i] = b[i] - q[i];
        }
        self.project(&mut r);
        let mut z = vec![0.0; n];
        self.precondition(&r, &mut z);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut rn = norm(&r);
        for it in 0..max_it {
            if rn <= tol {
                return (it, rn);
            }
            self.apply(&p, &mut q);
            axpy(shift, &p, &mut q);
            let pq = dot(&p, &q);
            if !(pq > 0.0) {
                return (it, rn);
            }
            let alpha = rz / pq;
            axpy(alpha, &p, x);
            axpy(-alpha, &q, &mut r);
            self.precondition(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
            rn = norm(&r);
        }
        (max_it, rn)
    }

    fn apply_block(&mut self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.n;
        let mut y = DMatrix::zeros(n, x.ncols());
        for j in 0..x.ncols() {
            let (src, dst) = (
                &x.as_slice()[j * n..(j + 1) * n],
                &mut y.as_mut_slice()[j * n..(j + 1) * n],
            );
            self.apply(src, dst);
        }
        y
    }

    fn random_column<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let mut v: Vec<f64> = (0..self.n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        self.project(&mut v);
        v
    }

    /// Orthonormalizes the columns in place (Cholesky QR twice, modified
    /// Gram-Schmidt with random refills on breakdown).
    fn orthonormalize<R: Rng>(&self, y: &mut DMatrix<f64>, rng: &mut R) {
        for _ in 0..2 {
            let g = y.tr_mul(y);
            match g.clone().cholesky() {
                Some(ch) if min_diag_ratio(&ch.l()) > 1e-6 => {
                    let rinv = ch
                        .l()
                        .transpose()
                        .try_inverse()
                        .expect("triangular factor is invertible");
                    *y = &*y * rinv;
                }
                _ => self.gram_schmidt(y, rng),
            }
        }
    }

    fn gram_schmidt<R: Rng>(&self, y: &mut DMatrix<f64>, rng: &mut R) {
        let n = self.n;
        for j in 0..y.ncols() {
            let mut attempts = 0;
            loop {
                let (done, rest) = y.as_mut_slice().split_at_mut(j * n);
                let col = &mut rest[..n];
                let before = norm(col);
                for _ in 0..2 {
                    for i in 0..j {
                        let qi = &done[i * n..(i + 1) * n];
                        let d = dot(qi, col);
                        axpy(-d, qi, col);
                    }
                }
                let after = norm(col);
                if after > 1e-8 * before && after > 0.0 {
                    col.iter_mut().for_each(|v| *v /= after);
                    break;
                }
                attempts += 1;
                assert!(attempts < 10, "cannot extend orthonormal block");
                let fresh = self.random_column(rng);
                col.copy_from_slice(&fresh);
            }
        }
    }
}

fn min_diag_ratio(l: &DMatrix<f64>) -> f64 {
    let d: Vec<f64> = (0..l.nrows()).map(|i| l[(i, i)].abs()).collect();
    let hi = d.iter().cloned().fold(0.0, f64::max);
    let lo = d.iter().cloned().fold(f64::INFINITY, f64::min);
    if hi > 0.0 {
        lo / hi
    } else {
        0.0
    }
}

/// Rayleigh-Ritz on an orthonormal block: returns sorted Ritz values and
/// rotates `x` and `ax` onto the Ritz vectors.
fn rayleigh_ritz(x: &mut DMatrix<f64>, ax: &mut DMatrix<f64>) -> Vec<f64> {
    let h = x.tr_mul(ax);
    let h = (&h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let b = order.len();
    let v = DMatrix::from_fn(b, b, |i, j| eig.eigenvectors[(i, order[j])]);
    *x = &*x * &v;
    *ax = &*ax * &v;
    order.iter().map(|&i| eig.eigenvalues[i]).collect()
}

fn column_residuals(x: &DMatrix<f64>, ax: &DMatrix<f64>, theta: &[f64]) -> Vec<f64> {
    let n = x.nrows();
    (0..x.ncols())
        .map(|j| {
            let xs = &x.as_slice()[j * n..(j + 1) * n];
            let ys = &ax.as_slice()[j * n..(j + 1) * n];
            xs.iter()
                .zip(ys)
                .map(|(a, b)| (b - theta[j] * a).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

struct BlockResult {
    theta: Vec<f64>,
    x: DMatrix<f64>,
    residuals: Vec<f64>,
    iterations: usize,
    block: usize,
}

/// Block inverse iteration with Rayleigh-Ritz, locking of converged leading
/// pairs and block growth when the wanted eigenvalues sit in a cluster that
/// reaches the block edge.
fn block_inverse_iteration<T: Real>(
    engine: &mut Engine<'_, T>,
    m: usize,
    opts: &SpectrumOptions,
) -> Result<BlockResult> {
    let n = engine.n;
    let avail = n - engine.constraints.len();
    if m > avail {
        return Err(Error::InvalidParameter(format!(
            "{m} eigenpairs requested from a space of dimension {avail}"
        )));
    }
    let sigma = engine.sigma;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut b = (m + opts.extra).min(avail).max(m);
    let mut x = DMatrix::zeros(n, b);
    for j in 0..b {
        let col = engine.random_column(&mut rng);
        x.as_mut_slice()[j * n..(j + 1) * n].copy_from_slice(&col);
    }
    engine.orthonormalize(&mut x, &mut rng);
    let mut ax = engine.apply_block(&x);
    let mut theta = rayleigh_ritz(&mut x, &mut ax);
    let converged = |theta: &[f64], res: &[f64], i: usize| res[i] <= opts.tol * theta[i].abs().max(1.0);
    let mut last_res = f64::INFINITY;
    let mut history = Vec::new();
    for it in 0..opts.max_iterations {
        let res = column_residuals(&x, &ax, &theta);
        last_res = (0..m).map(|i| res[i]).fold(0.0, f64::max);
        if (0..m).all(|i| converged(&theta, &res, i)) {
            return Ok(BlockResult {
                theta: theta[..m].to_vec(),
                x: x.columns(0, m).into_owned(),
                residuals: res[..m].to_vec(),
                iterations: it,
                block: b,
            });
        }
        let locked = (0..m).take_while(|&i| converged(&theta, &res, i)).count();
        let mut y = x.clone();
        for j in locked..b {
            let rhs = &x.as_slice()[j * n..(j + 1) * n];
            let mut sol: Vec<f64> = rhs.iter().map(|v| v / (theta[j] + sigma)).collect();
            let tol = (1e-3 * res[j]).clamp(1e-3 * opts.tol, 1e-2);
            engine.pcg(sigma, rhs, &mut sol, tol, 500);
            y.as_mut_slice()[j * n..(j + 1) * n].copy_from_slice(&sol);
        }
        // Grow only when convergence stalls with the block edge inside the
        // wanted cluster; exactly degenerate clusters converge regardless.
        history.push(last_res);
        let stalled = history.len() >= 4 && last_res > 0.7 * history[history.len() - 4];
        let edge = theta[b - 1] + sigma;
        let grow = stalled && b < opts.max_block.min(avail) && edge < 1.5 * (theta[m - 1] + sigma);
        if grow {
            history.clear();
        }
        if grow {
            let nb = (2 * b).min(opts.max_block).min(avail);
            let mut wider = DMatrix::zeros(n, nb);
            wider.columns_mut(0, b).copy_from(&y);
            for j in b..nb {
                let col = engine.random_column(&mut rng);
                wider.as_mut_slice()[j * n..(j + 1) * n].copy_from_slice(&col);
            }
            y = wider;
            b = nb;
        }
        drop(x);
        engine.orthonormalize(&mut y, &mut rng);
        let mut ay = engine.apply_block(&y);
        theta = rayleigh_ritz(&mut y, &mut ay);
        x = y;
        ax = ay;
    }
    Err(Error::NoConvergence {
        solver: "block inverse iteration",
        iterations: opts.max_iterations,
        residual: last_res,
    })
}

fn power_norm<T: Real>(engine: &mut Engine<'_, T>, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let mut x = engine.random_column(&mut rng);
    let mut y = vec![0.0; engine.n];
    let mut est = 0.0;
    for _ in 0..40 {
        let nx = norm(&x);
        x.iter_mut().for_each(|v| *v /= nx);
        engine.apply(&x, &mut y);
        est = dot(&x, &y);
        std::mem::swap(&mut x, &mut y);
    }
    est
}

fn default_shift(gap: f64) -> f64 {
    0.1 * gap
}

/// The `m` smallest eigenpairs of `Delta_A` on a flat torus chart.
pub fn spectrum<T: Real>(a: &ConnectionField<T>, m: usize, opts: &SpectrumOptions) -> Result<SpectralData<T>> {
    if m == 0 || m > MAX_EIGENPAIRS {
        return Err(Error::InvalidParameter(format!(
            "eigenpair count {m} not in 1..={MAX_EIGENPAIRS}"
        )));
    }
    require_flat_torus(a.chart())?;
    let op = OperatorHandle::new(a)?;
    let symbol = FlatSymbol::new(a.bundle().chart_arc())?;
    let gap = symbol.gap();
    let sigma = opts.shift.unwrap_or_else(|| default_shift(gap));
    let mu = opts.mu.unwrap_or(0.5 * gap);
    if !(mu > 0.0) || !(sigma > 0.0) {
        return Err(Error::InvalidParameter("mu and the shift must be positive".into()));
    }
    let mut engine = Engine::new(&op, &symbol, sigma, Vec::new());
    let op_norm = power_norm(&mut engine, opts.seed);
    let res = block_inverse_iteration(&mut engine, m, opts)?;
    let w = coefficient_weight(a.chart());
    let n = engine.n;
    let eigenvectors = (0..m)
        .map(|j| vec_to_field(a.bundle(), &res.x.as_slice()[j * n..(j + 1) * n], 1.0 / w.sqrt()))
        .collect::<Result<Vec<_>>>()?;
    let cluster_count = res.theta.iter().filter(|&&e| e < mu).count();
    let kernel_dim = res.theta.iter().filter(|&&e| e < 1e-8 * op_norm).count();
    let nu2 = res.theta.iter().copied().find(|&e| e >= mu);
    Ok(SpectralData {
        mu,
        eigenvalues: res.theta,
        eigenvectors,
        residuals: res.residuals,
        cluster_count,
        kernel_dim,
        nu2,
        op_norm,
        shift: sigma,
        iterations: res.iterations,
        block: res.block,
        fingerprint: connection_fingerprint(a),
    })
}

/// The `m` smallest Ritz values of `Delta_A` compressed to the orthogonal
/// complement of `constraints`: the min-max quantities
/// `inf_{eta perp V} <Delta eta, eta> / |eta|^2` and their successors.
pub fn constrained_spectrum<T: Real>(
    a: &ConnectionField<T>,
    constraints: &[SelfDualField<T>],
    m: usize,
    opts: &SpectrumOptions,
) -> Result<Vec<f64>> {
    require_flat_torus(a.chart())?;
    let op = OperatorHandle::new(a)?;
    let symbol = FlatSymbol::new(a.bundle().chart_arc())?;
    let sigma = opts.shift.unwrap_or_else(|| default_shift(symbol.gap()));
    // Orthonormal basis of the constraint span.
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for f in constraints {
        f.ensure_same_bundle(f)?;
        let mut v = field_to_vec(f);
        for _ in 0..2 {
            for q in &basis {
                let d = dot(q, &v);
                axpy(-d, q, &mut v);
            }
        }
        let nv = norm(&v);
        if nv > 1e-12 {
            v.iter_mut().for_each(|e| *e /= nv);
            basis.push(v);
        }
    }
    let mut engine = Engine::new(&op, &symbol, sigma, basis);
    Ok(block_inverse_iteration(&mut engine, m, opts)?.theta)
}

/// All eigenvalues of `Delta_A`, by assembling the dense matrix.
pub fn dense_spectrum<T: Real>(a: &ConnectionField<T>) -> Result<Vec<f64>> {
    require_flat_torus(a.chart())?;
    let op = OperatorHandle::new(a)?;
    let symbol = FlatSymbol::new(a.bundle().chart_arc())?;
    let mut engine = Engine::new(&op, &symbol, 1.0, Vec::new());
    let n = engine.n;
    if n > DENSE_LIMIT {
        return Err(Error::InvalidParameter(format!(
            "dense eigensolve limited to {DENSE_LIMIT} unknowns, got {n}"
        )));
    }
    let mut mat = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        engine.apply(&e, &mut mat.as_mut_slice()[j * n..(j + 1) * n]);
        e[j] = 0.0;
    }
    let sym = (&mat + mat.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// `Pi_{A,mu} v = sum_{mu_i < mu} <v, eta_i> eta_i`.
pub fn project_low<T: Real>(sd: &SpectralData<T>, v: &SelfDualField<T>) -> Result<SelfDualField<T>> {
    let mut out = SelfDualField::zeros(v.bundle());
    for eta in sd.low_vectors() {
        let coef = eta.inner(v)?;
        out.axpy(coef, eta)?;
    }
    Ok(out)
}

/// `Pi^perp v = v - Pi v`.
pub fn project_high<T: Real>(sd: &SpectralData<T>, v: &SelfDualField<T>) -> Result<SelfDualField<T>> {
    v.sub(&project_low(sd, v)?)
}

/// Green's operator: `v` with `Delta_A v = Pi^perp xi` and `Pi v = 0`, by
/// conjugate gradients deflated against the low eigenvectors; the
/// residual is at most `tol ||xi||`.
pub fn greens<T: Real>(
    sd: &SpectralData<T>,
    a: &ConnectionField<T>,
    xi: &SelfDualField<T>,
    tol: f64,
) -> Result<SelfDualField<T>> {
    sd.check(a)?;
    a.ensure_same_bundle(xi)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    let op = OperatorHandle::new(a)?;
    let symbol = FlatSymbol::new(a.bundle().chart_arc())?;
    let w = coefficient_weight(a.chart());
    let basis: Vec<Vec<f64>> = sd
        .low_vectors()
        .iter()
        .map(|eta| field_to_vec(eta).into_iter().map(|v| v * w.sqrt()).collect())
        .collect();
    let mut engine = Engine::new(&op, &symbol, sd.shift, basis);
    let mut rhs = field_to_vec(xi);
    let scale = norm(&rhs);
    if scale == 0.0 {
        return Ok(SelfDualField::zeros(xi.bundle()));
    }
    engine.project(&mut rhs);
    let mut x = vec![0.0; engine.n];
    let max_it = 2000;
    let (it, res) = engine.pcg(0.0, &rhs, &mut x, tol * scale, max_it);
    if it >= max_it {
        return Err(Error::NoConvergence {
            solver: "deflated conjugate gradients",
            iterations: it,
            residual: res / scale,
        });
    }
    vec_to_field(xi.bundle(), &x, 1.0)
}

/// Partial right inverse `P_{A,mu} xi = d_A^{+,*} G_{A,mu} xi`.
pub fn partial_inverse<T: Real>(
    sd: &SpectralData<T>,
    a: &ConnectionField<T>,
    xi: &SelfDualField<T>,
    tol: f64,
) -> Result<ConnectionField<T>> {
    let v = greens(sd, a, xi, tol)?;
    OperatorHandle::new(a)?.d_plus_adjoint(&v)
}

/// Two-spectrum comparison for a perturbation `A -> A + a`.
#[derive(Clone, Debug)]
pub struct PerturbationReport {
    /// `||a||_{L^4}`.
    pub a_l4: f64,
    pub before: Vec<f64>,
    pub after: Vec<f64>,
    /// Least `C` with `mu_i[A+a] <= mu_i[A](1 + Ct + Ct^2) + Ct(1 + t)`.
    pub c_upper: f64,
    /// Least `C` with the roles of `A` and `A + a` exchanged.
    pub c_lower: f64,
}

impl PerturbationReport {
    /// Least constant satisfying both one-sided bounds.
    pub fn c_fit(&self) -> f64 {
        self.c_upper.max(self.c_lower)
    }

    /// True when both bounds hold with the constant `c`.
    pub fn holds(&self, c: f64) -> bool {
        let t = self.a_l4;
        self.before.iter().zip(&self.after).all(|(&m0, &m1)| {
            m1 <= m0 * (1.0 + c * t + c * t * t) + c * t * (1.0 + t) + 1e-12
                && m0 <= m1 * (1.0 + c * t + c * t * t) + c * t * (1.0 + t) + 1e-12
        })
    }
}

/// Computes `mu_i[A]` and `mu_i[A + a]` for `i <= m` and the least constants
/// for which the two one-sided variation bounds hold.
pub fn eigen_perturbation_check<T: Real>(
    a: &ConnectionField<T>,
    pert: &ConnectionField<T>,
    m: usize,
    opts: &SpectrumOptions,
) -> Result<PerturbationReport> {
    a.ensure_same_bundle(pert)?;
    let t = f64_of(lp_norm(pert, Exponent::L4, &Region::Whole)?);
    if !t.is_finite() {
        return Err(Error::InvalidParameter("perturbation has no finite L4 norm".into()));
    }
    let before = spectrum(a, m, opts)?.eigenvalues;
    let after = spectrum(&a.add(pert)?, m, opts)?.eigenvalues;
    let fit = |from: &[f64], to: &[f64]| {
        if t == 0.0 {
            return 0.0;
        }
        from.iter()
            .zip(to)
            .map(|(&m0, &m1)| ((m1 - m0) / ((m0 + 1.0) * t * (1.0 + t))).max(0.0))
            .fold(0.0, f64::max)
    };
    Ok(PerturbationReport {
        a_l4: t,
        c_upper: fit(&before, &after),
        c_lower: fit(&after, &before),
        before,
        after,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_lattice, ChartSpec};

    fn torus(n: usize, l: f64) -> Arc<Bundle<f64>> {
        Bundle::trivial(Arc::new(build_lattice(&ChartSpec::torus(n, l)).unwrap()))
    }

    #[test]
    fn flat_symbol_matches_dense_and_has_nine_dimensional_kernel() {
        let b = torus(4, 4.0);
        let a = ConnectionField::zeros(&b);
        let dense = dense_spectrum(&a).unwrap();
        let flat = flat_spectrum(b.chart_arc(), dense.len()).unwrap();
        let top = dense[dense.len() - 1];
        for (x, y) in dense.iter().zip(&flat) {
            assert!((x - y).abs() < 1e-10 * top);
        }
        assert_eq!(dense.iter().filter(|&&e| e < 1e-8 * top).count(), 9);
    }

    #[test]
    fn preconditioner_inverts_the_shifted_flat_operator() {
        let b = torus(4, 4.0);
        let a = ConnectionField::zeros(&b);
        let op = OperatorHandle::new(&a).unwrap();
        let sym = FlatSymbol::new(b.chart_arc()).unwrap();
        let mut eng = Engine::new(&op, &sym, 0.3, Vec::new());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = eng.random_column(&mut rng);
        let mut y = vec![0.0; eng.n];
        eng.apply(&x, &mut y);
        axpy(0.3, &x, &mut y);
        let mut z = vec![0.0; eng.n];
        eng.precondition(&y, &mut z);
        let err: f64 = z.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err < 1e-10 * norm(&x));
    }

    #[test]
    fn iterative_spectrum_of_a_random_connection_matches_dense() {
        let b = torus(4, 4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = ConnectionField::random(&b, &mut rng).scaled(0.3);
        let dense = dense_spectrum(&a).unwrap();
        let sd = spectrum(&a, 12, &SpectrumOptions::default()).unwrap();
        for (x, y) in sd.eigenvalues.iter().zip(&dense) {
            assert!(
                (x - y).abs() <= 1e-6 * x.abs().max(y.abs()) + 1e-8 * sd.op_norm,
                "{x} vs {y}"
            );
        }
        assert!(sd.gram_error() < 1e-8);
        for (r, e) in sd.residuals.iter().zip(&sd.eigenvalues) {
            assert!(*r <= 1e-8 * e.max(1.0));
        }
    }

    #[test]
    fn projections_and_greens_operator() {
        let b = torus(4, 4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let a = ConnectionField::random(&b, &mut rng).scaled(0.1);
        let sd = spectrum(&a, 12, &SpectrumOptions::default()).unwrap();
        let v = SelfDualField::random(&b, &mut rng);
        let p = project_low(&sd, &v).unwrap();
        let pp = project_low(&sd, &p).unwrap();
        assert!(pp.sub(&p).unwrap().norm_l2() < 1e-10 * v.norm_l2());
        let q = project_high(&sd, &v).unwrap();
        let total = p.norm_l2().powi(2) + q.norm_l2().powi(2);
        assert!((total - v.norm_l2().powi(2)).abs() < 1e-10 * total);
        let g = greens(&sd, &a, &v, 1e-9).unwrap();
        let lap = OperatorHandle::new(&a).unwrap().laplacian(&g).unwrap();
        assert!(lap.sub(&q).unwrap().norm_l2() < 1e-7 * v.norm_l2());
        assert!(project_low(&sd, &g).unwrap().norm_l2() < 1e-8 * g.norm_l2());
        let low = sd.eigenvectors[0].clone();
        assert!(greens(&sd, &a, &low, 1e-9).unwrap().norm_l2() < 1e-7);
        let other = ConnectionField::zeros(&b);
        assert!(matches!(greens(&sd, &other, &v, 1e-9), Err(Error::SpectralMismatch)));
    }

    #[test]
    fn open_charts_are_rejected() {
        let b = Bundle::trivial(Arc::new(build_lattice(&ChartSpec::open(12, 2.0)).unwrap()));
        let a = ConnectionField::<f64>::zeros(&b);
        assert!(matches!(
            spectrum(&a, 4, &SpectrumOptions::default()),
            Err(Error::Unsupported(_))
        ));
        assert!(spectrum(
            &ConnectionField::<f64>::zeros(&torus(4, 1.0)),
            41,
            &SpectrumOptions::default()
        )
        .is_err());
    }
}
