//! Integer-lattice arithmetic for walls of type (w, κ): enumeration, levels,
//! normal-complex indices and generic-metric Kuranishi dimensions.

use num_rational::Ratio;
use num_traits::{Signed, Zero};

use crate::error::{Error, Result};

/// Largest coordinate bound accepted by [`enumerate_walls`].
pub const MAX_BOUND: i64 = 10;

/// Exact instanton number, a multiple of 1/4.
pub type Kappa = Ratio<i64>;

/// Symmetric integral intersection form with its Betti data.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntersectionForm {
    q: Vec<Vec<i64>>,
    b_plus: usize,
    b1: usize,
}

impl IntersectionForm {
    /// Builds a form from a square symmetric matrix. The matrix must be
    /// nondegenerate and its positive index must equal `b_plus`.
    pub fn new(q: Vec<Vec<i64>>, b_plus: usize, b1: usize) -> Result<Self> {
        let n = q.len();
        if n == 0 {
            return Err(Error::InvalidParameter("intersection form has rank 0".into()));
        }
        if q.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidParameter("intersection form is not square".into()));
        }
        for i in 0..n {
            for j in 0..i {
                if q[i][j] != q[j][i] {
                    return Err(Error::InvalidParameter(format!(
                        "intersection form is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let (pos, neg) = inertia(&q);
        if pos + neg != n {
            return Err(Error::InvalidParameter("intersection form is degenerate".into()));
        }
        if pos != b_plus {
            return Err(Error::InvalidParameter(format!(
                "b+ = {b_plus} but the form has positive index {pos}"
            )));
        }
        Ok(Self { q, b_plus, b1 })
    }

    /// Diagonal form; `b⁺` is read off the signs.
    pub fn diagonal(entries: &[i64], b1: usize) -> Result<Self> {
        let n = entries.len();
        let q = (0..n)
            .map(|i| (0..n).map(|j| if i == j { entries[i] } else { 0 }).collect())
            .collect();
        let b_plus = entries.iter().filter(|&&e| e > 0).count();
        Self::new(q, b_plus, b1)
    }

    pub fn rank(&self) -> usize {
        self.q.len()
    }

    pub fn b_plus(&self) -> usize {
        self.b_plus
    }

    pub fn b1(&self) -> usize {
        self.b1
    }

    pub fn matrix(&self) -> &[Vec<i64>] {
        &self.q
    }

    /// Q(x, y).
    pub fn pair(&self, x: &[i64], y: &[i64]) -> i64 {
        let mut s = 0;
        for (i, row) in self.q.iter().enumerate() {
            for (j, &qij) in row.iter().enumerate() {
                s += x[i] * qij * y[j];
            }
        }
        s
    }

    /// Q(x, x).
    pub fn square(&self, x: &[i64]) -> i64 {
        self.pair(x, x)
    }
}

/// Signs of the eigenvalues of a symmetric integer matrix, counted by
/// symmetric Gaussian elimination over the rationals (exact).
fn inertia(q: &[Vec<i64>]) -> (usize, usize) {
    let n = q.len();
    let mut m: Vec<Vec<Ratio<i128>>> = q
        .iter()
        .map(|r| r.iter().map(|&v| Ratio::from_integer(v as i128)).collect())
        .collect();
    let (mut pos, mut neg) = (0, 0);
    let mut active: Vec<usize> = (0..n).collect();
    while !active.is_empty() {
        // Prefer a nonzero diagonal pivot; otherwise mix in an off-diagonal
        // partner to create one.
        let pivot = active.iter().copied().find(|&i| !m[i][i].is_zero());
        let p = match pivot {
            Some(p) => p,
            None => {
                let pair = active
                    .iter()
                    .flat_map(|&i| active.iter().map(move |&j| (i, j)))
                    .find(|&(i, j)| i != j && !m[i][j].is_zero());
                match pair {
                    Some((i, j)) => {
                        // Row/column operation e_i ← e_i + e_j gives a
                        // diagonal entry 2 m_ij.
                        for k in 0..n {
                            let v = m[j][k];
                            m[i][k] += v;
                        }
                        for k in 0..n {
                            let v = m[k][j];
                            m[k][i] += v;
                        }
                        i
                    }
                    None => break,
                }
            }
        };
        let d = m[p][p];
        if d.is_positive() {
            pos += 1;
        } else {
            neg += 1;
        }
        active.retain(|&i| i != p);
        for &i in &active {
            let f = m[i][p] / d;
            for &k in &active {
                let v = m[p][k];
                m[i][k] -= f * v;
            }
        }
    }
    (pos, neg)
}

/// A wall class ξ with its annotations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Wall {
    pub xi: Vec<i64>,
    pub xi_sq: i64,
    pub level: i64,
    pub index: i64,
    /// Real dimensions (h¹, h²) of the Kuranishi model at a generic metric;
    /// only available for b₁ = 0, b⁺ = 1.
    pub dims: Option<(usize, usize)>,
}

/// Checks that κ is a positive multiple of 1/4 and returns p = −4κ.
fn pontryagin(kappa: Kappa) -> Result<i64> {
    if !kappa.is_positive() {
        return Err(Error::InvalidParameter(format!("κ = {kappa} must be positive")));
    }
    let four = kappa * 4;
    if !four.is_integer() {
        return Err(Error::InvalidParameter(format!("κ = {kappa} is not a multiple of 1/4")));
    }
    Ok(-four.to_integer())
}

/// Checks −4κ ≡ w² (mod 4).
pub fn check_parity(form: &IntersectionForm, w: &[i64], kappa: Kappa) -> Result<()> {
    if w.len() != form.rank() {
        return Err(Error::InvalidParameter(format!(
            "w has length {} but the form has rank {}",
            w.len(),
            form.rank()
        )));
    }
    let p = pontryagin(kappa)?;
    let w2 = form.square(w);
    if (p - w2).rem_euclid(4) != 0 {
        return Err(Error::Parity(format!("-4κ = {p} is not congruent to w² = {w2} mod 4")));
    }
    Ok(())
}

/// n_ξ with 2n_ξ = −2ξ² − 2(1 − b₁ + b⁺).
pub fn wall_index(xi_sq: i64, b1: usize, b_plus: usize) -> i64 {
    -xi_sq - (1 - b1 as i64 + b_plus as i64)
}

/// Real dimensions (h¹, h²) at a ξ-generic metric when b₁ = 0, b⁺ = 1.
pub fn kuranishi_dims(n: i64) -> Result<(usize, usize)> {
    match n {
        n if n >= 0 => Ok((2 * n as usize, 1)),
        -1 => Ok((0, 3)),
        _ => Err(Error::InvalidParameter(format!("n_ξ = {n} < -1 has no generic model"))),
    }
}

/// All ξ ≡ w (mod 2) with |ξ_i| ≤ `bound` and −4κ ≤ ξ² < 0, in
/// lexicographic order.
pub fn enumerate_walls(form: &IntersectionForm, w: &[i64], kappa: Kappa, bound: i64) -> Result<Vec<Wall>> {
    if !(0..=MAX_BOUND).contains(&bound) {
        return Err(Error::InvalidParameter(format!(
            "coordinate bound {bound} outside 0..={MAX_BOUND}"
        )));
    }
    check_parity(form, w, kappa)?;
    let p = pontryagin(kappa)?;
    let generic = form.b1() == 0 && form.b_plus() == 1;
    // Each coordinate runs over the residues of w_i mod 2 inside the box.
    let axes: Vec<Vec<i64>> = w
        .iter()
        .map(|&wi| (-bound..=bound).filter(|x| (x - wi).rem_euclid(2) == 0).collect())
        .collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; axes.len()];
    if axes.iter().any(|a| a.is_empty()) {
        return Ok(out);
    }
    loop {
        let xi: Vec<i64> = idx.iter().zip(&axes).map(|(&k, a)| a[k]).collect();
        let xi_sq = form.square(&xi);
        if p <= xi_sq && xi_sq < 0 {
            let level = (xi_sq - p) / 4;
            debug_assert_eq!((xi_sq - p) % 4, 0);
            let index = wall_index(xi_sq, form.b1(), form.b_plus());
            let dims = if generic { Some(kuranishi_dims(index)?) } else { None };
            out.push(Wall {
                xi,
                xi_sq,
                level,
                index,
                dims,
            });
        }
        // Odometer increment.
        let mut d = axes.len();
        loop {
            if d == 0 {
                return Ok(out);
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < axes[d].len() {
                break;
            }
            idx[d] = 0;
        }
    }
}
