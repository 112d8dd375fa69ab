//! The Lie algebra su(2) in coefficient form and SU(2) as unit quaternions.
//!
//! A value `x` stands for `x^a T_a` with `[T_a, T_b] = eps_abc T_c`. As a
//! quaternion, `T_a` is half the imaginary unit `i_a`, so `x` corresponds to
//! `(x^1 i + x^2 j + x^3 k) / 2`. The invariant inner product is
//! `<X, Y> = -tr(XY) = (x . y) / 2` in the fundamental representation; this
//! normalisation makes the curvature energy of a unit-charge instanton equal
//! to `8 pi^2`.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::scalar::{c, Real};

/// An element of su(2), stored by its three coefficients.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[repr(transparent)]
pub struct LieValue<T>(pub [T; 3]);

impl<T: Real> LieValue<T> {
    pub const fn new(a: T, b: T, c: T) -> Self {
        LieValue([a, b, c])
    }

    pub fn zero() -> Self {
        LieValue([T::zero(); 3])
    }

    /// The generator `T_a` (a in 0..3).
    pub fn basis(a: usize) -> Self {
        let mut v = [T::zero(); 3];
        v[a] = T::one();
        LieValue(v)
    }

    /// Lie bracket; in coefficients it is the cross product.
    #[inline(always)]
    pub fn bracket(self, o: Self) -> Self {
        let [a0, a1, a2] = self.0;
        let [b0, b1, b2] = o.0;
        LieValue([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0])
    }

    /// Invariant inner product `(x . y) / 2`.
    #[inline(always)]
    pub fn dot(self, o: Self) -> T {
        self.coeff_dot(o) * c(0.5)
    }

    /// Plain Euclidean product of coefficients.
    #[inline(always)]
    pub fn coeff_dot(self, o: Self) -> T {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    #[inline(always)]
    pub fn norm_sq(self) -> T {
        self.dot(self)
    }

    #[inline(always)]
    pub fn norm(self) -> T {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Coefficients drawn from a standard normal distribution.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        LieValue(std::array::from_fn(|_| {
            let v: f64 = rng.sample(StandardNormal);
            c(v)
        }))
    }

    /// Multiplies by a 3x3 matrix acting on coefficients.
    #[inline(always)]
    pub fn rotate(self, r: &[[T; 3]; 3]) -> Self {
        let x = self.0;
        LieValue(std::array::from_fn(|i| {
            r[i][0] * x[0] + r[i][1] * x[1] + r[i][2] * x[2]
        }))
    }

    /// Multiplies by the transpose of a 3x3 matrix.
    #[inline(always)]
    pub fn rotate_t(self, r: &[[T; 3]; 3]) -> Self {
        let x = self.0;
        LieValue(std::array::from_fn(|i| {
            r[0][i] * x[0] + r[1][i] * x[1] + r[2][i] * x[2]
        }))
    }

    /// The imaginary quaternion representing this element.
    pub fn to_quaternion(self) -> GroupValue<T> {
        let h = c::<T>(0.5);
        GroupValue([T::zero(), self.0[0] * h, self.0[1] * h, self.0[2] * h])
    }

    /// Element represented by the imaginary part of a quaternion.
    pub fn from_quaternion_im(q: &GroupValue<T>) -> Self {
        let two = c::<T>(2.0);
        LieValue([q.0[1] * two, q.0[2] * two, q.0[3] * two])
    }
}

impl<T: Real> Add for LieValue<T> {
    type Output = Self;
    #[inline(always)]
    fn add(self, o: Self) -> Self {
        LieValue([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl<T: Real> Sub for LieValue<T> {
    type Output = Self;
    #[inline(always)]
    fn sub(self, o: Self) -> Self {
        LieValue([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl<T: Real> Neg for LieValue<T> {
    type Output = Self;
    #[inline(always)]
    fn neg(self) -> Self {
        LieValue([-self.0[0], -self.0[1], -self.0[2]])
    }
}

impl<T: Real> Mul<T> for LieValue<T> {
    type Output = Self;
    #[inline(always)]
    fn mul(self, s: T) -> Self {
        LieValue([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }
}

impl<T: Real> AddAssign for LieValue<T> {
    #[inline(always)]
    fn add_assign(&mut self, o: Self) {
        self.0[0] += o.0[0];
        self.0[1] += o.0[1];
        self.0[2] += o.0[2];
    }
}

impl<T: Real> SubAssign for LieValue<T> {
    #[inline(always)]
    fn sub_assign(&mut self, o: Self) {
        self.0[0] -= o.0[0];
        self.0[1] -= o.0[1];
        self.0[2] -= o.0[2];
    }
}

impl<T> Index<usize> for LieValue<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

impl<T> IndexMut<usize> for LieValue<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.0[i]
    }
}

/// A quaternion `w + x i + y j + z k`; unit quaternions represent SU(2).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupValue<T>(pub [T; 4]);

impl<T: Real> GroupValue<T> {
    pub fn identity() -> Self {
        GroupValue([T::one(), T::zero(), T::zero(), T::zero()])
    }

    pub fn new(w: T, x: T, y: T, z: T) -> Self {
        GroupValue([w, x, y, z])
    }

    /// Quaternion basis element `e_mu` with `e_0 = 1, e_1 = i, e_2 = j, e_3 = k`.
    pub fn unit(mu: usize) -> Self {
        let mut q = [T::zero(); 4];
        q[mu] = T::one();
        GroupValue(q)
    }

    /// Quaternion with components given by a point of R^4.
    pub fn from_point(x: &[T; 4]) -> Self {
        GroupValue(*x)
    }

    #[inline(always)]
    pub fn mul(&self, o: &Self) -> Self {
        let [a0, a1, a2, a3] = self.0;
        let [b0, b1, b2, b3] = o.0;
        GroupValue([
            a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
            a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
            a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
            a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0,
        ])
    }

    #[inline(always)]
    pub fn conj(&self) -> Self {
        GroupValue([self.0[0], -self.0[1], -self.0[2], -self.0[3]])
    }

    #[inline(always)]
    pub fn norm_sq(&self) -> T {
        self.0.iter().fold(T::zero(), |a, &v| a + v * v)
    }

    pub fn norm(&self) -> T {
        self.norm_sq().sqrt()
    }

    pub fn inverse(&self) -> Self {
        let n = self.norm_sq();
        let q = self.conj();
        GroupValue(q.0.map(|v| v / n))
    }

    pub fn scale(&self, s: T) -> Self {
        GroupValue(self.0.map(|v| v * s))
    }

    pub fn add(&self, o: &Self) -> Self {
        GroupValue(std::array::from_fn(|i| self.0[i] + o.0[i]))
    }

    pub fn normalized(&self) -> Self {
        self.scale(T::one() / self.norm())
    }

    pub fn is_unit(&self, tol: T) -> bool {
        (self.norm() - T::one()).abs() <= tol
    }

    /// Haar-random unit quaternion.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let q = GroupValue(std::array::from_fn(|_| {
                let v: f64 = rng.sample(StandardNormal);
                c::<T>(v)
            }));
            if q.norm() > c(1e-6) {
                return q.normalized();
            }
        }
    }

    /// `exp(X)` for `X` in su(2).
    pub fn exp(x: LieValue<T>) -> Self {
        let q = x.to_quaternion();
        let th = (q.0[1] * q.0[1] + q.0[2] * q.0[2] + q.0[3] * q.0[3]).sqrt();
        if th == T::zero() {
            return GroupValue::identity();
        }
        let s = th.sin() / th;
        GroupValue([th.cos(), q.0[1] * s, q.0[2] * s, q.0[3] * s])
    }

    /// Matrix of `Ad(u)` on su(2) coefficients (an SO(3) rotation for unit u).
    pub fn ad_matrix(&self) -> [[T; 3]; 3] {
        let [w, x, y, z] = self.0;
        let two = c::<T>(2.0);
        let one = T::one();
        [
            [
                one - two * (y * y + z * z),
                two * (x * y - w * z),
                two * (x * z + w * y),
            ],
            [
                two * (x * y + w * z),
                one - two * (x * x + z * z),
                two * (y * z - w * x),
            ],
            [
                two * (x * z - w * y),
                two * (y * z + w * x),
                one - two * (x * x + y * y),
            ],
        ]
    }

    /// `Ad(u) X = u X u^{-1}`.
    pub fn ad(&self, x: LieValue<T>) -> LieValue<T> {
        x.rotate(&self.ad_matrix())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: LieValue<f64>, b: LieValue<f64>, tol: f64) -> bool {
        (a - b).0.iter().all(|v| v.abs() <= tol)
    }

    #[test]
    fn bracket_structure_constants() {
        let t = |a| LieValue::<f64>::basis(a);
        assert_eq!(t(0).bracket(t(1)), t(2));
        assert_eq!(t(1).bracket(t(2)), t(0));
        assert_eq!(t(2).bracket(t(0)), t(1));
    }

    #[test]
    fn bracket_matches_quaternion_commutator() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let x = LieValue::<f64>::random(&mut rng);
            let y = LieValue::random(&mut rng);
            let (qx, qy) = (x.to_quaternion(), y.to_quaternion());
            let comm = qx.mul(&qy).add(&qy.mul(&qx).scale(-1.0));
            assert!(close(LieValue::from_quaternion_im(&comm), x.bracket(y), 1e-12));
            assert!(comm.0[0].abs() < 1e-12);
        }
    }

    #[test]
    fn antisymmetry_and_jacobi() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let x = LieValue::<f64>::random(&mut rng);
            let y = LieValue::random(&mut rng);
            let z = LieValue::random(&mut rng);
            assert!(close(x.bracket(y), -y.bracket(x), 1e-12));
            let j = x.bracket(y.bracket(z)) + y.bracket(z.bracket(x)) + z.bracket(x.bracket(y));
            assert!(close(j, LieValue::zero(), 1e-12));
        }
    }

    #[test]
    fn inner_product_is_minus_trace() {
        // -tr(T_a T_b) = delta_ab / 2 with T_a = -i sigma_a / 2.
        let t = LieValue::<f64>::basis(1);
        assert!((t.norm_sq() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn adjoint_action_is_orthogonal_and_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let u = GroupValue::<f64>::random(&mut rng);
            assert!(u.is_unit(1e-12));
            let x = LieValue::random(&mut rng);
            let y = LieValue::random(&mut rng);
            assert!((u.ad(x).dot(u.ad(y)) - x.dot(y)).abs() < 1e-12);
            let conj = u.mul(&x.to_quaternion()).mul(&u.inverse());
            assert!(close(LieValue::from_quaternion_im(&conj), u.ad(x), 1e-12));
            assert!(close(u.ad(x.bracket(y)), u.ad(x).bracket(u.ad(y)), 1e-12));
        }
    }

    #[test]
    fn exp_is_one_parameter_group() {
        let x = LieValue::new(0.3_f64, -0.2, 0.9);
        let a = GroupValue::exp(x * 0.4).mul(&GroupValue::exp(x * 0.6));
        let b = GroupValue::exp(x);
        for i in 0..4 {
            assert!((a.0[i] - b.0[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn single_precision_algebra() {
        let x = LieValue::<f32>::new(1.0, 2.0, 3.0);
        assert!((x.norm_sq() - 7.0).abs() < 1e-6);
    }
}
