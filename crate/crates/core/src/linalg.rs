//! Small dense linear algebra helpers shared by every module.
//!
//! Matrices are `nalgebra::DMatrix` of size 2d x 2d with d <= 4. Paths that
//! grow like e^{Kt} overflow f64 long before the horizons we need, so
//! matrices that may grow are carried in scaled form: a pair (m, log) that
//! stands for e^{log} * m with ||m|| = O(1).

use nalgebra::DMatrix;
use num_complex::Complex;

pub type RMat = DMatrix<f64>;
pub type CMat = DMatrix<Complex<f64>>;
pub type C64 = Complex<f64>;

/// Standard symplectic structure J = [[0, -I], [I, 0]] of size 2d x 2d.
pub fn std_j(d: usize) -> RMat {
    let mut j = RMat::zeros(2 * d, 2 * d);
    for i in 0..d {
        j[(i, d + i)] = -1.0;
        j[(d + i, i)] = 1.0;
    }
    j
}

/// e^{t J} = cos(t) I + sin(t) J, valid in any dimension since J^2 = -I.
pub fn exp_j(d: usize, t: f64) -> RMat {
    let n = 2 * d;
    let mut m = RMat::identity(n, n) * t.cos();
    m += std_j(d) * t.sin();
    m
}

pub fn max_norm(m: &RMat) -> f64 {
    m.iter().fold(0.0f64, |a, &x| a.max(x.abs()))
}

/// Spectral norm (largest singular value).
pub fn op_norm(m: &RMat) -> f64 {
    m.clone().singular_values().as_slice().iter().fold(0.0f64, |a, &x| a.max(x))
}

pub fn sym_residual(m: &RMat) -> f64 {
    let mut r = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            r = r.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    r
}

/// Inverse of a symplectic matrix: M^{-1} = -J M^T J. Polynomial in the
/// entries, so it stays finite for arbitrarily ill-conditioned M.
pub fn symplectic_inverse(m: &RMat) -> RMat {
    let d = m.nrows() / 2;
    let j = std_j(d);
    -(&j * m.transpose() * &j)
}

/// A matrix together with a log scale: represents e^{log} * m.
#[derive(Clone, Debug)]
pub struct ScaledMat {
    pub m: RMat,
    pub log: f64,
}

impl ScaledMat {
    pub fn new(m: RMat) -> Self {
        ScaledMat { m, log: 0.0 }.renormalized()
    }

    pub fn from_parts(m: RMat, log: f64) -> Self {
        ScaledMat { m, log }
    }

    pub fn identity(n: usize) -> Self {
        ScaledMat { m: RMat::identity(n, n), log: 0.0 }
    }

    /// Rescale so that ||m||_F = sqrt(n); keeps entries O(1). Scales by the
    /// max-abs entry first so the Frobenius square never overflows.
    pub fn renormalized(mut self) -> Self {
        let amax = self.m.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
        if amax > 0.0 && amax.is_finite() {
            if amax > 1e100 || amax < 1e-100 {
                self.m /= amax;
                self.log += amax.ln();
            }
            let target = (self.m.nrows() as f64).sqrt();
            let norm = self.m.norm();
            let s = norm / target;
            self.m /= s;
            self.log += s.ln();
        }
        self
    }

    pub fn mul(&self, other: &ScaledMat) -> ScaledMat {
        ScaledMat { m: &self.m * &other.m, log: self.log + other.log }.renormalized()
    }

    pub fn mul_plain(&self, other: &RMat) -> ScaledMat {
        ScaledMat { m: &self.m * other, log: self.log }.renormalized()
    }

    pub fn pre_mul(&self, other: &RMat) -> ScaledMat {
        ScaledMat { m: other * &self.m, log: self.log }.renormalized()
    }

    pub fn symplectic_inverse(&self) -> ScaledMat {
        ScaledMat { m: symplectic_inverse(&self.m), log: self.log }
    }

    /// Unscaled matrix; only safe while `log` is moderate.
    pub fn to_plain(&self) -> RMat {
        &self.m * self.log.exp()
    }

    /// log of the spectral norm.
    pub fn log_op_norm(&self) -> f64 {
        self.log + op_norm(&self.m).ln()
    }

    pub fn trace_scaled(&self) -> (f64, f64) {
        (self.m.trace(), self.log)
    }
}

/// Normalized symplecticity defect of a scaled matrix: the max-norm of
/// Gamma^T J Gamma - e^{-2 log} J divided by max(1, ||Gamma||^2). Equals the
/// plain ||g^T J g - J||_inf for unscaled O(1) matrices and stays meaningful
/// when e^{-2 log} underflows.
pub fn symplectic_defect(sm: &ScaledMat) -> f64 {
    let d = sm.m.nrows() / 2;
    let j = std_j(d);
    let mut g = sm.m.transpose() * &j * &sm.m;
    let back = (-2.0 * sm.log).exp();
    if back > 0.0 {
        g -= &j * back;
    }
    max_norm(&g) / 1.0f64.max(sm.m.norm_squared())
}

/// Project a near-symplectic matrix onto Sp(2d): two Newton corrections
/// A <- A (I - E/2) with E = J^{-1} A^T J A - I.
pub fn symplectic_project(a: &RMat) -> RMat {
    let d = a.nrows() / 2;
    let j = std_j(d);
    let jinv = -j.clone();
    let mut m = a.clone();
    for _ in 0..2 {
        let e = &jinv * m.transpose() * &j * &m - RMat::identity(2 * d, 2 * d);
        m = &m * (RMat::identity(2 * d, 2 * d) - e * 0.5);
    }
    m
}

/// Complex determinant in log form: det = phase * e^{log_mag} with |phase| = 1.
/// LU with partial pivoting; robust for the tiny sizes used here.
pub fn log_det_complex(a: &CMat) -> (C64, f64) {
    let n = a.nrows();
    let mut m = a.clone();
    let mut phase = C64::new(1.0, 0.0);
    let mut log_mag = 0.0f64;
    for k in 0..n {
        let mut p = k;
        let mut best = m[(k, k)].norm();
        for r in (k + 1)..n {
            let v = m[(r, k)].norm();
            if v > best {
                best = v;
                p = r;
            }
        }
        if best == 0.0 {
            return (C64::new(0.0, 0.0), f64::NEG_INFINITY);
        }
        if p != k {
            m.swap_rows(p, k);
            phase = -phase;
        }
        let piv = m[(k, k)];
        phase *= piv / piv.norm();
        log_mag += piv.norm().ln();
        for r in (k + 1)..n {
            let f = m[(r, k)] / piv;
            for c in (k + 1)..n {
                let sub = f * m[(k, c)];
                m[(r, c)] -= sub;
            }
        }
    }
    (phase, log_mag)
}

/// Orthonormal basis of the numerical kernel of a complex matrix, using
/// singular values below `rel_tol` times max(1, largest). The absolute floor
/// matters at tangential crossings, where the whole matrix is tiny.
pub fn kernel_basis(a: &CMat, rel_tol: f64) -> Vec<nalgebra::DVector<C64>> {
    let n = a.ncols();
    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t.expect("svd with v_t");
    let smax = svd.singular_values.iter().fold(0.0f64, |m, &s| m.max(s));
    let mut basis = Vec::new();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s <= rel_tol * smax.max(1.0) {
            let row = v_t.row(i);
            let v = nalgebra::DVector::from_iterator(n, row.iter().map(|z| z.conj()));
            basis.push(v);
        }
    }
    basis
}

/// Signature (n_plus - n_minus) of a Hermitian matrix, plus a degeneracy flag
/// for eigenvalues below `tol` relative to the largest magnitude.
pub fn hermitian_signature(h: &CMat, tol: f64) -> (i64, bool) {
    let se = nalgebra::SymmetricEigen::new(h.clone());
    let scale = se.eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l.abs())).max(1e-300);
    let mut sig = 0i64;
    let mut degenerate = false;
    for &l in se.eigenvalues.iter() {
        if l.abs() <= tol * scale {
            degenerate = true;
        } else if l > 0.0 {
            sig += 1;
        } else {
            sig -= 1;
        }
    }
    (sig, degenerate)
}

/// Eigenvalues of a real matrix as complex numbers.
pub fn complex_eigenvalues(m: &RMat) -> Vec<C64> {
    if m.nrows() == 2 {
        // closed form, avoids Schur iteration noise in the hot path
        let tr = m.trace();
        let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
        let disc = tr * tr / 4.0 - det;
        if disc >= 0.0 {
            let r = disc.sqrt();
            return vec![C64::new(tr / 2.0 + r, 0.0), C64::new(tr / 2.0 - r, 0.0)];
        }
        let i = (-disc).sqrt();
        return vec![C64::new(tr / 2.0, i), C64::new(tr / 2.0, -i)];
    }
    m.clone().complex_eigenvalues().as_slice().to_vec()
}

pub fn to_complex(m: &RMat) -> CMat {
    CMat::from_iterator(m.nrows(), m.ncols(), m.iter().map(|&x| C64::new(x, 0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn j_squares_to_minus_identity() {
        for d in 1..=3 {
            let j = std_j(d);
            let jj = &j * &j;
            assert!(max_norm(&(jj + RMat::identity(2 * d, 2 * d))) < 1e-15);
        }
    }

    #[test]
    fn exp_j_is_rotation() {
        let m = exp_j(1, std::f64::consts::FRAC_PI_2);
        assert!(max_norm(&(m - std_j(1))) < 1e-15);
    }

    #[test]
    fn symplectic_inverse_matches() {
        let m = exp_j(2, 0.7);
        let inv = symplectic_inverse(&m);
        assert!(max_norm(&(&m * inv - RMat::identity(4, 4))) < 1e-14);
    }

    #[test]
    fn log_det_of_rotation() {
        let m = to_complex(&exp_j(1, 0.3));
        let (phase, logm) = log_det_complex(&m);
        assert!((phase - C64::new(1.0, 0.0)).norm() < 1e-14);
        assert!(logm.abs() < 1e-14);
    }

    #[test]
    fn kernel_of_singular_matrix() {
        let mut a = to_complex(&RMat::identity(2, 2));
        a[(1, 1)] = C64::new(0.0, 0.0);
        let k = kernel_basis(&a, 1e-8);
        assert_eq!(k.len(), 1);
        assert!((k[0][1].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn signature_of_indefinite_form() {
        let h = CMat::from_row_slice(2, 2, &[
            C64::new(2.0, 0.0), C64::new(0.0, 0.0),
            C64::new(0.0, 0.0), C64::new(-3.0, 0.0),
        ]);
        let (sig, degen) = hermitian_signature(&h, 1e-10);
        assert_eq!(sig, 0);
        assert!(!degen);
    }

    #[test]
    fn projection_restores_symplecticity() {
        let mut m = exp_j(2, 0.4);
        m[(0, 1)] += 1e-5;
        let p = symplectic_project(&m);
        assert!(symplectic_defect(&ScaledMat::from_parts(p, 0.0)) < 1e-13);
    }

    #[test]
    fn scaled_product_tracks_scale() {
        let a = ScaledMat::new(exp_j(1, 0.2) * 1e200);
        let b = ScaledMat::new(exp_j(1, 0.3) * 1e200);
        let c = a.mul(&b);
        assert!((c.log - (2.0 * 200.0 * std::f64::consts::LN_10)).abs() < 1e-6);
        let expect = exp_j(1, 0.5);
        let got = &c.m * (c.m.norm() / 2.0f64.sqrt()).recip();
        let _ = got;
        assert!(max_norm(&(c.m.clone() / c.m[(0, 0)] * expect[(0, 0)] - expect)) < 1e-12);
    }
}
