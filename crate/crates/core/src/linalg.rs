//! Small dense complex linear algebra: k ≤ 2 gets closed forms, larger sizes
//! fall back to nalgebra's Schur and SVD.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn det(m: &CMat) -> Complex64 {
    match m.nrows() {
        0 => Complex64::new(1.0, 0.0),
        1 => m[(0, 0)],
        2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        _ => m.determinant(),
    }
}

/// Eigenvalues of a square complex matrix.
pub fn eigenvalues(m: &CMat) -> Vec<Complex64> {
    match m.nrows() {
        0 => vec![],
        1 => vec![m[(0, 0)]],
        2 => {
            let half_tr = (m[(0, 0)] + m[(1, 1)]) * 0.5;
            let half_diff = (m[(0, 0)] - m[(1, 1)]) * 0.5;
            let disc = (half_diff * half_diff + m[(0, 1)] * m[(1, 0)]).sqrt();
            // pick the larger-modulus root first, recover the other from det
            let big = if (half_tr + disc).norm() >= (half_tr - disc).norm() {
                half_tr + disc
            } else {
                half_tr - disc
            };
            let d = det(m);
            let small = if big.norm() > 0.0 { d / big } else { half_tr - disc };
            vec![big, small]
        }
        _ => {
            let schur = nalgebra::Schur::new(m.clone());
            let (_, t) = schur.unpack();
            (0..t.nrows()).map(|i| t[(i, i)]).collect()
        }
    }
}

/// Singular values in descending order.
pub fn singular_values(m: &CMat) -> Vec<f64> {
    match (m.nrows(), m.ncols()) {
        (1, 1) => vec![m[(0, 0)].norm()],
        (2, 2) => {
            let fro2: f64 = m.iter().map(|z| z.norm_sqr()).sum();
            let d = det(m).norm();
            let disc = (fro2 * fro2 - 4.0 * d * d).max(0.0).sqrt();
            let smax = ((fro2 + disc) * 0.5).sqrt();
            let smin = if smax > 0.0 { d / smax } else { 0.0 };
            vec![smax, smin]
        }
        _ => {
            let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
            s.sort_by(|a, b| b.total_cmp(a));
            s
        }
    }
}

/// Smallest singular value δ(L) = 1/‖L⁻¹‖ (zero when singular).
pub fn smallest_singular(m: &CMat) -> f64 {
    singular_values(m).last().copied().unwrap_or(0.0)
}

pub fn operator_norm(m: &CMat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

pub fn inverse(m: &CMat) -> Option<CMat> {
    match m.nrows() {
        1 => {
            let a = m[(0, 0)];
            (a.norm() > 0.0).then(|| CMat::from_element(1, 1, a.inv()))
        }
        2 => {
            let d = det(m);
            if d.norm() == 0.0 {
                return None;
            }
            let inv_d = d.inv();
            Some(CMat::from_row_slice(
                2,
                2,
                &[m[(1, 1)] * inv_d, -m[(0, 1)] * inv_d, -m[(1, 0)] * inv_d, m[(0, 0)] * inv_d],
            ))
        }
        _ => m.clone().try_inverse(),
    }
}

/// Solves `m x = b`.
pub fn solve(m: &CMat, b: &[Complex64]) -> Option<Vec<Complex64>> {
    let inv = inverse(m)?;
    let n = b.len();
    Some((0..n).map(|i| (0..n).map(|j| inv[(i, j)] * b[j]).sum()).collect())
}

/// Unitary matrix whose first column is a unimodular multiple of the unit
/// vector `x` (a complex Householder reflection).
pub fn unitary_with_first_column(x: &[Complex64]) -> CMat {
    let n = x.len();
    let phase = if x[0].norm() > 0.0 { x[0] / x[0].norm() } else { Complex64::new(1.0, 0.0) };
    let y: Vec<Complex64> = x.iter().map(|c| c * phase.conj()).collect();
    let mut v: Vec<Complex64> = y.iter().map(|c| -c).collect();
    v[0] += 1.0;
    let vv: f64 = v.iter().map(|c| c.norm_sqr()).sum();
    let mut h = identity(n);
    if vv < 1e-300 {
        return h;
    }
    for i in 0..n {
        for j in 0..n {
            h[(i, j)] -= v[i] * v[j].conj() * (2.0 / vv);
        }
    }
    h
}

/// Running product of matrices kept as `exp(log_scale) · normalized`, so
/// products over thousands of steps neither overflow nor underflow.
#[derive(Clone, Debug)]
pub struct ScaledProduct {
    pub normalized: CMat,
    pub log_scale: f64,
    pub log_abs_det: f64,
}

impl ScaledProduct {
    pub fn identity(n: usize) -> Self {
        Self { normalized: identity(n), log_scale: 0.0, log_abs_det: 0.0 }
    }

    /// Replaces the product `P` by `m · P`.
    pub fn left_mul(&mut self, m: &CMat) {
        self.log_abs_det += det(m).norm().ln();
        self.normalized = m * &self.normalized;
        self.rescale();
    }

    /// Replaces the product `P` by `P · m`.
    pub fn right_mul(&mut self, m: &CMat) {
        self.log_abs_det += det(m).norm().ln();
        self.normalized = &self.normalized * m;
        self.rescale();
    }

    fn rescale(&mut self) {
        let s = self.normalized.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if s > 0.0 && s.is_finite() {
            self.normalized /= Complex64::new(s, 0.0);
            self.log_scale += s.ln();
        }
    }

    pub fn log_max_singular(&self) -> f64 {
        self.log_scale + operator_norm(&self.normalized).ln()
    }

    /// ln of the smallest singular value. For k ≤ 2 this is derived from the
    /// accumulated determinant, which stays accurate when the two singular
    /// values separate exponentially.
    pub fn log_min_singular(&self) -> f64 {
        match self.normalized.nrows() {
            1 => self.log_abs_det,
            2 => self.log_abs_det - self.log_max_singular(),
            _ => self.log_scale + smallest_singular(&self.normalized).ln(),
        }
    }

    pub fn to_matrix(&self) -> CMat {
        &self.normalized * Complex64::new(self.log_scale.exp(), 0.0)
    }
}
