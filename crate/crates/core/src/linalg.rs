//! Dense complex linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::rng::{complex_gaussian, gaussian};
use crate::C64;

pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Relative singular-value threshold for numerical rank.
pub const RANK_TOL: f64 = 1e-10;

/// Haar-distributed unitary matrix: QR of a complex Ginibre matrix with the
/// diagonal of `R` rotated to the positive real axis.
pub fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let z = CMatrix::from_fn(n, n, |_, _| complex_gaussian(rng));
    phase_corrected_q(z)
}

/// Haar-distributed real orthogonal matrix, stored with zero imaginary parts.
pub fn haar_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let z = CMatrix::from_fn(n, n, |_, _| C64::new(gaussian(rng), 0.0));
    let mut q = phase_corrected_q(z);
    // Householder QR on real input keeps the imaginary parts at exact zero,
    // but clear them so downstream parity checks see a clean matrix.
    q.iter_mut().for_each(|v| v.im = 0.0);
    q
}

fn phase_corrected_q(z: CMatrix) -> CMatrix {
    let n = z.nrows();
    if n == 0 {
        return z;
    }
    let qr = z.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        let d = r[(j, j)];
        let norm = d.norm();
        let phase = if norm > 0.0 { d / norm } else { C64::new(1.0, 0.0) };
        q.column_mut(j).scale_mut_c(phase);
    }
    q
}

trait ScaleComplex {
    fn scale_mut_c(&mut self, s: C64);
}

impl<S> ScaleComplex for nalgebra::Matrix<C64, nalgebra::Dyn, nalgebra::U1, S>
where
    S: nalgebra::StorageMut<C64, nalgebra::Dyn, nalgebra::U1>,
{
    fn scale_mut_c(&mut self, s: C64) {
        self.iter_mut().for_each(|v| *v *= s);
    }
}

/// `||U* U - I||_F`.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let n = u.ncols();
    let g = u.adjoint() * u;
    (g - CMatrix::identity(n, n)).norm()
}

/// Singular values in descending order. Empty for degenerate shapes.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    m.clone().svd(false, false).singular_values.iter().copied().collect()
}

/// Number of singular values above `tol * sigma_max`.
pub fn numerical_rank(m: &CMatrix, tol: f64) -> usize {
    let s = singular_values(m);
    match s.first() {
        Some(&top) if top > 0.0 => s.iter().filter(|&&v| v > tol * top).count(),
        _ => 0,
    }
}

/// Top `r` right singular vectors of `m`, as columns (`ncols x r`).
pub fn right_singular_vectors(m: &CMatrix, r: usize) -> CMatrix {
    if r == 0 {
        return CMatrix::zeros(m.ncols(), 0);
    }
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.expect("right singular vectors requested");
    vt.rows(0, r).adjoint()
}

/// Orthonormal basis of the column span of `m` (numerical rank by `tol`).
pub fn column_span(m: &CMatrix, tol: f64) -> CMatrix {
    if m.nrows() == 0 || m.ncols() == 0 {
        return CMatrix::zeros(m.nrows(), 0);
    }
    let svd = m.clone().svd(true, false);
    let top = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let r = if top > 0.0 {
        svd.singular_values.iter().filter(|&&v| v > tol * top).count()
    } else {
        0
    };
    let u = svd.u.expect("left singular vectors requested");
    u.columns(0, r).into_owned()
}

/// Sines of the principal angles between span(`a`) and span(`b`), in
/// ascending order, for orthonormal `a` (`n x p`) and `b` (`n x q`).
///
/// The sines are the singular values of `(I - a a*) b`, which resolves
/// small angles accurately where `1 - cos` would lose them to rounding.
/// Only the `q` angles belonging to the columns of `b` are returned.
pub fn principal_sines(a: &CMatrix, b: &CMatrix) -> Vec<f64> {
    if b.ncols() == 0 {
        return Vec::new();
    }
    let residual = if a.ncols() == 0 { b.clone() } else { b - a * (a.adjoint() * b) };
    let mut s = singular_values(&residual);
    // Wide residuals (n < q) have fewer singular values than angles; the
    // missing ones are exact zeros.
    s.resize(b.ncols(), 0.0);
    s.sort_by(|x, y| x.partial_cmp(y).expect("NaN singular value"));
    s
}

/// Hermitian part `(m + m*) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

pub fn is_hermitian(m: &CMatrix, rel_tol: f64) -> bool {
    let scale = m.norm().max(f64::MIN_POSITIVE);
    (m - m.adjoint()).norm() <= rel_tol * scale
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues in descending
/// order with matching eigenvector columns.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMatrix::zeros(0, 0));
    }
    let eig = hermitian_part(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .expect("NaN eigenvalue")
            .then(i.cmp(&j))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Frobenius distance.
pub fn frobenius_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).norm()
}
