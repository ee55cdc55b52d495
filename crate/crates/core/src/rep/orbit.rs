use serde::Serialize;

use super::{BlockSignal, RepresentationSpec};
use crate::linalg::{numerical_rank, right_singular_vectors, CMatrix, RANK_TOL};

/// `dim L_f = Σ_ℓ rank(A_ℓ) N_ℓ` with numerical rank at relative tolerance
/// [`RANK_TOL`].
pub fn orbit_span_dimension(f: &BlockSignal) -> usize {
    f.spec()
        .blocks()
        .iter()
        .zip(f.matrices())
        .map(|(b, a)| numerical_rank(a, RANK_TOL) * b.dim)
        .sum()
}

/// Orthonormal basis (`N x D`) of the linear span of the ambiguity orbit.
///
/// In block `ℓ` the span consists of the `N_ℓ x R_ℓ` matrices whose rows lie
/// in the row space of `A_ℓ`. With `V` the top right singular vectors of
/// `A_ℓ`, the matrices `e_m v_j*` form an orthonormal basis of it.
pub fn orbit_span_basis(f: &BlockSignal) -> CMatrix {
    let spec = f.spec();
    let n = spec.dim();
    let d = orbit_span_dimension(f);
    let mut out = CMatrix::zeros(n, d);
    let mut col = 0;
    for ((b, a), offset) in spec.blocks().iter().zip(f.matrices()).zip(spec.offsets()) {
        let r = numerical_rank(a, RANK_TOL);
        let v = right_singular_vectors(a, r);
        for j in 0..r {
            for m in 0..b.dim {
                for copy in 0..b.multiplicity {
                    out[(offset + copy * b.dim + m, col)] = v[(copy, j)].conj();
                }
                col += 1;
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SparsityBound {
    pub n: usize,
    pub m: usize,
    /// `N - M`; not clamped, so `<= 0` means the second moment alone is
    /// not enough for any sparsity level.
    pub k_max: i64,
}

impl SparsityBound {
    pub fn ratio(&self) -> f64 {
        self.k_max as f64 / self.n as f64
    }
}

pub fn sparsity_bound(spec: &RepresentationSpec) -> SparsityBound {
    let n = spec.dim();
    let m = spec.m();
    SparsityBound { n, m, k_max: n as i64 - m as i64 }
}
