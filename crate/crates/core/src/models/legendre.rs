//! Legendre polynomials, Gauss-Legendre quadrature and the inversion of
//! projected cryo-EM moments.

use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::linalg::CMatrix;
use crate::moments::GramMoment;
use crate::C64;

/// Scale between the Legendre coefficients of the equatorial moment and the
/// Gram matrices: `m²(u) = (1/CALIBRATION) Σ_ℓ B_ℓ P_ℓ(u)`.
///
/// Fixed by the `ℓ = 0` signal `A_0 = [1]`, whose equatorial moment is the
/// constant `Y_00² = 1/(4π)`.
pub const CALIBRATION: f64 = 4.0 * std::f64::consts::PI;

/// `P_0(x), ..., P_n(x)` by Bonnet's recursion.
pub fn legendre_p(n: usize, x: f64) -> Vec<f64> {
    let mut p = vec![0.0; n + 1];
    p[0] = 1.0;
    if n >= 1 {
        p[1] = x;
    }
    for l in 2..=n {
        let lf = l as f64;
        p[l] = ((2.0 * lf - 1.0) * x * p[l - 1] - (lf - 1.0) * p[l - 2]) / lf;
    }
    p
}

/// Gauss-Legendre nodes (ascending) and weights on `[-1, 1]`, exact for
/// polynomials of degree `2n - 1`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let p = legendre_p(n, x);
            let dp = n as f64 * (x * p[n] - p[n - 1]) / (x * x - 1.0);
            let step = p[n] / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let p = legendre_p(n, x);
        let dp = n as f64 * (x * p[n] - p[n - 1]) / (x * x - 1.0);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Shell-pair moment `m²_{r1 r2}(u)` sampled at `u = cos Δφ` on
/// Gauss-Legendre nodes; `values[j][(r1, r2)]` belongs to `nodes[j]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectedMoment {
    pub nodes: Vec<f64>,
    #[serde(with = "crate::io::complex_matrix_list")]
    pub values: Vec<CMatrix>,
}

impl ProjectedMoment {
    /// Samples `eval(r1, r2, u)` on `count` Gauss-Legendre nodes.
    pub fn sample<F>(shells: usize, count: usize, eval: F) -> Self
    where
        F: Fn(usize, usize, f64) -> C64,
    {
        let (nodes, _) = gauss_legendre(count);
        let values = nodes.iter().map(|&u| CMatrix::from_fn(shells, shells, |a, b| eval(a, b, u))).collect();
        ProjectedMoment { nodes, values }
    }

    pub fn shells(&self) -> usize {
        self.values.first().map(|m| m.nrows()).unwrap_or(0)
    }
}

/// Recovers the cryo-EM Gram list for degrees `0..=l` from a projected moment.
///
/// `B_ℓ = CALIBRATION (2ℓ+1)/2 Σ_j w_j m²(u_j) P_ℓ(u_j)` with `B_ℓ[r1, r2]`
/// pairing shell `r1` with the conjugate of shell `r2`; the returned Gram is
/// its transpose, `G_ℓ = A_ℓ* A_ℓ`. The nodes must be Gauss-Legendre points,
/// at least `l + 1` of them.
pub fn legendre_invert(table: &ProjectedMoment, l: usize) -> Result<GramMoment> {
    let count = table.nodes.len();
    if count < l + 1 {
        return Err(validation(format!("{count} quadrature nodes cannot resolve degree {l}; need {}", l + 1)));
    }
    if table.values.len() != count {
        return Err(validation("projected moment has a value count different from its node count"));
    }
    let r = table.shells();
    if r == 0 || table.values.iter().any(|m| m.shape() != (r, r)) {
        return Err(validation("projected moment values must be square and non-empty"));
    }
    let (nodes, weights) = gauss_legendre(count);
    if nodes.iter().zip(&table.nodes).any(|(a, b)| (a - b).abs() > 1e-12) {
        return Err(validation("projected moment grid is not a Gauss-Legendre grid"));
    }
    let spec = super::cryo_spec(l, r)?;
    let mut grams = vec![CMatrix::zeros(r, r); l + 1];
    for ((u, w), m) in nodes.iter().zip(&weights).zip(&table.values) {
        let p = legendre_p(l, *u);
        for (deg, g) in grams.iter_mut().enumerate() {
            let c = CALIBRATION * (2 * deg + 1) as f64 / 2.0 * w * p[deg];
            *g += m.transpose() * C64::new(c, 0.0);
        }
    }
    for g in grams.iter_mut() {
        // The cryo-EM spec is real: Grams are real symmetric.
        *g = crate::linalg::hermitian_part(g).map(|z| C64::new(z.re, 0.0));
    }
    GramMoment::new_estimate(spec, grams)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_values() {
        let x = 0.37;
        let p = legendre_p(3, x);
        assert!((p[2] - (3.0 * x * x - 1.0) / 2.0).abs() < 1e-15);
        assert!((p[3] - (5.0 * x * x * x - 3.0 * x) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn quadrature_is_exact_to_degree_2n_minus_1() {
        for n in 1..12 {
            let (x, w) = gauss_legendre(n);
            assert!(x.windows(2).all(|p| p[0] < p[1]));
            for deg in 0..(2 * n) {
                let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let want = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((got - want).abs() < 1e-13, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn constant_moment_maps_to_degree_zero() {
        let c = 0.7;
        let table = ProjectedMoment::sample(1, 3, |_, _, _| C64::new(c, 0.0));
        let g = legendre_invert(&table, 2).unwrap();
        assert!((g.gram(0)[(0, 0)].re - c * CALIBRATION).abs() < 1e-12);
        assert!(g.gram(1)[(0, 0)].norm() < 1e-12);
        assert!(g.gram(2)[(0, 0)].norm() < 1e-12);
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let table = ProjectedMoment::sample(2, 2, |_, _, _| C64::new(1.0, 0.0));
        assert!(legendre_invert(&table, 2).is_err());
        let mut off = ProjectedMoment::sample(2, 3, |_, _, _| C64::new(1.0, 0.0));
        off.nodes[0] += 1e-3;
        assert!(legendre_invert(&off, 2).is_err());
    }
}
