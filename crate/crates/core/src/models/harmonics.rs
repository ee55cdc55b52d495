//! Real spherical harmonics.
//!
//! `Y_{ℓμ} = sqrt(2) N_ℓ^{|μ|} P_ℓ^{|μ|}(cos θ) cos(μφ)` for `μ > 0`, the same
//! with `sin(|μ|φ)` for `μ < 0`, and `N_ℓ^0 P_ℓ(cos θ)` for `μ = 0`, where
//! `P_ℓ^m` carries no Condon-Shortley phase. Degree 1 is proportional to
//! `(y, z, x)`.

/// Index of `(ℓ, μ)` in the packed layout `ℓ² + ℓ + μ`.
pub fn sh_index(l: usize, mu: i64) -> usize {
    ((l * l + l) as i64 + mu) as usize
}

/// Associated Legendre functions `P_ℓ^m(x)` without the Condon-Shortley
/// phase, for `0 <= m <= ℓ <= l_max`, indexed `[ℓ][m]`.
pub fn associated_legendre(l_max: usize, x: f64) -> Vec<Vec<f64>> {
    let s = (1.0 - x * x).max(0.0).sqrt();
    let mut p: Vec<Vec<f64>> = (0..=l_max).map(|l| vec![0.0; l + 1]).collect();
    let mut pmm = 1.0;
    for m in 0..=l_max {
        if m > 0 {
            pmm *= (2 * m - 1) as f64 * s;
        }
        p[m][m] = pmm;
        if m < l_max {
            p[m + 1][m] = x * (2 * m + 1) as f64 * pmm;
        }
        for l in (m + 2)..=l_max {
            p[l][m] = ((2 * l - 1) as f64 * x * p[l - 1][m] - (l + m - 1) as f64 * p[l - 2][m]) / (l - m) as f64;
        }
    }
    p
}

/// All real harmonics up to `l_max` at `(θ, φ)`, packed by [`sh_index`].
pub fn real_sh(l_max: usize, theta: f64, phi: f64) -> Vec<f64> {
    let p = associated_legendre(l_max, theta.cos());
    let mut out = vec![0.0; (l_max + 1) * (l_max + 1)];
    let four_pi = 4.0 * std::f64::consts::PI;
    for l in 0..=l_max {
        for m in 0..=l {
            // (ℓ-m)!/(ℓ+m)! as a running product
            let ratio: f64 = ((l - m + 1)..=(l + m)).map(|k| 1.0 / k as f64).product();
            let norm = ((2 * l + 1) as f64 / four_pi * ratio).sqrt();
            let base = norm * p[l][m];
            if m == 0 {
                out[sh_index(l, 0)] = base;
            } else {
                let mi = m as i64;
                let r2 = std::f64::consts::SQRT_2;
                out[sh_index(l, mi)] = r2 * base * (mi as f64 * phi).cos();
                out[sh_index(l, -mi)] = r2 * base * (mi as f64 * phi).sin();
            }
        }
    }
    out
}
