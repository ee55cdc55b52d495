//! Wigner matrices for the real spherical-harmonic basis.
//!
//! Small-d matrices come from the three-term recursion in `ℓ` at fixed
//! `(m', m)` (Kostelec and Rockmore), seeded at `ℓ = max(|m|, |m'|)` with the
//! closed form `d^J_{m',J} = sqrt((2J)! / ((J+m')!(J-m')!)) cos^{J+m'} sin^{J-m'}`
//! of the half angle and its symmetries.

use nalgebra::DMatrix;

use super::so3::Quaternion;
use crate::linalg::CMatrix;
use crate::C64;

fn ln_factorial(n: i64) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

/// `d^J_{m',m}(β)` for `J = max(|m|, |m'|)`.
fn seed(mp: i64, m: i64, beta: f64) -> f64 {
    let j = mp.abs().max(m.abs());
    let (c, s) = ((beta / 2.0).cos(), (beta / 2.0).sin());
    // Closed form for the column m = J.
    let col_j = |mp: i64| -> f64 {
        let ln = 0.5 * (ln_factorial(2 * j) - ln_factorial(j + mp) - ln_factorial(j - mp));
        ln.exp() * c.powi((j + mp) as i32) * s.powi((j - mp) as i32)
    };
    let sign = |k: i64| if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    // d_{m',m} = (-1)^{m-m'} d_{m,m'} = d_{-m,-m'}
    if m == j {
        col_j(mp)
    } else if m == -j {
        // d_{m',-J} = d_{J,-m'} = (-1)^{J+m'} d_{-m',J}
        sign(j + mp) * col_j(-mp)
    } else if mp == j {
        // d_{J,m} = (-1)^{m-J} d_{m,J}
        sign(m - j) * col_j(m)
    } else {
        // mp == -j: d_{-J,m} = d_{-m,J}
        col_j(-m)
    }
}

/// Small-d matrices `d^ℓ(β)` for `ℓ = 0..=l_max`, indexed `[m' + ℓ, m + ℓ]`.
pub fn small_d(l_max: usize, beta: f64) -> Vec<DMatrix<f64>> {
    let lm = l_max as i64;
    let cb = beta.cos();
    let mut out: Vec<DMatrix<f64>> = (0..=l_max).map(|l| DMatrix::zeros(2 * l + 1, 2 * l + 1)).collect();
    for mp in -lm..=lm {
        for m in -lm..=lm {
            let j = mp.abs().max(m.abs());
            let mut prev = 0.0;
            let mut cur = seed(mp, m, beta);
            out[j as usize][((mp + j) as usize, (m + j) as usize)] = cur;
            for l in j..lm {
                let lf = l as f64;
                let l1 = lf + 1.0;
                let (mf, mpf) = (m as f64, mp as f64);
                let a = l1 * (2.0 * lf + 1.0) / ((l1 * l1 - mf * mf) * (l1 * l1 - mpf * mpf)).sqrt();
                let shift = if l == 0 { 0.0 } else { mf * mpf / (lf * l1) };
                let back = if l == 0 {
                    0.0
                } else {
                    ((lf * lf - mf * mf) * (lf * lf - mpf * mpf)).sqrt() / (lf * (2.0 * lf + 1.0))
                };
                let next = a * ((cb - shift) * cur - back * prev);
                prev = cur;
                cur = next;
                let ln = (l + 1) as usize;
                out[ln][((mp + l + 1) as usize, (m + l + 1) as usize)] = cur;
            }
        }
    }
    out
}

/// Unitary change of basis from complex to real harmonics:
/// `Y_real = C Y_complex`, rows and columns ordered `μ = -ℓ..=ℓ`.
pub fn complex_to_real(l: usize) -> CMatrix {
    let li = l as i64;
    let n = 2 * l + 1;
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut c = CMatrix::zeros(n, n);
    for mu in -li..=li {
        let row = (mu + li) as usize;
        let sign = if mu.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        if mu == 0 {
            c[(row, l)] = C64::new(1.0, 0.0);
        } else if mu > 0 {
            c[(row, (mu + li) as usize)] = C64::new(sign * h, 0.0);
            c[(row, (-mu + li) as usize)] = C64::new(h, 0.0);
        } else {
            let a = -mu;
            c[(row, (a + li) as usize)] = C64::new(0.0, -sign * h);
            c[(row, (-a + li) as usize)] = C64::new(0.0, h);
        }
    }
    c
}

/// Complex Wigner matrix `D[m', m] = e^{-i m' α} d[m', m](β) e^{-i m γ}`.
pub fn wigner_d_complex(l: usize, alpha: f64, d: &DMatrix<f64>, gamma: f64) -> CMatrix {
    let li = l as i64;
    CMatrix::from_fn(2 * l + 1, 2 * l + 1, |i, j| {
        let mp = i as i64 - li;
        let m = j as i64 - li;
        C64::from_polar(d[(i, j)], -(mp as f64) * alpha - (m as f64) * gamma)
    })
}

/// Real Wigner matrices `D^ℓ(q)` for `ℓ = 0..=l_max`.
///
/// Block `ℓ` maps the real-harmonic coefficients of `f` to those of
/// `x ↦ f(R(q)^{-1} x)`. For `ℓ = 1` this is `R(q)` written in the
/// coordinate order `(y, z, x)`.
pub fn wigner_real(l_max: usize, q: &Quaternion) -> Vec<DMatrix<f64>> {
    let (alpha, beta, gamma) = q.zyz();
    let ds = small_d(l_max, beta);
    ds.iter()
        .enumerate()
        .map(|(l, d)| {
            let c = complex_to_real(l);
            let dc = wigner_d_complex(l, alpha, d, gamma);
            let real = &c * dc.conjugate() * c.adjoint();
            real.map(|z| z.re)
        })
        .collect()
}
