//! Unit quaternions for rotations in three dimensions.

use nalgebra::Matrix3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::gaussian;

/// Unit quaternion `(w, x, y, z)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quaternion(pub [f64; 4]);

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion([1.0, 0.0, 0.0, 0.0]);

    /// Haar-uniform rotation: four Gaussians, normalized.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let q = [gaussian(rng), gaussian(rng), gaussian(rng), gaussian(rng)];
            let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 1e-12 {
                return Quaternion(q.map(|v| v / n));
            }
        }
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Hamilton product; as rotations `self * other` applies `other` first.
    pub fn mul(&self, other: &Quaternion) -> Quaternion {
        let [a0, a1, a2, a3] = self.0;
        let [b0, b1, b2, b3] = other.0;
        Quaternion([
            a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
            a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
            a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
            a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0,
        ])
    }

    pub fn conj(&self) -> Quaternion {
        let [w, x, y, z] = self.0;
        Quaternion([w, -x, -y, -z])
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        let [w, x, y, z] = self.0;
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    /// Euler angles `(α, β, γ)` with `R = Rz(α) Ry(β) Rz(γ)`.
    ///
    /// Read off the quaternion directly:
    /// `w + iz = cos(β/2) e^{i(α+γ)/2}` and `y - ix = sin(β/2) e^{i(α-γ)/2}`.
    pub fn zyz(&self) -> (f64, f64, f64) {
        let [w, x, y, z] = self.0;
        let beta = 2.0 * (x * x + y * y).sqrt().atan2((w * w + z * z).sqrt());
        let sum = z.atan2(w);
        let diff = (-x).atan2(y);
        (sum + diff, beta, sum - diff)
    }
}
