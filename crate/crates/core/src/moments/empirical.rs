use std::io::{Read, Write};

use rayon::prelude::*;

use crate::error::{validation, MraError, Result};
use crate::linalg::{CMatrix, CVector};
use crate::C64;

/// Observations per partial sum. The partial sums are combined in chunk
/// order, so the result does not depend on how chunks are scheduled.
pub const CHUNK: usize = 1024;

const MAGIC: &[u8; 4] = b"MRA2";
const VERSION: u32 = 1;

/// `n` observation vectors of equal length, stored row by row.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationBatch {
    dim: usize,
    samples: Vec<C64>,
    pub sigma: f64,
    pub seed: u64,
}

impl ObservationBatch {
    pub fn new(dim: usize, samples: Vec<C64>, sigma: f64, seed: u64) -> Result<Self> {
        if dim == 0 || samples.is_empty() {
            return Err(validation("observation batch is empty"));
        }
        if samples.len() % dim != 0 {
            return Err(validation(format!("{} values do not split into rows of {dim}", samples.len())));
        }
        if !(sigma >= 0.0) {
            return Err(validation("sigma must be >= 0"));
        }
        Ok(ObservationBatch { dim, samples, sigma, seed })
    }

    pub fn from_vectors(rows: &[CVector], sigma: f64, seed: u64) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(validation("observations have different lengths"));
        }
        let samples = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(dim, samples, sigma, seed)
    }

    pub fn len(&self) -> usize {
        self.samples.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sample(&self, i: usize) -> &[C64] {
        &self.samples[i * self.dim..(i + 1) * self.dim]
    }

    /// Binary form: `MRA2`, version (u32), n (u64), dim (u64), sigma (f64),
    /// seed (u64), then `n * dim` values as interleaved re/im f64, all
    /// little-endian.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        w.write_all(&(self.dim as u64).to_le_bytes())?;
        w.write_all(&self.sigma.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.samples.len() * 16);
        for z in &self.samples {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(MraError::Validation("not an MRA2 batch file".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != VERSION {
            return Err(validation(format!("unsupported batch version {version}")));
        }
        let mut next_u64 = |r: &mut R| -> Result<u64> {
            r.read_exact(&mut b8)?;
            Ok(u64::from_le_bytes(b8))
        };
        let n = next_u64(&mut r)? as usize;
        let dim = next_u64(&mut r)? as usize;
        let sigma = f64::from_bits(next_u64(&mut r)?);
        let seed = next_u64(&mut r)?;
        let count = n.checked_mul(dim).ok_or_else(|| validation("batch header overflows"))?;
        let mut body = vec![0u8; count * 16];
        r.read_exact(&mut body)?;
        let samples = body
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
                let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
                C64::new(re, im)
            })
            .collect();
        Self::new(dim, samples, sigma, seed)
    }
}

/// `(1/n) Σ_i y_i y_i*`, with `fill(i, buf)` writing observation `i`.
///
/// Chunks of [`CHUNK`] observations are summed independently (possibly in
/// parallel) and then added in chunk order.
pub fn accumulate_moment<F>(n: usize, dim: usize, fill: F) -> Result<CMatrix>
where
    F: Fn(usize, &mut [C64]) + Sync,
{
    if n == 0 {
        return Err(validation("cannot average zero observations"));
    }
    let chunks = n.div_ceil(CHUNK);
    let partials: Vec<CMatrix> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = CMatrix::zeros(dim, dim);
            let mut y = CVector::zeros(dim);
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                fill(i, y.as_mut_slice());
                acc.gerc(C64::new(1.0, 0.0), &y, &y, C64::new(1.0, 0.0));
            }
            acc
        })
        .collect();
    let mut total = CMatrix::zeros(dim, dim);
    for p in &partials {
        total += p;
    }
    Ok(total / C64::new(n as f64, 0.0))
}

pub fn empirical_second_moment(batch: &ObservationBatch) -> Result<CMatrix> {
    accumulate_moment(batch.len(), batch.dim(), |i, buf| buf.copy_from_slice(batch.sample(i)))
}

/// Subtracts `σ² I`.
pub fn debias(moment: &CMatrix, sigma: f64) -> CMatrix {
    let n = moment.nrows();
    moment - CMatrix::identity(n, n) * C64::new(sigma * sigma, 0.0)
}
