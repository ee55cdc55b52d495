//! JSON forms of the core types.
//!
//! Complex numbers are `[re, im]` pairs and matrices are row-major nested
//! arrays. Specs use `{"blocks":[{"dim":..,"mult":..,"parity":..}],"field":..}`.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::linalg::{CMatrix, CVector};
use crate::moments::GramMoment;
use crate::rep::{BlockSignal, Coefficients, RepresentationSpec, SparseBasis};
use crate::C64;

fn pair(z: &C64) -> [f64; 2] {
    [z.re, z.im]
}

fn unpair(p: [f64; 2]) -> C64 {
    C64::new(p[0], p[1])
}

pub fn matrix_rows(m: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| pair(&m[(r, c)])).collect()).collect()
}

pub fn matrix_from_rows(rows: &[Vec<[f64; 2]>]) -> Result<CMatrix, String> {
    let nrows = rows.len();
    let ncols = rows.first().map(Vec::len).unwrap_or(0);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err("ragged matrix rows".into());
    }
    Ok(CMatrix::from_fn(nrows, ncols, |r, c| unpair(rows[r][c])))
}

pub mod complex_vector {
    use super::*;

    pub fn serialize<S: Serializer>(v: &CVector, s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(pair).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CVector, D::Error> {
        let raw = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(CVector::from_iterator(raw.len(), raw.into_iter().map(unpair)))
    }
}

pub mod complex_matrix {
    use super::*;

    pub fn serialize<S: Serializer>(m: &CMatrix, s: S) -> Result<S::Ok, S::Error> {
        matrix_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CMatrix, D::Error> {
        let raw = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        matrix_from_rows(&raw).map_err(serde::de::Error::custom)
    }
}

pub mod complex_matrix_list {
    use super::*;

    pub fn serialize<S: Serializer>(ms: &[CMatrix], s: S) -> Result<S::Ok, S::Error> {
        ms.iter().map(matrix_rows).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CMatrix>, D::Error> {
        let raw = Vec::<Vec<Vec<[f64; 2]>>>::deserialize(d)?;
        raw.iter().map(|m| matrix_from_rows(m).map_err(serde::de::Error::custom)).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct SignalDoc {
    spec: RepresentationSpec,
    #[serde(with = "complex_matrix_list")]
    matrices: Vec<CMatrix>,
}

impl Serialize for BlockSignal {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        SignalDoc { spec: self.spec().clone(), matrices: self.matrices().to_vec() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for BlockSignal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let doc = SignalDoc::deserialize(d)?;
        BlockSignal::new(doc.spec, doc.matrices).map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct GramDoc {
    spec: RepresentationSpec,
    #[serde(with = "complex_matrix_list")]
    grams: Vec<CMatrix>,
}

impl Serialize for GramMoment {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        GramDoc { spec: self.spec().clone(), grams: self.grams().to_vec() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for GramMoment {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let doc = GramDoc::deserialize(d)?;
        GramMoment::new_estimate(doc.spec, doc.grams).map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct BasisDoc {
    coefficients: Coefficients,
    #[serde(with = "complex_matrix")]
    matrix: CMatrix,
}

impl Serialize for SparseBasis {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        BasisDoc { coefficients: self.coefficients(), matrix: self.matrix().clone() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for SparseBasis {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let doc = BasisDoc::deserialize(d)?;
        SparseBasis::new(doc.matrix, doc.coefficients).map_err(serde::de::Error::custom)
    }
}
