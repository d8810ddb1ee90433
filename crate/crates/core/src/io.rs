//! JSON file formats.
//!
//! - Dense matrix: `{"rows": n, "cols": m, "data": [row-major reals]}`.
//! - Observation: a dense matrix plus `"mask"` (row-major 0/1), `"p"`,
//!   `"sigma"` and `"b"` (real or null).
//! - Factorization: `{"x": matrix, "b": matrix, "z": matrix}`.
//! - Spec: the serde form of [`StructureSpec`](crate::model::StructureSpec).

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Observation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixFile {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&DMatrix<f64>> for MatrixFile {
    fn from(a: &DMatrix<f64>) -> Self {
        Self {
            rows: a.nrows(),
            cols: a.ncols(),
            data: row_major(a),
        }
    }
}

impl TryFrom<MatrixFile> for DMatrix<f64> {
    type Error = Error;

    fn try_from(f: MatrixFile) -> Result<Self> {
        if f.data.len() != f.rows * f.cols {
            return Err(Error::shape(
                "matrix file",
                format!(
                    "{}x{} needs {} values, got {}",
                    f.rows,
                    f.cols,
                    f.rows * f.cols,
                    f.data.len()
                ),
            ));
        }
        Ok(DMatrix::from_row_slice(f.rows, f.cols, &f.data))
    }
}

pub fn row_major<T: nalgebra::Scalar + Copy>(a: &DMatrix<T>) -> Vec<T> {
    (0..a.nrows())
        .flat_map(|i| (0..a.ncols()).map(move |j| a[(i, j)]))
        .collect()
}

/// `#[serde(with = "dense")]` adapter for `DMatrix<f64>` fields.
pub mod dense {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(a: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixFile::from(a).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DMatrix<f64>, D::Error> {
        let f = MatrixFile::deserialize(d)?;
        DMatrix::try_from(f).map_err(serde::de::Error::custom)
    }
}

/// `#[serde(with = "dense_list")]` adapter for `Vec<DMatrix<f64>>` fields.
pub mod dense_list {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(a: &[DMatrix<f64>], s: S) -> std::result::Result<S::Ok, S::Error> {
        let files: Vec<MatrixFile> = a.iter().map(MatrixFile::from).collect();
        files.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<DMatrix<f64>>, D::Error> {
        Vec::<MatrixFile>::deserialize(d)?
            .into_iter()
            .map(|f| DMatrix::try_from(f).map_err(serde::de::Error::custom))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationFile {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    pub mask: Vec<u8>,
    pub p: f64,
    pub sigma: f64,
    pub b: Option<f64>,
}

impl From<Observation> for ObservationFile {
    fn from(o: Observation) -> Self {
        Self {
            rows: o.nrows(),
            cols: o.ncols(),
            data: row_major(o.y()),
            mask: row_major(o.mask()).into_iter().map(u8::from).collect(),
            p: o.p(),
            sigma: o.sigma(),
            b: o.b(),
        }
    }
}

impl TryFrom<ObservationFile> for Observation {
    type Error = Error;

    fn try_from(f: ObservationFile) -> Result<Self> {
        let n = f.rows * f.cols;
        if f.data.len() != n || f.mask.len() != n {
            return Err(Error::shape(
                "observation file",
                format!("{}x{} needs {n} data and mask values", f.rows, f.cols),
            ));
        }
        if f.mask.iter().any(|&e| e > 1) {
            return Err(Error::Parameter("mask entries must be 0 or 1".into()));
        }
        let y = DMatrix::from_row_slice(f.rows, f.cols, &f.data);
        let mask: Vec<bool> = f.mask.iter().map(|&e| e == 1).collect();
        let mask = DMatrix::from_row_slice(f.rows, f.cols, &mask);
        Observation::new(y, mask, f.p, f.sigma, f.b)
    }
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    fs::write(path, to_json(value)?)?;
    Ok(())
}
