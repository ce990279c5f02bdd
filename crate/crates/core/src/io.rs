//! Serialization: JSON documents for networks and moments (row-major matrix
//! arrays plus a format-version tag) and CSV ingestion of paired samples.

use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::{compute_moments, DataMoments, LinearNetwork};
use crate::FORMAT_VERSION;

/// Row-major dense matrix representation used by every JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRepr {
    pub rows: usize,
    pub cols: usize,
    /// Row-major entries, length `rows * cols`.
    pub data: Vec<f64>,
}

impl MatrixRepr {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                data.push(m[(r, c)]);
            }
        }
        Self { rows: m.nrows(), cols: m.ncols(), data }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::InvalidDocument(format!(
                "matrix data length {} does not match {}x{}",
                self.data.len(),
                self.rows,
                self.cols
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

fn check_format(found: &str) -> Result<()> {
    if found != FORMAT_VERSION {
        return Err(Error::InvalidDocument(format!(
            "unsupported format {found:?}, expected {FORMAT_VERSION:?}"
        )));
    }
    Ok(())
}

/// On-disk form of a [`LinearNetwork`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkDocument {
    pub format: String,
    pub dims: Vec<usize>,
    pub weights: Vec<MatrixRepr>,
}

impl NetworkDocument {
    pub fn from_network(net: &LinearNetwork) -> Self {
        Self {
            format: FORMAT_VERSION.to_string(),
            dims: net.dims().to_vec(),
            weights: net.weights().iter().map(MatrixRepr::from_matrix).collect(),
        }
    }

    pub fn to_network(&self) -> Result<LinearNetwork> {
        check_format(&self.format)?;
        let weights: Result<Vec<_>> = self.weights.iter().map(MatrixRepr::to_matrix).collect();
        let net = LinearNetwork::new(weights?)?;
        if net.dims() != self.dims.as_slice() {
            return Err(Error::InvalidDocument("dims field disagrees with weight shapes".into()));
        }
        Ok(net)
    }
}

impl Serialize for LinearNetwork {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        NetworkDocument::from_network(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for LinearNetwork {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let doc = NetworkDocument::deserialize(deserializer)?;
        doc.to_network().map_err(serde::de::Error::custom)
    }
}

/// On-disk form of [`DataMoments`]; the square root and whiteness flag are
/// recomputed on load so the invariants always hold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentsDocument {
    pub format: String,
    pub sigma_x: MatrixRepr,
    pub sigma_yx: MatrixRepr,
    pub sigma_y: MatrixRepr,
}

impl MomentsDocument {
    pub fn from_moments(moments: &DataMoments) -> Self {
        Self {
            format: FORMAT_VERSION.to_string(),
            sigma_x: MatrixRepr::from_matrix(&moments.sigma_x),
            sigma_yx: MatrixRepr::from_matrix(&moments.sigma_yx),
            sigma_y: MatrixRepr::from_matrix(&moments.sigma_y),
        }
    }

    pub fn to_moments(&self) -> Result<DataMoments> {
        check_format(&self.format)?;
        DataMoments::new(self.sigma_x.to_matrix()?, self.sigma_yx.to_matrix()?, self.sigma_y.to_matrix()?)
    }
}

impl Serialize for DataMoments {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        MomentsDocument::from_moments(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DataMoments {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let doc = MomentsDocument::deserialize(deserializer)?;
        doc.to_moments().map_err(serde::de::Error::custom)
    }
}

/// Serde adapter for `DVector<f64>` fields (plain JSON arrays).
pub mod serde_dvector {
    use super::*;

    pub fn serialize<S: serde::Serializer>(
        v: &DVector<f64>,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        v.as_slice().serialize(serializer)
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(deserializer)?))
    }
}

/// Paired samples read from CSV: header row, one sample per row, the first
/// `d_x` columns are the input and the next `d_y` columns the output.
pub fn read_samples_csv<R: Read>(reader: R, d_x: usize, d_y: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if d_x == 0 || d_y == 0 {
        return Err(Error::InvalidArgument("d_x and d_y must be positive".into()));
    }
    let mut csv_reader = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for record in csv_reader.records() {
        let record = record?;
        if record.len() != d_x + d_y {
            return Err(Error::InvalidDocument(format!(
                "row {} has {} columns, expected {}",
                n + 2,
                record.len(),
                d_x + d_y
            )));
        }
        for (i, field) in record.iter().enumerate() {
            let value: f64 = field.trim().parse().map_err(|_| {
                Error::InvalidDocument(format!("row {}, column {}: not a number: {field:?}", n + 2, i + 1))
            })?;
            if i < d_x {
                xs.push(value);
            } else {
                ys.push(value);
            }
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::InvalidDocument("no sample rows in CSV".into()));
    }
    Ok((
        DMatrix::from_row_slice(n, d_x, &xs),
        DMatrix::from_row_slice(n, d_y, &ys),
    ))
}

/// [`read_samples_csv`] from a file path, straight into moments.
pub fn moments_from_csv(path: &Path, d_x: usize, d_y: usize) -> Result<DataMoments> {
    let file = std::fs::File::open(path)?;
    let (x, y) = read_samples_csv(file, d_x, d_y)?;
    compute_moments(&x, &y)
}
