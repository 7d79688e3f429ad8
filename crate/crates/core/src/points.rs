use nalgebra::{DMatrix, DVector, RowDVector};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A finite set of points in R^d, one per row. Invariants: at least one row,
/// at least one column, every entry finite.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    data: DMatrix<f64>,
}

impl PointSet {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(Error::EmptyInput("point set has no rows"));
        }
        if data.ncols() == 0 {
            return Err(Error::EmptyInput("point set has no columns"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("point set entries"));
        }
        Ok(Self { data })
    }

    /// Builds from row slices; all rows must share a length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput("point set has no rows"));
        }
        let dim = rows[0].len();
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: r.len(),
                    context: "row length in from_rows",
                });
            }
        }
        let data = DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j]);
        Self::new(data)
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false // the constructor rejects empty sets
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn row(&self, i: usize) -> RowDVector<f64> {
        self.data.row(i).into_owned()
    }

    pub fn point(&self, i: usize) -> DVector<f64> {
        self.data.row(i).transpose()
    }

    pub fn iter_points(&self) -> impl Iterator<Item = DVector<f64>> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }

    /// Replaces row `i`; the new row must be finite and match the dimension.
    pub fn set_row(&mut self, i: usize, row: &DVector<f64>) -> Result<()> {
        if row.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: row.len(),
                context: "set_row",
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("set_row entries"));
        }
        self.data.row_mut(i).copy_from(&row.transpose());
        Ok(())
    }

    /// Selects the given rows (in order) into a new set.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        if idx.is_empty() {
            return Err(Error::EmptyInput("select_rows index list"));
        }
        let data = DMatrix::from_fn(idx.len(), self.dim(), |i, j| self.data[(idx[i], j)]);
        Self::new(data)
    }
}

// Serialized as a row-major list of rows; keeps the JSON schema independent of
// the matrix backend.
impl Serialize for PointSet {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..self.len())
            .map(|i| self.data.row(i).iter().copied().collect())
            .collect();
        rows.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for PointSet {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(de)?;
        PointSet::from_rows(&rows).map_err(D::Error::custom)
    }
}
