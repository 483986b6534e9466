use ndarray::{Array2, ArrayView1, Axis};

use super::sum;
use crate::error::{Error, Result, MIN_ROW_NORM};

/// An `n x p` representation matrix of one model on one dataset.
///
/// Rows are stimuli, columns are representation dimensions. Values are
/// always held in f64; 32-bit files are promoted at load time.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub model_id: String,
    pub dataset_id: String,
    data: Array2<f64>,
    normalized: bool,
}

impl EmbeddingMatrix {
    /// Validates `n >= 2`, `p >= 1` and that every entry is finite.
    pub fn new(
        model_id: impl Into<String>,
        dataset_id: impl Into<String>,
        data: Array2<f64>,
    ) -> Result<Self> {
        let (n, p) = data.dim();
        if n < 2 {
            return Err(Error::ShapeMismatch(format!("need n >= 2 rows, got {n}")));
        }
        if p < 1 {
            return Err(Error::ShapeMismatch("need p >= 1 columns".into()));
        }
        if let Some(((row, col), _)) = data.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteValue { row, col });
        }
        Ok(Self {
            model_id: model_id.into(),
            dataset_id: dataset_id.into(),
            data,
            normalized: false,
        })
    }

    /// Anonymous matrix, mostly for tests and the FFI layer.
    pub fn from_array(data: Array2<f64>) -> Result<Self> {
        Self::new("", "", data)
    }

    /// Builds from row vectors. Panics on ragged input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == p), "ragged rows");
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let data = Array2::from_shape_vec((rows.len(), p), flat)
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        Self::from_array(data)
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn p(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.row(i)
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Gathers rows by index (duplicates allowed, e.g. bootstrap resamples).
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n()) {
            return Err(Error::InvalidInput(format!(
                "row index {bad} out of range for n = {}",
                self.n()
            )));
        }
        let mut out = Self::new(
            self.model_id.clone(),
            self.dataset_id.clone(),
            self.data.select(Axis(0), indices),
        )?;
        out.normalized = self.normalized;
        Ok(out)
    }
}

/// Scales every row to unit Euclidean norm.
pub fn l2_normalize(z: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    let mut data = z.data.clone();
    for (index, mut row) in data.rows_mut().into_iter().enumerate() {
        let norm = sum::sum(row.iter().map(|v| v * v)).sqrt();
        if norm.is_nan() || norm < MIN_ROW_NORM {
            return Err(Error::ZeroRow { index, norm });
        }
        row.mapv_inplace(|v| v / norm);
    }
    Ok(EmbeddingMatrix {
        model_id: z.model_id.clone(),
        dataset_id: z.dataset_id.clone(),
        data,
        normalized: true,
    })
}
