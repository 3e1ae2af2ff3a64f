//! Dense rank-2 tensors, a static operator graph over them, constant
//! folding, and lowering of model pipelines to graphs.

mod fold;
mod graph;
mod translate;

pub use fold::const_fold;
pub use graph::{Batch, Dim, Shape, TensorGraph, TensorOp};
pub use translate::{translate_pipeline, TensorInputSpec, TensorModel, TreeMatrices};

use crate::scalar::Scalar;

/// Element kind. Integer tensors hold integral values in the same storage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DType {
    Real,
    Int,
}

/// Row-major `rows x cols` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    rows: usize,
    cols: usize,
    dtype: DType,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(rows * cols, data.len(), "tensor data does not match shape");
        Tensor {
            rows,
            cols,
            dtype: DType::Real,
            data,
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor::new(rows, cols, vec![T::zero(); rows * cols])
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let data = rows
            .iter()
            .flat_map(|r| {
                assert_eq!(r.len(), cols, "ragged rows");
                r.iter().map(|v| T::from_param(*v))
            })
            .collect();
        Tensor::new(rows.len(), cols, data)
    }

    pub fn column(values: &[f64]) -> Self {
        Tensor::new(values.len(), 1, values.iter().map(|v| T::from_param(*v)).collect())
    }

    pub fn row(values: &[f64]) -> Self {
        Tensor::new(1, values.len(), values.iter().map(|v| T::from_param(*v)).collect())
    }

    pub fn scalar(value: f64) -> Self {
        Tensor::row(&[value])
    }

    pub fn with_dtype(mut self, dtype: DType) -> Self {
        self.dtype = dtype;
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn to_f64_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self.get(r, c).to_param()).collect())
            .collect()
    }

    /// Repeats a single-row tensor `n` times.
    pub fn broadcast_rows(&self, n: usize) -> Self {
        if self.rows == n {
            return self.clone();
        }
        assert_eq!(self.rows, 1, "only single-row tensors broadcast");
        let mut data = Vec::with_capacity(n * self.cols);
        for _ in 0..n {
            data.extend_from_slice(&self.data);
        }
        Tensor {
            rows: n,
            cols: self.cols,
            dtype: self.dtype,
            data,
        }
    }
}
