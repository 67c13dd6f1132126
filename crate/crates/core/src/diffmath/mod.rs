//! Dense f64 tensor numerics with tape-based reverse-mode autodiff.
//!
//! Everything is deliberately small and deterministic: a [`Tensor`] is a
//! row-major `Vec<f64>` plus a shape, a [`Tape`] records one forward pass and
//! is discarded after [`Tape::backward`], and parameters live in a
//! [`ParamStore`] owned by whoever trains them. Gradients accumulate into the
//! store until [`ParamStore::zero_grad`] is called, which is what lets two
//! losses (critic and policy) drive separate optimizer steps without sharing
//! tape state.

mod adam;
mod nn;
mod tape;

pub use adam::{adam_update, Adam, AdamState};
pub use nn::{gru_step, mlp_forward, Activation, BoundGru, BoundLinear, BoundMlp, GruCell, Linear, Mlp, MlpLayer, NormedLinear};
pub use tape::{grad, DiffError, NodeId, Tape};

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

/// Row-major dense tensor of 64-bit floats.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor from a shape and row-major data.
    ///
    /// Panics if the data length does not match the shape product or if any
    /// dimension is zero.
    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Self {
        let numel: usize = shape.iter().product();
        assert!(
            !shape.is_empty() && shape.iter().all(|&d| d > 0),
            "tensor shape must have positive dimensions, got {shape:?}"
        );
        assert_eq!(
            data.len(),
            numel,
            "data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        Tensor { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        assert!(!shape.is_empty() && shape.iter().all(|&d| d > 0));
        Tensor {
            shape,
            data: vec![0.0; numel],
        }
    }

    pub fn scalar(x: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![x],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        assert!(!data.is_empty());
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    /// A 1 x n matrix, the layout used for single observations fed to nets.
    pub fn row_matrix(data: Vec<f64>) -> Self {
        assert!(!data.is_empty());
        Tensor {
            shape: vec![1, data.len()],
            data,
        }
    }

    /// Stacks equal-length rows into a [rows.len(), width] matrix.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        assert!(!rows.is_empty());
        let width = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * width);
        for r in rows {
            assert_eq!(r.len(), width, "ragged rows in from_rows");
            data.extend_from_slice(r);
        }
        Tensor {
            shape: vec![rows.len(), width],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Scalar value; panics if the tensor is not a single element.
    pub fn item(&self) -> f64 {
        assert!(self.is_scalar(), "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    /// Number of rows when interpreted as a matrix ([n] counts as one row).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            1 => 1,
            2 => self.shape[0],
            _ => panic!("rows() on tensor of rank {}", self.shape.len()),
        }
    }

    /// Width of the trailing axis.
    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap()
    }

    /// Row `i` as a slice when interpreted as a matrix.
    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.cols();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl fmt::Display for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}{:?}", self.shape, self.data)
    }
}

/// A trainable value: current weights plus an accumulated gradient.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape().to_vec());
        Parameter {
            name: name.into(),
            value,
            grad,
        }
    }
}

/// Handle into a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

static STORE_COUNTER: AtomicU64 = AtomicU64::new(1);

/// Arena of parameters owned by one network (or one group of networks).
///
/// Each store carries a process-unique token so a tape that recorded leaves
/// from several stores can route gradients back to the right one.
#[derive(Clone, Debug)]
pub struct ParamStore {
    token: u64,
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            token: STORE_COUNTER.fetch_add(1, Ordering::Relaxed),
            params: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let id = ParamId(self.params.len());
        self.params.push(Parameter::new(name, value));
        id
    }

    pub fn token(&self) -> u64 {
        self.token
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    /// Resets every accumulated gradient to zero.
    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            for g in p.grad.data_mut() {
                *g = 0.0;
            }
        }
    }

    /// Copies all values from `src`, matching by position. Used to initialize
    /// target networks as exact copies of the online networks.
    pub fn copy_values_from(&mut self, src: &ParamStore) {
        assert_eq!(self.params.len(), src.params.len(), "store size mismatch");
        for (dst, src) in self.params.iter_mut().zip(src.params.iter()) {
            assert_eq!(dst.value.shape(), src.value.shape(), "shape mismatch for {}", dst.name);
            dst.value = src.value.clone();
        }
    }

    /// Polyak averaging: `self <- tau * src + (1 - tau) * self`, entrywise.
    pub fn soft_update_from(&mut self, src: &ParamStore, tau: f64) {
        assert!((0.0..=1.0).contains(&tau), "tau out of [0,1]: {tau}");
        assert_eq!(self.params.len(), src.params.len(), "store size mismatch");
        for (dst, src) in self.params.iter_mut().zip(src.params.iter()) {
            assert_eq!(dst.value.shape(), src.value.shape(), "shape mismatch for {}", dst.name);
            for (d, s) in dst.value.data_mut().iter_mut().zip(src.value.data().iter()) {
                *d = tau * s + (1.0 - tau) * *d;
            }
        }
    }

    /// A value-identical copy under a fresh token. Used to spawn target
    /// networks that a tape will never confuse with their online twins.
    pub fn clone_with_new_token(&self) -> ParamStore {
        let mut copy = ParamStore::new();
        for p in &self.params {
            copy.add(p.name.clone(), p.value.clone());
        }
        copy
    }

    /// Flat (name, values) export for checkpointing.
    pub fn export(&self) -> Vec<(String, Vec<f64>)> {
        self.params
            .iter()
            .map(|p| (p.name.clone(), p.value.data().to_vec()))
            .collect()
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}
