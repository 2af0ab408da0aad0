//! Dense tensors with a small reverse-mode tape.
//!
//! Everything here is sized for one job: training the compact U-net denoiser
//! on a handful of single-channel images. Tensors are NCHW, stored row-major
//! in `f64`. There is no broadcasting and no dynamic graph reuse; a [`Graph`]
//! records one forward pass and is dropped after `backward`.

mod adam;
pub(crate) mod conv;
mod graph;

pub use adam::{adam_step, AdamConfig, AdamState, LrSchedule, ParamSet};
pub use graph::{Gradients, Graph, Var};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(
                "Tensor::new",
                format!("shape {:?} needs {} values, got {}", shape, n, data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; n] }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![value; n] }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor { shape: vec![1], data: vec![value] }
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

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Single value of a one-element tensor.
    pub fn item(&self) -> Option<f64> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    /// Extents of a 4-D tensor as `(n, c, h, w)`.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape[..] {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(Error::shape("dims4", format!("expected 4-D tensor, got {:?}", self.shape))),
        }
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::shape("reshape", format!("{:?} -> {:?}", self.shape, shape)));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Copy of batch item `i` of an NCHW tensor, keeping a leading batch of 1.
    pub fn batch_item(&self, i: usize) -> Result<Tensor> {
        let (n, c, h, w) = self.dims4()?;
        if i >= n {
            return Err(Error::shape("batch_item", format!("index {i} out of {n}")));
        }
        let len = c * h * w;
        Ok(Tensor { shape: vec![1, c, h, w], data: self.data[i * len..(i + 1) * len].to_vec() })
    }

    /// Stack equally shaped single-channel images into an `(n, 1, h, w)` tensor.
    pub fn stack_images(images: &[Vec<f64>], h: usize, w: usize) -> Result<Tensor> {
        let mut data = Vec::with_capacity(images.len() * h * w);
        for img in images {
            if img.len() != h * w {
                return Err(Error::shape("stack_images", format!("image of {} values, expected {}", img.len(), h * w)));
            }
            data.extend_from_slice(img);
        }
        Ok(Tensor { shape: vec![images.len(), 1, h, w], data })
    }
}
