use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-energy-bin images on one shared square grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralImageStack {
    pub size: usize,
    pub bins: Vec<Vec<f64>>,
}

impl SpectralImageStack {
    pub fn new(size: usize, bins: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(b) = bins.iter().find(|b| b.len() != size * size) {
            return Err(Error::shape("SpectralImageStack", format!("bin has {} values, grid needs {}", b.len(), size * size)));
        }
        Ok(SpectralImageStack { size, bins })
    }

    pub fn zeros(size: usize, num_bins: usize) -> Self {
        SpectralImageStack { size, bins: vec![vec![0.0; size * size]; num_bins] }
    }

    pub fn num_bins(&self) -> usize {
        self.bins.len()
    }

    /// `(I, 1, size, size)` tensor.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::stack_images(&self.bins, self.size, self.size).expect("stack bins are grid-sized")
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let (n, c, h, w) = t.dims4()?;
        if c != 1 || h != w {
            return Err(Error::shape("SpectralImageStack::from_tensor", format!("{:?}", t.shape())));
        }
        let bins = t.data().chunks(h * w).take(n).map(|c| c.to_vec()).collect();
        Ok(SpectralImageStack { size: h, bins })
    }

    pub fn all_finite(&self) -> bool {
        self.bins.iter().flatten().all(|v| v.is_finite())
    }

    /// Square sub-image `[row0, row0+len) x [col0, col0+len)` of every bin.
    pub fn crop(&self, row0: usize, col0: usize, len: usize) -> Result<Self> {
        if row0 + len > self.size || col0 + len > self.size {
            return Err(Error::InvalidArgument(format!("crop {row0},{col0}+{len} outside {} grid", self.size)));
        }
        let bins = self
            .bins
            .iter()
            .map(|b| (row0..row0 + len).flat_map(|r| b[r * self.size + col0..r * self.size + col0 + len].iter().copied()).collect())
            .collect();
        Ok(SpectralImageStack { size: len, bins })
    }
}
