use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Edge-adjacent pairs inside a 2x2 cell, as offsets `(dr, dc)`.
pub const CELL_PAIRS: [[(usize, usize); 2]; 4] = [
    [(0, 0), (0, 1)],
    [(1, 0), (1, 1)],
    [(0, 0), (1, 0)],
    [(0, 1), (1, 1)],
];

/// Per-cell choice of neighbour pair and of which member goes to `S1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsamplerPair {
    pub height: usize,
    pub width: usize,
    /// `2 * pair + swap` per cell, row-major over the half-size grid.
    pub cells: Vec<u8>,
}

impl SubsamplerPair {
    pub fn random<R: Rng>(height: usize, width: usize, rng: &mut R) -> Result<Self> {
        if height % 2 != 0 || width % 2 != 0 || height == 0 || width == 0 {
            return Err(Error::shape("neighbor_subsample", format!("image must have even positive sides, got {height}x{width}")));
        }
        let cells = (0..(height / 2) * (width / 2)).map(|_| rng.random_range(0..8u8)).collect();
        Ok(SubsamplerPair { height, width, cells })
    }

    pub fn from_seed(height: usize, width: usize, seed: u64) -> Result<Self> {
        Self::random(height, width, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn pair_of(&self, cell: usize) -> usize {
        (self.cells[cell] >> 1) as usize
    }

    /// Flat indices into one `height x width` image for `S1` and `S2`.
    pub fn indices(&self) -> (Vec<usize>, Vec<usize>) {
        let hw = self.width / 2;
        let mut s1 = Vec::with_capacity(self.cells.len());
        let mut s2 = Vec::with_capacity(self.cells.len());
        for (k, &code) in self.cells.iter().enumerate() {
            let (r, c) = (2 * (k / hw), 2 * (k % hw));
            let [p, q] = CELL_PAIRS[(code >> 1) as usize];
            let (a, b) = if code & 1 == 0 { (p, q) } else { (q, p) };
            s1.push((r + a.0) * self.width + c + a.1);
            s2.push((r + b.0) * self.width + c + b.1);
        }
        (s1, s2)
    }

    /// Indices for a `(n, 1, h, w)` batch where item `i` uses `masks[i]`.
    pub fn batch_indices(masks: &[SubsamplerPair]) -> Result<(Vec<usize>, Vec<usize>)> {
        let first = masks.first().ok_or_else(|| Error::InvalidArgument("no subsampling masks".into()))?;
        let plane = first.height * first.width;
        let (mut s1, mut s2) = (Vec::new(), Vec::new());
        for (i, m) in masks.iter().enumerate() {
            if (m.height, m.width) != (first.height, first.width) {
                return Err(Error::shape("neighbor_subsample", "masks in one batch differ in size"));
            }
            let (a, b) = m.indices();
            s1.extend(a.into_iter().map(|j| i * plane + j));
            s2.extend(b.into_iter().map(|j| i * plane + j));
        }
        Ok((s1, s2))
    }

    pub fn apply(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if x.len() != self.height * self.width {
            return Err(Error::shape("neighbor_subsample", format!("image of {} values for a {}x{} mask", x.len(), self.height, self.width)));
        }
        let (i1, i2) = self.indices();
        Ok((i1.iter().map(|&i| x[i]).collect(), i2.iter().map(|&i| x[i]).collect()))
    }
}

/// Split `x` into the two half-size neighbour sub-images.
pub fn neighbor_subsample(x: &[f64], height: usize, width: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>, SubsamplerPair)> {
    let mask = SubsamplerPair::from_seed(height, width, seed)?;
    let (s1, s2) = mask.apply(x)?;
    Ok((s1, s2, mask))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_picks_distinct_adjacent_pixels() {
        for seed in 0..50 {
            let (s1, s2, m) = neighbor_subsample(&[1.0, 2.0, 3.0, 4.0], 2, 2, seed).unwrap();
            let (a, b) = (s1[0] as usize - 1, s2[0] as usize - 1);
            assert_ne!(a, b);
            let (ra, ca, rb, cb) = (a / 2, a % 2, b / 2, b % 2);
            assert_eq!(ra.abs_diff(rb) + ca.abs_diff(cb), 1, "mask {m:?}");
        }
    }

    #[test]
    fn constant_image_gives_equal_halves() {
        let (s1, s2, _) = neighbor_subsample(&[0.7; 36], 6, 6, 9).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(s1.len(), 9);
    }

    #[test]
    fn odd_sizes_rejected() {
        assert!(neighbor_subsample(&[0.0; 15], 3, 5, 0).is_err());
    }

    #[test]
    fn mask_regenerates_from_seed() {
        assert_eq!(SubsamplerPair::from_seed(8, 4, 11).unwrap(), SubsamplerPair::from_seed(8, 4, 11).unwrap());
    }
}
