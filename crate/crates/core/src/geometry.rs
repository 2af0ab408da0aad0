//! Equidistant fan-beam geometry and a ray-driven projector with exact
//! per-pixel intersection lengths.
//!
//! Coordinates are in mm with the isocenter at the origin, x to the right and
//! y up. Image row 0 is the top row. For view angle `beta` the source sits at
//! `SOD * (cos beta, sin beta)` and the flat detector is centred at
//! `-(SDD - SOD) * (cos beta, sin beta)`, with cells laid out along
//! `(-sin beta, cos beta)`.
//!
//! The system matrix is traced once (Siddon-style: merge the parametric
//! crossings of the x and y grid lines, then charge each segment to the pixel
//! containing its midpoint) and kept in CSR form. Back projection walks the
//! same entries, so it is the exact transpose of forward projection.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct FanBeamGeometry {
    /// mm
    pub source_to_detector: f64,
    /// mm
    pub source_to_isocenter: f64,
    pub detector_count: usize,
    /// mm
    pub detector_pitch: f64,
    /// radians, strictly increasing in [0, 2pi)
    pub view_angles: Vec<f64>,
    /// pixels per side
    pub image_size: usize,
    /// mm
    pub pixel_size: f64,
}

impl FanBeamGeometry {
    /// `num_views` angles spread uniformly over a full turn.
    pub fn uniform(
        source_to_detector: f64,
        source_to_isocenter: f64,
        detector_count: usize,
        detector_pitch: f64,
        num_views: usize,
        image_size: usize,
        pixel_size: f64,
    ) -> Result<Self> {
        let view_angles = (0..num_views)
            .map(|i| 2.0 * std::f64::consts::PI * i as f64 / num_views as f64)
            .collect();
        let g = FanBeamGeometry {
            source_to_detector,
            source_to_isocenter,
            detector_count,
            detector_pitch,
            view_angles,
            image_size,
            pixel_size,
        };
        g.validate()?;
        Ok(g)
    }

    /// 128x128 grid of 0.25 mm pixels, 128 cells of 0.6 mm, 180 views,
    /// SOD 210 mm / SDD 350 mm.
    pub fn desk_default() -> Self {
        Self::uniform(350.0, 210.0, 128, 0.6, 180, 128, 0.25).expect("default geometry is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.source_to_isocenter > 0.0) || !(self.source_to_detector > self.source_to_isocenter) {
            return Err(Error::config("geometry", "need source_to_detector > source_to_isocenter > 0"));
        }
        if self.detector_count == 0 || self.image_size == 0 {
            return Err(Error::config("geometry", "detector_count and image_size must be positive"));
        }
        if !(self.detector_pitch > 0.0) || !(self.pixel_size > 0.0) {
            return Err(Error::config("geometry", "detector_pitch and pixel_size must be positive"));
        }
        if self.view_angles.is_empty() {
            return Err(Error::config("geometry.view_angles", "at least one view is required"));
        }
        let two_pi = 2.0 * std::f64::consts::PI;
        if self.view_angles.iter().any(|&a| !(0.0..two_pi).contains(&a)) {
            return Err(Error::config("geometry.view_angles", "angles must lie in [0, 2pi)"));
        }
        if self.view_angles.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("geometry.view_angles", "angles must be strictly increasing"));
        }
        Ok(())
    }

    pub fn num_views(&self) -> usize {
        self.view_angles.len()
    }

    pub fn num_rays(&self) -> usize {
        self.num_views() * self.detector_count
    }

    pub fn num_pixels(&self) -> usize {
        self.image_size * self.image_size
    }

    /// Source position and detector-cell centre for one ray.
    pub fn ray_endpoints(&self, view: usize, det: usize) -> ([f64; 2], [f64; 2]) {
        let beta = self.view_angles[view];
        let (sb, cb) = beta.sin_cos();
        let src = [self.source_to_isocenter * cb, self.source_to_isocenter * sb];
        let back = self.source_to_detector - self.source_to_isocenter;
        let t = (det as f64 - (self.detector_count as f64 - 1.0) / 2.0) * self.detector_pitch;
        let end = [-back * cb - t * sb, -back * sb + t * cb];
        (src, end)
    }

    /// Half-width of the square grid in mm.
    pub fn half_extent(&self) -> f64 {
        self.image_size as f64 * self.pixel_size / 2.0
    }
}

/// Image on the geometry's square grid, row-major, mm^-1.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    pub image_size: usize,
    pub pixel_size: f64,
    pub values: Vec<f64>,
}

/// Line integrals indexed `view * detector_count + detector`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub views: usize,
    pub detectors: usize,
    pub values: Vec<f64>,
}

/// Parametric range `[lo, hi]` of the ray inside the slab `[a, b]` along one
/// axis, or `None` if the ray is parallel to and outside the slab.
fn slab(origin: f64, dir: f64, a: f64, b: f64) -> Option<(f64, f64)> {
    if dir != 0.0 {
        let t0 = (a - origin) / dir;
        let t1 = (b - origin) / dir;
        Some((t0.min(t1), t0.max(t1)))
    } else if origin >= a && origin <= b {
        Some((f64::NEG_INFINITY, f64::INFINITY))
    } else {
        None
    }
}

/// Append the `(pixel, length)` pairs crossed by the segment `src -> end`.
pub(crate) fn trace_ray(geom: &FanBeamGeometry, src: [f64; 2], end: [f64; 2], out: &mut Vec<(u32, f64)>, alphas: &mut Vec<f64>) {
    let n = geom.image_size;
    let p = geom.pixel_size;
    let lo = -geom.half_extent();
    let hi = lo + n as f64 * p;
    let d = [end[0] - src[0], end[1] - src[1]];
    let length = (d[0] * d[0] + d[1] * d[1]).sqrt();
    let (Some((ax0, ax1)), Some((ay0, ay1))) = (slab(src[0], d[0], lo, hi), slab(src[1], d[1], lo, hi)) else {
        return;
    };
    let a_min = ax0.max(ay0).max(0.0);
    let a_max = ax1.min(ay1).min(1.0);
    if a_max <= a_min {
        return;
    }
    alphas.clear();
    alphas.push(a_min);
    alphas.push(a_max);
    for axis in 0..2 {
        if d[axis] == 0.0 {
            continue;
        }
        for i in 0..=n {
            let a = (lo + i as f64 * p - src[axis]) / d[axis];
            if a > a_min && a < a_max {
                alphas.push(a);
            }
        }
    }
    alphas.sort_by(|a, b| a.partial_cmp(b).expect("finite crossings"));
    for w in alphas.windows(2) {
        let (a0, a1) = (w[0], w[1]);
        if a1 <= a0 {
            continue;
        }
        let mid = 0.5 * (a0 + a1);
        let x = src[0] + mid * d[0];
        let y = src[1] + mid * d[1];
        let col = (((x - lo) / p).floor() as isize).clamp(0, n as isize - 1) as usize;
        let j = (((y - lo) / p).floor() as isize).clamp(0, n as isize - 1) as usize;
        let row = n - 1 - j;
        out.push(((row * n + col) as u32, (a1 - a0) * length));
    }
}

/// Sparse system matrix `A` (rays x pixels) of one geometry.
#[derive(Debug, Clone)]
pub struct Projector {
    geom: FanBeamGeometry,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    weights: Vec<f64>,
}

impl Projector {
    pub fn new(geom: &FanBeamGeometry) -> Result<Self> {
        geom.validate()?;
        if geom.num_pixels() > u32::MAX as usize {
            return Err(Error::InvalidArgument("image grid too large".into()));
        }
        let mut row_ptr = Vec::with_capacity(geom.num_rays() + 1);
        let mut entries: Vec<(u32, f64)> = Vec::new();
        let mut alphas = Vec::with_capacity(2 * geom.image_size + 4);
        row_ptr.push(0);
        for v in 0..geom.num_views() {
            for k in 0..geom.detector_count {
                let (s, e) = geom.ray_endpoints(v, k);
                trace_ray(geom, s, e, &mut entries, &mut alphas);
                row_ptr.push(entries.len());
            }
        }
        let (cols, weights) = entries.into_iter().unzip();
        Ok(Projector { geom: geom.clone(), row_ptr, cols, weights })
    }

    pub fn geometry(&self) -> &FanBeamGeometry {
        &self.geom
    }

    pub fn nnz(&self) -> usize {
        self.weights.len()
    }

    /// Entries `(pixel, length)` of one ray.
    pub fn row(&self, ray: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[ray]..self.row_ptr[ray + 1];
        self.cols[r.clone()].iter().zip(&self.weights[r]).map(|(&c, &w)| (c as usize, w))
    }

    pub fn forward(&self, image: &[f64]) -> Result<Vec<f64>> {
        if image.len() != self.geom.num_pixels() {
            return Err(Error::shape("forward_project", format!("image has {} values, grid needs {}", image.len(), self.geom.num_pixels())));
        }
        let mut out = vec![0.0; self.geom.num_rays()];
        for (ray, o) in out.iter_mut().enumerate() {
            let r = self.row_ptr[ray]..self.row_ptr[ray + 1];
            *o = self.cols[r.clone()].iter().zip(&self.weights[r]).map(|(&c, &w)| w * image[c as usize]).sum();
        }
        Ok(out)
    }

    pub fn back(&self, sino: &[f64]) -> Result<Vec<f64>> {
        if sino.len() != self.geom.num_rays() {
            return Err(Error::shape(
                "back_project",
                format!("sinogram has {} values, geometry has {} rays", sino.len(), self.geom.num_rays()),
            ));
        }
        let mut out = vec![0.0; self.geom.num_pixels()];
        for (ray, &y) in sino.iter().enumerate() {
            if y == 0.0 {
                continue;
            }
            let r = self.row_ptr[ray]..self.row_ptr[ray + 1];
            for (&c, &w) in self.cols[r.clone()].iter().zip(&self.weights[r]) {
                out[c as usize] += w * y;
            }
        }
        Ok(out)
    }

    /// Raw `(row_sums, col_sums)` of `A`. `col_sums` is computed as the back
    /// projection of an all-ones sinogram.
    pub fn row_col_sums(&self) -> (Vec<f64>, Vec<f64>) {
        let rows = (0..self.geom.num_rays())
            .map(|ray| self.weights[self.row_ptr[ray]..self.row_ptr[ray + 1]].iter().sum())
            .collect();
        let cols = self.back(&vec![1.0; self.geom.num_rays()]).expect("sized by geometry");
        (rows, cols)
    }
}

pub fn forward_project(image: &ImageGrid, geom: &FanBeamGeometry) -> Result<Sinogram> {
    check_grid(image, geom)?;
    let p = Projector::new(geom)?;
    Ok(Sinogram { views: geom.num_views(), detectors: geom.detector_count, values: p.forward(&image.values)? })
}

pub fn back_project(sino: &Sinogram, geom: &FanBeamGeometry) -> Result<ImageGrid> {
    if sino.views != geom.num_views() || sino.detectors != geom.detector_count {
        return Err(Error::shape(
            "back_project",
            format!("sinogram {}x{} vs geometry {}x{}", sino.views, sino.detectors, geom.num_views(), geom.detector_count),
        ));
    }
    let p = Projector::new(geom)?;
    Ok(ImageGrid { image_size: geom.image_size, pixel_size: geom.pixel_size, values: p.back(&sino.values)? })
}

fn check_grid(image: &ImageGrid, geom: &FanBeamGeometry) -> Result<()> {
    if image.image_size != geom.image_size || image.values.len() != geom.num_pixels() {
        return Err(Error::shape("forward_project", format!("image grid {} vs geometry {}", image.image_size, geom.image_size)));
    }
    Ok(())
}

/// Row and column sums used by SIRT, with zeros already replaced by one so
/// they can be divided by directly.
#[derive(Debug, Clone)]
pub struct SirtWeights {
    pub row_sums: Vec<f64>,
    pub col_sums: Vec<f64>,
}

pub fn sirt_row_col_sums(proj: &Projector) -> SirtWeights {
    let (rows, cols) = proj.row_col_sums();
    let fix = |v: Vec<f64>| v.into_iter().map(|s| if s == 0.0 { 1.0 } else { s }).collect();
    SirtWeights { row_sums: fix(rows), col_sums: fix(cols) }
}
