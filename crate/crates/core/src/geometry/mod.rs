//! Height-field representation of the gel surface.
//!
//! Grids are row-major with the origin at the top-left pixel: `x` grows to
//! the right, `y` grows downward and `z` points toward the internal camera.
//! Heights are penetration depths into the elastomer, so `0` is the
//! undeformed rest surface.

mod eigen;

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub use eigen::{symmetric_eigen3, SymmetricEigen3, JACOBI_TOLERANCE};

pub type Vec3 = Vector3<f64>;

/// Neighbourhood radius used when the caller has no preference (3×3 window).
pub const DEFAULT_NORMAL_RADIUS: usize = 1;

/// An unvalidated scalar depth grid, as read from disk or produced by a
/// renderer, before it is clipped to the elastomer thickness.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthGrid {
    pub width: usize,
    pub height: usize,
    pub pixel_pitch: f64,
    pub values: Vec<f64>,
}

impl DepthGrid {
    pub fn new(width: usize, height: usize, pixel_pitch: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::InvalidGrid(format!(
                "{}x{} grid needs {} values, got {}",
                width,
                height,
                width * height,
                values.len()
            )));
        }
        if !(pixel_pitch.is_finite() && pixel_pitch > 0.0) {
            return Err(Error::param("pixel_pitch", format!("{pixel_pitch} is not a positive length")));
        }
        Ok(Self {
            width,
            height,
            pixel_pitch,
            values,
        })
    }
}

/// The gel surface `z = f(x, y)` sampled on the sensor pixel grid, in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightField {
    width: usize,
    height: usize,
    pixel_pitch: f64,
    values: Vec<f64>,
}

impl HeightField {
    pub fn new(width: usize, height: usize, pixel_pitch: f64, values: Vec<f64>) -> Result<Self> {
        if width < 3 || height < 3 {
            return Err(Error::InvalidGrid(format!(
                "height fields need at least 3x3 pixels, got {width}x{height}"
            )));
        }
        let grid = DepthGrid::new(width, height, pixel_pitch, values)?;
        check_depths(&grid)?;
        Ok(Self {
            width,
            height,
            pixel_pitch,
            values: grid.values,
        })
    }

    pub fn zeros(width: usize, height: usize, pixel_pitch: f64) -> Result<Self> {
        Self::new(width, height, pixel_pitch, vec![0.0; width * height])
    }

    /// Build from a closure evaluated at every pixel index `(x, y)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        pixel_pitch: f64,
        f: impl Fn(usize, usize) -> f64,
    ) -> Result<Self> {
        let values = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self::new(width, height, pixel_pitch, values)
    }

    /// Skips validation; callers guarantee the invariants.
    pub(crate) fn from_raw(width: usize, height: usize, pixel_pitch: f64, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), width * height);
        Self {
            width,
            height,
            pixel_pitch,
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_pitch(&self) -> f64 {
        self.pixel_pitch
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

fn check_depths(grid: &DepthGrid) -> Result<()> {
    for (i, &value) in grid.values.iter().enumerate() {
        let (x, y) = (i % grid.width, i / grid.width);
        if !value.is_finite() {
            return Err(Error::NonFiniteDepth { x, y, value });
        }
        if value < 0.0 {
            return Err(Error::NegativeDepth { x, y, value });
        }
    }
    Ok(())
}

/// Limit raw penetration depths to the elastomer thickness.
pub fn clip_depth(raw: &DepthGrid, gel_thickness: f64) -> Result<HeightField> {
    if !(gel_thickness.is_finite() && gel_thickness > 0.0) {
        return Err(Error::param("gel_thickness", format!("{gel_thickness} must be positive")));
    }
    check_depths(raw)?;
    let values = raw.values.iter().map(|&v| v.min(gel_thickness)).collect();
    HeightField::new(raw.width, raw.height, raw.pixel_pitch, values)
}

/// Surface slopes `∂f/∂x` and `∂f/∂y` (dimensionless).
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub width: usize,
    pub height: usize,
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
}

/// Central differences in the interior, one-sided differences on the border.
pub fn gradients(hf: &HeightField) -> GradientField {
    let (w, h, pitch) = (hf.width, hf.height, hf.pixel_pitch);
    let mut dx = vec![0.0; w * h];
    let mut dy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            dx[y * w + x] = match x {
                0 => (hf.get(1, y) - hf.get(0, y)) / pitch,
                _ if x == w - 1 => (hf.get(x, y) - hf.get(x - 1, y)) / pitch,
                _ => (hf.get(x + 1, y) - hf.get(x - 1, y)) / (2.0 * pitch),
            };
            dy[y * w + x] = match y {
                0 => (hf.get(x, 1) - hf.get(x, 0)) / pitch,
                _ if y == h - 1 => (hf.get(x, y) - hf.get(x, y - 1)) / pitch,
                _ => (hf.get(x, y + 1) - hf.get(x, y - 1)) / (2.0 * pitch),
            };
        }
    }
    GradientField {
        width: w,
        height: h,
        dx,
        dy,
    }
}

/// Unit surface normals, one per pixel, oriented toward the camera (`z ≥ 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct NormalField {
    width: usize,
    height: usize,
    normals: Vec<Vec3>,
}

impl NormalField {
    /// Every normal equal to `(0, 0, 1)`.
    pub fn flat(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            normals: vec![Vec3::z(); width * height],
        }
    }

    /// Normalizes each vector and flips it so `z ≥ 0`.
    pub fn from_vectors(width: usize, height: usize, vectors: Vec<Vec3>) -> Result<Self> {
        if vectors.len() != width * height {
            return Err(Error::InvalidGrid(format!(
                "{}x{} normal field needs {} vectors, got {}",
                width,
                height,
                width * height,
                vectors.len()
            )));
        }
        let normals = vectors
            .into_iter()
            .map(|v| {
                let n = v.normalize();
                if n.z < 0.0 {
                    -n
                } else {
                    n
                }
            })
            .collect::<Vec<_>>();
        if normals.iter().any(|n| !n.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidGrid("normal field contains a zero or non-finite vector".into()));
        }
        Ok(Self {
            width,
            height,
            normals,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Vec3 {
        self.normals[y * self.width + x]
    }
}

/// Per-pixel normals from the principal axes of the neighbourhood point cloud.
///
/// Each pixel gathers the 3D points `(x·pitch, y·pitch, f)` from the
/// `(2·radius+1)²` window around it (clamping indices at the borders), and
/// takes the eigenvector of the smallest covariance eigenvalue. When the two
/// smallest eigenvalues tie, the candidate with the larger `z` wins. A window
/// whose points all coincide yields `(0, 0, 1)`.
pub fn normals_covariance(hf: &HeightField, radius: usize) -> Result<NormalField> {
    if radius < 1 {
        return Err(Error::param("radius", "covariance window radius must be at least 1"));
    }
    if hf.width <= 2 * radius || hf.height <= 2 * radius {
        return Err(Error::param(
            "radius",
            format!(
                "radius {radius} needs a grid larger than {0}x{0}, got {1}x{2}",
                2 * radius,
                hf.width,
                hf.height
            ),
        ));
    }

    let w = hf.width;
    let mut normals = vec![Vec3::z(); w * hf.height];
    normals
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(y, row)| {
            for (x, n) in row.iter_mut().enumerate() {
                *n = window_normal(hf, x, y, radius);
            }
        });
    Ok(NormalField {
        width: w,
        height: hf.height,
        normals,
    })
}

fn window_normal(hf: &HeightField, cx: usize, cy: usize, radius: usize) -> Vec3 {
    let r = radius as isize;
    let clamp = |v: isize, hi: usize| v.clamp(0, hi as isize - 1) as usize;
    let pitch = hf.pixel_pitch;

    let count = ((2 * radius + 1) * (2 * radius + 1)) as f64;
    let mut mean = [0.0; 3];
    for dy in -r..=r {
        let y = clamp(cy as isize + dy, hf.height);
        for dx in -r..=r {
            let x = clamp(cx as isize + dx, hf.width);
            mean[0] += x as f64 * pitch;
            mean[1] += y as f64 * pitch;
            mean[2] += hf.get(x, y);
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);

    let mut cov = [[0.0; 3]; 3];
    let mut spread = 0.0f64;
    for dy in -r..=r {
        let y = clamp(cy as isize + dy, hf.height);
        for dx in -r..=r {
            let x = clamp(cx as isize + dx, hf.width);
            let d = [
                x as f64 * pitch - mean[0],
                y as f64 * pitch - mean[1],
                hf.get(x, y) - mean[2],
            ];
            for i in 0..3 {
                spread = spread.max(d[i].abs());
                for j in i..3 {
                    cov[i][j] += d[i] * d[j];
                }
            }
        }
    }
    if spread == 0.0 {
        return Vec3::z();
    }
    for i in 0..3 {
        for j in i..3 {
            cov[i][j] /= count;
        }
    }

    let eig = symmetric_eigen3(&cov);
    let orient = |v: [f64; 3]| {
        let n = Vec3::new(v[0], v[1], v[2]);
        if n.z < 0.0 {
            -n
        } else {
            n
        }
    };
    let first = orient(eig.vectors[0]);
    let second = orient(eig.vectors[1]);
    let scale = eig.values[2].abs().max(f64::MIN_POSITIVE);
    if (eig.values[1] - eig.values[0]) <= JACOBI_TOLERANCE * scale && second.z > first.z {
        second
    } else {
        first
    }
}
