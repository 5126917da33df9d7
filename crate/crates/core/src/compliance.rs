//! Spring-array (elastic foundation) model of the elastomer.
//!
//! Every pixel carries an independent vertical spring of stiffness
//! `k_pixel`. Pressing an object `delta` meters into the gel displaces each
//! pixel by `clamp(delta − clearance, 0, gel_thickness)`; the static
//! equilibrium is the `delta` at which the summed spring force equals the
//! object's weight.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::HeightField;

/// Standard gravity, m/s².
pub const GRAVITY: f64 = 9.80665;

/// Bisection iteration cap; 60 halvings of a 5 mm bracket reach f64 resolution.
pub const MAX_BISECTION_STEPS: usize = 60;

/// Force residual at which bisection stops early, N.
pub const FORCE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComplianceParams {
    /// Spring stiffness of a single pixel, N/m.
    pub k_pixel: f64,
    /// Gaussian blur applied to the displacement before shading, pixels.
    pub smoothing_sigma: f64,
}

impl Default for ComplianceParams {
    fn default() -> Self {
        Self {
            k_pixel: default_k_pixel(),
            smoothing_sigma: 2.0,
        }
    }
}

impl ComplianceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_pixel.is_finite() && self.k_pixel > 0.0) {
            return Err(Error::param("compliance.k_pixel", format!("{} must be positive", self.k_pixel)));
        }
        if !(self.smoothing_sigma.is_finite() && self.smoothing_sigma >= 0.0) {
            return Err(Error::param(
                "compliance.smoothing_sigma",
                format!("{} must be non-negative", self.smoothing_sigma),
            ));
        }
        Ok(())
    }
}

/// Stiffness at which a 1133 g flat disc of 7 cm diameter sinks 1.5 mm into
/// a 224×224 grid spanning 15 cm.
pub fn default_k_pixel() -> f64 {
    let pitch = 0.15 / 224.0;
    let pixels = std::f64::consts::PI * 0.035 * 0.035 / (pitch * pitch);
    grams_to_newtons(1133.0) / (pixels * 0.0015)
}

pub fn grams_to_newtons(grams: f64) -> f64 {
    grams * 1e-3 * GRAVITY
}

/// Height of the object's lower surface above the rest membrane, per pixel.
/// `f64::INFINITY` marks pixels the object does not cover.
#[derive(Debug, Clone, PartialEq)]
pub struct ClearanceGrid {
    pub width: usize,
    pub height: usize,
    pub pixel_pitch: f64,
    pub values: Vec<f64>,
}

impl ClearanceGrid {
    /// Pixels where the object is present.
    pub fn footprint(&self) -> Vec<bool> {
        self.values.iter().map(|c| c.is_finite()).collect()
    }

    pub fn covered_pixels(&self) -> usize {
        self.values.iter().filter(|c| c.is_finite()).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadResult {
    /// Equilibrium indentation of the object, m.
    pub penetration: f64,
    pub contact_mask: Vec<bool>,
    pub displacement: HeightField,
    /// `k_pixel · Σ displacement`, N.
    pub total_force: f64,
    /// The load exceeds what the fully compressed gel can carry.
    pub saturated: bool,
}

impl LoadResult {
    pub fn contact_pixels(&self) -> usize {
        self.contact_mask.iter().filter(|&&c| c).count()
    }
}

/// Per-pixel displacement for an indentation of `delta` meters.
pub fn displacement_at(surface: &ClearanceGrid, delta: f64, gel_thickness: f64) -> Result<HeightField> {
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(Error::param("delta", format!("{delta} must be non-negative")));
    }
    let values = surface
        .values
        .iter()
        .map(|&c| (delta - c).clamp(0.0, gel_thickness))
        .collect();
    HeightField::new(surface.width, surface.height, surface.pixel_pitch, values)
}

fn spring_force(surface: &ClearanceGrid, delta: f64, gel_thickness: f64, k: f64) -> f64 {
    let sum: f64 = surface
        .values
        .iter()
        .map(|&c| (delta - c).clamp(0.0, gel_thickness))
        .sum();
    k * sum
}

/// Find the indentation at which the spring array carries `weight` newtons.
///
/// Bisection on `[0, gel_thickness]` over the monotone load curve, followed by
/// an exact solve on the final set of partially compressed springs (the load
/// curve is linear between clearance breakpoints).
pub fn solve_penetration(
    surface: &ClearanceGrid,
    weight: f64,
    params: &ComplianceParams,
    gel_thickness: f64,
) -> Result<LoadResult> {
    if !(weight.is_finite() && weight >= 0.0) {
        return Err(Error::param("weight", format!("{weight} N must be non-negative")));
    }
    params.validate()?;
    if !(gel_thickness.is_finite() && gel_thickness > 0.0) {
        return Err(Error::param("gel_thickness", format!("{gel_thickness} must be positive")));
    }
    let k = params.k_pixel;
    let force = |d: f64| spring_force(surface, d, gel_thickness, k);

    let (delta, saturated) = if weight == 0.0 {
        (0.0, false)
    } else if force(gel_thickness) < weight {
        (gel_thickness, true)
    } else {
        let (mut lo, mut hi) = (0.0, gel_thickness);
        let mut best = 0.5 * gel_thickness;
        for _ in 0..MAX_BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            let f = force(mid);
            best = mid;
            if f < weight {
                lo = mid;
            } else {
                hi = mid;
            }
            if (f - weight).abs() <= FORCE_TOLERANCE {
                break;
            }
        }
        (refine(surface, weight, k, gel_thickness, best), false)
    };

    let displacement = displacement_at(surface, delta, gel_thickness)?;
    let contact_mask = displacement.values().iter().map(|&d| d > 0.0).collect();
    let total_force = k * displacement.sum();
    Ok(LoadResult {
        penetration: delta,
        contact_mask,
        displacement,
        total_force,
        saturated,
    })
}

/// Exact equilibrium on the linear piece of the load curve around `guess`.
///
/// Springs are classified as slack, partially compressed or bottomed out at
/// `guess`; with that classification fixed the force is linear in the
/// indentation and can be solved directly. The solution is kept only if no
/// spring changes class, otherwise `guess` is returned.
fn refine(surface: &ClearanceGrid, weight: f64, k: f64, thickness: f64, guess: f64) -> f64 {
    let mut active = 0usize;
    let mut clearance_sum = 0.0;
    let mut bottomed = 0usize;
    for &c in &surface.values {
        let d = guess - c;
        if d >= thickness {
            bottomed += 1;
        } else if d > 0.0 {
            active += 1;
            clearance_sum += c;
        }
    }
    if active == 0 {
        return guess;
    }
    let delta = (weight / k - bottomed as f64 * thickness + clearance_sum) / active as f64;
    let consistent = surface.values.iter().all(|&c| {
        let (before, after) = (guess - c, delta - c);
        if before >= thickness {
            after >= thickness
        } else if before > 0.0 {
            (0.0..=thickness).contains(&after)
        } else {
            after <= 0.0
        }
    });
    if consistent {
        delta
    } else {
        guess
    }
}

/// Gaussian blur truncated at `3σ`; weights are renormalized over the taps
/// that fall inside the grid. `sigma == 0` returns the input unchanged.
pub fn smooth(field: &HeightField, sigma: f64) -> Result<HeightField> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::param("sigma", format!("{sigma} must be non-negative")));
    }
    if sigma == 0.0 {
        return Ok(field.clone());
    }
    let kernel = gaussian_kernel(sigma);
    let (w, h) = (field.width(), field.height());
    let horizontal = convolve_axis(field.values(), w, h, &kernel, true);
    let both = convolve_axis(&horizontal, w, h, &kernel, false);
    Ok(HeightField::from_raw(w, h, field.pixel_pitch(), both))
}

/// Unnormalized taps for offsets `0..=radius`.
pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as usize;
    (0..=radius)
        .map(|i| (-(i as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect()
}

fn convolve_axis(src: &[f64], w: usize, h: usize, kernel: &[f64], along_x: bool) -> Vec<f64> {
    let r = kernel.len() as isize - 1;
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let (pos, len) = if along_x { (x, w) } else { (y, h) };
            let mut acc = 0.0;
            let mut norm = 0.0;
            for o in -r..=r {
                let p = pos as isize + o;
                if p < 0 || p >= len as isize {
                    continue;
                }
                let weight = kernel[o.unsigned_abs()];
                let idx = if along_x { y * w + p as usize } else { p as usize * w + x };
                acc += weight * src[idx];
                norm += weight;
            }
            out[y * w + x] = acc / norm;
        }
    }
    out
}
