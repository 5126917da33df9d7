//! Phong reflectance of the membrane under the internal LED ring.
//!
//! Per pixel and colour channel the tactile intensity is
//!
//! ```text
//! I = k_a·i_a + Σ_m [ k_d·max(L_m·N, 0)·i_d,m + k_s·max(R_m·V, 0)^α·i_s,m ]
//! ```
//!
//! with `R_m = 2(L_m·N)N − L_m`, clamped to `[0, 1]`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{NormalField, Vec3};
use crate::raster::{ColorImage, Rgb, TactileImage};

const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhongParams {
    pub ka: f64,
    pub kd: f64,
    pub ks: f64,
    pub alpha: f64,
    /// Ambient RGB intensity.
    pub ia: Rgb,
}

impl Default for PhongParams {
    fn default() -> Self {
        Self {
            ka: 0.8,
            kd: 1.0,
            ks: 0.5,
            alpha: 5.0,
            ia: [0.25; 3],
        }
    }
}

impl PhongParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("phong.ka", self.ka), ("phong.kd", self.kd), ("phong.ks", self.ks)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param(name, format!("{v} must be a non-negative coefficient")));
            }
        }
        if !(self.alpha.is_finite() && self.alpha >= 1.0) {
            return Err(Error::param("phong.alpha", format!("{} must be at least 1", self.alpha)));
        }
        if self.ia.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::param("phong.ia", "ambient intensity must be non-negative"));
        }
        Ok(())
    }
}

/// A directional coloured light. `direction` points from the surface toward
/// the light.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LightSource {
    pub direction: Vec3,
    pub diffuse: Rgb,
    pub specular: Rgb,
}

impl LightSource {
    pub fn new(direction: Vec3, diffuse: Rgb, specular: Rgb) -> Result<Self> {
        if (direction.norm() - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::param("light.direction", format!("{direction:?} is not unit length")));
        }
        for c in diffuse.iter().chain(&specular) {
            if !(0.0..=1.0).contains(c) {
                return Err(Error::param("light.intensity", format!("{c} is outside [0, 1]")));
            }
        }
        Ok(Self {
            direction,
            diffuse,
            specular,
        })
    }

    /// Same colour for the diffuse and specular terms.
    pub fn colored(direction: Vec3, color: Rgb) -> Result<Self> {
        Self::new(direction, color, color)
    }
}

/// Mirror `l` about `n`: `2(l·n)n − l`.
#[inline]
pub fn reflect(l: &Vec3, n: &Vec3) -> Vec3 {
    2.0 * l.dot(n) * n - l
}

/// Colours of the ring in side order `−x, +y, +x, −y`.
pub const DEFAULT_LED_COLORS: [Rgb; 4] = [
    [0.0, 0.0, 1.0], // blue
    [1.0, 0.0, 0.0], // red
    [1.0, 1.0, 1.0], // white
    [0.0, 1.0, 0.0], // green
];

/// Side offsets of the ring in the order the colours are listed.
const LED_SIDES: [(f64, f64); 4] = [(-1.0, 0.0), (0.0, 1.0), (1.0, 0.0), (0.0, -1.0)];

/// Four directional lights, one per sensor side in the order `−x, +y, +x, −y`.
///
/// Each light sits `elevation_deg` above the membrane plane with its
/// horizontal component aimed at the sensor center, so the `+x` light has
/// direction `(−cos e, 0, sin e)`.
pub fn led_ring(elevation_deg: f64, colors: &[Rgb; 4]) -> Result<Vec<LightSource>> {
    if !(elevation_deg > 0.0 && elevation_deg <= 90.0) {
        return Err(Error::param(
            "leds.elevation_deg",
            format!("{elevation_deg} is outside (0, 90]"),
        ));
    }
    let e = elevation_deg.to_radians();
    let (horizontal, vertical) = if elevation_deg == 90.0 { (0.0, 1.0) } else { (e.cos(), e.sin()) };
    LED_SIDES
        .iter()
        .zip(colors)
        .map(|(&(sx, sy), &color)| {
            let dir = Vec3::new(-sx * horizontal, -sy * horizontal, vertical);
            LightSource::colored(dir, color)
        })
        .collect()
}

/// Phong intensity of a single surface normal.
#[inline]
pub fn shade_normal(n: &Vec3, lights: &[LightSource], params: &PhongParams, view: &Vec3) -> Rgb {
    let mut out = [0.0; 3];
    for c in 0..3 {
        out[c] = params.ka * params.ia[c];
    }
    for light in lights {
        let lambert = light.direction.dot(n).max(0.0);
        let r = reflect(&light.direction, n);
        let spec = r.dot(view).max(0.0).powf(params.alpha);
        for c in 0..3 {
            out[c] += params.kd * lambert * light.diffuse[c] + params.ks * spec * light.specular[c];
        }
    }
    out.map(|v| v.clamp(0.0, 1.0))
}

/// Render the tactile image of a normal field.
pub fn shade(
    normals: &NormalField,
    lights: &[LightSource],
    params: &PhongParams,
    view: &Vec3,
) -> Result<TactileImage> {
    if lights.is_empty() {
        return Err(Error::NoLights);
    }
    params.validate()?;
    if (view.norm() - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::param("view", format!("{view:?} is not unit length")));
    }
    let pixels = normals
        .normals()
        .par_iter()
        .map(|n| shade_normal(n, lights, params, view))
        .collect();
    ColorImage::from_pixels(normals.width(), normals.height(), pixels)
}

/// Orthographic camera looking up at the membrane.
pub fn default_view() -> Vec3 {
    Vec3::z()
}
