//! End-to-end sensor pipeline.
//!
//! Tactile: lower surface → spring equilibrium → smoothing → covariance
//! normals → Phong shading. Visual: orthographic albedo render. Blended:
//! convex mix of the two weighted by the internal/external light ratio.

use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::compliance::{grams_to_newtons, smooth, solve_penetration, ComplianceParams, LoadResult};
use crate::error::{Error, Result};
use crate::geometry::{normals_covariance, HeightField, DEFAULT_NORMAL_RADIUS};
use crate::raster::{ColorImage, Rgb, TactileImage, VisualImage};
use crate::scene::{lower_surface, render_visual, Pose, SceneObject, SensorGrid, VisualLighting};
use crate::shading::{default_view, led_ring, shade, LightSource, PhongParams, DEFAULT_LED_COLORS};

/// Environment variable consulted when no config file is given.
pub const CONFIG_ENV: &str = "STSIM_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LedConfig {
    /// Elevation of each LED above the membrane plane, degrees.
    pub elevation_deg: f64,
    /// Colours for the `−x, +y, +x, −y` sides.
    pub colors: [Rgb; 4],
}

impl Default for LedConfig {
    fn default() -> Self {
        Self {
            elevation_deg: 20.0,
            colors: DEFAULT_LED_COLORS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DepthImportConfig {
    /// Depth represented by one 16-bit PGM gray level, m.
    pub pgm_meters_per_level: f64,
}

impl Default for DepthImportConfig {
    fn default() -> Self {
        Self {
            pgm_meters_per_level: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    /// Image size in pixels, `[width, height]`.
    pub resolution: [usize; 2],
    /// Physical size of the membrane, `[width, height]` in meters.
    pub active_area: [f64; 2],
    pub gel_thickness: f64,
    pub phong: PhongParams,
    pub leds: LedConfig,
    pub compliance: ComplianceParams,
    /// Covariance window radius for normal estimation, pixels.
    pub normal_radius: usize,
    pub internal_intensity: f64,
    pub external_intensity: f64,
    pub visual: VisualLighting,
    pub depth_import: DepthImportConfig,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            resolution: [224, 224],
            active_area: [0.15, 0.15],
            gel_thickness: 0.005,
            phong: PhongParams::default(),
            leds: LedConfig::default(),
            compliance: ComplianceParams::default(),
            normal_radius: DEFAULT_NORMAL_RADIUS,
            internal_intensity: 1.0,
            external_intensity: 1.0,
            visual: VisualLighting::default(),
            depth_import: DepthImportConfig::default(),
        }
    }
}

impl SensorConfig {
    pub fn from_json(text: &str, context: &str) -> Result<Self> {
        let config: SensorConfig = serde_json::from_str(text).map_err(|e| Error::schema(context, &e))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    /// An explicit path wins; otherwise `STSIM_CONFIG`; otherwise defaults.
    pub fn resolve(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
                _ => Ok(Self::default()),
            },
        }
    }

    pub fn pixel_pitch(&self) -> f64 {
        self.active_area[0] / self.resolution[0] as f64
    }

    pub fn grid(&self) -> SensorGrid {
        SensorGrid {
            width: self.resolution[0],
            height: self.resolution[1],
            pixel_pitch: self.pixel_pitch(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [w, h] = self.resolution;
        if w < 3 || h < 3 {
            return Err(Error::param("resolution", format!("{w}x{h} is below 3x3")));
        }
        let [aw, ah] = self.active_area;
        if !(aw.is_finite() && aw > 0.0 && ah.is_finite() && ah > 0.0) {
            return Err(Error::param("active_area", "both sides must be positive"));
        }
        let (px, py) = (aw / w as f64, ah / h as f64);
        if ((px - py) / px).abs() > 1e-9 {
            return Err(Error::param(
                "active_area",
                format!("pixels must be square: {px} m wide vs {py} m tall"),
            ));
        }
        if !(self.gel_thickness.is_finite() && self.gel_thickness > 0.0) {
            return Err(Error::param("gel_thickness", "must be positive"));
        }
        self.phong.validate()?;
        self.compliance.validate()?;
        led_ring(self.leds.elevation_deg, &self.leds.colors)?;
        if self.normal_radius < 1 || w <= 2 * self.normal_radius || h <= 2 * self.normal_radius {
            return Err(Error::param("normal_radius", "window must be at least 3x3 and fit the grid"));
        }
        blend_alpha(self.internal_intensity, self.external_intensity)?;
        if !(self.depth_import.pgm_meters_per_level.is_finite() && self.depth_import.pgm_meters_per_level > 0.0) {
            return Err(Error::param("depth_import.pgm_meters_per_level", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorOutput {
    pub tactile: TactileImage,
    pub visual: VisualImage,
    pub blended: ColorImage,
    pub load: LoadResult,
}

/// A configured sensor with its LED ring and the flat-membrane baseline.
#[derive(Debug)]
pub struct Sensor {
    config: SensorConfig,
    lights: Vec<LightSource>,
    baseline: OnceLock<TactileImage>,
}

impl Sensor {
    pub fn new(config: SensorConfig) -> Result<Self> {
        config.validate()?;
        let lights = led_ring(config.leds.elevation_deg, &config.leds.colors)?;
        Ok(Self {
            config,
            lights,
            baseline: OnceLock::new(),
        })
    }

    pub fn config(&self) -> &SensorConfig {
        &self.config
    }

    pub fn lights(&self) -> &[LightSource] {
        &self.lights
    }

    /// Tactile image of the undeformed membrane.
    pub fn baseline(&self) -> &TactileImage {
        self.baseline.get_or_init(|| {
            let grid = self.config.grid();
            let flat = HeightField::zeros(grid.width, grid.height, grid.pixel_pitch)
                .expect("validated resolution");
            self.render_tactile(&flat).expect("validated config")
        })
    }

    /// Shade a displacement field (smoothed first).
    pub fn render_tactile(&self, displacement: &HeightField) -> Result<TactileImage> {
        let smoothed = smooth(displacement, self.config.compliance.smoothing_sigma)?;
        let normals = normals_covariance(&smoothed, self.config.normal_radius)?;
        shade(&normals, &self.lights, &self.config.phong, &default_view())
    }

    pub fn capture(&self, obj: &SceneObject, pose: &Pose) -> Result<SensorOutput> {
        obj.validate(self.config.gel_thickness)?;
        let grid = self.config.grid();
        let surface = lower_surface(obj, pose, &grid)?;
        let load = solve_penetration(
            &surface,
            grams_to_newtons(obj.weight_g),
            &self.config.compliance,
            self.config.gel_thickness,
        )?;
        let tactile = if load.contact_pixels() == 0 {
            self.baseline().clone()
        } else {
            self.render_tactile(&load.displacement)?
        };
        let visual = render_visual(obj, pose, &grid, &self.config.visual);
        let blended = blend(
            &tactile,
            &visual,
            self.config.internal_intensity,
            self.config.external_intensity,
        )?;
        Ok(SensorOutput {
            tactile,
            visual,
            blended,
            load,
        })
    }
}

/// One-shot capture with a freshly built sensor.
pub fn capture(obj: &SceneObject, pose: &Pose, config: &SensorConfig) -> Result<SensorOutput> {
    Sensor::new(config.clone())?.capture(obj, pose)
}

fn blend_alpha(internal: f64, external: f64) -> Result<f64> {
    if !(internal.is_finite() && internal >= 0.0 && external.is_finite() && external >= 0.0) {
        return Err(Error::param("intensity", "internal and external intensities must be non-negative"));
    }
    if internal == 0.0 && external == 0.0 {
        return Err(Error::param("intensity", "internal and external intensities cannot both be zero"));
    }
    Ok(internal / (internal + external))
}

/// Half-silvered membrane: the brighter side dominates.
/// `out = α·tactile + (1 − α)·visual` with `α = internal / (internal + external)`.
pub fn blend(tactile: &TactileImage, visual: &VisualImage, internal: f64, external: f64) -> Result<ColorImage> {
    let alpha = blend_alpha(internal, external)?;
    if (tactile.width(), tactile.height()) != (visual.width(), visual.height()) {
        return Err(Error::InvalidGrid(format!(
            "tactile {}x{} and visual {}x{} differ in size",
            tactile.width(),
            tactile.height(),
            visual.width(),
            visual.height()
        )));
    }
    let beta = 1.0 - alpha;
    let pixels = tactile
        .pixels()
        .iter()
        .zip(visual.pixels())
        .map(|(t, v)| [0, 1, 2].map(|c| alpha * t[c] + beta * v[c]))
        .collect();
    ColorImage::from_pixels(tactile.width(), tactile.height(), pixels)
}
