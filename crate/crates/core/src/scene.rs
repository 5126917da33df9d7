//! Analytic object library, pose sampling, and the external (visual) view.
//!
//! Objects are signed-distance style primitives resting "bottom down" on the
//! membrane. Only their lower surface matters: for every sensor pixel we need
//! the height of the object's underside above the rest membrane.

use std::f64::consts::TAU;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compliance::ClearanceGrid;
use crate::error::{Error, Result};
use crate::raster::{ColorImage, Rgb, VisualImage};

pub const CATALOG_SCHEMA_VERSION: u32 = 1;

/// Pixel layout of the sensor. Pixel `(i, j)` is centered at
/// `((i + ½ − w/2)·pitch, (j + ½ − h/2)·pitch)` meters from the sensor center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorGrid {
    pub width: usize,
    pub height: usize,
    pub pixel_pitch: f64,
}

impl SensorGrid {
    #[inline]
    pub fn pixel_center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            (i as f64 + 0.5 - self.width as f64 / 2.0) * self.pixel_pitch,
            (j as f64 + 0.5 - self.height as f64 / 2.0) * self.pixel_pitch,
        )
    }

    pub fn half_extent(&self) -> (f64, f64) {
        (
            self.width as f64 * self.pixel_pitch / 2.0,
            self.height as f64 * self.pixel_pitch / 2.0,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BumpPattern {
    /// Parallel ridges along the local y axis.
    Sinusoid,
    /// Concentric ridges around the plate center.
    RadialRidges,
    Checkerboard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Sphere {
        radius: f64,
    },
    Box {
        size_x: f64,
        size_y: f64,
    },
    /// Upright cylinder whose bottom may bulge (`bottom_sag` meters higher at
    /// the rim than at the center) and round off into the wall
    /// (`edge_radius`).
    Cylinder {
        radius: f64,
        #[serde(default)]
        edge_radius: f64,
        #[serde(default)]
        bottom_sag: f64,
    },
    TexturedPlate {
        size_x: f64,
        size_y: f64,
    },
    EngravedPlate {
        size_x: f64,
        size_y: f64,
        pattern: BumpPattern,
        amplitude: f64,
        period: f64,
    },
}

impl Shape {
    fn validate(&self) -> std::result::Result<(), String> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(format!("{name} = {v} must be positive"))
            }
        };
        match *self {
            Shape::Sphere { radius } => positive("radius", radius),
            Shape::Box { size_x, size_y } | Shape::TexturedPlate { size_x, size_y } => {
                positive("size_x", size_x)?;
                positive("size_y", size_y)
            }
            Shape::Cylinder {
                radius,
                edge_radius,
                bottom_sag,
            } => {
                positive("radius", radius)?;
                if !(edge_radius.is_finite() && (0.0..=radius).contains(&edge_radius)) {
                    return Err(format!("edge_radius = {edge_radius} must lie in [0, radius]"));
                }
                if !(bottom_sag.is_finite() && bottom_sag >= 0.0) {
                    return Err(format!("bottom_sag = {bottom_sag} must be non-negative"));
                }
                Ok(())
            }
            Shape::EngravedPlate {
                size_x,
                size_y,
                amplitude,
                period,
                ..
            } => {
                positive("size_x", size_x)?;
                positive("size_y", size_y)?;
                positive("period", period)?;
                if !(amplitude.is_finite() && amplitude >= 0.0) {
                    return Err(format!("amplitude = {amplitude} must be non-negative"));
                }
                Ok(())
            }
        }
    }

    /// Radius of the smallest object-centered disc containing the footprint.
    pub fn bounding_radius(&self) -> f64 {
        match *self {
            Shape::Sphere { radius } | Shape::Cylinder { radius, .. } => radius,
            Shape::Box { size_x, size_y }
            | Shape::TexturedPlate { size_x, size_y }
            | Shape::EngravedPlate { size_x, size_y, .. } => 0.5 * size_x.hypot(size_y),
        }
    }

    pub fn texture_amplitude(&self) -> f64 {
        match *self {
            Shape::EngravedPlate { amplitude, .. } => amplitude,
            _ => 0.0,
        }
    }

    /// Height of the underside above the membrane at local coordinates
    /// `(u, v)`, or `None` outside the footprint.
    pub fn clearance(&self, u: f64, v: f64) -> Option<f64> {
        match *self {
            Shape::Sphere { radius } => {
                let r2 = u * u + v * v;
                (r2 < radius * radius).then(|| radius - (radius * radius - r2).sqrt())
            }
            Shape::Box { size_x, size_y } | Shape::TexturedPlate { size_x, size_y } => {
                in_rect(u, v, size_x, size_y).then_some(0.0)
            }
            Shape::Cylinder {
                radius,
                edge_radius,
                bottom_sag,
            } => {
                let r = u.hypot(v);
                if r > radius {
                    return None;
                }
                let mut c = bottom_sag * (r / radius).powi(2);
                let inner = radius - edge_radius;
                if r > inner && edge_radius > 0.0 {
                    let t = (r - inner).min(edge_radius);
                    c += edge_radius - (edge_radius * edge_radius - t * t).sqrt();
                }
                Some(c)
            }
            Shape::EngravedPlate {
                size_x,
                size_y,
                pattern,
                amplitude,
                period,
            } => {
                if !in_rect(u, v, size_x, size_y) {
                    return None;
                }
                Some(match pattern {
                    BumpPattern::Sinusoid => amplitude * (1.0 + (TAU * u / period).sin()) / 2.0,
                    BumpPattern::RadialRidges => amplitude * (1.0 + (TAU * u.hypot(v) / period).sin()) / 2.0,
                    BumpPattern::Checkerboard => {
                        let cell = (u / period).floor() as i64 + (v / period).floor() as i64;
                        if cell.rem_euclid(2) == 1 {
                            amplitude
                        } else {
                            0.0
                        }
                    }
                })
            }
        }
    }

    /// Vertical component of the underside normal, ignoring engraved texture.
    pub fn macro_normal_z(&self, u: f64, v: f64) -> f64 {
        match *self {
            Shape::Sphere { radius } => {
                let r2 = (u * u + v * v).min(radius * radius);
                (radius * radius - r2).sqrt() / radius
            }
            Shape::Cylinder {
                radius,
                edge_radius,
                bottom_sag,
            } => {
                let r = u.hypot(v).min(radius);
                let mut slope = 2.0 * bottom_sag * r / (radius * radius);
                let inner = radius - edge_radius;
                if r > inner && edge_radius > 0.0 {
                    let t = (r - inner).min(edge_radius);
                    let s = (edge_radius * edge_radius - t * t).sqrt();
                    slope += if s > 0.0 { t / s } else { f64::INFINITY };
                }
                1.0 / (1.0 + slope * slope).sqrt()
            }
            _ => 1.0,
        }
    }
}

fn in_rect(u: f64, v: f64, sx: f64, sy: f64) -> bool {
    u.abs() <= sx / 2.0 && v.abs() <= sy / 2.0
}

/// Surface colour of the object's underside, in object-local coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Albedo {
    Constant { rgb: Rgb },
    Checker { a: Rgb, b: Rgb, period: f64 },
    Stripes { a: Rgb, b: Rgb, period: f64 },
}

impl Albedo {
    pub fn at(&self, u: f64, v: f64) -> Rgb {
        match *self {
            Albedo::Constant { rgb } => rgb,
            Albedo::Checker { a, b, period } => {
                let cell = (u / period).floor() as i64 + (v / period).floor() as i64;
                if cell.rem_euclid(2) == 0 {
                    a
                } else {
                    b
                }
            }
            Albedo::Stripes { a, b, period } => {
                if ((u / period).floor() as i64).rem_euclid(2) == 0 {
                    a
                } else {
                    b
                }
            }
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        let colors: Vec<Rgb> = match *self {
            Albedo::Constant { rgb } => vec![rgb],
            Albedo::Checker { a, b, period } | Albedo::Stripes { a, b, period } => {
                if !(period.is_finite() && period > 0.0) {
                    return Err(format!("albedo period = {period} must be positive"));
                }
                vec![a, b]
            }
        };
        if colors.iter().flatten().all(|c| (0.0..=1.0).contains(c)) {
            Ok(())
        } else {
            Err("albedo channels must lie in [0, 1]".into())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneObject {
    pub id: String,
    pub class_label: String,
    pub weight_g: f64,
    pub shape: Shape,
    pub albedo: Albedo,
}

impl SceneObject {
    /// Checks the object on its own and against the elastomer thickness.
    pub fn validate(&self, gel_thickness: f64) -> Result<()> {
        let fail = |reason: String| Error::param("object", format!("`{}`: {reason}", self.id));
        if !(self.weight_g.is_finite() && self.weight_g >= 0.0) {
            return Err(fail(format!("weight_g = {} must be non-negative", self.weight_g)));
        }
        self.shape.validate().map_err(fail)?;
        self.albedo.validate().map_err(fail)?;
        let amp = self.shape.texture_amplitude();
        if amp >= gel_thickness {
            return Err(fail(format!(
                "texture amplitude {amp} m must be below the gel thickness {gel_thickness} m"
            )));
        }
        Ok(())
    }
}

/// Placement of an object on the membrane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x_m: f64,
    pub y_m: f64,
    pub theta_rad: f64,
}

impl Pose {
    pub fn new(x_m: f64, y_m: f64, theta_rad: f64) -> Self {
        Self { x_m, y_m, theta_rad }
    }

    pub fn centered() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    /// World point into object-local coordinates.
    #[inline]
    fn to_local(self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.theta_rad.sin_cos();
        let (dx, dy) = (x - self.x_m, y - self.y_m);
        (c * dx + s * dy, -s * dx + c * dy)
    }
}

/// Per-pixel clearance of the object's underside. Pixels outside the
/// footprint hold `f64::INFINITY`.
pub fn lower_surface(obj: &SceneObject, pose: &Pose, grid: &SensorGrid) -> Result<ClearanceGrid> {
    let mut values = vec![f64::INFINITY; grid.width * grid.height];
    values.par_chunks_mut(grid.width).enumerate().for_each(|(j, row)| {
        for (i, out) in row.iter_mut().enumerate() {
            let (x, y) = grid.pixel_center(i, j);
            let (u, v) = pose.to_local(x, y);
            if let Some(c) = obj.shape.clearance(u, v) {
                *out = c;
            }
        }
    });
    if values.iter().all(|c| c.is_infinite()) {
        return Err(Error::OffSensor(obj.id.clone()));
    }
    Ok(ClearanceGrid {
        width: grid.width,
        height: grid.height,
        pixel_pitch: grid.pixel_pitch,
        values,
    })
}

/// Lighting of the external scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VisualLighting {
    /// Colour seen where no object is present.
    pub background: Rgb,
    /// White light shining along the camera axis.
    pub light: Rgb,
}

impl Default for VisualLighting {
    fn default() -> Self {
        Self {
            background: [0.5; 3],
            light: [1.0; 3],
        }
    }
}

/// Pixels covered by the object at this pose (the visual silhouette).
pub fn object_mask(obj: &SceneObject, pose: &Pose, grid: &SensorGrid) -> Vec<bool> {
    (0..grid.height)
        .flat_map(|j| (0..grid.width).map(move |i| (i, j)))
        .map(|(i, j)| {
            let (x, y) = grid.pixel_center(i, j);
            let (u, v) = pose.to_local(x, y);
            obj.shape.clearance(u, v).is_some()
        })
        .collect()
}

/// Orthographic view of the object's underside through a clear membrane.
///
/// Covered pixels show the albedo scaled by the Lambertian factor of the
/// macro surface; the engraved texture does not show up here.
pub fn render_visual(obj: &SceneObject, pose: &Pose, grid: &SensorGrid, lighting: &VisualLighting) -> VisualImage {
    let mut pixels = vec![lighting.background; grid.width * grid.height];
    pixels.par_chunks_mut(grid.width).enumerate().for_each(|(j, row)| {
        for (i, out) in row.iter_mut().enumerate() {
            let (x, y) = grid.pixel_center(i, j);
            let (u, v) = pose.to_local(x, y);
            if obj.shape.clearance(u, v).is_none() {
                continue;
            }
            let lambert = obj.shape.macro_normal_z(u, v).max(0.0);
            let albedo = obj.albedo.at(u, v);
            *out = [0, 1, 2].map(|c| albedo[c] * lambert * lighting.light[c]);
        }
    });
    ColorImage::from_pixels(grid.width, grid.height, pixels).expect("dimensions match by construction")
}

/// Uniform pose distribution: `x`, `y` in closed intervals, `theta` in
/// `[theta.0, theta.1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseBounds {
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub theta: (f64, f64),
}

impl PoseBounds {
    pub fn point(pose: Pose) -> Self {
        Self {
            x: (pose.x_m, pose.x_m),
            y: (pose.y_m, pose.y_m),
            theta: (pose.theta_rad, pose.theta_rad),
        }
    }

    /// Offsets that keep the whole footprint on the sensor for any rotation.
    pub fn keep_on_sensor(shape: &Shape, grid: &SensorGrid) -> Self {
        let (hx, hy) = grid.half_extent();
        let r = shape.bounding_radius();
        let mx = (hx - r).max(0.0);
        let my = (hy - r).max(0.0);
        Self {
            x: (-mx, mx),
            y: (-my, my),
            theta: (0.0, TAU),
        }
    }
}

pub fn sample_pose<R: Rng + ?Sized>(rng: &mut R, bounds: &PoseBounds) -> Pose {
    let mut draw = |(lo, hi): (f64, f64)| lo + (hi - lo) * rng.gen::<f64>();
    let x = draw(bounds.x);
    let y = draw(bounds.y);
    let theta = draw(bounds.theta);
    Pose::new(x, y, theta)
}

/// Versioned list of scene objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Catalog {
    pub schema_version: u32,
    pub objects: Vec<SceneObject>,
}

impl Catalog {
    pub fn new(objects: Vec<SceneObject>) -> Self {
        Self {
            schema_version: CATALOG_SCHEMA_VERSION,
            objects,
        }
    }

    /// Parse JSON; errors carry the line and column of the offending token.
    pub fn from_json(text: &str, context: &str) -> Result<Self> {
        let catalog: Catalog = serde_json::from_str(text).map_err(|e| Error::schema(context, &e))?;
        catalog.check_structure()?;
        Ok(catalog)
    }

    pub fn check_structure(&self) -> Result<()> {
        if self.schema_version != CATALOG_SCHEMA_VERSION {
            return Err(Error::param(
                "schema_version",
                format!("catalog version {} is not supported", self.schema_version),
            ));
        }
        if self.objects.is_empty() {
            return Err(Error::param("objects", "catalog lists no objects"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for obj in &self.objects {
            if !seen.insert(obj.id.as_str()) {
                return Err(Error::param("objects", format!("duplicate object id `{}`", obj.id)));
            }
        }
        Ok(())
    }

    pub fn validate(&self, gel_thickness: f64) -> Result<()> {
        self.check_structure()?;
        self.objects.iter().try_for_each(|o| o.validate(gel_thickness))
    }

    pub fn get(&self, id: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }
}
