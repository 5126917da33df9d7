//! Labeled dataset generation with a versioned JSON manifest.
//!
//! Three built-in recipes mirror the household-object, texture and
//! fill-level experiments; custom recipes are JSON files. Every output byte
//! is a function of `(catalog, recipe, seed, config)`: sample poses come from
//! a ChaCha stream keyed by the sample's ordinal, and the train/val split is
//! a seeded shuffle within each class.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::depth_io::encode_height_field;
use crate::error::{Error, Result};
use crate::raster::read_png;
use crate::scene::{sample_pose, Albedo, BumpPattern, Catalog, Pose, PoseBounds, SceneObject, Shape};
use crate::sensor::{Sensor, SensorConfig};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Stream offset separating split shuffles from pose streams.
const SPLIT_STREAM_BASE: u64 = 1 << 48;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Recipe {
    pub name: String,
    pub samples_per_object: usize,
    /// Fraction of every class assigned to the training split.
    pub train_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog: Option<Catalog>,
    /// Catalog file, relative to the recipe file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog_path: Option<PathBuf>,
}

impl Recipe {
    pub fn builtin(name: &str) -> Result<Self> {
        let (samples_per_object, train_fraction, catalog) = match name {
            "household" => (600, 0.7, household_catalog()),
            "texture" => (100, 0.8, texture_catalog()),
            "fill" => (120, 0.8, fill_catalog()),
            other => return Err(Error::UnknownRecipe(other.to_string())),
        };
        Ok(Self {
            name: name.to_string(),
            samples_per_object,
            train_fraction,
            catalog: Some(catalog),
            catalog_path: None,
        })
    }

    pub const BUILTIN: [&'static str; 3] = ["household", "texture", "fill"];

    /// Parse a recipe file, resolving `catalog_path` against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let context = path.display().to_string();
        let mut recipe: Recipe = serde_json::from_str(&text).map_err(|e| Error::schema(&context, &e))?;
        if recipe.catalog.is_none() {
            let Some(rel) = recipe.catalog_path.take() else {
                return Err(Error::param("catalog", format!("{context}: recipe needs `catalog` or `catalog_path`")));
            };
            let cat_path = path.parent().unwrap_or(Path::new(".")).join(rel);
            let cat_text = std::fs::read_to_string(&cat_path).map_err(|e| Error::io(&cat_path, e))?;
            recipe.catalog = Some(Catalog::from_json(&cat_text, &cat_path.display().to_string())?);
        }
        recipe.check()?;
        Ok(recipe)
    }

    /// A built-in name or a path to a recipe file.
    pub fn resolve(spec: &str) -> Result<Self> {
        if Self::BUILTIN.contains(&spec) {
            Self::builtin(spec)
        } else if spec.ends_with(".json") || Path::new(spec).exists() {
            Self::load(Path::new(spec))
        } else {
            Err(Error::UnknownRecipe(spec.to_string()))
        }
    }

    pub fn catalog(&self) -> &Catalog {
        self.catalog.as_ref().expect("recipes are resolved with a catalog")
    }

    fn check(&self) -> Result<()> {
        if self.samples_per_object == 0 {
            return Err(Error::param("samples_per_object", "must be at least 1"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::param("train_fraction", format!("{} is outside (0, 1]", self.train_fraction)));
        }
        self.catalog().check_structure()
    }

    /// Classes in first-appearance order with the object ids they contain.
    fn classes(&self) -> Vec<(String, Vec<usize>)> {
        let mut classes: Vec<(String, Vec<usize>)> = Vec::new();
        for (i, obj) in self.catalog().objects.iter().enumerate() {
            match classes.iter_mut().find(|(label, _)| *label == obj.class_label) {
                Some((_, members)) => members.push(i),
                None => classes.push((obj.class_label.clone(), vec![i])),
            }
        }
        classes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplePaths {
    pub tactile: String,
    pub visual: String,
    pub blended: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub sample_id: String,
    pub object_id: String,
    pub class_label: String,
    pub pose: Pose,
    pub weight_g: f64,
    pub penetration_m: f64,
    pub total_force_n: f64,
    pub saturated: bool,
    pub split: Split,
    pub paths: SamplePaths,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecipeSummary {
    pub name: String,
    pub samples_per_object: usize,
    pub train_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub master_seed: u64,
    pub recipe: RecipeSummary,
    pub sensor_config: SensorConfig,
    pub catalog: Catalog,
    pub samples: Vec<SampleRecord>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::schema(path.display().to_string(), &e))
    }
}

/// A sample before rendering: which object, where, and which split.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedSample {
    pub sample_id: String,
    pub object_index: usize,
    pub pose: Pose,
    pub split: Split,
}

/// Decide every sample's object, pose and split without rendering anything.
pub fn plan(recipe: &Recipe, seed: u64, config: &SensorConfig) -> Result<Vec<PlannedSample>> {
    recipe.check()?;
    let catalog = recipe.catalog();
    catalog.validate(config.gel_thickness)?;
    let grid = config.grid();
    let per = recipe.samples_per_object;

    let mut samples = Vec::with_capacity(catalog.objects.len() * per);
    for (oi, obj) in catalog.objects.iter().enumerate() {
        let bounds = PoseBounds::keep_on_sensor(&obj.shape, &grid);
        for k in 0..per {
            let ordinal = (oi * per + k) as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(ordinal);
            samples.push(PlannedSample {
                sample_id: format!("{}-{:04}", obj.id, k),
                object_index: oi,
                pose: sample_pose(&mut rng, &bounds),
                split: Split::Val,
            });
        }
    }

    for (ci, (_, members)) in recipe.classes().iter().enumerate() {
        let mut idx: Vec<usize> = members.iter().flat_map(|&oi| oi * per..(oi + 1) * per).collect();
        let n_train = train_count(idx.len(), recipe.train_fraction);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(SPLIT_STREAM_BASE + ci as u64);
        idx.shuffle(&mut rng);
        for &i in &idx[..n_train] {
            samples[i].split = Split::Train;
        }
    }
    Ok(samples)
}

fn train_count(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).round() as usize).min(n)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GenerateOptions {
    /// Also write the displacement field as an STSD sidecar.
    pub height_sidecar: bool,
}

/// Render every planned sample into `out_dir` and write the manifest.
pub fn generate(
    recipe: &Recipe,
    seed: u64,
    out_dir: &Path,
    config: &SensorConfig,
    options: GenerateOptions,
) -> Result<Manifest> {
    let planned = plan(recipe, seed, config)?;
    let sensor = Sensor::new(config.clone())?;
    let catalog = recipe.catalog();

    let mut dirs = vec!["tactile", "visual", "blended"];
    if options.height_sidecar {
        dirs.push("height");
    }
    for d in &dirs {
        let p = out_dir.join(d);
        std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }

    let samples = planned
        .par_iter()
        .map(|s| render_sample(&sensor, &catalog.objects[s.object_index], s, out_dir, options))
        .collect::<Result<Vec<_>>>()?;

    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        master_seed: seed,
        recipe: RecipeSummary {
            name: recipe.name.clone(),
            samples_per_object: recipe.samples_per_object,
            train_fraction: recipe.train_fraction,
        },
        sensor_config: config.clone(),
        catalog: catalog.clone(),
        samples,
    };
    let path = out_dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

fn render_sample(
    sensor: &Sensor,
    obj: &SceneObject,
    planned: &PlannedSample,
    out_dir: &Path,
    options: GenerateOptions,
) -> Result<SampleRecord> {
    let out = sensor.capture(obj, &planned.pose)?;
    let id = &planned.sample_id;
    let paths = SamplePaths {
        tactile: format!("tactile/{id}.png"),
        visual: format!("visual/{id}.png"),
        blended: format!("blended/{id}.png"),
        height: options.height_sidecar.then(|| format!("height/{id}.stsd")),
    };
    out.tactile.write_png(&out_dir.join(&paths.tactile))?;
    out.visual.write_png(&out_dir.join(&paths.visual))?;
    out.blended.write_png(&out_dir.join(&paths.blended))?;
    if let Some(h) = &paths.height {
        let p = out_dir.join(h);
        std::fs::write(&p, encode_height_field(&out.load.displacement)).map_err(|e| Error::io(&p, e))?;
    }
    Ok(SampleRecord {
        sample_id: id.clone(),
        object_id: obj.id.clone(),
        class_label: obj.class_label.clone(),
        pose: planned.pose,
        weight_g: obj.weight_g,
        penetration_m: out.load.penetration,
        total_force_n: out.load.total_force,
        saturated: out.load.saturated,
        split: planned.split,
        paths,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub sample_id: Option<String>,
    pub message: String,
}

impl std::fmt::Display for Issue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.sample_id {
            Some(id) => write!(f, "{id}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }

    fn global(&mut self, message: impl Into<String>) {
        self.issues.push(Issue {
            sample_id: None,
            message: message.into(),
        });
    }

    fn sample(&mut self, id: &str, message: impl Into<String>) {
        self.issues.push(Issue {
            sample_id: Some(id.to_string()),
            message: message.into(),
        });
    }
}

/// Check every manifest and sample invariant. An unreadable manifest is
/// reported as a single issue rather than an error.
pub fn validate(manifest_path: &Path) -> ValidationReport {
    let mut report = ValidationReport::default();
    let manifest = match Manifest::load(manifest_path) {
        Ok(m) => m,
        Err(e) => {
            report.global(format!("cannot read manifest: {e}"));
            return report;
        }
    };
    let root = manifest_path.parent().unwrap_or(Path::new("."));

    if manifest.schema_version != MANIFEST_SCHEMA_VERSION {
        report.global(format!(
            "schema_version {} is not {MANIFEST_SCHEMA_VERSION}",
            manifest.schema_version
        ));
    }
    if let Err(e) = manifest.sensor_config.validate() {
        report.global(format!("sensor config: {e}"));
    }
    let thickness = manifest.sensor_config.gel_thickness;
    let [w, h] = manifest.sensor_config.resolution;

    let mut ids = BTreeSet::new();
    for s in &manifest.samples {
        if !ids.insert(s.sample_id.as_str()) {
            report.sample(&s.sample_id, "duplicate sample_id");
        }
        if !(s.penetration_m.is_finite() && (0.0..=thickness).contains(&s.penetration_m)) {
            report.sample(
                &s.sample_id,
                format!("penetration_m {} outside [0, {thickness}]", s.penetration_m),
            );
        }
        match manifest.catalog.get(&s.object_id) {
            Some(obj) if obj.class_label != s.class_label => report.sample(
                &s.sample_id,
                format!("class_label `{}` disagrees with catalog `{}`", s.class_label, obj.class_label),
            ),
            None => report.sample(&s.sample_id, format!("unknown object_id `{}`", s.object_id)),
            _ => {}
        }
    }

    let file_issues: Vec<Issue> = manifest
        .samples
        .par_iter()
        .flat_map_iter(|s| {
            let mut files = vec![
                ("tactile", &s.paths.tactile),
                ("visual", &s.paths.visual),
                ("blended", &s.paths.blended),
            ];
            if let Some(hp) = &s.paths.height {
                files.push(("height", hp));
            }
            files
                .into_iter()
                .filter_map(|(modality, rel)| check_file(root, modality, rel, w, h).err())
                .map(|message| Issue {
                    sample_id: Some(s.sample_id.clone()),
                    message,
                })
                .collect::<Vec<_>>()
        })
        .collect();
    report.issues.extend(file_issues);

    let mut per_object: BTreeMap<&str, usize> = BTreeMap::new();
    let mut per_class: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for s in &manifest.samples {
        *per_object.entry(s.object_id.as_str()).or_default() += 1;
        let entry = per_class.entry(s.class_label.as_str()).or_default();
        entry.0 += 1;
        if s.split == Split::Train {
            entry.1 += 1;
        }
    }
    for obj in &manifest.catalog.objects {
        let n = per_object.get(obj.id.as_str()).copied().unwrap_or(0);
        if n != manifest.recipe.samples_per_object {
            report.global(format!(
                "object `{}` has {n} samples, recipe asks for {}",
                obj.id, manifest.recipe.samples_per_object
            ));
        }
    }
    for (class, (n, train)) in per_class {
        let expected = n as f64 * manifest.recipe.train_fraction;
        if (train as f64 - expected).abs() > 1.0 {
            report.global(format!(
                "class `{class}`: {train} of {n} samples in train, expected {expected:.1}"
            ));
        }
    }
    report
}

fn check_file(root: &Path, modality: &str, rel: &str, w: usize, h: usize) -> std::result::Result<(), String> {
    let path = root.join(rel);
    if !path.is_file() {
        return Err(format!("missing {modality} file {rel}"));
    }
    if modality == "height" {
        let bytes = std::fs::read(&path).map_err(|e| format!("{rel}: {e}"))?;
        let grid = crate::depth_io::decode_stsd(&bytes).map_err(|e| format!("{rel}: {e}"))?;
        if (grid.width, grid.height) != (w, h) {
            return Err(format!("{rel} is {}x{}, expected {w}x{h}", grid.width, grid.height));
        }
        return Ok(());
    }
    let img = read_png(&path).map_err(|e| format!("{modality} file does not decode: {e}"))?;
    if (img.width() as usize, img.height() as usize) != (w, h) {
        return Err(format!("{rel} is {}x{}, expected {w}x{h}", img.width(), img.height()));
    }
    Ok(())
}

fn obj(id: &str, class: &str, weight_g: f64, shape: Shape, albedo: Albedo) -> SceneObject {
    SceneObject {
        id: id.into(),
        class_label: class.into(),
        weight_g,
        shape,
        albedo,
    }
}

fn solid(rgb: [f64; 3]) -> Albedo {
    Albedo::Constant { rgb }
}

/// Ten household stand-ins. Two pairs are deliberately confounded: the lemon
/// and lime differ only in colour, the two coasters only in engraving.
pub fn household_catalog() -> Catalog {
    let coaster = |pattern| Shape::EngravedPlate {
        size_x: 0.09,
        size_y: 0.09,
        pattern,
        amplitude: 6e-4,
        period: 0.006,
    };
    Catalog::new(vec![
        obj("apple", "apple", 180.0, Shape::Sphere { radius: 0.038 }, solid([0.75, 0.1, 0.1])),
        obj("lemon", "lemon", 120.0, Shape::Sphere { radius: 0.03 }, solid([0.95, 0.85, 0.15])),
        obj("lime", "lime", 120.0, Shape::Sphere { radius: 0.03 }, solid([0.3, 0.7, 0.15])),
        obj(
            "mug",
            "mug",
            350.0,
            Shape::Cylinder { radius: 0.04, edge_radius: 0.004, bottom_sag: 0.0 },
            solid([0.92, 0.92, 0.9]),
        ),
        obj(
            "soda_can",
            "soda_can",
            370.0,
            Shape::Cylinder { radius: 0.033, edge_radius: 0.006, bottom_sag: 0.001 },
            Albedo::Stripes { a: [0.85, 0.05, 0.05], b: [0.95, 0.95, 0.95], period: 0.01 },
        ),
        obj(
            "cereal_box",
            "cereal_box",
            400.0,
            Shape::Box { size_x: 0.05, size_y: 0.12 },
            Albedo::Checker { a: [0.95, 0.8, 0.1], b: [0.1, 0.3, 0.8], period: 0.02 },
        ),
        obj(
            "book",
            "book",
            600.0,
            Shape::TexturedPlate { size_x: 0.09, size_y: 0.12 },
            Albedo::Stripes { a: [0.2, 0.4, 0.2], b: [0.8, 0.75, 0.6], period: 0.015 },
        ),
        obj("coaster_ridged", "coaster_ridged", 120.0, coaster(BumpPattern::RadialRidges), solid([0.2, 0.2, 0.22])),
        obj("coaster_checked", "coaster_checked", 120.0, coaster(BumpPattern::Checkerboard), solid([0.2, 0.2, 0.22])),
        obj(
            "wine_bottle",
            "wine_bottle",
            1250.0,
            Shape::Cylinder { radius: 0.038, edge_radius: 0.008, bottom_sag: 0.003 },
            solid([0.1, 0.25, 0.12]),
        ),
    ])
}

/// Six matte-black engraved plates from coarse to fine texture.
pub fn texture_catalog() -> Catalog {
    let plates = [
        ("sinusoid_coarse", BumpPattern::Sinusoid, 0.012),
        ("sinusoid_medium", BumpPattern::Sinusoid, 0.006),
        ("sinusoid_fine", BumpPattern::Sinusoid, 0.003),
        ("checker_coarse", BumpPattern::Checkerboard, 0.008),
        ("checker_fine", BumpPattern::Checkerboard, 0.004),
        ("radial_ridges", BumpPattern::RadialRidges, 0.006),
    ];
    Catalog::new(
        plates
            .iter()
            .map(|&(id, pattern, period)| {
                let shape = Shape::EngravedPlate {
                    size_x: 0.08,
                    size_y: 0.08,
                    pattern,
                    amplitude: 5e-4,
                    period,
                };
                obj(id, id, 400.0, shape, solid([0.04, 0.04, 0.04]))
            })
            .collect(),
    )
}

/// One bottle at three fill levels.
pub fn fill_catalog() -> Catalog {
    let bottle = Shape::Cylinder {
        radius: 0.035,
        edge_radius: 0.005,
        bottom_sag: 0.004,
    };
    let glass = solid([0.45, 0.3, 0.15]);
    Catalog::new(vec![
        obj("bottle_empty", "empty", 446.0, bottle.clone(), glass.clone()),
        obj("bottle_half", "half", 823.0, bottle.clone(), glass.clone()),
        obj("bottle_full", "full", 1133.0, bottle, glass),
    ])
}
