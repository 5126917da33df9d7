//! Acceptance gate: one test per criterion, each printing a PASS/FAIL line.
//!
//! Run with `cargo test -p stsim --test acceptance -- --nocapture` to see the
//! report lines.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stsim::compliance::{grams_to_newtons, solve_penetration, ClearanceGrid};
use stsim::dataset::{plan, Manifest, Recipe, Split};
use stsim::geometry::{normals_covariance, HeightField, NormalField, Vec3};
use stsim::scene::{lower_surface, Albedo, Pose, PoseBounds, SceneObject, SensorGrid, Shape};
use stsim::sensor::{Sensor, SensorConfig};
use stsim::shading::{default_view, reflect, shade, shade_normal, LightSource, PhongParams};

// Tolerances pinned from the acceptance criteria.
const PHONG_TOL: f64 = 1e-6;
const NORMAL_RMS_DEG: f64 = 2.0;
const NORMAL_RIM_PX: f64 = 3.0;
const PLANE_NORMAL_TOL: f64 = 1e-4;
const CLOSED_FORM_REL_TOL: f64 = 1e-9;
const SWEEP_STEP_M: f64 = 1e-6;
const FORCE_BALANCE_N: f64 = 1e-4;
const FORCE_DRAWS: usize = 100;

fn report(name: &str, budget: Duration, check: impl FnOnce() -> Result<String, String>) {
    let start = Instant::now();
    let outcome = check();
    let elapsed = start.elapsed();
    let outcome = match outcome {
        Ok(detail) if elapsed > budget => Err(format!("{detail}; took {elapsed:?}, budget {budget:?}")),
        other => other,
    };
    match outcome {
        Ok(detail) => println!("ACCEPTANCE PASS  {name}: {detail} ({elapsed:.2?})"),
        Err(why) => {
            println!("ACCEPTANCE FAIL  {name}: {why}");
            panic!("{name} failed: {why}");
        }
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Direct transcription of the Phong sum for one channel.
fn phong_channel(n: [f64; 3], l: [f64; 3], p: &PhongParams, ia: f64, id: f64, is: f64) -> f64 {
    let dot = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let ln = dot(l, n);
    let r = [0, 1, 2].map(|k| 2.0 * ln * n[k] - l[k]);
    let v = [0.0, 0.0, 1.0];
    (p.ka * ia + p.kd * ln.max(0.0) * id + p.ks * dot(r, v).max(0.0).powf(p.alpha) * is).clamp(0.0, 1.0)
}

#[test]
fn phong_unit_identities() {
    report("phong unit identities", Duration::from_secs(1), || {
        let z = Vec3::z();
        let h = FRAC_1_SQRT_2;
        let cases = [
            (z, z, Vec3::z()),
            (Vec3::x(), z, Vec3::new(-1.0, 0.0, 0.0)),
            (z, Vec3::new(h, 0.0, h), Vec3::x()),
        ];
        for (l, n, want) in cases {
            let got = reflect(&l, &n);
            ensure((got - want).norm() <= PHONG_TOL, || format!("reflect({l:?}, {n:?}) = {got:?}"))?;
        }

        // the three tabulated shading cases use the published coefficients with unit ambient
        let params = PhongParams {
            ka: 0.8,
            kd: 1.0,
            ks: 0.5,
            alpha: 5.0,
            ia: [1.0; 3],
        };
        let white = [1.0; 3];
        let aligned = shade_normal(&z, &[LightSource::colored(z, white).unwrap()], &params, &default_view());
        ensure(aligned.iter().all(|c| (c - 1.0).abs() <= PHONG_TOL), || format!("aligned {aligned:?}"))?;
        let grazing = shade_normal(&z, &[LightSource::colored(Vec3::x(), white).unwrap()], &params, &default_view());
        ensure(grazing.iter().all(|c| (c - 0.8).abs() <= PHONG_TOL), || format!("grazing {grazing:?}"))?;
        let red = LightSource::colored(Vec3::new(-h, 0.0, h), [1.0, 0.0, 0.0]).unwrap();
        for ia in [1.0, 0.0] {
            let p = PhongParams { ia: [ia; 3], ..params };
            let got = shade_normal(&z, &[red], &p, &default_view());
            let want = [
                phong_channel([0.0, 0.0, 1.0], [-h, 0.0, h], &p, ia, 1.0, 1.0),
                phong_channel([0.0, 0.0, 1.0], [-h, 0.0, h], &p, ia, 0.0, 0.0),
                phong_channel([0.0, 0.0, 1.0], [-h, 0.0, h], &p, ia, 0.0, 0.0),
            ];
            for c in 0..3 {
                ensure((got[c] - want[c]).abs() <= PHONG_TOL, || format!("45° case ia={ia}: {got:?} vs {want:?}"))?;
            }
        }

        let sensor = Sensor::new(SensorConfig::default()).unwrap();
        let flat = NormalField::flat(224, 224);
        let img = shade(&flat, sensor.lights(), &sensor.config().phong, &default_view()).unwrap();
        let first = img.pixels()[0];
        ensure(img.pixels().iter().all(|p| *p == first), || "flat render not uniform".into())?;
        ensure(sensor.baseline() == &img, || "cached baseline differs from direct render".into())?;
        Ok(format!("flat pixel {first:?}"))
    });
}

/// Penetration field of a sphere of radius `r` pressed `depth` into the gel,
/// centered on the grid.
fn sphere_cap(n: usize, pitch: f64, r: f64, depth: f64) -> (HeightField, Vec<Option<Vec3>>) {
    let c = n as f64 / 2.0;
    let mut values = Vec::with_capacity(n * n);
    let mut analytic = Vec::with_capacity(n * n);
    let a = (2.0 * r * depth - depth * depth).sqrt();
    for y in 0..n {
        for x in 0..n {
            let (px, py) = ((x as f64 + 0.5 - c) * pitch, (y as f64 + 0.5 - c) * pitch);
            let rr = px.hypot(py);
            if rr < a {
                let s = (r * r - rr * rr).sqrt();
                values.push(s - (r - depth));
            } else {
                values.push(0.0);
            }
            let near_rim = (rr - a).abs() <= NORMAL_RIM_PX * pitch;
            analytic.push(match (near_rim, rr < a) {
                (true, _) => None,
                (false, true) => Some(Vec3::new(px, py, (r * r - rr * rr).sqrt()) / r),
                (false, false) => Some(Vec3::z()),
            });
        }
    }
    (HeightField::new(n, n, pitch, values).unwrap(), analytic)
}

#[test]
fn normal_estimation_accuracy() {
    report("normal estimation accuracy", Duration::from_secs(5), || {
        let (hf, analytic) = sphere_cap(256, 1e-4, 0.02, 0.003);
        let normals = normals_covariance(&hf, 1).unwrap();
        let (mut sum_sq, mut count) = (0.0, 0usize);
        for (n, a) in normals.normals().iter().zip(&analytic) {
            if let Some(a) = a {
                let deg = n.angle(a).to_degrees();
                sum_sq += deg * deg;
                count += 1;
            }
        }
        let rms = (sum_sq / count as f64).sqrt();
        ensure(rms <= NORMAL_RMS_DEG, || format!("sphere RMS {rms:.4}°"))?;

        let mut worst = 0.0f64;
        for (sx, sy) in [(1.0, 0.0), (0.3, -0.7), (-0.2, 0.05), (0.0, 0.0)] {
            let want = Vec3::new(-sx, -sy, 1.0).normalize();
            let offset = 64.0 * 1e-4 * (sx.abs() + sy.abs());
            let plane = HeightField::from_fn(64, 64, 1e-4, |x, y| {
                offset + sx * x as f64 * 1e-4 + sy * y as f64 * 1e-4
            })
            .unwrap();
            for radius in [1, 2, 4] {
                let got = normals_covariance(&plane, radius).unwrap();
                for n in got.normals() {
                    worst = worst.max((n - want).norm());
                }
            }
        }
        ensure(worst <= PLANE_NORMAL_TOL, || format!("plane normal error {worst:e}"))?;
        Ok(format!("sphere RMS {rms:.4}° over {count} px, plane error {worst:.1e}"))
    });
}

fn sphere_object(radius: f64, weight_g: f64) -> SceneObject {
    SceneObject {
        id: "ball".into(),
        class_label: "ball".into(),
        weight_g,
        shape: Shape::Sphere { radius },
        albedo: Albedo::Constant { rgb: [0.8, 0.2, 0.2] },
    }
}

fn force_sum(surface: &ClearanceGrid, delta: f64, thickness: f64, k: f64) -> f64 {
    k * surface.values.iter().map(|&c| (delta - c).clamp(0.0, thickness)).sum::<f64>()
}

#[test]
fn equilibrium_correctness() {
    report("equilibrium correctness", Duration::from_secs(30), || {
        let config = SensorConfig::default();
        let grid = config.grid();
        let params = config.compliance;
        let thickness = config.gel_thickness;

        // flat bottom: δ = W / (k·A)
        let plate = SceneObject {
            shape: Shape::Box { size_x: 0.06, size_y: 0.04 },
            ..sphere_object(0.01, 0.0)
        };
        let surface = lower_surface(&plate, &Pose::new(0.003, -0.01, 0.4), &grid).unwrap();
        let area = surface.covered_pixels() as f64;
        let mut worst_rel = 0.0f64;
        for grams in [50.0, 300.0, 1133.0, 2000.0] {
            let w = grams_to_newtons(grams);
            let load = solve_penetration(&surface, w, &params, thickness).unwrap();
            let want = w / (params.k_pixel * area);
            worst_rel = worst_rel.max(((load.penetration - want) / want).abs());
        }
        ensure(worst_rel <= CLOSED_FORM_REL_TOL, || format!("flat closed form rel error {worst_rel:e}"))?;

        // sphere: bisection against an exhaustive sweep of the load curve
        let ball = lower_surface(&sphere_object(0.02, 0.0), &Pose::centered(), &grid).unwrap();
        let mut sweep_checks = 0;
        for grams in [30.0, 120.0, 240.0] {
            let w = grams_to_newtons(grams);
            let load = solve_penetration(&ball, w, &params, thickness).unwrap();
            let steps = (thickness / SWEEP_STEP_M).round() as usize;
            let first = (0..=steps)
                .map(|i| i as f64 * SWEEP_STEP_M)
                .find(|&d| force_sum(&ball, d, thickness, params.k_pixel) >= w)
                .ok_or_else(|| format!("{grams} g saturates the sweep"))?;
            let lower = first - SWEEP_STEP_M;
            ensure(load.penetration >= lower - 1e-12 && load.penetration <= first + 1e-12, || {
                format!("{grams} g: bisection {} outside sweep step [{lower}, {first}]", load.penetration)
            })?;
            sweep_checks += 1;
        }

        // force balance over random objects and weights
        let objects: Vec<SceneObject> = Recipe::BUILTIN
            .iter()
            .flat_map(|n| Recipe::builtin(n).unwrap().catalog().objects.clone())
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut worst = 0.0f64;
        for _ in 0..FORCE_DRAWS {
            let obj = &objects[rng.gen_range(0..objects.len())];
            let bounds = PoseBounds::keep_on_sensor(&obj.shape, &grid);
            let pose = stsim::scene::sample_pose(&mut rng, &bounds);
            let surface = lower_surface(obj, &pose, &grid).unwrap();
            let capacity = force_sum(&surface, thickness, thickness, params.k_pixel);
            let w = rng.gen_range(0.0..0.95) * capacity;
            let load = solve_penetration(&surface, w, &params, thickness).unwrap();
            ensure(!load.saturated, || format!("{} saturated below capacity", obj.id))?;
            let sum = params.k_pixel * load.displacement.sum();
            worst = worst.max((sum - w).abs()).max((load.total_force - w).abs());
        }
        ensure(worst <= FORCE_BALANCE_N, || format!("force imbalance {worst:e} N"))?;
        Ok(format!(
            "flat rel err {worst_rel:.1e}, {sweep_checks} sweep checks, max imbalance {worst:.1e} N"
        ))
    });
}

#[test]
fn monotone_metrology() {
    report("monotone metrology", Duration::from_secs(60), || {
        let config = SensorConfig::default();
        let grid = config.grid();
        let recipe = Recipe::builtin("fill").unwrap();
        let catalog = recipe.catalog();
        let mut levels: Vec<&SceneObject> = catalog.objects.iter().collect();
        levels.sort_by(|a, b| a.weight_g.total_cmp(&b.weight_g));
        let weights: Vec<f64> = levels.iter().map(|o| o.weight_g).collect();
        ensure(weights == [446.0, 823.0, 1133.0], || format!("fill weights {weights:?}"))?;

        let placements = plan(&recipe, 7, &config).unwrap();
        for p in &placements {
            let surface = lower_surface(levels[0], &p.pose, &grid).unwrap();
            let loads: Vec<_> = levels
                .iter()
                .map(|o| {
                    solve_penetration(&surface, grams_to_newtons(o.weight_g), &config.compliance, config.gel_thickness)
                        .unwrap()
                })
                .collect();
            for w in loads.windows(2) {
                ensure(w[0].penetration < w[1].penetration, || {
                    format!("{}: penetration not increasing", p.sample_id)
                })?;
                ensure(w[0].contact_pixels() < w[1].contact_pixels(), || {
                    format!("{}: contact area not increasing", p.sample_id)
                })?;
            }
        }
        Ok(format!("{} placements × 3 levels strictly ordered", placements.len()))
    });
}

fn stsim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stsim"))
}

fn tree_bytes(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn class_counts(manifest: &Manifest) -> BTreeMap<String, (usize, usize)> {
    let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for s in &manifest.samples {
        let e = counts.entry(s.class_label.clone()).or_default();
        e.0 += 1;
        if s.split == Split::Train {
            e.1 += 1;
        }
    }
    counts
}

fn generate(recipe: &str, seed: &str, out: &Path, extra: &[&str]) -> Result<Manifest, String> {
    let status = stsim()
        .args(["generate", "--recipe", recipe, "--seed", seed, "--out"])
        .arg(out)
        .args(extra)
        .env_remove("STSIM_CONFIG")
        .status()
        .map_err(|e| e.to_string())?;
    ensure(status.success(), || format!("generate {recipe} exited with {status}"))?;
    let validate = stsim().arg("validate").arg(out.join("manifest.json")).output().unwrap();
    ensure(validate.status.code() == Some(0), || {
        format!("validate {recipe}: {}", String::from_utf8_lossy(&validate.stdout))
    })?;
    Manifest::load(&out.join("manifest.json")).map_err(|e| e.to_string())
}

#[test]
fn dataset_reproducibility() {
    report("dataset reproducibility", Duration::from_secs(300), || {
        let tmp = tempfile::tempdir().unwrap();
        let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
        let ma = generate("fill", "7", &a, &[])?;
        generate("fill", "7", &b, &[])?;
        let (ta, tb) = (tree_bytes(&a), tree_bytes(&b));
        ensure(ta.len() == 3 * 360 + 1, || format!("fill tree has {} files", ta.len()))?;
        ensure(ta == tb, || "fill trees differ between runs".into())?;

        let fill = class_counts(&ma);
        ensure(fill.len() == 3 && fill.values().all(|&c| c == (120, 96)), || format!("fill counts {fill:?}"))?;

        let texture = generate("texture", "3", &tmp.path().join("texture"), &["--resolution", "32", "32"])?;
        let tex = class_counts(&texture);
        ensure(tex.len() == 6 && tex.values().all(|&c| c == (100, 80)), || format!("texture counts {tex:?}"))?;

        let household = generate("household", "5", &tmp.path().join("household"), &["--resolution", "16", "16"])?;
        let hh = class_counts(&household);
        ensure(hh.len() == 10 && hh.values().all(|&c| c == (600, 420)), || format!("household counts {hh:?}"))?;
        let tactile = household.samples.iter().filter(|s| tmp.path().join("household").join(&s.paths.tactile).is_file()).count();
        let visual = household.samples.iter().filter(|s| tmp.path().join("household").join(&s.paths.visual).is_file()).count();
        ensure(tactile == 6000 && visual == 6000, || format!("household files {tactile}/{visual}"))?;
        Ok("fill byte-identical, counts 120/level, 100/texture, 600/household class per modality".into())
    });
}

#[test]
fn modality_separation() {
    report("modality separation", Duration::from_secs(120), || {
        let sensor = Sensor::new(SensorConfig::default()).unwrap();
        let grid: SensorGrid = sensor.config().grid();
        let mut checked = 0;
        for name in Recipe::BUILTIN {
            let recipe = Recipe::builtin(name).unwrap();
            for obj in &recipe.catalog().objects {
                let bounds = PoseBounds::keep_on_sensor(&obj.shape, &grid);
                let mut rng = ChaCha8Rng::seed_from_u64(checked as u64);
                let pose = stsim::scene::sample_pose(&mut rng, &bounds);
                let base = sensor.capture(obj, &pose).unwrap();

                let recolored = SceneObject {
                    albedo: Albedo::Checker { a: [0.1, 0.9, 0.4], b: [0.7, 0.0, 0.9], period: 0.007 },
                    ..obj.clone()
                };
                let out = sensor.capture(&recolored, &pose).unwrap();
                ensure(out.tactile == base.tactile, || format!("{}: albedo changed tactile", obj.id))?;
                ensure(out.tactile.to_rgb8() == base.tactile.to_rgb8(), || format!("{}: tactile PNG", obj.id))?;
                ensure(out.visual != base.visual, || format!("{}: albedo did not change visual", obj.id))?;

                let heavier = SceneObject { weight_g: obj.weight_g * 1.7 + 50.0, ..obj.clone() };
                let out = sensor.capture(&heavier, &pose).unwrap();
                ensure(out.visual == base.visual, || format!("{}: weight changed visual", obj.id))?;
                ensure(out.tactile != base.tactile, || format!("{}: weight did not change tactile", obj.id))?;
                checked += 1;
            }
        }
        Ok(format!("{checked} catalog objects"))
    });
}

fn golden_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/sphere_imprint.png")
}

/// Dominant channel of a pixel, as an index into RGB.
fn dominant(p: [f64; 3]) -> usize {
    (0..3).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap()
}

#[test]
fn sphere_imprint_golden() {
    report("sphere imprint golden image", Duration::from_secs(10), || {
        let sensor = Sensor::new(SensorConfig::default()).unwrap();
        let out = sensor.capture(&sphere_object(0.025, 500.0), &Pose::centered()).unwrap();
        let img = &out.tactile;

        // Rim colours: a slope facing +x is lit by the −x (blue) LED, and so on
        // around the ring.
        let a = out.load.penetration;
        let contact_radius = (2.0 * 0.025 * a - a * a).sqrt();
        let px = (0.6 * contact_radius / sensor.config().pixel_pitch()).round() as usize;
        let c = 112;
        let base = sensor.baseline().pixels()[0];
        let probes = [
            ("+x", img.get(c + px, c), 2usize),
            ("+y", img.get(c, c + px), 1),
            ("-y", img.get(c, c - px), 0),
        ];
        for (side, p, channel) in probes {
            ensure(dominant(p) == channel && p[channel] > base[channel] - 1e-12, || {
                format!("{side} rim {p:?} should be dominated by channel {channel}")
            })?;
        }
        let west = img.get(c - px, c);
        let spread = west.iter().fold(0.0f64, |m, &v| m.max((v - west[0]).abs()));
        ensure(spread < 0.05 && west[0] > base[0], || format!("-x rim {west:?} should be bright neutral"))?;

        let rendered = img.to_rgb8();
        let path = golden_path();
        if std::env::var_os("STSIM_BLESS").is_some() {
            img.write_png(&path).map_err(|e| e.to_string())?;
            return Ok(format!("golden re-pinned at {}", path.display()));
        }
        let golden = stsim::raster::read_png(&path).map_err(|e| format!("{e} (run with STSIM_BLESS=1 to pin)"))?;
        let diff = rendered.pixels().zip(golden.pixels()).filter(|(a, b)| a != b).count();
        ensure(rendered.dimensions() == golden.dimensions() && diff == 0, || {
            format!("{diff} pixels differ from the pinned golden image")
        })?;
        Ok("bit-exact match, four-colour rim layout".into())
    });
}
