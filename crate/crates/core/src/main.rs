use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use stsim::dataset::{self, GenerateOptions, Recipe};
use stsim::depth_io::load_depth;
use stsim::geometry::clip_depth;
use stsim::scene::Pose;
use stsim::sensor::{Sensor, SensorConfig, CONFIG_ENV};

const EXIT_USAGE: u8 = 1;
const EXIT_INVALID: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "stsim", version, about = "Visuotactile sensor simulator and dataset generator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a labeled dataset and its manifest.
    Generate {
        /// Built-in recipe (household, texture, fill) or a recipe JSON file.
        #[arg(long)]
        recipe: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Override the configured image size.
        #[arg(long, num_args = 2, value_names = ["W", "H"])]
        resolution: Option<Vec<usize>>,
        #[arg(long, env = CONFIG_ENV)]
        config: Option<PathBuf>,
        /// Also write each displacement field as an STSD file.
        #[arg(long)]
        height_sidecar: bool,
    },
    /// Check a manifest and every file it references.
    Validate { manifest: PathBuf },
    /// Render a single object for debugging.
    Render {
        #[arg(long)]
        object: String,
        /// `x,y,theta` in meters and radians.
        #[arg(long, value_parser = parse_pose, allow_hyphen_values = true)]
        pose: Pose,
        /// Output prefix; writes `<PREFIX>_tactile.png` and friends.
        #[arg(long)]
        out: PathBuf,
        /// Recipe whose catalog holds the object; all built-ins are searched by default.
        #[arg(long)]
        recipe: Option<String>,
        #[arg(long)]
        weight_g: Option<f64>,
        #[arg(long, env = CONFIG_ENV)]
        config: Option<PathBuf>,
    },
    /// Shade an imported depth map (STSD or 16-bit PGM) as a tactile image.
    Tactile {
        #[arg(long)]
        depth: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = CONFIG_ENV)]
        config: Option<PathBuf>,
    },
}

fn parse_pose(s: &str) -> Result<Pose, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [x, y, theta] if parts.iter().all(|v| v.is_finite()) => Ok(Pose::new(x, y, theta)),
        _ => Err("expected three finite numbers `x,y,theta`".into()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn run(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Generate {
            recipe,
            seed,
            out,
            resolution,
            config,
            height_sidecar,
        } => {
            let mut cfg = SensorConfig::resolve(config.as_deref())?;
            if let Some(res) = resolution {
                cfg.resolution = [res[0], res[1]];
                cfg.validate().context("--resolution")?;
            }
            let recipe = Recipe::resolve(&recipe)?;
            let manifest = dataset::generate(&recipe, seed, &out, &cfg, GenerateOptions { height_sidecar })?;
            println!(
                "wrote {} samples to {}",
                manifest.samples.len(),
                out.join(dataset::MANIFEST_FILE).display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { manifest } => {
            let report = dataset::validate(&manifest);
            for issue in &report.issues {
                println!("{issue}");
            }
            if report.is_clean() {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("{} issue(s) found", report.issues.len());
                Ok(ExitCode::from(EXIT_INVALID))
            }
        }
        Command::Render {
            object,
            pose,
            out,
            recipe,
            weight_g,
            config,
        } => {
            let cfg = SensorConfig::resolve(config.as_deref())?;
            let mut obj = find_object(&object, recipe.as_deref())?;
            if let Some(w) = weight_g {
                obj.weight_g = w;
            }
            let output = Sensor::new(cfg)?.capture(&obj, &pose)?;
            for (suffix, img) in [
                ("tactile", &output.tactile),
                ("visual", &output.visual),
                ("blended", &output.blended),
            ] {
                img.write_png(&with_suffix(&out, suffix))?;
            }
            println!(
                "penetration_m={} total_force_n={} contact_pixels={} saturated={}",
                output.load.penetration,
                output.load.total_force,
                output.load.contact_pixels(),
                output.load.saturated
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Tactile { depth, out, config } => {
            let cfg = SensorConfig::resolve(config.as_deref())?;
            let raw = load_depth(&depth, cfg.depth_import.pgm_meters_per_level, cfg.pixel_pitch())?;
            let hf = clip_depth(&raw, cfg.gel_thickness)?;
            let img = Sensor::new(cfg)?.render_tactile(&hf)?;
            img.write_png(&out)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn find_object(id: &str, recipe: Option<&str>) -> anyhow::Result<stsim::scene::SceneObject> {
    let recipes = match recipe {
        Some(r) => vec![Recipe::resolve(r)?],
        None => Recipe::BUILTIN.iter().map(|n| Recipe::builtin(n)).collect::<Result<_, _>>()?,
    };
    for r in &recipes {
        if let Some(obj) = r.catalog().get(id) {
            return Ok(obj.clone());
        }
    }
    bail!(stsim::Error::UnknownObject(id.to_string()))
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(format!("_{suffix}.png"));
    prefix.with_file_name(name)
}
