//! `hlf`: batch front end for hyperspectral light-field stereo.

mod logging;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use log::LevelFilter;
use serde_json::{json, Value};

use hlf_core::bench::{bad_n, interior_mask, pseudo_pair, psnr, rmse, synth_hlf, TunableFilter};
use hlf_core::completion::{complete, PlenopticCube};
use hlf_core::model::{
    disparity_preview, load_camera_response, load_dataset, read_disparity, read_disparity_scaled,
    read_gray_image, read_rgb_image, write_dataset, write_disparity, write_gray_png, write_rgb_png,
    SpectralBand, SpectralImage, ViewIndex,
};
use hlf_core::pairwise::PairwiseMatcher;
use hlf_core::render::{emulate_color, refocus};
use hlf_core::stereo::StereoEngine;
use hlf_core::{CameraSpectralResponse, Config, DisparityMap, HlfError};

#[derive(Debug, Parser)]
#[command(
    name = "hlf",
    version,
    about = "Hyperspectral light-field stereo matching"
)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Overrides a configuration key, e.g. `--set stereo.gamma_c=0.6`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, default_value = "info")]
    log_level: LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Renders the procedural two-plane scene as an H-LF dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Square image size in pixels.
        #[arg(long)]
        size: Option<usize>,
        /// Camera response CSV used for the tunable filter.
        #[arg(long)]
        camera: Option<PathBuf>,
    },
    /// Cross-spectral two-view matching.
    Pairwise {
        #[arg(long)]
        left: PathBuf,
        #[arg(long)]
        right: PathBuf,
        #[arg(long, num_args = 2, allow_negative_numbers = true, value_names = ["MIN", "MAX"])]
        range: Vec<f64>,
        /// Top/bottom pair instead of left/right.
        #[arg(long)]
        vertical: bool,
        /// Treat inputs as RGB and match left red against right blue.
        #[arg(long)]
        pseudo: bool,
        #[arg(long)]
        prior: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Central-view disparity of an H-LF dataset.
    Stereo {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        camera: Option<PathBuf>,
        #[arg(long)]
        gamma_c: Option<f64>,
        /// Also write both cost volumes as flat float32 files.
        #[arg(long)]
        dump_volumes: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Completes the plenoptic cube from a central disparity.
    Complete {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        disparity: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Refocuses a completed cube at a disparity.
    Refocus {
        #[arg(long)]
        cube: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        phi: f64,
        #[arg(long)]
        camera: Option<PathBuf>,
        /// Disparity range used only to warn about out-of-range focus.
        #[arg(long, num_args = 2, allow_negative_numbers = true, value_names = ["MIN", "MAX"])]
        range: Option<Vec<f64>>,
        /// Directory for the per-band refocused stack.
        #[arg(long)]
        stack: Option<PathBuf>,
        #[arg(long)]
        sixteen_bit: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Emulates a colour camera at one view of a completed cube.
    Color {
        #[arg(long)]
        cube: PathBuf,
        /// Grid cell as `s,t`; defaults to the central view.
        #[arg(long)]
        view: Option<String>,
        #[arg(long)]
        camera: Option<PathBuf>,
        #[arg(long)]
        sixteen_bit: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compares an estimate with ground truth and prints JSON.
    Eval {
        #[arg(long)]
        est: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// `badN` (e.g. `bad5.0`), `rmse` or `psnr`.
        #[arg(long, default_value = "bad5.0")]
        metric: String,
        /// Ignore pixels this close to the border.
        #[arg(long, default_value_t = 0)]
        margin: usize,
        /// Ground truth is an integer-coded image with this scale.
        #[arg(long)]
        gt_scale: Option<f64>,
        /// Also write the result and a run manifest here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
struct Failure {
    kind: &'static str,
    message: String,
    /// 2 for bad invocations (flags, config), 1 for runtime failures.
    code: u8,
}

impl From<HlfError> for Failure {
    fn from(e: HlfError) -> Self {
        Failure {
            kind: e.kind(),
            message: e.to_string(),
            code: 1,
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        kind: "usage",
        message: message.into(),
        code: 2,
    }
}

type CliResult<T> = Result<T, Failure>;

fn emit_error(f: &Failure) {
    eprintln!(
        "{}",
        json!({"error": {"kind": f.kind, "message": f.message}})
    );
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            emit_error(&usage(e.to_string().trim().to_owned()));
            return ExitCode::from(2);
        }
    };
    logging::init(cli.log_level);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            emit_error(&f);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(cli: &Cli) -> CliResult<Config> {
    let bad_config = |e: HlfError| Failure {
        code: 2,
        ..Failure::from(e)
    };
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p).map_err(bad_config)?,
        None => Config::default(),
    };
    cfg.apply_env(std::env::vars()).map_err(bad_config)?;
    cfg.apply_overrides(&cli.overrides).map_err(bad_config)?;
    if let Some(t) = cli.threads {
        cfg.runtime.threads = t;
    }
    Ok(cfg)
}

fn camera(path: &Option<PathBuf>) -> CliResult<CameraSpectralResponse> {
    Ok(match path {
        Some(p) => load_camera_response(p)?,
        None => CameraSpectralResponse::reference(),
    })
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| usage(format!("cannot create {}: {e}", dir.display())))
}

/// Records what a run read, wrote and how long it took.
struct RunLog {
    command: &'static str,
    started: Instant,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    timings: serde_json::Map<String, Value>,
    extra: serde_json::Map<String, Value>,
}

impl RunLog {
    fn new(command: &'static str) -> Self {
        RunLog {
            command,
            started: Instant::now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: Default::default(),
            extra: Default::default(),
        }
    }

    fn time<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        let secs = t.elapsed().as_secs_f64();
        log::info!("{name} took {secs:.3} s");
        self.timings.insert(name.to_owned(), json!(secs));
        out
    }

    fn write(mut self, path: &Path, cfg: &Config) -> CliResult<()> {
        self.timings
            .insert("total".into(), json!(self.started.elapsed().as_secs_f64()));
        let record = json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "args": std::env::args().collect::<Vec<_>>(),
            "threads": rayon::current_num_threads(),
            "inputs": self.inputs,
            "outputs": self.outputs,
            "timings_s": self.timings,
            "results": self.extra,
            "config": cfg,
        });
        std::fs::write(path, serde_json::to_string_pretty(&record).expect("json")).map_err(|e| {
            Failure::from(HlfError::Io {
                path: path.into(),
                source: e,
            })
        })
    }
}

fn write_map(
    map: &DisparityMap,
    path: PathBuf,
    range: (f64, f64),
    run: &mut RunLog,
) -> CliResult<()> {
    write_disparity(map, &path)?;
    let preview = path.with_extension("png");
    write_gray_png(
        &preview,
        map.width(),
        map.height(),
        &disparity_preview(map, range),
        false,
    )?;
    run.outputs.push(path);
    run.outputs.push(preview);
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = load_config(&cli)?;
    if cfg.runtime.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.runtime.threads)
            .build_global()
            .map_err(|e| usage(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Synth {
            out,
            seed,
            size,
            camera: cam_path,
        } => {
            let mut run = RunLog::new("synth");
            let mut scene = cfg.synth.scene.clone();
            if let Some(s) = seed {
                scene.seed = s;
            }
            if let Some(n) = size {
                scene.width = n;
                scene.height = n;
            }
            let cam = camera(&cam_path)?;
            run.inputs.extend(cam_path);
            let lf = run.time("render", || scene.render())?;
            let views = scene.rows * scene.cols;
            let bands: Vec<SpectralBand> = if views == 30 {
                SpectralBand::standard_series()
            } else {
                let step = if views > 1 {
                    290.0 / (views - 1) as f64
                } else {
                    0.0
                };
                SpectralBand::series(410.0, step, views)?
            };
            let filter = TunableFilter::from_camera(&cam, &bands);
            let (hlf, gt) = synth_hlf(
                &lf,
                &bands,
                &filter,
                scene.disparity_range(),
                cfg.synth.label_count,
            )?;
            create_dir(&out)?;
            run.outputs.push(write_dataset(&hlf, &out)?);
            let range = scene.disparity_range();
            write_map(&gt, out.join("gt.pfm"), range, &mut run)?;
            let gt_dir = out.join("gt");
            create_dir(&gt_dir)?;
            for idx in hlf.indices() {
                let p = gt_dir.join(format!("view_{}_{}.pfm", idx.s, idx.t));
                write_disparity(lf.disparity(idx), &p)?;
                run.outputs.push(p);
            }
            run.extra.insert("scene".into(), json!(scene));
            run.write(&out.join("run.json"), &cfg)
        }
        Command::Pairwise {
            left,
            right,
            range,
            vertical,
            pseudo,
            prior,
            out,
        } => {
            let mut run = RunLog::new("pairwise");
            let range = (range[0], range[1]);
            let (a, b) = if pseudo {
                pseudo_pair(&read_rgb_image(&left)?, &read_rgb_image(&right)?)?
            } else {
                let band = SpectralBand::narrow(550.0)?;
                let (w, h, pa) = read_gray_image(&left)?;
                let (w2, h2, pb) = read_gray_image(&right)?;
                (
                    SpectralImage::new(w, h, band, pa)?,
                    SpectralImage::new(w2, h2, band, pb)?,
                )
            };
            run.inputs.extend([left, right]);
            let prior_map = prior.as_ref().map(read_disparity).transpose()?;
            run.inputs.extend(prior);
            let matcher = PairwiseMatcher::new(
                cfg.descriptor.clone(),
                cfg.metric.clone(),
                cfg.pairwise.clone(),
            )?;
            let result = run.time("match", || {
                if vertical {
                    matcher.match_pair_vertical(&a, &b, range, prior_map.as_ref())
                } else {
                    matcher.match_pair(&a, &b, range, prior_map.as_ref())
                }
            })?;
            create_dir(&out)?;
            write_map(
                &result.disparity,
                out.join("disparity.pfm"),
                range,
                &mut run,
            )?;
            run.extra.insert("energy".into(), json!(result.energy));
            run.extra
                .insert("initial_energy".into(), json!(result.initial_energy));
            run.write(&out.join("run.json"), &cfg)
        }
        Command::Stereo {
            manifest,
            camera: cam_path,
            gamma_c,
            dump_volumes,
            out,
        } => {
            let mut run = RunLog::new("stereo");
            let mut cfg = cfg;
            if let Some(g) = gamma_c {
                cfg.set("stereo.gamma_c", &g.to_string())
                    .map_err(|e| Failure {
                        code: 2,
                        ..Failure::from(e)
                    })?;
            }
            let hlf = load_dataset(&manifest)?;
            let cam = camera(&cam_path)?;
            run.inputs.push(manifest);
            run.inputs.extend(cam_path);
            let engine = StereoEngine::new(
                cfg.descriptor.clone(),
                cfg.metric.clone(),
                cfg.stereo.clone(),
            )?;
            let result = run.time("estimate", || engine.estimate(&hlf, &cam))?;
            create_dir(&out)?;
            let range = hlf.disparity_range;
            write_map(&result.fused, out.join("fused.pfm"), range, &mut run)?;
            write_map(
                &result.correspondence,
                out.join("correspondence.pfm"),
                range,
                &mut run,
            )?;
            write_map(&result.defocus, out.join("defocus.pfm"), range, &mut run)?;
            if dump_volumes {
                for (name, vol) in [
                    ("correspondence_volume.f32", &result.correspondence_volume),
                    ("defocus_volume.f32", &result.defocus_volume),
                ] {
                    vol.write_dump(out.join(name))?;
                    run.outputs.push(out.join(name));
                }
            }
            run.extra.insert(
                "energies".into(),
                json!({
                    "fused": result.fused_energy,
                    "correspondence": result.correspondence_energy,
                    "defocus": result.defocus_energy,
                    "sweeps": result.sweep_energies,
                }),
            );
            run.extra.insert(
                "low_confidence_fraction".into(),
                json!(result.low_confidence_fraction),
            );
            run.write(&out.join("run.json"), &cfg)
        }
        Command::Complete {
            manifest,
            disparity,
            out,
        } => {
            let mut run = RunLog::new("complete");
            let hlf = load_dataset(&manifest)?;
            let central = read_disparity(&disparity)?;
            run.inputs.extend([manifest, disparity]);
            let matcher = PairwiseMatcher::new(
                cfg.descriptor.clone(),
                cfg.metric.clone(),
                cfg.pairwise.clone(),
            )?;
            let result = run.time("complete", || {
                complete(&hlf, &central, &matcher, &cfg.completion)
            })?;
            create_dir(&out)?;
            run.outputs.push(result.cube.save(out.join("cube"))?);
            let dir = out.join("disparity");
            create_dir(&dir)?;
            for idx in hlf.indices() {
                let map = &result.refined[hlf.linear(idx)];
                let path = dir.join(format!("view_{}_{}.pfm", idx.s, idx.t));
                write_map(map, path, hlf.disparity_range, &mut run)?;
            }
            run.extra
                .insert("sweeps".into(), json!(result.report.sweeps));
            run.extra
                .insert("hole_filled".into(), json!(result.report.hole_filled));
            run.write(&out.join("run.json"), &cfg)
        }
        Command::Refocus {
            cube,
            phi,
            camera: cam_path,
            range,
            stack,
            sixteen_bit,
            out,
        } => {
            let mut run = RunLog::new("refocus");
            let c = PlenopticCube::load(&cube)?;
            let cam = camera(&cam_path)?;
            run.inputs.push(cube);
            run.inputs.extend(cam_path);
            let range = range.map(|r| (r[0], r[1]));
            let result = run.time("refocus", || refocus(&c, phi, &cam, range, &cfg.render))?;
            write_rgb_png(&out, &result.rgb, sixteen_bit)?;
            run.outputs.push(out.clone());
            if let Some(dir) = stack {
                create_dir(&dir)?;
                for img in &result.stack {
                    let p = dir.join(format!("band_{}.png", img.band().center_nm));
                    write_gray_png(&p, img.width(), img.height(), img.pixels(), true)?;
                    run.outputs.push(p);
                }
            }
            run.write(&sibling(&out, "run.json"), &cfg)
        }
        Command::Color {
            cube,
            view,
            camera: cam_path,
            sixteen_bit,
            out,
        } => {
            let mut run = RunLog::new("color");
            let c = PlenopticCube::load(&cube)?;
            let cam = camera(&cam_path)?;
            run.inputs.push(cube);
            run.inputs.extend(cam_path);
            let idx = match view {
                Some(v) => parse_view(&v)?,
                None => c.center(),
            };
            let rgb = run.time("emulate", || emulate_color(&c, idx, &cam, &cfg.render))?;
            write_rgb_png(&out, &rgb, sixteen_bit)?;
            run.outputs.push(out.clone());
            run.write(&sibling(&out, "run.json"), &cfg)
        }
        Command::Eval {
            est,
            gt,
            metric,
            margin,
            gt_scale,
            out,
        } => {
            let mut run = RunLog::new("eval");
            let value = evaluate(&est, &gt, &metric, margin, gt_scale)?;
            let record = json!({ metric.clone(): value });
            println!("{record}");
            run.inputs.extend([est, gt]);
            if let Some(dir) = out {
                create_dir(&dir)?;
                let path = dir.join("eval.json");
                std::fs::write(&path, record.to_string()).map_err(|e| {
                    Failure::from(HlfError::Io {
                        path: path.clone(),
                        source: e,
                    })
                })?;
                run.outputs.push(path);
                run.extra.insert(metric, json!(value));
                run.write(&dir.join("run.json"), &cfg)?;
            }
            Ok(())
        }
    }
}

/// `<out>.run.json` next to a single-file output.
fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

fn parse_view(text: &str) -> CliResult<ViewIndex> {
    let parsed = text.split_once(',').and_then(|(s, t)| {
        Some(ViewIndex::new(
            s.trim().parse().ok()?,
            t.trim().parse().ok()?,
        ))
    });
    parsed.ok_or_else(|| usage(format!("view must be `s,t`, got `{text}`")))
}

fn evaluate(
    est: &Path,
    gt: &Path,
    metric: &str,
    margin: usize,
    gt_scale: Option<f64>,
) -> CliResult<f64> {
    if metric == "psnr" {
        let (w, h, a) = read_gray_image(est)?;
        let (w2, h2, b) = read_gray_image(gt)?;
        if (w, h) != (w2, h2) {
            return Err(HlfError::DimensionMismatch {
                expected: (w2, h2),
                found: (w, h),
            }
            .into());
        }
        let mask = interior_mask(w, h, margin);
        return Ok(psnr(&a, &b, Some(&mask))?);
    }
    let e = read_disparity(est)?;
    let g = match gt_scale {
        Some(s) => read_disparity_scaled(gt, s)?,
        None => read_disparity(gt)?,
    };
    let mask = interior_mask(g.width(), g.height(), margin);
    if metric == "rmse" {
        return Ok(rmse(&e, &g, Some(&mask))?);
    }
    let n = metric
        .strip_prefix("bad")
        .and_then(|n| n.parse::<f64>().ok())
        .ok_or_else(|| usage(format!("unknown metric `{metric}`")))?;
    Ok(bad_n(&e, &g, n, Some(&mask))?)
}
