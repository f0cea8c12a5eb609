#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

use fracfocus::depth::{parabolic_peak, recover_depth};
use fracfocus::eval::{
    axis_profile, comparison_table, profile_to_csv, rms_error_percent, Axis, ComparisonTable,
    ErrorReport,
};
use fracfocus::focus::{local_focus_volume, nonlocalize, FocusVolume};
use fracfocus::io::{self, SlideFormat, StackMeta};
use fracfocus::kernel2d::{build_kernel, KernelOrder};
use fracfocus::synth::{
    ground_truth, render_slide, render_stack, BlurSpec, SceneKind, SceneSpec, TextureKind,
};
use fracfocus::QuadratureSpec;

const THREADS_ENV: &str = "FRACFOCUS_THREADS";

#[derive(Parser)]
#[command(
    name = "fracfocus",
    version,
    about = "Depth from focus with fractional nonlocal focus measures"
)]
struct Cli {
    /// Worker threads, 0 for all cores. FRACFOCUS_THREADS takes precedence.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the nonlocalization kernel M(alpha) with cutoff zeta.
    Kernel(KernelArgs),
    /// Render a synthetic focal stack with ground truth.
    Synth(SynthArgs),
    /// Recover a depth map from a stack directory.
    Recover(RecoverArgs),
    /// Compare a depth map with ground truth.
    Eval(EvalArgs),
    /// Run quick internal consistency checks.
    #[command(hide = true)]
    Selftest,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelFormat {
    Csv,
    Json,
}

#[derive(Args)]
struct KernelArgs {
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    zeta: usize,
    #[arg(long, value_enum, default_value = "csv")]
    format: KernelFormat,
}

#[derive(Clone, Copy, ValueEnum)]
enum SceneArg {
    Sphere,
    Plane,
    Ramp,
}

#[derive(Clone, Copy, ValueEnum)]
enum TextureArg {
    ValueNoise,
    Checker,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "sphere")]
    scene: SceneArg,
    /// Sphere radius.
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    /// Plane height.
    #[arg(long, default_value_t = 0.5)]
    height: f64,
    /// Ramp height at y = -L.
    #[arg(long, default_value_t = 0.0)]
    z_start: f64,
    /// Ramp height at y = L.
    #[arg(long, default_value_t = 1.0)]
    z_end: f64,
    /// Image side length in pixels.
    #[arg(long, default_value_t = 256)]
    size: usize,
    #[arg(long, default_value_t = 32)]
    slices: usize,
    #[arg(long, default_value_t = 0.0)]
    z_min: f64,
    #[arg(long, default_value_t = 1.0)]
    z_max: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// PSF width in pixels per unit of defocus.
    #[arg(long, default_value_t = BlurSpec::DEFAULT_SIGMA0)]
    sigma0: f64,
    /// PSF radius cap in pixels; defaults to 4 sigma at the largest defocus.
    #[arg(long)]
    max_radius: Option<usize>,
    #[arg(long, default_value_t = SceneSpec::DEFAULT_TEXTURE_WAVELENGTH)]
    wavelength: f64,
    #[arg(long, value_enum, default_value = "value-noise")]
    texture: TextureArg,
    /// Half side length L of the imaged square [-L, L]^2.
    #[arg(long, default_value_t = SceneSpec::DEFAULT_HALF_EXTENT)]
    half_extent: f64,
    /// Extra preview slides at these focal planes; the sphere defaults to 0.45 and 0.8.
    #[arg(long, value_delimiter = ',')]
    preview: Option<Vec<f64>>,
    /// Write slides as lossless CSV instead of 8-bit PGM.
    #[arg(long)]
    lossless: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Local,
    Nonlocal,
}

#[derive(Args)]
struct RecoverArgs {
    #[arg(long)]
    stack: PathBuf,
    #[arg(long, value_enum, default_value = "nonlocal")]
    method: Method,
    /// Step of the modified Laplacian.
    #[arg(long, default_value_t = 1)]
    q: usize,
    #[arg(long, default_value_t = 1.5)]
    alpha: f64,
    #[arg(long, default_value_t = 4)]
    zeta: usize,
    /// Depth CSV; the JSON sidecar is written next to it.
    #[arg(long)]
    out: PathBuf,
    /// Rescaled PGM preview of the depth map.
    #[arg(long)]
    preview: Option<PathBuf>,
    /// Directory for the per-slide focus measure.
    #[arg(long)]
    volume_out: Option<PathBuf>,
    /// Write the focus measure as CSV instead of rescaled PGM.
    #[arg(long)]
    lossless: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    depth: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    report: PathBuf,
    /// Stack directory; supplies z range and spacing, required for --table.
    #[arg(long)]
    stack: Option<PathBuf>,
    /// Error denominator; defaults to the stack's z_max - z_min.
    #[arg(long)]
    z_range: Option<f64>,
    /// Write the zeta x alpha comparison grid.
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [2.0, 1.5, 1.0, 0.5, 0.0])]
    alphas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 3, 4])]
    zetas: Vec<usize>,
    /// Fixed step feeding every grid cell.
    #[arg(long, default_value_t = 1)]
    q: usize,
    /// Local steps to report; defaults to the zetas.
    #[arg(long, value_delimiter = ',')]
    local_q: Vec<usize>,
    /// Write the central axis profile.
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "y")]
    axis: AxisArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    X,
    Y,
}

fn thread_count(flag: usize) -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .with_context(|| format!("{THREADS_ENV}={v:?} is not a thread count")),
        Err(_) => Ok(flag),
    }
}

fn cmd_kernel(args: &KernelArgs) -> Result<()> {
    let order = KernelOrder::new(args.alpha)?;
    if args.zeta == 0 {
        bail!("zeta must be at least 1");
    }
    let kernel = build_kernel(order, args.zeta, &QuadratureSpec::default())?;
    let text = match args.format {
        KernelFormat::Csv => io::kernel_to_csv(&kernel),
        KernelFormat::Json => io::kernel_to_json(&kernel),
    };
    print!("{text}");
    Ok(())
}

fn scene_from(args: &SynthArgs) -> SceneSpec {
    let kind = match args.scene {
        SceneArg::Sphere => SceneKind::Sphere {
            radius: args.radius,
        },
        SceneArg::Plane => SceneKind::Plane {
            height: args.height,
        },
        SceneArg::Ramp => SceneKind::Ramp {
            z_start: args.z_start,
            z_end: args.z_end,
        },
    };
    let texture = match args.texture {
        TextureArg::ValueNoise => TextureKind::ValueNoise,
        TextureArg::Checker => TextureKind::Checker,
    };
    SceneSpec {
        kind,
        half_extent: args.half_extent,
        texture_wavelength: args.wavelength,
        texture,
        seed: args.seed,
    }
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let scene = scene_from(args);
    scene.validate()?;
    if args.size < 2 {
        bail!("size must be at least 2 pixels");
    }
    if args.slices < 3 {
        bail!("a focal stack needs at least 3 slides, got {}", args.slices);
    }
    if !(args.z_min < args.z_max) {
        bail!("focal range must satisfy z_min < z_max");
    }
    let blur = match args.max_radius {
        Some(r) => BlurSpec::new(args.sigma0, r)?,
        None => BlurSpec::for_defocus_span(args.sigma0, scene.max_defocus(args.z_min, args.z_max))?,
    };
    let previews = match (&args.preview, args.scene) {
        (Some(p), _) => p.clone(),
        (None, SceneArg::Sphere) => vec![0.45, 0.8],
        (None, _) => Vec::new(),
    };
    let n = args.size;
    let h = scene.spacing_for(n);

    let start = Instant::now();
    let stack = render_stack(&scene, &blur, n, n, args.slices, args.z_min, args.z_max, h)?;
    info!(
        "rendered {} slides of {n}x{n} in {:.2?}",
        args.slices,
        start.elapsed()
    );
    let truth = ground_truth(&scene, n, n, h)?;
    let meta = StackMeta {
        z_min: args.z_min,
        z_max: args.z_max,
        n: args.slices,
        h,
        width: n,
        height: n,
        slide_format: if args.lossless {
            SlideFormat::Csv
        } else {
            SlideFormat::Pgm
        },
        scene: Some(scene),
        blur: Some(blur),
        seed: Some(args.seed),
    };
    io::write_stack(&args.out, &stack, &meta, Some(&truth))?;
    for z in previews {
        let slide = render_slide(&scene, &blur, n, n, h, z)?;
        io::write_pgm(&args.out.join(format!("preview_z{z:.2}.pgm")), &slide)?;
    }
    info!("wrote {}", args.out.display());
    Ok(())
}

fn write_volume(dir: &Path, volume: &FocusVolume, lossless: bool) -> Result<()> {
    for (k, layer) in volume.layers.iter().enumerate() {
        if lossless {
            io::write_field_csv(&dir.join(format!("focus_{k:03}.csv")), layer)?;
        } else {
            let mask = vec![true; layer.values().len()];
            io::write_preview_pgm(
                &dir.join(format!("focus_{k:03}.pgm")),
                layer.width(),
                layer.height(),
                layer.values(),
                &mask,
            )?;
        }
    }
    Ok(())
}

fn cmd_recover(args: &RecoverArgs) -> Result<()> {
    if args.q == 0 {
        bail!("q must be at least 1");
    }
    let kernel = match args.method {
        Method::Local => None,
        Method::Nonlocal => {
            let order = KernelOrder::new(args.alpha)?;
            if args.zeta == 0 {
                bail!("zeta must be at least 1");
            }
            Some(build_kernel(order, args.zeta, &QuadratureSpec::default())?)
        }
    };
    let (stack, _) = io::read_stack(&args.stack)?;
    let start = Instant::now();
    let local = local_focus_volume(&stack, args.q)?;
    let volume = match &kernel {
        Some(k) => nonlocalize(&local, k),
        None => local,
    };
    let depth = recover_depth(&volume)?;
    info!(
        "recovered {}x{} depth, {} valid pixels, in {:.2?}",
        depth.width(),
        depth.height(),
        depth.valid_count(),
        start.elapsed()
    );
    io::write_depth(&args.out, &depth)?;
    if let Some(path) = &args.preview {
        io::write_preview_pgm(
            path,
            depth.width(),
            depth.height(),
            depth.values(),
            depth.valid_mask(),
        )?;
    }
    if let Some(dir) = &args.volume_out {
        write_volume(dir, &volume, args.lossless)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct EvalReport {
    /// How `rms_percent` is normalized.
    normalization: &'static str,
    z_range: f64,
    error: ErrorReport,
    table: Option<ComparisonTable>,
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    if let Some(r) = args.z_range {
        if !(r > 0.0 && r.is_finite()) {
            bail!("z range must be positive, got {r}");
        }
    }
    for &a in &args.alphas {
        KernelOrder::new(a)?;
    }
    if args.table.is_some() && args.stack.is_none() {
        bail!("--table needs --stack");
    }
    let depth = io::read_depth(&args.depth)?;
    let truth = io::read_depth(&args.truth)?;
    let stack = args.stack.as_deref().map(io::read_stack).transpose()?;
    let z_range = match (args.z_range, &stack, &depth.source) {
        (Some(r), _, _) => r,
        (None, Some((_, meta)), _) => meta.z_max - meta.z_min,
        (None, None, Some(src)) => src.z_max - src.z_min,
        (None, None, None) => bail!("no z range: pass --z-range or --stack"),
    };
    let error = rms_error_percent(&depth, &truth, z_range).with_context(|| {
        format!(
            "comparing {} with {}",
            args.depth.display(),
            args.truth.display()
        )
    })?;
    info!(
        "rms error {:.4}% over {} pixels",
        error.rms_percent, error.pixel_count
    );

    let table = match (&args.table, &stack) {
        (Some(path), Some((stack, _))) => {
            let start = Instant::now();
            let t = comparison_table(
                stack,
                &truth,
                args.q,
                &args.alphas,
                &args.zetas,
                &args.local_q,
            )?;
            info!("comparison grid in {:.2?}", start.elapsed());
            std::fs::write(path, t.to_csv())
                .with_context(|| format!("writing {}", path.display()))?;
            Some(t)
        }
        _ => None,
    };
    if let Some(path) = &args.profile {
        let spacing = stack.as_ref().map_or(1.0, |(_, m)| m.h);
        let axis = match args.axis {
            AxisArg::X => Axis::X,
            AxisArg::Y => Axis::Y,
        };
        let profile = axis_profile(&depth, &truth, axis, spacing)?;
        std::fs::write(path, profile_to_csv(&profile))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    let report = EvalReport {
        normalization: "percent of z_max - z_min",
        z_range,
        error,
        table,
    };
    io::write_json(&args.report, &report)?;
    Ok(())
}

fn cmd_selftest() -> Result<()> {
    let quad = QuadratureSpec::default();
    let mut failures = 0;
    let mut check = |name: &str, ok: bool, detail: String| {
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failures += 1;
        }
    };

    let m1 = build_kernel(KernelOrder::new(1.0)?, 4, &quad)?;
    let w = m1.weight(0, 1);
    check(
        "kernel M(1) (0,1)",
        (w - 0.294441).abs() < 5e-6,
        format!("{w:.6}"),
    );

    let m0 = build_kernel(KernelOrder::new(0.0)?, 2, &quad)?;
    check(
        "kernel M(0) is a delta",
        m0.sum() == 1.0 && m0.weight(0, 0) == 1.0,
        format!("sum {}", m0.sum()),
    );

    let parabola = |x: f64| 1.0 - (x - 0.3) * (x - 0.3);
    let fit = parabolic_peak(parabola(-1.0), parabola(0.0), parabola(1.0));
    check(
        "parabola vertex",
        (fit.offset - 0.3).abs() < 1e-12,
        format!("{:.12}", fit.offset),
    );

    let scene = SceneSpec {
        texture_wavelength: 0.15,
        ..SceneSpec::plane(0.5, 3)
    };
    let h = scene.spacing_for(48);
    let blur = BlurSpec::for_defocus_span(BlurSpec::DEFAULT_SIGMA0, 0.5)?;
    let stack = render_stack(&scene, &blur, 48, 48, 11, 0.0, 1.0, h)?;
    let truth = ground_truth(&scene, 48, 48, h)?;
    let local = local_focus_volume(&stack, 1)?;
    let nonlocal = nonlocalize(&local, &build_kernel(KernelOrder::new(1.0)?, 2, &quad)?);
    let err = rms_error_percent(&recover_depth(&nonlocal)?, &truth, 1.0)?;
    check(
        "plane pipeline",
        err.rms_percent < 2.0,
        format!(
            "{:.4}% rms over {} pixels",
            err.rms_percent, err.pixel_count
        ),
    );

    if failures > 0 {
        bail!("{failures} self-test check(s) failed");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count(cli.threads)?)
        .build_global()
        .context("configuring the thread pool")?;
    match &cli.command {
        Command::Kernel(a) => cmd_kernel(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Recover(a) => cmd_recover(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Selftest => cmd_selftest(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
