use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use shearsplat::checkpoint::{Checkpoint, Rig};
use shearsplat::config::{RunConfig, THREADS_ENV};
use shearsplat::render::{render, Frame};
use shearsplat::scene::{synth_scene, Dataset, SceneSpec};
use shearsplat::training::{
    fit_until, init_model, psnr, ssim, trajectory_rmse, MetricsRow, TrainState, DEFAULT_RADIUS_FRACTION,
    METRICS_HEADER,
};
use shearsplat::{Error, Result};

const METRICS_FILE: &str = "metrics.tsv";
const CHECKPOINT_FILE: &str = "model.ckpt";
const DIAGNOSTIC_FILE: &str = "diverged.ckpt";

#[derive(Parser)]
#[command(name = "shearsplat", version, about = "Fit and render velocity-sheared 4D Gaussian scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset from a scene file.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a model to a dataset.
    Fit(FitArgs),
    /// Render frames of one camera at the given times.
    Render {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        camera: usize,
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        times: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Held-out PSNR and SSIM, plus trajectory error when a checkpoint is given.
    Eval {
        #[arg(long, required_unless_present = "frames", conflicts_with = "frames")]
        ckpt: Option<PathBuf>,
        /// Directory of frames laid out like a dataset, compared in place of a model.
        #[arg(long)]
        frames: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// Trajectory capture radius as a fraction of the scene extent.
        #[arg(long, default_value_t = DEFAULT_RADIUS_FRACTION)]
        radius: f64,
    },
    /// Dump one Gaussian's sliced moments over a time sweep as TSV.
    Inspect {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        gaussian: usize,
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        times: Vec<f64>,
    },
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Continue from a checkpoint instead of a fresh initialization.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Stop after this many completed iterations; schedules still span the configured total.
    #[arg(long)]
    until: Option<usize>,
}

fn init_threads(configured: usize) -> Result<()> {
    let n = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{THREADS_ENV}={v:?} is not a thread count")))?,
        Err(_) => configured,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn cmd_synth(spec: &Path, out: &Path) -> Result<()> {
    init_threads(0)?;
    let text = std::fs::read_to_string(spec).map_err(io_err(spec))?;
    let data = synth_scene(&SceneSpec::parse(&text)?)?;
    data.save(out)?;
    eprintln!(
        "wrote {} cameras x {} times to {}",
        data.cameras.len(),
        data.times.len(),
        out.display()
    );
    Ok(())
}

fn cmd_fit(a: &FitArgs) -> Result<()> {
    let config = RunConfig::load(&a.config)?;
    init_threads(config.threads)?;
    let data = Dataset::load(&a.data)?;
    let mut state = match &a.resume {
        Some(p) => {
            let ck = Checkpoint::load(p)?;
            if ck.config.model != config.model {
                return Err(Error::Config(format!(
                    "{} was trained with a different [model] section",
                    p.display()
                )));
            }
            ck.state
        }
        None => TrainState::new(init_model(&config.model, &data, config.fit.seed)?),
    };
    std::fs::create_dir_all(&a.out).map_err(io_err(&a.out))?;
    let metrics_path = a.out.join(METRICS_FILE);
    let fresh = a.resume.is_none() || !metrics_path.exists();
    let mut metrics = OpenOptions::new()
        .create(true)
        .write(true)
        .append(!fresh)
        .truncate(fresh)
        .open(&metrics_path)
        .map_err(io_err(&metrics_path))?;
    if fresh {
        writeln!(metrics, "{METRICS_HEADER}").map_err(io_err(&metrics_path))?;
    }
    let rig = Rig {
        cameras: data.cameras.clone(),
        held_out: data.held_out.clone(),
        times: data.times.clone(),
    };
    let until = a.until.unwrap_or(config.fit.iterations);
    let result = fit_until(&mut state, &data, &config.fit, until, &mut |row: &MetricsRow| {
        writeln!(metrics, "{}", row.to_line()).map_err(io_err(&metrics_path))?;
        metrics.flush().map_err(io_err(&metrics_path))
    });
    let ck = Checkpoint { config, state, rig };
    if let Err(e @ Error::Diverged { .. }) = result {
        let path = a.out.join(DIAGNOSTIC_FILE);
        ck.save(&path)?;
        eprintln!("diagnostic checkpoint written to {}", path.display());
        return Err(e);
    }
    result?;
    let path = a.out.join(CHECKPOINT_FILE);
    ck.save(&path)?;
    eprintln!(
        "iteration {} with {} Gaussians; checkpoint at {}",
        ck.state.iteration,
        ck.state.model.gaussians.len(),
        path.display()
    );
    Ok(())
}

fn load_for_inference(path: &Path) -> Result<Checkpoint> {
    let ck = Checkpoint::load(path)?;
    init_threads(ck.config.threads)?;
    Ok(ck)
}

fn cmd_render(ckpt: &Path, camera: usize, times: &[f64], out: &Path) -> Result<()> {
    let ck = load_for_inference(ckpt)?;
    let cam = ck.rig.cameras.get(camera).ok_or_else(|| {
        Error::Config(format!("camera {camera} out of range ({} cameras)", ck.rig.cameras.len()))
    })?;
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    for (k, &t) in times.iter().enumerate() {
        let path = out.join(format!("c{camera:02}_t{k:03}.ppm"));
        render(&ck.state.model, cam, t)?.write_ppm(&path)?;
        println!("{}\t{t:?}", path.display());
    }
    Ok(())
}

fn cmd_eval(ckpt: Option<&Path>, frames: Option<&Path>, data_dir: &Path, radius: f64) -> Result<()> {
    let ck = ckpt.map(load_for_inference).transpose()?;
    if ck.is_none() {
        init_threads(0)?;
    }
    let data = Dataset::load(data_dir)?;
    let mut cams = data.test_cameras();
    if cams.is_empty() {
        cams = data.train_cameras();
    }
    let loss_cfg = ck.as_ref().map(|c| c.config.fit.loss).unwrap_or_default();
    let (mut p_sum, mut s_sum, mut n) = (0.0, 0.0, 0usize);
    for &c in &cams {
        for k in 0..data.times.len() {
            let frame = match (&ck, frames) {
                (Some(ck), _) => render(&ck.state.model, &data.cameras[c], data.times[k])?,
                (None, Some(dir)) => Frame::read_ppm(Dataset::frame_path(dir, c, k))?,
                (None, None) => unreachable!("clap requires --ckpt or --frames"),
            };
            let gt = data.frame(c, k);
            p_sum += psnr(&frame, gt)?;
            s_sum += ssim(&frame, gt, &loss_cfg)?;
            n += 1;
        }
    }
    println!("psnr\t{:.6}", p_sum / n as f64);
    println!("ssim\t{:.6}", s_sum / n as f64);
    if let Some(ck) = &ck {
        let r = trajectory_rmse(&ck.state.model, &data, radius * data.extent())?;
        println!("trajectory_rmse\t{:.6}", r.rmse);
        println!("trajectory_rmse_relative\t{:.6}", r.relative);
        println!("trajectory_missing\t{}/{}", r.missing, r.samples);
    }
    Ok(())
}

fn cmd_inspect(ckpt: &Path, gaussian: usize, times: &[f64]) -> Result<()> {
    let ck = load_for_inference(ckpt)?;
    let model = &ck.state.model;
    if gaussian >= model.gaussians.len() {
        return Err(Error::Config(format!(
            "Gaussian {gaussian} out of range ({} Gaussians)",
            model.gaussians.len()
        )));
    }
    println!("t\tvisible\tweight\topacity\tmean_x\tmean_y\tmean_z\tcov_xx\tcov_xy\tcov_xz\tcov_yy\tcov_yz\tcov_zz");
    for &t in times {
        match model.slice(gaussian, t)? {
            Some(s) => {
                let c = &s.cov3.0;
                println!(
                    "{t:?}\t1\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}",
                    s.temporal_weight,
                    s.opacity,
                    s.mean3[0],
                    s.mean3[1],
                    s.mean3[2],
                    c[0][0],
                    c[0][1],
                    c[0][2],
                    c[1][1],
                    c[1][2],
                    c[2][2]
                );
            }
            None => println!("{t:?}\t0{}", "\t-".repeat(11)),
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth { spec, out } => cmd_synth(spec, out),
        Command::Fit(a) => cmd_fit(a),
        Command::Render {
            ckpt,
            camera,
            times,
            out,
        } => cmd_render(ckpt, *camera, times, out),
        Command::Eval {
            ckpt,
            frames,
            data,
            radius,
        } => cmd_eval(ckpt.as_deref(), frames.as_deref(), data, *radius),
        Command::Inspect { ckpt, gaussian, times } => cmd_inspect(ckpt, *gaussian, times),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
