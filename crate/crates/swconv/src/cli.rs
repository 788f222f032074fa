//! `swconv` commands. [`run`] returns the process exit code:
//! 0 success, 1 usage or parse error, 2 infeasible plan, 3 failed check or
//! runtime error.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use swconv_core::cost::{field_of_view, SpeedupBaseline};
use swconv_core::error::Infeasibility;
use swconv_core::layers::PoolMode;
use swconv_core::network::{NetworkSpec, Weights};
use swconv_core::parallel::Threads;
use swconv_core::planner::{optimize_at, optimize_plan, pipeline_plan, ExecutionPlan, PlanRunner};
use swconv_core::{Real, Shape5, Tensor5};

use crate::checks;
use crate::config::{parse_size, ConfigError, Precision, RunConfig};
use crate::netfile::{bundled, parse_network};
use crate::timing::measure;
use crate::weights::{random_weights, read_weights};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_FAILED: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "swconv", version, about = "Sliding-window 3D ConvNet inference planner and benchmark")]
pub struct Cli {
    #[command(flatten)]
    pub opts: Opts,
    #[command(subcommand)]
    pub command: Command,
}

/// Every option can also be set through `SWCONV_<NAME>` or a TOML file.
#[derive(Args, Debug, Default)]
pub struct Opts {
    /// Network description file, or a bundled name (n337, n537, n726, n926).
    #[arg(long, global = true, env = "SWCONV_NET")]
    pub net: Option<String>,
    /// TOML file with run settings; flags and environment override it.
    #[arg(long, global = true, env = "SWCONV_CONFIG")]
    pub config: Option<PathBuf>,
    /// Weight file (SWW1); random weights from --seed otherwise.
    #[arg(long, global = true, env = "SWCONV_WEIGHTS")]
    pub weights: Option<PathBuf>,
    /// Host memory cap in scalars (K/M/G suffixes).
    #[arg(long, global = true, env = "SWCONV_HOST_MEM", value_parser = parse_size)]
    pub host_mem: Option<usize>,
    /// Device memory cap in scalars; enables the device domain.
    #[arg(long, global = true, env = "SWCONV_DEV_MEM", value_parser = parse_size)]
    pub dev_mem: Option<usize>,
    #[arg(long, global = true, env = "SWCONV_HOST_FLOPS")]
    pub host_flops: Option<f64>,
    #[arg(long, global = true, env = "SWCONV_DEV_FLOPS")]
    pub dev_flops: Option<f64>,
    /// Host/device bandwidth in scalars per second.
    #[arg(long, global = true, env = "SWCONV_TRANSFER_RATE")]
    pub transfer_rate: Option<f64>,
    /// Transform workspace reserved by the staged primitives (K/M/G).
    #[arg(long, global = true, env = "SWCONV_OVERHEAD_CAP", value_parser = parse_size)]
    pub overhead_cap: Option<usize>,
    #[arg(long, global = true, env = "SWCONV_MAX_EXTENT")]
    pub max_extent: Option<usize>,
    #[arg(long, global = true, env = "SWCONV_BATCH")]
    pub batch: Option<usize>,
    /// Search anisotropic inputs on a grid of this step.
    #[arg(long, global = true, env = "SWCONV_ANISOTROPIC_STEP")]
    pub anisotropic_step: Option<usize>,
    /// 32 or 64.
    #[arg(long, global = true, env = "SWCONV_PRECISION", value_parser = parse_precision)]
    pub precision: Option<Precision>,
    #[arg(long, global = true, env = "SWCONV_WORKERS")]
    pub workers: Option<usize>,
    #[arg(long, global = true, env = "SWCONV_SEED")]
    pub seed: Option<u64>,
    /// Write CSV here instead of standard output.
    #[arg(long, global = true, env = "SWCONV_CSV")]
    pub csv: Option<PathBuf>,
}

fn parse_precision(s: &str) -> Result<Precision, String> {
    Precision::try_from(s.parse::<u32>().map_err(|_| format!("'{s}' is not 32 or 64"))?)
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the oracle checks; exit 0 iff all pass.
    Verify,
    /// Search for the fastest plan and print it.
    Plan {
        /// Restrict the search to host/device producer-consumer pipelines.
        #[arg(long)]
        pipeline: bool,
    },
    /// Time the best plan at each input extent and emit CSV.
    Bench {
        /// Smallest extent; the field of view by default.
        #[arg(long)]
        min_extent: Option<usize>,
        #[arg(long, default_value_t = 1)]
        step: usize,
        /// Timed runs per extent (after one warm-up); the median is reported.
        #[arg(long, default_value_t = 5)]
        runs: usize,
    },
    /// Modeled speedup against memory for several batch sizes, as CSV.
    Speedup {
        #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
        batches: Vec<usize>,
        #[arg(long, value_enum, default_value_t = Baseline::Fft)]
        baseline: Baseline,
    },
    /// Print the field of view.
    Fov,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Baseline {
    Fft,
    Direct,
}

/// A failure carrying its exit code.
struct Exit(i32, String);

impl From<ConfigError> for Exit {
    fn from(e: ConfigError) -> Self {
        Exit(EXIT_USAGE, e.to_string())
    }
}

impl From<Infeasibility> for Exit {
    fn from(e: Infeasibility) -> Self {
        Exit(EXIT_INFEASIBLE, format!("infeasible: {e}"))
    }
}

impl From<swconv_core::Error> for Exit {
    fn from(e: swconv_core::Error) -> Self {
        match e {
            swconv_core::Error::Infeasible(i) => i.into(),
            e => Exit(EXIT_FAILED, e.to_string()),
        }
    }
}

impl From<std::io::Error> for Exit {
    fn from(e: std::io::Error) -> Self {
        Exit(EXIT_FAILED, e.to_string())
    }
}

impl From<csv::Error> for Exit {
    fn from(e: csv::Error) -> Self {
        Exit(EXIT_FAILED, e.to_string())
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(Exit(code, msg)) => {
            let _ = writeln!(err, "swconv: {msg}");
            code
        }
    }
}

fn config(opts: &Opts) -> Result<RunConfig, Exit> {
    let mut c = match &opts.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    macro_rules! take {
        ($($field:ident),*) => { $(if let Some(v) = opts.$field { c.$field = v; })* };
    }
    take!(host_mem, host_flops, dev_flops, transfer_rate, overhead_cap, batch, precision, workers, seed);
    if opts.dev_mem.is_some() {
        c.dev_mem = opts.dev_mem;
    }
    if opts.max_extent.is_some() {
        c.max_extent = opts.max_extent;
    }
    if opts.anisotropic_step.is_some() {
        c.anisotropic_step = opts.anisotropic_step;
    }
    c.validate()?;
    Ok(c)
}

fn network(opts: &Opts) -> Result<NetworkSpec, Exit> {
    let name = opts.net.as_deref().ok_or_else(|| Exit(EXIT_USAGE, "this command needs --net".into()))?;
    let path = std::path::Path::new(name);
    if path.exists() {
        let text = std::fs::read_to_string(path).map_err(|e| Exit(EXIT_USAGE, format!("{name}: {e}")))?;
        parse_network(&text).map_err(|e| Exit(EXIT_USAGE, format!("{name}: {e}")))
    } else {
        bundled(name).ok_or_else(|| Exit(EXIT_USAGE, format!("{name}: no such file or bundled network")))
    }
}

fn weights(opts: &Opts, net: &NetworkSpec, seed: u64) -> Result<Weights<f64>, Exit> {
    match &opts.weights {
        Some(p) => {
            let f = std::fs::File::open(p).map_err(|e| Exit(EXIT_USAGE, format!("{}: {e}", p.display())))?;
            read_weights(net, std::io::BufReader::new(f)).map_err(|e| Exit(EXIT_USAGE, format!("{}: {e}", p.display())))
        }
        None => Ok(random_weights(net, seed)),
    }
}

fn csv_sink<'a>(opts: &Opts, out: &'a mut dyn Write) -> Result<csv::Writer<Box<dyn Write + 'a>>, Exit> {
    let sink: Box<dyn Write + 'a> = match &opts.csv {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(out),
    };
    Ok(csv::Writer::from_writer(sink))
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), Exit> {
    let opts = &cli.opts;
    let cfg = config(opts)?;
    match &cli.command {
        Command::Verify => verify(&cfg, out),
        Command::Fov => {
            let fov = field_of_view(&network(opts)?);
            writeln!(out, "{} {} {}", fov[0], fov[1], fov[2])?;
            Ok(())
        }
        Command::Plan { pipeline } => {
            let net = network(opts)?;
            let search = cfg.search(field_of_view(&net).into_iter().max().unwrap());
            let domains = cfg.domains();
            let plan = if *pipeline {
                pipeline_plan(&net, &domains, &search)?
            } else {
                optimize_plan(&net, &domains, &search)?
            };
            let text = plan.to_string();
            write!(out, "{text}")?;
            if !text.ends_with('\n') {
                writeln!(out)?;
            }
            writeln!(out, "{}", plan_record(&plan))?;
            Ok(())
        }
        Command::Speedup { batches, baseline } => {
            let net = network(opts)?;
            let fov = field_of_view(&net);
            let max = cfg.max_extent.unwrap_or(fov[0] + 64);
            let baseline = match baseline {
                Baseline::Fft => SpeedupBaseline::Fft,
                Baseline::Direct => SpeedupBaseline::Direct,
            };
            let mut w = csv_sink(opts, out)?;
            w.write_record(["memory_required", "batch", "speedup", "input_extent"])?;
            for &s in batches {
                for n in fov[0] + 1..=max {
                    let Ok(sp) = swconv_core::cost::theoretical_speedup(&net, n, s, cfg.fft_constant, baseline) else {
                        continue;
                    };
                    let m = swconv_core::cost::network_memory(&net, n, s)?;
                    w.write_record([format!("{m}"), s.to_string(), format!("{sp:.6}"), n.to_string()])?;
                }
            }
            w.flush()?;
            Ok(())
        }
        Command::Bench { min_extent, step, runs } => {
            let net = network(opts)?;
            let w = weights(opts, &net, cfg.seed)?;
            match cfg.precision {
                Precision::F32 => bench::<f32>(&net, &w.cast(), &cfg, opts, *min_extent, *step, *runs, out),
                Precision::F64 => bench::<f64>(&net, &w, &cfg, opts, *min_extent, *step, *runs, out),
            }
        }
    }
}

/// One JSON line describing `plan`.
pub fn plan_record(plan: &ExecutionPlan) -> serde_json::Value {
    let i = plan.input;
    json!({
        "strategy": format!("{:?}", plan.strategy),
        "input": [i.s, i.f, i.x, i.y, i.z],
        "pool_modes": plan.pool_modes.iter().map(|m| match m {
            PoolMode::Plain => "plain",
            PoolMode::Fragments => "mpf",
        }).collect::<Vec<_>>(),
        "theta": plan.theta,
        "tail_batch": plan.tail_batch,
        "seconds": plan.seconds(),
        "voxels": plan.voxels(),
        "voxels_per_second": plan.throughput(),
        "host_peak": plan.host_peak,
        "device_peak": plan.device_peak,
        "layers": plan.layers.iter().map(|l| json!({
            "layer": l.layer,
            "kind": l.kind.name(),
            "domain": l.domain.name(),
            "seconds": l.seconds(),
            "memory": l.memory,
            "blocks": l.blocks.len(),
        })).collect::<Vec<_>>(),
    })
}

#[allow(clippy::too_many_arguments)]
fn bench<T: Real>(
    net: &NetworkSpec,
    weights: &Weights<T>,
    cfg: &RunConfig,
    opts: &Opts,
    min_extent: Option<usize>,
    step: usize,
    runs: usize,
    out: &mut dyn Write,
) -> Result<(), Exit> {
    let fov = field_of_view(net).into_iter().max().unwrap();
    let max = cfg.max_extent.unwrap_or(fov + 64);
    let domains = cfg.domains();
    let par = Threads::new(cfg.workers);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w = csv_sink(opts, out)?;
    let mut header = vec!["input_extent".to_string(), "memory_model".into(), "memory_audited".into(), "voxels_per_sec".into()];
    header.extend(net.layers.iter().enumerate().map(|(i, _)| format!("layer{i}_ms")));
    w.write_record(&header)?;
    let mut rows = 0;
    let mut last_err = None;
    for n in (min_extent.unwrap_or(fov)..=max).step_by(step.max(1)) {
        let input = Shape5::cube(cfg.batch, net.input_features, n)?;
        let plan = match optimize_at(net, &domains, input) {
            Ok(p) => p,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let runner = PlanRunner::new(&plan, net, weights, &domains.host, domains.device.as_ref(), &par)?;
        let x: Tensor5<T> = Tensor5::from_fn(input, |_| T::from_f64(rng.gen_range(-1.0..1.0)));
        let report = measure(&runner, &x, 1, runs, domains.device.is_some())?;
        let mut row = vec![
            n.to_string(),
            format!("{}", plan.host_peak),
            runner.peaks().0.to_string(),
            format!("{:.1}", report.voxels_per_second),
        ];
        row.extend(report.breakdown.iter().map(|(_, s)| format!("{:.3}", s * 1e3)));
        w.write_record(&row)?;
        w.flush()?;
        rows += 1;
    }
    match (rows, last_err) {
        (0, Some(e)) => Err(e.into()),
        _ => Ok(()),
    }
}

fn verify(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), Exit> {
    let seed = cfg.seed;
    let n726 = bundled("n726").expect("bundled");
    let results = [
        ("fft matches dense DFT", checks::fft_matches_dense_dft(seed, 40)),
        ("conv primitives agree", checks::conv_primitives_agree(seed, 15)),
        ("sliding-window equivalence", checks::sliding_window_equivalence(seed)),
        ("memory model fidelity", checks::memory_model_fidelity(seed, 6)),
        ("pruned FFT cost", checks::pruned_fft_cost()),
        ("batch 1 dominates (n726)", checks::batch_one_dominates(&n726, 300)),
        ("planner matches exhaustive search", checks::planner_matches_exhaustive(seed, 4, 20)),
    ];
    let mut all = true;
    for (name, r) in &results {
        all &= r.passed;
        writeln!(out, "{} {name}: {}", if r.passed { "PASS" } else { "FAIL" }, r.detail)?;
    }
    writeln!(out, "seed {seed}: {}", if all { "all checks passed" } else { "some checks failed" })?;
    if all {
        Ok(())
    } else {
        Err(Exit(EXIT_FAILED, "verification failed".into()))
    }
}
