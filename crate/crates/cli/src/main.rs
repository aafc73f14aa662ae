//! `imix`: datasets, training, sweeps and checks from experiment files.
//!
//! Usage errors exit with 2, failed runs or failed checks with 1.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use imix_core::harness::selftest::selftest;
use imix_core::harness::training::{architecture_for, dataset_task, EVAL_SEED_OFFSET};
use imix_core::harness::{
    evaluate, fit, make_training_set, parse_config, read_csv, render_svg_plot, run_sweep, write_csv, Axis, ExperimentConfig,
};
use imix_core::models::{load_checkpoint, load_dataset, save_checkpoint, save_dataset, Architecture, Dataset};
use imix_core::nn::gradcheck::gradient_suite_in;
use imix_core::Error;

/// Pass bound of `gradcheck` in 64-bit mode.
const F64_TOLERANCE: f64 = 1e-4;
/// 32-bit analytic gradients against the 64-bit reference; rounding on
/// near-cancelling sums reaches about 1e-2.
const F32_TOLERANCE: f64 = 5e-2;

#[derive(Parser)]
#[command(name = "imix", version, about = "Interference mitigation experiments on simulated baseband signals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment file.
    #[arg(short = 'c', long = "config")]
    config: PathBuf,
    /// Overrides `experiment.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for every written artifact.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; outputs do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw the configured training set and save it.
    Gen {
        #[command(flatten)]
        common: Common,
    },
    /// Fit the configured network; writes a checkpoint and the loss history.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset written by `gen`; drawn on the fly when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Output checkpoint path.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Per-cell loss and accuracy of a checkpoint on a held-out set.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset written by `gen`; a fresh held-out set is drawn when absent.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Monte Carlo BER sweep; writes the CSV and SVG named in `[output]`.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Confusion matrix of a classifier checkpoint on a held-out set.
    Classify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Render a sweep CSV as SVG.
    Plot {
        /// Take the CSV, SVG, axis and overlay from this experiment file.
        #[arg(short = 'c', long = "config")]
        config: Option<PathBuf>,
        #[arg(long, required_unless_present = "config")]
        csv: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
        /// `es_n0` or `sir`.
        #[arg(long)]
        axis: Option<String>,
        /// Overlay the closed-form QPSK curve.
        #[arg(long)]
        theory: bool,
    },
    /// Finite-difference check of every layer kind and loss.
    Gradcheck {
        /// Run in 64-bit precision.
        #[arg(long = "f64")]
        f64: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Classical receiver checks against closed-form bounds.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        threads: Option<usize>,
    },
}

/// Runtime failure: a message for stderr.
struct Failure(String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(e.to_string())
    }
}

type Outcome = std::result::Result<(), Failure>;

fn set_threads(n: Option<usize>) -> Outcome {
    if let Some(n) = n {
        if n == 0 {
            return Err(Failure("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure(e.to_string()))?;
    }
    Ok(())
}

/// Parsed config with `--seed` applied and relative paths anchored at the
/// config file's directory.
fn load_config(common: &Common) -> std::result::Result<ExperimentConfig, Failure> {
    set_threads(common.threads)?;
    let text = std::fs::read_to_string(&common.config).map_err(|e| Failure(format!("{}: {e}", common.config.display())))?;
    let mut cfg = parse_config(&text).map_err(|e| Failure(format!("{}: {e}", common.config.display())))?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.resolve_paths(common.config.parent().unwrap_or(Path::new(".")));
    Ok(cfg)
}

fn out_dir(common: &Common) -> std::result::Result<PathBuf, Failure> {
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| Failure(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn ensure_parent(path: &Path) -> Outcome {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir).map_err(|e| Failure(format!("{}: {e}", dir.display()))),
        _ => Ok(()),
    }
}

fn stem(cfg: &ExperimentConfig) -> String {
    format!("{}_{}", cfg.scenario_id, cfg.train.task)
}

fn gen(common: &Common) -> Outcome {
    let cfg = load_config(common)?;
    let data = make_training_set(&cfg, cfg.seed)?;
    let path = out_dir(common)?.join(format!("{}.imxd", stem(&cfg)));
    save_dataset(&data, &path)?;
    println!("wrote {} {} examples to {}", data.len(), data.task.name(), path.display());
    Ok(())
}

fn train(common: &Common, data: Option<&Path>, checkpoint: Option<&Path>) -> Outcome {
    let cfg = load_config(common)?;
    let dir = out_dir(common)?;
    let data = match data {
        Some(p) => load_dataset(p)?,
        None => make_training_set(&cfg, cfg.seed)?,
    };
    println!("training {} on {} examples ({} epochs)", architecture_for(&cfg)?.kind(), data.len(), cfg.train.epochs);
    let (model, report) = fit(&cfg, &data, &mut |e| {
        println!("epoch {:>3}  train {:.6e}  val {:.6e}  lr {:.1e}", e.epoch, e.train_loss, e.val_loss, e.lr);
    })?;
    let ckpt = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| dir.join(format!("{}.imx", stem(&cfg))));
    ensure_parent(&ckpt)?;
    save_checkpoint(&model, &ckpt)?;
    let loss_csv = dir.join(format!("{}_loss.csv", stem(&cfg)));
    report.write_csv(&loss_csv)?;
    println!("wrote {} and {}", ckpt.display(), loss_csv.display());
    Ok(())
}

/// Held-out set: the given file, or a fresh draw away from the training seed.
fn held_out(cfg: &ExperimentConfig, data: Option<&Path>) -> std::result::Result<Dataset, Failure> {
    Ok(match data {
        Some(p) => load_dataset(p)?,
        None => make_training_set(cfg, cfg.seed.wrapping_add(EVAL_SEED_OFFSET))?,
    })
}

fn load_matching(cfg: &ExperimentConfig, path: &Path) -> std::result::Result<imix_core::nn::Model<f32>, Failure> {
    let model = load_checkpoint(path).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    let have = Architecture::parse(model.config())?;
    let want = architecture_for(cfg)?;
    if have.kind() != want.kind() {
        return Err(Failure(format!(
            "{} holds a {} network; task {} needs a {}",
            path.display(),
            have.kind(),
            cfg.train.task,
            want.kind()
        )));
    }
    Ok(model)
}

fn eval(common: &Common, checkpoint: &Path, data: Option<&Path>) -> Outcome {
    let cfg = load_config(common)?;
    let model = load_matching(&cfg, checkpoint)?;
    let summary = evaluate(&model, &held_out(&cfg, data)?, cfg.train.batch)?;
    for r in &summary.rows {
        let acc = r.accuracy.map_or(String::new(), |a| format!("  accuracy {a:.4}"));
        println!("es_n0 {:>6} dB  sir {:>6} dB  n {:>5}  loss {:.6e}{acc}", r.es_n0_db, r.sir_db, r.n, r.loss);
    }
    if let Some(a) = summary.accuracy() {
        println!("overall accuracy {a:.4}");
    }
    let path = out_dir(common)?.join(format!("{}_eval.csv", stem(&cfg)));
    std::fs::write(&path, summary.to_csv()).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn classify(common: &Common, checkpoint: &Path) -> Outcome {
    let cfg = load_config(common)?;
    let task = dataset_task(cfg.train.task);
    if !task.is_classification() {
        return Err(Failure(format!("train.task {} is not a classification task", cfg.train.task)));
    }
    let model = load_matching(&cfg, checkpoint)?;
    let summary = evaluate(&model, &held_out(&cfg, None)?, cfg.train.batch)?;
    let labels = task.labels();
    let width = labels.iter().map(|l| l.len()).max().unwrap_or(0).max(5);
    print!("{:>width$} |", "true");
    for l in labels {
        print!(" {l:>width$}");
    }
    println!();
    let mut csv = String::from("true,predicted,count\n");
    for (t, row) in summary.confusion.iter().enumerate() {
        print!("{:>width$} |", labels[t]);
        for (p, n) in row.iter().enumerate() {
            print!(" {n:>width$}");
            csv.push_str(&format!("{},{},{n}\n", labels[t], labels[p]));
        }
        println!();
    }
    println!("accuracy {:.4}", summary.accuracy().unwrap_or(0.0));
    let path = out_dir(common)?.join(format!("{}_confusion.csv", stem(&cfg)));
    std::fs::write(&path, csv).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    Ok(())
}

fn sweep(common: &Common) -> Outcome {
    let cfg = load_config(common)?;
    let records = run_sweep(&cfg)?;
    let (mut csv, mut svg) = (cfg.output.csv.clone(), cfg.output.svg.clone());
    if common.out.is_some() {
        let dir = out_dir(common)?;
        csv = dir.join(csv.file_name().expect("csv path has a file name"));
        svg = dir.join(svg.file_name().expect("svg path has a file name"));
    }
    for r in &records {
        println!("{:<12} es_n0 {:>5} sir {:>5}  ber {:.4e}  rmse {:.4}  ({} bits)", r.method, r.es_n0_db, r.sir_db, r.ber, r.rmse, r.bits);
    }
    for p in [&csv, &svg] {
        ensure_parent(p)?;
    }
    write_csv(&records, &csv).map_err(|e| Failure(format!("{}: {e}", csv.display())))?;
    render_svg_plot(&records, cfg.output.axis, cfg.output.theory, &svg).map_err(|e| Failure(format!("{}: {e}", svg.display())))?;
    println!("wrote {} and {}", csv.display(), svg.display());
    Ok(())
}

fn plot(config: Option<&Path>, csv: Option<&Path>, svg: Option<&Path>, axis: Option<&str>, theory: bool) -> Outcome {
    let cfg = match config {
        Some(p) => Some(load_config(&Common { config: p.to_path_buf(), seed: None, out: None, threads: None })?),
        None => None,
    };
    let csv = csv.map(Path::to_path_buf).or_else(|| cfg.as_ref().map(|c| c.output.csv.clone())).expect("clap requires one");
    let svg =
        svg.map(Path::to_path_buf).or_else(|| cfg.as_ref().map(|c| c.output.svg.clone())).unwrap_or_else(|| csv.with_extension("svg"));
    let axis = match (axis, &cfg) {
        (Some(a), _) => a.parse::<Axis>()?,
        (None, Some(c)) => c.output.axis,
        (None, None) => Axis::EsN0,
    };
    let theory = theory || cfg.as_ref().is_some_and(|c| c.output.theory);
    let records = read_csv(&csv).map_err(|e| Failure(format!("{}: {e}", csv.display())))?;
    ensure_parent(&svg)?;
    render_svg_plot(&records, axis, theory, &svg).map_err(|e| Failure(format!("{}: {e}", svg.display())))?;
    println!("wrote {}", svg.display());
    Ok(())
}

fn gradcheck(f64_mode: bool, seed: u64) -> Outcome {
    let (reports, tol) =
        if f64_mode { (gradient_suite_in::<f64>(seed)?, F64_TOLERANCE) } else { (gradient_suite_in::<f32>(seed)?, F32_TOLERANCE) };
    println!("{} precision, tolerance {tol:e}", if f64_mode { "64-bit" } else { "32-bit" });
    let mut failed = 0;
    for (kind, r) in &reports {
        let ok = r.max_rel_error < tol;
        failed += !ok as usize;
        println!("{kind:<20} max rel error {:.3e}  over {:>3} coords  {}", r.max_rel_error, r.checked, if ok { "ok" } else { "FAIL" });
    }
    if failed > 0 {
        return Err(Failure(format!("{failed} gradient checks above {tol:e}")));
    }
    Ok(())
}

fn run_selftest(seed: u64, threads: Option<usize>) -> Outcome {
    set_threads(threads)?;
    let checks = selftest(seed)?;
    for c in &checks {
        println!("{} {:<10} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Failure(format!("{failed} of {} checks failed", checks.len())));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Gen { common } => gen(common),
        Command::Train { common, data, checkpoint } => train(common, data.as_deref(), checkpoint.as_deref()),
        Command::Eval { common, checkpoint, data } => eval(common, checkpoint, data.as_deref()),
        Command::Sweep { common } => sweep(common),
        Command::Classify { common, checkpoint } => classify(common, checkpoint),
        Command::Plot { config, csv, svg, axis, theory } => {
            plot(config.as_deref(), csv.as_deref(), svg.as_deref(), axis.as_deref(), *theory)
        }
        Command::Gradcheck { f64, seed } => gradcheck(*f64, *seed),
        Command::Selftest { seed, threads } => run_selftest(*seed, *threads),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
