use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bmssl_core::checkpoint::Checkpoint;
use bmssl_core::config::RunConfig;
use bmssl_core::harness::{self, AblationKind, Benchmark, GradcheckScale};
use bmssl_core::metrics::MetricsWriter;
use bmssl_core::{synth, Error};
use clap::{Args, Parser, Subcommand, ValueEnum};

const EXIT_VALIDATION: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_NON_FINITE: u8 = 4;
const EXIT_GRADCHECK: u8 = 5;

#[derive(Parser)]
#[command(name = "bmssl", version, about = "Bootstrapped meta self-supervised learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

macro_rules! run_flags {
    ($($field:ident => $help:literal),* $(,)?) => {
        /// Run settings. A `--config` file is applied first, flags override it.
        #[derive(Args, Debug, Default)]
        struct RunFlags {
            /// File of `key = value` lines
            #[arg(long, value_name = "PATH")]
            config: Option<PathBuf>,
            $(
                #[doc = $help]
                #[arg(long, value_name = "VALUE", allow_hyphen_values = true)]
                $field: Option<String>,
            )*
        }

        impl RunFlags {
            fn overrides(&self) -> Vec<(&'static str, &str)> {
                let mut v = Vec::new();
                $(
                    if let Some(x) = &self.$field {
                        v.push((stringify!($field), x.as_str()));
                    }
                )*
                v
            }
        }
    };
}

run_flags! {
    mode => "scratch, metric-only, metassl or bmssl",
    n => "Images per task batch",
    k => "Images per pseudo-class",
    m => "Views per image",
    m1 => "Support views per image",
    inner_steps => "Inner adaptation steps",
    delta => "Extra bootstrap steps for the target",
    alpha => "Inner learning rate",
    beta => "Meta learning rate",
    lambda => "Contrastive loss weight",
    tau => "Contrastive temperature",
    level => "Augmentation level A1..A4",
    meta_gradient => "exact or first-order",
    meta_steps => "Meta steps to run",
    hidden => "Hidden width",
    projection => "Projection width",
    eval_way => "Evaluation classes per episode",
    eval_shot => "Evaluation support images per class",
    eval_query => "Evaluation query images per class",
    eval_episodes => "Evaluation episodes",
    eval_steps => "Evaluation adaptation steps",
    eval_every => "Evaluate every this many meta steps, 0 for the end only",
    eval_fraction => "Share of latent classes held out for evaluation",
    seed => "Run seed",
    split_seed => "Train/eval split seed",
    wallclock => "Record elapsed time (true/false)",
    data => "Dataset file",
    out => "Output directory",
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Scale {
    Tiny,
    Small,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic image dataset
    GenData {
        #[arg(long, default_value_t = harness::DEFAULT_CLASSES)]
        classes: usize,
        #[arg(long, default_value_t = harness::DEFAULT_PER_CLASS)]
        per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "data.bmsd")]
        out: PathBuf,
    },
    /// Meta-train and write metrics.csv and checkpoint.bmsl
    Train(RunFlags),
    /// Few-shot evaluation of a checkpoint
    Eval {
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Compare analytic gradients with central differences
    Gradcheck {
        #[arg(long, value_enum, default_value_t = Scale::Tiny)]
        scale: Scale,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scale the named check's analytic gradient by 1.01
        #[arg(long, value_name = "CHECK")]
        corrupt: Option<String>,
    },
    /// Spectrum and minimax gaps of a random positive-pair chain
    SpectralDemo {
        #[arg(long, default_value_t = 8)]
        views: usize,
        #[arg(long, default_value_t = 3)]
        sources: usize,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "spectral")]
        out: PathBuf,
    },
    /// Sweep delta, augmentation level or training structure
    Ablate {
        /// delta, augmentation or structure
        #[arg(long)]
        sweep: String,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Loss change after one bootstrapped step against its KL prediction
    Probe {
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, value_delimiter = ',', default_value = "1e-2,1e-3,1e-4")]
        betas: Vec<f64>,
        #[command(flatten)]
        flags: RunFlags,
    },
}

enum Failure {
    Core(Error),
    Gradcheck,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn io(path: &Path, source: std::io::Error) -> Failure {
    Failure::Core(Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn resolve(mut config: RunConfig, flags: &RunFlags) -> CliResult<RunConfig> {
    if let Some(path) = &flags.config {
        config = RunConfig::load(path)?;
    }
    for (key, value) in flags.overrides() {
        config.set(key, value)?;
    }
    config.validate()?;
    Ok(config)
}

fn benchmark(config: &RunConfig) -> CliResult<Benchmark> {
    if !config.data.exists() && config.data == RunConfig::default().data {
        eprintln!("{} not found, using the built-in synthetic dataset", config.data.display());
        return Ok(Benchmark::default_synthetic(config)?);
    }
    let ds = synth::load(&config.data)?;
    Ok(Benchmark::from_dataset(&ds, config)?)
}

fn out_dir(dir: &Path) -> CliResult<&Path> {
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    Ok(dir)
}

fn write(path: &Path, text: &str) -> CliResult {
    std::fs::write(path, text).map_err(|e| io(path, e))
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::GenData {
            classes,
            per_class,
            seed,
            out,
        } => {
            let ds = synth::generate(classes, per_class, seed)?;
            synth::save(&ds, &out)?;
            println!(
                "wrote {} images ({classes} classes) to {}, nearest-centroid accuracy {:.4}",
                ds.len(),
                out.display(),
                synth::nearest_centroid_loo_accuracy(&ds)
            );
        }
        Command::Train(flags) => {
            let config = resolve(RunConfig::default(), &flags)?;
            let bench = benchmark(&config)?;
            let dir = out_dir(&config.out)?;
            let mut metrics = MetricsWriter::create(&dir.join("metrics.csv"))?;
            let out = harness::train(&config, &bench, Some(&mut metrics))?;
            out.checkpoint.save(&dir.join("checkpoint.bmsl"))?;
            write(&dir.join("config.txt"), &config.to_text())?;
            print!(
                "{} {} steps, accuracy {:.4}",
                config.mode,
                out.checkpoint.meta_step,
                out.final_accuracy
            );
            if config.wallclock && out.checkpoint.meta_step > 0 {
                print!(", {:.2} steps/s", out.steps_per_second());
            }
            println!(", outputs in {}", dir.display());
        }
        Command::Eval { checkpoint, flags } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let config = resolve(ckpt.config.clone(), &flags)?;
            let bench = benchmark(&config)?;
            let report = harness::evaluate_config(&ckpt.params, &config, &bench.eval)?;
            println!(
                "{}-way {}-shot accuracy {:.4} over {} episodes",
                config.eval_way,
                config.eval_shot,
                report.mean_accuracy,
                report.accuracies.len()
            );
        }
        Command::Gradcheck { scale, seed, corrupt } => {
            let scale = match scale {
                Scale::Tiny => GradcheckScale::Tiny,
                Scale::Small => GradcheckScale::Small,
            };
            let report = harness::gradcheck(scale, seed, corrupt.as_deref())?;
            if let Some(name) = &corrupt {
                if !report.results.iter().any(|r| &r.name == name) {
                    return Err(Error::Validation(format!("unknown check {name:?}")).into());
                }
            }
            print!("{}", report.to_text());
            if !report.passed() {
                return Err(Failure::Gradcheck);
            }
        }
        Command::SpectralDemo {
            views,
            sources,
            d,
            samples,
            seed,
            out,
        } => {
            let demo = harness::spectral_demo(views, sources, d, samples, seed)?;
            let dir = out_dir(&out)?;
            write(&dir.join("spectrum.csv"), &demo.spectrum_csv())?;
            write(&dir.join("gaps.csv"), &demo.gaps_csv())?;
            let r = &demo.report;
            println!(
                "eigen gap {:.6e}, smallest of {samples} random gaps {:.6e}, eigen subspace {}{}",
                r.eigen_gap,
                r.min_random_gap(),
                if r.eigen_is_optimal(1e-9) { "optimal" } else { "NOT optimal" },
                if demo.degenerate_split { " (degenerate split)" } else { "" }
            );
        }
        Command::Ablate { sweep, flags } => {
            let kind: AblationKind = sweep.parse()?;
            let config = resolve(RunConfig::default(), &flags)?;
            let bench = benchmark(&config)?;
            let cells = harness::ablate(kind, &config, &bench)?;
            let csv = harness::ablation_csv(kind, &cells);
            let dir = out_dir(&config.out)?;
            write(&dir.join(format!("ablation-{sweep}.csv")), &csv)?;
            print!("{csv}");
        }
        Command::Probe { episodes, betas, flags } => {
            let config = resolve(RunConfig::default(), &flags)?;
            let bench = benchmark(&config)?;
            let probes = harness::descent_probe(&config, &bench, episodes, &betas)?;
            let dir = out_dir(&config.out)?;
            write(&dir.join("probe.csv"), &harness::probe_csv(&probes))?;
            for (i, beta) in betas.iter().enumerate() {
                let rows = probes.iter().map(|p| p.rows[i]);
                let descents = rows.clone().filter(|r| r.change <= 1e-8).count();
                let within = rows.filter(|r| (0.5..=2.0).contains(&(r.change / r.predicted))).count();
                println!("beta {beta:e}: descent {descents}/{episodes}, within a factor of 2 {within}/{episodes}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Gradcheck) => {
            eprintln!("gradient check failed");
            ExitCode::from(EXIT_GRADCHECK)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Io { .. } => EXIT_IO,
                Error::NonFinite(_) => EXIT_NON_FINITE,
                _ => EXIT_VALIDATION,
            })
        }
    }
}
