//! `baryflow` command-line front end.

mod commands;
mod config;
mod error;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use baryflow::datasets::GeneratorKind;
use baryflow::metrics::SinkhornConfig;
use clap::{Args, Parser, Subcommand};

use crate::commands::Overrides;
use crate::config::{DataSource, RunConfig};
use crate::error::CliError;

#[derive(Parser)]
#[command(
    name = "baryflow",
    version,
    about = "Fit and apply maps from several classes to their shared barycenter"
)]
struct Cli {
    /// Worker threads; 0 uses every core. Results are deterministic for any value.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Sinkhorn regularisation for evaluation.
    #[arg(long)]
    eps: Option<f64>,
    /// Sinkhorn iteration cap for evaluation.
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a flow; writes model.json, metrics.csv and (with tracing) trace.csv.
    Fit {
        #[command(flatten)]
        run: RunArgs,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Record metrics after every layer.
        #[arg(long)]
        trace: bool,
    },
    /// Map points of one class into the shared space, or back with --inverse.
    Transform {
        #[arg(long)]
        model: PathBuf,
        /// CSV of points, one per row, no label column.
        #[arg(long)]
        input: PathBuf,
        /// Class label.
        #[arg(long, allow_hyphen_values = true)]
        class: i64,
        #[arg(long)]
        inverse: bool,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Translate points from one class to another.
    Flip {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        from: i64,
        #[arg(long, allow_hyphen_values = true)]
        to: i64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Transportation cost and pairwise flip distance on labelled test data.
    Eval {
        #[arg(long)]
        model: PathBuf,
        /// Labelled CSV (coordinates then label).
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        #[arg(long, default_value_t = 100)]
        max_iter: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic dataset as labelled CSV.
    Generate {
        /// Config file providing the dataset keys.
        #[arg(long)]
        config: Option<PathBuf>,
        /// moons, circles, random_pattern or gaussians.
        #[arg(long)]
        kind: Option<GeneratorKind>,
        /// Training points per class.
        #[arg(long)]
        n: Option<usize>,
        /// Test points per class.
        #[arg(long)]
        n_test: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        test_out: Option<PathBuf>,
    },
    /// Per-layer WD and TC on held-out data.
    Trace {
        #[command(flatten)]
        run: RunArgs,
        /// Output CSV; defaults to trace.csv in the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export original, latent and flipped samples for plotting.
    PlotData {
        #[arg(long)]
        model: PathBuf,
        /// Labelled CSV.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also draw an SVG scatter (2D data only).
        #[arg(long)]
        svg: Option<PathBuf>,
    },
}

impl RunArgs {
    fn load(&self, out: Option<PathBuf>, trace: bool) -> Result<RunConfig, CliError> {
        let o = Overrides {
            seed: self.seed,
            eps: self.eps,
            max_iter: self.max_iter,
            out,
            trace,
        };
        commands::load_config(&self.config, &o)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot start thread pool: {e}")))?;
    match cli.command {
        Command::Fit { run, out, trace } => commands::fit(&run.load(out, trace)?),
        Command::Trace { run, out } => {
            let cfg = run.load(None, true)?;
            commands::trace(&cfg, out.as_deref())
        }
        Command::Transform {
            model,
            input,
            class,
            inverse,
            out,
        } => commands::transform(&model, &input, class, inverse, out.as_deref()),
        Command::Flip {
            model,
            input,
            from,
            to,
            out,
        } => commands::flip(&model, &input, from, to, out.as_deref()),
        Command::Eval {
            model,
            test,
            eps,
            max_iter,
            out,
        } => commands::eval(
            &model,
            &test,
            &SinkhornConfig::new(eps, max_iter),
            out.as_deref(),
        ),
        Command::Generate {
            config,
            kind,
            n,
            n_test,
            k,
            noise,
            seed,
            out,
            test_out,
        } => {
            let mut cfg = match &config {
                Some(p) => RunConfig::load(p)?,
                None => RunConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            match &mut cfg.data {
                DataSource::Generator {
                    kind: ck,
                    n_train,
                    n_test: nt,
                    k: ck_k,
                    noise: cn,
                    seed: cs,
                    ..
                } => {
                    if let Some(v) = kind {
                        *ck = v;
                    }
                    if n.is_some() {
                        *n_train = n;
                    }
                    if n_test.is_some() {
                        *nt = n_test;
                    }
                    if k.is_some() {
                        *ck_k = k;
                    }
                    if noise.is_some() {
                        *cn = noise;
                    }
                    if seed.is_some() {
                        *cs = seed;
                    }
                }
                DataSource::Csv { .. } => {
                    return Err(CliError::Usage(
                        "generate needs a generator config, not CSV input".into(),
                    ));
                }
            }
            if test_out.is_none() && n_test.is_none() {
                if let DataSource::Generator { n_test, .. } = &mut cfg.data {
                    *n_test = Some(0);
                }
            }
            commands::generate(&cfg, &out, test_out.as_deref())
        }
        Command::PlotData {
            model,
            data,
            out,
            svg,
        } => commands::plot_data(&model, &data, &out, svg.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
