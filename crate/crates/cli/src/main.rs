use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use metamorph::config::{FrameInitArg, Mode, SolverConfig};
use metamorph::pipeline::{run, Inputs};

#[derive(Parser)]
#[command(name = "metamorph", version, about = "Geodesic image morphing in deep feature space")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a morphing sequence between two images.
    Run(RunArgs),
    /// Print the effective configuration as JSON and exit.
    Defaults {
        #[arg(long, value_enum, default_value = "rgb")]
        mode: Mode,
        #[command(flatten)]
        params: Params,
    },
}

#[derive(Args)]
struct RunArgs {
    /// First image (PNG).
    image_a: PathBuf,
    /// Second image (PNG).
    image_b: PathBuf,
    /// Output directory.
    #[arg(short, long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "rgb")]
    mode: Mode,
    /// Directory of `level_<M>x<N>_C<C>.mft` tensors for the first image.
    #[arg(long)]
    features_a: Option<PathBuf>,
    /// Directory of `level_<M>x<N>_C<C>.mft` tensors for the second image.
    #[arg(long)]
    features_b: Option<PathBuf>,
    #[command(flatten)]
    params: Params,
}

#[derive(Args)]
struct Params {
    /// Number of time steps.
    #[arg(long = "k", visible_alias = "K")]
    k: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    /// Number of multilevel stages.
    #[arg(long)]
    levels: Option<usize>,
    /// Iterations per level.
    #[arg(long)]
    iters: Option<usize>,
    /// Extrapolation weight.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Weight of the image channels in deep mode.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    xi1: Option<f64>,
    #[arg(long)]
    xi2: Option<f64>,
    /// Feature-only iterations per level before the full scheme (deep mode).
    #[arg(long)]
    warm_iters: Option<usize>,
    /// Initialization of intermediate frames on finer levels (RGB mode).
    #[arg(long, value_enum)]
    frame_init: Option<FrameInitArg>,
}

impl Params {
    fn apply(&self, mode: Mode) -> SolverConfig {
        let mut c = SolverConfig::defaults(mode);
        macro_rules! set {
            ($($field:ident => $target:ident),*) => {
                $(if let Some(v) = self.$field { c.$target = v; })*
            };
        }
        set!(k => k, delta => delta, levels => levels, iters => iterations, beta => beta,
             mu => mu, lambda => lambda, eta => eta, sigma => sigma, rho => rho, xi1 => xi1,
             xi2 => xi2, warm_iters => warm_start_iterations, frame_init => frame_init);
        c
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Defaults { mode, params } => {
            let cfg = params.apply(mode);
            cfg.validate()?;
            println!("{}", serde_json::to_string_pretty(&cfg)?);
        }
        Command::Run(args) => {
            let cfg = args.params.apply(args.mode);
            let inputs = Inputs {
                image_a: args.image_a,
                image_b: args.image_b,
                features_a: args.features_a,
                features_b: args.features_b,
                out_dir: args.out,
            };
            let summary = run(&cfg, &inputs)?;
            println!(
                "E = {:.6e} (sum R = {:.6e}, sum D = {:.6e}), {} skipped steps, min det {:.4}",
                summary.final_energy, summary.regularizer_sum, summary.mismatch_sum, summary.skipped_steps, summary.min_det
            );
        }
    }
    Ok(())
}
