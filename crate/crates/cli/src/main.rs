mod commands;
mod output;
mod quicklook;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "obsum",
    version,
    about = "Object-based spatial unmixing for spatiotemporal image fusion"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "OBSUM_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Predict the fine image at the coarse image's date.
    Fuse(FuseArgs),
    /// Degrade a fine image to coarse resolution by block averaging.
    Simulate(SimulateArgs),
    /// Score a prediction against a reference image.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic scene with known truth.
    Synth(SynthArgs),
    /// Write an 8-bit PNG composite of three bands.
    Quicklook(QuicklookArgs),
    /// Residual maps and correlations explaining the compensation stages.
    Diagnose(DiagnoseArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Csv,
    Json,
}

/// Parameter overrides shared by commands that run the pipeline.
#[derive(Args, Debug, Default)]
struct FusionFlags {
    /// TOML config file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Coarse-to-fine pixel size ratio.
    #[arg(long)]
    scale: Option<usize>,
    /// Number of k-means classes.
    #[arg(long)]
    classes: Option<usize>,
    /// Unmixing window size in coarse pixels (odd).
    #[arg(long)]
    window: Option<usize>,
    /// Similar-pixel window size in fine pixels (odd).
    #[arg(long)]
    sim_window: Option<usize>,
    /// Number of similar pixels.
    #[arg(long)]
    n_similar: Option<usize>,
    /// Percentage of highest-ORI pixels sampled per object.
    #[arg(long)]
    or_percent: Option<f64>,
    /// k-means seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Label raster to use as the object map instead of the builtin segmentation.
    #[arg(long)]
    segmentation: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FuseArgs {
    /// Fine image at the base date.
    #[arg(long)]
    fine: PathBuf,
    /// Coarse image at the prediction date.
    #[arg(long)]
    coarse: PathBuf,
    /// Output header path.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    fusion: FusionFlags,
    /// Also write OL-U, OL-RC and the class/object label rasters.
    #[arg(long)]
    emit_intermediates: bool,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    fine: PathBuf,
    #[arg(long)]
    scale: usize,
    /// Single-band mask at coarse or fine resolution; nonzero marks clouds.
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    reference: PathBuf,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// TOML scene description; flags below override its values.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    scale: Option<usize>,
    #[arg(long)]
    bands: Option<usize>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    objects: Option<usize>,
    /// Pixel noise standard deviation.
    #[arg(long)]
    noise: Option<f64>,
    /// Fraction of coarse pixels under a cloud.
    #[arg(long)]
    cloud: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also fuse the scene and print the three-stage accuracy table.
    #[arg(long)]
    stepwise: bool,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(Args, Debug)]
struct QuicklookArgs {
    #[arg(long)]
    input: PathBuf,
    /// Red, green and blue band numbers, counted from 1.
    #[arg(long, value_delimiter = ',', default_value = "4,3,2")]
    bands: Vec<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    #[arg(long)]
    olu: PathBuf,
    #[arg(long)]
    olrc: PathBuf,
    #[arg(long)]
    obsum: PathBuf,
    /// Reference fine image at the prediction date.
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    coarse: PathBuf,
    /// Object label raster.
    #[arg(long)]
    objects: PathBuf,
    #[arg(long)]
    scale: usize,
    /// Directory for the residual maps; maps are not written when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<obsum::Error>() {
        Some(e) if !e.is_input_error() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(2);
        }
    };
    match pool.install(|| commands::run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
