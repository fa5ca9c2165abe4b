use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

mod commands;
mod config;
mod store;

use config::Preset;

#[derive(Parser, Debug)]
#[command(name = "ms2metgan", version, about = "Latent-space GAN pipeline for MS/MS metabolite identification")]
#[command(arg_required_else_help = true)]
struct Cli {
    /// JSON configuration layered over the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Base preset: paper or desk.
    #[arg(long, global = true)]
    preset: Option<Preset>,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for parallel inference.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    force: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse, merge per compound and bin the training spectra.
    Prepare {
        #[arg(long)]
        spectra: Option<PathBuf>,
    },
    /// Train both autoencoders.
    TrainAe,
    /// Encode every corpus structure and prepared spectrum with frozen decoders.
    Encode,
    /// Pick training and test isomer decoys from the corpus.
    BuildDecoys,
    /// Run the alternating discriminator/generator protocol.
    TrainGan,
    /// Rank candidate structures for each query spectrum.
    Search {
        /// Discriminator checkpoint; defaults to the final round.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        spectra: Option<PathBuf>,
        /// Structure latent cache.
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Test decoy assignments; restricts candidates to each true compound and its decoys.
        #[arg(long)]
        decoys: Option<PathBuf>,
        /// Output directory for results.tsv and ranks.tsv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute the benchmark tables and summarize search ranks.
    Evaluate {
        #[arg(long, default_value = "fixtures")]
        fixtures: PathBuf,
        #[arg(long)]
        ranks: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MS2METGAN_LOG", "info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            if e.downcast_ref::<store::UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = config::load_config(cli.config.as_deref(), cli.preset).map_err(store::usage)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(store::usage(anyhow::anyhow!("--threads must be positive")));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    log::info!("seed {}", cfg.seed);
    log::info!("effective config {}", serde_json::to_string(&cfg)?);
    let ctx = commands::Ctx { cfg, force: cli.force };
    match cli.command {
        Command::Prepare { spectra } => commands::prepare(&ctx, spectra),
        Command::TrainAe => commands::train_ae(&ctx),
        Command::Encode => commands::encode(&ctx),
        Command::BuildDecoys => commands::build_decoys(&ctx),
        Command::TrainGan => commands::train_gan(&ctx),
        Command::Search {
            model,
            spectra,
            cache,
            decoys,
            out,
        } => commands::search(
            &ctx,
            commands::SearchArgs {
                model,
                spectra,
                cache,
                decoys,
                out,
            },
        ),
        Command::Evaluate { fixtures, ranks, out } => commands::evaluate(&ctx, &fixtures, ranks, out),
    }
}
