//! `rarity`: rarity scores and k-NN manifold metrics over embedding files.
//!
//! Data goes only to files under `--out`; diagnostics go to stderr.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use rarity_core::report::Format;
use rarity_core::workflow::{self, RunConfig};
use rarity_core::DistanceConfig;

#[derive(Parser, Debug)]
#[command(name = "rarity", version, about = "Per-sample rarity scores and k-NN manifold metrics")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Neighborhood size of the k-NN spheres.
    #[arg(long, global = true, default_value_t = 3)]
    k: usize,
    /// Upper bound on real samples used; larger sets are subsampled.
    #[arg(long, global = true, default_value_t = 30_000)]
    real_count: usize,
    /// Upper bound on fake samples used; larger sets are subsampled.
    #[arg(long, global = true, default_value_t = 10_000)]
    fake_count: usize,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Query rows per distance block (default: derived from --memory-budget).
    #[arg(long, global = true)]
    block_rows: Option<usize>,
    /// Budget for one distance block, in bytes; accepts K, M, G suffixes.
    #[arg(long, global = true, value_parser = parse_bytes, default_value = "512M")]
    memory_budget: usize,
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads (default: number of logical processors).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Ignore this fraction of the largest real spheres when computing realism.
    #[arg(long, global = true, default_value_t = 0.0)]
    realism_prune_fraction: f64,
    /// Reuse radii cached beside the real feature file, writing them if absent.
    #[arg(long, global = true)]
    radii_cache: bool,
    #[arg(long, global = true, default_value_t = 64)]
    histogram_bins: usize,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Rarity, realism, precision, recall, density and coverage of one fake set.
    Score {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        fake: PathBuf,
    },
    /// Top-p% mean rarity of several models against one real set.
    CompareModels {
        /// JSON array of {name, path, role, extractor} entries.
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Rarity of two datasets on the manifold of their union.
    CompareDatasets {
        #[arg(long)]
        dataset_a: PathBuf,
        #[arg(long)]
        dataset_b: PathBuf,
        /// Bin raw scores instead of max-normalized ones.
        #[arg(long)]
        raw_scores: bool,
    },
    /// Spearman correlation of rarity rankings across a range of k.
    RankAnalysis {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        fake: PathBuf,
        #[arg(long, default_value_t = 1)]
        k_min: usize,
        #[arg(long, default_value_t = 10)]
        k_max: usize,
        /// Restrict to fakes inside the manifold built with this k.
        #[arg(long, default_value_t = 1)]
        restriction: usize,
    },
    /// Nearest-neighbor-distance ranking of a real set.
    Nnd {
        #[arg(long)]
        real: PathBuf,
    },
}

fn parse_bytes(s: &str) -> std::result::Result<usize, String> {
    let t = s.trim();
    let (digits, mult) = match t.char_indices().find(|(_, c)| !c.is_ascii_digit()) {
        None => (t, 1usize),
        Some((i, _)) => {
            let mult = match t[i..].to_ascii_uppercase().as_str() {
                "K" | "KB" | "KIB" => 1 << 10,
                "M" | "MB" | "MIB" => 1 << 20,
                "G" | "GB" | "GIB" => 1 << 30,
                other => return Err(format!("unknown size suffix `{other}`")),
            };
            (&t[..i], mult)
        }
    };
    let n: usize = digits.parse().map_err(|_| format!("`{s}` is not a byte count"))?;
    let bytes = n.checked_mul(mult).ok_or_else(|| format!("`{s}` is too large"))?;
    if bytes == 0 {
        return Err("memory budget must be positive".into());
    }
    Ok(bytes)
}

fn run_config(c: &Common) -> Result<RunConfig> {
    let workers = match c.workers {
        Some(0) => bail!("--workers must be positive"),
        Some(w) => w,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    Ok(RunConfig {
        k: c.k,
        real_count: c.real_count,
        fake_count: c.fake_count,
        seed: c.seed,
        out_dir: c.out.clone(),
        format: match c.format {
            OutputFormat::Csv => Format::Csv,
            OutputFormat::Json => Format::Json,
        },
        distance: DistanceConfig {
            block_rows: c.block_rows,
            memory_budget_bytes: c.memory_budget,
        },
        workers,
        realism_prune: c.realism_prune_fraction,
        radii_cache: c.radii_cache,
        histogram_bins: c.histogram_bins,
        raw_scores: false,
    })
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = run_config(&cli.common)?;
    let files = match cli.command {
        Command::Score { real, fake } => workflow::cmd_score(&real, &fake, &cfg)
            .context("score")?
            .files,
        Command::CompareModels { manifest } => workflow::cmd_compare_models(&manifest, &cfg)
            .context("compare-models")?
            .files,
        Command::CompareDatasets {
            dataset_a,
            dataset_b,
            raw_scores,
        } => {
            cfg.raw_scores = raw_scores;
            workflow::cmd_compare_datasets(&dataset_a, &dataset_b, &cfg)
                .context("compare-datasets")?
                .files
        }
        Command::RankAnalysis {
            real,
            fake,
            k_min,
            k_max,
            restriction,
        } => workflow::cmd_rank_analysis(&real, &fake, k_min..=k_max, restriction, &cfg)
            .context("rank-analysis")?
            .files,
        Command::Nnd { real } => workflow::cmd_nnd(&real, &cfg).context("nnd")?.files,
    };
    for f in files {
        log::info!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = format!("{e:#}").replace('\n', " ");
            eprintln!("rarity: error: {line}");
            ExitCode::FAILURE
        }
    }
}
