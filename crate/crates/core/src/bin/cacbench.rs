use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cacbench::corpus::{load_annotations, validate_corpus, PredictionStore, Protocol};
use cacbench::density::io::{read_points, write_cdm1, write_mosaic_manifests};
use cacbench::density::points_to_density;
use cacbench::protocols::{pair_mosaics, Aggregation, DistractorMode};
use cacbench::report::{self, to_canonical_json, RunConfig, Selection};
use cacbench::{Error, Result};

#[derive(Parser)]
#[command(
    name = "cacbench",
    version,
    about = "Prompt-grounding evaluation for class-agnostic counting models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check that a prediction manifest covers what a protocol needs.
    Validate {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long, value_enum, default_value_t = ValidateProtocol::All)]
        protocol: ValidateProtocol,
    },
    /// Negative-label test (NMN, PCCN).
    Negative(RunArgs),
    /// Distractor test (CntP, CntR, CntF1, GAME).
    Distractor {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        distractor: DistractorArgs,
    },
    /// MAE and RMSE over positive prompts.
    Classic(RunArgs),
    /// Semantic-similarity analysis of negative-prompt errors.
    Semsim {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        semsim: SemsimArgs,
    },
    /// Every protocol, plus the combined summary table.
    All {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        distractor: DistractorArgs,
        #[command(flatten)]
        semsim: SemsimArgs,
    },
    /// Rasterize a points file onto the density canvas as CDM1.
    ConvertPoints {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Pair images into stacked mosaics and write their manifests.
    PairMosaics {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ValidateProtocol {
    Negative,
    Distractor,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Direct,
    Mosaic,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long, env = "CACBENCH_OUT_DIR", default_value = "reports")]
    out: PathBuf,
    /// Row label in the summary table.
    #[arg(long, default_value = "model")]
    model: String,
    /// Worker threads for per-query evaluation.
    #[arg(long)]
    jobs: Option<usize>,
    /// Average queries within each image before averaging images.
    #[arg(long)]
    per_image: bool,
    #[arg(long, default_value_t = 1)]
    level: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct DistractorArgs {
    #[arg(long, value_enum, default_value_t = Mode::Direct)]
    mode: Mode,
    /// Mosaic manifests; paired from --seed when omitted.
    #[arg(long)]
    mosaics: Option<PathBuf>,
}

#[derive(Args)]
struct SemsimArgs {
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Fixed similarity range "LO,HI" for binning instead of the observed one.
    #[arg(long, value_parser = parse_range)]
    bin_range: Option<(f64, f64)>,
}

fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected LO,HI")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((lo, hi))
}

fn config(run: RunArgs, selection: Selection) -> RunConfig {
    let mut c = RunConfig::new(run.annotations, run.predictions, run.out);
    c.selection = selection;
    c.model = run.model;
    c.jobs = run.jobs;
    c.level = run.level;
    c.seed = run.seed;
    if run.per_image {
        c.aggregation = Aggregation::PerImage;
    }
    c
}

fn apply_distractor(c: &mut RunConfig, d: DistractorArgs) {
    c.distractor_mode = match d.mode {
        Mode::Direct => DistractorMode::Direct,
        Mode::Mosaic => DistractorMode::Mosaic,
    };
    c.mosaics = d.mosaics;
}

fn apply_semsim(c: &mut RunConfig, s: SemsimArgs) {
    c.embeddings = s.embeddings;
    c.bin_range = s.bin_range;
}

fn validate(annotations: PathBuf, predictions: PathBuf, which: ValidateProtocol) -> Result<bool> {
    let store = load_annotations(&annotations)?;
    let preds = PredictionStore::load_manifest(&predictions)?;
    let protocols: &[Protocol] = match which {
        ValidateProtocol::Negative => &[Protocol::Negative],
        ValidateProtocol::Distractor => &[Protocol::Distractor],
        ValidateProtocol::All => &[Protocol::Negative, Protocol::Distractor],
    };
    let reports: Vec<_> = protocols
        .iter()
        .map(|&p| validate_corpus(&store, &preds, p))
        .collect();
    print!("{}", to_canonical_json(&reports));
    Ok(reports.iter().all(|r| r.is_runnable()))
}

fn run_and_report(config: RunConfig) -> Result<()> {
    let outcome = report::run(&config)?;
    print!(
        "{}",
        report::emit_markdown_table(std::slice::from_ref(&outcome.summary), config.level)
    );
    for f in &outcome.files {
        log::info!("wrote {}", f.display());
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Validate {
            annotations,
            predictions,
            protocol,
        } => {
            let ok = validate(annotations, predictions, protocol)?;
            return Ok(if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            });
        }
        Command::Negative(run) => run_and_report(config(run, Selection::Negative))?,
        Command::Distractor { run, distractor } => {
            let mut c = config(run, Selection::Distractor);
            apply_distractor(&mut c, distractor);
            run_and_report(c)?
        }
        Command::Classic(run) => run_and_report(config(run, Selection::Classic))?,
        Command::Semsim { run, semsim } => {
            let mut c = config(run, Selection::Semsim);
            apply_semsim(&mut c, semsim);
            run_and_report(c)?
        }
        Command::All {
            run,
            distractor,
            semsim,
        } => {
            let mut c = config(run, Selection::All);
            apply_distractor(&mut c, distractor);
            apply_semsim(&mut c, semsim);
            run_and_report(c)?
        }
        Command::ConvertPoints { input, output } => {
            let points = read_points(&input)?;
            write_cdm1(&output, &points_to_density(&points)?)?;
        }
        Command::PairMosaics {
            annotations,
            seed,
            output,
        } => {
            let pairing = pair_mosaics(&load_annotations(&annotations)?, seed)?;
            for s in &pairing.skipped {
                log::warn!("skipped {}: {}", s.image_id, s.reason);
            }
            write_mosaic_manifests(&output, &pairing.manifests)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::MissingPredictions(keys) = &e {
                for k in keys {
                    eprintln!("  missing {k}");
                }
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
