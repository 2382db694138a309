//! Run configuration and report emission.
//!
//! Every JSON report is wrapped in an envelope carrying the schema version and
//! the configuration that produced it. Keys are written sorted and floats in
//! shortest round-trip form, so identical inputs give byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{
    load_annotations, validate_corpus, AnnotationStore, PredictionStore, Protocol,
};
use crate::density::{io::read_mosaic_manifests, MAX_LEVEL};
use crate::error::{EntryKey, Error, Result};
use crate::protocols::{
    pair_mosaics, run_classic, run_distractor_direct, run_distractor_mosaic,
    run_negative_label_test, Aggregation, ClassicReport, DistractorMode, DistractorReport,
    NegativeReport,
};
use crate::semsim::{self, EmbeddingTable, SemSimReport};

pub const SCHEMA_VERSION: u32 = 1;

/// Which protocols a run executes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Negative,
    Distractor,
    Classic,
    Semsim,
    All,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub annotations: PathBuf,
    pub predictions: PathBuf,
    pub selection: Selection,
    pub level: u32,
    pub distractor_mode: DistractorMode,
    /// Mosaic manifests; generated from `seed` when absent.
    pub mosaics: Option<PathBuf>,
    pub seed: u64,
    pub embeddings: Option<PathBuf>,
    /// Fixed similarity range for binning; observed range when absent.
    pub bin_range: Option<(f64, f64)>,
    pub aggregation: Aggregation,
    pub model: String,
    #[serde(skip)]
    pub output_dir: PathBuf,
    #[serde(skip)]
    pub jobs: Option<usize>,
}

impl RunConfig {
    pub fn new(annotations: PathBuf, predictions: PathBuf, output_dir: PathBuf) -> Self {
        RunConfig {
            annotations,
            predictions,
            selection: Selection::All,
            level: 1,
            distractor_mode: DistractorMode::Direct,
            mosaics: None,
            seed: 0,
            embeddings: None,
            bin_range: None,
            aggregation: Aggregation::PerPair,
            model: "model".into(),
            output_dir,
            jobs: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.level > MAX_LEVEL {
            return Err(Error::Config(format!(
                "grid level {} outside [0, {MAX_LEVEL}]",
                self.level
            )));
        }
        for path in [&self.annotations, &self.predictions] {
            if !path.is_file() {
                return Err(Error::io(
                    path,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
                ));
            }
        }
        if self.selection == Selection::Semsim && self.embeddings.is_none() {
            return Err(Error::Config("semsim needs an embedding file".into()));
        }
        if let Some((lo, hi)) = self.bin_range {
            if lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) {
                return Err(Error::Config(format!("bin range [{lo}, {hi}] is empty")));
            }
        }
        Ok(())
    }

    fn runs(&self, which: Selection) -> bool {
        self.selection == which || self.selection == Selection::All
    }
}

/// One line of the summary table; absent values are protocols not run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub nmn: Option<f64>,
    pub pccn: Option<f64>,
    pub cntp: Option<f64>,
    pub cntr: Option<f64>,
    pub cntf1: Option<f64>,
    pub game: Option<f64>,
    pub mae: Option<f64>,
    pub rmse: Option<f64>,
}

impl SummaryRow {
    fn values(&self) -> [Option<f64>; 8] {
        [
            self.nmn, self.pccn, self.cntp, self.cntr, self.cntf1, self.game, self.mae, self.rmse,
        ]
    }
}

/// Metric column names in table order.
pub fn summary_columns(level: u32) -> [String; 8] {
    [
        "NMN".into(),
        "PCCN".into(),
        "CntP".into(),
        "CntR".into(),
        "CntF1".into(),
        format!("GAME({level})"),
        "MAE".into(),
        "RMSE".into(),
    ]
}

/// Markdown table grouped like the usual results layout: negative-label
/// test, distractor test, classic errors. Values carry two decimals.
pub fn emit_markdown_table(rows: &[SummaryRow], level: u32) -> String {
    let cols = summary_columns(level);
    let mut out = String::new();
    out.push_str("| | Negative-label Test | | Distractor Test | | | | Classic | |\n");
    out.push_str("|---|---|---|---|---|---|---|---|---|\n");
    let _ = writeln!(out, "| Model | {} |", cols.join(" | "));
    for row in rows {
        let cells: Vec<String> = row
            .values()
            .iter()
            .map(|v| v.map_or_else(|| "-".to_string(), |v| format!("{v:.2}")))
            .collect();
        let _ = writeln!(out, "| {} | {} |", row.model, cells.join(" | "));
    }
    out
}

pub fn summary_csv(rows: &[SummaryRow], level: u32) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["model".to_string()];
    header.extend(summary_columns(level));
    w.write_record(&header).expect("in-memory csv");
    for row in rows {
        let mut rec = vec![row.model.clone()];
        rec.extend(
            row.values()
                .iter()
                .map(|v| v.map(fmt_float).unwrap_or_default()),
        );
        w.write_record(&rec).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8")
}

/// Same digits serde_json writes, so CSV and JSON agree exactly.
fn fmt_float(v: f64) -> String {
    serde_json::to_string(&v).expect("finite float")
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: u32,
    config: &'a RunConfig,
    report: &'a T,
}

/// Pretty JSON with sorted keys.
pub fn to_canonical_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("report serializes");
    serde_json::to_string_pretty(&v).expect("value serializes") + "\n"
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_report<T: Serialize>(
    dir: &Path,
    name: &str,
    config: &RunConfig,
    report: &T,
) -> Result<PathBuf> {
    let path = dir.join(name);
    let env = Envelope {
        schema_version: SCHEMA_VERSION,
        config,
        report,
    };
    write_file(&path, &to_canonical_json(&env))?;
    Ok(path)
}

fn csv_string<R: Serialize>(rows: impl IntoIterator<Item = R>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)
            .map_err(|e| Error::Config(format!("csv serialization: {e}")))?;
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8"))
}

#[derive(Serialize)]
struct NegativeCsvRow<'a> {
    image_id: &'a str,
    t: f64,
    mean_negative: f64,
    d_pos: f64,
    d_neg: f64,
    pccn_hit: bool,
}

#[derive(Serialize)]
struct DistractorCsvRow<'a> {
    image_id: &'a str,
    category: &'a str,
    predicted_count: f64,
    ground_truth_count: f64,
    cntp: f64,
    cntr: f64,
    cntf1: f64,
    game: f64,
    tp: f64,
    fp: f64,
    #[serde(rename = "fn")]
    fn_: f64,
}

#[derive(Serialize)]
struct SampleCsvRow<'a> {
    image_id: &'a str,
    negative_category: &'a str,
    reference_category: &'a str,
    similarity: f64,
    normalized_error: f64,
}

/// Everything a run produced.
#[derive(Clone, Debug, Default)]
pub struct RunOutcome {
    pub summary: SummaryRow,
    pub negative: Option<NegativeReport>,
    pub distractor: Option<DistractorReport>,
    pub classic: Option<ClassicReport>,
    pub semsim: Option<SemSimReport>,
    pub files: Vec<PathBuf>,
}

/// Checks that every protocol the run selects has the predictions it needs,
/// gathering every missing key before failing.
fn preflight(config: &RunConfig, store: &AnnotationStore, preds: &PredictionStore) -> Result<()> {
    let mut missing: Vec<EntryKey> = Vec::new();
    let mut needs = Vec::new();
    if config.runs(Selection::Negative)
        || config.runs(Selection::Semsim) && config.embeddings.is_some()
    {
        needs.push(Protocol::Negative);
    }
    let direct =
        config.runs(Selection::Distractor) && config.distractor_mode == DistractorMode::Direct;
    if direct || config.runs(Selection::Classic) {
        needs.push(Protocol::Distractor);
    }
    for protocol in needs {
        let report = validate_corpus(store, preds, protocol);
        if let Some(image) = report.zero_total_images.first() {
            return Err(Error::ZeroTotal(image.clone()));
        }
        missing.extend(report.missing);
    }
    missing.sort();
    missing.dedup();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::MissingPredictions(missing))
    }
}

fn execute(config: &RunConfig) -> Result<RunOutcome> {
    let store = load_annotations(&config.annotations)?;
    let preds = PredictionStore::load_manifest(&config.predictions)?;
    preflight(config, &store, &preds)?;

    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = RunOutcome {
        summary: SummaryRow {
            model: config.model.clone(),
            ..SummaryRow::default()
        },
        ..RunOutcome::default()
    };

    if config.runs(Selection::Negative) {
        let report = run_negative_label_test(&store, &preds)?;
        out.files
            .push(write_report(dir, "negative.json", config, &report)?);
        let rows = report.images.iter().map(|i| NegativeCsvRow {
            image_id: &i.diag.image_id,
            t: i.diag.t,
            mean_negative: crate::numeric::mean(&i.diag.negative_predictions).unwrap_or(0.0),
            d_pos: i.diag.d_pos,
            d_neg: i.diag.d_neg,
            pccn_hit: i.diag.pccn_hit,
        });
        let path = dir.join("negative.csv");
        write_file(&path, &csv_string(rows)?)?;
        out.files.push(path);
        out.summary.nmn = Some(report.nmn);
        out.summary.pccn = Some(report.pccn);
        out.negative = Some(report);
    }

    if config.runs(Selection::Distractor) {
        let (report, stem) = match config.distractor_mode {
            DistractorMode::Direct => (
                run_distractor_direct(&store, &preds, config.level, config.aggregation)?,
                format!("distractor_L{}", config.level),
            ),
            DistractorMode::Mosaic => {
                let manifests = match &config.mosaics {
                    Some(path) => read_mosaic_manifests(path)?,
                    None => {
                        let pairing = pair_mosaics(&store, config.seed)?;
                        out.files
                            .push(write_report(dir, "mosaics.json", config, &pairing)?);
                        pairing.manifests
                    }
                };
                (
                    run_distractor_mosaic(&manifests, &preds, config.level, config.aggregation)?,
                    format!("distractor_mosaic_L{}", config.level),
                )
            }
        };
        out.files
            .push(write_report(dir, &format!("{stem}.json"), config, &report)?);
        let rows = report.items.iter().map(|i| DistractorCsvRow {
            image_id: &i.image_id,
            category: i.category.as_str(),
            predicted_count: i.predicted_count,
            ground_truth_count: i.ground_truth_count,
            cntp: i.score.cntp,
            cntr: i.score.cntr,
            cntf1: i.score.cntf1,
            game: i.score.game,
            tp: i.score.tp,
            fp: i.score.fp,
            fn_: i.score.fn_,
        });
        let path = dir.join(format!("{stem}.csv"));
        write_file(&path, &csv_string(rows)?)?;
        out.files.push(path);
        out.summary.cntp = Some(report.cntp);
        out.summary.cntr = Some(report.cntr);
        out.summary.cntf1 = Some(report.cntf1);
        out.summary.game = Some(report.game);
        out.distractor = Some(report);
    }

    if config.runs(Selection::Classic) {
        let report = run_classic(&store, &preds)?;
        out.files
            .push(write_report(dir, "classic.json", config, &report)?);
        out.summary.mae = Some(report.mae);
        out.summary.rmse = Some(report.rmse);
        out.classic = Some(report);
    }

    if config.runs(Selection::Semsim) {
        if let Some(path) = &config.embeddings {
            let table = EmbeddingTable::load(path)?;
            let report = semsim::analyze(&store, &preds, &table, config.bin_range)?;
            out.files
                .push(write_report(dir, "semsim.json", config, &report)?);
            let rows = report.samples.iter().map(|s| SampleCsvRow {
                image_id: &s.image_id,
                negative_category: s.negative_category.as_str(),
                reference_category: s.reference_category.as_str(),
                similarity: s.similarity,
                normalized_error: s.normalized_error,
            });
            let path = dir.join("semsim_samples.csv");
            write_file(&path, &csv_string(rows)?)?;
            out.files.push(path);
            out.semsim = Some(report);
        }
    }

    let rows = std::slice::from_ref(&out.summary);
    let path = dir.join("summary.csv");
    write_file(&path, &summary_csv(rows, config.level))?;
    out.files.push(path);
    let path = dir.join("summary.md");
    write_file(&path, &emit_markdown_table(rows, config.level))?;
    out.files.push(path);
    Ok(out)
}

/// Runs the selected protocols and writes their reports under the output
/// directory.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    match config.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?
            .install(|| execute(config)),
        None => execute(config),
    }
}
