//! Test protocols over a whole corpus: negative-label cross-probing, the
//! direct multi-class and mosaic distractor tests, and classic count errors.
//!
//! Per-query work runs on the current rayon pool; results are collected in
//! corpus order before any reduction, so reports do not depend on the number
//! of workers.

use std::collections::BTreeMap;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    derive_prompt_sets, required_keys, AnnotationRecord, AnnotationStore, CategoryId,
    PredictionStore, Protocol,
};
use crate::density::{
    build_mosaic_manifest, canvas_pixel, dots_to_canvas, partition_grid, partition_halves,
    patch_counts_from_density, patch_counts_from_dots, DensityGrid, MosaicManifest, Point,
    CANVAS_SIZE,
};
use crate::error::{EntryKey, Error, Result};
use crate::metrics::{
    self, classic_errors, dataset_prf, game_dataset, image_prf, mosaic_closed_form, ClassicErrors,
    ImageScore, NegativeImageDiag, PccnInput,
};
use crate::numeric::mean;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedImage {
    pub image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<CategoryId>,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositiveEntry {
    pub category: CategoryId,
    pub predicted: f64,
    pub ground_truth: f64,
}

/// Per-image record of the negative-label test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegativeImageReport {
    #[serde(flatten)]
    pub diag: NegativeImageDiag,
    /// Category of each entry of `negative_predictions`, same order.
    pub negative_categories: Vec<CategoryId>,
    pub positives: Vec<PositiveEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegativeReport {
    pub nmn: f64,
    pub pccn: f64,
    pub images: Vec<NegativeImageReport>,
    pub skipped_images: Vec<SkippedImage>,
}

impl NegativeReport {
    /// NMN recomputed from the per-image records.
    pub fn recompute_nmn(&self) -> Result<f64> {
        let per_image: Vec<(Vec<f64>, f64)> = self
            .images
            .iter()
            .map(|i| (i.diag.negative_predictions.clone(), i.diag.t))
            .collect();
        metrics::nmn(&per_image)
    }

    pub fn recompute_pccn(&self) -> f64 {
        let diags: Vec<NegativeImageDiag> = self.images.iter().map(|i| i.diag.clone()).collect();
        metrics::pccn_from_hits(&diags)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistractorMode {
    Direct,
    Mosaic,
}

/// Unit averaged into dataset scores.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Every `(image, prompt)` query counts once.
    #[default]
    PerPair,
    /// Queries are first averaged within their image.
    PerImage,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub image_id: String,
    pub category: CategoryId,
    pub predicted_count: f64,
    pub ground_truth_count: f64,
    #[serde(flatten)]
    pub score: ImageScore,
}

/// Two-band cross-check of one mosaic: closed-form half-count scores next to
/// the general patch pipeline on the same bands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormCheck {
    pub mosaic_id: String,
    pub category: CategoryId,
    pub c1: f64,
    pub c2: f64,
    pub c1_ground_truth: f64,
    pub closed_form_cntp: f64,
    pub closed_form_cntr: f64,
    pub general_cntp: f64,
    pub general_cntr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistractorReport {
    pub mode: DistractorMode,
    pub level: u32,
    pub aggregation: Aggregation,
    pub cntp: f64,
    pub cntr: f64,
    pub cntf1: f64,
    pub game: f64,
    pub items: Vec<PairScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed_form: Option<Vec<ClosedFormCheck>>,
}

impl DistractorReport {
    /// Dataset `(CntP, CntR, CntF1, GAME)` recomputed from the items.
    pub fn recompute(&self) -> Result<(f64, f64, f64, f64)> {
        aggregate(&self.items, self.aggregation)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicItem {
    pub image_id: String,
    pub category: CategoryId,
    pub predicted: f64,
    pub ground_truth: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicReport {
    pub mae: f64,
    pub rmse: f64,
    pub items: Vec<ClassicItem>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MosaicPairing {
    pub manifests: Vec<MosaicManifest>,
    pub skipped: Vec<SkippedImage>,
}

fn ensure_complete(
    required: impl IntoIterator<Item = (String, CategoryId)>,
    preds: &PredictionStore,
) -> Result<()> {
    let missing: Vec<EntryKey> = required
        .into_iter()
        .filter(|(i, c)| !preds.contains(i, c))
        .map(|(image, c)| EntryKey {
            image,
            category: c.to_string(),
        })
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::MissingPredictions(missing))
    }
}

pub fn run_negative_label_test(
    store: &AnnotationStore,
    preds: &PredictionStore,
) -> Result<NegativeReport> {
    ensure_complete(required_keys(store, Protocol::Negative), preds)?;

    let mut skipped_images = Vec::new();
    let mut probed: Vec<&AnnotationRecord> = Vec::new();
    for record in store.records() {
        if record.dots.len() == store.universe().len() {
            warn!(
                "image {:?} has no negative categories; skipped",
                record.image_id
            );
            skipped_images.push(SkippedImage {
                image_id: record.image_id.clone(),
                category: None,
                reason: "no negative categories".into(),
            });
        } else if record.total_count() == 0 {
            return Err(Error::ZeroTotal(record.image_id.clone()));
        } else {
            probed.push(record);
        }
    }
    if probed.is_empty() {
        return Err(Error::EmptyInput("no image has negative categories"));
    }

    let images: Vec<NegativeImageReport> = probed
        .par_iter()
        .map(|record| {
            let sets = derive_prompt_sets(store, &record.image_id)?;
            let positives = sets
                .positives
                .iter()
                .map(|c| {
                    Ok(PositiveEntry {
                        category: c.clone(),
                        predicted: preds.total(&record.image_id, c)?,
                        ground_truth: record.count(c) as f64,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let negative_categories: Vec<CategoryId> = sets.negatives.into_iter().collect();
            let negatives = negative_categories
                .iter()
                .map(|c| preds.total(&record.image_id, c))
                .collect::<Result<Vec<_>>>()?;
            let input = PccnInput {
                image_id: record.image_id.clone(),
                positives: positives
                    .iter()
                    .map(|p| (p.predicted, p.ground_truth))
                    .collect(),
                negatives,
            };
            let (_, mut diag) = metrics::pccn(std::slice::from_ref(&input))?;
            Ok(NegativeImageReport {
                diag: diag.remove(0),
                negative_categories,
                positives,
            })
        })
        .collect::<Result<_>>()?;

    let per_image: Vec<(Vec<f64>, f64)> = images
        .iter()
        .map(|i| (i.diag.negative_predictions.clone(), i.diag.t))
        .collect();
    let nmn = metrics::nmn(&per_image)?;
    let diags: Vec<NegativeImageDiag> = images.iter().map(|i| i.diag.clone()).collect();
    Ok(NegativeReport {
        nmn,
        pccn: metrics::pccn_from_hits(&diags),
        images,
        skipped_images,
    })
}

/// Ground-truth dots expressed on the prediction's pixel grid: unchanged when
/// the map matches the annotated geometry, moved to their canvas pixels when
/// the map is the fixed rasterization canvas.
fn dots_on_grid(
    key: (&str, &CategoryId),
    grid: &DensityGrid,
    dots: &[Point],
    height: usize,
    width: usize,
) -> Result<Vec<Point>> {
    if grid.height() == height && grid.width() == width {
        Ok(dots.to_vec())
    } else if grid.height() == CANVAS_SIZE && grid.width() == CANVAS_SIZE {
        Ok(dots_to_canvas(
            dots,
            width as f64,
            height as f64,
            CANVAS_SIZE,
        ))
    } else {
        Err(Error::GeometryMismatch {
            key: EntryKey {
                image: key.0.to_string(),
                category: key.1.to_string(),
            },
            payload_height: grid.height(),
            payload_width: grid.width(),
            expected_height: height,
            expected_width: width,
        })
    }
}

fn score_query(grid: &DensityGrid, dots: &[Point], level: u32) -> Result<ImageScore> {
    let partition = partition_grid(grid.height(), grid.width(), level)?;
    let pred = patch_counts_from_density(grid, &partition)?;
    let gt = patch_counts_from_dots(dots, grid.height(), grid.width(), &partition)?;
    image_prf(&pred, &gt)
}

fn aggregate(items: &[PairScore], aggregation: Aggregation) -> Result<(f64, f64, f64, f64)> {
    let scores: Vec<ImageScore> = match aggregation {
        Aggregation::PerPair => items.iter().map(|i| i.score).collect(),
        Aggregation::PerImage => {
            let mut groups: BTreeMap<&str, Vec<ImageScore>> = BTreeMap::new();
            for item in items {
                groups.entry(&item.image_id).or_default().push(item.score);
            }
            groups
                .values()
                .map(|g| {
                    let m = |f: fn(&ImageScore) -> f64| {
                        mean(&g.iter().map(f).collect::<Vec<_>>()).expect("non-empty group")
                    };
                    ImageScore {
                        cntp: m(|s| s.cntp),
                        cntr: m(|s| s.cntr),
                        cntf1: m(|s| s.cntf1),
                        game: m(|s| s.game),
                        tp: m(|s| s.tp),
                        fp: m(|s| s.fp),
                        fn_: m(|s| s.fn_),
                    }
                })
                .collect()
        }
    };
    let prf = dataset_prf(&scores)?;
    let games: Vec<f64> = scores.iter().map(|s| s.game).collect();
    Ok((prf.cntp, prf.cntr, prf.cntf1, game_dataset(&games)?))
}

fn finish(
    mode: DistractorMode,
    level: u32,
    aggregation: Aggregation,
    items: Vec<PairScore>,
    closed_form: Option<Vec<ClosedFormCheck>>,
) -> Result<DistractorReport> {
    let (cntp, cntr, cntf1, game) = aggregate(&items, aggregation)?;
    Ok(DistractorReport {
        mode,
        level,
        aggregation,
        cntp,
        cntr,
        cntf1,
        game,
        items,
        closed_form,
    })
}

/// Queries every image with each of its own categories; the other annotated
/// categories act as distractors.
pub fn run_distractor_direct(
    store: &AnnotationStore,
    preds: &PredictionStore,
    level: u32,
    aggregation: Aggregation,
) -> Result<DistractorReport> {
    let keys = required_keys(store, Protocol::Distractor);
    ensure_complete(keys.iter().cloned(), preds)?;
    let tasks: Vec<(&AnnotationRecord, &CategoryId)> = store
        .records()
        .flat_map(|r| r.dots.keys().map(move |c| (r, c)))
        .collect();
    let items = tasks
        .par_iter()
        .map(|&(record, category)| {
            let payload = preds.payload(&record.image_id, category)?;
            let grid = payload.to_density()?;
            let dots = dots_on_grid(
                (&record.image_id, category),
                &grid,
                &record.dots[category],
                record.height,
                record.width,
            )?;
            Ok(PairScore {
                image_id: record.image_id.clone(),
                category: category.clone(),
                predicted_count: grid.total_count(),
                ground_truth_count: dots.len() as f64,
                score: score_query(&grid, &dots, level)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    finish(DistractorMode::Direct, level, aggregation, items, None)
}

/// Scores stacked mosaics queried with their target category. Predictions are
/// keyed by the mosaic id. At level 1 each mosaic is also scored on its two
/// bands with the closed-form half-count expressions.
pub fn run_distractor_mosaic(
    manifests: &[MosaicManifest],
    preds: &PredictionStore,
    level: u32,
    aggregation: Aggregation,
) -> Result<DistractorReport> {
    ensure_complete(
        manifests.iter().map(|m| (m.id.clone(), m.category.clone())),
        preds,
    )?;
    let evaluated = manifests
        .par_iter()
        .map(|m| {
            let payload = preds.payload(&m.id, &m.category)?;
            let grid = payload.to_density()?;
            let dots = dots_on_grid(
                (&m.id, &m.category),
                &grid,
                m.target_dots(),
                m.mosaic_height,
                m.common_width,
            )?;
            let item = PairScore {
                image_id: m.id.clone(),
                category: m.category.clone(),
                predicted_count: grid.total_count(),
                ground_truth_count: dots.len() as f64,
                score: score_query(&grid, &dots, level)?,
            };
            let check = if level == 1 {
                Some(closed_form_check(m, &grid, dots.len() as f64)?)
            } else {
                None
            };
            Ok((item, check))
        })
        .collect::<Result<Vec<_>>>()?;
    let (items, checks): (Vec<_>, Vec<_>) = evaluated.into_iter().unzip();
    let closed_form = (level == 1).then(|| checks.into_iter().flatten().collect());
    finish(
        DistractorMode::Mosaic,
        level,
        aggregation,
        items,
        closed_form,
    )
}

fn closed_form_check(
    m: &MosaicManifest,
    grid: &DensityGrid,
    c1_gt: f64,
) -> Result<ClosedFormCheck> {
    let split = if grid.height() == m.mosaic_height {
        m.split_row
    } else {
        canvas_pixel(m.split_row as f64, m.mosaic_height as f64, grid.height())
    };
    let halves = partition_halves(grid.height(), grid.width(), split)?;
    let half_counts = patch_counts_from_density(grid, &halves)?;
    let (c1, c2) = (half_counts.counts[0], half_counts.counts[1]);
    let (closed_form_cntp, closed_form_cntr) = mosaic_closed_form(c1, c1_gt, c2)?;
    let (pred, gt) = metrics::mosaic_patch_counts(split, c1, c1_gt, c2);
    let general = image_prf(&pred, &gt)?;
    Ok(ClosedFormCheck {
        mosaic_id: m.id.clone(),
        category: m.category.clone(),
        c1,
        c2,
        c1_ground_truth: c1_gt,
        closed_form_cntp,
        closed_form_cntr,
        general_cntp: general.cntp,
        general_cntr: general.cntr,
    })
}

/// Pairs every `(image, category)` with a negative image drawn uniformly from
/// the images that lack the category. The draw sequence depends only on the
/// seed and the corpus.
pub fn pair_mosaics(store: &AnnotationStore, seed: u64) -> Result<MosaicPairing> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records: Vec<&AnnotationRecord> = store.records().collect();
    let mut manifests = Vec::new();
    let mut skipped = Vec::new();
    for pos in &records {
        if pos.dots.is_empty() {
            skipped.push(SkippedImage {
                image_id: pos.image_id.clone(),
                category: None,
                reason: "no annotated categories".into(),
            });
            continue;
        }
        for category in pos.dots.keys() {
            let candidates: Vec<&AnnotationRecord> = records
                .iter()
                .copied()
                .filter(|r| r.image_id != pos.image_id && !r.dots.contains_key(category))
                .collect();
            if candidates.is_empty() {
                warn!("no negative partner for {:?} / {category}", pos.image_id);
                skipped.push(SkippedImage {
                    image_id: pos.image_id.clone(),
                    category: Some(category.clone()),
                    reason: "category present in every other image".into(),
                });
                continue;
            }
            let neg = candidates[rng.gen_range(0..candidates.len())];
            match build_mosaic_manifest(pos, category, neg) {
                Ok(m) => manifests.push(m),
                Err(e) => skipped.push(SkippedImage {
                    image_id: pos.image_id.clone(),
                    category: Some(category.clone()),
                    reason: e.to_string(),
                }),
            }
        }
    }
    if manifests.is_empty() {
        return Err(Error::InvalidMosaic(
            "no image has a valid negative partner".into(),
        ));
    }
    Ok(MosaicPairing { manifests, skipped })
}

/// MAE and RMSE over every `(image, positive category)` query.
pub fn run_classic(store: &AnnotationStore, preds: &PredictionStore) -> Result<ClassicReport> {
    ensure_complete(required_keys(store, Protocol::Distractor), preds)?;
    let tasks: Vec<(&AnnotationRecord, &CategoryId)> = store
        .records()
        .flat_map(|r| r.dots.keys().map(move |c| (r, c)))
        .collect();
    let items = tasks
        .par_iter()
        .map(|&(record, category)| {
            Ok(ClassicItem {
                image_id: record.image_id.clone(),
                category: category.clone(),
                predicted: preds.total(&record.image_id, category)?,
                ground_truth: record.count(category) as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(f64, f64)> = items
        .iter()
        .map(|i| (i.predicted, i.ground_truth))
        .collect();
    let ClassicErrors { mae, rmse } = classic_errors(&pairs)?;
    Ok(ClassicReport { mae, rmse, items })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::PredictionPayload;
    use crate::density::{points_to_density, InstancePointList};

    fn cat(s: &str) -> CategoryId {
        CategoryId::new(s).unwrap()
    }

    fn record(id: &str, w: usize, h: usize, dots: &[(&str, Vec<Point>)]) -> AnnotationRecord {
        AnnotationRecord {
            image_id: id.into(),
            width: w,
            height: h,
            dots: dots.iter().map(|(c, d)| (cat(c), d.clone())).collect(),
        }
    }

    fn dense(grid: DensityGrid) -> PredictionPayload {
        PredictionPayload::Density(grid)
    }

    /// Three-category corpus: i has a (3 dots) and b (1 dot), j has c (2 dots).
    fn corpus() -> AnnotationStore {
        AnnotationStore::new(
            [cat("a"), cat("b"), cat("c")],
            [
                record(
                    "i",
                    8,
                    8,
                    &[
                        ("a", vec![[1.0, 1.0], [6.0, 1.0], [6.0, 6.0]]),
                        ("b", vec![[2.0, 6.0]]),
                    ],
                ),
                record("j", 8, 8, &[("c", vec![[1.0, 1.0], [7.0, 7.0]])]),
            ],
        )
        .unwrap()
    }

    fn impulse(h: usize, w: usize, at: &[(usize, usize, f64)]) -> DensityGrid {
        let mut v = vec![0.0; h * w];
        for &(r, c, m) in at {
            v[r * w + c] += m;
        }
        DensityGrid::new(h, w, v).unwrap()
    }

    #[test]
    fn negative_test_by_hand() {
        let s = corpus();
        let mut p = PredictionStore::new();
        p.insert("i", cat("a"), dense(impulse(8, 8, &[(0, 0, 2.0)])))
            .unwrap();
        p.insert("i", cat("b"), dense(impulse(8, 8, &[(0, 0, 1.0)])))
            .unwrap();
        p.insert("i", cat("c"), dense(impulse(8, 8, &[(0, 0, 2.0)])))
            .unwrap();
        p.insert("j", cat("a"), dense(impulse(8, 8, &[(1, 1, 1.0)])))
            .unwrap();
        p.insert("j", cat("b"), dense(impulse(8, 8, &[]))).unwrap();
        p.insert("j", cat("c"), dense(impulse(8, 8, &[(1, 1, 2.0)])))
            .unwrap();
        let r = run_negative_label_test(&s, &p).unwrap();
        // i: T=4, negatives {c:2} -> 0.5. j: T=2, negatives {a:1, b:0} -> 0.25.
        assert!((r.nmn - 0.375).abs() < 1e-15);
        // i: d_pos=(1+0)/2, d_neg=(|2-3|+|2-1|)/2=1 -> hit. j: d_pos 0, d_neg 1.5 -> hit.
        assert_eq!(r.pccn, 100.0);
        assert_eq!(r.images[0].diag.d_pos, 0.5);
        assert_eq!(r.images[0].diag.d_neg, 1.0);
        assert_eq!(r.recompute_nmn().unwrap(), r.nmn);
        assert_eq!(r.recompute_pccn(), r.pccn);
        assert!(r.skipped_images.is_empty());
    }

    #[test]
    fn negative_test_reports_every_missing_key() {
        let s = corpus();
        let mut p = PredictionStore::new();
        p.insert("i", cat("a"), dense(impulse(8, 8, &[]))).unwrap();
        match run_negative_label_test(&s, &p) {
            Err(Error::MissingPredictions(keys)) => assert_eq!(keys.len(), 5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn full_coverage_images_are_skipped() {
        let s = AnnotationStore::new(
            [cat("a"), cat("b")],
            [
                record(
                    "full",
                    4,
                    4,
                    &[("a", vec![[1.0, 1.0]]), ("b", vec![[2.0, 2.0]])],
                ),
                record("half", 4, 4, &[("a", vec![[1.0, 1.0]])]),
            ],
        )
        .unwrap();
        let mut p = PredictionStore::new();
        p.insert("half", cat("a"), dense(impulse(4, 4, &[(1, 1, 1.0)])))
            .unwrap();
        p.insert("half", cat("b"), dense(impulse(4, 4, &[])))
            .unwrap();
        let r = run_negative_label_test(&s, &p).unwrap();
        assert_eq!(r.skipped_images.len(), 1);
        assert_eq!(r.skipped_images[0].image_id, "full");
        assert_eq!((r.nmn, r.pccn), (0.0, 100.0));
    }

    #[test]
    fn zero_total_image_is_an_error() {
        let s = AnnotationStore::new([cat("a")], [record("empty", 4, 4, &[])]).unwrap();
        let mut p = PredictionStore::new();
        p.insert("empty", cat("a"), dense(impulse(4, 4, &[])))
            .unwrap();
        assert!(matches!(
            run_negative_label_test(&s, &p),
            Err(Error::ZeroTotal(_))
        ));
    }

    #[test]
    fn direct_distractor_native_geometry() {
        let s = corpus();
        let mut p = PredictionStore::new();
        // i/a: exact placement. i/b: predicted in the wrong quadrant.
        p.insert(
            "i",
            cat("a"),
            dense(impulse(8, 8, &[(1, 1, 1.0), (1, 6, 1.0), (6, 6, 1.0)])),
        )
        .unwrap();
        p.insert("i", cat("b"), dense(impulse(8, 8, &[(0, 0, 1.0)])))
            .unwrap();
        p.insert("j", cat("c"), dense(impulse(8, 8, &[(0, 0, 1.0)])))
            .unwrap();
        let r = run_distractor_direct(&s, &p, 1, Aggregation::PerPair).unwrap();
        assert_eq!(r.items.len(), 3);
        let scores: Vec<_> = r
            .items
            .iter()
            .map(|i| (i.score.cntp, i.score.cntr, i.score.game))
            .collect();
        assert_eq!(
            scores,
            vec![(1.0, 1.0, 0.0), (0.0, 0.0, 2.0), (1.0, 0.5, 1.0)]
        );
        assert!((r.cntp - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.cntr, 0.5);
        assert_eq!(r.game, 1.0);
        assert_eq!(r.recompute().unwrap(), (r.cntp, r.cntr, r.cntf1, r.game));

        let per_image = run_distractor_direct(&s, &p, 1, Aggregation::PerImage).unwrap();
        // i averages to cntp 0.5, j has 1.0.
        assert_eq!(per_image.cntp, 0.75);
    }

    #[test]
    fn direct_distractor_canvas_geometry_and_mismatch() {
        let s = corpus();
        let mut p = PredictionStore::new();
        for r in s.records() {
            for (c, dots) in &r.dots {
                let pts = InstancePointList {
                    source_width: r.width as f64,
                    source_height: r.height as f64,
                    points: dots.clone(),
                };
                p.insert(
                    r.image_id.clone(),
                    c.clone(),
                    PredictionPayload::Points(pts),
                )
                .unwrap();
            }
        }
        let r = run_distractor_direct(&s, &p, 0, Aggregation::PerPair).unwrap();
        assert!((r.cntp - 1.0).abs() < 1e-9 && (r.cntr - 1.0).abs() < 1e-9);

        let mut bad = PredictionStore::new();
        for (i, c) in p.keys() {
            bad.insert(i, c.clone(), dense(DensityGrid::zeros(5, 5).unwrap()))
                .unwrap();
        }
        assert!(matches!(
            run_distractor_direct(&s, &bad, 1, Aggregation::PerPair),
            Err(Error::GeometryMismatch { .. })
        ));
    }

    #[test]
    fn level_too_fine() {
        let s = corpus();
        let mut p = PredictionStore::new();
        for (i, c) in required_keys(&s, Protocol::Distractor) {
            p.insert(i, c, dense(DensityGrid::zeros(8, 8).unwrap()))
                .unwrap();
        }
        assert!(matches!(
            run_distractor_direct(&s, &p, 4, Aggregation::PerPair),
            Err(Error::LevelTooFine { .. })
        ));
    }

    fn mosaic_fixture() -> (AnnotationStore, MosaicManifest) {
        let s = AnnotationStore::new(
            [cat("a"), cat("b")],
            [
                record(
                    "p",
                    8,
                    4,
                    &[("a", vec![[1.0, 1.0], [5.0, 2.0], [7.0, 3.0]])],
                ),
                record("n", 8, 4, &[("b", vec![[1.0, 1.0]])]),
            ],
        )
        .unwrap();
        let m = build_mosaic_manifest(s.record("p").unwrap(), &cat("a"), s.record("n").unwrap())
            .unwrap();
        (s, m)
    }

    #[test]
    fn mosaic_top_only_prediction_is_perfect() {
        let (_, m) = mosaic_fixture();
        let mut p = PredictionStore::new();
        p.insert(
            m.id.clone(),
            cat("a"),
            dense(impulse(8, 8, &[(1, 1, 1.0), (2, 5, 1.0), (3, 7, 1.0)])),
        )
        .unwrap();
        let r =
            run_distractor_mosaic(std::slice::from_ref(&m), &p, 1, Aggregation::PerPair).unwrap();
        assert_eq!((r.cntp, r.cntr), (1.0, 1.0));
        let check = &r.closed_form.as_ref().unwrap()[0];
        assert_eq!((check.closed_form_cntp, check.closed_form_cntr), (1.0, 1.0));
    }

    #[test]
    fn mosaic_bottom_mass_matches_closed_form() {
        let (_, m) = mosaic_fixture();
        let mut p = PredictionStore::new();
        p.insert(
            m.id.clone(),
            cat("a"),
            dense(impulse(8, 8, &[(1, 1, 2.0), (6, 3, 2.0)])),
        )
        .unwrap();
        let r =
            run_distractor_mosaic(std::slice::from_ref(&m), &p, 1, Aggregation::PerPair).unwrap();
        let check = &r.closed_form.as_ref().unwrap()[0];
        assert_eq!((check.c1, check.c2, check.c1_ground_truth), (2.0, 2.0, 3.0));
        assert_eq!(check.closed_form_cntp, 0.5);
        assert_eq!(check.closed_form_cntr, 2.0 / 3.0);
        assert!((check.closed_form_cntp - check.general_cntp).abs() < 1e-12);
        assert!((check.closed_form_cntr - check.general_cntr).abs() < 1e-12);
    }

    #[test]
    fn mosaic_zero_prediction() {
        let (_, m) = mosaic_fixture();
        let mut p = PredictionStore::new();
        p.insert(
            m.id.clone(),
            cat("a"),
            dense(DensityGrid::zeros(8, 8).unwrap()),
        )
        .unwrap();
        let r =
            run_distractor_mosaic(std::slice::from_ref(&m), &p, 1, Aggregation::PerPair).unwrap();
        assert_eq!((r.cntp, r.cntr, r.game), (0.0, 0.0, 3.0));
        let r2 =
            run_distractor_mosaic(std::slice::from_ref(&m), &p, 2, Aggregation::PerPair).unwrap();
        assert!(r2.closed_form.is_none());
        assert!(run_distractor_mosaic(
            std::slice::from_ref(&m),
            &PredictionStore::new(),
            1,
            Aggregation::PerPair
        )
        .is_err());
    }

    #[test]
    fn pairing() {
        let s = AnnotationStore::new(
            [cat("a"), cat("b")],
            [
                record("x", 10, 10, &[("a", vec![[1.0, 1.0]])]),
                record("y", 10, 10, &[("b", vec![[1.0, 1.0]])]),
            ],
        )
        .unwrap();
        let p = pair_mosaics(&s, 7).unwrap();
        assert_eq!(p.manifests.len(), 2);
        assert_eq!(p.manifests[0].id, "x+y");
        assert_eq!(p.manifests[1].id, "y+x");
        assert_eq!(pair_mosaics(&s, 7).unwrap(), p);

        // Category a is in every image, so no image can host it as a negative.
        let shared = AnnotationStore::new(
            [cat("a"), cat("b")],
            [
                record("x", 10, 10, &[("a", vec![[1.0, 1.0]])]),
                record("y", 10, 10, &[("a", vec![[1.0, 1.0]])]),
                record(
                    "z",
                    10,
                    10,
                    &[("a", vec![[1.0, 1.0]]), ("b", vec![[2.0, 2.0]])],
                ),
            ],
        )
        .unwrap();
        let p = pair_mosaics(&shared, 1).unwrap();
        assert_eq!(p.manifests.len(), 1);
        assert_eq!(p.manifests[0].category, cat("b"));
        assert_eq!(p.skipped.len(), 3);
        assert!(p.skipped.iter().all(|s| s.category == Some(cat("a"))));
    }

    #[test]
    fn classic_errors_over_positives() {
        let s = corpus();
        let mut p = PredictionStore::new();
        p.insert("i", cat("a"), dense(impulse(8, 8, &[(0, 0, 5.0)])))
            .unwrap();
        p.insert("i", cat("b"), dense(impulse(8, 8, &[(0, 0, 1.0)])))
            .unwrap();
        p.insert("j", cat("c"), dense(impulse(8, 8, &[(0, 0, 1.0)])))
            .unwrap();
        let r = run_classic(&s, &p).unwrap();
        assert_eq!(r.mae, 1.0);
        assert!((r.rmse - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rasterized_oracle_on_canvas() {
        let r = record(
            "big",
            768,
            768,
            &[("a", vec![[100.0, 100.0], [600.0, 120.0]])],
        );
        let s = AnnotationStore::new([cat("a")], [r.clone()]).unwrap();
        let grid = points_to_density(&InstancePointList {
            source_width: 768.0,
            source_height: 768.0,
            points: r.dots[&cat("a")].clone(),
        })
        .unwrap();
        let mut p = PredictionStore::new();
        p.insert("big", cat("a"), dense(grid)).unwrap();
        let d = run_distractor_direct(&s, &p, 1, Aggregation::PerPair).unwrap();
        assert!((d.cntp - 1.0).abs() < 1e-9 && d.game < 1e-9);
    }
}
