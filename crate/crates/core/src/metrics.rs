//! Metric kernels: prompt-grounding scores (NMN, PCCN), patch-wise counting
//! precision/recall/F1, GAME, MAE and RMSE.
//!
//! Counts are real-valued everywhere and never rounded. Dataset reductions are
//! unweighted means with pairwise summation, so results do not depend on how
//! per-image work was scheduled.

use serde::{Deserialize, Serialize};

use crate::density::{Layout, PatchCounts};
use crate::error::{Error, Result};
use crate::numeric::{mean, pairwise_sum};

/// Patch-level true positives, false positives and false negatives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusionTriple {
    pub tp: f64,
    pub fp: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
}

/// Counting scores of one `(image, prompt)` evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub cntp: f64,
    pub cntr: f64,
    pub cntf1: f64,
    pub game: f64,
    pub tp: f64,
    pub fp: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetPrf {
    pub cntp: f64,
    pub cntr: f64,
    pub cntf1: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicErrors {
    pub mae: f64,
    pub rmse: f64,
}

/// Per-image quantities behind PCCN.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegativeImageDiag {
    pub image_id: String,
    /// Total ground-truth count over the image's positive categories.
    pub t: f64,
    pub negative_predictions: Vec<f64>,
    pub d_pos: f64,
    pub d_neg: f64,
    pub pccn_hit: bool,
}

/// PCCN input for one image.
#[derive(Clone, Debug, PartialEq)]
pub struct PccnInput {
    pub image_id: String,
    /// `(predicted, ground truth)` per positive category.
    pub positives: Vec<(f64, f64)>,
    /// Predicted count per negative category.
    pub negatives: Vec<f64>,
}

fn check_count(v: f64) -> Result<f64> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(Error::NegativeInput(v))
    }
}

pub fn patch_confusion(c: f64, c_gt: f64) -> Result<ConfusionTriple> {
    let (c, c_gt) = (check_count(c)?, check_count(c_gt)?);
    Ok(ConfusionTriple {
        tp: c.min(c_gt),
        fp: (c - c_gt).max(0.0),
        fn_: (c_gt - c).max(0.0),
    })
}

/// Image-level ratios from summed patch confusions.
///
/// Zero denominators: an image with no predicted and no true mass scores 1 on
/// every ratio; otherwise an empty prediction scores precision 0 and a
/// prediction on an image with no true mass scores recall 1 (nothing missed).
fn ratios(tp: f64, fp: f64, fn_: f64) -> (f64, f64, f64) {
    if tp + fp + fn_ == 0.0 {
        return (1.0, 1.0, 1.0);
    }
    let cntp = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let cntr = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 1.0 };
    let cntf1 = 2.0 * tp / (2.0 * tp + fp + fn_);
    (cntp, cntr, cntf1)
}

pub fn image_prf(pred: &PatchCounts, gt: &PatchCounts) -> Result<ImageScore> {
    if pred.layout != gt.layout || pred.counts.len() != gt.counts.len() {
        return Err(Error::DimensionMismatch(format!(
            "prediction has {} patches ({:?}), ground truth {} ({:?})",
            pred.counts.len(),
            pred.layout,
            gt.counts.len(),
            gt.layout
        )));
    }
    let n = pred.counts.len();
    let (mut tps, mut fps, mut fns, mut abs) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for (&c, &g) in pred.counts.iter().zip(&gt.counts) {
        let t = patch_confusion(c, g)?;
        tps.push(t.tp);
        fps.push(t.fp);
        fns.push(t.fn_);
        abs.push((c - g).abs());
    }
    let (tp, fp, fn_) = (pairwise_sum(&tps), pairwise_sum(&fps), pairwise_sum(&fns));
    let (cntp, cntr, cntf1) = ratios(tp, fp, fn_);
    Ok(ImageScore {
        cntp,
        cntr,
        cntf1,
        game: pairwise_sum(&abs),
        tp,
        fp,
        fn_,
    })
}

pub fn dataset_prf(scores: &[ImageScore]) -> Result<DatasetPrf> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("no image scores to aggregate"));
    }
    let col = |f: fn(&ImageScore) -> f64| {
        mean(&scores.iter().map(f).collect::<Vec<_>>()).expect("non-empty")
    };
    Ok(DatasetPrf {
        cntp: col(|s| s.cntp),
        cntr: col(|s| s.cntr),
        cntf1: col(|s| s.cntf1),
    })
}

pub fn game_dataset(per_image_game: &[f64]) -> Result<f64> {
    mean(per_image_game).ok_or(Error::EmptyInput("no per-image GAME values"))
}

/// MAE and RMSE over `(predicted, ground truth)` totals.
pub fn classic_errors(pairs: &[(f64, f64)]) -> Result<ClassicErrors> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("no count pairs"));
    }
    let abs: Vec<f64> = pairs.iter().map(|(c, g)| (g - c).abs()).collect();
    let sq: Vec<f64> = abs.iter().map(|e| e * e).collect();
    Ok(ClassicErrors {
        mae: mean(&abs).expect("non-empty"),
        rmse: mean(&sq).expect("non-empty").sqrt(),
    })
}

/// Normalized mean of negative predictions. Each item holds one image's
/// negative-prompt predictions and its total positive ground-truth count.
pub fn nmn(per_image: &[(Vec<f64>, f64)]) -> Result<f64> {
    if per_image.is_empty() {
        return Err(Error::EmptyInput("no images for NMN"));
    }
    let mut terms = Vec::with_capacity(per_image.len());
    for (negatives, t) in per_image {
        if *t <= 0.0 {
            return Err(Error::ZeroTotal(String::new()));
        }
        if negatives.is_empty() {
            return Err(Error::EmptyInput("image without negative predictions"));
        }
        let ratios: Vec<f64> = negatives
            .iter()
            .map(|&c| check_count(c).map(|c| c / t))
            .collect::<Result<_>>()?;
        terms.push(mean(&ratios).expect("non-empty"));
    }
    Ok(mean(&terms).expect("non-empty"))
}

/// `(d_pos, d_neg)` for one image.
pub fn pccn_distances(positives: &[(f64, f64)], negatives: &[f64]) -> Result<(f64, f64)> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::EmptyInput(
            "PCCN needs positive and negative predictions",
        ));
    }
    let pos_err: Vec<f64> = positives.iter().map(|(c, g)| (c - g).abs()).collect();
    let neg_dist: Vec<f64> = positives
        .iter()
        .map(|&(_, g)| {
            let d: Vec<f64> = negatives.iter().map(|n| (n - g).abs()).collect();
            mean(&d).expect("non-empty")
        })
        .collect();
    Ok((
        mean(&pos_err).expect("non-empty"),
        mean(&neg_dist).expect("non-empty"),
    ))
}

/// Percentage of images whose positive error is strictly below their
/// negative-to-truth distance, with the per-image breakdown.
pub fn pccn(per_image: &[PccnInput]) -> Result<(f64, Vec<NegativeImageDiag>)> {
    if per_image.is_empty() {
        return Err(Error::EmptyInput("no images for PCCN"));
    }
    let mut diags = Vec::with_capacity(per_image.len());
    for image in per_image {
        for &(c, g) in &image.positives {
            check_count(c)?;
            check_count(g)?;
        }
        for &n in &image.negatives {
            check_count(n)?;
        }
        let (d_pos, d_neg) = pccn_distances(&image.positives, &image.negatives)?;
        let gts: Vec<f64> = image.positives.iter().map(|p| p.1).collect();
        diags.push(NegativeImageDiag {
            image_id: image.image_id.clone(),
            t: pairwise_sum(&gts),
            negative_predictions: image.negatives.clone(),
            d_pos,
            d_neg,
            pccn_hit: d_pos < d_neg,
        });
    }
    Ok((pccn_from_hits(&diags), diags))
}

pub fn pccn_from_hits(diags: &[NegativeImageDiag]) -> f64 {
    let hits = diags.iter().filter(|d| d.pccn_hit).count();
    100.0 * hits as f64 / diags.len() as f64
}

/// Counting precision and recall of a stacked mosaic from its half counts:
/// `c1`, `c2` predicted in the top and bottom halves, `c1_gt` true in the top.
pub fn mosaic_closed_form(c1: f64, c1_gt: f64, c2: f64) -> Result<(f64, f64)> {
    let (c1, c1_gt, c2) = (check_count(c1)?, check_count(c1_gt)?, check_count(c2)?);
    if c1_gt == 0.0 {
        return Err(Error::ZeroTotal("mosaic top half".into()));
    }
    let tp = c1.min(c1_gt);
    let cntp = if c1 + c2 > 0.0 { tp / (c1 + c2) } else { 0.0 };
    Ok((cntp, tp / c1_gt))
}

/// Two-band patch counts for a mosaic with all true mass in the top band.
pub fn mosaic_patch_counts(
    split_row: usize,
    c1: f64,
    c1_gt: f64,
    c2: f64,
) -> (PatchCounts, PatchCounts) {
    let layout = Layout::Halves { split_row };
    (
        PatchCounts::new(layout, vec![c1, c2]),
        PatchCounts::new(layout, vec![c1_gt, 0.0]),
    )
}
