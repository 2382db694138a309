//! Relation between negative-prompt errors and the semantic similarity of the
//! negative category to the categories actually present in the image.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{derive_prompt_sets, AnnotationStore, CategoryId, PredictionStore};
use crate::error::{Error, Result};
use crate::numeric::{mean, quantile_sorted};

pub const NUM_BINS: usize = 5;

/// Text embeddings of category names, all of one dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub dimension: usize,
    /// How the vectors were produced, e.g. the prompt template.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
    pub vectors: BTreeMap<CategoryId, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dimension: usize, vectors: BTreeMap<CategoryId, Vec<f64>>) -> Result<Self> {
        let table = EmbeddingTable {
            dimension,
            template: None,
            vectors,
        };
        table.validate()?;
        Ok(table)
    }

    fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::Embedding("dimension must be positive".into()));
        }
        for (cat, v) in &self.vectors {
            if v.len() != self.dimension {
                return Err(Error::Embedding(format!(
                    "{cat} has dimension {}, table declares {}",
                    v.len(),
                    self.dimension
                )));
            }
            if v.iter().any(|x| !x.is_finite()) || v.iter().all(|&x| x == 0.0) {
                return Err(Error::Embedding(format!(
                    "{cat} has a zero or non-finite vector"
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let table: EmbeddingTable =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        table.validate().map_err(|e| Error::parse(path, e))?;
        Ok(table)
    }

    pub fn get(&self, category: &CategoryId) -> Result<&[f64]> {
        self.vectors
            .get(category)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Embedding(format!("no embedding for {category}")))
    }
}

/// One `(image, negative category)` observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemSimSample {
    pub image_id: String,
    pub negative_category: CategoryId,
    /// The most similar positive category of the image.
    pub reference_category: CategoryId,
    pub similarity: f64,
    /// Negative-prompt prediction divided by the reference category's count.
    pub normalized_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub count: usize,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub q1: Option<f64>,
    pub q3: Option<f64>,
}

/// Five equal-width similarity bins with quartile summaries of the errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinReport {
    pub edges: Vec<f64>,
    pub bins: Vec<BinStats>,
    /// All similarities coincide; everything sits in the first bin.
    pub degenerate: bool,
}

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch(format!(
            "vectors of length {} and {}",
            u.len(),
            v.len()
        )));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Embedding(
            "cosine similarity of a zero vector".into(),
        ));
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Highest similarity between `neg` and any positive, with the positive that
/// attains it. Ties go to the lexicographically smallest category.
pub fn max_positive_similarity<'a>(
    neg: &CategoryId,
    positives: &'a BTreeSet<CategoryId>,
    table: &EmbeddingTable,
) -> Result<(f64, &'a CategoryId)> {
    let v = table.get(neg)?;
    let mut best: Option<(f64, &CategoryId)> = None;
    for p in positives {
        let s = cosine_similarity(table.get(p)?, v)?;
        if best.is_none_or(|(b, _)| s > b) {
            best = Some((s, p));
        }
    }
    best.ok_or(Error::EmptyInput("no positive categories"))
}

/// One sample per `(image, negative category)`, in image then category order.
/// Images without negatives are skipped.
pub fn collect_samples(
    store: &AnnotationStore,
    preds: &PredictionStore,
    table: &EmbeddingTable,
) -> Result<Vec<SemSimSample>> {
    let mut out = Vec::new();
    for record in store.records() {
        let sets = derive_prompt_sets(store, &record.image_id)?;
        if sets.negatives.is_empty() || sets.positives.is_empty() {
            continue;
        }
        for neg in &sets.negatives {
            let (similarity, reference) = max_positive_similarity(neg, &sets.positives, table)?;
            let gt = record.count(reference);
            assert!(gt > 0, "positive category {reference} without dots");
            let predicted = preds.total(&record.image_id, neg)?;
            out.push(SemSimSample {
                image_id: record.image_id.clone(),
                negative_category: neg.clone(),
                reference_category: reference.clone(),
                similarity,
                normalized_error: predicted / gt as f64,
            });
        }
    }
    Ok(out)
}

/// Pearson correlation; `None` when either series has zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<Option<f64>> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch(format!(
            "series of length {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::EmptyInput("pearson needs at least two points"));
    }
    let mx = mean(xs).expect("non-empty");
    let my = mean(ys).expect("non-empty");
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)))
}

fn stats(mut errors: Vec<f64>) -> BinStats {
    if errors.is_empty() {
        return BinStats {
            count: 0,
            mean: None,
            median: None,
            q1: None,
            q3: None,
        };
    }
    errors.sort_by(f64::total_cmp);
    BinStats {
        count: errors.len(),
        mean: mean(&errors),
        median: Some(quantile_sorted(&errors, 0.5)),
        q1: Some(quantile_sorted(&errors, 0.25)),
        q3: Some(quantile_sorted(&errors, 0.75)),
    }
}

/// Bins samples by similarity. With `range = None` the bins span the observed
/// minimum and maximum; a fixed range clamps outliers into the end bins.
/// Bins are half-open except the last, which is closed on the right.
pub fn bin_statistics(samples: &[SemSimSample], range: Option<(f64, f64)>) -> Result<BinReport> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("no samples to bin"));
    }
    let (lo, hi) = match range {
        Some((lo, hi)) if lo < hi => (lo, hi),
        Some((lo, hi)) => {
            return Err(Error::Config(format!("bin range [{lo}, {hi}] is empty")));
        }
        None => samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
                (lo.min(s.similarity), hi.max(s.similarity))
            }),
    };
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); NUM_BINS];
    if lo == hi {
        buckets[0] = samples.iter().map(|s| s.normalized_error).collect();
        return Ok(BinReport {
            edges: vec![lo; NUM_BINS + 1],
            bins: buckets.into_iter().map(stats).collect(),
            degenerate: true,
        });
    }
    let width = (hi - lo) / NUM_BINS as f64;
    let mut edges: Vec<f64> = (0..=NUM_BINS).map(|k| lo + k as f64 * width).collect();
    edges[NUM_BINS] = hi;
    let inner = &edges[1..NUM_BINS];
    for s in samples {
        let idx = inner.partition_point(|&e| e <= s.similarity);
        buckets[idx].push(s.normalized_error);
    }
    Ok(BinReport {
        edges,
        bins: buckets.into_iter().map(stats).collect(),
        degenerate: false,
    })
}

/// Full similarity analysis of one model's negative-prompt predictions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemSimReport {
    /// Correlation of similarity with normalized error; absent when undefined.
    pub pearson: Option<f64>,
    pub bins: BinReport,
    pub samples: Vec<SemSimSample>,
}

pub fn analyze(
    store: &AnnotationStore,
    preds: &PredictionStore,
    table: &EmbeddingTable,
    range: Option<(f64, f64)>,
) -> Result<SemSimReport> {
    let samples = collect_samples(store, preds, table)?;
    let xs: Vec<f64> = samples.iter().map(|s| s.similarity).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.normalized_error).collect();
    let pearson = if samples.len() >= 2 {
        pearson(&xs, &ys)?
    } else {
        None
    };
    Ok(SemSimReport {
        pearson,
        bins: bin_statistics(&samples, range)?,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cat(s: &str) -> CategoryId {
        CategoryId::new(s).unwrap()
    }

    fn sample(similarity: f64, err: f64) -> SemSimSample {
        SemSimSample {
            image_id: "i".into(),
            negative_category: cat("n"),
            reference_category: cat("p"),
            similarity,
            normalized_error: err,
        }
    }

    #[test]
    fn cosine_cases() {
        assert!(
            (cosine_similarity(&[3.0, -2.0, 1.0], &[3.0, -2.0, 1.0]).unwrap() - 1.0).abs() < 1e-15
        );
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 5.0]).unwrap(), 0.0);
        let s = cosine_similarity(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((s - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(cosine_similarity(&[1.0], &[1.0, 0.0]).is_err());
        assert!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    fn table(entries: &[(&str, Vec<f64>)]) -> EmbeddingTable {
        EmbeddingTable::new(
            entries[0].1.len(),
            entries.iter().map(|(c, v)| (cat(c), v.clone())).collect(),
        )
        .unwrap()
    }

    #[test]
    fn max_similarity() {
        let t = table(&[
            ("n", vec![1.0, 0.0]),
            ("a", vec![0.3, (1.0f64 - 0.09).sqrt()]),
            ("b", vec![0.8, 0.6]),
            ("c", vec![2.0, 0.0]),
            ("d", vec![5.0, 0.0]),
        ]);
        let one: BTreeSet<_> = [cat("a")].into();
        let (s, c) = max_positive_similarity(&cat("n"), &one, &t).unwrap();
        assert!((s - 0.3).abs() < 1e-12);
        assert_eq!(c, &cat("a"));

        let two: BTreeSet<_> = [cat("a"), cat("b")].into();
        let (s, c) = max_positive_similarity(&cat("n"), &two, &t).unwrap();
        assert!((s - 0.8).abs() < 1e-12);
        assert_eq!(c, &cat("b"));

        let tie: BTreeSet<_> = [cat("d"), cat("c")].into();
        let (s, c) = max_positive_similarity(&cat("n"), &tie, &t).unwrap();
        assert_eq!((s, c), (1.0, &cat("c")));

        let unknown: BTreeSet<_> = [cat("zz")].into();
        assert!(max_positive_similarity(&cat("n"), &unknown, &t).is_err());
    }

    #[test]
    fn table_validation() {
        let mut v = BTreeMap::new();
        v.insert(cat("a"), vec![1.0, 2.0]);
        assert!(EmbeddingTable::new(3, v.clone()).is_err());
        v.insert(cat("b"), vec![0.0, 0.0]);
        assert!(EmbeddingTable::new(2, v).is_err());
    }

    #[test]
    fn pearson_cases() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        assert_eq!(pearson(&xs, &ys).unwrap(), Some(1.0));
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert_eq!(pearson(&xs, &neg).unwrap(), Some(-1.0));
        assert_eq!(
            pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap(),
            Some(0.5)
        );
        assert_eq!(pearson(&[1.0, 1.0], &[1.0, 2.0]).unwrap(), None);
        assert!(pearson(&[1.0], &[1.0]).is_err());
        assert!(pearson(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn binning() {
        let flat: Vec<_> = (0..4).map(|i| sample(0.3, i as f64)).collect();
        let r = bin_statistics(&flat, None).unwrap();
        assert!(r.degenerate);
        assert_eq!(
            r.bins.iter().map(|b| b.count).collect::<Vec<_>>(),
            vec![4, 0, 0, 0, 0]
        );

        let spread: Vec<_> = (0..10)
            .map(|k| sample(0.1 + 0.7 * k as f64 / 9.0, 0.0))
            .collect();
        let r = bin_statistics(&spread, None).unwrap();
        assert_eq!(
            r.bins.iter().map(|b| b.count).collect::<Vec<_>>(),
            vec![2; 5]
        );
        assert_eq!(r.edges.len(), 6);
        assert!(r.edges.windows(2).all(|w| w[0] < w[1]));

        let one_bin: Vec<_> = [1.0, 2.0, 3.0, 4.0]
            .iter()
            .enumerate()
            .map(|(i, &e)| sample(if i == 0 { 0.0 } else { 0.01 }, e))
            .chain(std::iter::once(sample(1.0, 100.0)))
            .collect();
        let r = bin_statistics(&one_bin, None).unwrap();
        let b = &r.bins[0];
        assert_eq!(
            (b.count, b.q1, b.median, b.q3),
            (4, Some(1.75), Some(2.5), Some(3.25))
        );
        assert_eq!(b.mean, Some(2.5));
        assert_eq!(r.bins[2].mean, None);

        let fixed = bin_statistics(&spread, Some((-1.0, 1.0))).unwrap();
        for (got, want) in fixed.edges.iter().zip([-1.0, -0.6, -0.2, 0.2, 0.6, 1.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert_eq!(fixed.bins.iter().map(|b| b.count).sum::<usize>(), 10);
        assert!(bin_statistics(&[], None).is_err());
    }
}
