#![allow(dead_code)]

use std::path::{Path, PathBuf};

use cacbench::corpus::{
    derive_prompt_sets, load_annotations, AnnotationStore, CategoryId, PredictionPayload,
    PredictionStore,
};
use cacbench::density::{points_to_density, DensityGrid, InstancePointList, CANVAS_SIZE};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn fixture_store() -> AnnotationStore {
    load_annotations(&fixture("annotations.json")).expect("fixture annotations load")
}

/// Perfect model: rasterized ground truth for positives, empty canvas for
/// negatives.
pub fn oracle_predictions(store: &AnnotationStore) -> PredictionStore {
    let mut preds = PredictionStore::new();
    for record in store.records() {
        for category in store.universe() {
            let payload = match record.dots.get(category) {
                Some(dots) => points_to_density(&InstancePointList {
                    source_width: record.width as f64,
                    source_height: record.height as f64,
                    points: dots.clone(),
                })
                .unwrap(),
                None => DensityGrid::zeros(CANVAS_SIZE, CANVAS_SIZE).unwrap(),
            };
            preds
                .insert(
                    record.image_id.clone(),
                    category.clone(),
                    PredictionPayload::Density(payload),
                )
                .unwrap();
        }
    }
    preds
}

/// Prompt-blind model: answers every prompt with the image's total object
/// count, all of it in a single pixel.
pub fn saliency_predictions(store: &AnnotationStore) -> PredictionStore {
    let mut preds = PredictionStore::new();
    for record in store.records() {
        let t = derive_prompt_sets(store, &record.image_id)
            .unwrap()
            .total_positive_count as f64;
        for category in store.universe() {
            let mut values = vec![0.0; record.width * record.height];
            values[0] = t;
            let grid = DensityGrid::new(record.height, record.width, values).unwrap();
            preds
                .insert(
                    record.image_id.clone(),
                    category.clone(),
                    PredictionPayload::Density(grid),
                )
                .unwrap();
        }
    }
    preds
}

pub fn cat(name: &str) -> CategoryId {
    CategoryId::new(name).unwrap()
}
