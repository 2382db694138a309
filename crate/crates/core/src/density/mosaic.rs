use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Point;
use crate::corpus::{AnnotationRecord, CategoryId};
use crate::error::{Error, Result};

/// Geometry and transformed annotations of a positive image stacked on top of
/// a negative image. Pixel rendering happens elsewhere; this carries only what
/// evaluation needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MosaicManifest {
    /// Prediction key for the stacked image.
    pub id: String,
    pub positive_image_id: String,
    pub negative_image_id: String,
    /// Target category, present in the top half only.
    pub category: CategoryId,
    pub common_width: usize,
    pub positive_scale: f64,
    pub negative_scale: f64,
    /// Height of the scaled positive image; first row of the negative half.
    pub split_row: usize,
    pub mosaic_height: usize,
    /// Dots of every category in the top half, in mosaic coordinates.
    pub positive_dots: BTreeMap<CategoryId, Vec<Point>>,
    /// Dots of every category in the bottom half, offset by `split_row`.
    pub negative_dots: BTreeMap<CategoryId, Vec<Point>>,
}

pub fn mosaic_id(positive_image_id: &str, negative_image_id: &str) -> String {
    format!("{positive_image_id}+{negative_image_id}")
}

fn round_half_up(v: f64) -> usize {
    (v + 0.5).floor() as usize
}

/// Stacks `pos` over `neg` at the narrower of the two widths, downscaling the
/// wider image with its aspect ratio kept.
pub fn build_mosaic_manifest(
    pos: &AnnotationRecord,
    pos_category: &CategoryId,
    neg: &AnnotationRecord,
) -> Result<MosaicManifest> {
    if !pos.dots.contains_key(pos_category) {
        return Err(Error::InvalidMosaic(format!(
            "{pos_category} is not annotated in positive image {:?}",
            pos.image_id
        )));
    }
    if neg.dots.contains_key(pos_category) {
        return Err(Error::InvalidMosaic(format!(
            "{pos_category} is present in negative image {:?}",
            neg.image_id
        )));
    }
    let common_width = pos.width.min(neg.width);
    let positive_scale = common_width as f64 / pos.width as f64;
    let negative_scale = common_width as f64 / neg.width as f64;
    let split_row = round_half_up(pos.height as f64 * positive_scale);
    let negative_rows = round_half_up(neg.height as f64 * negative_scale);
    if split_row == 0 || negative_rows == 0 {
        return Err(Error::InvalidMosaic(format!(
            "scaling {:?} and {:?} to width {common_width} leaves an empty half",
            pos.image_id, neg.image_id
        )));
    }
    let mosaic_height = split_row + negative_rows;
    let width = common_width as f64;
    // Rounding the scaled height can shave the last fraction of a row, so
    // positive dots are kept strictly above the split.
    let top_limit = (split_row as f64).next_down();
    let bottom_limit = mosaic_height as f64;

    let positive_dots = pos
        .dots
        .iter()
        .map(|(cat, dots)| {
            let moved = dots
                .iter()
                .map(|&[x, y]| {
                    [
                        (x * positive_scale).min(width),
                        (y * positive_scale).min(top_limit),
                    ]
                })
                .collect();
            (cat.clone(), moved)
        })
        .collect();
    let negative_dots = neg
        .dots
        .iter()
        .map(|(cat, dots)| {
            let moved = dots
                .iter()
                .map(|&[x, y]| {
                    [
                        (x * negative_scale).min(width),
                        (split_row as f64 + y * negative_scale).min(bottom_limit),
                    ]
                })
                .collect();
            (cat.clone(), moved)
        })
        .collect();

    Ok(MosaicManifest {
        id: mosaic_id(&pos.image_id, &neg.image_id),
        positive_image_id: pos.image_id.clone(),
        negative_image_id: neg.image_id.clone(),
        category: pos_category.clone(),
        common_width,
        positive_scale,
        negative_scale,
        split_row,
        mosaic_height,
        positive_dots,
        negative_dots,
    })
}

impl MosaicManifest {
    /// Dots of the target category, all in the top half.
    pub fn target_dots(&self) -> &[Point] {
        self.positive_dots
            .get(&self.category)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Checks the geometric invariants of a manifest read from disk.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidMosaic(format!("{}: {msg}", self.id)));
        if self.common_width == 0 || self.split_row == 0 || self.split_row >= self.mosaic_height {
            return fail("degenerate geometry".into());
        }
        if !(self.positive_scale > 0.0 && self.negative_scale > 0.0) {
            return fail("scales must be positive".into());
        }
        if self.target_dots().is_empty() {
            return fail(format!("target category {} has no dots", self.category));
        }
        if self.negative_dots.contains_key(&self.category) {
            return fail(format!(
                "target category {} appears in the bottom half",
                self.category
            ));
        }
        let width = self.common_width as f64;
        let split = self.split_row as f64;
        for &[x, y] in self.positive_dots.values().flatten() {
            if !(0.0..=width).contains(&x) || !(0.0..split).contains(&y) {
                return fail(format!("top-half dot ({x}, {y}) out of place"));
            }
        }
        for &[x, y] in self.negative_dots.values().flatten() {
            if !(0.0..=width).contains(&x) || !(split..=self.mosaic_height as f64).contains(&y) {
                return fail(format!("bottom-half dot ({x}, {y}) out of place"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, w: usize, h: usize, dots: &[(&str, Vec<Point>)]) -> AnnotationRecord {
        AnnotationRecord {
            image_id: id.into(),
            width: w,
            height: h,
            dots: dots
                .iter()
                .map(|(c, d)| (CategoryId::new(*c).unwrap(), d.clone()))
                .collect(),
        }
    }

    #[test]
    fn equal_widths() {
        let pos = record("p", 400, 300, &[("a", vec![[1.0, 299.0]])]);
        let neg = record("n", 400, 200, &[("b", vec![[5.0, 0.0]])]);
        let m = build_mosaic_manifest(&pos, &CategoryId::new("a").unwrap(), &neg).unwrap();
        assert_eq!(m.common_width, 400);
        assert_eq!((m.positive_scale, m.negative_scale), (1.0, 1.0));
        assert_eq!((m.split_row, m.mosaic_height), (300, 500));
        assert_eq!(
            m.negative_dots[&CategoryId::new("b").unwrap()],
            vec![[5.0, 300.0]]
        );
        assert_eq!(m.id, "p+n");
        m.validate().unwrap();
    }

    #[test]
    fn downscales_wider_image() {
        let pos = record("p", 400, 300, &[("a", vec![[100.0, 60.0], [400.0, 300.0]])]);
        let neg = record("n", 200, 100, &[("b", vec![[200.0, 100.0]])]);
        let m = build_mosaic_manifest(&pos, &CategoryId::new("a").unwrap(), &neg).unwrap();
        assert_eq!(m.common_width, 200);
        assert_eq!(m.positive_scale, 0.5);
        assert_eq!((m.split_row, m.mosaic_height), (150, 250));
        let a = &m.positive_dots[&CategoryId::new("a").unwrap()];
        assert_eq!(a[0], [50.0, 30.0]);
        assert!(a[1][1] < 150.0);
        assert_eq!(
            m.negative_dots[&CategoryId::new("b").unwrap()],
            vec![[200.0, 250.0]]
        );
        m.validate().unwrap();
    }

    #[test]
    fn counts_preserved_and_preconditions() {
        let pos = record(
            "p",
            333,
            101,
            &[("a", vec![[3.0, 3.0]; 7]), ("c", vec![[1.0, 100.0]; 2])],
        );
        let neg = record("n", 517, 250, &[("b", vec![[517.0, 250.0]; 4])]);
        let a = CategoryId::new("a").unwrap();
        let m = build_mosaic_manifest(&pos, &a, &neg).unwrap();
        for (cat, dots) in &pos.dots {
            assert_eq!(m.positive_dots[cat].len(), dots.len());
        }
        for (cat, dots) in &neg.dots {
            assert_eq!(m.negative_dots[cat].len(), dots.len());
        }
        m.validate().unwrap();

        assert!(build_mosaic_manifest(&pos, &CategoryId::new("b").unwrap(), &neg).is_err());
        let neg_with_a = record("n2", 400, 300, &[("a", vec![[1.0, 1.0]])]);
        assert!(build_mosaic_manifest(&pos, &a, &neg_with_a).is_err());
    }
}
