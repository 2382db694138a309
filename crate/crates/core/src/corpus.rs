//! Ground-truth dot annotations, prediction manifests, and the per-image
//! positive/negative prompt split.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::density::{self, DensityGrid, InstancePointList, Point};
use crate::error::{EntryKey, Error, Result};

/// A category label from the dataset's prompt set.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct CategoryId(String);

impl CategoryId {
    pub fn new(name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if name.trim().is_empty() {
            return Err(Error::InvalidCategory(name));
        }
        Ok(CategoryId(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl<'de> Deserialize<'de> for CategoryId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        CategoryId::new(s).map_err(serde::de::Error::custom)
    }
}

impl std::fmt::Display for CategoryId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::borrow::Borrow<str> for CategoryId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    #[serde(rename = "id")]
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    pub dots: BTreeMap<CategoryId, Vec<Point>>,
}

impl AnnotationRecord {
    /// Ground-truth count of `category`; zero when it is absent.
    pub fn count(&self, category: &CategoryId) -> usize {
        self.dots.get(category).map_or(0, Vec::len)
    }

    pub fn total_count(&self) -> usize {
        self.dots.values().map(Vec::len).sum()
    }

    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidImageSize {
                image: self.image_id.clone(),
            });
        }
        let (w, h) = (self.width as f64, self.height as f64);
        for (category, dots) in &self.dots {
            if dots.is_empty() {
                return Err(Error::EmptyDotList {
                    image: self.image_id.clone(),
                    category: category.to_string(),
                });
            }
            for &[x, y] in dots {
                if !(0.0..=w).contains(&x) || !(0.0..=h).contains(&y) {
                    return Err(Error::DotOutOfBounds {
                        image: self.image_id.clone(),
                        x,
                        y,
                        width: w,
                        height: h,
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct AnnotationFile {
    categories: Vec<CategoryId>,
    images: Vec<AnnotationRecord>,
}

/// Validated annotations for a whole dataset plus its category universe.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotationStore {
    records: BTreeMap<String, AnnotationRecord>,
    universe: BTreeSet<CategoryId>,
}

/// Positive and negative prompts for one image.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PromptSets {
    pub positives: BTreeSet<CategoryId>,
    pub negatives: BTreeSet<CategoryId>,
    /// Sum of ground-truth counts over the positives.
    pub total_positive_count: usize,
}

impl AnnotationStore {
    pub fn new(
        universe: impl IntoIterator<Item = CategoryId>,
        records: impl IntoIterator<Item = AnnotationRecord>,
    ) -> Result<Self> {
        let mut set = BTreeSet::new();
        for c in universe {
            if !set.insert(c.clone()) {
                return Err(Error::DuplicateCategory(c.to_string()));
            }
        }
        let mut map = BTreeMap::new();
        for record in records {
            record.validate()?;
            if let Some(missing) = record.dots.keys().find(|c| !set.contains(*c)) {
                return Err(Error::CategoryNotInUniverse {
                    image: record.image_id.clone(),
                    category: missing.to_string(),
                });
            }
            if map.contains_key(&record.image_id) {
                return Err(Error::DuplicateImage(record.image_id));
            }
            map.insert(record.image_id.clone(), record);
        }
        Ok(AnnotationStore {
            records: map,
            universe: set,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: AnnotationFile =
            serde_json::from_str(text).map_err(|e| Error::parse("<annotations>", e))?;
        Self::new(file.categories, file.images)
    }

    /// Canonical serialization: categories and images sorted, dot lists in
    /// their original order.
    pub fn to_json(&self) -> String {
        let file = AnnotationFile {
            categories: self.universe.iter().cloned().collect(),
            images: self.records.values().cloned().collect(),
        };
        serde_json::to_string(&file).expect("annotation store serializes")
    }

    pub fn universe(&self) -> &BTreeSet<CategoryId> {
        &self.universe
    }

    /// Records in image-id order.
    pub fn records(&self) -> impl Iterator<Item = &AnnotationRecord> {
        self.records.values()
    }

    pub fn record(&self, image_id: &str) -> Result<&AnnotationRecord> {
        self.records
            .get(image_id)
            .ok_or_else(|| Error::UnknownImage(image_id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total_dots(&self) -> usize {
        self.records
            .values()
            .map(AnnotationRecord::total_count)
            .sum()
    }
}

pub fn load_annotations(path: &Path) -> Result<AnnotationStore> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    AnnotationStore::from_json(&text).map_err(|e| match e {
        Error::Parse { message, .. } => Error::parse(path, message),
        other => other,
    })
}

pub fn derive_prompt_sets(store: &AnnotationStore, image_id: &str) -> Result<PromptSets> {
    let record = store.record(image_id)?;
    let positives: BTreeSet<CategoryId> = record.dots.keys().cloned().collect();
    let negatives = store.universe.difference(&positives).cloned().collect();
    Ok(PromptSets {
        positives,
        negatives,
        total_positive_count: record.total_count(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PayloadKind {
    Density,
    Points,
}

/// What a model produced for one `(image, prompt)` query.
#[derive(Clone, Debug, PartialEq)]
pub enum PredictionPayload {
    Density(DensityGrid),
    Points(InstancePointList),
}

impl PredictionPayload {
    pub fn kind(&self) -> PayloadKind {
        match self {
            PredictionPayload::Density(_) => PayloadKind::Density,
            PredictionPayload::Points(_) => PayloadKind::Points,
        }
    }

    /// Density view; point lists are rasterized onto the fixed canvas.
    pub fn to_density(&self) -> Result<Cow<'_, DensityGrid>> {
        match self {
            PredictionPayload::Density(g) => Ok(Cow::Borrowed(g)),
            PredictionPayload::Points(p) => Ok(Cow::Owned(density::points_to_density(p)?)),
        }
    }
}

#[derive(Clone, Debug)]
enum Source {
    Memory(PredictionPayload),
    File { kind: PayloadKind, path: PathBuf },
}

/// One line of a prediction manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image: String,
    pub category: String,
    pub kind: PayloadKind,
    pub path: String,
}

/// Model outputs keyed by `(image id, category)`. File-backed entries are
/// read on demand so a full cross-probing run never holds every map at once.
#[derive(Clone, Debug, Default)]
pub struct PredictionStore {
    entries: BTreeMap<(String, CategoryId), Source>,
}

impl PredictionStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn insert_source(&mut self, image: String, category: CategoryId, source: Source) -> Result<()> {
        let key = (image, category);
        if self.entries.contains_key(&key) {
            return Err(Error::DuplicatePrediction(EntryKey {
                image: key.0,
                category: key.1.to_string(),
            }));
        }
        self.entries.insert(key, source);
        Ok(())
    }

    pub fn insert(
        &mut self,
        image: impl Into<String>,
        category: CategoryId,
        payload: PredictionPayload,
    ) -> Result<()> {
        self.insert_source(image.into(), category, Source::Memory(payload))
    }

    pub fn insert_file(
        &mut self,
        image: impl Into<String>,
        category: CategoryId,
        kind: PayloadKind,
        path: PathBuf,
    ) -> Result<()> {
        self.insert_source(image.into(), category, Source::File { kind, path })
    }

    /// Reads a manifest; payload paths are relative to the manifest's directory.
    pub fn load_manifest(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let entries: Vec<ManifestEntry> =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut store = PredictionStore::new();
        for entry in entries {
            let category = CategoryId::new(entry.category).map_err(|e| Error::parse(path, e))?;
            let file = base.join(&entry.path);
            if !file.is_file() {
                return Err(Error::io(
                    file,
                    std::io::Error::new(
                        std::io::ErrorKind::NotFound,
                        "prediction payload not found",
                    ),
                ));
            }
            store.insert_file(entry.image, category, entry.kind, file)?;
        }
        Ok(store)
    }

    /// Writes every payload under `dir` (CDM1 or points JSON) plus a
    /// `manifest.json` listing them, and returns the manifest path.
    pub fn export_to_dir(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = Vec::with_capacity(self.entries.len());
        for (i, ((image, category), _)) in self.entries.iter().enumerate() {
            let payload = self.payload(image, category)?;
            let (kind, name) = match payload.as_ref() {
                PredictionPayload::Density(g) => {
                    let name = format!("{i:06}.cdm1");
                    density::io::write_cdm1(&dir.join(&name), g)?;
                    (PayloadKind::Density, name)
                }
                PredictionPayload::Points(p) => {
                    let name = format!("{i:06}.points.json");
                    density::io::write_points(&dir.join(&name), p)?;
                    (PayloadKind::Points, name)
                }
            };
            manifest.push(ManifestEntry {
                image: image.clone(),
                category: category.to_string(),
                kind,
                path: name,
            });
        }
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, image: &str, category: &CategoryId) -> bool {
        self.entries
            .contains_key(&(image.to_string(), category.clone()))
    }

    pub fn keys(&self) -> impl Iterator<Item = (&str, &CategoryId)> {
        self.entries.keys().map(|(i, c)| (i.as_str(), c))
    }

    pub fn payload(
        &self,
        image: &str,
        category: &CategoryId,
    ) -> Result<Cow<'_, PredictionPayload>> {
        let source = self
            .entries
            .get(&(image.to_string(), category.clone()))
            .ok_or_else(|| {
                Error::MissingPredictions(vec![EntryKey {
                    image: image.to_string(),
                    category: category.to_string(),
                }])
            })?;
        match source {
            Source::Memory(p) => Ok(Cow::Borrowed(p)),
            Source::File { kind, path } => Ok(Cow::Owned(match kind {
                PayloadKind::Density => PredictionPayload::Density(density::io::read_cdm1(path)?),
                PayloadKind::Points => PredictionPayload::Points(density::io::read_points(path)?),
            })),
        }
    }

    /// Predicted count for one query: the integral of its density.
    pub fn total(&self, image: &str, category: &CategoryId) -> Result<f64> {
        match self.payload(image, category)?.as_ref() {
            PredictionPayload::Density(g) => Ok(g.total_count()),
            // Rasterization preserves unit mass per point; integrate anyway so
            // both payload kinds go through the same path.
            PredictionPayload::Points(p) => Ok(density::points_to_density(p)?.total_count()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Negative,
    Distractor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnusedReason {
    UnknownImage,
    UnknownCategory,
    NotRequired,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnusedEntry {
    pub image: String,
    pub category: String,
    pub reason: UnusedReason,
}

/// Coverage diagnosis of a prediction store for one protocol.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub protocol: Protocol,
    /// Required `(image, category)` entries with no payload.
    pub missing: Vec<EntryKey>,
    /// Images the protocol would reject outright (zero ground-truth total
    /// with negatives to probe).
    pub zero_total_images: Vec<String>,
    /// Entries present but not consumed by the protocol.
    pub unused: Vec<UnusedEntry>,
}

impl ValidationReport {
    /// True when the protocol can run to completion.
    pub fn is_runnable(&self) -> bool {
        self.missing.is_empty() && self.zero_total_images.is_empty()
    }

    pub fn is_empty(&self) -> bool {
        self.is_runnable() && self.unused.is_empty()
    }
}

/// `(image, category)` keys a protocol consumes, in sorted order.
pub fn required_keys(
    store: &AnnotationStore,
    protocol: Protocol,
) -> BTreeSet<(String, CategoryId)> {
    let mut keys = BTreeSet::new();
    for record in store.records() {
        let positives = record.dots.keys();
        match protocol {
            Protocol::Distractor => {
                keys.extend(positives.map(|c| (record.image_id.clone(), c.clone())));
            }
            Protocol::Negative => {
                // Images with nothing to probe are skipped entirely.
                if record.dots.len() == store.universe.len() {
                    continue;
                }
                keys.extend(
                    store
                        .universe
                        .iter()
                        .map(|c| (record.image_id.clone(), c.clone())),
                );
            }
        }
    }
    keys
}

pub fn validate_corpus(
    store: &AnnotationStore,
    preds: &PredictionStore,
    protocol: Protocol,
) -> ValidationReport {
    let required = required_keys(store, protocol);
    let missing = required
        .iter()
        .filter(|(i, c)| !preds.contains(i, c))
        .map(|(i, c)| EntryKey {
            image: i.clone(),
            category: c.to_string(),
        })
        .collect();
    let zero_total_images = match protocol {
        Protocol::Negative => store
            .records()
            .filter(|r| r.total_count() == 0 && !store.universe.is_empty())
            .map(|r| r.image_id.clone())
            .collect(),
        Protocol::Distractor => Vec::new(),
    };
    let unused = preds
        .keys()
        .filter(|(i, c)| !required.contains(&(i.to_string(), (*c).clone())))
        .map(|(i, c)| UnusedEntry {
            image: i.to_string(),
            category: c.to_string(),
            reason: if store.record(i).is_err() {
                UnusedReason::UnknownImage
            } else if !store.universe.contains(c) {
                UnusedReason::UnknownCategory
            } else {
                UnusedReason::NotRequired
            },
        })
        .collect();
    ValidationReport {
        protocol,
        missing,
        zero_total_images,
        unused,
    }
}
