//! Dataset manifests, splits, keyword subsetting and corpus statistics.
//!
//! A manifest is a JSON document:
//!
//! ```json
//! {
//!   "id": "forest-change",
//!   "root": "relative/or/absolute/root",
//!   "entries": [
//!     {"pair_id": "p1", "a": "A/p1.png", "b": "B/p1.png", "mask": "label/p1.png",
//!      "captions": [{"text": "trees were cleared", "origin": "human"}]}
//!   ],
//!   "splits": {"train": ["p1"], "val": [], "test": []}
//! }
//! ```
//!
//! `root` is resolved against the manifest's directory, and entry paths
//! against `root`. Entries may carry `"mask_domain": "multi_class"` for
//! label masks that must be binarized, and the document may carry `notes`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::compute_stats;
use crate::caption::{normalize_tokens, Caption, CaptionOrigin, CaptionSet};
use crate::error::{Error, Result};
use crate::raster::{binarize_mask, ChangeMask, ClassDomain, ImagePair, Provenance, Raster};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Schema(format!("unknown split `{other}`"))),
        }
    }
}

/// Default tree keywords used to carve the tree subset out of LEVIR-MCI.
pub const DEFAULT_TREE_KEYWORDS: [&str; 8] = [
    "tree",
    "trees",
    "forest",
    "forests",
    "woodland",
    "woodlands",
    "woods",
    "vegetation",
];

/// Published split sizes of the LEVIR-MCI tree subset.
pub const LEVIR_TREES_SPLIT_SIZES: [(Split, usize); 3] = [(Split::Train, 1518), (Split::Val, 374), (Split::Test, 413)];

/// Published split sizes of Forest-Change.
pub const FOREST_CHANGE_SPLIT_SIZES: [(Split, usize); 3] = [(Split::Train, 270), (Split::Val, 31), (Split::Test, 33)];

pub fn default_tree_keywords() -> BTreeSet<String> {
    DEFAULT_TREE_KEYWORDS.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEntry {
    pub pair_id: String,
    pub a: PathBuf,
    pub b: PathBuf,
    pub mask: PathBuf,
    pub captions: CaptionSet,
    pub mask_domain: Option<ClassDomain>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub id: String,
    /// Root as written in the manifest.
    pub root: PathBuf,
    pub entries: Vec<DatasetEntry>,
    pub splits: BTreeMap<Split, Vec<String>>,
    pub notes: Vec<String>,
    base_dir: PathBuf,
    index: HashMap<String, usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestCaption {
    text: String,
    origin: CaptionOrigin,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    pair_id: String,
    a: PathBuf,
    b: PathBuf,
    mask: PathBuf,
    #[serde(default)]
    captions: Vec<ManifestCaption>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask_domain: Option<ClassDomain>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    id: String,
    root: PathBuf,
    entries: Vec<ManifestEntry>,
    #[serde(default)]
    splits: BTreeMap<Split, Vec<String>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    notes: Vec<String>,
}

impl Dataset {
    /// Builds and validates a dataset whose root is resolved against `base_dir`.
    pub fn new(
        id: impl Into<String>,
        root: impl Into<PathBuf>,
        base_dir: impl Into<PathBuf>,
        entries: Vec<DatasetEntry>,
        splits: BTreeMap<Split, Vec<String>>,
    ) -> Result<Self> {
        let mut d = Self {
            id: id.into(),
            root: root.into(),
            entries,
            splits,
            notes: Vec::new(),
            base_dir: base_dir.into(),
            index: HashMap::new(),
        };
        d.validate()?;
        Ok(d)
    }

    fn validate(&mut self) -> Result<()> {
        let mut index = HashMap::with_capacity(self.entries.len());
        for (i, e) in self.entries.iter().enumerate() {
            if index.insert(e.pair_id.clone(), i).is_some() {
                return Err(Error::DuplicateId(e.pair_id.clone()));
            }
        }
        let mut owner: HashMap<&str, Split> = HashMap::new();
        for (&split, ids) in &self.splits {
            for id in ids {
                if !index.contains_key(id) {
                    return Err(Error::DanglingSplitRef {
                        split: split.to_string(),
                        id: id.clone(),
                    });
                }
                if let Some(prev) = owner.insert(id, split) {
                    return Err(Error::DuplicateSplit {
                        id: id.clone(),
                        first: prev.to_string(),
                        second: split.to_string(),
                    });
                }
            }
        }
        self.index = index;
        Ok(())
    }

    pub fn from_manifest_str(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let m: Manifest = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        let entries = m
            .entries
            .into_iter()
            .map(|e| {
                let captions = e
                    .captions
                    .iter()
                    .map(|c| Caption::new(&c.text, c.origin))
                    .collect::<Result<Vec<_>>>()
                    .map_err(|err| Error::Schema(format!("entry `{}`: {err}", e.pair_id)))?;
                Ok(DatasetEntry {
                    captions: CaptionSet {
                        pair_id: e.pair_id.clone(),
                        captions,
                    },
                    pair_id: e.pair_id,
                    a: e.a,
                    b: e.b,
                    mask: e.mask,
                    mask_domain: e.mask_domain,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut d = Self::new(m.id, m.root, base_dir, entries, m.splits)?;
        d.notes = m.notes;
        Ok(d)
    }

    pub fn to_manifest_string(&self) -> String {
        let m = Manifest {
            id: self.id.clone(),
            root: self.resolved_root(),
            entries: self
                .entries
                .iter()
                .map(|e| ManifestEntry {
                    pair_id: e.pair_id.clone(),
                    a: e.a.clone(),
                    b: e.b.clone(),
                    mask: e.mask.clone(),
                    captions: e
                        .captions
                        .captions
                        .iter()
                        .map(|c| ManifestCaption {
                            text: c.text(),
                            origin: c.origin,
                        })
                        .collect(),
                    mask_domain: e.mask_domain,
                })
                .collect(),
            splits: self.splits.clone(),
            notes: self.notes.clone(),
        };
        serde_json::to_string_pretty(&m).expect("manifest serializes")
    }

    /// Writes the manifest with `root` resolved so the file can live anywhere.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_manifest_string() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn resolved_root(&self) -> PathBuf {
        self.base_dir.join(&self.root)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.resolved_root().join(p)
    }

    pub fn entry(&self, pair_id: &str) -> Option<&DatasetEntry> {
        self.index.get(pair_id).map(|&i| &self.entries[i])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn split_ids(&self, split: Split) -> &[String] {
        self.splits.get(&split).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn split_of(&self, pair_id: &str) -> Option<Split> {
        self.splits
            .iter()
            .find(|(_, ids)| ids.iter().any(|i| i == pair_id))
            .map(|(&s, _)| s)
    }

    /// Ground-truth mask of an entry, binarized when the entry is multi-class.
    pub fn load_mask(&self, entry: &DatasetEntry) -> Result<ChangeMask> {
        let m = ChangeMask::load(self.resolve(&entry.mask), Provenance::GroundTruth)?;
        Ok(match entry.mask_domain {
            Some(ClassDomain::MultiClass) => binarize_mask(&m),
            _ if !m.is_binary() => binarize_mask(&m),
            _ => m,
        })
    }

    pub fn load_pair(&self, entry: &DatasetEntry) -> Result<ImagePair> {
        let a = Raster::load(self.resolve(&entry.a))?;
        let b = Raster::load(self.resolve(&entry.b))?;
        ImagePair::new(entry.pair_id.clone(), a, b)
    }

    /// Keeps only the listed entries, preserving order and split membership.
    fn retain(&self, keep: &BTreeSet<String>) -> Dataset {
        let entries = self
            .entries
            .iter()
            .filter(|e| keep.contains(&e.pair_id))
            .cloned()
            .collect();
        let splits = self
            .splits
            .iter()
            .map(|(&s, ids)| (s, ids.iter().filter(|i| keep.contains(*i)).cloned().collect()))
            .collect();
        let mut d = Dataset::new(
            self.id.clone(),
            self.root.clone(),
            self.base_dir.clone(),
            entries,
            splits,
        )
        .expect("subset of a valid dataset is valid");
        d.notes = self.notes.clone();
        d
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Dataset::from_manifest_str(&text, base)
}

fn normalized_keywords(keywords: &BTreeSet<String>) -> Result<BTreeSet<String>> {
    let k: BTreeSet<String> = keywords.iter().flat_map(|k| normalize_tokens(k)).collect();
    if k.is_empty() {
        return Err(Error::EmptyKeywords);
    }
    Ok(k)
}

/// Entries whose captions contain at least one keyword as a whole token.
pub fn filter_tree_subset(d: &Dataset, keywords: &BTreeSet<String>) -> Result<Dataset> {
    let keywords = normalized_keywords(keywords)?;
    let keep: BTreeSet<String> = d
        .entries
        .iter()
        .filter(|e| {
            e.captions
                .captions
                .iter()
                .any(|c| c.tokens.iter().any(|t| keywords.contains(t)))
        })
        .map(|e| e.pair_id.clone())
        .collect();
    let mut out = d.retain(&keep);
    let listed = keywords.iter().cloned().collect::<Vec<_>>().join(", ");
    let note = format!("tree subset keywords: {listed}");
    if !out.notes.contains(&note) {
        out.notes.push(note);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitComparison {
    pub split: Split,
    pub count: usize,
    pub reference: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetReport {
    pub keywords: Vec<String>,
    pub source_counts: BTreeMap<Split, usize>,
    pub splits: Vec<SplitComparison>,
    pub total: usize,
}

impl SubsetReport {
    pub fn matches_reference(&self) -> bool {
        self.splits.iter().all(|s| s.count == s.reference)
    }

    /// One line per split whose size differs from the published count.
    pub fn discrepancies(&self) -> Vec<String> {
        self.splits
            .iter()
            .filter(|s| s.count != s.reference)
            .map(|s| {
                format!(
                    "{}: {} pairs retained, published {} ({:+})",
                    s.split,
                    s.count,
                    s.reference,
                    s.count as i64 - s.reference as i64
                )
            })
            .collect()
    }
}

/// Applies the tree filter to a LEVIR-MCI style dataset and flags its masks
/// as multi-class so they are binarized on load.
pub fn build_levir_trees_manifest(source: &Dataset, keywords: &BTreeSet<String>) -> Result<(Dataset, SubsetReport)> {
    let mut subset = filter_tree_subset(source, keywords)?;
    subset.id = format!("{}-trees", source.id);
    for e in &mut subset.entries {
        e.mask_domain = Some(ClassDomain::MultiClass);
    }
    let report = SubsetReport {
        keywords: normalized_keywords(keywords)?.into_iter().collect(),
        source_counts: Split::ALL.iter().map(|&s| (s, source.split_ids(s).len())).collect(),
        splits: LEVIR_TREES_SPLIT_SIZES
            .iter()
            .map(|&(split, reference)| SplitComparison {
                split,
                count: subset.split_ids(split).len(),
                reference,
            })
            .collect(),
        total: subset.len(),
    };
    for line in report.discrepancies() {
        log::warn!("tree subset split size differs from the published count: {line}");
    }
    Ok((subset, report))
}

#[derive(Debug, Deserialize)]
struct LevirCcFile {
    images: Vec<LevirCcImage>,
}

#[derive(Debug, Deserialize)]
struct LevirCcImage {
    filename: String,
    #[serde(default)]
    filepath: Option<String>,
    split: String,
    sentences: Vec<LevirCcSentence>,
}

#[derive(Debug, Deserialize)]
struct LevirCcSentence {
    #[serde(default)]
    tokens: Vec<String>,
    #[serde(default)]
    raw: Option<String>,
}

/// Converts a LEVIR-CC style caption file into a dataset. Images are
/// expected at `images/<split>/{A,B,label}/<filename>` under `root`.
pub fn import_levir_cc(
    captions_json: &str,
    id: &str,
    root: impl Into<PathBuf>,
    base_dir: impl Into<PathBuf>,
) -> Result<Dataset> {
    let file: LevirCcFile = serde_json::from_str(captions_json).map_err(|e| Error::Schema(e.to_string()))?;
    let mut entries = Vec::with_capacity(file.images.len());
    let mut splits: BTreeMap<Split, Vec<String>> = BTreeMap::new();
    for img in file.images {
        let split: Split = img.split.parse()?;
        let dir = img.filepath.clone().unwrap_or_else(|| split.name().to_string());
        let pair_id = Path::new(&img.filename)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| img.filename.clone());
        let captions = img
            .sentences
            .iter()
            .filter_map(|s| {
                let text = if s.tokens.is_empty() {
                    s.raw.clone().unwrap_or_default()
                } else {
                    s.tokens.join(" ")
                };
                Caption::new(&text, CaptionOrigin::Human).ok()
            })
            .collect();
        let base = PathBuf::from("images").join(&dir);
        entries.push(DatasetEntry {
            a: base.join("A").join(&img.filename),
            b: base.join("B").join(&img.filename),
            mask: base.join("label").join(&img.filename),
            captions: CaptionSet {
                pair_id: pair_id.clone(),
                captions,
            },
            mask_domain: Some(ClassDomain::MultiClass),
            pair_id: pair_id.clone(),
        });
        splits.entry(split).or_default().push(pair_id);
    }
    Dataset::new(id, root, base_dir, entries, splits)
}

/// Builds a dataset from the `A/ B/ label/` directory convention, either per
/// split (`<root>/<split>/A/...`) or flat (`<root>/A/...`, no splits).
pub fn discover_directory(root: impl AsRef<Path>, id: &str) -> Result<Dataset> {
    let root = root.as_ref();
    let list = |dir: &Path| -> Result<Vec<String>> {
        let mut names: Vec<String> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| {
                let n = n.to_lowercase();
                n.ends_with(".png") || n.ends_with(".jpg") || n.ends_with(".jpeg")
            })
            .collect();
        names.sort();
        Ok(names)
    };
    let make = |prefix: PathBuf, name: &str| {
        let pair_id = Path::new(name)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        DatasetEntry {
            a: prefix.join("A").join(name),
            b: prefix.join("B").join(name),
            mask: prefix.join("label").join(name),
            captions: CaptionSet {
                pair_id: pair_id.clone(),
                captions: Vec::new(),
            },
            mask_domain: None,
            pair_id,
        }
    };

    let mut entries = Vec::new();
    let mut splits = BTreeMap::new();
    let per_split: Vec<Split> = Split::ALL
        .iter()
        .copied()
        .filter(|s| root.join(s.name()).join("A").is_dir())
        .collect();
    if per_split.is_empty() {
        for name in list(&root.join("A"))? {
            entries.push(make(PathBuf::new(), &name));
        }
    } else {
        for split in per_split {
            let names = list(&root.join(split.name()).join("A"))?;
            let mut ids = Vec::new();
            for name in names {
                let e = make(PathBuf::from(split.name()), &name);
                ids.push(e.pair_id.clone());
                entries.push(e);
            }
            splits.insert(split, ids);
        }
    }
    Dataset::new(id, root, PathBuf::new(), entries, splits)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub dataset_id: String,
    pub n_pairs: BTreeMap<Split, usize>,
    pub n_entries: usize,
    pub coverage_mean: f64,
    pub coverage_max: f64,
    pub coverage_min: f64,
    /// Share of masks with less than 5% change.
    pub fraction_below_5_percent: f64,
    pub coverage_histogram: Vec<HistogramBin>,
    /// Change percentage per entry, in manifest order.
    pub coverage: Vec<(String, f64)>,
    pub n_captions: usize,
    pub caption_length_mean: f64,
    /// Token count → number of captions with that length.
    pub caption_length_histogram: BTreeMap<usize, usize>,
    pub vocabulary_size: usize,
}

/// Width of the coverage histogram bins, in percent.
pub const COVERAGE_BIN_WIDTH: f64 = 5.0;

pub fn corpus_statistics(d: &Dataset) -> Result<DatasetStats> {
    let coverage: Vec<(String, f64)> = d
        .entries
        .par_iter()
        .map(|e| {
            let m = d.load_mask(e).map_err(|err| err.for_pair(&e.pair_id))?;
            let stats = compute_stats(&binarize_mask(&m)).map_err(|err| err.for_pair(&e.pair_id))?;
            Ok((e.pair_id.clone(), stats.change_percent))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(statistics_from_coverage(d, coverage))
}

/// Caption and split statistics plus coverage figures from precomputed values.
pub fn statistics_from_coverage(d: &Dataset, coverage: Vec<(String, f64)>) -> DatasetStats {
    let n = coverage.len();
    let values: Vec<f64> = coverage.iter().map(|(_, v)| *v).collect();
    let mean = if n == 0 {
        0.0
    } else {
        values.iter().sum::<f64>() / n as f64
    };
    let max = values.iter().copied().fold(0.0, f64::max);
    let min = if n == 0 {
        0.0
    } else {
        values.iter().copied().fold(100.0, f64::min)
    };
    let below5 = if n == 0 {
        0.0
    } else {
        values.iter().filter(|&&v| v < 5.0).count() as f64 / n as f64
    };
    let bins = (100.0 / COVERAGE_BIN_WIDTH) as usize;
    let mut histogram: Vec<HistogramBin> = (0..bins)
        .map(|i| HistogramBin {
            lower: i as f64 * COVERAGE_BIN_WIDTH,
            upper: (i + 1) as f64 * COVERAGE_BIN_WIDTH,
            count: 0,
        })
        .collect();
    for &v in &values {
        let i = ((v / COVERAGE_BIN_WIDTH).floor() as usize).min(bins - 1);
        histogram[i].count += 1;
    }

    let mut lengths = BTreeMap::new();
    let mut vocab = BTreeSet::new();
    let mut total_tokens = 0usize;
    let mut n_captions = 0usize;
    for e in &d.entries {
        for c in &e.captions.captions {
            *lengths.entry(c.tokens.len()).or_insert(0) += 1;
            total_tokens += c.tokens.len();
            n_captions += 1;
            vocab.extend(c.tokens.iter().cloned());
        }
    }

    DatasetStats {
        dataset_id: d.id.clone(),
        n_pairs: Split::ALL.iter().map(|&s| (s, d.split_ids(s).len())).collect(),
        n_entries: d.len(),
        coverage_mean: mean,
        coverage_max: max,
        coverage_min: min,
        fraction_below_5_percent: below5,
        coverage_histogram: histogram,
        coverage,
        n_captions,
        caption_length_mean: if n_captions == 0 {
            0.0
        } else {
            total_tokens as f64 / n_captions as f64
        },
        caption_length_histogram: lengths,
        vocabulary_size: vocab.len(),
    }
}
