//! Per-item visual feature vectors, dense or sparse.
//!
//! Feature files come in two line formats, auto-detected per line:
//!
//! * sparse TSV: `item_id<TAB>coord:value<TAB>coord:value...` with strictly
//!   increasing coordinates (a line holding only the item id is a zero vector);
//! * dense CSV: `item_id,v0,v1,...,v{F-1}` (no `:` anywhere in the row).
//!
//! Vectors are stored keyed by external item id; [`FeatureStore::bind`]
//! aligns them to a corpus's dense item indices for training and evaluation.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::dataset::InteractionSet;
use crate::error::DataError;

/// A single item's feature vector.
///
/// Sparse vectors hold parallel `(coordinate, value)` arrays with strictly
/// increasing coordinates; dense vectors hold all `F` values.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureVec {
    Dense(Vec<f64>),
    Sparse { coords: Vec<u32>, values: Vec<f64> },
}

impl FeatureVec {
    /// The empty sparse vector, used for items without features (their
    /// visual contribution vanishes).
    pub fn zero() -> Self {
        FeatureVec::Sparse {
            coords: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn nnz(&self) -> usize {
        match self {
            FeatureVec::Dense(v) => v.iter().filter(|x| **x != 0.0).count(),
            FeatureVec::Sparse { coords, .. } => coords.len(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            FeatureVec::Dense(v) => v.iter().all(|x| *x == 0.0),
            FeatureVec::Sparse { coords, .. } => coords.is_empty(),
        }
    }

    /// Dot product against a dense vector of length `F`.
    pub fn dot_dense(&self, w: &[f64]) -> f64 {
        match self {
            FeatureVec::Dense(v) => crate::math::dot(v, w),
            FeatureVec::Sparse { coords, values } => coords
                .iter()
                .zip(values)
                .map(|(&c, &v)| w[c as usize] * v)
                .sum(),
        }
    }

    /// Expand to a dense vector of length `dimension`.
    pub fn to_dense(&self, dimension: usize) -> Vec<f64> {
        match self {
            FeatureVec::Dense(v) => v.clone(),
            FeatureVec::Sparse { coords, values } => {
                let mut out = vec![0.0; dimension];
                for (&c, &v) in coords.iter().zip(values) {
                    out[c as usize] = v;
                }
                out
            }
        }
    }

    /// Scale so the L2 norm is 1 (no-op on zero vectors).
    pub fn l2_normalize(&mut self) {
        let norm_sq: f64 = match self {
            FeatureVec::Dense(v) => v.iter().map(|x| x * x).sum(),
            FeatureVec::Sparse { values, .. } => values.iter().map(|x| x * x).sum(),
        };
        if norm_sq > 0.0 {
            let inv = 1.0 / norm_sq.sqrt();
            match self {
                FeatureVec::Dense(v) => v.iter_mut().for_each(|x| *x *= inv),
                FeatureVec::Sparse { values, .. } => values.iter_mut().for_each(|x| *x *= inv),
            }
        }
    }
}

/// Feature vectors keyed by external item id, with a fixed dimension `F`.
#[derive(Debug, Clone)]
pub struct FeatureStore {
    dimension: usize,
    vectors: HashMap<String, FeatureVec>,
}

impl FeatureStore {
    pub fn new(dimension: usize) -> Self {
        FeatureStore {
            dimension,
            vectors: HashMap::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, item_id: &str) -> Option<&FeatureVec> {
        self.vectors.get(item_id)
    }

    /// Insert a vector, validating coordinate bounds and ordering.
    pub fn insert(&mut self, item_id: String, vec: FeatureVec) -> Result<(), DataError> {
        validate_vec(&vec, self.dimension, &item_id, "<memory>", 0)?;
        self.vectors.insert(item_id, vec);
        Ok(())
    }

    /// Item ids in sorted order (for deterministic iteration).
    pub fn sorted_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.vectors.keys().map(|s| s.as_str()).collect();
        ids.sort_unstable();
        ids
    }

    /// L2-normalize every stored vector in place.
    pub fn l2_normalize_all(&mut self) {
        for v in self.vectors.values_mut() {
            v.l2_normalize();
        }
    }

    /// Align vectors to a corpus's dense item indices. Items without a
    /// stored vector get the zero vector; the count of such items is kept
    /// so callers can report it.
    pub fn bind(&self, data: &InteractionSet) -> ItemFeatures {
        let mut vectors = Vec::with_capacity(data.item_count());
        let mut missing = 0usize;
        for i in 0..data.item_count() {
            match self.vectors.get(data.item_id(i)) {
                Some(v) => vectors.push(v.clone()),
                None => {
                    missing += 1;
                    vectors.push(FeatureVec::zero());
                }
            }
        }
        ItemFeatures {
            dimension: self.dimension,
            vectors,
            missing,
        }
    }
}

/// Feature vectors aligned to a corpus's dense item indices.
#[derive(Debug, Clone)]
pub struct ItemFeatures {
    dimension: usize,
    vectors: Vec<FeatureVec>,
    missing: usize,
}

impl ItemFeatures {
    /// Build directly from indexed vectors (used by tests and the generator).
    pub fn from_vectors(dimension: usize, vectors: Vec<FeatureVec>) -> Self {
        ItemFeatures {
            dimension,
            vectors,
            missing: 0,
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn item_count(&self) -> usize {
        self.vectors.len()
    }

    /// Number of items that had no stored vector and fell back to zero.
    pub fn missing_count(&self) -> usize {
        self.missing
    }

    pub fn get(&self, item: usize) -> &FeatureVec {
        &self.vectors[item]
    }
}

fn validate_vec(
    vec: &FeatureVec,
    dimension: usize,
    item: &str,
    path: &str,
    line: usize,
) -> Result<(), DataError> {
    match vec {
        FeatureVec::Dense(v) => {
            if v.len() != dimension {
                return Err(DataError::BadDenseLength {
                    path: path.to_string(),
                    line,
                    item: item.to_string(),
                    found: v.len(),
                    expected: dimension,
                });
            }
        }
        FeatureVec::Sparse { coords, values } => {
            debug_assert_eq!(coords.len(), values.len());
            let mut prev: Option<u32> = None;
            for &c in coords {
                if c as usize >= dimension {
                    return Err(DataError::CoordinateOutOfRange {
                        path: path.to_string(),
                        line,
                        item: item.to_string(),
                        coord: c,
                        dimension,
                    });
                }
                if let Some(p) = prev {
                    if c <= p {
                        return Err(DataError::UnsortedCoordinates {
                            path: path.to_string(),
                            line,
                            item: item.to_string(),
                        });
                    }
                }
                prev = Some(c);
            }
        }
    }
    Ok(())
}

/// Load a feature file (formats described in the module docs).
pub fn load_features(path: impl AsRef<Path>, dimension: usize) -> Result<FeatureStore, DataError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let file = File::open(path).map_err(|source| DataError::Io {
        path: display.clone(),
        source,
    })?;
    let reader = BufReader::new(file);

    let mut store = FeatureStore::new(dimension);
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|source| DataError::Io {
            path: display.clone(),
            source,
        })?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let (item, vec) = parse_feature_line(line, dimension, &display, lineno)?;
        if store.vectors.contains_key(&item) {
            return Err(DataError::DuplicateFeatureRow {
                path: display,
                line: lineno,
                item,
            });
        }
        validate_vec(&vec, dimension, &item, &display, lineno)?;
        store.vectors.insert(item, vec);
    }
    Ok(store)
}

fn parse_feature_line(
    line: &str,
    dimension: usize,
    path: &str,
    lineno: usize,
) -> Result<(String, FeatureVec), DataError> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() >= 2 && fields[1].contains(':') {
        // sparse TSV
        let item = fields[0].to_string();
        let mut coords = Vec::with_capacity(fields.len() - 1);
        let mut values = Vec::with_capacity(fields.len() - 1);
        for token in &fields[1..] {
            let bad = || DataError::BadFeatureEntry {
                path: path.to_string(),
                line: lineno,
                item: item.clone(),
                token: token.to_string(),
            };
            let (c, v) = token.split_once(':').ok_or_else(bad)?;
            let coord: u32 = c.parse().map_err(|_| bad())?;
            let value: f64 = v.parse().map_err(|_| bad())?;
            if !value.is_finite() {
                return Err(bad());
            }
            coords.push(coord);
            values.push(value);
        }
        Ok((item, FeatureVec::Sparse { coords, values }))
    } else if fields.len() == 1 && line.contains(',') {
        // dense CSV
        let mut parts = line.split(',');
        let item = parts.next().unwrap_or_default().to_string();
        let mut values = Vec::with_capacity(dimension);
        for token in parts {
            let value: f64 = token.parse().map_err(|_| DataError::BadFeatureEntry {
                path: path.to_string(),
                line: lineno,
                item: item.clone(),
                token: token.to_string(),
            })?;
            if !value.is_finite() {
                return Err(DataError::BadFeatureEntry {
                    path: path.to_string(),
                    line: lineno,
                    item: item.clone(),
                    token: token.to_string(),
                });
            }
            values.push(value);
        }
        Ok((item, FeatureVec::Dense(values)))
    } else if fields.len() == 1 {
        // bare item id: zero vector
        Ok((fields[0].to_string(), FeatureVec::zero()))
    } else {
        Err(DataError::BadFeatureEntry {
            path: path.to_string(),
            line: lineno,
            item: fields[0].to_string(),
            token: fields[1].to_string(),
        })
    }
}

/// Write a feature file. Sparse vectors are written as sparse TSV rows and
/// dense vectors as dense CSV rows; [`load_features`] reads both back.
pub fn write_features(
    path: impl AsRef<Path>,
    store: &FeatureStore,
) -> Result<(), std::io::Error> {
    let mut out = BufWriter::new(File::create(path)?);
    for id in store.sorted_ids() {
        match &store.vectors[id] {
            FeatureVec::Dense(v) => {
                write!(out, "{id}")?;
                for x in v {
                    write!(out, ",{x}")?;
                }
                writeln!(out)?;
            }
            FeatureVec::Sparse { coords, values } => {
                write!(out, "{id}")?;
                for (c, v) in coords.iter().zip(values) {
                    write!(out, "\t{c}:{v}")?;
                }
                writeln!(out)?;
            }
        }
    }
    out.flush()
}
