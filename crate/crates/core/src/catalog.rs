//! Item universe: identifiers, embeddings, categorical attributes, cosine
//! similarity and exact nearest-neighbor search.
//!
//! A [`Catalog`] is immutable once built and can be shared across worker
//! threads behind an `Arc`.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the unit-norm invariant of stored embeddings.
pub const NORM_TOLERANCE: f64 = 1e-9;

/// Standard deviation of the per-coordinate noise added by
/// [`generate_synthetic`].
pub const DEFAULT_NOISE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(String);

impl ItemId {
    pub fn new(id: impl Into<String>) -> Self {
        ItemId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ItemId {
    fn from(s: &str) -> Self {
        ItemId(s.to_owned())
    }
}

impl From<String> for ItemId {
    fn from(s: String) -> Self {
        ItemId(s)
    }
}

impl std::borrow::Borrow<str> for ItemId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// One categorical attribute and its finite value domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub values: Vec<String>,
}

impl Attribute {
    pub fn new<S: Into<String>>(name: impl Into<String>, values: impl IntoIterator<Item = S>) -> Self {
        Attribute {
            name: name.into(),
            values: values.into_iter().map(Into::into).collect(),
        }
    }

    fn value_index(&self, value: &str) -> Option<usize> {
        self.values.iter().position(|v| v == value)
    }
}

/// A schema of `n` attributes named `attr0..` whose domains are `v0..v{size-1}`.
pub fn uniform_schema(domain_sizes: &[usize]) -> Vec<Attribute> {
    domain_sizes
        .iter()
        .enumerate()
        .map(|(a, &size)| Attribute::new(format!("attr{a}"), (0..size).map(|v| format!("v{v}"))))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub id: ItemId,
    pub embedding: Vec<f64>,
    pub attributes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    dimension: usize,
    attribute_schema: Vec<Attribute>,
}

/// Immutable, id-indexed collection of items.
///
/// Items are stored in ascending id order, so positional indices double as
/// the tie-break order used throughout the crate.
#[derive(Debug, Clone)]
pub struct Catalog {
    dimension: usize,
    schema: Vec<Attribute>,
    items: Vec<Item>,
    codes: Vec<Vec<usize>>,
    index: HashMap<ItemId, usize>,
}

impl PartialEq for Catalog {
    fn eq(&self, other: &Self) -> bool {
        self.dimension == other.dimension && self.schema == other.schema && self.items == other.items
    }
}

impl Catalog {
    pub fn new(dimension: usize, schema: Vec<Attribute>, mut items: Vec<Item>) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::param("catalog dimension must be positive"));
        }
        if items.is_empty() {
            return Err(Error::param("catalog must contain at least one item"));
        }
        items.sort_by(|a, b| a.id.cmp(&b.id));
        let mut index = HashMap::with_capacity(items.len());
        let mut codes = Vec::with_capacity(items.len());
        for (pos, item) in items.iter().enumerate() {
            validate_item(item, dimension, &schema)?;
            codes.push(encode_attributes(item, &schema)?);
            if index.insert(item.id.clone(), pos).is_some() {
                return Err(Error::param(format!("duplicate item id `{}`", item.id)));
            }
        }
        Ok(Catalog {
            dimension,
            schema,
            items,
            codes,
            index,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn schema(&self) -> &[Attribute] {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Items in ascending id order.
    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn ids(&self) -> impl Iterator<Item = &ItemId> + '_ {
        self.items.iter().map(|it| &it.id)
    }

    pub fn get(&self, id: &str) -> Result<&Item> {
        self.position(id).map(|p| &self.items[p])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Position of `id` in ascending-id order.
    pub fn position(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::NotFound(ItemId::from(id)))
    }

    pub fn item_at(&self, pos: usize) -> &Item {
        &self.items[pos]
    }

    /// Attribute values of the item at `pos` as indices into each domain.
    pub fn codes_at(&self, pos: usize) -> &[usize] {
        &self.codes[pos]
    }

    /// Offset of each attribute's one-hot block in the embedding layout used
    /// by [`generate_synthetic`].
    pub fn block_offsets(&self) -> Vec<usize> {
        self.schema
            .iter()
            .scan(0, |acc, attr| {
                let start = *acc;
                *acc += attr.values.len();
                Some(start)
            })
            .collect()
    }

    pub fn similarity_between(&self, a: &str, b: &str) -> Result<f64> {
        similarity(&self.get(a)?.embedding, &self.get(b)?.embedding)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let header_line = match lines.next() {
            Some(line) => line.map_err(|e| Error::io(path, e))?,
            None => return Err(Error::parse(path, 1, "missing header line")),
        };
        let header: Header = serde_json::from_str(&header_line)
            .map_err(|e| Error::parse(path, 1, format!("bad header: {e}")))?;
        if header.dimension == 0 {
            return Err(Error::parse(path, 1, "dimension must be positive"));
        }
        let mut items = Vec::new();
        let mut seen = HashMap::new();
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let item: Item = serde_json::from_str(&line)
                .map_err(|e| Error::parse(path, lineno, format!("bad item record: {e}")))?;
            validate_item(&item, header.dimension, &header.attribute_schema)
                .and_then(|_| encode_attributes(&item, &header.attribute_schema).map(|_| ()))
                .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
            if let Some(first) = seen.insert(item.id.clone(), lineno) {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("duplicate item id `{}` (first seen on line {first})", item.id),
                ));
            }
            items.push(item);
        }
        if items.is_empty() {
            return Err(Error::parse(path, 1, "catalog has no items"));
        }
        Catalog::new(header.dimension, header.attribute_schema, items)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_to(&mut out).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_to<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        let header = Header {
            dimension: self.dimension,
            attribute_schema: self.schema.clone(),
        };
        serde_json::to_writer(&mut *out, &header)?;
        out.write_all(b"\n")?;
        for item in &self.items {
            serde_json::to_writer(&mut *out, item)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn validate_item(item: &Item, dimension: usize, schema: &[Attribute]) -> Result<()> {
    if item.embedding.len() != dimension {
        return Err(Error::param(format!(
            "item `{}` has embedding length {}, expected {dimension}",
            item.id,
            item.embedding.len()
        )));
    }
    let norm = l2_norm(&item.embedding);
    if !norm.is_finite() || (norm - 1.0).abs() > NORM_TOLERANCE {
        return Err(Error::param(format!(
            "item `{}` embedding has norm {norm}, expected 1",
            item.id
        )));
    }
    if item.attributes.len() != schema.len() {
        return Err(Error::param(format!(
            "item `{}` has {} attributes, expected {}",
            item.id,
            item.attributes.len(),
            schema.len()
        )));
    }
    Ok(())
}

fn encode_attributes(item: &Item, schema: &[Attribute]) -> Result<Vec<usize>> {
    item.attributes
        .iter()
        .zip(schema)
        .map(|(value, attr)| {
            attr.value_index(value).ok_or_else(|| {
                Error::param(format!(
                    "item `{}` has value `{value}` outside the domain of `{}`",
                    item.id, attr.name
                ))
            })
        })
        .collect()
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn normalize(v: &mut [f64]) {
    let norm = l2_norm(v);
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity, clamped to `[-1, 1]`. A zero vector has similarity 0
/// to everything.
pub fn similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::param(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(cosine(a, b))
}

pub(crate) fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let denom = l2_norm(a) * l2_norm(b);
    if denom == 0.0 {
        return 0.0;
    }
    (dot(a, b) / denom).clamp(-1.0, 1.0)
}

/// Orders `(similarity, id)` pairs by descending similarity, then ascending id.
pub fn by_similarity_then_id(a: (f64, &str), b: (f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

/// The `k` items most similar to `query_id`, descending by similarity with
/// ties broken by ascending id.
pub fn nearest_neighbors(
    catalog: &Catalog,
    query_id: &str,
    k: usize,
    exclude_self: bool,
) -> Result<Vec<(ItemId, f64)>> {
    let query = catalog.position(query_id)?;
    let available = catalog.len() - usize::from(exclude_self);
    if k == 0 || k > available {
        return Err(Error::param(format!(
            "k must be in 1..={available}, got {k}"
        )));
    }
    let q = &catalog.item_at(query).embedding;
    let mut scored: Vec<(f64, usize)> = catalog
        .items()
        .iter()
        .enumerate()
        .filter(|&(pos, _)| !(exclude_self && pos == query))
        .map(|(pos, item)| (cosine(q, &item.embedding), pos))
        .collect();
    // positions are in ascending id order, so comparing them is the id tie-break
    let cmp = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, cmp);
        scored.truncate(k);
    }
    scored.sort_unstable_by(cmp);
    Ok(scored
        .into_iter()
        .map(|(s, pos)| (catalog.item_at(pos).id.clone(), s))
        .collect())
}

/// Seeded attribute-correlated catalog: each embedding is the concatenation
/// of one one-hot block per attribute, zero padding up to `dimension`, and
/// Gaussian noise on every coordinate, then L2-normalized.
pub fn generate_synthetic(
    seed: u64,
    n_items: usize,
    dimension: usize,
    schema: Vec<Attribute>,
) -> Result<Catalog> {
    generate_synthetic_with_noise(seed, n_items, dimension, schema, DEFAULT_NOISE)
}

pub fn generate_synthetic_with_noise(
    seed: u64,
    n_items: usize,
    dimension: usize,
    schema: Vec<Attribute>,
    noise: f64,
) -> Result<Catalog> {
    if n_items < 2 {
        return Err(Error::param(format!("n_items must be >= 2, got {n_items}")));
    }
    if dimension < 2 {
        return Err(Error::param(format!("dimension must be >= 2, got {dimension}")));
    }
    if let Some(attr) = schema.iter().find(|a| a.values.len() < 2) {
        return Err(Error::param(format!(
            "attribute `{}` needs at least 2 values",
            attr.name
        )));
    }
    let block_len: usize = schema.iter().map(|a| a.values.len()).sum();
    if block_len > dimension {
        return Err(Error::param(format!(
            "dimension {dimension} cannot hold {block_len} one-hot attribute coordinates"
        )));
    }
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(Error::param(format!("noise must be a non-negative number, got {noise}")));
    }
    let gaussian = Normal::new(0.0, noise).map_err(|e| Error::param(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = (n_items - 1).to_string().len().max(4);

    let mut items = Vec::with_capacity(n_items);
    for i in 0..n_items {
        let mut embedding = vec![0.0; dimension];
        let mut attributes = Vec::with_capacity(schema.len());
        let mut offset = 0;
        for attr in &schema {
            let v = rng.random_range(0..attr.values.len());
            embedding[offset + v] = 1.0;
            attributes.push(attr.values[v].clone());
            offset += attr.values.len();
        }
        for x in embedding.iter_mut() {
            *x += gaussian.sample(&mut rng);
        }
        normalize(&mut embedding);
        if l2_norm(&embedding) == 0.0 {
            // only reachable with an empty schema and zero noise
            embedding[0] = 1.0;
        }
        items.push(Item {
            id: ItemId(format!("item-{i:0width$}")),
            embedding,
            attributes,
        });
    }
    Catalog::new(dimension, schema, items)
}
