//! MovieLens-format ingestion and train/test preparation.
//!
//! Ratings files are the 100k layout (`user \t item \t rating \t timestamp`)
//! or the 1M layout (`user::item::rating::timestamp`), auto-detected per
//! line separator. Item files are `u.item` pipe-separated rows with trailing
//! binary genre flags, or the 1M `movies.dat` with named genres. Explicit
//! 1-5 ratings become implicit labels (negative below 3), events are ordered
//! by timestamp, and the split keeps each user's first interactions for
//! training.
//!
//! Parsed datasets are cached next to the ratings file in a binary form
//! keyed by a content hash, so repeated runs skip the text parse.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{DriftError, Result};
use crate::partition::ItemCatalog;

/// Genre columns of the 100k item file, in column order.
pub const ML100K_GENRES: [&str; 19] = [
    "unknown",
    "Action",
    "Adventure",
    "Animation",
    "Children's",
    "Comedy",
    "Crime",
    "Documentary",
    "Drama",
    "Fantasy",
    "Film-Noir",
    "Horror",
    "Musical",
    "Mystery",
    "Romance",
    "Sci-Fi",
    "Thriller",
    "War",
    "Western",
];

const CACHE_MAGIC: &[u8; 10] = b"DRIFT-DS-1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawRating {
    pub user_id: u32,
    pub item_id: u32,
    pub rating: u8,
    pub timestamp: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interaction {
    pub user_id: u32,
    pub item_id: u32,
    pub is_positive: bool,
    pub timestamp: i64,
}

/// Interactions in globally non-decreasing timestamp order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InteractionStream {
    events: Vec<Interaction>,
}

impl InteractionStream {
    /// Sorts by timestamp; input order breaks ties.
    pub fn from_unsorted(mut events: Vec<Interaction>) -> Self {
        events.sort_by_key(|e| e.timestamp);
        InteractionStream { events }
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Interaction> {
        self.events.iter()
    }

    pub fn as_slice(&self) -> &[Interaction] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Dense-id mapping kept from a loaded file; dense ids are assigned in
/// ascending original-id order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    to_dense: HashMap<u32, u32>,
    to_orig: Vec<u32>,
}

impl IdMap {
    fn from_sorted_originals(originals: Vec<u32>) -> Self {
        let to_dense = originals
            .iter()
            .enumerate()
            .map(|(dense, &orig)| (orig, dense as u32))
            .collect();
        IdMap {
            to_dense,
            to_orig: originals,
        }
    }

    pub fn dense(&self, orig: u32) -> Option<u32> {
        self.to_dense.get(&orig).copied()
    }

    pub fn original(&self, dense: u32) -> Option<u32> {
        self.to_orig.get(dense as usize).copied()
    }

    pub fn len(&self) -> usize {
        self.to_orig.len()
    }

    pub fn is_empty(&self) -> bool {
        self.to_orig.is_empty()
    }
}

/// A parsed ratings file with dense ids, plus the item catalog when an item
/// file was supplied.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    pub ratings: Vec<RawRating>,
    pub catalog: ItemCatalog,
    pub user_map: IdMap,
    pub item_map: IdMap,
}

impl LoadedDataset {
    pub fn num_users(&self) -> usize {
        self.user_map.len()
    }

    pub fn num_items(&self) -> usize {
        self.item_map.len()
    }

    /// Implicit-feedback events in timestamp order.
    pub fn interaction_stream(&self) -> Result<InteractionStream> {
        let mut events = Vec::with_capacity(self.ratings.len());
        for r in &self.ratings {
            events.push(Interaction {
                user_id: r.user_id,
                item_id: r.item_id,
                is_positive: to_implicit(r.rating)?,
                timestamp: r.timestamp,
            });
        }
        Ok(InteractionStream::from_unsorted(events))
    }
}

/// Negative below a rating of 3, positive otherwise.
pub fn to_implicit(rating: u8) -> Result<bool> {
    match rating {
        1 | 2 => Ok(false),
        3..=5 => Ok(true),
        _ => Err(DriftError::InvalidArgument(format!(
            "rating {rating} outside 1..=5"
        ))),
    }
}

fn parse_err(path: &Path, line: usize, reason: impl Into<String>) -> DriftError {
    DriftError::Parse {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

fn split_row(line: &str) -> (Vec<&str>, &'static str) {
    if line.contains("::") {
        (line.split("::").collect(), "::")
    } else {
        (line.split('\t').collect(), "\t")
    }
}

/// Load a ratings file and, optionally, its item file.
///
/// Ids are re-indexed densely from zero (ascending original id); the maps
/// are kept on the result. Genre tags come from the item file when present.
/// A binary cache keyed by the source hash is written next to the ratings
/// file and reused on later loads.
pub fn load_movielens(ratings_path: &Path, items_path: Option<&Path>) -> Result<LoadedDataset> {
    let ratings_bytes =
        fs::read(ratings_path).map_err(|e| DriftError::io(ratings_path, e))?;
    let items_bytes = match items_path {
        Some(p) => Some(fs::read(p).map_err(|e| DriftError::io(p, e))?),
        None => None,
    };
    let hash = content_hash(&ratings_bytes, items_bytes.as_deref());
    let cache_path = cache_path_for(ratings_path);
    if let Some(cached) = try_read_cache(&cache_path, &hash) {
        return Ok(cached);
    }

    let raw = parse_ratings(ratings_path, &ratings_bytes)?;
    let parsed_items = match (items_path, &items_bytes) {
        (Some(p), Some(bytes)) => Some(parse_items(p, bytes)?),
        _ => None,
    };

    let mut user_orig: BTreeSet<u32> = BTreeSet::new();
    let mut item_orig: BTreeSet<u32> = BTreeSet::new();
    for r in &raw {
        user_orig.insert(r.user_id);
        item_orig.insert(r.item_id);
    }
    if let Some(items) = &parsed_items {
        item_orig.extend(items.keys());
    }
    let user_map = IdMap::from_sorted_originals(user_orig.into_iter().collect());
    let item_map = IdMap::from_sorted_originals(item_orig.into_iter().collect());

    let ratings: Vec<RawRating> = raw
        .iter()
        .map(|r| RawRating {
            user_id: user_map.dense(r.user_id).unwrap(),
            item_id: item_map.dense(r.item_id).unwrap(),
            rating: r.rating,
            timestamp: r.timestamp,
        })
        .collect();

    let genre_tags = parsed_items.map(|items| {
        let mut tags: BTreeMap<u32, BTreeSet<String>> = BTreeMap::new();
        for (orig, genres) in items {
            if let Some(dense) = item_map.dense(orig) {
                tags.insert(dense, genres);
            }
        }
        tags
    });
    let catalog = ItemCatalog {
        item_ids: (0..item_map.len() as u32).collect(),
        features: None,
        genre_tags,
    };

    let dataset = LoadedDataset {
        ratings,
        catalog,
        user_map,
        item_map,
    };
    if let Err(e) = write_cache(&cache_path, &hash, &dataset) {
        log::debug!("could not write dataset cache {}: {e}", cache_path.display());
    }
    Ok(dataset)
}

fn parse_ratings(path: &Path, bytes: &[u8]) -> Result<Vec<RawRating>> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| parse_err(path, 0, format!("not utf-8: {e}")))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (fields, _) = split_row(line);
        if fields.len() != 4 {
            return Err(parse_err(
                path,
                lineno,
                format!("expected 4 fields, got {}", fields.len()),
            ));
        }
        let parse_u32 = |s: &str, what: &str| {
            s.trim()
                .parse::<u32>()
                .map_err(|e| parse_err(path, lineno, format!("bad {what}: {e}")))
        };
        let user_id = parse_u32(fields[0], "user id")?;
        let item_id = parse_u32(fields[1], "item id")?;
        let rating = fields[2]
            .trim()
            .parse::<u8>()
            .map_err(|e| parse_err(path, lineno, format!("bad rating: {e}")))?;
        if !(1..=5).contains(&rating) {
            return Err(parse_err(path, lineno, format!("rating {rating} outside 1..=5")));
        }
        let timestamp = fields[3]
            .trim()
            .parse::<i64>()
            .map_err(|e| parse_err(path, lineno, format!("bad timestamp: {e}")))?;
        out.push(RawRating {
            user_id,
            item_id,
            rating,
            timestamp,
        });
    }
    Ok(out)
}

/// Item file rows mapped to genre tag sets, keyed by original item id.
fn parse_items(path: &Path, bytes: &[u8]) -> Result<BTreeMap<u32, BTreeSet<String>>> {
    // the 100k item file is latin-1; tolerate non-utf8 title bytes
    let text = String::from_utf8_lossy(bytes);
    let genre_names = genre_names_for(path, &text);
    let mut out = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut tags: BTreeSet<String> = BTreeSet::new();
        let orig_id;
        if line.contains("::") {
            // 1M layout: id::title::GenreA|GenreB
            let fields: Vec<&str> = line.split("::").collect();
            if fields.len() != 3 {
                return Err(parse_err(
                    path,
                    lineno,
                    format!("expected 3 ::-fields, got {}", fields.len()),
                ));
            }
            orig_id = fields[0]
                .trim()
                .parse::<u32>()
                .map_err(|e| parse_err(path, lineno, format!("bad item id: {e}")))?;
            tags.extend(fields[2].split('|').map(|g| g.trim().to_string()));
        } else {
            // 100k layout: id|title|...|19 binary genre flags
            let fields: Vec<&str> = line.split('|').collect();
            if fields.len() < 1 + genre_names.len() {
                return Err(parse_err(
                    path,
                    lineno,
                    format!(
                        "expected at least {} |-fields, got {}",
                        1 + genre_names.len(),
                        fields.len()
                    ),
                ));
            }
            orig_id = fields[0]
                .trim()
                .parse::<u32>()
                .map_err(|e| parse_err(path, lineno, format!("bad item id: {e}")))?;
            let flags = &fields[fields.len() - genre_names.len()..];
            for (flag, name) in flags.iter().zip(&genre_names) {
                match flag.trim() {
                    "1" => {
                        tags.insert(name.clone());
                    }
                    "0" => {}
                    other => {
                        return Err(parse_err(
                            path,
                            lineno,
                            format!("genre flag must be 0 or 1, got {other:?}"),
                        ))
                    }
                }
            }
        }
        out.insert(orig_id, tags);
    }
    Ok(out)
}

/// Genre column names: a `u.genre` file next to the item file wins, then the
/// standard 19 columns when the row shape matches, then positional names.
fn genre_names_for(items_path: &Path, items_text: &str) -> Vec<String> {
    if let Some(dir) = items_path.parent() {
        let genre_file = dir.join("u.genre");
        if let Ok(text) = fs::read_to_string(&genre_file) {
            let names: Vec<String> = text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .filter_map(|l| l.split('|').next())
                .map(|s| s.trim().to_string())
                .collect();
            if !names.is_empty() {
                return names;
            }
        }
    }
    let flag_fields = items_text
        .lines()
        .find(|l| !l.trim().is_empty() && !l.contains("::"))
        .map(|l| l.split('|').count().saturating_sub(5))
        .unwrap_or(0);
    if flag_fields == ML100K_GENRES.len() {
        ML100K_GENRES.iter().map(|s| s.to_string()).collect()
    } else {
        (0..flag_fields).map(|i| format!("genre{i:02}")).collect()
    }
}

/// Per user, the first `ceil(train_fraction * n)` interactions (timestamp
/// order) go to train and the rest to test; both halves stay in global
/// timestamp order.
pub fn chronological_split(
    stream: &InteractionStream,
    train_fraction: f64,
) -> Result<(InteractionStream, InteractionStream)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DriftError::InvalidArgument(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let mut per_user_total: HashMap<u32, usize> = HashMap::new();
    for e in stream.iter() {
        *per_user_total.entry(e.user_id).or_insert(0) += 1;
    }
    let mut train_quota: HashMap<u32, usize> = HashMap::new();
    for (&u, &n) in &per_user_total {
        let quota = (train_fraction * n as f64).ceil() as usize;
        if quota >= n {
            log::debug!("user {u} has {n} interactions; all go to train");
        }
        train_quota.insert(u, quota.min(n));
    }
    let mut seen: HashMap<u32, usize> = HashMap::new();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for e in stream.iter() {
        let count = seen.entry(e.user_id).or_insert(0);
        if *count < train_quota[&e.user_id] {
            train.push(*e);
        } else {
            test.push(*e);
        }
        *count += 1;
    }
    Ok((
        InteractionStream { events: train },
        InteractionStream { events: test },
    ))
}

fn content_hash(ratings: &[u8], items: Option<&[u8]>) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(ratings);
    if let Some(items) = items {
        hasher.update(items);
    }
    hasher.finalize().into()
}

fn cache_path_for(ratings_path: &Path) -> PathBuf {
    let mut name = ratings_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    name.push_str(".drift-cache");
    ratings_path.with_file_name(name)
}

fn try_read_cache(path: &Path, expected_hash: &[u8; 32]) -> Option<LoadedDataset> {
    let bytes = fs::read(path).ok()?;
    let mut r = bytes.as_slice();
    let mut magic = [0u8; 10];
    r.read_exact(&mut magic).ok()?;
    if &magic != CACHE_MAGIC {
        return None;
    }
    let mut hash = [0u8; 32];
    r.read_exact(&mut hash).ok()?;
    if &hash != expected_hash {
        return None;
    }
    read_cache_body(&mut r)
}

fn read_cache_body(r: &mut &[u8]) -> Option<LoadedDataset> {
    let num_users = read_u32(r)? as usize;
    let num_items = read_u32(r)? as usize;
    let n_ratings = read_u64(r)? as usize;
    let mut ratings = Vec::with_capacity(n_ratings);
    for _ in 0..n_ratings {
        let user_id = read_u32(r)?;
        let item_id = read_u32(r)?;
        let rating = read_u8(r)?;
        let timestamp = read_i64(r)?;
        ratings.push(RawRating {
            user_id,
            item_id,
            rating,
            timestamp,
        });
    }
    let mut user_orig = Vec::with_capacity(num_users);
    for _ in 0..num_users {
        user_orig.push(read_u32(r)?);
    }
    let mut item_orig = Vec::with_capacity(num_items);
    for _ in 0..num_items {
        item_orig.push(read_u32(r)?);
    }
    let has_tags = read_u8(r)? == 1;
    let genre_tags = if has_tags {
        let n = read_u32(r)? as usize;
        let mut tags: BTreeMap<u32, BTreeSet<String>> = BTreeMap::new();
        for _ in 0..n {
            let item = read_u32(r)?;
            let n_tags = read_u32(r)? as usize;
            let mut set = BTreeSet::new();
            for _ in 0..n_tags {
                let len = read_u32(r)? as usize;
                if r.len() < len {
                    return None;
                }
                let (head, rest) = r.split_at(len);
                set.insert(String::from_utf8(head.to_vec()).ok()?);
                *r = rest;
            }
            tags.insert(item, set);
        }
        Some(tags)
    } else {
        None
    };
    Some(LoadedDataset {
        ratings,
        catalog: ItemCatalog {
            item_ids: (0..num_items as u32).collect(),
            features: None,
            genre_tags,
        },
        user_map: IdMap::from_sorted_originals(user_orig),
        item_map: IdMap::from_sorted_originals(item_orig),
    })
}

fn write_cache(path: &Path, hash: &[u8; 32], ds: &LoadedDataset) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| DriftError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| DriftError::io(path, e);
    w.write_all(CACHE_MAGIC).map_err(io)?;
    w.write_all(hash).map_err(io)?;
    w.write_all(&(ds.num_users() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&(ds.num_items() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&(ds.ratings.len() as u64).to_le_bytes()).map_err(io)?;
    for r in &ds.ratings {
        w.write_all(&r.user_id.to_le_bytes()).map_err(io)?;
        w.write_all(&r.item_id.to_le_bytes()).map_err(io)?;
        w.write_all(&[r.rating]).map_err(io)?;
        w.write_all(&r.timestamp.to_le_bytes()).map_err(io)?;
    }
    for dense in 0..ds.user_map.len() as u32 {
        w.write_all(&ds.user_map.original(dense).unwrap().to_le_bytes())
            .map_err(io)?;
    }
    for dense in 0..ds.item_map.len() as u32 {
        w.write_all(&ds.item_map.original(dense).unwrap().to_le_bytes())
            .map_err(io)?;
    }
    match &ds.catalog.genre_tags {
        None => w.write_all(&[0]).map_err(io)?,
        Some(tags) => {
            w.write_all(&[1]).map_err(io)?;
            w.write_all(&(tags.len() as u32).to_le_bytes()).map_err(io)?;
            for (item, set) in tags {
                w.write_all(&item.to_le_bytes()).map_err(io)?;
                w.write_all(&(set.len() as u32).to_le_bytes()).map_err(io)?;
                for tag in set {
                    w.write_all(&(tag.len() as u32).to_le_bytes()).map_err(io)?;
                    w.write_all(tag.as_bytes()).map_err(io)?;
                }
            }
        }
    }
    w.flush().map_err(io)
}

fn read_u8(r: &mut &[u8]) -> Option<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b).ok()?;
    Some(b[0])
}

fn read_u32(r: &mut &[u8]) -> Option<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).ok()?;
    Some(u32::from_le_bytes(b))
}

fn read_u64(r: &mut &[u8]) -> Option<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).ok()?;
    Some(u64::from_le_bytes(b))
}

fn read_i64(r: &mut &[u8]) -> Option<i64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).ok()?;
    Some(i64::from_le_bytes(b))
}

/// Synthetic corpus generation for examples, scale tests and environments
/// without the real dataset.
pub mod synthetic {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha20Rng;

    /// Parameters for a synthetic MovieLens-style corpus with planted
    /// low-rank preference structure.
    #[derive(Debug, Clone)]
    pub struct SyntheticSpec {
        pub num_users: usize,
        pub num_items: usize,
        pub num_ratings: usize,
        pub num_genres: usize,
        pub seed: u64,
    }

    impl Default for SyntheticSpec {
        fn default() -> Self {
            SyntheticSpec {
                num_users: 400,
                num_items: 800,
                num_ratings: 40_000,
                num_genres: 12,
                seed: 7,
            }
        }
    }

    /// Ratings with a planted latent structure: each user and item gets a
    /// hidden 4-d vector and the rating grows with their dot product, so
    /// embedding models have signal to recover.
    pub fn ratings(spec: &SyntheticSpec) -> Vec<RawRating> {
        let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
        let latent_dim = 4;
        let latent = |rng: &mut ChaCha20Rng, n: usize| -> Vec<Vec<f64>> {
            (0..n)
                .map(|_| (0..latent_dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect()
        };
        let users = latent(&mut rng, spec.num_users);
        let items = latent(&mut rng, spec.num_items);
        let mut out = Vec::with_capacity(spec.num_ratings);
        for t in 0..spec.num_ratings {
            let u = rng.gen_range(0..spec.num_users);
            let i = rng.gen_range(0..spec.num_items);
            let affinity: f64 = users[u].iter().zip(&items[i]).map(|(a, b)| a * b).sum();
            let p = crate::loss::sigmoid(2.0 * affinity + rng.gen_range(-0.5..0.5));
            let rating = 1 + (p * 4.999).floor() as u8;
            out.push(RawRating {
                user_id: u as u32 + 1,
                item_id: i as u32 + 1,
                rating: rating.clamp(1, 5),
                timestamp: t as i64,
            });
        }
        out
    }

    /// Write a corpus in the 100k file layout (`u.data`, `u.item`,
    /// `u.genre`) under `dir` and return the two file paths.
    pub fn write_movielens_layout(dir: &Path, spec: &SyntheticSpec) -> Result<(PathBuf, PathBuf)> {
        let mut rng = ChaCha20Rng::seed_from_u64(spec.seed ^ 0x9e3779b97f4a7c15);
        let ratings = ratings(spec);
        let ratings_path = dir.join("u.data");
        let mut data = String::new();
        for r in &ratings {
            data.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                r.user_id, r.item_id, r.rating, r.timestamp
            ));
        }
        fs::write(&ratings_path, data).map_err(|e| DriftError::io(&ratings_path, e))?;

        let genre_path = dir.join("u.genre");
        let mut genres = String::new();
        for g in 0..spec.num_genres {
            genres.push_str(&format!("genre{g:02}|{g}\n"));
        }
        fs::write(&genre_path, genres).map_err(|e| DriftError::io(&genre_path, e))?;

        let items_path = dir.join("u.item");
        let mut items = String::new();
        for i in 1..=spec.num_items {
            let n_tags = rng.gen_range(1..=3usize);
            let mut flags = vec![0u8; spec.num_genres];
            for _ in 0..n_tags {
                flags[rng.gen_range(0..spec.num_genres)] = 1;
            }
            items.push_str(&format!("{i}|Item {i}|01-Jan-1995||http://example.com/{i}"));
            for f in flags {
                items.push_str(&format!("|{f}"));
            }
            items.push('\n');
        }
        fs::write(&items_path, items).map_err(|e| DriftError::io(&items_path, e))?;
        Ok((ratings_path, items_path))
    }

    /// A bare interaction stream without any file round trip.
    pub fn stream(
        num_users: usize,
        num_items: usize,
        n: usize,
        positive_rate: f64,
        seed: u64,
    ) -> InteractionStream {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let events = (0..n)
            .map(|t| Interaction {
                user_id: rng.gen_range(0..num_users as u32),
                item_id: rng.gen_range(0..num_items as u32),
                is_positive: rng.gen_bool(positive_rate),
                timestamp: t as i64,
            })
            .collect();
        InteractionStream::from_unsorted(events)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_fixture(dir: &Path, name: &str, content: &str) -> PathBuf {
        let path = dir.join(name);
        fs::write(&path, content).unwrap();
        path
    }

    #[test]
    fn loads_small_tab_separated_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_fixture(
            dir.path(),
            "u.data",
            "5\t100\t4\t300\n2\t100\t1\t100\n5\t7\t3\t200\n",
        );
        let ds = load_movielens(&path, None).unwrap();
        assert_eq!(ds.ratings.len(), 3);
        assert_eq!(ds.num_users(), 2);
        assert_eq!(ds.num_items(), 2);
        // users 2, 5 -> dense 0, 1; items 7, 100 -> dense 0, 1
        assert_eq!(ds.user_map.dense(2), Some(0));
        assert_eq!(ds.user_map.dense(5), Some(1));
        assert_eq!(ds.item_map.dense(7), Some(0));
        assert_eq!(ds.item_map.dense(100), Some(1));
        assert_eq!(ds.ratings[0].user_id, 1);
        assert_eq!(ds.ratings[0].item_id, 1);
    }

    #[test]
    fn loads_double_colon_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_fixture(dir.path(), "ratings.dat", "1::20::5::999\n2::21::2::1000\n");
        let ds = load_movielens(&path, None).unwrap();
        assert_eq!(ds.ratings.len(), 2);
        assert_eq!(ds.ratings[0].rating, 5);
    }

    #[test]
    fn rejects_out_of_range_rating() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_fixture(dir.path(), "u.data", "1\t1\t6\t10\n");
        match load_movielens(&path, None) {
            Err(DriftError::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_malformed_row_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_fixture(dir.path(), "u.data", "1\t1\t5\t10\n1\t2\t3\n");
        match load_movielens(&path, None) {
            Err(DriftError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn parses_genre_flags() {
        let dir = tempfile::tempdir().unwrap();
        let ratings = write_fixture(dir.path(), "u.data", "1\t1\t4\t10\n1\t2\t2\t20\n");
        // two synthetic genre columns defined via u.genre
        write_fixture(dir.path(), "u.genre", "Action|0\nDrama|1\n");
        let items = write_fixture(dir.path(), "u.item", "1|A|||x|1|0\n2|B|||x|1|1\n");
        let ds = load_movielens(&ratings, Some(&items)).unwrap();
        let tags = ds.catalog.genre_tags.as_ref().unwrap();
        assert_eq!(
            tags[&0],
            BTreeSet::from(["Action".to_string()])
        );
        assert_eq!(
            tags[&1],
            BTreeSet::from(["Action".to_string(), "Drama".to_string()])
        );
    }

    #[test]
    fn cache_round_trip_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        let ratings = write_fixture(
            dir.path(),
            "u.data",
            "1\t1\t4\t10\n2\t2\t2\t20\n3\t1\t5\t30\n",
        );
        let first = load_movielens(&ratings, None).unwrap();
        assert!(cache_path_for(&ratings).exists());
        let second = load_movielens(&ratings, None).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn cache_is_invalidated_when_source_changes() {
        let dir = tempfile::tempdir().unwrap();
        let ratings = write_fixture(dir.path(), "u.data", "1\t1\t4\t10\n");
        let first = load_movielens(&ratings, None).unwrap();
        fs::write(&ratings, "1\t1\t4\t10\n2\t2\t2\t20\n").unwrap();
        let second = load_movielens(&ratings, None).unwrap();
        assert_eq!(first.ratings.len(), 1);
        assert_eq!(second.ratings.len(), 2);
    }

    #[test]
    fn implicit_threshold() {
        assert!(!to_implicit(1).unwrap());
        assert!(!to_implicit(2).unwrap());
        assert!(to_implicit(3).unwrap());
        assert!(to_implicit(4).unwrap());
        assert!(to_implicit(5).unwrap());
        assert!(to_implicit(0).is_err());
        assert!(to_implicit(6).is_err());
    }

    #[test]
    fn implicit_is_monotone() {
        let mut last = false;
        for r in 1..=5u8 {
            let v = to_implicit(r).unwrap();
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn stream_is_timestamp_sorted_with_stable_ties() {
        let events = vec![
            Interaction { user_id: 0, item_id: 0, is_positive: true, timestamp: 5 },
            Interaction { user_id: 1, item_id: 1, is_positive: false, timestamp: 3 },
            Interaction { user_id: 2, item_id: 2, is_positive: true, timestamp: 5 },
        ];
        let s = InteractionStream::from_unsorted(events);
        let ts: Vec<i64> = s.iter().map(|e| e.timestamp).collect();
        assert_eq!(ts, vec![3, 5, 5]);
        // stable: user 0 before user 2 at equal timestamps
        assert_eq!(s.as_slice()[1].user_id, 0);
        assert_eq!(s.as_slice()[2].user_id, 2);
    }

    fn uniform_stream(per_user: &[usize]) -> InteractionStream {
        let mut events = Vec::new();
        let mut t = 0i64;
        for (u, &n) in per_user.iter().enumerate() {
            for k in 0..n {
                events.push(Interaction {
                    user_id: u as u32,
                    item_id: k as u32,
                    is_positive: k % 2 == 0,
                    timestamp: t,
                });
                t += 1;
            }
        }
        InteractionStream::from_unsorted(events)
    }

    #[test]
    fn split_counts_use_ceiling() {
        let (train, test) = chronological_split(&uniform_stream(&[5]), 0.8).unwrap();
        assert_eq!(train.len(), 4);
        assert_eq!(test.len(), 1);
        let (train, test) = chronological_split(&uniform_stream(&[10]), 0.8).unwrap();
        assert_eq!(train.len(), 8);
        assert_eq!(test.len(), 2);
    }

    #[test]
    fn split_tiny_user_goes_fully_to_train() {
        let (train, test) = chronological_split(&uniform_stream(&[1]), 0.8).unwrap();
        assert_eq!(train.len(), 1);
        assert_eq!(test.len(), 0);
    }

    #[test]
    fn split_is_a_partition_preserving_per_user_order() {
        let stream = synthetic::stream(7, 20, 300, 0.6, 99);
        let (train, test) = chronological_split(&stream, 0.8).unwrap();
        assert_eq!(train.len() + test.len(), stream.len());
        // per user: max train timestamp <= min test timestamp
        for u in 0..7u32 {
            let max_train = train
                .iter()
                .filter(|e| e.user_id == u)
                .map(|e| e.timestamp)
                .max();
            let min_test = test
                .iter()
                .filter(|e| e.user_id == u)
                .map(|e| e.timestamp)
                .min();
            if let (Some(a), Some(b)) = (max_train, min_test) {
                assert!(a <= b);
            }
        }
        // merging back in timestamp order reproduces the stream
        let mut merged: Vec<Interaction> =
            train.iter().chain(test.iter()).copied().collect();
        merged.sort_by_key(|e| e.timestamp);
        assert_eq!(merged, stream.as_slice());
    }

    #[test]
    fn split_rejects_degenerate_fraction() {
        let s = uniform_stream(&[4]);
        assert!(chronological_split(&s, 0.0).is_err());
        assert!(chronological_split(&s, 1.0).is_err());
    }

    #[test]
    fn id_maps_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_fixture(dir.path(), "u.data", "9\t100\t3\t1\n4\t50\t3\t2\n9\t50\t3\t3\n");
        let ds = load_movielens(&path, None).unwrap();
        for dense in 0..ds.user_map.len() as u32 {
            let orig = ds.user_map.original(dense).unwrap();
            assert_eq!(ds.user_map.dense(orig), Some(dense));
        }
        for dense in 0..ds.item_map.len() as u32 {
            let orig = ds.item_map.original(dense).unwrap();
            assert_eq!(ds.item_map.dense(orig), Some(dense));
        }
    }

    #[test]
    fn synthetic_layout_loads_back() {
        let dir = tempfile::tempdir().unwrap();
        let spec = synthetic::SyntheticSpec {
            num_users: 20,
            num_items: 30,
            num_ratings: 200,
            num_genres: 5,
            seed: 3,
        };
        let (ratings, items) = synthetic::write_movielens_layout(dir.path(), &spec).unwrap();
        let ds = load_movielens(&ratings, Some(&items)).unwrap();
        assert_eq!(ds.ratings.len(), 200);
        assert_eq!(ds.num_items(), 30);
        let tags = ds.catalog.genre_tags.as_ref().unwrap();
        assert_eq!(tags.len(), 30);
        assert!(tags.values().all(|t| !t.is_empty()));
        let stream = ds.interaction_stream().unwrap();
        assert_eq!(stream.len(), 200);
    }
}
