//! Global embedding matrices, scoring and gradient application.
//!
//! The coordination server owns one [`EmbeddingStore`]: a dense user matrix
//! and a dense item matrix, both `rows x dim`, mutated only through
//! [`EmbeddingStore::apply_gradients`]. Scores are plain dot products.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{DriftError, Result};
use crate::loss::GradientFragment;

/// Magic string heading a persisted snapshot; bump the suffix on any layout
/// change.
const SNAPSHOT_MAGIC: &[u8; 12] = b"DRIFT-EMB-1\n";

pub const DEFAULT_LEARNING_RATE: f64 = 0.05;

/// Per-target gradients produced by one data owner for one update request.
///
/// Entries are applied in order; repeated targets accumulate by sequential
/// subtraction.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradientBundle {
    pub do_id: u32,
    pub user_grads: Vec<(u32, Vec<f64>)>,
    pub item_grads: Vec<(u32, Vec<f64>)>,
}

impl GradientBundle {
    pub fn new(do_id: u32) -> Self {
        GradientBundle {
            do_id,
            ..Default::default()
        }
    }

    /// Move a per-block fragment's entries onto the end of this bundle.
    pub fn absorb(&mut self, frag: GradientFragment) {
        self.user_grads.extend(frag.user_grads);
        self.item_grads.extend(frag.item_grads);
    }

    pub fn is_empty(&self) -> bool {
        self.user_grads.is_empty() && self.item_grads.is_empty()
    }
}

/// Dense user and item embeddings plus the step size applied to incoming
/// gradients. All entries stay finite; a gradient that would introduce a
/// non-finite value is rejected wholesale.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    users: Vec<f64>,
    items: Vec<f64>,
    num_users: usize,
    num_items: usize,
    dim: usize,
    learning_rate: f64,
}

/// All item scores for one user, computed against a single store snapshot.
#[derive(Debug, Clone)]
pub struct ScoreVector {
    pub user_id: u32,
    pub scores: Vec<f64>,
}

/// A fresh store with every entry drawn uniformly from
/// `[-1/sqrt(dim), 1/sqrt(dim)]`, so initial scores are O(1) regardless of
/// dimension. Identical arguments produce bitwise-identical matrices.
pub fn init_embeddings(
    num_users: usize,
    num_items: usize,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingStore> {
    if num_users == 0 || num_items == 0 || dim == 0 {
        return Err(DriftError::InvalidArgument(format!(
            "embedding store needs positive sizes, got {num_users} users, {num_items} items, dim {dim}"
        )));
    }
    let bound = 1.0 / (dim as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let users = (0..num_users * dim).map(|_| dist.sample(&mut rng)).collect();
    let items = (0..num_items * dim).map(|_| dist.sample(&mut rng)).collect();
    Ok(EmbeddingStore {
        users,
        items,
        num_users,
        num_items,
        dim,
        learning_rate: DEFAULT_LEARNING_RATE,
    })
}

impl EmbeddingStore {
    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn set_learning_rate(&mut self, alpha: f64) -> Result<()> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(DriftError::InvalidArgument(format!(
                "learning rate must be in (0, 1], got {alpha}"
            )));
        }
        self.learning_rate = alpha;
        Ok(())
    }

    pub fn user_row(&self, user_id: u32) -> Result<&[f64]> {
        let u = user_id as usize;
        if u >= self.num_users {
            return Err(DriftError::IndexOutOfRange {
                index: u,
                len: self.num_users,
            });
        }
        Ok(&self.users[u * self.dim..(u + 1) * self.dim])
    }

    pub fn item_row(&self, item_id: u32) -> Result<&[f64]> {
        let i = item_id as usize;
        if i >= self.num_items {
            return Err(DriftError::IndexOutOfRange {
                index: i,
                len: self.num_items,
            });
        }
        Ok(&self.items[i * self.dim..(i + 1) * self.dim])
    }

    /// Dot product of every item row with the user's row.
    pub fn score_items(&self, user_id: u32) -> Result<ScoreVector> {
        let user = self.user_row(user_id)?;
        let mut scores = Vec::with_capacity(self.num_items);
        for row in self.items.chunks_exact(self.dim) {
            scores.push(dot(row, user));
        }
        Ok(ScoreVector { user_id, scores })
    }

    /// Up to `k` item ids not in `exclude`, by descending score; equal scores
    /// order by ascending item id.
    pub fn recommend_top_k(
        &self,
        user_id: u32,
        k: usize,
        exclude: &HashSet<u32>,
    ) -> Result<Vec<u32>> {
        if k == 0 {
            return Err(DriftError::InvalidArgument("k must be at least 1".into()));
        }
        let scored = self.score_items(user_id)?;
        Ok(rank_top_k(&scored.scores, k, exclude))
    }

    /// Subtract `learning_rate` times each gradient from its target row, in
    /// bundle order. The store is untouched on any error.
    pub fn apply_gradients(&mut self, bundle: &GradientBundle) -> Result<()> {
        self.validate_bundle(bundle)?;
        let alpha = self.learning_rate;
        for (user_id, grad) in &bundle.user_grads {
            let base = *user_id as usize * self.dim;
            for (j, g) in grad.iter().enumerate() {
                self.users[base + j] -= alpha * g;
            }
        }
        for (item_id, grad) in &bundle.item_grads {
            let base = *item_id as usize * self.dim;
            for (j, g) in grad.iter().enumerate() {
                self.items[base + j] -= alpha * g;
            }
        }
        Ok(())
    }

    fn validate_bundle(&self, bundle: &GradientBundle) -> Result<()> {
        for (user_id, grad) in &bundle.user_grads {
            if *user_id as usize >= self.num_users {
                return Err(DriftError::IndexOutOfRange {
                    index: *user_id as usize,
                    len: self.num_users,
                });
            }
            self.check_grad(grad, "user", *user_id)?;
        }
        for (item_id, grad) in &bundle.item_grads {
            if *item_id as usize >= self.num_items {
                return Err(DriftError::IndexOutOfRange {
                    index: *item_id as usize,
                    len: self.num_items,
                });
            }
            self.check_grad(grad, "item", *item_id)?;
        }
        Ok(())
    }

    fn check_grad(&self, grad: &[f64], kind: &str, id: u32) -> Result<()> {
        if grad.len() != self.dim {
            return Err(DriftError::LengthMismatch {
                expected: self.dim,
                got: grad.len(),
            });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(DriftError::NonFinite(format!("gradient for {kind} {id}")));
        }
        Ok(())
    }

    /// True when every matrix entry is finite.
    pub fn is_finite(&self) -> bool {
        self.users.iter().chain(self.items.iter()).all(|x| x.is_finite())
    }

    /// 64-bit FNV-1a over the raw matrix bytes; equal hashes on equal stores,
    /// used to fingerprint update trajectories.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |x: f64| {
            for b in x.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        self.users.iter().copied().for_each(&mut eat);
        self.items.iter().copied().for_each(&mut eat);
        h
    }

    /// Write the store to `path`: magic, sizes, learning rate, then both
    /// matrices row-major as little-endian f64.
    pub fn save_snapshot(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| DriftError::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| DriftError::io(path, e);
        w.write_all(SNAPSHOT_MAGIC).map_err(io)?;
        for n in [self.num_users as u64, self.num_items as u64, self.dim as u64] {
            w.write_all(&n.to_le_bytes()).map_err(io)?;
        }
        w.write_all(&self.learning_rate.to_le_bytes()).map_err(io)?;
        for x in self.users.iter().chain(self.items.iter()) {
            w.write_all(&x.to_le_bytes()).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Restore a store previously written by [`EmbeddingStore::save_snapshot`].
    pub fn load_snapshot(path: &Path) -> Result<EmbeddingStore> {
        let file = File::open(path).map_err(|e| DriftError::io(path, e))?;
        let mut r = BufReader::new(file);
        let io = |e| DriftError::io(path, e);
        let mut magic = [0u8; 12];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(DriftError::Codec("bad snapshot magic".into()));
        }
        let mut u64buf = [0u8; 8];
        let mut read_u64 = |r: &mut BufReader<File>| -> Result<u64> {
            r.read_exact(&mut u64buf).map_err(|e| DriftError::io(path, e))?;
            Ok(u64::from_le_bytes(u64buf))
        };
        let num_users = read_u64(&mut r)? as usize;
        let num_items = read_u64(&mut r)? as usize;
        let dim = read_u64(&mut r)? as usize;
        let mut f64buf = [0u8; 8];
        r.read_exact(&mut f64buf).map_err(io)?;
        let learning_rate = f64::from_le_bytes(f64buf);
        let mut read_matrix = |rows: usize| -> Result<Vec<f64>> {
            let mut m = Vec::with_capacity(rows * dim);
            let mut buf = [0u8; 8];
            for _ in 0..rows * dim {
                r.read_exact(&mut buf).map_err(|e| DriftError::io(path, e))?;
                m.push(f64::from_le_bytes(buf));
            }
            Ok(m)
        };
        let users = read_matrix(num_users)?;
        let items = read_matrix(num_items)?;
        let store = EmbeddingStore {
            users,
            items,
            num_users,
            num_items,
            dim,
            learning_rate,
        };
        if !store.is_finite() {
            return Err(DriftError::NonFinite("snapshot matrices".into()));
        }
        Ok(store)
    }
}

/// Indices of the top `k` scores not in `exclude`, ties by ascending index.
pub fn rank_top_k(scores: &[f64], k: usize, exclude: &HashSet<u32>) -> Vec<u32> {
    let mut eligible: Vec<u32> = (0..scores.len() as u32)
        .filter(|i| !exclude.contains(i))
        .collect();
    eligible.sort_unstable_by(|&a, &b| {
        scores[b as usize]
            .total_cmp(&scores[a as usize])
            .then(a.cmp(&b))
    });
    eligible.truncate(k);
    eligible
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
