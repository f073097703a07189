//! Ranking quality over held-out positives: MAP@K and NDCG@K.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::dataset::InteractionStream;
use crate::error::{DriftError, Result};
use crate::model::EmbeddingStore;

/// Aggregate metrics plus the per-user breakdown and the recorded training
/// loss curve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub map_at_k: f64,
    pub ndcg_at_k: f64,
    pub k: usize,
    /// user id -> (average precision, NDCG)
    pub per_user: Option<BTreeMap<u32, (f64, f64)>>,
    /// (epoch, mean loss over trained blocks)
    pub train_loss_curve: Vec<(u32, f64)>,
}

impl EvalReport {
    /// Flat `key = value` rendering, one metric per line, stable order.
    pub fn to_kv_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("k = {}\n", self.k));
        out.push_str(&format!("map_at_k = {}\n", self.map_at_k));
        out.push_str(&format!("ndcg_at_k = {}\n", self.ndcg_at_k));
        for (epoch, loss) in &self.train_loss_curve {
            out.push_str(&format!("train_loss[{epoch}] = {loss}\n"));
        }
        if let Some(per_user) = &self.per_user {
            for (user, (ap, ndcg)) in per_user {
                out.push_str(&format!("user[{user}] = {ap} {ndcg}\n"));
            }
        }
        out
    }
}

/// Average precision over the top `k` of `ranked`, normalized by
/// `min(|relevant|, k)`; zero when nothing is relevant.
pub fn average_precision(ranked: &[u32], relevant: &HashSet<u32>, k: usize) -> f64 {
    if relevant.is_empty() || k == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (idx, item) in ranked.iter().take(k).enumerate() {
        if relevant.contains(item) {
            hits += 1;
            sum += hits as f64 / (idx + 1) as f64;
        }
    }
    sum / relevant.len().min(k) as f64
}

/// Binary-relevance NDCG over the top `k`: hits at rank `i` (1-based) gain
/// `1 / log2(i + 1)`, normalized by the ideal ordering.
pub fn ndcg(ranked: &[u32], relevant: &HashSet<u32>, k: usize) -> f64 {
    if relevant.is_empty() || k == 0 {
        return 0.0;
    }
    let mut dcg = 0.0;
    for (idx, item) in ranked.iter().take(k).enumerate() {
        if relevant.contains(item) {
            dcg += 1.0 / ((idx + 2) as f64).log2();
        }
    }
    let ideal_hits = relevant.len().min(k);
    let idcg: f64 = (0..ideal_hits).map(|i| 1.0 / ((i + 2) as f64).log2()).sum();
    dcg / idcg
}

/// Score every user with at least one positive test interaction, rank all
/// items (minus the user's training items when `exclude_train` is given)
/// and average AP@k and NDCG@k.
///
/// Training items that reappear as test positives stay rankable so a
/// repeat interaction can still be credited.
pub fn evaluate(
    store: &EmbeddingStore,
    test: &InteractionStream,
    k: usize,
    exclude_train: Option<&InteractionStream>,
) -> Result<EvalReport> {
    if k == 0 {
        return Err(DriftError::InvalidArgument("k must be at least 1".into()));
    }
    if test.is_empty() {
        return Err(DriftError::EmptyReport);
    }
    let mut relevant_by_user: BTreeMap<u32, HashSet<u32>> = BTreeMap::new();
    for e in test.iter() {
        if e.is_positive {
            relevant_by_user.entry(e.user_id).or_default().insert(e.item_id);
        }
    }
    let mut train_by_user: HashMap<u32, HashSet<u32>> = HashMap::new();
    if let Some(train) = exclude_train {
        for e in train.iter() {
            train_by_user.entry(e.user_id).or_default().insert(e.item_id);
        }
    }

    let mut per_user = BTreeMap::new();
    for (&user_id, relevant) in &relevant_by_user {
        let mut exclude = train_by_user.get(&user_id).cloned().unwrap_or_default();
        for item in relevant {
            exclude.remove(item);
        }
        let ranked = store.recommend_top_k(user_id, k, &exclude)?;
        per_user.insert(
            user_id,
            (
                average_precision(&ranked, relevant, k),
                ndcg(&ranked, relevant, k),
            ),
        );
    }
    if per_user.is_empty() {
        return Err(DriftError::EmptyReport);
    }
    let n = per_user.len() as f64;
    let map_at_k = per_user.values().map(|(ap, _)| ap).sum::<f64>() / n;
    let ndcg_at_k = per_user.values().map(|(_, nd)| nd).sum::<f64>() / n;
    Ok(EvalReport {
        map_at_k,
        ndcg_at_k,
        k,
        per_user: Some(per_user),
        train_loss_curve: Vec::new(),
    })
}
