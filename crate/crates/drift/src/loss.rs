//! Pairwise ranking loss over (user, preferred item, rejected item) triples.
//!
//! A user who clicked item `p` while passing over item `n` should score `p`
//! above `n`. With `w = u · (p - n)` the per-pair objective is the logistic
//! loss `-log sigmoid(w)`, optionally plus a ridge term on the three
//! participating vectors. Block-level variants average over every
//! (negative, positive) pair of a completed interaction block and emit
//! per-target gradients ready to be subtracted from the embedding matrices.

use crate::error::{DriftError, Result};

/// Logistic sigmoid, split by sign so that `exp` never overflows.
pub fn sigmoid(w: f64) -> f64 {
    if w >= 0.0 {
        1.0 / (1.0 + (-w).exp())
    } else {
        let e = w.exp();
        e / (1.0 + e)
    }
}

/// `-log sigmoid(w)` in log-sum-exp form: `log(1 + e^-w)` without overflow.
fn softplus_neg(w: f64) -> f64 {
    if w >= 0.0 {
        (-w).exp().ln_1p()
    } else {
        -w + w.exp().ln_1p()
    }
}

fn check_len(expected: usize, v: &[f64]) -> Result<()> {
    if v.len() != expected {
        return Err(DriftError::LengthMismatch {
            expected,
            got: v.len(),
        });
    }
    Ok(())
}

/// Ranking margin `u · (p - n)`: positive when the preferred item wins.
pub fn pair_margin(user: &[f64], item_pos: &[f64], item_neg: &[f64]) -> Result<f64> {
    check_len(user.len(), item_pos)?;
    check_len(user.len(), item_neg)?;
    let mut acc = 0.0;
    for ((u, p), n) in user.iter().zip(item_pos).zip(item_neg) {
        acc += u * (p - n);
    }
    Ok(acc)
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Loss for one (user, positive, negative) triple:
/// `-log sigmoid(u · (p - n)) + reg_weight * (|u|^2 + |p|^2 + |n|^2)`.
pub fn pair_loss(user: &[f64], item_pos: &[f64], item_neg: &[f64], reg_weight: f64) -> Result<f64> {
    let w = pair_margin(user, item_pos, item_neg)?;
    let reg = if reg_weight != 0.0 {
        reg_weight * (sq_norm(user) + sq_norm(item_pos) + sq_norm(item_neg))
    } else {
        0.0
    };
    Ok(softplus_neg(w) + reg)
}

/// Analytic gradients of [`pair_loss`] with respect to its three vectors.
///
/// With zero regularization `d_item_neg == -d_item_pos` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGradients {
    pub d_user: Vec<f64>,
    pub d_item_pos: Vec<f64>,
    pub d_item_neg: Vec<f64>,
}

/// Gradient of [`pair_loss`]. Subtracting `alpha` times these vectors from
/// the corresponding rows decreases the pair loss for small `alpha`.
pub fn pair_gradients(
    user: &[f64],
    item_pos: &[f64],
    item_neg: &[f64],
    reg_weight: f64,
) -> Result<PairGradients> {
    let w = pair_margin(user, item_pos, item_neg)?;
    // d/dw [-log sigmoid(w)] = -(1 - sigmoid(w))
    let coeff = 1.0 - sigmoid(w);
    let r2 = 2.0 * reg_weight;
    let d = user.len();
    let mut d_user = Vec::with_capacity(d);
    let mut d_item_pos = Vec::with_capacity(d);
    let mut d_item_neg = Vec::with_capacity(d);
    for j in 0..d {
        d_user.push(-coeff * (item_pos[j] - item_neg[j]) + r2 * user[j]);
        d_item_pos.push(-coeff * user[j] + r2 * item_pos[j]);
        d_item_neg.push(coeff * user[j] + r2 * item_neg[j]);
    }
    Ok(PairGradients {
        d_user,
        d_item_pos,
        d_item_neg,
    })
}

/// Mean of [`pair_loss`] over the Cartesian product `negatives x positives`.
///
/// Errors with [`DriftError::UndefinedBlock`] when either side is empty;
/// callers skip such blocks.
pub fn block_loss<V: AsRef<[f64]>>(
    user: &[f64],
    positives: &[V],
    negatives: &[V],
    reg_weight: f64,
) -> Result<f64> {
    if positives.is_empty() {
        return Err(DriftError::UndefinedBlock("no positive interactions"));
    }
    if negatives.is_empty() {
        return Err(DriftError::UndefinedBlock("no negative interactions"));
    }
    let mut acc = 0.0;
    for neg in negatives {
        for pos in positives {
            acc += pair_loss(user, pos.as_ref(), neg.as_ref(), reg_weight)?;
        }
    }
    Ok(acc / (negatives.len() * positives.len()) as f64)
}

/// Per-target gradient entries produced from one block, in emission order.
///
/// Entries are not pre-summed: the same target id may appear several times
/// and is meant to be applied sequentially. Summing all entries for one
/// target yields the analytic gradient of [`block_loss`] for that target.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradientFragment {
    pub user_grads: Vec<(u32, Vec<f64>)>,
    pub item_grads: Vec<(u32, Vec<f64>)>,
}

impl GradientFragment {
    pub fn is_empty(&self) -> bool {
        self.user_grads.is_empty() && self.item_grads.is_empty()
    }
}

/// Gradients of [`block_loss`] for one block, one entry per
/// (negative, positive) pair and target, each scaled by
/// `1 / (|negatives| * |positives|)`.
pub fn block_gradients<V: AsRef<[f64]>>(
    user_id: u32,
    user: &[f64],
    positives: &[(u32, V)],
    negatives: &[(u32, V)],
    reg_weight: f64,
) -> Result<GradientFragment> {
    if positives.is_empty() {
        return Err(DriftError::UndefinedBlock("no positive interactions"));
    }
    if negatives.is_empty() {
        return Err(DriftError::UndefinedBlock("no negative interactions"));
    }
    let scale = 1.0 / (negatives.len() * positives.len()) as f64;
    let mut frag = GradientFragment::default();
    for (neg_id, neg) in negatives {
        for (pos_id, pos) in positives {
            let mut g = pair_gradients(user, pos.as_ref(), neg.as_ref(), reg_weight)?;
            for v in [&mut g.d_user, &mut g.d_item_pos, &mut g.d_item_neg] {
                for x in v.iter_mut() {
                    *x *= scale;
                }
            }
            frag.item_grads.push((*pos_id, g.d_item_pos));
            frag.item_grads.push((*neg_id, g.d_item_neg));
            frag.user_grads.push((user_id, g.d_user));
        }
    }
    Ok(frag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha20Rng;

    fn rand_vec(rng: &mut impl Rng, d: usize) -> Vec<f64> {
        (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    /// Central finite differences of `f` at `x`.
    fn finite_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|j| {
                let mut hi = x.to_vec();
                let mut lo = x.to_vec();
                hi[j] += h;
                lo[j] -= h;
                (f(&hi) - f(&lo)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn sigmoid_at_zero() {
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn sigmoid_symmetry() {
        for w in [0.3, 1.7, 12.0, 345.0] {
            assert!((sigmoid(w) + sigmoid(-w) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn sigmoid_reference_value() {
        // 1 / (1 + e^-1), evaluated at 30 decimal digits
        assert!((sigmoid(1.0) - 0.731058578630004879251159241822).abs() < 1e-9);
    }

    #[test]
    fn sigmoid_extreme_inputs_stay_in_range() {
        for w in [-700.0, -100.0, 100.0, 700.0] {
            let s = sigmoid(w);
            assert!(s.is_finite());
            assert!((0.0..=1.0).contains(&s));
        }
        assert!(sigmoid(700.0) > 0.0 || sigmoid(700.0) == 1.0);
        assert!(sigmoid(-700.0) >= 0.0);
    }

    #[test]
    fn margin_equal_items_is_zero() {
        let u = [0.4, -0.2, 1.1];
        assert_eq!(pair_margin(&u, &u, &u).unwrap(), 0.0);
        let p = [1.0, 2.0, 3.0];
        assert_eq!(pair_margin(&u, &p, &p).unwrap(), 0.0);
    }

    #[test]
    fn margin_unit_case() {
        assert_eq!(
            pair_margin(&[1.0, 0.0], &[1.0, 0.0], &[0.0, 0.0]).unwrap(),
            1.0
        );
    }

    #[test]
    fn margin_matches_naive_loop() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for _ in 0..50 {
            let u = rand_vec(&mut rng, 5);
            let p = rand_vec(&mut rng, 5);
            let n = rand_vec(&mut rng, 5);
            let mut naive = 0.0;
            for j in 0..5 {
                naive += u[j] * (p[j] - n[j]);
            }
            assert!((pair_margin(&u, &p, &n).unwrap() - naive).abs() < 1e-12);
        }
    }

    #[test]
    fn margin_length_mismatch() {
        let err = pair_margin(&[1.0], &[1.0, 2.0], &[0.0]).unwrap_err();
        assert!(matches!(err, DriftError::LengthMismatch { .. }));
    }

    #[test]
    fn loss_at_zero_margin_is_log_two() {
        let z = [0.0, 0.0];
        let loss = pair_loss(&z, &z, &z, 0.0).unwrap();
        assert!((loss - 0.693147180559945309417232121458).abs() < 1e-15);
    }

    #[test]
    fn loss_saturates_for_large_margin() {
        // w = 50 via u = [50], p = [1], n = [0]; ignore the reg term
        let loss = pair_loss(&[50.0], &[1.0], &[0.0], 0.0).unwrap();
        assert!(loss < 1e-20);
        assert!(loss > 0.0);
    }

    #[test]
    fn loss_reference_value_with_ridge() {
        // w = 1, reg = 0.1, squared norms 1 + 1 + 0:
        // -log sigmoid(1) + 0.2 at 30 decimal digits
        let loss = pair_loss(&[1.0, 0.0], &[1.0, 0.0], &[0.0, 0.0], 0.1).unwrap();
        assert!((loss - 0.513261687518222834048995494968).abs() < 1e-12);
    }

    #[test]
    fn loss_is_finite_and_positive() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..200 {
            let u = rand_vec(&mut rng, 4);
            let p = rand_vec(&mut rng, 4);
            let n = rand_vec(&mut rng, 4);
            let loss = pair_loss(&u, &p, &n, 0.0).unwrap();
            assert!(loss.is_finite());
            assert!(loss > 0.0);
        }
    }

    #[test]
    fn gradients_identical_items() {
        // w = 0 so 1 - sigmoid(w) = 0.5
        let u = [2.0, -1.0];
        let p = [0.5, 0.5];
        let g = pair_gradients(&u, &p, &p, 0.0).unwrap();
        assert_eq!(g.d_user, vec![0.0, 0.0]);
        assert_eq!(g.d_item_pos, vec![-1.0, 0.5]);
        assert_eq!(g.d_item_neg, vec![1.0, -0.5]);
    }

    #[test]
    fn gradients_zero_user() {
        let z = [0.0, 0.0, 0.0];
        let p = [1.0, 2.0, 3.0];
        let n = [0.0, 1.0, 1.0];
        let g = pair_gradients(&z, &p, &n, 0.0).unwrap();
        assert_eq!(g.d_item_pos, vec![0.0, 0.0, 0.0]);
        assert_eq!(g.d_item_neg, vec![0.0, 0.0, 0.0]);
        // d_user = -0.5 * (p - n)
        assert_eq!(g.d_user, vec![-0.5, -0.5, -1.0]);
    }

    #[test]
    fn gradients_antisymmetric_without_reg() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for _ in 0..100 {
            let u = rand_vec(&mut rng, 6);
            let p = rand_vec(&mut rng, 6);
            let n = rand_vec(&mut rng, 6);
            let g = pair_gradients(&u, &p, &n, 0.0).unwrap();
            for j in 0..6 {
                assert_eq!(g.d_item_neg[j], -g.d_item_pos[j]);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        let d = 8;
        let reg = 0.01;
        for _ in 0..20 {
            let u = rand_vec(&mut rng, d);
            let p = rand_vec(&mut rng, d);
            let n = rand_vec(&mut rng, d);
            let g = pair_gradients(&u, &p, &n, reg).unwrap();
            let fd_u = finite_diff(|x| pair_loss(x, &p, &n, reg).unwrap(), &u, 1e-6);
            let fd_p = finite_diff(|x| pair_loss(&u, x, &n, reg).unwrap(), &p, 1e-6);
            let fd_n = finite_diff(|x| pair_loss(&u, &p, x, reg).unwrap(), &n, 1e-6);
            for (analytic, fd) in [(&g.d_user, fd_u), (&g.d_item_pos, fd_p), (&g.d_item_neg, fd_n)]
            {
                for j in 0..d {
                    let tol = 1e-5 * analytic[j].abs().max(fd[j].abs()).max(1e-3);
                    assert!(
                        (analytic[j] - fd[j]).abs() < tol,
                        "component {j}: analytic {} vs fd {}",
                        analytic[j],
                        fd[j]
                    );
                }
            }
        }
    }

    #[test]
    fn one_step_descends() {
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        for _ in 0..200 {
            let u = rand_vec(&mut rng, 8);
            let p = rand_vec(&mut rng, 8);
            let n = rand_vec(&mut rng, 8);
            let before = pair_loss(&u, &p, &n, 0.0).unwrap();
            let g = pair_gradients(&u, &p, &n, 0.0).unwrap();
            let alpha = 0.1;
            let step =
                |x: &[f64], d: &[f64]| x.iter().zip(d).map(|(a, b)| a - alpha * b).collect::<Vec<_>>();
            let after = pair_loss(
                &step(&u, &g.d_user),
                &step(&p, &g.d_item_pos),
                &step(&n, &g.d_item_neg),
                0.0,
            )
            .unwrap();
            assert!(after <= before, "loss rose from {before} to {after}");
        }
    }

    #[test]
    fn block_loss_single_pair_equals_pair_loss() {
        let u = [0.3, -0.7];
        let p = vec![vec![1.0, 0.2]];
        let n = vec![vec![-0.4, 0.9]];
        let bl = block_loss(&u, &p, &n, 0.05).unwrap();
        let pl = pair_loss(&u, &p[0], &n[0], 0.05).unwrap();
        assert_eq!(bl, pl);
    }

    #[test]
    fn block_loss_duplicate_positives_average_out() {
        let u = [0.3, -0.7];
        let pos = vec![vec![1.0, 0.2], vec![1.0, 0.2]];
        let neg = vec![vec![-0.4, 0.9]];
        let bl = block_loss(&u, &pos, &neg, 0.0).unwrap();
        let pl = pair_loss(&u, &pos[0], &neg[0], 0.0).unwrap();
        assert!((bl - pl).abs() < 1e-15);
    }

    #[test]
    fn block_loss_matches_double_loop() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let u = rand_vec(&mut rng, 4);
        let pos: Vec<Vec<f64>> = (0..3).map(|_| rand_vec(&mut rng, 4)).collect();
        let neg: Vec<Vec<f64>> = (0..2).map(|_| rand_vec(&mut rng, 4)).collect();
        let mut acc = 0.0;
        for n in &neg {
            for p in &pos {
                acc += pair_loss(&u, p, n, 0.02).unwrap();
            }
        }
        let expected = acc / 6.0;
        assert!((block_loss(&u, &pos, &neg, 0.02).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn block_loss_rejects_empty_sides() {
        let u = [1.0];
        let some = vec![vec![1.0]];
        let none: Vec<Vec<f64>> = vec![];
        assert!(matches!(
            block_loss(&u, &none, &some, 0.0),
            Err(DriftError::UndefinedBlock(_))
        ));
        assert!(matches!(
            block_loss(&u, &some, &none, 0.0),
            Err(DriftError::UndefinedBlock(_))
        ));
    }

    #[test]
    fn block_gradients_single_pair_unscaled() {
        let u = [0.2, 0.8];
        let p = vec![(4u32, vec![0.1, -0.3])];
        let n = vec![(9u32, vec![0.6, 0.0])];
        let frag = block_gradients(1, &u, &p, &n, 0.0).unwrap();
        let g = pair_gradients(&u, &p[0].1, &n[0].1, 0.0).unwrap();
        assert_eq!(frag.user_grads, vec![(1, g.d_user)]);
        assert_eq!(frag.item_grads, vec![(4, g.d_item_pos), (9, g.d_item_neg)]);
    }

    #[test]
    fn block_gradients_cancel_when_items_coincide() {
        // every positive equals every negative: with reg = 0 the summed user
        // gradient vanishes
        let u = [0.5, -0.5, 0.25];
        let v = vec![0.3, 0.1, -0.2];
        let pos = vec![(1u32, v.clone()), (2u32, v.clone())];
        let neg = vec![(3u32, v.clone())];
        let frag = block_gradients(0, &u, &pos, &neg, 0.0).unwrap();
        let mut total = vec![0.0; 3];
        for (_, g) in &frag.user_grads {
            for j in 0..3 {
                total[j] += g[j];
            }
        }
        for t in total {
            assert!(t.abs() < 1e-15);
        }
    }

    #[test]
    fn block_gradients_sum_matches_block_loss_finite_diff() {
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        let d = 4;
        let reg = 0.01;
        let u = rand_vec(&mut rng, d);
        let pos: Vec<(u32, Vec<f64>)> =
            (0..2).map(|i| (10 + i, rand_vec(&mut rng, d))).collect();
        let neg: Vec<(u32, Vec<f64>)> =
            (0..2).map(|i| (20 + i, rand_vec(&mut rng, d))).collect();
        let frag = block_gradients(7, &u, &pos, &neg, reg).unwrap();

        let mut user_sum = vec![0.0; d];
        for (_, g) in &frag.user_grads {
            for j in 0..d {
                user_sum[j] += g[j];
            }
        }
        let pos_vecs: Vec<Vec<f64>> = pos.iter().map(|(_, v)| v.clone()).collect();
        let neg_vecs: Vec<Vec<f64>> = neg.iter().map(|(_, v)| v.clone()).collect();
        let fd = finite_diff(
            |x| block_loss(x, &pos_vecs, &neg_vecs, reg).unwrap(),
            &u,
            1e-6,
        );
        for j in 0..d {
            let tol = 1e-5 * user_sum[j].abs().max(fd[j].abs()).max(1e-3);
            assert!((user_sum[j] - fd[j]).abs() < tol);
        }

        // per-item sums against finite differences of the loss in that item
        for (target, base) in [(pos[0].0, &pos[0].1), (neg[1].0, &neg[1].1)] {
            let mut item_sum = vec![0.0; d];
            for (id, g) in &frag.item_grads {
                if *id == target {
                    for j in 0..d {
                        item_sum[j] += g[j];
                    }
                }
            }
            let fd = finite_diff(
                |x| {
                    let pv: Vec<Vec<f64>> = pos
                        .iter()
                        .map(|(id, v)| if *id == target { x.to_vec() } else { v.clone() })
                        .collect();
                    let nv: Vec<Vec<f64>> = neg
                        .iter()
                        .map(|(id, v)| if *id == target { x.to_vec() } else { v.clone() })
                        .collect();
                    block_loss(&u, &pv, &nv, reg).unwrap()
                },
                base,
                1e-6,
            );
            for j in 0..d {
                let tol = 1e-5 * item_sum[j].abs().max(fd[j].abs()).max(1e-3);
                assert!((item_sum[j] - fd[j]).abs() < tol);
            }
        }
    }
}
