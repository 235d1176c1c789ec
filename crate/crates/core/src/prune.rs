//! Structural pruning by column norms.
//!
//! A column is the full parameter vector of one unit (see
//! [`NetworkParams::column`]). Pruning at ratio `kappa` keeps the
//! `floor(kappa * n)` columns with the largest norms (ties keep the smaller
//! index) and zeroes the rest. The relative compression error is
//! `||Theta_pruned - Theta||_F / ||Theta||_F`.

use std::cmp::Ordering;

use ndarray::ArrayView2;
use num_traits::Float;

use crate::error::{Error, Result};
use crate::net::{self, NetworkParams};
use crate::scalar::Scalar;

/// Outcome of pruning at a given `kappa`.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneReport {
    pub kappa: f64,
    /// Kept unit indices, in increasing order.
    pub kept: Vec<usize>,
    pub rel_error: f64,
    /// Percentage of columns removed.
    pub pruning_ratio: f64,
}

/// Euclidean norm of every unit column.
pub fn column_norms<T: Scalar>(params: &NetworkParams<T>) -> Vec<T> {
    squared_column_norms(params).into_iter().map(Float::sqrt).collect()
}

fn squared_column_norms<T: Scalar>(params: &NetworkParams<T>) -> Vec<T> {
    (0..params.n())
        .map(|i| params.column(i).iter().map(|&v| v * v).sum())
        .collect()
}

/// Unit indices from the first to be removed to the last: ascending squared
/// norm, and among equal norms the larger index goes first.
fn removal_order<T: Scalar>(sq: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..sq.len()).collect();
    idx.sort_by(|&a, &b| {
        sq[a]
            .partial_cmp(&sq[b])
            .unwrap_or(Ordering::Equal)
            .then_with(|| b.cmp(&a))
    });
    idx
}

/// `floor(kappa * n)`, tolerant to the rounding of `kappa` itself.
pub fn kept_count(kappa: f64, n: usize) -> usize {
    ((kappa * n as f64) * (1.0 + 4.0 * f64::EPSILON)).floor().min(n as f64) as usize
}

fn check_kappa(kappa: f64) -> Result<()> {
    if kappa > 0.0 && kappa <= 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("pruning ratio kappa={kappa} must lie in (0, 1]")))
    }
}

/// Zeroes every column outside the `floor(kappa n)` largest.
pub fn prune_topk<T: Scalar>(params: &NetworkParams<T>, kappa: f64) -> Result<(NetworkParams<T>, PruneReport)> {
    check_kappa(kappa)?;
    let n = params.n();
    let keep = kept_count(kappa, n);
    let sq = squared_column_norms(params);
    let order = removal_order(&sq);
    let (removed, kept) = order.split_at(n - keep);

    let total: f64 = order.iter().map(|&i| sq[i].to_f64_lossy()).sum();
    let tail: f64 = removed.iter().map(|&i| sq[i].to_f64_lossy()).sum();
    let rel_error = if total > 0.0 { (tail / total).sqrt() } else { 0.0 };

    let mut pruned = params.clone();
    for &i in removed {
        pruned.zero_unit(i);
    }
    let mut kept = kept.to_vec();
    kept.sort_unstable();
    Ok((
        pruned,
        PruneReport {
            kappa,
            kept,
            rel_error,
            pruning_ratio: 100.0 * (n - keep) as f64 / n as f64,
        },
    ))
}

/// Largest number of columns that can be removed (smallest norms first)
/// while the relative compression error stays at or below `epsilon`.
pub fn removable_columns<T: Scalar>(params: &NetworkParams<T>, epsilon: f64) -> Result<usize> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::domain(format!("error threshold epsilon={epsilon} must lie in (0, 1)")));
    }
    let sq = squared_column_norms(params);
    let order = removal_order(&sq);
    let total: f64 = order.iter().map(|&i| sq[i].to_f64_lossy()).sum();
    if total <= 0.0 {
        return Err(Error::Degenerate("all-zero parameter matrix has no relative error".into()));
    }
    // The cumulative tail is summed in removal order, the same order prune_topk uses.
    let mut tail = 0.0;
    let mut m = 0;
    for &i in &order {
        let next = tail + sq[i].to_f64_lossy();
        if (next / total).sqrt() > epsilon {
            break;
        }
        tail = next;
        m += 1;
    }
    Ok(m)
}

/// Largest percentage of columns removable at relative error `epsilon`.
pub fn pruning_ratio<T: Scalar>(params: &NetworkParams<T>, epsilon: f64) -> Result<f64> {
    let m = removable_columns(params, epsilon)?;
    Ok(100.0 * m as f64 / params.n() as f64)
}

/// The `kappa` that keeps exactly the columns left by [`pruning_ratio`].
pub fn kappa_for_ratio(ratio_percent: f64) -> f64 {
    1.0 - ratio_percent / 100.0
}

/// Best k-term approximation error: the norm of `x` without its `k`
/// largest-magnitude entries.
pub fn kterm_error<T: Scalar>(x: &[T], k: usize) -> Result<T> {
    if k > x.len() {
        return Err(Error::domain(format!("k={k} exceeds vector length {}", x.len())));
    }
    let mut sq: Vec<T> = x.iter().map(|&v| v * v).collect();
    sq.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let tail: T = sq[..x.len() - k].iter().copied().sum();
    Ok(tail.sqrt())
}

/// Share of the squared Frobenius norm carried by the largest `fraction` of columns.
pub fn top_share<T: Scalar>(params: &NetworkParams<T>, fraction: f64) -> f64 {
    let sq = squared_column_norms(params);
    let order = removal_order(&sq);
    let total: f64 = sq.iter().map(|v| v.to_f64_lossy()).sum();
    if total <= 0.0 {
        return 0.0;
    }
    let top = kept_count(fraction, sq.len());
    let kept: f64 = order[sq.len() - top..].iter().map(|&i| sq[i].to_f64_lossy()).sum();
    kept / total
}

/// Accuracy of the network pruned at `kappa` on two labelled splits.
pub fn evaluate_pruned<T: Scalar>(
    params: &NetworkParams<T>,
    kappa: f64,
    train: (ArrayView2<'_, T>, &[usize]),
    test: (ArrayView2<'_, T>, &[usize]),
) -> Result<(f64, f64)> {
    let (pruned, _) = prune_topk(params, kappa)?;
    Ok((
        net::accuracy(&pruned, train.0, train.1)?,
        net::accuracy(&pruned, test.0, test.1)?,
    ))
}
