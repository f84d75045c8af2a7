//! Deterministic summation.
//!
//! Every reduction in the crate goes through [`tree_sum`], whose split points
//! depend only on the input length. Parallel and sequential evaluation
//! therefore produce the same bits.

use rayon::prelude::*;

const LEAF: usize = 64;
const PAR_THRESHOLD: usize = 1 << 15;

/// Pairwise (tree) sum with fixed split points.
pub fn tree_sum(xs: &[f64]) -> f64 {
    if xs.len() <= LEAF {
        let mut acc = 0.0;
        for &x in xs {
            acc += x;
        }
        return acc;
    }
    let mid = xs.len() / 2;
    let (a, b) = xs.split_at(mid);
    if xs.len() >= PAR_THRESHOLD {
        let (sa, sb) = rayon::join(|| tree_sum(a), || tree_sum(b));
        sa + sb
    } else {
        tree_sum(a) + tree_sum(b)
    }
}

/// Tree sum of `f(i)` over `0..n`.
pub fn tree_sum_by<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    fn rec<F: Fn(usize) -> f64 + Sync>(lo: usize, hi: usize, f: &F) -> f64 {
        let len = hi - lo;
        if len <= LEAF {
            let mut acc = 0.0;
            for i in lo..hi {
                acc += f(i);
            }
            return acc;
        }
        let mid = lo + len / 2;
        if len >= PAR_THRESHOLD {
            let (a, b) = rayon::join(|| rec(lo, mid, f), || rec(mid, hi, f));
            a + b
        } else {
            rec(lo, mid, f) + rec(mid, hi, f)
        }
    }
    rec(0, n, &f)
}

/// Deterministic dot product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    tree_sum_by(a.len(), |i| a[i] * b[i])
}

/// Per-row values reduced by a tree: rows are evaluated in parallel, the
/// reduction order is fixed.
pub fn par_rows_sum<F>(rows: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let vals: Vec<f64> = (0..rows).into_par_iter().map(f).collect();
    tree_sum(&vals)
}
