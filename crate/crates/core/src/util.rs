//! Deterministic reductions and small numeric helpers shared across modules.

use crate::{C64, CMatrix};
use rayon::prelude::*;

/// Chunk size for the deterministic parallel reductions.  Results are
/// independent of the thread count: chunks are summed sequentially and the
/// chunk totals are folded in a fixed pairwise order.
const CHUNK: usize = 64;

/// Pairwise (tree) fold of a list of matrices.  Fixed association order.
pub fn pairwise_fold(mut items: Vec<CMatrix>) -> CMatrix {
    assert!(!items.is_empty());
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.drain(..);
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(a + b),
                None => next.push(a),
            }
        }
        drop(it);
        items = next;
    }
    items.pop().unwrap()
}

/// Deterministic weighted sum `Σ_i f(i)` over `n` items, parallel over fixed
/// chunks, reduced in pairwise order.
pub fn chunked_matrix_sum<F>(n: usize, rows: usize, cols: usize, f: F) -> CMatrix
where
    F: Fn(usize) -> CMatrix + Sync,
{
    if n == 0 {
        return CMatrix::zeros(rows, cols);
    }
    let n_chunks = n.div_ceil(CHUNK);
    let partials: Vec<CMatrix> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = usize::min(lo + CHUNK, n);
            let mut acc = CMatrix::zeros(rows, cols);
            for i in lo..hi {
                acc += f(i);
            }
            acc
        })
        .collect();
    pairwise_fold(partials)
}

/// Deterministic scalar sum with the same chunked pairwise order.
pub fn chunked_scalar_sum<F>(n: usize, f: F) -> C64
where
    F: Fn(usize) -> C64 + Sync,
{
    if n == 0 {
        return C64::new(0.0, 0.0);
    }
    let n_chunks = n.div_ceil(CHUNK);
    let mut partials: Vec<C64> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = usize::min(lo + CHUNK, n);
            let mut acc = C64::new(0.0, 0.0);
            for i in lo..hi {
                acc += f(i);
            }
            acc
        })
        .collect();
    while partials.len() > 1 {
        let mut next = Vec::with_capacity(partials.len().div_ceil(2));
        let mut it = partials.drain(..);
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(a + b),
                None => next.push(a),
            }
        }
        drop(it);
        partials = next;
    }
    partials[0]
}

/// Exact binomial coefficient as f64 (arguments small enough that the
/// integer value fits in the 53-bit mantissa).
pub fn binomial(n: i64, a: i64) -> f64 {
    if a < 0 || a > n {
        return 0.0;
    }
    let a = a.min(n - a);
    let mut acc = 1.0f64;
    for i in 0..a {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

/// Norm-squared entry of the Fubini-Study L2 Gram on `H^0(O(n))`:
/// `‖z^a‖^2 = a! (n-a)! / (n+1)! = 1 / ((n+1) * C(n, a))`.
pub fn beta_gram_entry(n: i64, a: i64) -> f64 {
    1.0 / ((n + 1) as f64 * binomial(n, a))
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Hermitian symmetrization `(M + M†)/2`.
pub fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(5, 2), 10.0);
        assert_eq!(binomial(0, 0), 1.0);
        assert_eq!(binomial(30, 15), 155117520.0);
        assert_eq!(binomial(3, 5), 0.0);
    }

    #[test]
    fn beta_entries() {
        // ‖z^1‖^2 on H^0(O(2)) = 1!1!/3! = 1/6
        assert!((beta_gram_entry(2, 1) - 1.0 / 6.0).abs() < 1e-15);
        assert!((beta_gram_entry(2, 0) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn chunked_sum_matches_sequential() {
        let n = 1000;
        let f = |i: usize| {
            CMatrix::from_element(2, 2, C64::new(i as f64 * 1e-3, (i % 7) as f64))
        };
        let par = chunked_matrix_sum(n, 2, 2, f);
        let mut seq = CMatrix::zeros(2, 2);
        for i in 0..n {
            seq += f(i);
        }
        assert!((par - seq).norm() < 1e-9);
    }
}
