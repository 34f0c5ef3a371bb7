//! Small dense kernels for the training loop.
//!
//! Matrices are row-major `Vec<f64>` whose row count and row length are both
//! padded to a multiple of [`BLOCK`] with zeros. Each output element is
//! accumulated sequentially over the inner dimension, so results do not
//! depend on the number of threads.

use rayon::prelude::*;

pub(crate) const BLOCK: usize = 4;
// `matmul` unrolls exactly four rows.
const _: () = assert!(BLOCK == 4);

pub(crate) fn padded(n: usize) -> usize {
    n.div_ceil(BLOCK) * BLOCK
}

/// `out (n x s) = a (n x k) * b (k x s)`.
pub(crate) fn matmul(a: &[f64], k: usize, b: &[f64], s: usize, out: &mut [f64]) {
    debug_assert_eq!(k % BLOCK, 0);
    debug_assert_eq!(s % BLOCK, 0);
    debug_assert_eq!(b.len(), k * s);
    debug_assert_eq!(a.len() / k * s, out.len());
    a.par_chunks_exact(BLOCK * k)
        .zip(out.par_chunks_exact_mut(BLOCK * s))
        .for_each(|(ab, ob)| {
            let (r0, rest) = ab.split_at(k);
            let (r1, rest) = rest.split_at(k);
            let (r2, r3) = rest.split_at(k);
            for c0 in (0..s).step_by(BLOCK) {
                let mut acc = [[0.0f64; BLOCK]; BLOCK];
                let columns = b.chunks_exact(s).map(|row| &row[c0..c0 + BLOCK]);
                for ((((w, &x0), &x1), &x2), &x3) in columns.zip(r0).zip(r1).zip(r2).zip(r3) {
                    for (acc_r, x) in acc.iter_mut().zip([x0, x1, x2, x3]) {
                        for (a, wl) in acc_r.iter_mut().zip(w) {
                            *a += x * wl;
                        }
                    }
                }
                for (out_row, acc_r) in ob.chunks_exact_mut(s).zip(&acc) {
                    out_row[c0..c0 + BLOCK].copy_from_slice(acc_r);
                }
            }
        });
}

pub(crate) fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut t = vec![0.0; a.len()];
    for i in 0..rows {
        for j in 0..cols {
            t[j * rows + i] = a[i * cols + j];
        }
    }
    t
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
