//! Slice-level numeric kernels shared by the tape and the inference path, so
//! both produce bit-identical values.
//!
//! The matrix kernels are register-blocked, but every output element is
//! still accumulated in ascending inner-index order, so a row's result does
//! not depend on how many other rows share the call.

const MR: usize = 4;
const NR: usize = 8;

/// `out[m×n] = a[m×k] · b[k×n]` (overwrites `out`).
pub fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    let mut i = 0;
    while i < m {
        let rows = MR.min(m - i);
        let mut j = 0;
        while j < n {
            let cols = NR.min(n - j);
            if rows == MR && cols == NR {
                let mut acc = [[0.0f64; NR]; MR];
                for p in 0..k {
                    let brow: &[f64; NR] = b[p * n + j..p * n + j + NR].try_into().expect("block");
                    for (r, accr) in acc.iter_mut().enumerate() {
                        let av = a[(i + r) * k + p];
                        for c in 0..NR {
                            accr[c] += av * brow[c];
                        }
                    }
                }
                for (r, accr) in acc.iter().enumerate() {
                    out[(i + r) * n + j..(i + r) * n + j + NR].copy_from_slice(accr);
                }
            } else {
                for r in 0..rows {
                    let mut acc = [0.0f64; NR];
                    for p in 0..k {
                        let av = a[(i + r) * k + p];
                        let brow = &b[p * n + j..p * n + j + cols];
                        for c in 0..cols {
                            acc[c] += av * brow[c];
                        }
                    }
                    out[(i + r) * n + j..(i + r) * n + j + cols].copy_from_slice(&acc[..cols]);
                }
            }
            j += NR;
        }
        i += MR;
    }
}

/// `da[m×k] += g[m×n] · bᵀ` where `b` is `[k×n]`.
pub fn matmul_bt_acc(g: &[f64], b: &[f64], da: &mut [f64], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        let mut p = 0;
        while p + 4 <= k {
            let d = dot4(grow, &b[p * n..(p + 1) * n], &b[(p + 1) * n..(p + 2) * n], &b[(p + 2) * n..(p + 3) * n], &b[(p + 3) * n..(p + 4) * n]);
            for (q, v) in d.iter().enumerate() {
                da[i * k + p + q] += v;
            }
            p += 4;
        }
        while p < k {
            da[i * k + p] += dot(grow, &b[p * n..(p + 1) * n]);
            p += 1;
        }
    }
}

/// `db[k×n] += aᵀ · g` where `a` is `[m×k]` and `g` is `[m×n]`.
pub fn matmul_at_acc(a: &[f64], g: &[f64], db: &mut [f64], m: usize, k: usize, n: usize) {
    let mut p = 0;
    while p < k {
        let prow = MR.min(k - p);
        let mut j = 0;
        while j < n {
            let cols = NR.min(n - j);
            let mut acc = [[0.0f64; NR]; MR];
            if prow == MR && cols == NR {
                for i in 0..m {
                    let grow: &[f64; NR] = g[i * n + j..i * n + j + NR].try_into().expect("block");
                    for (r, accr) in acc.iter_mut().enumerate() {
                        let av = a[i * k + p + r];
                        for c in 0..NR {
                            accr[c] += av * grow[c];
                        }
                    }
                }
            } else {
                for i in 0..m {
                    let grow = &g[i * n + j..i * n + j + cols];
                    for (r, accr) in acc.iter_mut().enumerate().take(prow) {
                        let av = a[i * k + p + r];
                        for c in 0..cols {
                            accr[c] += av * grow[c];
                        }
                    }
                }
            }
            for (r, accr) in acc.iter().enumerate().take(prow) {
                let dst = &mut db[(p + r) * n + j..(p + r) * n + j + cols];
                for (d, v) in dst.iter_mut().zip(accr) {
                    *d += v;
                }
            }
            j += NR;
        }
        p += MR;
    }
}

/// Dot product with four interleaved partial sums.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for l in 0..4 {
            acc[l] += a[4 * c + l] * b[4 * c + l];
        }
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Four dot products of `x` against `b0..b3`, each summed exactly as
/// [`dot`] would.
fn dot4(x: &[f64], b0: &[f64], b1: &[f64], b2: &[f64], b3: &[f64]) -> [f64; 4] {
    let mut acc = [[0.0f64; 4]; 4];
    let chunks = x.len() / 4;
    for c in 0..chunks {
        for l in 0..4 {
            let xv = x[4 * c + l];
            acc[0][l] += xv * b0[4 * c + l];
            acc[1][l] += xv * b1[4 * c + l];
            acc[2][l] += xv * b2[4 * c + l];
            acc[3][l] += xv * b3[4 * c + l];
        }
    }
    let mut out = [0.0; 4];
    for (q, bq) in [b0, b1, b2, b3].iter().enumerate() {
        let mut tail = 0.0;
        for i in 4 * chunks..x.len() {
            tail += x[i] * bq[i];
        }
        out[q] = (acc[q][0] + acc[q][1]) + (acc[q][2] + acc[q][3]) + tail;
    }
    out
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

pub fn log_softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = row.iter().map(|v| (v - max).exp()).sum();
    let norm = max + total.ln();
    for v in row.iter_mut() {
        *v -= norm;
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += a[i * k + p] * b[p * n + j];
                }
                out[i * n + j] = s;
            }
        }
        out
    }

    fn data(len: usize, seed: usize) -> Vec<f64> {
        (0..len).map(|i| (((i * 7919 + seed * 104729) % 997) as f64) / 500.0 - 1.0).collect()
    }

    #[test]
    fn blocked_matmul_matches_naive_bitwise() {
        for &(m, k, n) in &[(1, 1, 1), (3, 5, 7), (4, 8, 8), (9, 24, 192), (13, 3, 17)] {
            let a = data(m * k, 1);
            let b = data(k * n, 2);
            let mut out = vec![f64::NAN; m * n];
            matmul_into(&a, &b, &mut out, m, k, n);
            assert_eq!(out, naive(&a, &b, m, k, n), "{m}x{k}x{n}");
        }
    }

    #[test]
    fn row_result_is_independent_of_batch() {
        let (k, n) = (24, 192);
        let b = data(k * n, 3);
        let a = data(7 * k, 4);
        let mut all = vec![0.0; 7 * n];
        matmul_into(&a, &b, &mut all, 7, k, n);
        for r in 0..7 {
            let mut one = vec![0.0; n];
            matmul_into(&a[r * k..(r + 1) * k], &b, &mut one, 1, k, n);
            assert_eq!(&all[r * n..(r + 1) * n], &one[..]);
        }
    }

    #[test]
    fn transposed_kernels_match_naive() {
        let (m, k, n) = (6, 9, 11);
        let g = data(m * n, 5);
        let b = data(k * n, 6);
        let a = data(m * k, 7);
        let mut da = vec![0.0; m * k];
        matmul_bt_acc(&g, &b, &mut da, m, n, k);
        let mut db = vec![0.0; k * n];
        matmul_at_acc(&a, &g, &mut db, m, k, n);
        for i in 0..m {
            for p in 0..k {
                let want: f64 = (0..n).map(|j| g[i * n + j] * b[p * n + j]).sum();
                assert!((da[i * k + p] - want).abs() < 1e-12);
            }
        }
        for p in 0..k {
            for j in 0..n {
                let want: f64 = (0..m).map(|i| a[i * k + p] * g[i * n + j]).sum();
                assert!((db[p * n + j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn log_add_exp_handles_sentinels() {
        assert_eq!(log_add_exp(-1e30, -1e30), -1e30 + std::f64::consts::LN_2);
        assert_eq!(log_add_exp(0.0, -1e30), 0.0);
        assert!((log_add_exp(0.0, 0.0) - std::f64::consts::LN_2).abs() < 1e-15);
    }
}
