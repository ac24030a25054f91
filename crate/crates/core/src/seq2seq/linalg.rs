//! Row-major dense kernels.
//!
//! Every output element is accumulated in a fixed order that depends only on
//! the inner dimension, never on how many rows are processed together. That
//! makes a pair's result bit-identical whether it is scored alone or inside
//! a larger batch.

/// `out[r, :] += a[r, :] · w` for `a: rows×k`, `w: k×n`, `out: rows×n`.
pub fn matmul_acc(a: &[f64], rows: usize, k: usize, w: &[f64], n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), rows * k);
    debug_assert_eq!(w.len(), k * n);
    debug_assert_eq!(out.len(), rows * n);
    let mut r = 0;
    while r + 4 <= rows {
        let (o0, rest) = out[r * n..(r + 4) * n].split_at_mut(n);
        let (o1, rest) = rest.split_at_mut(n);
        let (o2, o3) = rest.split_at_mut(n);
        for kk in 0..k {
            let wr = &w[kk * n..(kk + 1) * n];
            let a0 = a[r * k + kk];
            let a1 = a[(r + 1) * k + kk];
            let a2 = a[(r + 2) * k + kk];
            let a3 = a[(r + 3) * k + kk];
            for j in 0..n {
                let wv = wr[j];
                o0[j] += a0 * wv;
                o1[j] += a1 * wv;
                o2[j] += a2 * wv;
                o3[j] += a3 * wv;
            }
        }
        r += 4;
    }
    while r < rows {
        let o = &mut out[r * n..(r + 1) * n];
        for kk in 0..k {
            let av = a[r * k + kk];
            let wr = &w[kk * n..(kk + 1) * n];
            for (ov, wv) in o.iter_mut().zip(wr) {
                *ov += av * wv;
            }
        }
        r += 1;
    }
}

/// `dw += aᵀ · g` for `a: rows×k`, `g: rows×n`, `dw: k×n`.
pub fn matmul_at_b_acc(a: &[f64], rows: usize, k: usize, g: &[f64], n: usize, dw: &mut [f64]) {
    debug_assert_eq!(a.len(), rows * k);
    debug_assert_eq!(g.len(), rows * n);
    debug_assert_eq!(dw.len(), k * n);
    for kk in 0..k {
        let d = &mut dw[kk * n..(kk + 1) * n];
        for r in 0..rows {
            let av = a[r * k + kk];
            if av == 0.0 {
                continue;
            }
            let gr = &g[r * n..(r + 1) * n];
            for (dv, gv) in d.iter_mut().zip(gr) {
                *dv += av * gv;
            }
        }
    }
}

/// `out[r, :] += g[r, :] · wᵀ` for `g: rows×n`, `w: k×n`, `out: rows×k`.
pub fn matmul_a_bt_acc(g: &[f64], rows: usize, n: usize, w: &[f64], k: usize, out: &mut [f64]) {
    debug_assert_eq!(g.len(), rows * n);
    debug_assert_eq!(w.len(), k * n);
    debug_assert_eq!(out.len(), rows * k);
    for r in 0..rows {
        let gr = &g[r * n..(r + 1) * n];
        let o = &mut out[r * k..(r + 1) * k];
        for (kk, ov) in o.iter_mut().enumerate() {
            *ov += dot(gr, &w[kk * n..(kk + 1) * n]);
        }
    }
}

/// Dot product with eight fixed partial sums.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
