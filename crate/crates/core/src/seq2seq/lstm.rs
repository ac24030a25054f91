//! A single LSTM time step over a batch, forward and backward.

use super::linalg::{matmul_a_bt_acc, matmul_acc, matmul_at_b_acc, sigmoid};
use super::params::{LstmSlots, Parameters};

/// Everything the backward pass needs from one forward step.
#[derive(Debug, Clone)]
pub struct StepCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    /// Activated gates `[i | f | g | o]` per row, `rows × 4·hidden`.
    pub gates: Vec<f64>,
    /// `tanh(c)` of the freshly computed cell.
    pub tanh_c: Vec<f64>,
    /// Rows past their sequence end carry state through unchanged.
    pub active: Option<Vec<bool>>,
}

/// Runs one step; returns the cache and the new `(h, c)`.
pub fn step_forward(
    params: &Parameters,
    slots: &LstmSlots,
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    active: Option<Vec<bool>>,
    rows: usize,
) -> (StepCache, Vec<f64>, Vec<f64>) {
    let hidden = params.config.hidden_dim;
    let in_dim = slots.input_dim;
    let w = params.get(slots.weight);
    let bias = params.get(slots.bias);
    let g4 = 4 * hidden;

    let mut z = Vec::with_capacity(rows * g4);
    for _ in 0..rows {
        z.extend_from_slice(bias);
    }
    matmul_acc(&x, rows, in_dim, &w[..in_dim * g4], g4, &mut z);
    matmul_acc(&h_prev, rows, hidden, &w[in_dim * g4..], g4, &mut z);

    let mut h = vec![0.0; rows * hidden];
    let mut c = vec![0.0; rows * hidden];
    let mut tanh_c = vec![0.0; rows * hidden];
    for r in 0..rows {
        let zr = &mut z[r * g4..(r + 1) * g4];
        for j in 0..hidden {
            zr[j] = sigmoid(zr[j]);
            zr[hidden + j] = sigmoid(zr[hidden + j]);
            zr[2 * hidden + j] = zr[2 * hidden + j].tanh();
            zr[3 * hidden + j] = sigmoid(zr[3 * hidden + j]);
        }
        let keep = active.as_ref().is_none_or(|a| a[r]);
        for j in 0..hidden {
            let k = r * hidden + j;
            let cn = zr[hidden + j] * c_prev[k] + zr[j] * zr[2 * hidden + j];
            let tc = cn.tanh();
            tanh_c[k] = tc;
            if keep {
                c[k] = cn;
                h[k] = zr[3 * hidden + j] * tc;
            } else {
                c[k] = c_prev[k];
                h[k] = h_prev[k];
            }
        }
    }
    let cache = StepCache {
        x,
        h_prev,
        c_prev,
        gates: z,
        tanh_c,
        active,
    };
    (cache, h, c)
}

/// Backpropagates `dh`, `dc` (gradients w.r.t. this step's output state)
/// into weight gradients. Returns `(dx, dh_prev, dc_prev)`.
pub fn step_backward(
    params: &Parameters,
    grads: &mut Parameters,
    slots: &LstmSlots,
    cache: &StepCache,
    dh: &[f64],
    dc: &[f64],
    rows: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let hidden = params.config.hidden_dim;
    let in_dim = slots.input_dim;
    let g4 = 4 * hidden;
    let mut dz = vec![0.0; rows * g4];
    let mut dh_prev = vec![0.0; rows * hidden];
    let mut dc_prev = vec![0.0; rows * hidden];

    for r in 0..rows {
        let keep = cache.active.as_ref().is_none_or(|a| a[r]);
        let base = r * hidden;
        if !keep {
            dh_prev[base..base + hidden].copy_from_slice(&dh[base..base + hidden]);
            dc_prev[base..base + hidden].copy_from_slice(&dc[base..base + hidden]);
            continue;
        }
        let gr = &cache.gates[r * g4..(r + 1) * g4];
        let dzr = &mut dz[r * g4..(r + 1) * g4];
        for j in 0..hidden {
            let k = base + j;
            let (i, f, g, o) = (gr[j], gr[hidden + j], gr[2 * hidden + j], gr[3 * hidden + j]);
            let tc = cache.tanh_c[k];
            let d_o = dh[k] * tc;
            let dct = dc[k] + dh[k] * o * (1.0 - tc * tc);
            let d_f = dct * cache.c_prev[k];
            let d_i = dct * g;
            let d_g = dct * i;
            dc_prev[k] = dct * f;
            dzr[j] = d_i * i * (1.0 - i);
            dzr[hidden + j] = d_f * f * (1.0 - f);
            dzr[2 * hidden + j] = d_g * (1.0 - g * g);
            dzr[3 * hidden + j] = d_o * o * (1.0 - o);
        }
    }

    let w = params.get(slots.weight);
    {
        let dw = grads.get_mut(slots.weight);
        let (dwx, dwh) = dw.split_at_mut(in_dim * g4);
        matmul_at_b_acc(&cache.x, rows, in_dim, &dz, g4, dwx);
        matmul_at_b_acc(&cache.h_prev, rows, hidden, &dz, g4, dwh);
    }
    {
        let db = grads.get_mut(slots.bias);
        for r in 0..rows {
            for (d, v) in db.iter_mut().zip(&dz[r * g4..(r + 1) * g4]) {
                *d += v;
            }
        }
    }
    let mut dx = vec![0.0; rows * in_dim];
    matmul_a_bt_acc(&dz, rows, g4, &w[..in_dim * g4], in_dim, &mut dx);
    matmul_a_bt_acc(&dz, rows, g4, &w[in_dim * g4..], hidden, &mut dh_prev);
    (dx, dh_prev, dc_prev)
}
