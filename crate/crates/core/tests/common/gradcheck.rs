//! Reverse-mode gradients against central finite differences.

use super::{batch_of, random_pairs, tiny_config};
use curricula::seq2seq::{backward_gradients, forward_teacher_forced, Parameters, Preset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-4;
pub const REL_TOL: f64 = 1e-4;
const WEIGHT_SCALE: f64 = 6.0;

fn rel_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-10 {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}

/// Fraction of `samples` random coordinates whose analytic gradient agrees
/// with the central difference.
pub fn gradient_check(preset: Preset, samples: usize, seed: u64) -> (f64, Vec<String>) {
    let cfg = tiny_config(preset, 12);
    // Freshly initialized weights give gradients around 1e-9 in the lower
    // layers, below what a central difference can resolve; check at a
    // point with larger weights instead.
    let mut params = Parameters::init(&cfg, seed).unwrap();
    for x in params.data.iter_mut() {
        *x *= WEIGHT_SCALE;
    }
    let pairs = random_pairs(3, 12, 5, seed + 100);
    let batch = batch_of(&pairs);
    let dropout = Some(seed * 31 + 7);
    let (_, grads) = backward_gradients(&params, &batch, dropout).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ok = 0;
    let mut failures = Vec::new();
    for _ in 0..samples {
        let i = rng.gen_range(0..params.len());
        let mut plus = params.clone();
        plus.data[i] += H;
        let mut minus = params.clone();
        minus.data[i] -= H;
        let lp = forward_teacher_forced(&plus, &batch, dropout).unwrap().mean_loss;
        let lm = forward_teacher_forced(&minus, &batch, dropout).unwrap().mean_loss;
        let numeric = (lp - lm) / (2.0 * H);
        let err = rel_error(grads.data[i], numeric);
        if err < REL_TOL {
            ok += 1;
        } else {
            failures.push(format!(
                "{} [{i}]: analytic {:e} numeric {:e} rel {err:e}",
                params.layout.tensor_of(i).unwrap(),
                grads.data[i],
                numeric
            ));
        }
    }
    (ok as f64 / samples as f64, failures)
}
