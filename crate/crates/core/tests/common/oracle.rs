//! Brute-force BLEU oracles.

/// Clipped n-gram counts by exhaustive comparison, no hashing.
pub fn brute_counts(cand: &[u8], refr: &[u8], n: usize) -> (usize, usize) {
    if cand.len() < n {
        return (0, 0);
    }
    let grams = |s: &[u8]| -> Vec<Vec<u8>> {
        if s.len() < n {
            return Vec::new();
        }
        (0..=s.len() - n).map(|i| s[i..i + n].to_vec()).collect()
    };
    let cg = grams(cand);
    let rg = grams(refr);
    let mut distinct: Vec<&Vec<u8>> = Vec::new();
    for g in &cg {
        if !distinct.contains(&g) {
            distinct.push(g);
        }
    }
    let matches = distinct
        .iter()
        .map(|g| {
            let c = cg.iter().filter(|x| x == g).count();
            let r = rg.iter().filter(|x| x == g).count();
            c.min(r)
        })
        .sum();
    (matches, cg.len())
}

pub fn brute_bp(c: usize, r: usize) -> f64 {
    if c >= r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    }
}

pub fn brute_sentence_bleu(cand: &[u8], refr: &[u8]) -> f64 {
    if cand.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let (m, t) = brute_counts(cand, refr, n);
        let p = if n == 1 {
            if m == 0 {
                return 0.0;
            }
            m as f64 / t as f64
        } else {
            (m + 1) as f64 / (t + 1) as f64
        };
        log_sum = if n == 1 { p.ln() } else { log_sum + p.ln() };
    }
    brute_bp(cand.len(), refr.len()) * (log_sum / 4.0).exp()
}

pub fn brute_corpus_bleu(cands: &[Vec<u8>], refs: &[Vec<u8>]) -> f64 {
    let (mut c, mut r) = (0, 0);
    let mut m = [0usize; 4];
    let mut t = [0usize; 4];
    for (x, y) in cands.iter().zip(refs) {
        c += x.len();
        r += y.len();
        for n in 1..=4 {
            let (a, b) = brute_counts(x, y, n);
            m[n - 1] += a;
            t[n - 1] += b;
        }
    }
    if c == 0 || m.contains(&0) {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 0..4 {
        log_sum += (m[n] as f64 / t[n] as f64).ln();
    }
    brute_bp(c, r) * (log_sum / 4.0).exp()
}
