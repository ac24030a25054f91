use crate::corpus::{EncodedPair, PAD};

/// Padded, row-major id matrices for a group of encoded pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub src_width: usize,
    pub src: Vec<usize>,
    pub src_lengths: Vec<usize>,
    pub tgt_width: usize,
    pub tgt_in: Vec<usize>,
    pub tgt_out: Vec<usize>,
    pub tgt_lengths: Vec<usize>,
}

impl Batch {
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = &'a EncodedPair>) -> Self {
        let pairs: Vec<&EncodedPair> = pairs.into_iter().collect();
        let src_width = pairs.iter().map(|p| p.src_ids.len()).max().unwrap_or(0);
        let tgt_width = pairs.iter().map(|p| p.tgt_in_ids.len()).max().unwrap_or(0);
        let n = pairs.len();
        let mut batch = Batch {
            indices: pairs.iter().map(|p| p.index).collect(),
            src_width,
            src: vec![PAD; n * src_width],
            src_lengths: pairs.iter().map(|p| p.src_ids.len()).collect(),
            tgt_width,
            tgt_in: vec![PAD; n * tgt_width],
            tgt_out: vec![PAD; n * tgt_width],
            tgt_lengths: pairs.iter().map(|p| p.tgt_in_ids.len()).collect(),
        };
        for (b, p) in pairs.iter().enumerate() {
            batch.src[b * src_width..b * src_width + p.src_ids.len()].copy_from_slice(&p.src_ids);
            let t = p.tgt_in_ids.len();
            batch.tgt_in[b * tgt_width..b * tgt_width + t].copy_from_slice(&p.tgt_in_ids);
            batch.tgt_out[b * tgt_width..b * tgt_width + t].copy_from_slice(&p.tgt_out_ids);
        }
        batch
    }

    pub fn size(&self) -> usize {
        self.indices.len()
    }

    /// Number of non-PAD target positions, i.e. the loss denominator.
    pub fn token_count(&self) -> usize {
        self.tgt_lengths.iter().sum()
    }

    /// Same pairs with `src_extra` / `tgt_extra` additional PAD columns.
    pub fn padded(&self, src_extra: usize, tgt_extra: usize) -> Self {
        let widen = |ids: &[usize], width: usize, extra: usize| -> Vec<usize> {
            let mut out = Vec::with_capacity(self.size() * (width + extra));
            for b in 0..self.size() {
                out.extend_from_slice(&ids[b * width..(b + 1) * width]);
                out.extend(std::iter::repeat_n(PAD, extra));
            }
            out
        };
        Batch {
            indices: self.indices.clone(),
            src_width: self.src_width + src_extra,
            src: widen(&self.src, self.src_width, src_extra),
            src_lengths: self.src_lengths.clone(),
            tgt_width: self.tgt_width + tgt_extra,
            tgt_in: widen(&self.tgt_in, self.tgt_width, tgt_extra),
            tgt_out: widen(&self.tgt_out, self.tgt_width, tgt_extra),
            tgt_lengths: self.tgt_lengths.clone(),
        }
    }
}
