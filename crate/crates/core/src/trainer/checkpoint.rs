//! Binary checkpoint format.
//!
//! ```text
//! "CURR" | version: u16 LE
//! section*: u64 LE length | bytes      (config, vocab fingerprints, tensors, history)
//! trailer: SHA-256 of all preceding bytes
//! ```
//!
//! Tensors are stored as `name | ndims | dims | f64 LE data`.

use std::io::Write as _;
use std::path::Path;

use crate::corpus::VocabPair;
use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;
use crate::seq2seq::{ModelConfig, Parameters};

pub const MAGIC: &[u8; 4] = b"CURR";
pub const FORMAT_VERSION: u16 = 1;
const HASH_LEN: usize = 32;

/// One line of training history carried inside a checkpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryEntry {
    pub epoch: u32,
    pub train_loss: f64,
    pub val_perplexity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub params: Parameters,
    pub vocabs: VocabPair,
    pub history: Vec<HistoryEntry>,
}

impl ModelCheckpoint {
    pub fn new(params: Parameters, vocabs: VocabPair) -> Self {
        ModelCheckpoint {
            params,
            vocabs,
            history: Vec::new(),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.params.config
    }

    /// Identity of the model: configuration, vocabularies and parameter
    /// bytes. Training history does not contribute.
    pub fn fingerprint(&self) -> Fingerprint {
        let mut h = Fingerprint::hasher();
        sha2::Digest::update(&mut h, self.params.config.to_text().as_bytes());
        sha2::Digest::update(&mut h, self.vocabs.src.0);
        sha2::Digest::update(&mut h, self.vocabs.tgt.0);
        for x in &self.params.data {
            sha2::Digest::update(&mut h, x.to_le_bytes());
        }
        Fingerprint::finish(h)
    }

    pub fn check_vocabs(&self, vocabs: &VocabPair) -> Result<()> {
        if &self.vocabs != vocabs {
            return Err(Error::Fingerprint(format!(
                "model expects vocabularies {}/{}, data was encoded with {}/{}",
                self.vocabs.src.short(),
                self.vocabs.tgt.short(),
                vocabs.src.short(),
                vocabs.tgt.short()
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());

        push_section(&mut out, self.params.config.to_text().as_bytes());

        let mut fps = Vec::with_capacity(64);
        fps.extend_from_slice(&self.vocabs.src.0);
        fps.extend_from_slice(&self.vocabs.tgt.0);
        push_section(&mut out, &fps);

        let mut tensors = Vec::new();
        tensors.extend_from_slice(&(self.params.layout.named.len() as u32).to_le_bytes());
        for (name, slot) in &self.params.layout.named {
            tensors.extend_from_slice(&(name.len() as u16).to_le_bytes());
            tensors.extend_from_slice(name.as_bytes());
            tensors.extend_from_slice(&2u32.to_le_bytes());
            tensors.extend_from_slice(&(slot.rows as u64).to_le_bytes());
            tensors.extend_from_slice(&(slot.cols as u64).to_le_bytes());
            for x in self.params.get(*slot) {
                tensors.extend_from_slice(&x.to_le_bytes());
            }
        }
        push_section(&mut out, &tensors);

        let mut hist = Vec::new();
        hist.extend_from_slice(&(self.history.len() as u32).to_le_bytes());
        for h in &self.history {
            hist.extend_from_slice(&h.epoch.to_le_bytes());
            hist.extend_from_slice(&h.train_loss.to_le_bytes());
            hist.extend_from_slice(&h.val_perplexity.to_le_bytes());
        }
        push_section(&mut out, &hist);

        let digest = Fingerprint::of(&out);
        out.extend_from_slice(&digest.0);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 2 {
            return Err(Error::Corruption("checkpoint truncated before header".into()));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version v{version} (supported: v{FORMAT_VERSION})"
            )));
        }
        if bytes.len() < 6 + HASH_LEN {
            return Err(Error::Corruption("checkpoint truncated".into()));
        }
        let (body, trailer) = bytes.split_at(bytes.len() - HASH_LEN);
        if Fingerprint::of(body).0 != trailer {
            return Err(Error::Corruption("content hash mismatch".into()));
        }
        let mut r = Reader { buf: body, pos: 6 };
        let config_text = std::str::from_utf8(r.section()?)
            .map_err(|_| Error::Corruption("config section is not UTF-8".into()))?;
        let config = ModelConfig::from_text(config_text)?;

        let fps = r.section()?;
        if fps.len() != 64 {
            return Err(Error::Corruption("vocabulary fingerprint section".into()));
        }
        let mut src = [0u8; 32];
        let mut tgt = [0u8; 32];
        src.copy_from_slice(&fps[..32]);
        tgt.copy_from_slice(&fps[32..]);

        let mut params = Parameters::zeros(&config)?;
        let mut t = Reader { buf: r.section()?, pos: 0 };
        let count = t.u32()? as usize;
        if count != params.layout.named.len() {
            return Err(Error::Corruption(format!("expected {} tensors, found {count}", params.layout.named.len())));
        }
        let layout = std::sync::Arc::clone(&params.layout);
        for (name, slot) in &layout.named {
            let len = t.u16()? as usize;
            let found = t.take(len)?;
            if found != name.as_bytes() {
                return Err(Error::Corruption(format!("expected tensor '{name}'")));
            }
            let ndims = t.u32()?;
            let rows = t.u64()? as usize;
            let cols = t.u64()? as usize;
            if ndims != 2 || rows != slot.rows || cols != slot.cols {
                return Err(Error::Corruption(format!("tensor '{name}' has the wrong shape")));
            }
            for x in params.get_mut(*slot) {
                *x = t.f64()?;
            }
        }

        let mut h = Reader { buf: r.section()?, pos: 0 };
        let n = h.u32()? as usize;
        let mut history = Vec::with_capacity(n);
        for _ in 0..n {
            history.push(HistoryEntry {
                epoch: h.u32()?,
                train_loss: h.f64()?,
                val_perplexity: h.f64()?,
            });
        }
        if r.pos != body.len() {
            return Err(Error::Corruption("trailing bytes after history".into()));
        }
        Ok(ModelCheckpoint {
            params,
            vocabs: VocabPair {
                src: Fingerprint(src),
                tgt: Fingerprint(tgt),
            },
            history,
        })
    }
}

fn push_section(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(bytes);
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Corruption("unexpected end of data".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn section(&mut self) -> Result<&'a [u8]> {
        let len = self.u64()?;
        self.take(usize::try_from(len).map_err(|_| Error::Corruption("section too large".into()))?)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Writes via a temporary file in the same directory and renames it into
/// place, so readers never observe a partial checkpoint.
pub fn save_checkpoint(ckpt: &ModelCheckpoint, path: &Path) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(&ckpt.to_bytes()).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelCheckpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    ModelCheckpoint::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seq2seq::Preset;

    fn ckpt() -> ModelCheckpoint {
        let cfg = Preset::Base.config(10, 11).scaled(4, 5);
        let mut c = ModelCheckpoint::new(
            Parameters::init(&cfg, 3).unwrap(),
            VocabPair {
                src: Fingerprint::of(b"s"),
                tgt: Fingerprint::of(b"t"),
            },
        );
        c.history.push(HistoryEntry {
            epoch: 1,
            train_loss: 3.0,
            val_perplexity: 7.5,
        });
        c
    }

    #[test]
    fn bytes_round_trip() {
        let c = ckpt();
        let bytes = c.to_bytes();
        let back = ModelCheckpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn bad_version_names_supported_one() {
        let mut bytes = ckpt().to_bytes();
        bytes[4..6].copy_from_slice(&999u16.to_le_bytes());
        match ModelCheckpoint::from_bytes(&bytes) {
            Err(Error::Format(msg)) => assert!(msg.contains("v999") && msg.contains("supported: v1"), "{msg}"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(ModelCheckpoint::from_bytes(b"NOPE\x01\x00"), Err(Error::Format(_))));
    }

    #[test]
    fn truncation_and_bit_flips_are_corruption() {
        let bytes = ckpt().to_bytes();
        for cut in [3, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(ModelCheckpoint::from_bytes(&bytes[..cut]), Err(Error::Corruption(_))), "cut {cut}");
        }
        let mut flipped = bytes.clone();
        flipped[100] ^= 1;
        assert!(matches!(ModelCheckpoint::from_bytes(&flipped), Err(Error::Corruption(_))));
    }

    #[test]
    fn fingerprint_tracks_parameters_only() {
        let c = ckpt();
        let mut d = c.clone();
        d.history.clear();
        assert_eq!(c.fingerprint(), d.fingerprint());
        d.params.data[5] = f64::from_bits(d.params.data[5].to_bits() ^ 1);
        assert_ne!(c.fingerprint(), d.fingerprint());
    }
}
