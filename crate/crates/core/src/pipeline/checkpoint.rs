//! Binary checkpoints. Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "BASTSCKP"
//! version    u32
//! kind       u8       0 = pretrained encoder, 1 = summarizer
//! dim        u32
//! config     u32 length + UTF-8 TOML
//! ast vocab  string list
//! code vocab string list (empty for kind 0)
//! word vocab string list (empty for kind 0)
//! params     u32 count, then per parameter:
//!            string name, u32 rows, u32 cols, rows*cols f64
//! checksum   32 bytes SHA-256 of everything above
//! ```
//!
//! A string list is a u32 count followed by that many strings; a string is
//! a u32 byte length followed by UTF-8 bytes.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::RunConfig;
use crate::autodiff::{ParamStore, Tensor};
use crate::summarizer::Vocab;
use crate::syntax_encoder::AstVocab;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"BASTSCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointKind {
    Pretrained,
    Summarizer,
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checksum mismatch")]
    Checksum,
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("expected a {expected:?} checkpoint, found {found:?}")]
    Kind {
        expected: CheckpointKind,
        found: CheckpointKind,
    },
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub kind: CheckpointKind,
    pub config: RunConfig,
    pub ast_vocab: AstVocab,
    pub code_vocab: Vocab,
    pub word_vocab: Vocab,
    pub params: ParamStore,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("fits in u32").to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

fn put_list(out: &mut Vec<u8>, items: &[String]) {
    put_u32(out, items.len());
    for s in items {
        put_str(out, s);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() - self.pos < n {
            return Err(CheckpointError::Format(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn string(&mut self) -> Result<String, CheckpointError> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| CheckpointError::Format(e.to_string()))
    }

    fn list(&mut self) -> Result<Vec<String>, CheckpointError> {
        let n = self.u32()?;
        (0..n).map(|_| self.string()).collect()
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.push(match self.kind {
            CheckpointKind::Pretrained => 0,
            CheckpointKind::Summarizer => 1,
        });
        put_u32(&mut out, self.config.dim);
        put_str(&mut out, &self.config.to_toml());
        put_list(&mut out, self.ast_vocab.labels());
        let regular = |v: &Vocab| v.tokens()[crate::summarizer::SPECIALS.len()..].to_vec();
        match self.kind {
            CheckpointKind::Pretrained => {
                put_list(&mut out, &[]);
                put_list(&mut out, &[]);
            }
            CheckpointKind::Summarizer => {
                put_list(&mut out, &regular(&self.code_vocab));
                put_list(&mut out, &regular(&self.word_vocab));
            }
        }
        put_u32(&mut out, self.params.len());
        for (_, p) in self.params.iter() {
            put_str(&mut out, &p.name);
            put_u32(&mut out, p.value.rows());
            put_u32(&mut out, p.value.cols());
            for x in p.value.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < 8 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        if bytes.len() < 8 + 4 + 32 {
            return Err(CheckpointError::Format("too short".into()));
        }
        let (body, sum) = bytes.split_at(bytes.len() - 32);
        let mut r = Reader { buf: body, pos: 8 };
        let version = r.u32()? as u32;
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(version));
        }
        if Sha256::digest(body).as_slice() != sum {
            return Err(CheckpointError::Checksum);
        }
        let kind = match r.take(1)?[0] {
            0 => CheckpointKind::Pretrained,
            1 => CheckpointKind::Summarizer,
            k => return Err(CheckpointError::Format(format!("unknown kind {k}"))),
        };
        let dim = r.u32()?;
        let config = RunConfig::from_toml(&r.string()?).map_err(|e| CheckpointError::Format(e.to_string()))?;
        if config.dim != dim {
            return Err(CheckpointError::Format(format!("dim {dim} disagrees with config {}", config.dim)));
        }
        let ast_vocab = AstVocab::from_labels(r.list()?);
        let code_vocab = Vocab::from_tokens(r.list()?);
        let word_vocab = Vocab::from_tokens(r.list()?);
        let mut params = ParamStore::new();
        for _ in 0..r.u32()? {
            let name = r.string()?;
            let rows = r.u32()?;
            let cols = r.u32()?;
            let raw = r.take(rows * cols * 8)?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            if params.id(&name).is_some() {
                return Err(CheckpointError::Format(format!("duplicate parameter {name}")));
            }
            params.add(name, Tensor::new(&[rows, cols], data));
        }
        if r.pos != body.len() {
            return Err(CheckpointError::Format("trailing bytes".into()));
        }
        Ok(Checkpoint {
            kind,
            config,
            ast_vocab,
            code_vocab,
            word_vocab,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        Ok(fs::write(path, self.to_bytes())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn expect_kind(&self, expected: CheckpointKind) -> Result<(), CheckpointError> {
        if self.kind == expected {
            Ok(())
        } else {
            Err(CheckpointError::Kind {
                expected,
                found: self.kind,
            })
        }
    }

    /// Copies every parameter whose name exists in `store`, checking shapes.
    /// Returns how many were copied.
    pub fn restore_into(&self, store: &mut ParamStore) -> Result<usize, CheckpointError> {
        let mut n = 0;
        for (_, p) in self.params.iter() {
            if let Some(dst) = store.by_name_mut(&p.name) {
                if dst.value.shape() != p.value.shape() {
                    return Err(CheckpointError::Format(format!(
                        "{}: shape {:?} does not match model {:?}",
                        p.name,
                        p.value.shape(),
                        dst.value.shape()
                    )));
                }
                dst.value = p.value.clone();
                n += 1;
            }
        }
        Ok(n)
    }
}
