//! A small trainable input encoder.
//!
//! The sequence-start position attends uniformly over the whole
//! `[CLS] arg1 [SEP] arg2 [SEP]` sequence (token plus segment embeddings),
//! followed by one dense layer with `tanh`. The output at that position is the
//! input representation; no projection head is stacked on top of it.

use std::env;
use std::fs;
use std::path::PathBuf;

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tokenizer::{fnv1a, TokenizedInput, Tokenizer};
use crate::error::{Error, Result};

/// Environment variable naming a directory of cached pretrained checkpoints.
pub const CHECKPOINT_DIR_ENV: &str = "DISCALIGN_CHECKPOINT_DIR";

const BLOB_MAGIC: &[u8; 8] = b"DAENC01\n";

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderState {
    pub checkpoint: String,
    pub token_emb: Array2<f64>,
    pub segment_emb: Array2<f64>,
    pub proj_w: Array2<f64>,
    pub proj_b: Array1<f64>,
}

/// Gradients with the same shapes as [`EncoderState`]'s parameters.
#[derive(Debug, Clone)]
pub struct EncoderGrads {
    pub token_emb: Array2<f64>,
    pub segment_emb: Array2<f64>,
    pub proj_w: Array2<f64>,
    pub proj_b: Array1<f64>,
}

/// Forward-pass intermediates needed by [`EncoderState::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: TokenizedInput,
    pooled: Array1<f64>,
    output: Array1<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> ArrayView1<'_, f64> {
        self.output.view()
    }
}

const PROJ_GAIN: f64 = 4.0;

impl EncoderState {
    /// Deterministic initialisation keyed by the checkpoint name.
    fn synthesize(checkpoint: &str, vocab_size: usize, dim: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(format!("checkpoint:{checkpoint}").as_bytes()));
        let token_emb = Array2::from_shape_simple_fn((vocab_size, dim), || rng.gen_range(-0.5..0.5));
        let segment_emb = Array2::from_shape_simple_fn((2, dim), || rng.gen_range(-0.1..0.1));
        let spread = 0.2 / (dim as f64).sqrt();
        let mut proj_w = Array2::from_shape_simple_fn((dim, dim), || rng.gen_range(-spread..spread));
        // Mean pooling shrinks the token scale by roughly sqrt(length); the
        // gain brings outputs back to an O(1) range before tanh.
        for i in 0..dim {
            proj_w[[i, i]] += PROJ_GAIN;
        }
        EncoderState {
            checkpoint: checkpoint.to_string(),
            token_emb,
            segment_emb,
            proj_w,
            proj_b: Array1::zeros(dim),
        }
    }

    fn cache_path(checkpoint: &str, vocab_size: usize, dim: usize) -> Option<PathBuf> {
        let dir = env::var_os(CHECKPOINT_DIR_ENV)?;
        Some(PathBuf::from(dir).join(format!("{checkpoint}-v{vocab_size}-d{dim}.ckpt")))
    }

    /// Loads a pretrained checkpoint by name. A checkpoint file in the cache
    /// directory takes precedence; otherwise the named weights are derived
    /// deterministically from the name, so every run that names the same
    /// checkpoint starts from identical parameters.
    pub fn pretrained(checkpoint: &str, vocab_size: usize, dim: usize) -> Result<Self> {
        if let Some(path) = Self::cache_path(checkpoint, vocab_size, dim) {
            if path.exists() {
                let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
                let state = Self::from_bytes(&bytes)?;
                if state.vocab_size() != vocab_size || state.dim() != dim {
                    return Err(Error::DimensionMismatch(format!(
                        "checkpoint {} is {}x{}, expected {vocab_size}x{dim}",
                        path.display(),
                        state.vocab_size(),
                        state.dim()
                    )));
                }
                return Ok(state);
            }
        }
        Ok(Self::synthesize(checkpoint, vocab_size, dim))
    }

    pub fn dim(&self) -> usize {
        self.proj_b.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.token_emb.nrows()
    }

    pub fn tokenizer(&self) -> Tokenizer {
        Tokenizer::new(self.vocab_size())
    }

    pub fn forward(&self, input: &TokenizedInput) -> ForwardCache {
        let mut pooled = Array1::zeros(self.dim());
        for (&t, &s) in input.tokens.iter().zip(&input.segments) {
            pooled += &self.token_emb.row(t);
            pooled += &self.segment_emb.row(s);
        }
        pooled /= input.len() as f64;
        let output = (self.proj_w.dot(&pooled) + &self.proj_b).mapv(f64::tanh);
        ForwardCache {
            input: input.clone(),
            pooled,
            output,
        }
    }

    /// Accumulates parameter gradients for one forward pass given the
    /// gradient of the loss w.r.t. its output.
    pub fn backward(&self, cache: &ForwardCache, d_output: ArrayView1<'_, f64>, grads: &mut EncoderGrads) {
        let dz = &d_output * &cache.output.mapv(|o| 1.0 - o * o);
        for i in 0..self.dim() {
            grads.proj_w.row_mut(i).scaled_add(dz[i], &cache.pooled);
        }
        grads.proj_b += &dz;
        let d_pooled = self.proj_w.t().dot(&dz) / cache.input.len() as f64;
        for (&t, &s) in cache.input.tokens.iter().zip(&cache.input.segments) {
            grads.token_emb.row_mut(t).scaled_add(1.0, &d_pooled);
            grads.segment_emb.row_mut(s).scaled_add(1.0, &d_pooled);
        }
    }

    pub fn zero_grads(&self) -> EncoderGrads {
        EncoderGrads {
            token_emb: Array2::zeros(self.token_emb.raw_dim()),
            segment_emb: Array2::zeros(self.segment_emb.raw_dim()),
            proj_w: Array2::zeros(self.proj_w.raw_dim()),
            proj_b: Array1::zeros(self.proj_b.raw_dim()),
        }
    }

    /// Encodes argument pairs, truncating arguments to `a` and `b` words.
    pub fn encode_inputs<S: AsRef<str>>(&self, batch: &[(S, S)], a: usize, b: usize) -> Result<Array2<f64>> {
        if batch.is_empty() {
            return Err(Error::Empty("no argument pairs to encode".into()));
        }
        let tok = self.tokenizer();
        let mut out = Array2::zeros((batch.len(), self.dim()));
        for (i, (arg1, arg2)) in batch.iter().enumerate() {
            let cache = self.forward(&tok.encode_pair(arg1.as_ref(), arg2.as_ref(), a, b));
            out.row_mut(i).assign(&cache.output);
        }
        Ok(out)
    }

    /// Representation of a single text, `[CLS] text [SEP]`.
    pub fn encode_text(&self, text: &str, max_len: usize) -> Array1<f64> {
        self.forward(&self.tokenizer().encode_single(text, max_len)).output
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = format!("{}\t{}\t{}\n", self.checkpoint, self.vocab_size(), self.dim());
        let mut out = Vec::with_capacity(header.len() + 8 * self.n_params() + 8);
        out.extend_from_slice(BLOB_MAGIC);
        out.extend_from_slice(header.as_bytes());
        for buf in self.buffers() {
            for v in buf {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Parses a blob from [`EncoderState::to_bytes`], returning the state and
    /// the number of bytes consumed.
    pub fn from_bytes_prefix(bytes: &[u8]) -> Result<(Self, usize)> {
        let bad = |m: &str| Error::Validation(format!("encoder checkpoint: {m}"));
        let rest = bytes.strip_prefix(BLOB_MAGIC.as_slice()).ok_or_else(|| bad("bad magic"))?;
        let nl = rest.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing header"))?;
        let header = std::str::from_utf8(&rest[..nl]).map_err(|_| bad("header is not UTF-8"))?;
        let fields: Vec<&str> = header.split('\t').collect();
        let [name, vocab, dim] = fields.as_slice() else {
            return Err(bad("malformed header"));
        };
        let vocab: usize = vocab.parse().map_err(|_| bad("bad vocab size"))?;
        let dim: usize = dim.parse().map_err(|_| bad("bad dim"))?;
        let mut state = EncoderState {
            checkpoint: name.to_string(),
            token_emb: Array2::zeros((vocab, dim)),
            segment_emb: Array2::zeros((2, dim)),
            proj_w: Array2::zeros((dim, dim)),
            proj_b: Array1::zeros(dim),
        };
        let mut data = &rest[nl + 1..];
        let needed = 8 * state.n_params();
        if data.len() < needed {
            return Err(bad("truncated parameters"));
        }
        for buf in state.buffers_mut() {
            for v in buf.iter_mut() {
                let (head, tail) = data.split_at(8);
                *v = f64::from_le_bytes(head.try_into().expect("8 bytes"));
                data = tail;
            }
        }
        let consumed = BLOB_MAGIC.len() + nl + 1 + needed;
        Ok((state, consumed))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (state, used) = Self::from_bytes_prefix(bytes)?;
        if used != bytes.len() {
            return Err(Error::Validation("encoder checkpoint: trailing bytes".into()));
        }
        Ok(state)
    }

    pub fn n_params(&self) -> usize {
        self.token_emb.len() + self.segment_emb.len() + self.proj_w.len() + self.proj_b.len()
    }

    pub fn buffers(&self) -> Vec<&[f64]> {
        vec![
            self.token_emb.as_slice().expect("standard layout"),
            self.segment_emb.as_slice().expect("standard layout"),
            self.proj_w.as_slice().expect("standard layout"),
            self.proj_b.as_slice().expect("standard layout"),
        ]
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.token_emb.as_slice_mut().expect("standard layout"),
            self.segment_emb.as_slice_mut().expect("standard layout"),
            self.proj_w.as_slice_mut().expect("standard layout"),
            self.proj_b.as_slice_mut().expect("standard layout"),
        ]
    }
}

impl EncoderGrads {
    pub fn buffers(&self) -> Vec<&[f64]> {
        vec![
            self.token_emb.as_slice().expect("standard layout"),
            self.segment_emb.as_slice().expect("standard layout"),
            self.proj_w.as_slice().expect("standard layout"),
            self.proj_b.as_slice().expect("standard layout"),
        ]
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.token_emb.as_slice_mut().expect("standard layout"),
            self.segment_emb.as_slice_mut().expect("standard layout"),
            self.proj_w.as_slice_mut().expect("standard layout"),
            self.proj_b.as_slice_mut().expect("standard layout"),
        ]
    }
}
