//! The trainable parameter bundle: input encoder, label table and linear
//! classification head.

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoders::{EncoderGrads, EncoderState, TokenizedInput};
use crate::error::{Error, Result};
use crate::linalg::{argmax, cosine, softmax};
use crate::types::{ExperimentConfig, RelationInstance};

/// RNG stream used for classifier-head initialisation.
pub const HEAD_INIT_STREAM: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Joint label-embedding model; predicts by cosine against the label table.
    LabelEmbedding,
    /// Cross-entropy-only classifier; predicts with its head.
    ClassifierBaseline,
    /// Softmax over input-label cosines trained with cross-entropy.
    LabelEmbBaseline,
}

impl ModelKind {
    pub fn predicts_with_table(self) -> bool {
        !matches!(self, ModelKind::ClassifierBaseline)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub kind: ModelKind,
    pub encoder: EncoderState,
    pub table: Array2<f64>,
    pub head_w: Array2<f64>,
    pub head_b: Array1<f64>,
    pub temperature: f64,
    pub max_len_arg1: usize,
    pub max_len_arg2: usize,
    pub prepend_connective: bool,
}

#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub encoder: EncoderGrads,
    pub table: Array2<f64>,
    pub head_w: Array2<f64>,
    pub head_b: Array1<f64>,
}

/// Initial head: uniform on `[-1/sqrt(d), 1/sqrt(d)]`, zero bias.
pub fn init_head(k: usize, d: usize, seed: u64) -> (Array2<f64>, Array1<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(HEAD_INIT_STREAM);
    let bound = 1.0 / (d as f64).sqrt();
    (
        Array2::from_shape_simple_fn((k, d), || rng.gen_range(-bound..bound)),
        Array1::zeros(k),
    )
}

impl Model {
    pub fn new(kind: ModelKind, encoder: EncoderState, table: Array2<f64>, config: &ExperimentConfig, seed: u64) -> Self {
        let (head_w, head_b) = init_head(table.nrows(), encoder.dim(), seed);
        Model {
            kind,
            encoder,
            table,
            head_w,
            head_b,
            temperature: config.temperature,
            max_len_arg1: config.max_len_arg1,
            max_len_arg2: config.max_len_arg2,
            prepend_connective: config.prepend_connective,
        }
    }

    pub fn k(&self) -> usize {
        self.table.nrows()
    }

    pub fn tokenize(&self, inst: &RelationInstance) -> TokenizedInput {
        let tok = self.encoder.tokenizer();
        match (&inst.connective, self.prepend_connective, inst.relation_kind) {
            (Some(conn), true, crate::types::RelationKind::Explicit) => {
                let arg2 = format!("{conn} {}", inst.arg2);
                tok.encode_pair(&inst.arg1, &arg2, self.max_len_arg1, self.max_len_arg2)
            }
            _ => tok.encode_pair(&inst.arg1, &inst.arg2, self.max_len_arg1, self.max_len_arg2),
        }
    }

    /// Input representations, one row per instance.
    pub fn represent(&self, instances: &[RelationInstance]) -> Result<Array2<f64>> {
        if instances.is_empty() {
            return Err(Error::Empty("no instances to encode".into()));
        }
        let mut out = Array2::zeros((instances.len(), self.encoder.dim()));
        for (i, inst) in instances.iter().enumerate() {
            out.row_mut(i).assign(&self.encoder.forward(&self.tokenize(inst)).output());
        }
        Ok(out)
    }

    pub fn logits(&self, repr: ArrayView1<'_, f64>) -> Array1<f64> {
        self.head_w.dot(&repr) + &self.head_b
    }

    /// Per-label vectors used for LEQ: the label table, or the head weight
    /// rows for the classification baseline.
    pub fn label_rows(&self) -> &Array2<f64> {
        if self.kind.predicts_with_table() {
            &self.table
        } else {
            &self.head_w
        }
    }

    pub fn predict_repr(&self, repr: ArrayView1<'_, f64>) -> Result<usize> {
        if self.kind.predicts_with_table() {
            crate::evaluation::predict(repr, self.table.view())
        } else {
            Ok(argmax(self.logits(repr).as_slice().expect("contiguous")))
        }
    }

    /// Class distribution: softmax over cos/τ for table-based models, head
    /// softmax for the classifier.
    pub fn distribution_repr(&self, repr: ArrayView1<'_, f64>) -> Result<Vec<f64>> {
        if self.kind.predicts_with_table() {
            let scores = self
                .table
                .rows()
                .into_iter()
                .map(|row| cosine(repr, row).map(|c| c / self.temperature))
                .collect::<Result<Vec<_>>>()?;
            Ok(softmax(&scores))
        } else {
            Ok(softmax(self.logits(repr).as_slice().expect("contiguous")))
        }
    }

    pub fn predict(&self, instances: &[RelationInstance]) -> Result<Vec<usize>> {
        let reprs = self.represent(instances)?;
        reprs.rows().into_iter().map(|r| self.predict_repr(r)).collect()
    }

    pub fn zero_grads(&self) -> ModelGrads {
        ModelGrads {
            encoder: self.encoder.zero_grads(),
            table: Array2::zeros(self.table.raw_dim()),
            head_w: Array2::zeros(self.head_w.raw_dim()),
            head_b: Array1::zeros(self.head_b.raw_dim()),
        }
    }

    /// Encoder, head and kind as one opaque blob; the table is stored separately.
    pub fn state_to_bytes(&self) -> Vec<u8> {
        let mut out = self.encoder.to_bytes();
        let header = format!(
            "{}\t{}\t{}\t{:?}\t{}\t{}\t{}\n",
            serde_json::to_string(&self.kind).expect("serialisable"),
            self.head_w.nrows(),
            self.head_w.ncols(),
            self.temperature,
            self.max_len_arg1,
            self.max_len_arg2,
            self.prepend_connective
        );
        out.extend_from_slice(header.as_bytes());
        for v in self.head_w.iter().chain(self.head_b.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn state_from_bytes(bytes: &[u8], table: Array2<f64>) -> Result<Self> {
        let bad = |m: &str| Error::Validation(format!("model state: {m}"));
        let (encoder, used) = EncoderState::from_bytes_prefix(bytes)?;
        let rest = &bytes[used..];
        let nl = rest.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing head header"))?;
        let header = std::str::from_utf8(&rest[..nl]).map_err(|_| bad("header is not UTF-8"))?;
        let f: Vec<&str> = header.split('\t').collect();
        if f.len() != 7 {
            return Err(bad("malformed head header"));
        }
        let kind: ModelKind = serde_json::from_str(f[0]).map_err(|_| bad("unknown model kind"))?;
        let parse_usize = |s: &str| s.parse::<usize>().map_err(|_| bad("bad integer"));
        let k = parse_usize(f[1])?;
        let d = parse_usize(f[2])?;
        let temperature: f64 = f[3].parse().map_err(|_| bad("bad temperature"))?;
        let a = parse_usize(f[4])?;
        let b = parse_usize(f[5])?;
        let prepend: bool = f[6].parse().map_err(|_| bad("bad flag"))?;
        let data = &rest[nl + 1..];
        if data.len() != 8 * (k * d + k) {
            return Err(bad("head parameter size mismatch"));
        }
        let vals: Vec<f64> = data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let head_w = Array2::from_shape_vec((k, d), vals[..k * d].to_vec()).map_err(|_| bad("head shape"))?;
        let head_b = Array1::from_vec(vals[k * d..].to_vec());
        if table.dim() != (k, d) || encoder.dim() != d {
            return Err(Error::Validation(format!(
                "label table is {:?} but model state expects ({k}, {d})",
                table.dim()
            )));
        }
        Ok(Model {
            kind,
            encoder,
            table,
            head_w,
            head_b,
            temperature,
            max_len_arg1: a,
            max_len_arg2: b,
            prepend_connective: prepend,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_blob_round_trip() {
        let cfg = ExperimentConfig {
            dim: 8,
            vocab_size: 64,
            ..ExperimentConfig::default()
        };
        let enc = EncoderState::pretrained("t", 64, 8).unwrap();
        let table = Array2::from_shape_fn((3, 8), |(i, j)| (i * 8 + j) as f64 * 0.1 - 1.0);
        let model = Model::new(ModelKind::ClassifierBaseline, enc, table.clone(), &cfg, 4);
        let back = Model::state_from_bytes(&model.state_to_bytes(), table).unwrap();
        assert_eq!(model, back);
        assert!(Model::state_from_bytes(&model.state_to_bytes(), Array2::zeros((2, 8))).is_err());
    }
}
