//! Action-label conditioning: one-hot vectors or word-vector-table lookups.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, ArrayD, IxDyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::dataio::PositionEncoding;
use crate::F;

#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error("class_id {class_id} out of range for {num_classes} classes")]
    ClassOutOfRange { class_id: usize, num_classes: usize },
    #[error("action name is empty")]
    EmptyName,
    #[error("vector table {path}: {reason}")]
    TableFormat { path: PathBuf, reason: String },
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Everything the motion generator is conditioned on for one sample.
#[derive(Debug, Clone)]
pub struct ActionCondition {
    pub class_id: usize,
    pub class_name: String,
    /// Label embedding (one-hot or word-vector mean).
    pub a_e: Array1<F>,
    pub p_e: PositionEncoding,
    /// Standard-normal noise, re-drawn per sample.
    pub z: Array1<F>,
}

impl ActionCondition {
    /// Concatenate `[a_e, p_e, z]` into the generator input row.
    pub fn to_row(&self) -> Array1<F> {
        let mut v = Vec::with_capacity(self.a_e.len() + 1 + self.z.len());
        v.extend(self.a_e.iter().copied());
        v.push(self.p_e.value as F);
        v.extend(self.z.iter().copied());
        Array1::from_vec(v)
    }
}

/// Draw i.i.d. standard-normal noise of dimension `dim`.
pub fn sample_noise(dim: usize, rng: &mut impl Rng) -> Array1<F> {
    Array1::from_shape_fn(dim, |_| rng.sample::<F, _>(StandardNormal))
}

/// One-hot vector of length `num_classes` with a 1 at `class_id`.
pub fn encode_one_hot(class_id: usize, num_classes: usize) -> Result<Array1<F>, EmbeddingError> {
    if class_id >= num_classes {
        return Err(EmbeddingError::ClassOutOfRange { class_id, num_classes });
    }
    let mut v = Array1::zeros(num_classes);
    v[class_id] = 1.0;
    Ok(v)
}

/// Case-insensitive token-to-vector map with a fixed dimension.
#[derive(Debug, Clone)]
pub struct WordVectorTable {
    vectors: HashMap<String, Array1<F>>,
    dim: usize,
}

impl WordVectorTable {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, Vec<F>)>) -> Option<Self> {
        let mut vectors = HashMap::new();
        let mut dim = None;
        for (tok, v) in pairs {
            match dim {
                None => dim = Some(v.len()),
                Some(d) if d != v.len() => return None,
                _ => {}
            }
            vectors.insert(tok.to_lowercase(), Array1::from_vec(v));
        }
        dim.map(|dim| WordVectorTable { vectors, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&Array1<F>> {
        self.vectors.get(&token.to_lowercase())
    }
}

/// Parse a `<token> <f1> ... <fD>` text file, one entry per line.
pub fn load_vector_table(path: &Path) -> Result<WordVectorTable, EmbeddingError> {
    let text = fs::read_to_string(path).map_err(|source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut pairs = Vec::new();
    let mut dim: Option<usize> = None;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let tok = it.next().expect("non-empty line").to_string();
        let vals: Result<Vec<F>, _> = it.map(|s| s.parse::<F>()).collect();
        let vals = vals.map_err(|e| EmbeddingError::TableFormat {
            path: path.to_path_buf(),
            reason: format!("line {}: {e}", lineno + 1),
        })?;
        if vals.is_empty() {
            return Err(EmbeddingError::TableFormat {
                path: path.to_path_buf(),
                reason: format!("line {}: token without values", lineno + 1),
            });
        }
        match dim {
            None => dim = Some(vals.len()),
            Some(d) if d != vals.len() => {
                return Err(EmbeddingError::TableFormat {
                    path: path.to_path_buf(),
                    reason: format!("line {}: expected {d} values, got {}", lineno + 1, vals.len()),
                });
            }
            _ => {}
        }
        pairs.push((tok, vals));
    }
    WordVectorTable::from_pairs(pairs).ok_or_else(|| EmbeddingError::TableFormat {
        path: path.to_path_buf(),
        reason: "empty table".into(),
    })
}

/// Result of encoding a (possibly multi-token) action name.
#[derive(Debug, Clone)]
pub struct NameEncoding {
    pub vector: Array1<F>,
    /// Tokens that were missing from the table.
    pub oov_tokens: Vec<String>,
    /// True when every token was out-of-vocabulary and the zero vector was used.
    pub all_oov: bool,
}

/// Mean of the word vectors of the whitespace-split tokens. Out-of-vocabulary
/// tokens are skipped; if all are missing the zero vector is returned with
/// `all_oov` set so callers can surface a warning.
pub fn encode_action_name(name: &str, table: &WordVectorTable) -> Result<NameEncoding, EmbeddingError> {
    if name.trim().is_empty() {
        return Err(EmbeddingError::EmptyName);
    }
    let mut sum = Array1::<F>::zeros(table.dim());
    let mut hits = 0usize;
    let mut oov = Vec::new();
    for tok in name.split_whitespace() {
        match table.get(tok) {
            Some(v) => {
                sum = sum + v;
                hits += 1;
            }
            None => oov.push(tok.to_string()),
        }
    }
    if hits > 0 {
        sum.mapv_inplace(|x| x / hits as F);
    }
    Ok(NameEncoding { vector: sum, oov_tokens: oov, all_oov: hits == 0 })
}

/// How labels get embedded for conditioning.
#[derive(Debug, Clone)]
pub enum LabelEncoder {
    OneHot { num_classes: usize },
    WordTable(WordVectorTable),
}

impl LabelEncoder {
    pub fn dim(&self) -> usize {
        match self {
            LabelEncoder::OneHot { num_classes } => *num_classes,
            LabelEncoder::WordTable(t) => t.dim(),
        }
    }

    pub fn encode(&self, class_id: usize, class_name: &str) -> Result<Array1<F>, EmbeddingError> {
        match self {
            LabelEncoder::OneHot { num_classes } => encode_one_hot(class_id, *num_classes),
            LabelEncoder::WordTable(t) => Ok(encode_action_name(class_name, t)?.vector),
        }
    }
}

/// Batch conditions into a `[N, D_e + 1 + D_z]` constant for the generator.
pub fn condition_batch(conds: &[ActionCondition]) -> ArrayD<F> {
    assert!(!conds.is_empty());
    let row_len = conds[0].a_e.len() + 1 + conds[0].z.len();
    let mut data = Vec::with_capacity(conds.len() * row_len);
    for c in conds {
        let row = c.to_row();
        assert_eq!(row.len(), row_len, "heterogeneous condition dims");
        data.extend(row.iter().copied());
    }
    ArrayD::from_shape_vec(IxDyn(&[conds.len(), row_len]), data).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_table() -> WordVectorTable {
        WordVectorTable::from_pairs([
            ("hand".to_string(), vec![1.0, 0.0]),
            ("waving".to_string(), vec![0.0, 1.0]),
        ])
        .unwrap()
    }

    #[test]
    fn one_hot_basics() {
        assert_eq!(encode_one_hot(2, 4).unwrap().to_vec(), vec![0.0, 0.0, 1.0, 0.0]);
        assert_eq!(encode_one_hot(0, 1).unwrap().to_vec(), vec![1.0]);
        assert!(encode_one_hot(5, 4).is_err());
    }

    #[test]
    fn name_encoding_means_tokens() {
        let t = toy_table();
        let e = encode_action_name("hand waving", &t).unwrap();
        assert_eq!(e.vector.to_vec(), vec![0.5, 0.5]);
        assert!(!e.all_oov);

        let e = encode_action_name("hand", &t).unwrap();
        assert_eq!(e.vector.to_vec(), vec![1.0, 0.0]);

        let e = encode_action_name("xyzzy", &t).unwrap();
        assert_eq!(e.vector.to_vec(), vec![0.0, 0.0]);
        assert!(e.all_oov);
        assert_eq!(e.oov_tokens, vec!["xyzzy"]);
    }

    #[test]
    fn name_encoding_is_case_insensitive_and_order_invariant() {
        let t = toy_table();
        let a = encode_action_name("Hand WAVING", &t).unwrap().vector;
        let b = encode_action_name("waving hand", &t).unwrap().vector;
        assert_eq!(a, b);
    }

    #[test]
    fn empty_name_rejected() {
        assert!(matches!(encode_action_name("  ", &toy_table()), Err(EmbeddingError::EmptyName)));
    }
}
