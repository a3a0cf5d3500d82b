//! Label embeddings and embedding-based true scent.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layout::{Layout, LayoutError};

pub const DEFAULT_DIM: usize = 384;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error("label {0:?} has no embedding")]
    MissingLabel(String),
    #[error("embedding of {0:?} has zero norm")]
    ZeroNormVector(String),
    #[error("embedding of {label:?} has {found} components, expected {expected}")]
    DimensionMismatch {
        label: String,
        expected: usize,
        found: usize,
    },
    #[error("embedding of {0:?} has a non-finite component")]
    NonFinite(String),
    #[error("dimension must be positive")]
    ZeroDimension,
    #[error("node {0} has no label")]
    Unlabeled(u32),
    #[error("malformed embedding file: {0}")]
    Parse(String),
    #[error(transparent)]
    Layout(#[from] LayoutError),
}

#[derive(Serialize, Deserialize)]
struct EmbeddingFile {
    dim: usize,
    vectors: BTreeMap<String, Vec<f32>>,
}

/// Label text to embedding vector, all of one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    entries: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self, EmbeddingError> {
        if dim == 0 {
            return Err(EmbeddingError::ZeroDimension);
        }
        Ok(Self {
            dim,
            entries: BTreeMap::new(),
        })
    }

    pub fn insert(&mut self, label: impl Into<String>, v: Vec<f64>) -> Result<(), EmbeddingError> {
        let label = label.into();
        if v.len() != self.dim {
            return Err(EmbeddingError::DimensionMismatch {
                label,
                expected: self.dim,
                found: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(EmbeddingError::NonFinite(label));
        }
        self.entries.insert(label, v);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, label: &str) -> Option<&[f64]> {
        self.entries.get(label).map(Vec::as_slice)
    }

    /// Parses `{"dim": 384, "vectors": {"<label>": [f32, ...]}}`.
    pub fn from_json(s: &str) -> Result<Self, EmbeddingError> {
        let file: EmbeddingFile =
            serde_json::from_str(s).map_err(|e| EmbeddingError::Parse(e.to_string()))?;
        let mut table = Self::new(file.dim)?;
        for (label, v) in file.vectors {
            table.insert(label, v.into_iter().map(f64::from).collect())?;
        }
        Ok(table)
    }

    pub fn to_json(&self) -> String {
        let file = EmbeddingFile {
            dim: self.dim,
            vectors: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), v.iter().map(|&x| x as f32).collect()))
                .collect(),
        };
        serde_json::to_string(&file).expect("embedding file serializes")
    }
}

/// Cosine similarity between the goal and option embeddings, clamped to
/// `[0, 1]`.
pub fn scent_from_embeddings(
    goal_label: &str,
    option_label: &str,
    table: &EmbeddingTable,
) -> Result<f64, EmbeddingError> {
    let g = table
        .get(goal_label)
        .ok_or_else(|| EmbeddingError::MissingLabel(goal_label.to_owned()))?;
    let l = table
        .get(option_label)
        .ok_or_else(|| EmbeddingError::MissingLabel(option_label.to_owned()))?;
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (ng, nl) = (norm(g), norm(l));
    if ng == 0.0 {
        return Err(EmbeddingError::ZeroNormVector(goal_label.to_owned()));
    }
    if nl == 0.0 {
        return Err(EmbeddingError::ZeroNormVector(option_label.to_owned()));
    }
    let dot: f64 = g.iter().zip(l).map(|(a, b)| a * b).sum();
    Ok((dot / (ng * nl)).clamp(0.0, 1.0))
}

/// Assigns every labelled node the embedding scent of its label for
/// `goal_label`. All nodes must be labelled.
pub fn assign_embedding_scent(
    layout: &Layout,
    goal_label: &str,
    table: &EmbeddingTable,
) -> Result<Layout, EmbeddingError> {
    let mut scents = Vec::with_capacity(layout.nodes().len());
    for n in layout.nodes() {
        let label = n.label.as_deref().ok_or(EmbeddingError::Unlabeled(n.id))?;
        scents.push(scent_from_embeddings(goal_label, label, table)?);
    }
    let mut it = scents.into_iter();
    Ok(layout.with_scents(|_| it.next().expect("one scent per node")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> EmbeddingTable {
        let mut t = EmbeddingTable::new(2).unwrap();
        t.insert("e1", vec![1.0, 0.0]).unwrap();
        t.insert("e2", vec![0.0, 1.0]).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        t.insert("diag", vec![h, h]).unwrap();
        t.insert("neg", vec![-1.0, 0.0]).unwrap();
        t.insert("zero", vec![0.0, 0.0]).unwrap();
        t
    }

    #[test]
    fn cosine_cases() {
        let t = table();
        assert_eq!(scent_from_embeddings("e1", "e1", &t).unwrap(), 1.0);
        assert_eq!(scent_from_embeddings("e1", "e2", &t).unwrap(), 0.0);
        let d = scent_from_embeddings("e1", "diag", &t).unwrap();
        assert!((d - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(scent_from_embeddings("e1", "neg", &t).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        let t = table();
        assert_eq!(
            scent_from_embeddings("e1", "nope", &t),
            Err(EmbeddingError::MissingLabel("nope".into()))
        );
        assert_eq!(
            scent_from_embeddings("zero", "e1", &t),
            Err(EmbeddingError::ZeroNormVector("zero".into()))
        );
        let mut t = table();
        assert!(matches!(
            t.insert("bad", vec![1.0]),
            Err(EmbeddingError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            t.insert("nan", vec![f64::NAN, 1.0]),
            Err(EmbeddingError::NonFinite(_))
        ));
    }

    #[test]
    fn file_round_trip() {
        let t = table();
        let back = EmbeddingTable::from_json(&t.to_json()).unwrap();
        assert_eq!(back.dim(), 2);
        assert_eq!(back.len(), t.len());
        assert!(EmbeddingTable::from_json(r#"{"dim":3,"vectors":{"a":[1,2]}}"#).is_err());
    }
}
