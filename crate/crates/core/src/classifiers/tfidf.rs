use serde::{Deserialize, Serialize};

use crate::corpus::{Folksonomy, Vocabulary};
use crate::error::{Error, Result};

/// Sparse feature vector; `entries` are `(dimension, value)` pairs sorted by dimension.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    pub dim: usize,
    pub entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn from_dense(values: &[f64]) -> Self {
        Self {
            dim: values.len(),
            entries: values
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(i, &v)| (i, v))
                .collect(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn norm_squared(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum()
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| v * dense[i]).sum()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }
}

/// TF-IDF weights over a tag vocabulary; dimension `i` is the tag with
/// vocabulary index `i + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TfidfVectorizer {
    vocabulary: Vocabulary,
    idf: Vec<f64>,
    documents: usize,
}

/// `idf(t) = ln(D / D_t)`; tags never seen in training get `ln(D + 1)`.
pub fn tfidf_fit(train: &[&Folksonomy], v: &Vocabulary) -> Result<TfidfVectorizer> {
    if train.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut df = vec![0usize; v.len()];
    for f in train {
        for t in &f.tags {
            if let Some(i) = v.index_of(t) {
                df[i as usize - 1] += 1;
            }
        }
    }
    let d = train.len() as f64;
    let idf = df
        .into_iter()
        .map(|n| if n == 0 { (d + 1.0).ln() } else { (d / n as f64).ln() })
        .collect();
    Ok(TfidfVectorizer {
        vocabulary: v.clone(),
        idf,
        documents: train.len(),
    })
}

impl TfidfVectorizer {
    pub fn dim(&self) -> usize {
        self.idf.len()
    }

    pub fn documents(&self) -> usize {
        self.documents
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn idf(&self, tag: &str) -> Option<f64> {
        self.vocabulary
            .index_of(tag)
            .map(|i| self.idf[i as usize - 1])
    }

    /// Component `t` is `(|d_t| / |d|) * idf(t)` with `|d_t| ∈ {0, 1}`.
    pub fn transform(&self, f: &Folksonomy) -> SparseVector {
        let size = f.size() as f64;
        let mut entries: Vec<(usize, f64)> = f
            .tags
            .iter()
            .filter_map(|t| self.vocabulary.index_of(t))
            .map(|i| {
                let dim = i as usize - 1;
                (dim, self.idf[dim] / size)
            })
            .filter(|&(_, v)| v != 0.0)
            .collect();
        entries.sort_by_key(|&(i, _)| i);
        SparseVector {
            dim: self.dim(),
            entries,
        }
    }
}

pub fn tfidf_transform(vz: &TfidfVectorizer, f: &Folksonomy) -> SparseVector {
    vz.transform(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;

    fn hundred() -> (Vec<Folksonomy>, Vocabulary) {
        let fs: Vec<Folksonomy> = (0..100)
            .map(|i| {
                let mut tags = vec!["every".to_string(), format!("filler{i}")];
                if i < 10 {
                    tags.push("rare".into());
                }
                Folksonomy::new(format!("u{i}"), "r", tags, Label::Legitimate).unwrap()
            })
            .collect();
        let mut tags = vec!["every".to_string(), "rare".to_string(), "never".to_string()];
        tags.extend((0..100).map(|i| format!("filler{i}")));
        (fs, Vocabulary::from_ranked(tags))
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn idf_values() {
        let (fs, v) = hundred();
        let refs: Vec<&Folksonomy> = fs.iter().collect();
        let vz = tfidf_fit(&refs, &v).unwrap();
        assert_eq!(vz.documents(), 100);
        assert!((vz.idf("rare").unwrap() - 10f64.ln()).abs() < 1e-12);
        assert!((vz.idf("rare").unwrap() - 2.3026).abs() < 1e-4);
        assert_eq!(vz.idf("every").unwrap(), 0.0);
        assert!((vz.idf("never").unwrap() - 101f64.ln()).abs() < 1e-12);
        assert!(tfidf_fit(&[], &v).is_err());
    }

    #[test]
    fn transform_components() {
        let (fs, v) = hundred();
        let refs: Vec<&Folksonomy> = fs.iter().collect();
        let vz = tfidf_fit(&refs, &v).unwrap();
        let f = Folksonomy::new("q", "r", ["rare", "every", "filler1", "filler2", "oov"], Label::Unlabeled).unwrap();
        let x = vz.transform(&f);
        let rare = v.index_of("rare").unwrap() as usize - 1;
        let dense = x.to_dense();
        assert!((dense[rare] - 0.2 * 10f64.ln()).abs() < 1e-12);
        assert!((dense[rare] - 0.4605).abs() < 1e-4);
        assert_eq!(dense[v.index_of("every").unwrap() as usize - 1], 0.0);
        assert!(x.nnz() <= f.size());
        assert_eq!(x.dim, v.len());
    }
}
