use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{split_labels, Classifier};
use crate::corpus::{Folksonomy, Label};
use crate::error::{Error, Result};

/// Per-tag spamicity `p_i = P(bogus | tag i present)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesModel {
    spamicity: BTreeMap<String, f64>,
    default_spamicity: f64,
    smoothing: f64,
}

/// Laplace-smoothed document-count estimate
/// `p_i = (b_t + α) / (b_t + l_t + 2α)` over tag presence.
pub fn nb_train(train: &[&Folksonomy], smoothing: f64) -> Result<NaiveBayesModel> {
    if !(smoothing > 0.0 && smoothing.is_finite()) {
        return Err(Error::invalid(format!("smoothing must be positive, got {smoothing}")));
    }
    let (legit, bogus) = split_labels(train)?;
    if legit == 0 || bogus == 0 {
        return Err(Error::SingleClass);
    }
    let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for f in train {
        for t in &f.tags {
            let slot = counts.entry(t).or_default();
            match f.label {
                Label::Bogus => slot.0 += 1,
                _ => slot.1 += 1,
            }
        }
    }
    let spamicity = counts
        .into_iter()
        .map(|(t, (b, l))| {
            let p = (b as f64 + smoothing) / ((b + l) as f64 + 2.0 * smoothing);
            (t.to_owned(), p)
        })
        .collect();
    Ok(NaiveBayesModel {
        spamicity,
        default_spamicity: 0.5,
        smoothing,
    })
}

impl NaiveBayesModel {
    /// Builds a model directly from spamicities; every value must lie in (0, 1).
    pub fn from_spamicity(spamicity: BTreeMap<String, f64>) -> Result<Self> {
        if let Some((t, p)) = spamicity.iter().find(|(_, &p)| !(p > 0.0 && p < 1.0)) {
            return Err(Error::invalid(format!("spamicity of {t} is {p}, outside (0, 1)")));
        }
        Ok(Self {
            spamicity,
            default_spamicity: 0.5,
            smoothing: 1.0,
        })
    }

    pub fn spamicity(&self, tag: &str) -> f64 {
        self.spamicity
            .get(tag)
            .copied()
            .unwrap_or(self.default_spamicity)
    }

    pub fn default_spamicity(&self) -> f64 {
        self.default_spamicity
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn tags(&self) -> impl Iterator<Item = (&str, f64)> {
        self.spamicity.iter().map(|(t, &p)| (t.as_str(), p))
    }

    /// `p = 1 / (1 + e^n)` with `n = Σ [ln(1 - p_i) - ln p_i]` over the
    /// folksonomy's distinct tags.
    pub fn score(&self, f: &Folksonomy) -> f64 {
        let n: f64 = f
            .tags
            .iter()
            .map(|t| {
                let p = self.spamicity(t);
                (1.0 - p).ln() - p.ln()
            })
            .sum();
        1.0 / (1.0 + n.exp())
    }
}

pub fn nb_score(m: &NaiveBayesModel, f: &Folksonomy) -> f64 {
    m.score(f)
}

impl Classifier for NaiveBayesModel {
    fn bogus_probability(&self, f: &Folksonomy) -> f64 {
        self.score(f)
    }
}
