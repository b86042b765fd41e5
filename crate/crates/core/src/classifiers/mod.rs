//! Bogus/legitimate folksonomy classifiers.
//!
//! Labels are consistent across models: legitimate is class 0 (`+1` for the
//! SVM) and bogus is class 1 (`-1`).

pub mod naive_bayes;
pub mod neural;
pub mod svm;
pub mod tfidf;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{encode_sequence, Corpus, Folksonomy, Label, Vocabulary};
use crate::error::{Error, Result};

pub use naive_bayes::{nb_score, nb_train, NaiveBayesModel};
pub use neural::{nn_forward, nn_train, NeuralModel, TrainHistory};
pub use svm::{svm_decision, svm_train, SvmModel, SvmParams};
pub use tfidf::{tfidf_fit, tfidf_transform, SparseVector, TfidfVectorizer};

pub const MODEL_FORMAT: &str = "tagguard-model";
pub const MODEL_VERSION: u32 = 1;

pub trait Classifier: Sync {
    fn bogus_probability(&self, f: &Folksonomy) -> f64;

    fn predict(&self, f: &Folksonomy) -> Label {
        if self.bogus_probability(f) > 0.5 {
            Label::Bogus
        } else {
            Label::Legitimate
        }
    }

    fn predict_all(&self, fs: &[&Folksonomy]) -> Result<Vec<Label>> {
        Ok(fs.iter().map(|f| self.predict(f)).collect())
    }

    /// Fingerprint of the vocabulary the model was trained over, if it has one.
    fn vocabulary_fingerprint(&self) -> Option<u64> {
        None
    }
}

/// Predicts the ground-truth label. Unlabeled folksonomies pass as legitimate.
#[derive(Clone, Copy, Debug, Default)]
pub struct OracleClassifier;

impl Classifier for OracleClassifier {
    fn bogus_probability(&self, f: &Folksonomy) -> f64 {
        if f.label == Label::Bogus {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ConstantLegitClassifier;

impl Classifier for ConstantLegitClassifier {
    fn bogus_probability(&self, _: &Folksonomy) -> f64 {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassifierKind {
    #[serde(rename = "nb")]
    NaiveBayes,
    #[serde(rename = "svm")]
    Svm,
    #[serde(rename = "nn")]
    Neural,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 3] = [ClassifierKind::NaiveBayes, ClassifierKind::Svm, ClassifierKind::Neural];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::NaiveBayes => "nb",
            ClassifierKind::Svm => "svm",
            ClassifierKind::Neural => "nn",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nb" => Ok(ClassifierKind::NaiveBayes),
            "svm" => Ok(ClassifierKind::Svm),
            "nn" => Ok(ClassifierKind::Neural),
            other => Err(Error::invalid(format!("unknown classifier {other:?}, expected nb, svm or nn"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Validation loss may exceed the lowest seen by this fraction.
    pub tolerance: f64,
    pub validation_split: f64,
    /// Epochs without a new checkpoint before training stops.
    pub patience: usize,
    pub embedding_dim: usize,
    pub hidden_units: usize,
    pub dense_units: usize,
    pub sequence_length: usize,
    pub svm_c: f64,
    pub svm_epochs: usize,
    pub svm_learning_rate: f64,
    pub nb_smoothing: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            learning_rate: 0.001,
            batch_size: 32,
            max_epochs: 100,
            tolerance: 0.01,
            validation_split: 0.1,
            patience: 3,
            embedding_dim: 25,
            hidden_units: 200,
            dense_units: 50,
            sequence_length: 50,
            svm_c: 1.0,
            svm_epochs: 200,
            svm_learning_rate: 0.5,
            nb_smoothing: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive_reals = [
            ("learning_rate", self.learning_rate),
            ("tolerance", self.tolerance),
            ("svm_c", self.svm_c),
            ("svm_learning_rate", self.svm_learning_rate),
            ("nb_smoothing", self.nb_smoothing),
        ];
        for (name, v) in positive_reals {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        let counts = [
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
            ("embedding_dim", self.embedding_dim),
            ("hidden_units", self.hidden_units),
            ("dense_units", self.dense_units),
            ("sequence_length", self.sequence_length),
            ("svm_epochs", self.svm_epochs),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be at least 1")));
            }
        }
        if !(self.validation_split > 0.0 && self.validation_split < 1.0) {
            return Err(Error::invalid(format!(
                "validation_split must lie in (0, 1), got {}",
                self.validation_split
            )));
        }
        Ok(())
    }

    pub fn svm_params(&self) -> SvmParams {
        SvmParams {
            c: self.svm_c,
            epochs: self.svm_epochs,
            learning_rate: self.svm_learning_rate,
            seed: self.seed,
        }
    }
}

/// Counts `(legitimate, bogus)`; unlabeled examples are an error.
pub fn split_labels(train: &[&Folksonomy]) -> Result<(usize, usize)> {
    let mut counts = (0, 0);
    for f in train {
        match f.label {
            Label::Legitimate => counts.0 += 1,
            Label::Bogus => counts.1 += 1,
            Label::Unlabeled => {
                return Err(Error::invalid(format!(
                    "unlabeled training folksonomy for {} on {}",
                    f.user, f.resource
                )))
            }
        }
    }
    Ok(counts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmClassifier {
    pub vectorizer: TfidfVectorizer,
    pub model: SvmModel,
}

impl Classifier for SvmClassifier {
    /// Logistic squash of the negated margin.
    fn bogus_probability(&self, f: &Folksonomy) -> f64 {
        let m = self.margin(f);
        1.0 / (1.0 + m.exp())
    }

    fn predict(&self, f: &Folksonomy) -> Label {
        if self.margin(f) > 0.0 {
            Label::Legitimate
        } else {
            Label::Bogus
        }
    }

    fn vocabulary_fingerprint(&self) -> Option<u64> {
        Some(self.vectorizer.vocabulary().fingerprint())
    }
}

impl SvmClassifier {
    pub fn margin(&self, f: &Folksonomy) -> f64 {
        self.model
            .decision_sparse(&self.vectorizer.transform(f))
            .expect("vectorizer and model share a dimension")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuralClassifier {
    pub vocabulary: Vocabulary,
    pub model: NeuralModel,
}

impl NeuralClassifier {
    fn encode(&self, f: &Folksonomy) -> Vec<u32> {
        encode_sequence(f, &self.vocabulary, self.model.sequence_length)
    }
}

impl Classifier for NeuralClassifier {
    fn bogus_probability(&self, f: &Folksonomy) -> f64 {
        nn_forward(&self.model, &self.encode(f)).expect("encoded within vocabulary").1
    }

    fn predict_all(&self, fs: &[&Folksonomy]) -> Result<Vec<Label>> {
        let seqs: Vec<Vec<u32>> = fs.iter().map(|f| self.encode(f)).collect();
        Ok(self
            .model
            .bogus_probabilities(&seqs)?
            .into_iter()
            .map(|p| if p > 0.5 { Label::Bogus } else { Label::Legitimate })
            .collect())
    }

    fn vocabulary_fingerprint(&self) -> Option<u64> {
        Some(self.vocabulary.fingerprint())
    }
}

/// A trained model of any kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model")]
pub enum TrainedModel {
    #[serde(rename = "nb")]
    NaiveBayes(NaiveBayesModel),
    #[serde(rename = "svm")]
    Svm(SvmClassifier),
    #[serde(rename = "nn")]
    Neural(NeuralClassifier),
}

impl TrainedModel {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            TrainedModel::NaiveBayes(_) => ClassifierKind::NaiveBayes,
            TrainedModel::Svm(_) => ClassifierKind::Svm,
            TrainedModel::Neural(_) => ClassifierKind::Neural,
        }
    }

    fn inner(&self) -> &dyn Classifier {
        match self {
            TrainedModel::NaiveBayes(m) => m,
            TrainedModel::Svm(m) => m,
            TrainedModel::Neural(m) => m,
        }
    }
}

impl Classifier for TrainedModel {
    fn bogus_probability(&self, f: &Folksonomy) -> f64 {
        self.inner().bogus_probability(f)
    }

    fn predict(&self, f: &Folksonomy) -> Label {
        self.inner().predict(f)
    }

    fn predict_all(&self, fs: &[&Folksonomy]) -> Result<Vec<Label>> {
        self.inner().predict_all(fs)
    }

    fn vocabulary_fingerprint(&self) -> Option<u64> {
        self.inner().vocabulary_fingerprint()
    }
}

pub fn train(kind: ClassifierKind, train: &[&Folksonomy], v: &Vocabulary, cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    let (legit, bogus) = split_labels(train)?;
    if legit == 0 || bogus == 0 {
        return Err(Error::SingleClass);
    }
    Ok(match kind {
        ClassifierKind::NaiveBayes => TrainedModel::NaiveBayes(nb_train(train, cfg.nb_smoothing)?),
        ClassifierKind::Svm => {
            let vectorizer = tfidf_fit(train, v)?;
            let xs: Vec<SparseVector> = train.iter().map(|f| vectorizer.transform(f)).collect();
            let ys: Vec<f64> = train
                .iter()
                .map(|f| if f.label == Label::Bogus { -1.0 } else { 1.0 })
                .collect();
            let (model, _) = svm_train(&xs, &ys, &cfg.svm_params())?;
            TrainedModel::Svm(SvmClassifier { vectorizer, model })
        }
        ClassifierKind::Neural => {
            let seqs: Vec<Vec<u32>> = train
                .iter()
                .map(|f| encode_sequence(f, v, cfg.sequence_length))
                .collect();
            let labels: Vec<Label> = train.iter().map(|f| f.label).collect();
            let (model, _) = nn_train(&seqs, &labels, v.len(), cfg)?;
            TrainedModel::Neural(NeuralClassifier {
                vocabulary: v.clone(),
                model,
            })
        }
    })
}

/// Partitions `s` into predicted-legitimate and predicted-bogus corpora.
/// Folksonomies keep their ground-truth labels.
pub fn classify_corpus<C: Classifier + ?Sized>(model: &C, s: &Corpus, v: &Vocabulary) -> Result<(Corpus, Corpus)> {
    if let Some(fp) = model.vocabulary_fingerprint() {
        if fp != v.fingerprint() {
            return Err(Error::VocabularyMismatch {
                model: format!("{fp:016x}"),
                corpus: v.fingerprint_hex(),
            });
        }
    }
    let refs: Vec<&Folksonomy> = s.folksonomies().iter().collect();
    let labels = model.predict_all(&refs)?;
    Ok(partition(s, &labels))
}

/// Splits `s` by precomputed predictions, one per folksonomy in corpus order.
pub fn partition(s: &Corpus, predictions: &[Label]) -> (Corpus, Corpus) {
    debug_assert_eq!(s.len(), predictions.len());
    let mut i = 0;
    let legit = s.filter(|_| {
        i += 1;
        predictions[i - 1] != Label::Bogus
    });
    let mut j = 0;
    let bogus = s.filter(|_| {
        j += 1;
        predictions[j - 1] == Label::Bogus
    });
    (legit, bogus)
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    vocabulary_fingerprint: String,
    #[serde(flatten)]
    model: TrainedModel,
}

impl TrainedModel {
    pub fn to_json(&self, v: &Vocabulary) -> Result<String> {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            vocabulary_fingerprint: v.fingerprint_hex(),
            model: self.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    /// Parses a saved model and checks it was trained over `v`.
    pub fn from_json(s: &str, v: &Vocabulary) -> Result<TrainedModel> {
        let file: ModelFile = serde_json::from_str(s).map_err(|e| Error::ModelFormat(e.to_string()))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::ModelFormat(format!(
                "expected {MODEL_FORMAT} version {MODEL_VERSION}, found {} version {}",
                file.format, file.version
            )));
        }
        if file.vocabulary_fingerprint != v.fingerprint_hex() {
            return Err(Error::VocabularyMismatch {
                model: file.vocabulary_fingerprint,
                corpus: v.fingerprint_hex(),
            });
        }
        Ok(file.model)
    }

    pub fn save(&self, path: impl AsRef<Path>, v: &Vocabulary) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json(v)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>, v: &Vocabulary) -> Result<TrainedModel> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_vocabulary;

    fn mixed() -> Corpus {
        let mut fs = Vec::new();
        for i in 0..20 {
            fs.push(Folksonomy::new(format!("l{i}"), format!("r{}", i % 4), ["web", "news", &format!("t{i}")], Label::Legitimate).unwrap());
        }
        for i in 0..10 {
            fs.push(Folksonomy::new(format!("b{i}"), "bogus", ["cheap", "pills", "web"], Label::Bogus).unwrap());
        }
        Corpus::new(fs).unwrap()
    }

    #[test]
    fn oracle_and_constant_partitions() {
        let c = mixed();
        let v = build_vocabulary(&c).unwrap();
        let (l, b) = classify_corpus(&OracleClassifier, &c, &v).unwrap();
        assert_eq!(l, c.legitimate());
        assert_eq!(b.len(), 10);
        assert!(b.folksonomies().iter().all(|f| f.label == Label::Bogus));
        let (l, b) = classify_corpus(&ConstantLegitClassifier, &c, &v).unwrap();
        assert_eq!(l, c);
        assert!(b.is_empty());
    }

    #[test]
    fn every_kind_trains_and_partitions() {
        let c = mixed();
        let v = build_vocabulary(&c).unwrap();
        let refs: Vec<&Folksonomy> = c.folksonomies().iter().collect();
        let cfg = TrainConfig {
            hidden_units: 8,
            dense_units: 4,
            embedding_dim: 4,
            max_epochs: 60,
            patience: 60,
            learning_rate: 0.01,
            validation_split: 0.2,
            ..Default::default()
        };
        for kind in ClassifierKind::ALL {
            let m = train(kind, &refs, &v, &cfg).unwrap();
            assert_eq!(m.kind(), kind);
            let (l, b) = classify_corpus(&m, &c, &v).unwrap();
            assert_eq!(l.len() + b.len(), c.len());
            assert_eq!(b.len(), 10, "{kind}");
        }
    }

    #[test]
    fn vocabulary_mismatch_is_rejected() {
        let c = mixed();
        let v = build_vocabulary(&c).unwrap();
        let refs: Vec<&Folksonomy> = c.folksonomies().iter().collect();
        let m = train(ClassifierKind::Svm, &refs, &v, &TrainConfig::default()).unwrap();
        let other = Vocabulary::from_ranked(vec!["web".into()]);
        assert!(matches!(classify_corpus(&m, &c, &other), Err(Error::VocabularyMismatch { .. })));
        let json = m.to_json(&v).unwrap();
        assert!(matches!(TrainedModel::from_json(&json, &other), Err(Error::VocabularyMismatch { .. })));
        assert_eq!(TrainedModel::from_json(&json, &v).unwrap(), m);
    }

    #[test]
    fn model_file_round_trip() {
        let c = mixed();
        let v = build_vocabulary(&c).unwrap();
        let refs: Vec<&Folksonomy> = c.folksonomies().iter().collect();
        let m = train(ClassifierKind::NaiveBayes, &refs, &v, &TrainConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nb.json");
        m.save(&path, &v).unwrap();
        assert_eq!(TrainedModel::load(&path, &v).unwrap(), m);
        assert!(matches!(
            TrainedModel::from_json("{\"format\":\"x\"}", &v),
            Err(Error::ModelFormat(_))
        ));
    }

    #[test]
    fn svm_tie_is_bogus() {
        let c = mixed();
        let v = build_vocabulary(&c).unwrap();
        let refs: Vec<&Folksonomy> = c.folksonomies().iter().collect();
        let vectorizer = tfidf_fit(&refs, &v).unwrap();
        let zero = SvmClassifier {
            model: SvmModel::new(vec![0.0; vectorizer.dim()], 0.0, 1.0),
            vectorizer,
        };
        assert_eq!(zero.predict(&c.folksonomies()[0]), Label::Bogus);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { validation_split: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { tolerance: -1.0, ..Default::default() }.validate().is_err());
        let parsed: TrainConfig = toml::from_str("seed = 3\nmax_epochs = 7").unwrap();
        assert_eq!(parsed.max_epochs, 7);
        assert!(toml::from_str::<TrainConfig>("bogus_key = 1").is_err());
    }
}
