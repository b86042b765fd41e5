//! The attack/countermeasure evaluation protocol.
//!
//! For each repetition a training batch of bogus folksonomies is generated
//! and the classifier is cross-validated on it together with the legitimate
//! corpus. Then, for each injection ratio, a fresh attack batch is merged into
//! the corpus, filtered by the classifier, and the surviving folksonomies
//! feed the recommender. Impact is measured on the top-k lists of the
//! legitimate users.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::{
    generate, inject, AttackKind, AttackSpec, BogusBatch, DEFAULT_MAX_SIZE, DEFAULT_RESOURCE_POOL,
    DEFAULT_TAG_POOL,
};
use crate::classifiers::{
    self, partition, Classifier, ClassifierKind, ConstantLegitClassifier, OracleClassifier, TrainConfig,
    TrainedModel,
};
use crate::corpus::{build_vocabulary, Corpus, Folksonomy, Label, Vocabulary};
use crate::error::{Error, Result};
use crate::recommender::{deterministic_embeddings, rank_of, EmbeddingTable, Profiles, TopKList};

/// Classifier applied before recommendation, if any.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Countermeasure {
    None,
    /// Ground-truth labels; an upper bound on any classifier.
    Oracle,
    ConstantLegit,
    Trained(ClassifierKind),
}

impl Countermeasure {
    pub fn name(self) -> &'static str {
        match self {
            Countermeasure::None => "none",
            Countermeasure::Oracle => "oracle",
            Countermeasure::ConstantLegit => "constant-legit",
            Countermeasure::Trained(k) => k.name(),
        }
    }
}

impl fmt::Display for Countermeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Countermeasure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Countermeasure::None),
            "oracle" => Ok(Countermeasure::Oracle),
            "constant-legit" => Ok(Countermeasure::ConstantLegit),
            other => other.parse().map(Countermeasure::Trained).map_err(|_| {
                Error::invalid(format!(
                    "unknown classifier {other:?}, expected none, nb, svm, nn, oracle or constant-legit"
                ))
            }),
        }
    }
}

impl TryFrom<String> for Countermeasure {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Countermeasure> for String {
    fn from(c: Countermeasure) -> String {
        c.name().to_owned()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackOptions {
    pub popular_tag_pool: usize,
    pub popular_resource_pool: usize,
    pub max_size: usize,
    pub bogus_resource: String,
    pub target_resource: Option<String>,
}

impl Default for AttackOptions {
    fn default() -> Self {
        Self {
            popular_tag_pool: DEFAULT_TAG_POOL,
            popular_resource_pool: DEFAULT_RESOURCE_POOL,
            max_size: DEFAULT_MAX_SIZE,
            bogus_resource: "bogus-resource".into(),
            target_resource: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub attack: AttackKind,
    pub injection_ratios: Vec<f64>,
    pub training_ratio: f64,
    pub folds: usize,
    pub repetitions: usize,
    pub k: usize,
    pub classifier: Countermeasure,
    pub seed: u64,
    /// Users resampled per repetition; `None` keeps the whole corpus.
    pub sample_users: Option<usize>,
    pub embedding_dim: usize,
    pub attack_options: AttackOptions,
    /// `seed` here is ignored; fold models get seeds derived from the master seed.
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            attack: AttackKind::Overload,
            injection_ratios: vec![0.001, 0.005, 0.01, 0.05, 0.10],
            training_ratio: 0.30,
            folds: 10,
            repetitions: 5,
            k: 15,
            classifier: Countermeasure::None,
            seed: 0,
            sample_users: None,
            embedding_dim: crate::recommender::DEFAULT_DIMENSION,
            attack_options: AttackOptions::default(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.injection_ratios.is_empty() {
            return Err(Error::invalid("at least one injection ratio is required"));
        }
        if let Some(r) = self
            .injection_ratios
            .iter()
            .chain([&self.training_ratio])
            .find(|r| !(**r > 0.0 && **r <= 1.0))
        {
            return Err(Error::invalid(format!("ratio {r} outside (0, 1]")));
        }
        if self.folds < 2 || self.repetitions == 0 || self.k == 0 || self.embedding_dim == 0 {
            return Err(Error::invalid("need folds >= 2, repetitions >= 1, k >= 1, embedding_dim >= 1"));
        }
        if self.sample_users == Some(0) {
            return Err(Error::invalid("sample_users must be at least 1"));
        }
        self.train.validate()
    }

    fn attack_spec(&self, ratio: f64, seed: u64, prefix: String, bogus_resource: String) -> AttackSpec {
        let o = &self.attack_options;
        AttackSpec {
            kind: self.attack,
            injection_ratio: ratio,
            popular_tag_pool: o.popular_tag_pool,
            popular_resource_pool: o.popular_resource_pool,
            max_size: o.max_size,
            bogus_resource,
            target_resource: o.target_resource.clone(),
            seed,
            fake_user_prefix: prefix,
        }
    }
}

/// Stream identifiers for [`derive_seed`].
pub mod stream {
    pub const REPETITION: u64 = 1;
    pub const SAMPLE: u64 = 2;
    pub const TRAIN_BATCH: u64 = 3;
    pub const FOLDS: u64 = 4;
    pub const FOLD_MODEL: u64 = 5;
    pub const ATTACK: u64 = 6;
    pub const EMBEDDING: u64 = 7;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for `(stream, index)` under `parent`.
pub fn derive_seed(parent: u64, stream: u64, index: u64) -> u64 {
    splitmix(splitmix(splitmix(parent) ^ stream) ^ index)
}

/// Seeds of each repetition under `cfg.seed`.
pub fn repetition_seeds(cfg: &RunConfig) -> Vec<u64> {
    (0..cfg.repetitions as u64)
        .map(|r| derive_seed(cfg.seed, stream::REPETITION, r))
        .collect()
}

/// `2PR / (P + R)`, 0 when both are 0.
pub fn f_score(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Support-weighted mean of the two per-class F scores.
pub fn weighted_f(f_legit: f64, f_bogus: f64, legit_support: f64, bogus_support: f64) -> f64 {
    (f_legit * legit_support + f_bogus * bogus_support) / (legit_support + bogus_support)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub legit_as_legit: usize,
    pub legit_as_bogus: usize,
    pub bogus_as_legit: usize,
    pub bogus_as_bogus: usize,
}

impl Confusion {
    pub fn from_labels(predicted: &[Label], truth: &[Label]) -> Result<Self> {
        if predicted.len() != truth.len() {
            return Err(Error::DimensionMismatch {
                expected: truth.len(),
                actual: predicted.len(),
            });
        }
        let mut c = Confusion::default();
        for (p, t) in predicted.iter().zip(truth) {
            let p_bogus = *p == Label::Bogus;
            match (*t == Label::Bogus, p_bogus) {
                (false, false) => c.legit_as_legit += 1,
                (false, true) => c.legit_as_bogus += 1,
                (true, false) => c.bogus_as_legit += 1,
                (true, true) => c.bogus_as_bogus += 1,
            }
        }
        Ok(c)
    }

    pub fn add(&mut self, o: &Confusion) {
        self.legit_as_legit += o.legit_as_legit;
        self.legit_as_bogus += o.legit_as_bogus;
        self.bogus_as_legit += o.bogus_as_legit;
        self.bogus_as_bogus += o.bogus_as_bogus;
    }

    pub fn metrics(&self) -> ClassificationMetrics {
        let ratio = |a: usize, b: usize| if a + b == 0 { 0.0 } else { a as f64 / (a + b) as f64 };
        let class = |p: f64, r: f64| ClassMetrics {
            precision: p,
            recall: r,
            f: f_score(p, r),
        };
        let legit = class(
            ratio(self.legit_as_legit, self.bogus_as_legit),
            ratio(self.legit_as_legit, self.legit_as_bogus),
        );
        let bogus = class(
            ratio(self.bogus_as_bogus, self.legit_as_bogus),
            ratio(self.bogus_as_bogus, self.bogus_as_legit),
        );
        let n_legit = (self.legit_as_legit + self.legit_as_bogus) as f64;
        let n_bogus = (self.bogus_as_legit + self.bogus_as_bogus) as f64;
        let overall_f = if n_legit + n_bogus == 0.0 {
            0.0
        } else {
            weighted_f(legit.f, bogus.f, n_legit, n_bogus)
        };
        ClassificationMetrics { legit, bogus, overall_f }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub legit: ClassMetrics,
    pub bogus: ClassMetrics,
    pub overall_f: f64,
}

impl ClassificationMetrics {
    fn mean(all: &[ClassificationMetrics]) -> ClassificationMetrics {
        let n = all.len() as f64;
        let avg = |get: &dyn Fn(&ClassificationMetrics) -> f64| all.iter().map(get).sum::<f64>() / n;
        ClassificationMetrics {
            legit: ClassMetrics {
                precision: avg(&|m| m.legit.precision),
                recall: avg(&|m| m.legit.recall),
                f: avg(&|m| m.legit.f),
            },
            bogus: ClassMetrics {
                precision: avg(&|m| m.bogus.precision),
                recall: avg(&|m| m.bogus.recall),
                f: avg(&|m| m.bogus.f),
            },
            overall_f: avg(&|m| m.overall_f),
        }
    }
}

/// Bogus is the positive class for the bogus row, legitimate for the legit row.
pub fn confusion_metrics(predicted: &[Label], truth: &[Label]) -> Result<ClassificationMetrics> {
    Ok(Confusion::from_labels(predicted, truth)?.metrics())
}

pub fn affected_population<'a>(lists: impl IntoIterator<Item = &'a TopKList>, bogus: &str) -> usize {
    lists.into_iter().filter(|l| rank_of(bogus, l).is_some()).count()
}

pub fn avg_bogus_rank<'a>(lists: impl IntoIterator<Item = &'a TopKList>, bogus: &str) -> Option<f64> {
    let ranks: Vec<usize> = lists.into_iter().filter_map(|l| rank_of(bogus, l)).collect();
    (!ranks.is_empty()).then(|| ranks.iter().sum::<usize>() as f64 / ranks.len() as f64)
}

/// Users whose list holds the bogus resource above the target; a missing
/// target ranks below everything.
pub fn piggyback_dominance<'a>(lists: impl IntoIterator<Item = &'a TopKList>, bogus: &str, target: &str) -> usize {
    lists
        .into_iter()
        .filter(|l| match (rank_of(bogus, l), rank_of(target, l)) {
            (Some(b), Some(t)) => b < t,
            (Some(_), None) => true,
            _ => false,
        })
        .count()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpactMetrics {
    pub affected_population: f64,
    pub avg_bogus_rank: Option<f64>,
    /// Piggyback only.
    pub piggyback_dominance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub repetition: usize,
    pub fold: usize,
    pub confusion: Confusion,
    pub metrics: ClassificationMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepetitionImpact {
    pub repetition: usize,
    pub bogus_folksonomies: usize,
    /// Bogus folksonomies that survived filtering.
    pub bogus_kept: usize,
    /// Legitimate folksonomies removed by the classifier.
    pub legit_removed: usize,
    pub affected_population: usize,
    pub avg_bogus_rank: Option<f64>,
    pub piggyback_dominance: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioResult {
    pub ratio: f64,
    pub impact: ImpactMetrics,
    pub repetitions: Vec<RepetitionImpact>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationSummary {
    pub mean: ClassificationMetrics,
    pub folds: Vec<FoldResult>,
}

/// One protocol run: a single attack kind and countermeasure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub attack: AttackKind,
    pub classifier: Countermeasure,
    pub config: RunConfig,
    pub classification: Option<ClassificationSummary>,
    pub ratios: Vec<RatioResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineDelta {
    pub ratio: f64,
    /// `population_without - population_with`.
    pub population_reduction: f64,
    /// `rank_with - rank_without`, when both are defined.
    pub rank_increase: Option<f64>,
}

/// Deltas of `with_cls` against the no-classifier run on the same seeds.
pub fn improvement_vs_baseline(with_cls: &RunReport, without: &RunReport) -> Result<Vec<BaselineDelta>> {
    let mut a = with_cls.config.clone();
    let mut b = without.config.clone();
    a.classifier = Countermeasure::None;
    b.classifier = Countermeasure::None;
    if a != b || with_cls.ratios.len() != without.ratios.len() {
        return Err(Error::Config("baseline comparison needs identical run configurations".into()));
    }
    Ok(with_cls
        .ratios
        .iter()
        .zip(&without.ratios)
        .map(|(w, o)| BaselineDelta {
            ratio: w.ratio,
            population_reduction: o.impact.affected_population - w.impact.affected_population,
            rank_increase: match (w.impact.avg_bogus_rank, o.impact.avg_bogus_rank) {
                (Some(x), Some(y)) => Some(x - y),
                _ => None,
            },
        })
        .collect())
}

/// Everything that depends only on the repetition, not the countermeasure.
struct Repetition {
    index: usize,
    seed: u64,
    corpus: Corpus,
    vocabulary: Vocabulary,
    embeddings: EmbeddingTable,
}

fn prepare(base: &Corpus, cfg: &RunConfig, rep: usize, embeddings: Option<&EmbeddingTable>) -> Result<Repetition> {
    let seed = derive_seed(cfg.seed, stream::REPETITION, rep as u64);
    let corpus = match cfg.sample_users {
        Some(n) => base.sample_users(n, derive_seed(seed, stream::SAMPLE, 0))?,
        None => base.clone(),
    };
    let vocabulary = build_vocabulary(&corpus)?;
    let embeddings = match embeddings {
        Some(e) => e.clone(),
        None => deterministic_embeddings(
            &vocabulary,
            cfg.embedding_dim,
            derive_seed(cfg.seed, stream::EMBEDDING, 0),
        )?,
    };
    Ok(Repetition {
        index: rep,
        seed,
        corpus,
        vocabulary,
        embeddings,
    })
}

/// Stratified fold assignment over `labels`.
fn assign_folds(labels: &[Label], folds: usize, seed: u64) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0; labels.len()];
    for class in [Label::Legitimate, Label::Bogus] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < folds {
            return Err(Error::CorpusTooSmall(format!(
                "{} {class} folksonomies cannot fill {folds} folds",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            out[i] = pos % folds;
        }
    }
    Ok(out)
}

enum Filter {
    None,
    Oracle,
    ConstantLegit,
    Model(Box<TrainedModel>),
}

impl Filter {
    fn predict(&self, fs: &[&Folksonomy]) -> Result<Option<Vec<Label>>> {
        Ok(match self {
            Filter::None => None,
            Filter::Oracle => Some(OracleClassifier.predict_all(fs)?),
            Filter::ConstantLegit => Some(ConstantLegitClassifier.predict_all(fs)?),
            Filter::Model(m) => Some(m.predict_all(fs)?),
        })
    }
}

/// Cross-validates the countermeasure and returns the fold results with the
/// filter used on the attacked corpora (the fold-0 model for trained kinds).
fn cross_validate(rep: &Repetition, cfg: &RunConfig) -> Result<(Vec<FoldResult>, Filter)> {
    let kind = match cfg.classifier {
        Countermeasure::None => return Ok((Vec::new(), Filter::None)),
        Countermeasure::Oracle => None,
        Countermeasure::ConstantLegit => None,
        Countermeasure::Trained(k) => Some(k),
    };
    let spec = cfg.attack_spec(
        cfg.training_ratio,
        derive_seed(rep.seed, stream::TRAIN_BATCH, 0),
        format!("train-{}-", rep.index),
        format!("{}-training", cfg.attack_options.bogus_resource),
    );
    let batch = generate(&rep.corpus, &spec)?;
    let data: Vec<&Folksonomy> = rep.corpus.folksonomies().iter().chain(&batch.folksonomies).collect();
    let truth: Vec<Label> = data.iter().map(|f| f.label).collect();
    let fold_of = assign_folds(&truth, cfg.folds, derive_seed(rep.seed, stream::FOLDS, 0))?;

    let run_fold = |fold: usize| -> Result<(FoldResult, Option<TrainedModel>)> {
        let held: Vec<&Folksonomy> = (0..data.len()).filter(|&i| fold_of[i] == fold).map(|i| data[i]).collect();
        let held_truth: Vec<Label> = held.iter().map(|f| f.label).collect();
        let (predicted, model) = match kind {
            None => {
                let filter = if cfg.classifier == Countermeasure::Oracle {
                    Filter::Oracle
                } else {
                    Filter::ConstantLegit
                };
                (filter.predict(&held)?.expect("filter present"), None)
            }
            Some(k) => {
                let train: Vec<&Folksonomy> =
                    (0..data.len()).filter(|&i| fold_of[i] != fold).map(|i| data[i]).collect();
                let tc = TrainConfig {
                    seed: derive_seed(rep.seed, stream::FOLD_MODEL, fold as u64),
                    ..cfg.train.clone()
                };
                let model = classifiers::train(k, &train, &rep.vocabulary, &tc)?;
                (model.predict_all(&held)?, Some(model))
            }
        };
        let confusion = Confusion::from_labels(&predicted, &held_truth)?;
        log::debug!(
            "repetition {} fold {fold} {}: bogus F {:.4}",
            rep.index,
            cfg.classifier,
            confusion.metrics().bogus.f
        );
        Ok((
            FoldResult {
                repetition: rep.index,
                fold,
                confusion,
                metrics: confusion.metrics(),
            },
            model,
        ))
    };
    let outcomes: Vec<(FoldResult, Option<TrainedModel>)> =
        (0..cfg.folds).into_par_iter().map(run_fold).collect::<Result<_>>()?;
    let mut folds = Vec::with_capacity(outcomes.len());
    let mut filter = match cfg.classifier {
        Countermeasure::Oracle => Filter::Oracle,
        _ => Filter::ConstantLegit,
    };
    for (i, (fold, model)) in outcomes.into_iter().enumerate() {
        if let (0, Some(m)) = (i, model) {
            filter = Filter::Model(Box::new(m));
        }
        folds.push(fold);
    }
    Ok((folds, filter))
}

fn measure(
    rep: &Repetition,
    cfg: &RunConfig,
    batch: &BogusBatch,
    base_predictions: Option<&[Label]>,
    filter: &Filter,
) -> Result<RepetitionImpact> {
    let merged = inject(&rep.corpus, batch)?;
    let kept = match base_predictions {
        None => merged,
        Some(base) => {
            let bogus_refs: Vec<&Folksonomy> = batch.folksonomies.iter().collect();
            let mut predictions = base.to_vec();
            predictions.extend(filter.predict(&bogus_refs)?.expect("filter present"));
            partition(&merged, &predictions).0
        }
    };
    let profiles = Profiles::build(&kept, &rep.embeddings);
    let lists: BTreeMap<String, TopKList> = profiles.recommend(rep.corpus.users(), cfg.k);
    let bogus = batch.bogus_resource.as_str();
    let legit_total = rep.corpus.len();
    let legit_kept = kept.with_label(Label::Legitimate).count();
    Ok(RepetitionImpact {
        repetition: rep.index,
        bogus_folksonomies: batch.len(),
        bogus_kept: kept.with_label(Label::Bogus).count(),
        legit_removed: legit_total - legit_kept,
        affected_population: affected_population(lists.values(), bogus),
        avg_bogus_rank: avg_bogus_rank(lists.values(), bogus),
        piggyback_dominance: batch
            .target_resource
            .as_deref()
            .map(|t| piggyback_dominance(lists.values(), bogus, t)),
    })
}

fn run_repetition(rep: &Repetition, cfg: &RunConfig) -> Result<(Vec<FoldResult>, Vec<RepetitionImpact>)> {
    let (folds, filter) = cross_validate(rep, cfg)?;
    // Legitimate predictions do not depend on the attack batch.
    let base_refs: Vec<&Folksonomy> = rep.corpus.folksonomies().iter().collect();
    let base_predictions = filter.predict(&base_refs)?;
    let impacts = cfg
        .injection_ratios
        .iter()
        .enumerate()
        .map(|(j, &ratio)| {
            let spec = cfg.attack_spec(
                ratio,
                derive_seed(rep.seed, stream::ATTACK, j as u64),
                format!("fake-{}-{j}-", rep.index),
                cfg.attack_options.bogus_resource.clone(),
            );
            let batch = generate(&rep.corpus, &spec)?;
            measure(rep, cfg, &batch, base_predictions.as_deref(), &filter)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((folds, impacts))
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = values.flatten().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Runs the full protocol with deterministic hashed embeddings.
pub fn run_pipeline(base: &Corpus, cfg: &RunConfig) -> Result<RunReport> {
    run_pipeline_with(base, cfg, None)
}

/// As [`run_pipeline`], with an optional pretrained embedding table.
pub fn run_pipeline_with(base: &Corpus, cfg: &RunConfig, embeddings: Option<&EmbeddingTable>) -> Result<RunReport> {
    cfg.validate()?;
    if base.with_label(Label::Legitimate).count() != base.len() {
        return Err(Error::invalid("the base corpus must be all legitimate"));
    }
    let per_rep: Vec<(Vec<FoldResult>, Vec<RepetitionImpact>)> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|r| {
            let rep = prepare(base, cfg, r, embeddings)?;
            run_repetition(&rep, cfg)
        })
        .collect::<Result<_>>()?;
    Ok(assemble(cfg, per_rep))
}

fn assemble(cfg: &RunConfig, per_rep: Vec<(Vec<FoldResult>, Vec<RepetitionImpact>)>) -> RunReport {
    let mut folds = Vec::new();
    let mut by_ratio: Vec<Vec<RepetitionImpact>> = vec![Vec::new(); cfg.injection_ratios.len()];
    for (f, impacts) in per_rep {
        folds.extend(f);
        for (j, imp) in impacts.into_iter().enumerate() {
            by_ratio[j].push(imp);
        }
    }
    let classification = (!folds.is_empty()).then(|| {
        let metrics: Vec<ClassificationMetrics> = folds.iter().map(|f| f.metrics).collect();
        ClassificationSummary {
            mean: ClassificationMetrics::mean(&metrics),
            folds,
        }
    });
    let n = cfg.repetitions as f64;
    let ratios = cfg
        .injection_ratios
        .iter()
        .zip(by_ratio)
        .map(|(&ratio, reps)| RatioResult {
            ratio,
            impact: ImpactMetrics {
                affected_population: reps.iter().map(|r| r.affected_population as f64).sum::<f64>() / n,
                avg_bogus_rank: mean_defined(reps.iter().map(|r| r.avg_bogus_rank)),
                piggyback_dominance: (cfg.attack == AttackKind::Piggyback).then(|| {
                    reps.iter().map(|r| r.piggyback_dominance.unwrap_or(0) as f64).sum::<f64>() / n
                }),
            },
            repetitions: reps,
        })
        .collect();
    RunReport {
        attack: cfg.attack,
        classifier: cfg.classifier,
        config: cfg.clone(),
        classification,
        ratios,
    }
}

/// Impact on the unattacked corpus: the bogus resource has no annotations,
/// so nobody can be affected.
pub fn clean_impact(base: &Corpus, cfg: &RunConfig) -> Result<ImpactMetrics> {
    cfg.validate()?;
    let mut total = 0.0;
    let mut ranks = Vec::new();
    for r in 0..cfg.repetitions {
        let rep = prepare(base, cfg, r, None)?;
        let batch = BogusBatch::empty(cfg.attack, cfg.attack_options.bogus_resource.clone());
        let imp = measure(&rep, cfg, &batch, None, &Filter::None)?;
        total += imp.affected_population as f64;
        ranks.push(imp.avg_bogus_rank);
    }
    Ok(ImpactMetrics {
        affected_population: total / cfg.repetitions as f64,
        avg_bogus_rank: mean_defined(ranks.into_iter()),
        piggyback_dominance: (cfg.attack == AttackKind::Piggyback).then_some(0.0),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonEntry {
    pub attack: AttackKind,
    pub classifier: Countermeasure,
    pub deltas: Vec<BaselineDelta>,
}

/// Every (attack, classifier) run plus the no-classifier baselines and the
/// deltas against them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub runs: Vec<RunReport>,
    pub baseline_deltas: Vec<ComparisonEntry>,
}

impl EvaluationReport {
    pub fn run(&self, attack: AttackKind, classifier: Countermeasure) -> Option<&RunReport> {
        self.runs
            .iter()
            .find(|r| r.attack == attack && r.classifier == classifier)
    }
}

pub fn evaluate(
    base: &Corpus,
    cfg: &RunConfig,
    attacks: &[AttackKind],
    classifiers: &[Countermeasure],
    embeddings: Option<&EmbeddingTable>,
) -> Result<EvaluationReport> {
    let mut runs = Vec::new();
    let mut baseline_deltas = Vec::new();
    for &attack in attacks {
        let mut with_attack = RunConfig {
            attack,
            classifier: Countermeasure::None,
            ..cfg.clone()
        };
        log::info!("{attack}: baseline without classifier");
        let baseline = run_pipeline_with(base, &with_attack, embeddings)?;
        for &c in classifiers.iter().filter(|&&c| c != Countermeasure::None) {
            log::info!("{attack}: classifier {c}");
            with_attack.classifier = c;
            let run = run_pipeline_with(base, &with_attack, embeddings)?;
            baseline_deltas.push(ComparisonEntry {
                attack,
                classifier: c,
                deltas: improvement_vs_baseline(&run, &baseline)?,
            });
            runs.push(run);
        }
        runs.insert(runs.len() - classifiers.iter().filter(|&&c| c != Countermeasure::None).count(), baseline);
    }
    Ok(EvaluationReport { runs, baseline_deltas })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recommender::Recommendation;
    use crate::synth::{desk_corpus, DeskCorpusConfig};

    fn list(user: &str, items: &[&str]) -> TopKList {
        TopKList {
            user: user.into(),
            items: items
                .iter()
                .enumerate()
                .map(|(i, r)| Recommendation {
                    resource: (*r).into(),
                    similarity: 1.0 - i as f64 * 0.01,
                })
                .collect(),
        }
    }

    #[test]
    fn f_score_examples() {
        assert_eq!(f_score(1.0, 1.0), 1.0);
        assert!((f_score(0.5, 1.0) - 0.6667).abs() < 1e-4);
        assert_eq!(f_score(0.0, 0.0), 0.0);
    }

    #[test]
    fn table_weighting() {
        let w = weighted_f(0.9665, 0.8958, 0.7692, 0.2308);
        assert!((w - 0.9501).abs() < 0.001, "{w}");
        let w = weighted_f(0.97888, 0.9319, 0.7692, 0.2308);
        assert!((w - 0.9680).abs() < 0.002, "{w}");
    }

    #[test]
    fn confusion_examples() {
        use Label::*;
        let truth = [Legitimate, Legitimate, Bogus, Bogus];
        let m = confusion_metrics(&truth, &truth).unwrap();
        assert_eq!((m.legit.f, m.bogus.f, m.overall_f), (1.0, 1.0, 1.0));

        let mut truth = vec![Legitimate; 90];
        truth.extend([Bogus; 10]);
        let m = confusion_metrics(&[Legitimate; 100], &truth).unwrap();
        assert_eq!(m.bogus.recall, 0.0);
        assert_eq!(m.bogus.f, 0.0);
        assert!((m.legit.precision - 0.9).abs() < 1e-12);
        assert!(confusion_metrics(&[Legitimate], &truth).is_err());
    }

    #[test]
    fn impact_examples() {
        let lists = [
            list("a", &["x", "bogus", "y"]),
            list("b", &["1", "2", "3", "4", "5", "6", "bogus"]),
            list("c", &["x"]),
            list("d", &["bogus", "target"]),
            list("e", &["target"]),
        ];
        assert_eq!(affected_population(&lists, "bogus"), 3);
        assert!((avg_bogus_rank(&lists, "bogus").unwrap() - 10.0 / 3.0).abs() < 1e-12);
        assert_eq!(piggyback_dominance(&lists, "bogus", "target"), 3);
        assert_eq!(affected_population(&lists, "nothing"), 0);
        assert_eq!(avg_bogus_rank(&lists, "nothing"), None);
        let behind = [list("a", &["target", "bogus"])];
        assert_eq!(piggyback_dominance(&behind, "bogus", "target"), 0);
        let all: Vec<TopKList> = (0..10).map(|i| list(&format!("u{i}"), &["bogus"])).collect();
        assert_eq!(affected_population(&all, "bogus"), 10);
        assert_eq!(avg_bogus_rank(&all, "bogus"), Some(1.0));
    }

    #[test]
    fn countermeasure_names_round_trip() {
        for c in [
            Countermeasure::None,
            Countermeasure::Oracle,
            Countermeasure::ConstantLegit,
            Countermeasure::Trained(ClassifierKind::NaiveBayes),
            Countermeasure::Trained(ClassifierKind::Svm),
            Countermeasure::Trained(ClassifierKind::Neural),
        ] {
            assert_eq!(c.name().parse::<Countermeasure>().unwrap(), c);
            assert_eq!(serde_json::to_string(&c).unwrap(), format!("\"{c}\""));
        }
        assert!("svm2".parse::<Countermeasure>().is_err());
    }

    #[test]
    fn seeds_are_distinct_per_stream() {
        let a = derive_seed(1, stream::ATTACK, 0);
        assert_ne!(a, derive_seed(1, stream::ATTACK, 1));
        assert_ne!(a, derive_seed(1, stream::TRAIN_BATCH, 0));
        assert_ne!(a, derive_seed(2, stream::ATTACK, 0));
    }

    fn small_desk() -> Corpus {
        desk_corpus(&DeskCorpusConfig {
            users: 80,
            ..Default::default()
        })
        .unwrap()
    }

    fn small_cfg(classifier: Countermeasure) -> RunConfig {
        RunConfig {
            injection_ratios: vec![0.01, 0.10],
            repetitions: 2,
            folds: 3,
            classifier,
            seed: 9,
            attack_options: AttackOptions {
                popular_resource_pool: 40,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn oracle_and_constant_bounds() {
        let c = small_desk();
        let none = run_pipeline(&c, &small_cfg(Countermeasure::None)).unwrap();
        let oracle = run_pipeline(&c, &small_cfg(Countermeasure::Oracle)).unwrap();
        let constant = run_pipeline(&c, &small_cfg(Countermeasure::ConstantLegit)).unwrap();
        assert!(none.classification.is_none());
        for (n, (o, k)) in none.ratios.iter().zip(oracle.ratios.iter().zip(&constant.ratios)) {
            assert_eq!(o.impact.affected_population, 0.0);
            assert_eq!(k.impact, n.impact);
        }
        assert!(none.ratios[1].impact.affected_population > 0.0);
        let deltas = improvement_vs_baseline(&oracle, &none).unwrap();
        for (d, n) in deltas.iter().zip(&none.ratios) {
            assert_eq!(d.population_reduction, n.impact.affected_population);
        }
        let same = improvement_vs_baseline(&none, &none).unwrap();
        assert!(same.iter().all(|d| d.population_reduction == 0.0 && d.rank_increase.unwrap_or(0.0) == 0.0));
        let mut other = none.clone();
        other.config.k = 5;
        assert!(improvement_vs_baseline(&other, &none).is_err());
    }

    #[test]
    fn fold_metrics_recompute_from_counts() {
        let c = small_desk();
        let r = run_pipeline(&c, &small_cfg(Countermeasure::Trained(ClassifierKind::NaiveBayes))).unwrap();
        let cls = r.classification.unwrap();
        assert_eq!(cls.folds.len(), 2 * 3);
        for f in &cls.folds {
            assert_eq!(f.confusion.metrics(), f.metrics);
        }
        let mean_bogus_f = cls.folds.iter().map(|f| f.metrics.bogus.f).sum::<f64>() / cls.folds.len() as f64;
        assert!((cls.mean.bogus.f - mean_bogus_f).abs() < 1e-12);
    }

    #[test]
    fn clean_corpus_is_unaffected() {
        let c = small_desk();
        let m = clean_impact(&c, &small_cfg(Countermeasure::None)).unwrap();
        assert_eq!(m.affected_population, 0.0);
        assert_eq!(m.avg_bogus_rank, None);
    }

    #[test]
    fn deterministic_reports() {
        let c = small_desk();
        let cfg = RunConfig {
            attack: AttackKind::Piggyback,
            ..small_cfg(Countermeasure::Trained(ClassifierKind::Svm))
        };
        let a = run_pipeline(&c, &cfg).unwrap();
        let b = run_pipeline(&c, &cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(a.ratios.iter().all(|r| r.impact.piggyback_dominance.is_some()));
    }

    #[test]
    fn evaluate_orders_baseline_first() {
        let c = small_desk();
        let cfg = small_cfg(Countermeasure::None);
        let report = evaluate(
            &c,
            &cfg,
            &[AttackKind::Overload],
            &[Countermeasure::Oracle, Countermeasure::ConstantLegit],
            None,
        )
        .unwrap();
        let order: Vec<Countermeasure> = report.runs.iter().map(|r| r.classifier).collect();
        assert_eq!(order, [Countermeasure::None, Countermeasure::Oracle, Countermeasure::ConstantLegit]);
        assert_eq!(report.baseline_deltas.len(), 2);
        assert!(report.run(AttackKind::Overload, Countermeasure::Oracle).is_some());
    }

    #[test]
    fn rejects_bad_config() {
        let c = small_desk();
        for cfg in [
            RunConfig { injection_ratios: vec![], ..Default::default() },
            RunConfig { injection_ratios: vec![0.0], ..Default::default() },
            RunConfig { folds: 1, ..Default::default() },
            RunConfig { training_ratio: 1.5, ..Default::default() },
        ] {
            assert!(run_pipeline(&c, &cfg).is_err());
        }
    }
}
