//! The TOML run configuration shared by the CLI subcommands.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attacks::{AttackKind, AttackSpec};
use crate::classifiers::TrainConfig;
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::evaluation::{AttackOptions, Countermeasure, RunConfig};
use crate::recommender::{load_embeddings, EmbeddingTable, DEFAULT_DIMENSION, DEFAULT_K};
use crate::synth::{desk_corpus, DeskCorpusConfig};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    /// Dataset file; when absent the `[synth]` corpus is generated.
    pub path: Option<PathBuf>,
    /// Optional pretrained embeddings in the whitespace text format.
    pub embeddings: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSection {
    pub kind: AttackKind,
    /// Injection ratio for `attack-gen`.
    pub ratio: f64,
    pub popular_tag_pool: usize,
    pub popular_resource_pool: usize,
    pub max_size: usize,
    pub bogus_resource: String,
    pub target_resource: Option<String>,
    /// Defaults to `fake-{seed:016x}-`.
    pub fake_user_prefix: Option<String>,
}

impl Default for AttackSection {
    fn default() -> Self {
        let o = AttackOptions::default();
        Self {
            kind: AttackKind::Overload,
            ratio: 0.10,
            popular_tag_pool: o.popular_tag_pool,
            popular_resource_pool: o.popular_resource_pool,
            max_size: o.max_size,
            bogus_resource: o.bogus_resource,
            target_resource: o.target_resource,
            fake_user_prefix: None,
        }
    }
}

impl AttackSection {
    pub fn options(&self) -> AttackOptions {
        AttackOptions {
            popular_tag_pool: self.popular_tag_pool,
            popular_resource_pool: self.popular_resource_pool,
            max_size: self.max_size,
            bogus_resource: self.bogus_resource.clone(),
            target_resource: self.target_resource.clone(),
        }
    }

    pub fn spec(&self, kind: AttackKind, ratio: f64, seed: u64) -> AttackSpec {
        let mut spec = AttackSpec::new(kind, ratio, seed);
        spec.popular_tag_pool = self.popular_tag_pool;
        spec.popular_resource_pool = self.popular_resource_pool;
        spec.max_size = self.max_size;
        spec.bogus_resource = self.bogus_resource.clone();
        spec.target_resource = self.target_resource.clone();
        if let Some(p) = &self.fake_user_prefix {
            spec.fake_user_prefix = p.clone();
        }
        spec
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub attacks: Vec<AttackKind>,
    pub classifiers: Vec<Countermeasure>,
    pub injection_ratios: Vec<f64>,
    pub training_ratio: f64,
    pub folds: usize,
    pub repetitions: usize,
    pub k: usize,
    pub sample_users: Option<usize>,
    pub embedding_dim: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        let r = RunConfig::default();
        Self {
            attacks: vec![AttackKind::Overload, AttackKind::Piggyback],
            classifiers: ["nb", "svm", "nn"].iter().map(|s| s.parse().expect("known")).collect(),
            injection_ratios: r.injection_ratios,
            training_ratio: r.training_ratio,
            folds: r.folds,
            repetitions: r.repetitions,
            k: DEFAULT_K,
            sample_users: None,
            embedding_dim: DEFAULT_DIMENSION,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Used when `--out` is not given.
    pub dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    /// Master seed for attacks, folds and model initialisation.
    pub seed: u64,
    pub dataset: DatasetSection,
    pub synth: DeskCorpusConfig,
    pub attack: AttackSection,
    pub train: TrainConfig,
    pub run: RunSection,
    pub output: OutputSection,
}

impl CliConfig {
    /// Parses and validates; relative dataset paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut cfg: CliConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(dir) = base_dir {
            for p in [&mut cfg.dataset.path, &mut cfg.dataset.embeddings].into_iter().flatten() {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent())
    }

    pub fn validate(&self) -> Result<()> {
        if self.train.seed != 0 {
            return Err(Error::Config("train.seed: model seeds derive from the top-level `seed` key".into()));
        }
        if !(self.attack.ratio > 0.0 && self.attack.ratio <= 1.0) {
            return Err(Error::Config(format!("attack.ratio: {} is outside (0, 1]", self.attack.ratio)));
        }
        if self.run.attacks.is_empty() {
            return Err(Error::Config("run.attacks: at least one attack kind is required".into()));
        }
        self.train.validate().map_err(config_error("train"))?;
        for kind in &self.run.attacks {
            self.run_config(*kind, Countermeasure::None).validate().map_err(config_error("run"))?;
        }
        Ok(())
    }

    /// The evaluation config for one attack kind and countermeasure.
    pub fn run_config(&self, attack: AttackKind, classifier: Countermeasure) -> RunConfig {
        RunConfig {
            attack,
            injection_ratios: self.run.injection_ratios.clone(),
            training_ratio: self.run.training_ratio,
            folds: self.run.folds,
            repetitions: self.run.repetitions,
            k: self.run.k,
            classifier,
            seed: self.seed,
            sample_users: self.run.sample_users,
            embedding_dim: self.run.embedding_dim,
            attack_options: self.attack.options(),
            train: self.train.clone(),
        }
    }

    /// Loads the dataset, or generates the desk corpus when none is configured.
    pub fn corpus(&self) -> Result<Corpus> {
        match &self.dataset.path {
            Some(p) => Corpus::load(p),
            None => desk_corpus(&self.synth),
        }
    }

    pub fn embeddings(&self) -> Result<Option<EmbeddingTable>> {
        self.dataset.embeddings.as_deref().map(load_embeddings).transpose()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}

fn config_error(section: &'static str) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Config(m) => Error::Config(format!("{section}: {m}")),
        other => Error::Config(format!("{section}: {other}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = CliConfig::parse("", None).unwrap();
        assert_eq!(cfg, CliConfig::default());
        assert_eq!(cfg.run.folds, 10);
        assert_eq!(cfg.run.repetitions, 5);
        assert_eq!(cfg.run.k, 15);
        assert_eq!(cfg.run.training_ratio, 0.30);
        assert_eq!(cfg.train.embedding_dim, 25);
        assert_eq!(cfg.train.hidden_units, 200);
    }

    #[test]
    fn unknown_keys_name_the_key() {
        for (text, key) in [
            ("[run]\nfoldz = 3\n", "foldz"),
            ("[train]\nlearning_rte = 0.1\n", "learning_rte"),
            ("sead = 1\n", "sead"),
            ("[atack]\n", "atack"),
        ] {
            match CliConfig::parse(text, None) {
                Err(Error::Config(m)) => assert!(m.contains(key), "{m}"),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for text in [
            "[run]\nfolds = 1\n",
            "[run]\ninjection_ratios = [0.0]\n",
            "[run]\nclassifiers = [\"svn\"]\n",
            "[attack]\nkind = \"focused\"\n",
            "[attack]\nratio = 2.0\n",
            "[train]\nseed = 4\n",
            "[train]\nbatch_size = 0\n",
        ] {
            assert!(matches!(CliConfig::parse(text, None), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = CliConfig::default();
        cfg.seed = 42;
        cfg.dataset.path = Some("corpus.tsv".into());
        cfg.attack.target_resource = Some("res0001".into());
        cfg.run.sample_users = Some(100);
        let again = CliConfig::parse(&cfg.to_toml(), None).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let cfg = CliConfig::parse("[dataset]\npath = \"data/x.tsv\"\n", Some(Path::new("/tmp/run"))).unwrap();
        assert_eq!(cfg.dataset.path.unwrap(), Path::new("/tmp/run/data/x.tsv"));
    }
}
