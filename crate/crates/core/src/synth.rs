//! Seeded synthetic folksonomy corpora with Zipf-like tag and resource
//! popularity, for desk-scale experiments without the original dataset.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Geometric;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Folksonomy, Label};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeskCorpusConfig {
    pub users: usize,
    pub resources: usize,
    pub tags: usize,
    /// Mean folksonomies per user.
    pub mean_posts: f64,
    pub tag_exponent: f64,
    pub resource_exponent: f64,
    /// Characteristic tags attached to each resource.
    pub topic_tags: usize,
    /// Probability that a tag slot is filled from the resource's topic tags.
    pub topic_share: f64,
    /// Probability that a tag slot is filled from the user's own favourites.
    pub personal_share: f64,
    /// Geometric decay of folksonomy sizes; mean size is `1 / (1 - decay)`.
    pub size_decay: f64,
    pub max_size: usize,
    pub seed: u64,
}

impl Default for DeskCorpusConfig {
    fn default() -> Self {
        Self {
            users: 300,
            resources: 1500,
            tags: 5000,
            mean_posts: 10.0,
            tag_exponent: 1.0,
            resource_exponent: 0.9,
            topic_tags: 6,
            topic_share: 0.6,
            personal_share: 0.1,
            size_decay: 0.7,
            max_size: 30,
            seed: 7,
        }
    }
}

fn zipf_weights(n: usize, exponent: f64) -> Vec<f64> {
    (1..=n).map(|r| (r as f64).powf(-exponent)).collect()
}

fn distinct_draws<R: Rng>(rng: &mut R, dist: &WeightedIndex<f64>, n: usize, limit: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n && attempts < n * 50 {
        let i = dist.sample(rng);
        if !out.contains(&i) {
            out.push(i);
        }
        attempts += 1;
    }
    out.truncate(limit);
    out
}

pub fn desk_corpus(cfg: &DeskCorpusConfig) -> Result<Corpus> {
    if cfg.users == 0 || cfg.resources == 0 || cfg.tags == 0 || cfg.max_size == 0 {
        return Err(Error::invalid("desk corpus dimensions must be positive"));
    }
    if !(cfg.mean_posts >= 1.0) || !(0.0..1.0).contains(&cfg.size_decay) {
        return Err(Error::invalid("mean_posts must be >= 1 and size_decay in [0, 1)"));
    }
    if cfg.topic_share < 0.0 || cfg.personal_share < 0.0 || cfg.topic_share + cfg.personal_share > 1.0 {
        return Err(Error::invalid("topic_share + personal_share must lie in [0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let width = cfg.tags.to_string().len();
    let tag_names: Vec<String> = (1..=cfg.tags).map(|i| format!("tag{i:0width$}")).collect();
    let rwidth = cfg.resources.to_string().len();
    let resource_names: Vec<String> = (1..=cfg.resources).map(|i| format!("res{i:0rwidth$}")).collect();

    let tag_dist = WeightedIndex::new(zipf_weights(cfg.tags, cfg.tag_exponent)).expect("positive weights");
    let resource_weights = zipf_weights(cfg.resources, cfg.resource_exponent);
    let topics: Vec<Vec<usize>> = (0..cfg.resources)
        .map(|_| distinct_draws(&mut rng, &tag_dist, cfg.topic_tags, cfg.topic_tags))
        .collect();

    let extra_posts = Geometric::new(1.0 / cfg.mean_posts).expect("valid probability");
    let extra_tags = Geometric::new(1.0 - cfg.size_decay).expect("valid probability");
    let resource_ids: Vec<usize> = (0..cfg.resources).collect();

    let mut fs = Vec::new();
    for u in 0..cfg.users {
        let user = format!("user{u:04}");
        let favourites = distinct_draws(&mut rng, &tag_dist, 3, 3);
        let posts = (1 + extra_posts.sample(&mut rng) as usize).min(cfg.resources);
        let chosen: Vec<usize> = resource_ids
            .choose_multiple_weighted(&mut rng, posts, |&r| resource_weights[r])
            .expect("positive weights")
            .copied()
            .collect();
        for r in chosen {
            let size = (1 + extra_tags.sample(&mut rng) as usize).min(cfg.max_size);
            let mut tags: Vec<usize> = Vec::with_capacity(size);
            let mut attempts = 0;
            while tags.len() < size && attempts < size * 50 {
                attempts += 1;
                let roll: f64 = rng.random();
                let pick = if roll < cfg.topic_share {
                    *topics[r].choose(&mut rng).expect("topics are non-empty")
                } else if roll < cfg.topic_share + cfg.personal_share {
                    *favourites.choose(&mut rng).expect("favourites are non-empty")
                } else {
                    tag_dist.sample(&mut rng)
                };
                if !tags.contains(&pick) {
                    tags.push(pick);
                }
            }
            fs.push(Folksonomy::new(
                user.as_str(),
                resource_names[r].as_str(),
                tags.into_iter().map(|t| tag_names[t].as_str()),
                Label::Legitimate,
            )?);
        }
    }
    Corpus::new(fs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_desk_scale() {
        let c = desk_corpus(&DeskCorpusConfig::default()).unwrap();
        assert_eq!(c.user_count(), 300);
        assert!((2000..4500).contains(&c.len()), "{}", c.len());
        assert!(c.distinct_tags() > 200);
        assert!(c.resource_count() > 100);
        let mean = c.folksonomies().iter().map(|f| f.size()).sum::<usize>() as f64 / c.len() as f64;
        assert!((2.0..5.0).contains(&mean), "{mean}");
    }

    #[test]
    fn seeded() {
        let cfg = DeskCorpusConfig { users: 30, ..Default::default() };
        assert_eq!(desk_corpus(&cfg).unwrap(), desk_corpus(&cfg).unwrap());
        let other = DeskCorpusConfig { seed: 8, ..cfg.clone() };
        assert_ne!(desk_corpus(&cfg).unwrap(), desk_corpus(&other).unwrap());
    }

    #[test]
    fn rejects_bad_config() {
        assert!(desk_corpus(&DeskCorpusConfig { users: 0, ..Default::default() }).is_err());
        assert!(desk_corpus(&DeskCorpusConfig { topic_share: 0.95, ..Default::default() }).is_err());
    }
}
