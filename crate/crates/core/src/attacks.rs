//! Synthetic Overload and Piggyback profile-injection batches.
//!
//! Both attacks annotate one fresh bogus resource through a set of fake
//! users, one folksonomy per fake user. Folksonomy sizes follow the host
//! corpus' legitimate size distribution. Overload draws tags uniformly from
//! the popular-tag pool. Piggyback replicates the target resource's tags
//! first and only spills into the wider pool for larger folksonomies.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    folksonomy_size_distribution, Corpus, Folksonomy, Label, Vocabulary, MAX_TRACKED_SIZE,
};
use crate::error::{Error, Result};

pub const DEFAULT_TAG_POOL: usize = 75;
pub const DEFAULT_RESOURCE_POOL: usize = 100;
pub const DEFAULT_MAX_SIZE: usize = 50;
/// Additive smoothing applied to both distributions before computing KL.
pub const KL_SMOOTHING: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Overload,
    Piggyback,
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttackKind::Overload => "overload",
            AttackKind::Piggyback => "piggyback",
        })
    }
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "overload" => Ok(AttackKind::Overload),
            "piggyback" => Ok(AttackKind::Piggyback),
            other => Err(Error::invalid(format!("unknown attack kind {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// Bogus folksonomies as a fraction of the legitimate folksonomy count.
    pub injection_ratio: f64,
    pub popular_tag_pool: usize,
    pub popular_resource_pool: usize,
    pub max_size: usize,
    pub bogus_resource: String,
    /// Piggyback only; defaults to the most-annotated resource.
    pub target_resource: Option<String>,
    pub seed: u64,
    /// Fake user identifiers are `{prefix}{n}`.
    pub fake_user_prefix: String,
}

impl AttackSpec {
    pub fn new(kind: AttackKind, injection_ratio: f64, seed: u64) -> Self {
        Self {
            kind,
            injection_ratio,
            popular_tag_pool: DEFAULT_TAG_POOL,
            popular_resource_pool: DEFAULT_RESOURCE_POOL,
            max_size: DEFAULT_MAX_SIZE,
            bogus_resource: "bogus-resource".to_owned(),
            target_resource: None,
            seed,
            fake_user_prefix: format!("fake-{seed:016x}-"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.injection_ratio > 0.0 && self.injection_ratio <= 1.0) {
            return Err(Error::invalid(format!(
                "injection ratio {} outside (0, 1]",
                self.injection_ratio
            )));
        }
        if self.max_size == 0 || self.popular_tag_pool == 0 || self.popular_resource_pool == 0 {
            return Err(Error::invalid("max_size and pool sizes must be at least 1"));
        }
        if self.bogus_resource.is_empty() || self.fake_user_prefix.is_empty() {
            return Err(Error::invalid("bogus_resource and fake_user_prefix must be non-empty"));
        }
        Ok(())
    }
}

/// Output of one attack generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BogusBatch {
    pub kind: AttackKind,
    pub bogus_resource: String,
    /// Resolved Piggyback target; `None` for Overload.
    pub target_resource: Option<String>,
    /// Tags the batch may draw from, in priority order.
    pub pool: Vec<String>,
    pub folksonomies: Vec<Folksonomy>,
}

impl BogusBatch {
    pub fn len(&self) -> usize {
        self.folksonomies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folksonomies.is_empty()
    }

    pub fn empty(kind: AttackKind, bogus_resource: impl Into<String>) -> Self {
        Self {
            kind,
            bogus_resource: bogus_resource.into(),
            target_resource: None,
            pool: Vec::new(),
            folksonomies: Vec::new(),
        }
    }
}

/// `round(ratio * legitimate)`, never less than one.
pub fn batch_count(injection_ratio: f64, legitimate: usize) -> usize {
    ((injection_ratio * legitimate as f64).round() as usize).max(1)
}

pub fn generate(c: &Corpus, spec: &AttackSpec) -> Result<BogusBatch> {
    match spec.kind {
        AttackKind::Overload => generate_overload(c, spec),
        AttackKind::Piggyback => generate_piggyback(c, spec),
    }
}

/// The Overload tag pool: the `popular_tag_pool` most frequent legitimate tags
/// among those annotating the `popular_resource_pool` most-annotated resources,
/// backfilled by global frequency when that set is too small.
pub fn overload_pool(legit: &Corpus, spec: &AttackSpec) -> Result<Vec<String>> {
    if legit.distinct_tags() < spec.popular_tag_pool {
        return Err(Error::CorpusTooSmall(format!(
            "{} distinct tags, tag pool needs {}",
            legit.distinct_tags(),
            spec.popular_tag_pool
        )));
    }
    let top_resources = legit.top_annotated_resources(spec.popular_resource_pool)?;
    let on_top: BTreeSet<&str> = top_resources
        .iter()
        .flat_map(|r| legit.resource_folksonomies(r))
        .flat_map(|f| f.tags.iter().map(String::as_str))
        .collect();
    let ranked = legit.ranked_tags();
    let mut pool: Vec<String> = ranked
        .iter()
        .filter(|(t, _)| on_top.contains(t))
        .take(spec.popular_tag_pool)
        .map(|(t, _)| (*t).to_owned())
        .collect();
    if pool.len() < spec.popular_tag_pool {
        let chosen: BTreeSet<String> = pool.iter().cloned().collect();
        let missing = spec.popular_tag_pool - pool.len();
        pool.extend(
            ranked
                .iter()
                .filter(|(t, _)| !chosen.contains(*t))
                .take(missing)
                .map(|(t, _)| (*t).to_owned()),
        );
    }
    Ok(pool)
}

/// Piggyback pools: the target's own tags (most used on the target first)
/// and the remaining tags of the most-annotated resources by global frequency.
pub fn piggyback_pools(
    legit: &Corpus,
    spec: &AttackSpec,
) -> Result<(String, Vec<String>, Vec<String>)> {
    let top_resources = legit.top_annotated_resources(spec.popular_resource_pool)?;
    let target = match &spec.target_resource {
        Some(t) if legit.has_resource(t) => t.clone(),
        Some(t) => return Err(Error::UnknownResource(t.clone())),
        None => top_resources
            .first()
            .cloned()
            .ok_or_else(|| Error::CorpusTooSmall("no resources".into()))?,
    };
    let global = legit.tag_frequencies();
    let mut on_target: BTreeMap<&str, usize> = BTreeMap::new();
    for f in legit.resource_folksonomies(&target) {
        for t in &f.tags {
            *on_target.entry(t).or_default() += 1;
        }
    }
    let mut target_tags: Vec<(&str, usize)> = on_target.into_iter().collect();
    target_tags.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| global[b.0].cmp(&global[a.0])));
    let target_tags: Vec<String> = target_tags.into_iter().map(|(t, _)| t.to_owned()).collect();

    let taken: BTreeSet<&str> = target_tags.iter().map(String::as_str).collect();
    let wider: BTreeSet<&str> = top_resources
        .iter()
        .flat_map(|r| legit.resource_folksonomies(r))
        .flat_map(|f| f.tags.iter().map(String::as_str))
        .filter(|t| !taken.contains(t))
        .collect();
    let mut rest: Vec<&str> = wider.into_iter().collect();
    rest.sort_by(|a, b| global[*b].cmp(&global[*a]));
    let rest = rest.into_iter().map(str::to_owned).collect();
    Ok((target, target_tags, rest))
}

struct Generator<'a> {
    spec: &'a AttackSpec,
    host: &'a Corpus,
    rng: ChaCha8Rng,
    sizes: WeightedIndex<f64>,
    next_user: usize,
}

impl<'a> Generator<'a> {
    fn new(host: &'a Corpus, legit: &Corpus, spec: &'a AttackSpec) -> Result<Self> {
        spec.validate()?;
        if host.has_resource(&spec.bogus_resource) {
            return Err(Error::invalid(format!(
                "bogus resource {} already exists in the corpus",
                spec.bogus_resource
            )));
        }
        let dist = folksonomy_size_distribution(legit)?;
        let sizes = WeightedIndex::new(dist.as_vector().iter().copied())
            .map_err(|e| Error::invalid(format!("size distribution: {e}")))?;
        Ok(Self {
            spec,
            host,
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
            sizes,
            next_user: 0,
        })
    }

    fn sample_size(&mut self, pool_len: usize) -> usize {
        let drawn = self.sizes.sample(&mut self.rng) + 1;
        drawn.clamp(1, self.spec.max_size.min(pool_len).min(MAX_TRACKED_SIZE))
    }

    fn fake_user(&mut self) -> String {
        loop {
            let id = format!("{}{}", self.spec.fake_user_prefix, self.next_user);
            self.next_user += 1;
            if !self.host.has_user(&id) {
                return id;
            }
        }
    }

    fn draw<'p>(&mut self, from: &'p [String], n: usize, out: &mut Vec<&'p str>) {
        for i in index::sample(&mut self.rng, from.len(), n) {
            out.push(&from[i]);
        }
    }

    fn emit(&mut self, tags: Vec<&str>) -> Folksonomy {
        let user = self.fake_user();
        Folksonomy::new(user, self.spec.bogus_resource.as_str(), tags, Label::Bogus)
            .expect("pool tags are valid")
    }
}

pub fn generate_overload(c: &Corpus, spec: &AttackSpec) -> Result<BogusBatch> {
    if spec.kind != AttackKind::Overload {
        return Err(Error::invalid("generate_overload needs an Overload spec"));
    }
    let legit = c.legitimate();
    let pool = overload_pool(&legit, spec)?;
    let mut gen = Generator::new(c, &legit, spec)?;
    let count = batch_count(spec.injection_ratio, legit.len());
    let mut folksonomies = Vec::with_capacity(count);
    for _ in 0..count {
        let size = gen.sample_size(pool.len());
        let mut tags = Vec::with_capacity(size);
        gen.draw(&pool, size, &mut tags);
        folksonomies.push(gen.emit(tags));
    }
    Ok(BogusBatch {
        kind: AttackKind::Overload,
        bogus_resource: spec.bogus_resource.clone(),
        target_resource: None,
        pool,
        folksonomies,
    })
}

pub fn generate_piggyback(c: &Corpus, spec: &AttackSpec) -> Result<BogusBatch> {
    if spec.kind != AttackKind::Piggyback {
        return Err(Error::invalid("generate_piggyback needs a Piggyback spec"));
    }
    let legit = c.legitimate();
    let (target, target_tags, rest) = piggyback_pools(&legit, spec)?;
    let pool_len = target_tags.len() + rest.len();
    if pool_len == 0 {
        return Err(Error::CorpusTooSmall("empty piggyback tag pool".into()));
    }
    let mut gen = Generator::new(c, &legit, spec)?;
    let count = batch_count(spec.injection_ratio, legit.len());
    let mut folksonomies = Vec::with_capacity(count);
    for _ in 0..count {
        let size = gen.sample_size(pool_len);
        let mut tags = Vec::with_capacity(size);
        if size <= target_tags.len() {
            gen.draw(&target_tags, size, &mut tags);
        } else {
            let primary: Vec<usize> = index::sample(&mut gen.rng, target_tags.len(), target_tags.len()).into_vec();
            tags.extend(primary.into_iter().map(|i| target_tags[i].as_str()));
            gen.draw(&rest, size - target_tags.len(), &mut tags);
        }
        folksonomies.push(gen.emit(tags));
    }
    let mut pool = target_tags;
    pool.extend(rest);
    Ok(BogusBatch {
        kind: AttackKind::Piggyback,
        bogus_resource: spec.bogus_resource.clone(),
        target_resource: Some(target),
        pool,
        folksonomies,
    })
}

/// Merges a bogus batch into a corpus: `S = L ∪ B`, labels preserved.
pub fn inject(c: &Corpus, b: &BogusBatch) -> Result<Corpus> {
    for f in &b.folksonomies {
        if c.has_user(&f.user) {
            return Err(Error::UserCollision(f.user.clone()));
        }
    }
    let mut all = c.folksonomies().to_vec();
    all.extend(b.folksonomies.iter().cloned());
    Corpus::new(all)
}

/// Share of tag assignments per vocabulary entry; entry `i` is the tag with
/// vocabulary index `i + 1`. Out-of-vocabulary tags are ignored.
pub fn tag_class_distribution<'a>(
    fs: impl IntoIterator<Item = &'a Folksonomy>,
    v: &Vocabulary,
) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; v.len()];
    let mut total = 0usize;
    for f in fs {
        for t in &f.tags {
            if let Some(i) = v.index_of(t) {
                counts[i as usize - 1] += 1;
                total += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(counts.into_iter().map(|c| c as f64 / total as f64).collect())
}

/// Tag-assignment shares grouped into log2-spaced vocabulary rank bins:
/// bin `b` holds ranks `2^b ..= 2^(b+1) - 1`.
pub fn tag_rank_histogram<'a>(
    fs: impl IntoIterator<Item = &'a Folksonomy>,
    v: &Vocabulary,
) -> Result<Vec<f64>> {
    let per_tag = tag_class_distribution(fs, v)?;
    let bins = (usize::BITS - v.len().leading_zeros()) as usize;
    let mut out = vec![0.0; bins];
    for (i, p) in per_tag.into_iter().enumerate() {
        let rank = i + 1;
        out[(usize::BITS - 1 - rank.leading_zeros()) as usize] += p;
    }
    Ok(out)
}

/// `D_KL(p || q) = Σ p ln(p / q)` in nats, after adding [`KL_SMOOTHING`] to
/// every bin of both inputs and renormalizing.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            actual: q.len(),
        });
    }
    if p.is_empty() {
        return Err(Error::EmptyInput);
    }
    for (name, v) in [("p", p), ("q", q)] {
        if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::invalid(format!("{name} has negative or non-finite entries")));
        }
        let sum: f64 = v.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("{name} sums to {sum}, not 1")));
        }
    }
    let norm_p = 1.0 + KL_SMOOTHING * p.len() as f64;
    let norm_q = 1.0 + KL_SMOOTHING * q.len() as f64;
    let d: f64 = p
        .iter()
        .zip(q)
        .map(|(&pi, &qi)| {
            let ps = (pi + KL_SMOOTHING) / norm_p;
            let qs = (qi + KL_SMOOTHING) / norm_q;
            ps * (ps / qs).ln()
        })
        .sum();
    Ok(d.max(0.0))
}
