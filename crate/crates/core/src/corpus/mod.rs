//! Folksonomy data model and the line-oriented dataset format.
//!
//! A dataset line is `user<TAB>resource<TAB>tag1,tag2,...`. Lines starting
//! with `#` are comments and blank lines are skipped. Repeated
//! `(user, resource)` lines merge into one folksonomy.

mod vocabulary;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use vocabulary::{build_vocabulary, encode_sequence, Vocabulary};

/// Largest folksonomy size tracked by [`SizeDistribution`]; larger sizes fall
/// into this bucket.
pub const MAX_TRACKED_SIZE: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Legitimate,
    Bogus,
    Unlabeled,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Label::Legitimate => "legitimate",
            Label::Bogus => "bogus",
            Label::Unlabeled => "unlabeled",
        };
        f.write_str(s)
    }
}

/// One user's tag set on one resource.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Folksonomy {
    pub user: String,
    pub resource: String,
    pub tags: Vec<String>,
    pub label: Label,
}

fn check_field(kind: &str, value: &str) -> Result<()> {
    if value.is_empty() {
        return Err(Error::invalid(format!("empty {kind}")));
    }
    if value.trim() != value || value.contains(['\t', '\n', '\r']) {
        return Err(Error::invalid(format!(
            "{kind} {value:?} has surrounding whitespace or control characters"
        )));
    }
    Ok(())
}

impl Folksonomy {
    /// Builds a folksonomy, collapsing duplicate tags to their first occurrence.
    pub fn new<I, S>(
        user: impl Into<String>,
        resource: impl Into<String>,
        tags: I,
        label: Label,
    ) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let user = user.into();
        let resource = resource.into();
        check_field("user", &user)?;
        if user.starts_with('#') {
            return Err(Error::invalid(format!("user {user:?} starts with '#'")));
        }
        check_field("resource", &resource)?;
        let mut out = Vec::new();
        for tag in tags {
            let tag = tag.into();
            check_field("tag", &tag)?;
            if tag.contains(',') {
                return Err(Error::invalid(format!("tag {tag:?} contains ','")));
            }
            if !out.contains(&tag) {
                out.push(tag);
            }
        }
        if out.is_empty() {
            return Err(Error::invalid(format!(
                "folksonomy of {user} on {resource} has no tags"
            )));
        }
        Ok(Self {
            user,
            resource,
            tags: out,
            label,
        })
    }

    pub fn size(&self) -> usize {
        self.tags.len()
    }

    pub fn contains(&self, tag: &str) -> bool {
        self.tags.iter().any(|t| t == tag)
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = label;
        self
    }
}

/// An annotation dataset with its derived user, resource and tag indices.
///
/// Indices are always rebuilt from the folksonomy list, so a `Corpus` is
/// immutable once constructed.
#[derive(Clone, Debug, Default)]
pub struct Corpus {
    folksonomies: Vec<Folksonomy>,
    users: BTreeMap<String, Vec<usize>>,
    resources: BTreeMap<String, Vec<usize>>,
    tag_freq: BTreeMap<String, usize>,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.folksonomies == other.folksonomies
    }
}

impl Corpus {
    pub fn new(folksonomies: Vec<Folksonomy>) -> Result<Self> {
        let mut users: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut resources: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut tag_freq: BTreeMap<String, usize> = BTreeMap::new();
        let mut seen = HashMap::with_capacity(folksonomies.len());
        for (i, f) in folksonomies.iter().enumerate() {
            if f.tags.is_empty() {
                return Err(Error::invalid(format!(
                    "folksonomy of {} on {} has no tags",
                    f.user, f.resource
                )));
            }
            if seen.insert((f.user.as_str(), f.resource.as_str()), i).is_some() {
                return Err(Error::DuplicateFolksonomy {
                    user: f.user.clone(),
                    resource: f.resource.clone(),
                });
            }
            users.entry(f.user.clone()).or_default().push(i);
            resources.entry(f.resource.clone()).or_default().push(i);
            for t in &f.tags {
                *tag_freq.entry(t.clone()).or_default() += 1;
            }
        }
        Ok(Self {
            folksonomies,
            users,
            resources,
            tag_freq,
        })
    }

    pub fn folksonomies(&self) -> &[Folksonomy] {
        &self.folksonomies
    }

    pub fn into_folksonomies(self) -> Vec<Folksonomy> {
        self.folksonomies
    }

    pub fn len(&self) -> usize {
        self.folksonomies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folksonomies.is_empty()
    }

    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    pub fn resource_count(&self) -> usize {
        self.resources.len()
    }

    pub fn users(&self) -> impl Iterator<Item = &str> {
        self.users.keys().map(String::as_str)
    }

    pub fn resources(&self) -> impl Iterator<Item = &str> {
        self.resources.keys().map(String::as_str)
    }

    pub fn has_user(&self, user: &str) -> bool {
        self.users.contains_key(user)
    }

    pub fn has_resource(&self, resource: &str) -> bool {
        self.resources.contains_key(resource)
    }

    pub fn user_folksonomies<'a>(&'a self, user: &str) -> impl Iterator<Item = &'a Folksonomy> {
        self.users
            .get(user)
            .into_iter()
            .flatten()
            .map(|&i| &self.folksonomies[i])
    }

    pub fn resource_folksonomies<'a>(
        &'a self,
        resource: &str,
    ) -> impl Iterator<Item = &'a Folksonomy> {
        self.resources
            .get(resource)
            .into_iter()
            .flatten()
            .map(|&i| &self.folksonomies[i])
    }

    /// Number of folksonomies containing each tag.
    pub fn tag_frequencies(&self) -> &BTreeMap<String, usize> {
        &self.tag_freq
    }

    pub fn distinct_tags(&self) -> usize {
        self.tag_freq.len()
    }

    pub fn with_label(&self, label: Label) -> impl Iterator<Item = &Folksonomy> {
        self.folksonomies.iter().filter(move |f| f.label == label)
    }

    /// Sub-corpus of the folksonomies matching `keep`, in their original order.
    pub fn filter(&self, mut keep: impl FnMut(&Folksonomy) -> bool) -> Corpus {
        let kept = self.folksonomies.iter().filter(|f| keep(f)).cloned().collect();
        Corpus::new(kept).expect("subset of a valid corpus is valid")
    }

    pub fn legitimate(&self) -> Corpus {
        self.filter(|f| f.label == Label::Legitimate)
    }

    /// Tags ordered by descending frequency, ties broken lexicographically.
    pub fn ranked_tags(&self) -> Vec<(&str, usize)> {
        let mut ranked: Vec<(&str, usize)> =
            self.tag_freq.iter().map(|(t, &c)| (t.as_str(), c)).collect();
        // BTreeMap order is already lexicographic; the sort is stable.
        ranked.sort_by_key(|r| std::cmp::Reverse(r.1));
        ranked
    }

    pub fn top_popular_tags(&self, n: usize) -> Result<Vec<String>> {
        if n > self.distinct_tags() {
            return Err(Error::CorpusTooSmall(format!(
                "requested {n} popular tags, corpus has {}",
                self.distinct_tags()
            )));
        }
        Ok(self
            .ranked_tags()
            .into_iter()
            .take(n)
            .map(|(t, _)| t.to_owned())
            .collect())
    }

    /// Total tag-assignment count per resource.
    pub fn resource_assignment_counts(&self) -> BTreeMap<&str, usize> {
        self.resources
            .iter()
            .map(|(r, idx)| {
                let total = idx.iter().map(|&i| self.folksonomies[i].size()).sum();
                (r.as_str(), total)
            })
            .collect()
    }

    /// Resources ordered by descending assignment count, ties broken lexicographically.
    pub fn ranked_resources(&self) -> Vec<(&str, usize)> {
        let mut ranked: Vec<(&str, usize)> = self.resource_assignment_counts().into_iter().collect();
        ranked.sort_by_key(|r| std::cmp::Reverse(r.1));
        ranked
    }

    pub fn top_annotated_resources(&self, n: usize) -> Result<Vec<String>> {
        if n > self.resource_count() {
            return Err(Error::CorpusTooSmall(format!(
                "requested {n} resources, corpus has {}",
                self.resource_count()
            )));
        }
        Ok(self
            .ranked_resources()
            .into_iter()
            .take(n)
            .map(|(r, _)| r.to_owned())
            .collect())
    }

    /// Uniform sample of `n` users without replacement; keeps exactly their folksonomies.
    pub fn sample_users(&self, n: usize, seed: u64) -> Result<Corpus> {
        if n > self.user_count() {
            return Err(Error::CorpusTooSmall(format!(
                "requested {n} users, corpus has {}",
                self.user_count()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let users: Vec<&String> = self.users.keys().collect();
        let chosen: BTreeSet<&str> = index::sample(&mut rng, users.len(), n)
            .into_iter()
            .map(|i| users[i].as_str())
            .collect();
        Ok(self.filter(|f| chosen.contains(f.user.as_str())))
    }

    pub fn stats(&self) -> CorpusStats {
        let mut size_histogram = BTreeMap::new();
        for f in &self.folksonomies {
            *size_histogram.entry(f.size()).or_default() += 1;
        }
        CorpusStats {
            folksonomies: self.len(),
            users: self.user_count(),
            unique_tags: self.distinct_tags(),
            size_histogram,
        }
    }

    pub fn write_dataset<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for f in &self.folksonomies {
            writeln!(out, "{}\t{}\t{}", f.user, f.resource, f.tags.join(","))?;
        }
        Ok(())
    }

    pub fn to_dataset_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_dataset(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("fields are UTF-8")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Corpus> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        parse_dataset(std::io::BufReader::new(file))
    }
}

impl FromStr for Corpus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_dataset(s.as_bytes())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub folksonomies: usize,
    pub users: usize,
    pub unique_tags: usize,
    pub size_histogram: BTreeMap<usize, usize>,
}

/// Parses the tab-separated dataset format. Every folksonomy is labelled
/// [`Label::Legitimate`].
pub fn parse_dataset<R: BufRead>(reader: R) -> Result<Corpus> {
    let mut folksonomies: Vec<Folksonomy> = Vec::new();
    let mut slot: HashMap<(String, String), usize> = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let user = fields[0].trim();
        let resource = fields[1].trim();
        let tags: Vec<&str> = fields[2]
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .collect();
        if tags.is_empty() {
            return Err(Error::Parse {
                line: lineno,
                message: "empty tag list".into(),
            });
        }
        let parsed = Folksonomy::new(user, resource, tags, Label::Legitimate).map_err(|e| {
            Error::Parse {
                line: lineno,
                message: e.to_string(),
            }
        })?;
        match slot.get(&(parsed.user.clone(), parsed.resource.clone())) {
            Some(&at) => {
                let existing = &mut folksonomies[at];
                for t in parsed.tags {
                    if !existing.tags.contains(&t) {
                        existing.tags.push(t);
                    }
                }
            }
            None => {
                slot.insert((parsed.user.clone(), parsed.resource.clone()), folksonomies.len());
                folksonomies.push(parsed);
            }
        }
    }
    if folksonomies.is_empty() {
        return Err(Error::EmptyInput);
    }
    Corpus::new(folksonomies)
}

/// Empirical distribution of folksonomy sizes over `1..=MAX_TRACKED_SIZE`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeDistribution {
    // probs[s] = P(size = s); probs[0] is always 0.
    probs: Vec<f64>,
}

impl SizeDistribution {
    pub fn from_folksonomies<'a>(fs: impl IntoIterator<Item = &'a Folksonomy>) -> Result<Self> {
        let mut counts = vec![0usize; MAX_TRACKED_SIZE + 1];
        let mut total = 0usize;
        for f in fs {
            counts[f.size().clamp(1, MAX_TRACKED_SIZE)] += 1;
            total += 1;
        }
        if total == 0 {
            return Err(Error::EmptyInput);
        }
        let probs = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Ok(Self { probs })
    }

    pub fn probability(&self, size: usize) -> f64 {
        self.probs.get(size).copied().unwrap_or(0.0)
    }

    /// Probabilities for sizes `1..=MAX_TRACKED_SIZE`.
    pub fn as_vector(&self) -> &[f64] {
        &self.probs[1..]
    }

    /// `(size, probability)` pairs with non-zero mass.
    pub fn support(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(s, &p)| (s, p))
    }
}

/// Size histogram of the legitimate folksonomies in `c`.
pub fn folksonomy_size_distribution(c: &Corpus) -> Result<SizeDistribution> {
    SizeDistribution::from_folksonomies(c.with_label(Label::Legitimate))
}
