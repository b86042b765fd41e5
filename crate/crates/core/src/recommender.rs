//! Embedding-averaged user and resource profiles with cosine top-k ranking.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::hash::Hasher;
use std::io::BufRead;
use std::path::Path;

use fnv::FnvHasher;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Folksonomy, Vocabulary};
use crate::error::{Error, Result};

pub const DEFAULT_DIMENSION: usize = 50;
pub const DEFAULT_K: usize = 15;
const ZERO_NORM: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            vectors: HashMap::new(),
        }
    }

    pub fn insert(&mut self, tag: impl Into<String>, v: Vec<f64>) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("embedding components must be finite"));
        }
        self.vectors.insert(tag.into(), v);
        Ok(())
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

    pub fn get(&self, tag: &str) -> Option<&[f64]> {
        self.vectors.get(tag).map(Vec::as_slice)
    }

    /// Multiplies every vector by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            vectors: self
                .vectors
                .iter()
                .map(|(t, v)| (t.clone(), v.iter().map(|x| x * factor).collect()))
                .collect(),
        }
    }
}

/// Parses `tag v1 ... vd` lines; blank lines are skipped.
pub fn parse_embeddings<R: BufRead>(reader: R) -> Result<EmbeddingTable> {
    let mut table: Option<EmbeddingTable> = None;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let mut fields = line.split_whitespace();
        let Some(tag) = fields.next() else { continue };
        let values = fields
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::Parse {
                line: lineno,
                message: format!("non-numeric component: {e}"),
            })?;
        if values.is_empty() {
            return Err(Error::Parse {
                line: lineno,
                message: format!("tag {tag} has no components"),
            });
        }
        let t = table.get_or_insert_with(|| EmbeddingTable::new(values.len()));
        if values.len() != t.dim {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected {} components, found {}", t.dim, values.len()),
            });
        }
        t.insert(tag, values).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
    }
    table.ok_or(Error::EmptyInput)
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(std::io::BufReader::new(file))
}

fn tag_seed(tag: &str, seed: u64) -> u64 {
    let mut h = FnvHasher::default();
    h.write(tag.as_bytes());
    h.finish() ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// One vector per vocabulary tag with components uniform in `[-1, 1]`, drawn
/// from ChaCha8 seeded by FNV-1a of the tag mixed with `seed`.
pub fn deterministic_embeddings(v: &Vocabulary, d: usize, seed: u64) -> Result<EmbeddingTable> {
    if d == 0 {
        return Err(Error::invalid("embedding dimension must be at least 1"));
    }
    let mut table = EmbeddingTable::new(d);
    for tag in v.tags() {
        let mut rng = ChaCha8Rng::seed_from_u64(tag_seed(tag, seed));
        let vec = (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect();
        table.insert(tag.clone(), vec)?;
    }
    Ok(table)
}

/// Mean of the in-table tag vectors, or `None` when no tag is in the table.
pub fn folksonomy_vector(f: &Folksonomy, e: &EmbeddingTable) -> Option<Vec<f64>> {
    let mut sum = vec![0.0; e.dim];
    let mut n = 0usize;
    for v in f.tags.iter().filter_map(|t| e.get(t)) {
        sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
        n += 1;
    }
    (n > 0).then(|| {
        sum.iter_mut().for_each(|s| *s /= n as f64);
        sum
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileVector {
    pub owner: String,
    pub vector: Vec<f64>,
    /// Folksonomies that contributed a vector.
    pub support: usize,
}

fn profile<'a>(
    owner: &str,
    fs: impl IntoIterator<Item = &'a Folksonomy>,
    e: &EmbeddingTable,
) -> Option<ProfileVector> {
    let mut sum = vec![0.0; e.dim];
    let mut support = 0usize;
    for v in fs.into_iter().filter_map(|f| folksonomy_vector(f, e)) {
        sum.iter_mut().zip(&v).for_each(|(s, x)| *s += x);
        support += 1;
    }
    (support > 0).then(|| {
        sum.iter_mut().for_each(|s| *s /= support as f64);
        ProfileVector {
            owner: owner.to_owned(),
            vector: sum,
            support,
        }
    })
}

pub fn user_vector<'a>(
    user: &str,
    fs: impl IntoIterator<Item = &'a Folksonomy>,
    e: &EmbeddingTable,
) -> Option<ProfileVector> {
    profile(user, fs, e)
}

pub fn resource_vector<'a>(
    resource: &str,
    fs: impl IntoIterator<Item = &'a Folksonomy>,
    e: &EmbeddingTable,
) -> Option<ProfileVector> {
    profile(resource, fs, e)
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn cosine_unchecked(a: &[f64], na: f64, b: &[f64], nb: f64) -> f64 {
    if na < ZERO_NORM || nb < ZERO_NORM {
        return 0.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// `a·b / (‖a‖‖b‖)`, or 0 when either norm is below 1e-12.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(cosine_unchecked(a, norm(a), b, norm(b)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub resource: String,
    pub similarity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopKList {
    pub user: String,
    pub items: Vec<Recommendation>,
}

impl TopKList {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

fn by_rank(a: &(f64, &str), b: &(f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

fn select_top(user: &str, mut scored: Vec<(f64, &str)>, k: usize) -> TopKList {
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, by_rank);
        scored.truncate(k);
    }
    scored.sort_unstable_by(by_rank);
    TopKList {
        user: user.to_owned(),
        items: scored
            .into_iter()
            .map(|(similarity, r)| Recommendation {
                resource: r.to_owned(),
                similarity,
            })
            .collect(),
    }
}

/// The `k` most similar resources, ties broken by resource id.
pub fn top_k(u: &ProfileVector, rs: &[ProfileVector], k: usize) -> Result<TopKList> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let nu = norm(&u.vector);
    let scored = rs
        .iter()
        .map(|r| {
            if r.vector.len() != u.vector.len() {
                return Err(Error::DimensionMismatch {
                    expected: u.vector.len(),
                    actual: r.vector.len(),
                });
            }
            Ok((cosine_unchecked(&u.vector, nu, &r.vector, norm(&r.vector)), r.owner.as_str()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(select_top(&u.owner, scored, k))
}

/// 1-based position of `resource`, if listed.
pub fn rank_of(resource: &str, list: &TopKList) -> Option<usize> {
    list.items.iter().position(|r| r.resource == resource).map(|i| i + 1)
}

/// User and resource profiles of a corpus. Owners without any in-table tag
/// get no profile.
#[derive(Clone, Debug)]
pub struct Profiles {
    pub users: BTreeMap<String, ProfileVector>,
    pub resources: Vec<ProfileVector>,
    resource_norms: Vec<f64>,
}

impl Profiles {
    pub fn build(c: &Corpus, e: &EmbeddingTable) -> Self {
        let users = c
            .users()
            .filter_map(|u| user_vector(u, c.user_folksonomies(u), e).map(|p| (u.to_owned(), p)))
            .collect();
        let resources: Vec<ProfileVector> = c
            .resources()
            .filter_map(|r| resource_vector(r, c.resource_folksonomies(r), e))
            .collect();
        let resource_norms = resources.iter().map(|r| norm(&r.vector)).collect();
        Self {
            users,
            resources,
            resource_norms,
        }
    }

    pub fn has_resource(&self, resource: &str) -> bool {
        self.resources.iter().any(|r| r.owner == resource)
    }

    /// Same result as [`top_k`] with cached resource norms.
    pub fn top_k_for(&self, user: &str, k: usize) -> Option<TopKList> {
        let u = self.users.get(user)?;
        let nu = norm(&u.vector);
        let scored = self
            .resources
            .iter()
            .zip(&self.resource_norms)
            .map(|(r, &nr)| (cosine_unchecked(&u.vector, nu, &r.vector, nr), r.owner.as_str()))
            .collect();
        Some(select_top(user, scored, k.max(1)))
    }

    /// Top-k lists for the given users that have a profile, keyed by user.
    pub fn recommend<'a>(&self, users: impl IntoIterator<Item = &'a str>, k: usize) -> BTreeMap<String, TopKList> {
        users
            .into_iter()
            .filter_map(|u| self.top_k_for(u, k).map(|l| (u.to_owned(), l)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;
    use proptest::prelude::*;
    use rand::Rng;

    fn table(rows: &[(&str, &[f64])]) -> EmbeddingTable {
        let mut t = EmbeddingTable::new(rows[0].1.len());
        for (tag, v) in rows {
            t.insert(*tag, v.to_vec()).unwrap();
        }
        t
    }

    fn folk(user: &str, res: &str, tags: &[&str]) -> Folksonomy {
        Folksonomy::new(user, res, tags.iter().copied(), Label::Legitimate).unwrap()
    }

    fn pv(owner: &str, v: &[f64]) -> ProfileVector {
        ProfileVector {
            owner: owner.into(),
            vector: v.to_vec(),
            support: 1,
        }
    }

    #[test]
    fn parse_format() {
        let t = parse_embeddings("car 0.1 0.2\ndog 0.3 0.4\n".as_bytes()).unwrap();
        assert_eq!(t.dim(), 2);
        assert_eq!(t.get("dog"), Some(&[0.3, 0.4][..]));
        assert!(matches!(
            parse_embeddings("car 0.1 0.2\ndog 0.3\n".as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(parse_embeddings("car 0.1 x\n".as_bytes()), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_embeddings("".as_bytes()), Err(Error::EmptyInput)));
        assert!(parse_embeddings("car 1 NaN\n".as_bytes()).is_err());
    }

    #[test]
    fn deterministic_table() {
        let v = Vocabulary::from_ranked((0..100).map(|i| format!("tag{i}")).collect());
        let a = deterministic_embeddings(&v, 50, 1).unwrap();
        let b = deterministic_embeddings(&v, 50, 1).unwrap();
        let c = deterministic_embeddings(&v, 50, 2).unwrap();
        assert_eq!(a, b);
        assert!(v.tags().iter().any(|t| a.get(t) != c.get(t)));
        for t in v.tags() {
            assert!(a.get(t).unwrap().iter().all(|x| (-1.0..=1.0).contains(x)));
        }
        assert!(deterministic_embeddings(&v, 0, 1).is_err());
        // Components are a prefix of one per-tag stream, whatever d is.
        let first = a.get("tag0").unwrap()[0];
        assert_eq!(first, deterministic_embeddings(&v, 3, 1).unwrap().get("tag0").unwrap()[0]);
    }

    #[test]
    fn folksonomy_means() {
        let e = table(&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0])]);
        assert_eq!(folksonomy_vector(&folk("u", "r", &["a", "b"]), &e), Some(vec![0.5, 0.5]));
        assert_eq!(folksonomy_vector(&folk("u", "r", &["a", "zzz"]), &e), Some(vec![1.0, 0.0]));
        assert_eq!(folksonomy_vector(&folk("u", "r", &["x", "y"]), &e), None);
    }

    #[test]
    fn profile_means() {
        let e = table(&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0])]);
        let fs = [folk("u", "r1", &["a"]), folk("u", "r2", &["b"]), folk("u", "r3", &["zzz"])];
        let p = user_vector("u", &fs[..1], &e).unwrap();
        assert_eq!((p.vector.as_slice(), p.support), (&[1.0, 0.0][..], 1));
        let p = user_vector("u", &fs, &e).unwrap();
        assert_eq!((p.vector.as_slice(), p.support), (&[0.5, 0.5][..], 2));
        assert!(resource_vector("r3", &fs[2..], &e).is_none());
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn cosine_examples() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[1.0, 0.0], &[1.0, 1.0]).unwrap() - 0.70711).abs() < 1e-5);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert!(cosine(&[1.0], &[1.0, 0.0]).is_err());
        assert!((cosine(&[3.0, -4.0], &[3.0, -4.0]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn top_k_examples() {
        let u = pv("u", &[1.0, 0.0]);
        let rs = [pv("r1", &[0.0, 1.0]), pv("r2", &[1.0, 0.0]), pv("r3", &[1.0, 1.0])];
        let l = top_k(&u, &rs, 15).unwrap();
        assert_eq!(l.len(), 3);
        assert_eq!(rank_of("r2", &l), Some(1));
        assert!((l.items[0].similarity - 1.0).abs() < 1e-12);
        assert_eq!(rank_of("r1", &l), Some(3));
        assert_eq!(rank_of("nope", &l), None);
        assert!(top_k(&u, &rs, 0).is_err());
    }

    #[test]
    fn ties_break_by_resource_id() {
        let u = pv("u", &[1.0, 0.0]);
        let rs = [pv("b", &[2.0, 0.0]), pv("a", &[1.0, 0.0]), pv("c", &[0.0, 1.0])];
        let l = top_k(&u, &rs, 2).unwrap();
        let ids: Vec<&str> = l.items.iter().map(|r| r.resource.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
    }

    #[test]
    fn cold_start_owners_are_excluded() {
        let e = table(&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0])]);
        let c = Corpus::new(vec![
            folk("u1", "r1", &["a"]),
            folk("u1", "r2", &["b"]),
            folk("u2", "r3", &["unknown"]),
        ])
        .unwrap();
        let p = Profiles::build(&c, &e);
        assert!(!p.users.contains_key("u2"));
        assert!(!p.has_resource("r3"));
        let lists = p.recommend(c.users(), 15);
        assert_eq!(lists.len(), 1);
        assert!(lists["u1"].items.iter().all(|r| r.resource != "r3"));
    }

    fn arb_vectors(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 4), n)
    }

    proptest! {
        #[test]
        fn matches_full_sort(u in prop::collection::vec(-1.0f64..1.0, 4), vs in arb_vectors(1..100), k in 1usize..20) {
            let rs: Vec<ProfileVector> = vs.iter().enumerate().map(|(i, v)| pv(&format!("r{i:03}"), v)).collect();
            let l = top_k(&pv("u", &u), &rs, k).unwrap();
            let mut all: Vec<(f64, String)> = rs.iter().map(|r| (cosine(&u, &r.vector).unwrap(), r.owner.clone())).collect();
            all.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            all.truncate(k);
            let got: Vec<(f64, String)> = l.items.iter().map(|r| (r.similarity, r.resource.clone())).collect();
            prop_assert_eq!(got, all);
            for (i, r) in l.items.iter().enumerate() {
                prop_assert_eq!(rank_of(&r.resource, &l), Some(i + 1));
            }
        }

        #[test]
        fn permutation_invariant(u in prop::collection::vec(-1.0f64..1.0, 4), vs in arb_vectors(1..40), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let rs: Vec<ProfileVector> = vs.iter().enumerate().map(|(i, v)| pv(&format!("r{i}"), v)).collect();
            let mut shuffled = rs.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(top_k(&pv("u", &u), &rs, 15).unwrap(), top_k(&pv("u", &u), &shuffled, 15).unwrap());
        }

        #[test]
        fn scale_invariant_ranking(factor in 0.01f64..100.0, seed in 0u64..1000) {
            let v = Vocabulary::from_ranked((0..30).map(|i| format!("t{i}")).collect());
            let e = deterministic_embeddings(&v, 8, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let fs: Vec<Folksonomy> = (0..40).map(|i| {
                let tags: Vec<String> = (0..3).map(|_| format!("t{}", rng.random_range(0..30))).collect();
                Folksonomy::new(format!("u{}", i % 6), format!("r{}", i / 2), tags, Label::Legitimate).unwrap()
            }).collect();
            let c = Corpus::new(fs).unwrap();
            let a = Profiles::build(&c, &e).recommend(c.users(), 5);
            let b = Profiles::build(&c, &e.scaled(factor)).recommend(c.users(), 5);
            for (u, l) in &a {
                let x: Vec<&str> = l.items.iter().map(|r| r.resource.as_str()).collect();
                let y: Vec<&str> = b[u].items.iter().map(|r| r.resource.as_str()).collect();
                prop_assert_eq!(x, y);
            }
        }

        #[test]
        fn cosine_symmetric_and_bounded(a in prop::collection::vec(-10.0f64..10.0, 5), b in prop::collection::vec(-10.0f64..10.0, 5)) {
            let ab = cosine(&a, &b).unwrap();
            prop_assert!((ab - cosine(&b, &a).unwrap()).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&ab));
        }
    }
}
