use std::collections::HashMap;
use std::hash::Hasher;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use super::{Corpus, Folksonomy};
use crate::error::{Error, Result};

/// Frequency-ranked tag index. Index 0 is reserved for padding, so the most
/// frequent tag gets index 1.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tags: Vec<String>,
    index: HashMap<String, u32>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tags: Vec<String>) -> Self {
        Self::from_ranked(tags)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tags
    }
}

impl Vocabulary {
    /// Builds a vocabulary from tags already in rank order.
    pub fn from_ranked(tags: Vec<String>) -> Self {
        let index = tags
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32 + 1))
            .collect();
        Self { tags, index }
    }

    /// Number of tags, not counting the padding slot.
    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn index_of(&self, tag: &str) -> Option<u32> {
        self.index.get(tag).copied()
    }

    pub fn tag(&self, index: u32) -> Option<&str> {
        if index == 0 {
            return None;
        }
        self.tags.get(index as usize - 1).map(String::as_str)
    }

    /// Tags in index order (index 1 first).
    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    /// FNV-1a hash over the ranked tag list; two vocabularies with the same
    /// fingerprint assign the same index to every tag.
    pub fn fingerprint(&self) -> u64 {
        let mut h = FnvHasher::default();
        for t in &self.tags {
            h.write(t.as_bytes());
            h.write_u8(b'\n');
        }
        h.finish()
    }

    pub fn fingerprint_hex(&self) -> String {
        format!("{:016x}", self.fingerprint())
    }
}

pub fn build_vocabulary(c: &Corpus) -> Result<Vocabulary> {
    if c.is_empty() {
        return Err(Error::EmptyInput);
    }
    let tags = c.ranked_tags().into_iter().map(|(t, _)| t.to_owned()).collect();
    Ok(Vocabulary::from_ranked(tags))
}

/// Tag indices in folksonomy order, out-of-vocabulary tags dropped, truncated
/// to `len` and right-padded with zeros.
pub fn encode_sequence(f: &Folksonomy, v: &Vocabulary, len: usize) -> Vec<u32> {
    let mut out: Vec<u32> = f
        .tags
        .iter()
        .filter_map(|t| v.index_of(t))
        .take(len)
        .collect();
    out.resize(len, 0);
    out
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::example_tables;
    use super::super::Label;
    use super::*;
    use proptest::prelude::*;

    fn corpus_with(freqs: &[(&str, usize)]) -> Corpus {
        let mut fs = Vec::new();
        for (tag, n) in freqs {
            for i in 0..*n {
                fs.push(Folksonomy::new(format!("u{i}"), format!("r-{tag}"), [*tag], Label::Legitimate).unwrap());
            }
        }
        Corpus::new(fs).unwrap()
    }

    #[test]
    fn ranks_by_frequency_then_lexicographic() {
        let c = corpus_with(&[("web", 3), ("car", 5), ("dog", 3)]);
        let v = build_vocabulary(&c).unwrap();
        assert_eq!(v.index_of("car"), Some(1));
        assert_eq!(v.index_of("dog"), Some(2));
        assert_eq!(v.index_of("web"), Some(3));
        assert_eq!(v.tag(0), None);
        assert_eq!(v.tag(2), Some("dog"));
    }

    #[test]
    fn single_tag_vocabulary() {
        let c = corpus_with(&[("x", 1)]);
        let v = build_vocabulary(&c).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v.index_of("x"), Some(1));
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(build_vocabulary(&Corpus::default()).is_err());
    }

    #[test]
    fn encode_pads_truncates_and_drops_oov() {
        let c = corpus_with(&[("a", 4), ("b", 3), ("c", 2), ("d", 1)]);
        let v = build_vocabulary(&c).unwrap();
        let f = Folksonomy::new("u", "r", ["c", "a"], Label::Legitimate).unwrap();
        assert_eq!(encode_sequence(&f, &v, 5), vec![3, 1, 0, 0, 0]);

        let six = Folksonomy::new("u", "r", ["a", "b", "c", "d", "zz", "a2"], Label::Legitimate).unwrap();
        let v6 = Vocabulary::from_ranked(six.tags.clone());
        assert_eq!(encode_sequence(&six, &v6, 5), vec![1, 2, 3, 4, 5]);

        let oov = Folksonomy::new("u", "r", ["q", "w"], Label::Legitimate).unwrap();
        assert_eq!(encode_sequence(&oov, &v, 4), vec![0; 4]);
    }

    #[test]
    fn fingerprint_tracks_ranking() {
        let v = build_vocabulary(&example_tables()).unwrap();
        let same = Vocabulary::from_ranked(v.tags().to_vec());
        assert_eq!(v.fingerprint(), same.fingerprint());
        let mut swapped = v.tags().to_vec();
        swapped.swap(0, 1);
        assert_ne!(v.fingerprint(), Vocabulary::from_ranked(swapped).fingerprint());
    }

    #[test]
    fn serde_round_trip() {
        let v = build_vocabulary(&example_tables()).unwrap();
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(v, back);
    }

    proptest! {
        #[test]
        fn bijection_and_decode_prefix(
            tags in prop::collection::btree_set("[a-e]{1,2}", 1..20),
            len in 1usize..8,
        ) {
            let tags: Vec<String> = tags.into_iter().collect();
            let fs: Vec<Folksonomy> = tags
                .iter()
                .enumerate()
                .map(|(i, t)| Folksonomy::new(format!("u{i}"), "r", [t.clone()], Label::Legitimate).unwrap())
                .collect();
            let c = Corpus::new(fs).unwrap();
            let v = build_vocabulary(&c).unwrap();
            prop_assert_eq!(v.len(), tags.len());
            let mut seen = std::collections::BTreeSet::new();
            for t in &tags {
                let i = v.index_of(t).unwrap();
                prop_assert!(i >= 1 && i as usize <= v.len());
                prop_assert!(seen.insert(i));
                prop_assert_eq!(v.tag(i), Some(t.as_str()));
            }

            let f = Folksonomy::new("q", "r", tags.iter().rev().cloned(), Label::Legitimate).unwrap();
            let seq = encode_sequence(&f, &v, len);
            let decoded: Vec<&str> = seq.iter().filter(|&&i| i != 0).map(|&i| v.tag(i).unwrap()).collect();
            let expected: Vec<&str> = f.tags.iter().take(len).map(String::as_str).collect();
            prop_assert_eq!(decoded, expected);
        }
    }
}
