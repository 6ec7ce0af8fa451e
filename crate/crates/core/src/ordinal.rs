//! Rank labels, binary label extension and rank decoding.
//!
//! Rank indices are 1-based everywhere in the public API, so a rank index
//! `q` satisfies `1 <= q <= K`. Binary task `k` is likewise numbered
//! `1..=K-1` in documentation, but stored at array slot `k - 1`. The
//! conversion between the two happens only in [`RankIndex::zero_based`],
//! [`extend_label`] and [`decode_rank`].

use serde::{Deserialize, Serialize};

use crate::error::{CoralError, Result};

/// The ordered label set `r_1 < r_2 < ... < r_K`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankSpec {
    labels: Vec<String>,
}

impl RankSpec {
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() < 2 {
            return Err(CoralError::Domain(format!(
                "need at least 2 ranks, got {}",
                labels.len()
            )));
        }
        for (i, a) in labels.iter().enumerate() {
            if labels[..i].contains(a) {
                return Err(CoralError::Domain(format!("duplicate rank label {a:?}")));
            }
        }
        Ok(Self { labels })
    }

    /// Ranks labelled `"1"` through `"K"`.
    pub fn numbered(num_ranks: usize) -> Result<Self> {
        Self::new((1..=num_ranks).map(|q| q.to_string()))
    }

    pub fn num_ranks(&self) -> usize {
        self.labels.len()
    }

    pub fn num_tasks(&self) -> usize {
        self.labels.len() - 1
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, q: RankIndex) -> &str {
        &self.labels[q.zero_based()]
    }

    pub fn index_of(&self, label: &str) -> Option<RankIndex> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| RankIndex(i + 1))
    }

    pub fn rank(&self, q: usize) -> Result<RankIndex> {
        RankIndex::new(q, self.num_ranks())
    }
}

/// A 1-based rank index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RankIndex(usize);

impl RankIndex {
    pub fn new(q: usize, num_ranks: usize) -> Result<Self> {
        if q == 0 || q > num_ranks {
            return Err(CoralError::Domain(format!(
                "rank index {q} outside 1..={num_ranks}"
            )));
        }
        Ok(Self(q))
    }

    /// Builds an index without a range check; callers own the invariant.
    pub(crate) fn from_raw(q: usize) -> Self {
        debug_assert!(q >= 1);
        Self(q)
    }

    pub fn get(self) -> usize {
        self.0
    }

    pub fn zero_based(self) -> usize {
        self.0 - 1
    }
}

impl std::fmt::Display for RankIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// The `K-1` binary labels `y^(k) = 1{y > r_k}` of a single example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtendedTarget(Vec<u8>);

impl ExtendedTarget {
    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_f64(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().map(|&b| f64::from(b))
    }
}

/// Per-task hard decisions `f_k(x)`; not necessarily rank-monotone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryDecisions(Vec<u8>);

impl BinaryDecisions {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if let Some(b) = bits.iter().find(|&&b| b > 1) {
            return Err(CoralError::Domain(format!("decision bit {b} is not 0 or 1")));
        }
        Ok(Self(bits))
    }

    pub fn from_bools(bits: impl IntoIterator<Item = bool>) -> Self {
        Self(bits.into_iter().map(u8::from).collect())
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `f_1 >= f_2 >= ... >= f_{K-1}`.
    pub fn is_rank_monotone(&self) -> bool {
        self.0.windows(2).all(|w| w[0] >= w[1])
    }
}

/// Extends rank `q` into its `K-1` binary labels.
pub fn extend_label(q: RankIndex, spec: &RankSpec) -> Result<ExtendedTarget> {
    let k = spec.num_ranks();
    if q.get() > k {
        return Err(CoralError::Domain(format!(
            "rank index {q} outside 1..={k}"
        )));
    }
    // slot j holds task j+1, which fires iff q > j+1
    Ok(ExtendedTarget((0..k - 1).map(|j| u8::from(q.get() > j + 1)).collect()))
}

/// `q = 1 + sum_k f_k`. Defined for inconsistent vectors too.
pub fn decode_rank(f: &BinaryDecisions) -> RankIndex {
    RankIndex::from_raw(1 + f.0.iter().map(|&b| usize::from(b)).sum::<usize>())
}

/// `f_k = 1{p_k > 0.5}`; exactly 0.5 maps to 0.
pub fn threshold_probs(p: &[f64]) -> Result<BinaryDecisions> {
    if let Some(v) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(CoralError::Domain(format!("probability {v} outside [0, 1]")));
    }
    Ok(BinaryDecisions::from_bools(p.iter().map(|&v| v > 0.5)))
}

/// Number of adjacent violations `f_k = 0, f_{k+1} = 1`.
pub fn count_inconsistencies(f: &BinaryDecisions) -> usize {
    f.0.windows(2).filter(|w| w[0] < w[1]).count()
}

/// Number of pairs `i < j` with `f_i < f_j`, a coarser inconsistency statistic.
pub fn count_inverted_pairs(f: &BinaryDecisions) -> usize {
    let mut zeros_seen = 0;
    let mut inverted = 0;
    for &b in &f.0 {
        if b == 0 {
            zeros_seen += 1;
        } else {
            inverted += zeros_seen;
        }
    }
    inverted
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dec(bits: &[u8]) -> BinaryDecisions {
        BinaryDecisions::new(bits.to_vec()).unwrap()
    }

    #[test]
    fn extend_label_examples() {
        let spec = RankSpec::numbered(5).unwrap();
        let ext = |q| extend_label(spec.rank(q).unwrap(), &spec).unwrap();
        assert_eq!(ext(3).bits(), &[1, 1, 0, 0]);
        assert_eq!(ext(1).bits(), &[0, 0, 0, 0]);
        assert_eq!(ext(5).bits(), &[1, 1, 1, 1]);
    }

    #[test]
    fn out_of_range_rank_is_rejected() {
        let spec = RankSpec::numbered(5).unwrap();
        assert!(spec.rank(0).is_err());
        assert!(spec.rank(6).is_err());
        let small = RankSpec::numbered(3).unwrap();
        assert!(extend_label(spec.rank(5).unwrap(), &small).is_err());
    }

    #[test]
    fn rank_spec_invariants() {
        assert!(RankSpec::numbered(1).is_err());
        assert!(RankSpec::new(["bad", "okay", "bad"]).is_err());
        let s = RankSpec::new(["bad", "okay", "good"]).unwrap();
        assert_eq!(s.num_tasks(), 2);
        assert_eq!(s.index_of("good").unwrap().get(), 3);
        assert_eq!(s.label(s.rank(2).unwrap()), "okay");
    }

    #[test]
    fn decode_rank_examples() {
        assert_eq!(decode_rank(&dec(&[1, 1, 0, 0])).get(), 3);
        assert_eq!(decode_rank(&dec(&[0, 0, 0, 0])).get(), 1);
        assert_eq!(decode_rank(&dec(&[1, 0, 1, 0])).get(), 3);
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(threshold_probs(&[0.9, 0.6, 0.2, 0.1]).unwrap().bits(), &[1, 1, 0, 0]);
        assert_eq!(threshold_probs(&[0.5, 0.5]).unwrap().bits(), &[0, 0]);
        assert_eq!(threshold_probs(&[0.9, 0.4, 0.6]).unwrap().bits(), &[1, 0, 1]);
        assert!(threshold_probs(&[0.2, 1.5]).is_err());
        assert!(threshold_probs(&[f64::NAN]).is_err());
    }

    #[test]
    fn inconsistency_examples() {
        assert_eq!(count_inconsistencies(&dec(&[1, 1, 0, 0])), 0);
        assert_eq!(count_inconsistencies(&dec(&[1, 0, 1, 0])), 1);
        assert_eq!(count_inconsistencies(&dec(&[0, 1, 0, 1])), 2);
        assert_eq!(count_inverted_pairs(&dec(&[0, 1, 0, 1])), 3);
        assert_eq!(count_inverted_pairs(&dec(&[1, 1, 0])), 0);
    }

    #[test]
    fn malformed_decisions_are_rejected() {
        assert!(BinaryDecisions::new(vec![0, 2]).is_err());
    }

    #[test]
    fn round_trip_all_small_k() {
        for k in 2..=64 {
            let spec = RankSpec::numbered(k).unwrap();
            for q in 1..=k {
                let ext = extend_label(spec.rank(q).unwrap(), &spec).unwrap();
                assert!(ext.bits().windows(2).all(|w| w[0] >= w[1]));
                assert_eq!(ext.bits().iter().map(|&b| b as usize).sum::<usize>() + 1, q);
                let f = BinaryDecisions::new(ext.bits().to_vec()).unwrap();
                assert_eq!(decode_rank(&f).get(), q);
            }
        }
    }

    fn brute_inverted(bits: &[u8]) -> usize {
        let mut n = 0;
        for i in 0..bits.len() {
            for j in i + 1..bits.len() {
                if bits[i] < bits[j] {
                    n += 1;
                }
            }
        }
        n
    }

    proptest! {
        #[test]
        fn zero_inconsistencies_iff_monotone(bits in prop::collection::vec(0u8..2, 1..40)) {
            let f = dec(&bits);
            let monotone = bits.windows(2).all(|w| w[0] >= w[1]);
            prop_assert_eq!(count_inconsistencies(&f) == 0, monotone);
            prop_assert_eq!(f.is_rank_monotone(), monotone);
            prop_assert_eq!(count_inverted_pairs(&f), brute_inverted(&bits));
        }

        #[test]
        fn decode_depends_only_on_sum(bits in prop::collection::vec(0u8..2, 1..40)) {
            let mut sorted = bits.clone();
            sorted.sort_unstable_by(|a, b| b.cmp(a));
            prop_assert_eq!(decode_rank(&dec(&bits)), decode_rank(&dec(&sorted)));
        }

        #[test]
        fn monotone_probs_give_monotone_decisions(mut p in prop::collection::vec(0.0f64..=1.0, 1..30)) {
            p.sort_by(|a, b| b.partial_cmp(a).unwrap());
            prop_assert!(threshold_probs(&p).unwrap().is_rank_monotone());
        }
    }
}
