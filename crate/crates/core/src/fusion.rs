//! Combining two or more ranked lists: composite half-and-half merging and
//! Reciprocal Rank Fusion.
//!
//! Both depend only on list order. Composite output is scored `1/rank`
//! since the two inputs' scores are not comparable.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::{Error, RankedList, Result};

pub const DEFAULT_RRF_KAPPA: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PadSource {
    #[default]
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum FusionMethod {
    Composite {
        #[serde(default)]
        pad: PadSource,
    },
    Rrf {
        #[serde(default = "default_kappa")]
        kappa: f64,
    },
}

fn default_kappa() -> f64 {
    DEFAULT_RRF_KAPPA
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionSpec {
    pub method: FusionMethod,
    pub target_k: usize,
}

impl FusionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.target_k == 0 {
            return Err(Error::Config("fusion target_k must be positive".into()));
        }
        if let FusionMethod::Rrf { kappa } = self.method {
            if !(kappa > 0.0 && kappa.is_finite()) {
                return Err(Error::Config(format!("rrf kappa must be positive, got {kappa}")));
            }
        }
        Ok(())
    }

    pub fn apply(&self, lists: &[RankedList]) -> Result<RankedList> {
        self.validate()?;
        match self.method {
            FusionMethod::Composite { pad } => match lists {
                [a, b] => composite_merge(a, b, self.target_k, pad),
                _ => Err(Error::Config(format!(
                    "composite fusion takes exactly two lists, got {}",
                    lists.len()
                ))),
            },
            FusionMethod::Rrf { kappa } => rrf_fuse(lists, kappa, self.target_k),
        }
    }
}

fn same_query(lists: &[&RankedList]) -> Result<()> {
    if let Some(first) = lists.first() {
        if let Some(other) = lists.iter().find(|l| l.query_id != first.query_id) {
            return Err(Error::QueryMismatch(first.query_id.clone(), other.query_id.clone()));
        }
    }
    Ok(())
}

/// Top `ceil(k/2)` of `a` followed by top `floor(k/2)` of `b`, first
/// occurrence wins on overlap, then padded up to `k` with the next unused
/// docs of the pad source (falling back to the other list).
pub fn composite_merge(a: &RankedList, b: &RankedList, target_k: usize, pad: PadSource) -> Result<RankedList> {
    same_query(&[a, b])?;
    let half_a = target_k.div_ceil(2);
    let half_b = target_k / 2;

    let mut used: HashSet<&str> = HashSet::new();
    let mut out: Vec<&str> = Vec::with_capacity(target_k);
    let halves = a.doc_ids().take(half_a).chain(b.doc_ids().take(half_b));
    for id in halves {
        if used.insert(id) {
            out.push(id);
        }
    }
    let (primary, fallback) = match pad {
        PadSource::First => (a, b),
        PadSource::Second => (b, a),
    };
    for id in primary.doc_ids().chain(fallback.doc_ids()) {
        if out.len() >= target_k {
            break;
        }
        if used.insert(id) {
            out.push(id);
        }
    }
    Ok(RankedList::from_ordered(
        a.query_id.clone(),
        "composite",
        out.into_iter()
            .enumerate()
            .map(|(i, id)| (id.to_string(), 1.0 / (i + 1) as f64)),
    ))
}

/// `rrf(d) = sum_r 1 / (kappa + rank_r(d))` over every list containing `d`.
/// Full input lists are fused and the result truncated to `target_k`.
pub fn rrf_fuse(lists: &[RankedList], kappa: f64, target_k: usize) -> Result<RankedList> {
    if lists.is_empty() {
        return Err(Error::Invalid("rrf needs at least one list".into()));
    }
    if kappa.is_nan() || kappa <= 0.0 {
        return Err(Error::Config(format!("rrf kappa must be positive, got {kappa}")));
    }
    same_query(&lists.iter().collect::<Vec<_>>())?;
    // insertion-ordered accumulation keeps the float sums independent of hashing
    let mut slot: HashMap<&str, usize> = HashMap::new();
    let mut acc: Vec<(String, f64)> = Vec::new();
    for list in lists {
        for e in &list.entries {
            let contribution = 1.0 / (kappa + e.rank as f64);
            match slot.get(e.doc_id.as_str()) {
                Some(&i) => acc[i].1 += contribution,
                None => {
                    slot.insert(&e.doc_id, acc.len());
                    acc.push((e.doc_id.clone(), contribution));
                }
            }
        }
    }
    Ok(RankedList::top_k(lists[0].query_id.clone(), "rrf", acc, target_k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn list(ids: &[&str]) -> RankedList {
        RankedList::from_ordered("q", "t", ids.iter().enumerate().map(|(i, d)| (d.to_string(), 10.0 - i as f64)))
    }

    fn ids(l: &RankedList) -> Vec<&str> {
        l.doc_ids().collect()
    }

    #[test]
    fn composite_no_overlap() {
        let m = composite_merge(&list(&["1", "2", "3", "4"]), &list(&["3", "5", "6", "7"]), 4, PadSource::First).unwrap();
        assert_eq!(ids(&m), ["1", "2", "3", "5"]);
        assert_eq!(m.entries[3].score, 0.25);
    }

    #[test]
    fn composite_pads_from_first() {
        let m = composite_merge(&list(&["1", "2", "3"]), &list(&["2", "4"]), 4, PadSource::First).unwrap();
        assert_eq!(ids(&m), ["1", "2", "4", "3"]);
    }

    #[test]
    fn composite_pads_from_second_then_falls_back() {
        let m = composite_merge(&list(&["1", "2", "3"]), &list(&["2", "4"]), 4, PadSource::Second).unwrap();
        assert_eq!(ids(&m), ["1", "2", "4", "3"]);
        let m = composite_merge(&list(&["1", "2", "3", "8"]), &list(&["2", "4", "5"]), 4, PadSource::Second).unwrap();
        assert_eq!(ids(&m), ["1", "2", "4", "5"]);
    }

    #[test]
    fn composite_identical_lists() {
        let m = composite_merge(&list(&["x", "y"]), &list(&["x", "y"]), 2, PadSource::First).unwrap();
        assert_eq!(ids(&m), ["x", "y"]);
    }

    #[test]
    fn composite_query_mismatch() {
        let mut b = list(&["a"]);
        b.query_id = "other".into();
        assert!(matches!(composite_merge(&list(&["a"]), &b, 2, PadSource::First), Err(Error::QueryMismatch(..))));
    }

    #[test]
    fn rrf_hand_case() {
        let r = rrf_fuse(&[list(&["a", "b", "c"]), list(&["b", "c", "a"])], 60.0, 3).unwrap();
        assert_eq!(ids(&r), ["b", "a", "c"]);
        let expect = [1.0 / 62.0 + 1.0 / 61.0, 1.0 / 61.0 + 1.0 / 63.0, 1.0 / 63.0 + 1.0 / 62.0];
        for (e, want) in r.entries.iter().zip(expect) {
            assert!((e.score - want).abs() < 1e-12);
        }
    }

    #[test]
    fn rrf_identical_lists_double() {
        let single = rrf_fuse(&[list(&["a", "b"])], 60.0, 2).unwrap();
        let double = rrf_fuse(&[list(&["a", "b"]), list(&["a", "b"])], 60.0, 2).unwrap();
        assert_eq!(ids(&single), ids(&double));
        for (s, d) in single.entries.iter().zip(&double.entries) {
            assert!((d.score - 2.0 * s.score).abs() < 1e-15);
        }
    }

    #[test]
    fn rrf_single_occurrence_eligible() {
        let r = rrf_fuse(&[list(&["a"]), list(&["b"])], 60.0, 5).unwrap();
        assert_eq!(ids(&r), ["a", "b"]);
    }

    #[test]
    fn rrf_rejects_bad_kappa() {
        assert!(rrf_fuse(&[list(&["a"])], 0.0, 1).is_err());
    }

    fn perm_pair() -> impl Strategy<Value = (Vec<String>, Vec<String>, usize)> {
        (
            prop::sample::subsequence((0..30).collect::<Vec<u32>>(), 0..20).prop_shuffle(),
            prop::sample::subsequence((0..30).collect::<Vec<u32>>(), 0..20).prop_shuffle(),
            1usize..25,
        )
            .prop_map(|(a, b, k)| {
                let f = |v: Vec<u32>| v.into_iter().map(|x| format!("d{x:02}")).collect();
                (f(a), f(b), k)
            })
    }

    proptest! {
        #[test]
        fn composite_laws((a, b, k) in perm_pair()) {
            let la = RankedList::from_ordered("q", "a", a.iter().map(|d| (d.clone(), 1.0)));
            let lb = RankedList::from_ordered("q", "b", b.iter().map(|d| (d.clone(), 1.0)));
            let m = composite_merge(&la, &lb, k, PadSource::First).unwrap();
            prop_assert!(m.is_well_formed());
            let union: HashSet<&String> = a.iter().chain(&b).collect();
            prop_assert_eq!(m.len(), k.min(union.len()));
            let out: HashSet<&str> = m.doc_ids().collect();
            for d in a.iter().take(k.div_ceil(2)).chain(b.iter().take(k / 2)) {
                prop_assert!(out.contains(d.as_str()));
            }
        }

        #[test]
        fn rrf_single_list_identity(a in prop::sample::subsequence((0..40).collect::<Vec<u32>>(), 1..30).prop_shuffle()) {
            let l = RankedList::from_ordered("q", "a", a.iter().map(|x| (format!("d{x}"), 0.0)));
            let r = rrf_fuse(std::slice::from_ref(&l), 60.0, l.len()).unwrap();
            prop_assert_eq!(ids(&r), ids(&l));
        }
    }
}
