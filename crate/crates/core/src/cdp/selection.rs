//! Davenport–Pichorides selection of the labels combined in each round.
//!
//! Round `i` picks `m_1 > ... > m_t` from the label set `E` so that
//! `p + (m_α − m_β) + (m_γ − m_δ) ∉ E` for every `p ∈ S_i`, `α ≤ β`, `γ < δ`.
//! The exclusion sets follow `S_1 = {n_1}`, `S_{i+1} = S_i ∪ T_i ∪ U_i`.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundPick {
    pub picks: Vec<i64>,
    pub u: Vec<i64>,
}

#[derive(Clone, Debug)]
pub struct SelectionState {
    e: Vec<i64>,
    e_set: HashSet<i64>,
    s: BTreeSet<i64>,
    t: usize,
    history: Vec<RoundPick>,
}

/// A configuration `p + (m_α − m_β) + (m_γ − m_δ)` landing in `E` (indices 1-based).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub p: i64,
    pub alpha: usize,
    pub beta: usize,
    pub gamma: usize,
    pub delta: usize,
    pub value: i64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Selection {
    Picked(Vec<i64>),
    /// Fewer than `t` candidates passed; `accepted` holds those that did.
    Failure { accepted: Vec<i64> },
}

impl SelectionState {
    pub fn new(labels: &[i64], t: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidParameter("no labels".into()));
        }
        if t == 0 {
            return Err(Error::InvalidParameter("t must be positive".into()));
        }
        let mut e = labels.to_vec();
        e.sort_unstable_by(|a, b| b.cmp(a));
        if e.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter("labels must be distinct".into()));
        }
        let e_set = e.iter().copied().collect();
        let s = BTreeSet::from([e[0]]);
        Ok(SelectionState {
            e,
            e_set,
            s,
            t,
            history: Vec::new(),
        })
    }

    /// Labels in descending order.
    pub fn labels(&self) -> &[i64] {
        &self.e
    }

    pub fn n1(&self) -> i64 {
        self.e[0]
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn s(&self) -> &BTreeSet<i64> {
        &self.s
    }

    pub fn history(&self) -> &[RoundPick] {
        &self.history
    }

    pub fn contains(&self, label: i64) -> bool {
        self.e_set.contains(&label)
    }

    /// `N(p)`: the number of labels strictly greater than `p`.
    pub fn n_above(&self, p: i64) -> u64 {
        self.e.partition_point(|&x| x > p) as u64
    }

    pub fn sum_n(&self) -> u64 {
        self.s.iter().map(|&p| self.n_above(p)).sum()
    }

    /// 1-based position of `label` in the descending label list.
    pub fn index_of(&self, label: i64) -> Option<usize> {
        self.e.iter().position(|&x| x == label).map(|i| i + 1)
    }

    /// Records an accepted round and extends `S` by `T ∪ U`; returns `U`.
    pub fn apply(&mut self, picks: &[i64]) -> Vec<i64> {
        let u = u_set(&self.s, picks);
        self.s.extend(picks.iter().copied());
        self.s.extend(u.iter().copied());
        self.history.push(RoundPick {
            picks: picks.to_vec(),
            u: u.clone(),
        });
        u
    }
}

fn shifts(picks: &[i64]) -> BTreeSet<i64> {
    let mut out = BTreeSet::new();
    let n = picks.len();
    for a in 0..n {
        for b in a..n {
            for c in 0..n {
                for d in c + 1..n {
                    out.insert((picks[a] - picks[b]) + (picks[c] - picks[d]));
                }
            }
        }
    }
    out
}

/// `U = {p + (m_α − m_β) + (m_γ − m_δ) : p ∈ S, α ≤ β, γ < δ}`, sorted.
pub fn u_set(s: &BTreeSet<i64>, picks: &[i64]) -> Vec<i64> {
    let sh = shifts(picks);
    let mut out = BTreeSet::new();
    for &p in s {
        for &d in &sh {
            out.insert(p + d);
        }
    }
    out.into_iter().collect()
}

/// Exhaustive check of every configuration; returns the first violation.
pub fn exclusion_violation(e: &HashSet<i64>, s: &BTreeSet<i64>, picks: &[i64]) -> Option<Violation> {
    let n = picks.len();
    for &p in s {
        for a in 0..n {
            for b in a..n {
                for c in 0..n {
                    for d in c + 1..n {
                        let value = p + (picks[a] - picks[b]) + (picks[c] - picks[d]);
                        if e.contains(&value) {
                            return Some(Violation {
                                p,
                                alpha: a + 1,
                                beta: b + 1,
                                gamma: c + 1,
                                delta: d + 1,
                                value,
                            });
                        }
                    }
                }
            }
        }
    }
    None
}

/// Configurations that involve the newest pick `m_k` (the last element).
fn new_configs_clear(e: &HashSet<i64>, s: &BTreeSet<i64>, picks: &[i64]) -> bool {
    let n = picks.len();
    let k = n - 1;
    let mut sh = BTreeSet::new();
    for a in 0..n {
        for b in a..n {
            for c in 0..n {
                for d in c + 1..n {
                    if a == k || b == k || c == k || d == k {
                        sh.insert((picks[a] - picks[b]) + (picks[c] - picks[d]));
                    }
                }
            }
        }
    }
    s.iter().all(|&p| sh.iter().all(|&d| !e.contains(&(p + d))))
}

/// Greedy selection: scan labels in descending order and accept a candidate
/// when the picks so far still satisfy the exclusion; stop after `t` accepts.
pub fn davenport_select(state: &SelectionState) -> Selection {
    let mut accepted: Vec<i64> = Vec::with_capacity(state.t);
    for &m in &state.e {
        accepted.push(m);
        if new_configs_clear(&state.e_set, &state.s, &accepted) {
            if accepted.len() == state.t {
                return Selection::Picked(accepted);
            }
        } else {
            accepted.pop();
        }
    }
    Selection::Failure { accepted }
}

/// The index comparison `q(α) ≤ α⁴ Σ_{p∈S} N(p)` for a selection.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdvisoryQ {
    pub indices: Vec<usize>,
    pub sum_n: u64,
    pub holds: bool,
}

pub fn advisory_q(state: &SelectionState, picks: &[i64]) -> AdvisoryQ {
    let sum_n = state.sum_n();
    let indices: Vec<usize> = picks.iter().map(|&m| state.index_of(m).unwrap_or(0)).collect();
    let holds = indices
        .iter()
        .enumerate()
        .all(|(a, &q)| (q as u128) <= ((a as u128 + 1).pow(4)) * sum_n as u128);
    AdvisoryQ {
        indices,
        sum_n,
        holds,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityGauge {
    pub round: usize,
    pub sum_n: u64,
    /// `t⁴ Σ N(p)`, saturating.
    pub t4_sum_n: u64,
    pub r: usize,
    /// Whether `t⁴ Σ N(p) ≤ R`.
    pub condition_holds: bool,
    /// Worst-case induction bound `t^{5i}` for the current `S_i`.
    pub induction_bound: f64,
    pub within_induction_bound: bool,
    /// Rounds for which `t^{5i} ≤ R`; unbounded for `t = 1`.
    pub predicted_rounds: Option<u64>,
}

pub fn feasibility_gauge(state: &SelectionState) -> FeasibilityGauge {
    let sum_n = state.sum_n();
    let t = state.t as u64;
    let t4_sum_n = t.saturating_pow(4).saturating_mul(sum_n);
    let r = state.e.len();
    let round = state.history.len() + 1;
    let induction_bound = (state.t as f64).powi(5 * round as i32);
    let predicted_rounds = if state.t == 1 {
        None
    } else {
        Some(((r as f64).ln() / (5.0 * (state.t as f64).ln())).floor().max(0.0) as u64)
    };
    FeasibilityGauge {
        round,
        sum_n,
        t4_sum_n,
        r,
        condition_holds: t4_sum_n <= r as u64,
        induction_bound,
        within_induction_bound: sum_n as f64 <= induction_bound,
        predicted_rounds,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn powers(k: u32) -> Vec<i64> {
        (1..=k).map(|j| 1i64 << j).collect()
    }

    #[test]
    fn t1_picks_max() {
        let st = SelectionState::new(&[3, 9, 4], 1).unwrap();
        assert_eq!(davenport_select(&st), Selection::Picked(vec![9]));
    }

    #[test]
    fn lacunary_pair_matches_exhaustive_oracle() {
        let e = powers(10);
        let mut st = SelectionState::new(&e, 2).unwrap();
        st.s = BTreeSet::from([1024]);
        let Selection::Picked(picks) = davenport_select(&st) else {
            panic!("selection failed")
        };
        assert!(exclusion_violation(&st.e_set, &st.s, &picks).is_none());
        let feasible: Vec<(i64, i64)> = e
            .iter()
            .flat_map(|&a| e.iter().map(move |&b| (a, b)))
            .filter(|(a, b)| a > b)
            .filter(|(a, b)| exclusion_violation(&st.e_set, &st.s, &[*a, *b]).is_none())
            .collect();
        assert!(!feasible.is_empty());
        // Greedy returns the lexicographically largest feasible pair.
        assert_eq!((picks[0], picks[1]), *feasible.iter().max().unwrap());
    }

    #[test]
    fn dense_labels_fail() {
        let e: Vec<i64> = (1..=10).collect();
        let mut st = SelectionState::new(&e, 2).unwrap();
        st.s = e.iter().copied().collect();
        assert!(matches!(davenport_select(&st), Selection::Failure { .. }));
        for a in 1..=10 {
            for b in 1..a {
                assert!(exclusion_violation(&st.e_set, &st.s, &[a, b]).is_some());
            }
        }
    }

    #[test]
    fn gauge_examples() {
        let mut st = SelectionState::new(&[5, 7, 11], 1).unwrap();
        let g = feasibility_gauge(&st);
        assert_eq!(g.sum_n, 0);
        assert!(g.condition_holds);
        assert_eq!(g.predicted_rounds, None);
        let Selection::Picked(p) = davenport_select(&st) else {
            panic!()
        };
        st.apply(&p);
        let g = feasibility_gauge(&st);
        assert!(g.sum_n <= 1);
        assert!(g.within_induction_bound);
    }

    #[test]
    fn apply_follows_recursion() {
        let mut st = SelectionState::new(&powers(16), 2).unwrap();
        let Selection::Picked(p) = davenport_select(&st) else {
            panic!()
        };
        assert_eq!(p, vec![1 << 16, 1 << 15]);
        let u = st.apply(&p);
        assert_eq!(u, vec![3 << 15, 1 << 17]);
        let expect: BTreeSet<i64> = [1 << 16, 1 << 15, 3 << 15, 1 << 17].into_iter().collect();
        assert_eq!(st.s, expect);
    }

    #[test]
    fn advisory_q_is_literal() {
        let st = SelectionState::new(&powers(6), 2).unwrap();
        // S_1 = {n_1} has Σ N = 0, so any pick fails the literal comparison.
        let a = advisory_q(&st, &[64, 32]);
        assert_eq!(a.sum_n, 0);
        assert!(!a.holds);
        assert_eq!(a.indices, vec![1, 2]);
    }

    proptest! {
        #[test]
        fn running_sum_matches_recount(
            labels in proptest::collection::btree_set(1i64..400, 2..40),
            t in 1usize..4,
            rounds in 1usize..4,
        ) {
            let e: Vec<i64> = labels.iter().copied().collect();
            let mut st = SelectionState::new(&e, t).unwrap();
            for _ in 0..rounds {
                match davenport_select(&st) {
                    Selection::Picked(p) => {
                        prop_assert!(exclusion_violation(&st.e_set, &st.s, &p).is_none());
                        st.apply(&p);
                    }
                    Selection::Failure { .. } => break,
                }
            }
            let recount: u64 = st
                .s
                .iter()
                .map(|&p| e.iter().filter(|&&x| x > p).count() as u64)
                .sum();
            prop_assert_eq!(st.sum_n(), recount);
        }
    }
}
