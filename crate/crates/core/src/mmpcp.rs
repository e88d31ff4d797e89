//! MMPC-p: max-min candidate-parent search for DI graphs, with per-edge
//! p-value ledgers and Benjamini-Yekutieli style edge selection.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::VariableSet;
use crate::graph::DiGraph;
use crate::testers::{AssocValue, DiTester, QueryError};

/// How many hypotheses the FDR bound is computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HypothesisCount {
    /// Edges surviving Phase II.
    Surviving,
    /// All m(m-1) ordered pairs.
    AllPairs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmpcpConfig {
    pub alpha: f64,
    pub max_subset: usize,
    /// FDR target; `None` keeps every Phase II edge.
    pub q: Option<f64>,
    pub n_hypotheses: HypothesisCount,
}

impl Default for MmpcpConfig {
    fn default() -> Self {
        MmpcpConfig {
            alpha: 0.05,
            max_subset: 3,
            q: Some(0.05),
            n_hypotheses: HypothesisCount::Surviving,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Added {
        target: usize,
        var: usize,
        assoc: f64,
    },
    Removed {
        target: usize,
        var: usize,
        subset: Vec<usize>,
        p_value: f64,
    },
    Kept {
        target: usize,
        var: usize,
        p_value: f64,
    },
}

/// Working state of the search for one target's parents.
#[derive(Debug, Clone, Default)]
pub struct CandidateParentState {
    pub target: usize,
    /// Candidate parents in insertion order.
    pub cp: Vec<usize>,
    /// Sub-alpha p-values gathered in Phase II for each surviving candidate.
    pub ledger: BTreeMap<usize, Vec<f64>>,
    /// Recorded p-value per surviving candidate: the maximum of its ledger.
    pub recorded: BTreeMap<usize, f64>,
    /// Every `(candidate, subset, p)` evaluated during Phase II.
    pub phase2_tests: Vec<(usize, VariableSet, f64)>,
    pub trace: Vec<TraceEvent>,
    cache: HashMap<(usize, VariableSet), f64>,
}

impl CandidateParentState {
    pub fn new(target: usize) -> Self {
        CandidateParentState {
            target,
            ..Default::default()
        }
    }

    pub fn cp_set(&self) -> VariableSet {
        VariableSet::new(self.cp.iter().copied())
    }

    fn p_value(&mut self, tester: &dyn DiTester, i: usize, subset: &VariableSet) -> Result<f64, QueryError> {
        if let Some(&p) = self.cache.get(&(i, subset.clone())) {
            return Ok(p);
        }
        let p = tester.query(i, self.target, subset)?.p_value;
        self.cache.insert((i, subset.clone()), p);
        Ok(p)
    }
}

/// Phase I: grow the candidate parents of `j` by max-min association until no
/// remaining candidate has positive association.
///
/// Minimum associations are maintained incrementally: when CP grows by `v`,
/// only subsets containing `v` are new, and a candidate whose minimum reached
/// zero can never come back. This visits the same subsets as a fresh
/// [`crate::testers::mma_amma`] per round and picks the same variables.
pub fn phase1(
    tester: &dyn DiTester,
    j: usize,
    alpha: f64,
    max_subset: usize,
) -> Result<CandidateParentState, QueryError> {
    let m = tester.n_vars();
    let mut state = CandidateParentState::new(j);
    // running minimum association per live candidate
    let mut live: BTreeMap<usize, f64> = (0..m).filter(|&i| i != j).map(|i| (i, alpha)).collect();
    let mut new_subsets = vec![VariableSet::empty()];
    loop {
        let keys: Vec<usize> = live.keys().copied().collect();
        for i in keys {
            let mut current = live[&i];
            for subset in &new_subsets {
                let p = state.p_value(tester, i, subset)?;
                current = current.min(AssocValue::from_p(alpha, p).value);
                if current <= 0.0 {
                    break;
                }
            }
            if current <= 0.0 {
                live.remove(&i);
            } else {
                live.insert(i, current);
            }
        }
        // strict comparison keeps the lowest index on ties
        let mut best: Option<(usize, f64)> = None;
        for (&i, &v) in &live {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        let Some((var, value)) = best else { break };
        live.remove(&var);
        state.cp.push(var);
        state.trace.push(TraceEvent::Added {
            target: j,
            var,
            assoc: value,
        });
        if live.is_empty() {
            break;
        }
        new_subsets = state.cp_set().subsets_containing(var, max_subset);
    }
    Ok(state)
}

/// Phase II: drop every candidate that some subset of the other candidates
/// renders independent of the target; for survivors record the largest
/// sub-alpha p-value seen.
pub fn phase2(
    tester: &dyn DiTester,
    mut state: CandidateParentState,
    alpha: f64,
    max_subset: usize,
) -> Result<CandidateParentState, QueryError> {
    let j = state.target;
    let order = state.cp.clone();
    for y in order {
        let pool = state.cp_set().without(y);
        let mut kept = Vec::new();
        let mut removed_by: Option<(VariableSet, f64)> = None;
        for subset in pool.subsets_up_to(max_subset) {
            let p = state.p_value(tester, y, &subset)?;
            state.phase2_tests.push((y, subset.clone(), p));
            if p >= alpha {
                removed_by = Some((subset, p));
                break;
            }
            kept.push(p);
        }
        match removed_by {
            Some((subset, p_value)) => {
                state.cp.retain(|&v| v != y);
                state.ledger.remove(&y);
                state.trace.push(TraceEvent::Removed {
                    target: j,
                    var: y,
                    subset: subset.members().to_vec(),
                    p_value,
                });
            }
            None => {
                state.ledger.insert(y, kept);
            }
        }
    }
    for (&y, ps) in &state.ledger {
        let p = ps.iter().copied().fold(0.0f64, f64::max);
        state.recorded.insert(y, p);
        state.trace.push(TraceEvent::Kept {
            target: j,
            var: y,
            p_value: p,
        });
    }
    Ok(state)
}

#[derive(Debug, Clone)]
pub struct MmpcpResult {
    /// Union of all targets' surviving parents; each edge carries its recorded p-value.
    pub graph: DiGraph,
    /// Per-target states, `None` where the target failed.
    pub states: Vec<Option<CandidateParentState>>,
    pub failures: Vec<(usize, QueryError)>,
    pub fdr: Option<FdrDecision>,
}

impl MmpcpResult {
    pub fn trace(&self) -> impl Iterator<Item = &TraceEvent> {
        self.states.iter().flatten().flat_map(|s| s.trace.iter())
    }
}

/// Runs both phases for every target (in parallel on the current rayon pool),
/// merges the parents into one graph and, if `config.q` is set, applies FDR
/// selection by marking edges as retained or not.
pub fn mmpc_p(tester: &dyn DiTester, config: &MmpcpConfig) -> MmpcpResult {
    let m = tester.n_vars();
    let outcomes: Vec<Result<CandidateParentState, QueryError>> = (0..m)
        .into_par_iter()
        .map(|j| {
            let s = phase1(tester, j, config.alpha, config.max_subset)?;
            let mut s = phase2(tester, s, config.alpha, config.max_subset)?;
            s.cache.clear();
            Ok(s)
        })
        .collect();

    let mut graph = DiGraph::new(m);
    let mut states = Vec::with_capacity(m);
    let mut failures = Vec::new();
    for (j, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok(s) => {
                for (&y, &p) in &s.recorded {
                    graph.add_edge_with_p(y, j, p).expect("candidate is a valid non-self edge");
                }
                states.push(Some(s));
            }
            Err(e) => {
                failures.push((j, e));
                states.push(None);
            }
        }
    }

    let fdr = config.q.map(|q| {
        let n = match config.n_hypotheses {
            HypothesisCount::Surviving => graph.n_edges(),
            HypothesisCount::AllPairs => m * m.saturating_sub(1),
        };
        let decision = fdr_select(&graph, q, n).expect("every MMPC-p edge has a recorded p-value");
        if decision.beta_star > config.alpha {
            log::warn!(
                "FDR threshold {} exceeds alpha {}; retained edges may not be FDR controlled",
                decision.beta_star,
                config.alpha
            );
        }
        decision.apply(&mut graph);
        decision
    });

    MmpcpResult {
        graph,
        states,
        failures,
        fdr,
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FdrError {
    #[error("edge ({0}, {1}) has no recorded p-value")]
    MissingPValue(usize, usize),
    #[error("q must lie in (0, 1), got {0}")]
    BadLevel(f64),
    #[error("{n_hypotheses} hypotheses cannot cover {n_edges} edges")]
    TooFewHypotheses { n_hypotheses: usize, n_edges: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdrDecision {
    pub q: f64,
    pub n_hypotheses: usize,
    pub beta_star: f64,
    pub retained: usize,
    /// Retain flag per edge, in the graph's edge order.
    pub flags: Vec<((usize, usize), bool)>,
}

impl FdrDecision {
    pub fn apply(&self, graph: &mut DiGraph) {
        for &((i, j), keep) in &self.flags {
            if let Some(e) = graph.edge_mut(i, j) {
                e.retained = Some(keep);
            }
        }
    }
}

pub fn harmonic(k: usize) -> f64 {
    (1..=k).map(|i| 1.0 / i as f64).sum()
}

/// `FDR_BY(beta) = n * beta * H(n) / max(R(beta), 1)`.
pub fn fdr_by(beta: f64, n_hypotheses: usize, n_rejected: usize) -> f64 {
    n_hypotheses as f64 * beta * harmonic(n_hypotheses) / n_rejected.max(1) as f64
}

/// Picks the largest recorded p-value `beta` with `FDR_BY(beta) <= q` and
/// retains exactly the edges whose recorded p-value is at most `beta`.
/// When no candidate qualifies nothing is retained and `beta_star` is 0.
pub fn fdr_select(graph: &DiGraph, q: f64, n_hypotheses: usize) -> Result<FdrDecision, FdrError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(FdrError::BadLevel(q));
    }
    if n_hypotheses < graph.n_edges() {
        return Err(FdrError::TooFewHypotheses {
            n_hypotheses,
            n_edges: graph.n_edges(),
        });
    }
    let mut ps = Vec::with_capacity(graph.n_edges());
    for ((i, j), a) in graph.edges() {
        ps.push(a.p_value.ok_or(FdrError::MissingPValue(i, j))?);
    }
    let mut sorted = ps.clone();
    sorted.sort_by(f64::total_cmp);
    let h = harmonic(n_hypotheses);
    let mut beta_star = None;
    // R(beta) for the k-th smallest distinct value is the index past its last copy
    let mut k = 0;
    while k < sorted.len() {
        let beta = sorted[k];
        let mut r = k;
        while r < sorted.len() && sorted[r] == beta {
            r += 1;
        }
        if n_hypotheses as f64 * beta * h / r.max(1) as f64 <= q {
            beta_star = Some(beta);
        }
        k = r;
    }
    let flags: Vec<((usize, usize), bool)> = graph
        .edges()
        .zip(&ps)
        .map(|((e, _), &p)| (e, beta_star.is_some_and(|b| p <= b)))
        .collect();
    Ok(FdrDecision {
        q,
        n_hypotheses,
        beta_star: beta_star.unwrap_or(0.0),
        retained: flags.iter().filter(|(_, k)| *k).count(),
        flags,
    })
}

/// Trace events from all targets, serialized one JSON object per line.
pub fn trace_jsonl<'a>(events: impl Iterator<Item = &'a TraceEvent>) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e).expect("trace event serializes"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testers::{mma_amma, PerfectOracle, UNLIMITED};
    use proptest::prelude::*;

    fn oracle(m: usize, edges: &[(usize, usize)]) -> PerfectOracle {
        PerfectOracle::new(DiGraph::from_edges(m, edges).unwrap())
    }

    #[test]
    fn phase1_empty_truth() {
        let o = oracle(4, &[]);
        let s = phase1(&o, 2, 0.05, 3).unwrap();
        assert!(s.cp.is_empty());
    }

    #[test]
    fn phase1_contains_parents() {
        let o = oracle(4, &[(0, 3), (1, 3)]);
        let s = phase1(&o, 3, 0.05, 3).unwrap();
        assert!(s.cp.contains(&0) && s.cp.contains(&1));
    }

    #[test]
    fn chain_admits_ancestor_then_prunes_it() {
        // 0 -> 1 -> 2, target 2: 0 ties with 1 at alpha and wins on index
        let o = oracle(3, &[(0, 1), (1, 2)]);
        let s = phase1(&o, 2, 0.05, 3).unwrap();
        assert_eq!(s.cp, vec![0, 1]);
        let s = phase2(&o, s, 0.05, 3).unwrap();
        assert_eq!(s.cp, vec![1]);
        assert!(matches!(
            s.trace.iter().find(|e| matches!(e, TraceEvent::Removed { .. })),
            Some(TraceEvent::Removed { var: 0, subset, p_value, .. }) if subset == &vec![1] && *p_value == 1.0
        ));
        assert_eq!(s.recorded.get(&1), Some(&0.0));
    }

    #[test]
    fn phase2_empty_is_noop() {
        let o = oracle(3, &[]);
        let s = phase2(&o, CandidateParentState::new(1), 0.05, 3).unwrap();
        assert!(s.cp.is_empty() && s.recorded.is_empty());
    }

    /// Tester returning fixed p-values per (i, subset) for one target.
    struct Scripted {
        m: usize,
        table: HashMap<(usize, Vec<usize>), f64>,
    }

    impl DiTester for Scripted {
        fn kind(&self) -> crate::testers::TesterKind {
            crate::testers::TesterKind::Perfect
        }
        fn n_vars(&self) -> usize {
            self.m
        }
        fn test(
            &self,
            i: usize,
            j: usize,
            cond: &VariableSet,
        ) -> Result<crate::testers::DiTestResult, crate::testers::TesterError> {
            let p = *self.table.get(&(i, cond.members().to_vec())).unwrap_or(&1.0);
            Ok(crate::testers::DiTestResult {
                statistic: 0.0,
                p_value: p,
                tester: self.kind(),
                source: i,
                target: j,
                conditioning: cond.clone(),
            })
        }
    }

    #[test]
    fn recorded_p_is_ledger_max() {
        // target 3 with candidates 0, 1, 2; candidate 0 sees 0.001, 0.01, 0.03, 0.02
        let mut table = HashMap::new();
        table.insert((0, vec![]), 0.001);
        table.insert((0, vec![1]), 0.01);
        table.insert((0, vec![2]), 0.03);
        table.insert((0, vec![1, 2]), 0.02);
        for y in [1, 2] {
            table.insert((y, vec![]), 0.0);
            table.insert((y, vec![0]), 0.0);
            table.insert((y, vec![3 - y]), 0.0);
            table.insert((y, VariableSet::new([0, 3 - y]).members().to_vec()), 0.0);
        }
        let t = Scripted { m: 4, table };
        let mut s = CandidateParentState::new(3);
        s.cp = vec![0, 1, 2];
        let s = phase2(&t, s, 0.05, 3).unwrap();
        assert_eq!(s.ledger[&0], vec![0.001, 0.01, 0.03, 0.02]);
        assert_eq!(s.recorded[&0], 0.03);
    }

    #[test]
    fn single_variable_gives_empty_graph() {
        let o = oracle(1, &[]);
        let r = mmpc_p(&o, &MmpcpConfig::default());
        assert_eq!(r.graph.n_edges(), 0);
    }

    /// Phase I written directly against `mma_amma`.
    fn naive_phase1(t: &dyn DiTester, j: usize, alpha: f64, cap: usize) -> Vec<usize> {
        let mut cp = Vec::new();
        loop {
            let set = VariableSet::new(cp.iter().copied());
            let (best, v) = mma_amma(t, j, &set, &VariableSet::empty(), alpha, cap).unwrap();
            match best {
                Some(b) if !v.is_zero() => cp.push(b),
                _ => return cp,
            }
        }
    }

    fn random_dag(m: usize, seed: u64) -> DiGraph {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..m).collect();
        for k in (1..m).rev() {
            order.swap(k, rng.random_range(0..=k));
        }
        let mut g = DiGraph::new(m);
        for a in 0..m {
            for b in a + 1..m {
                if rng.random_bool(0.4) {
                    g.add_edge(order[a], order[b]).unwrap();
                }
            }
        }
        g
    }

    #[test]
    fn incremental_phase1_matches_naive_mma_amma() {
        for seed in 0..40 {
            let m = 3 + (seed as usize % 4);
            let o = PerfectOracle::new(random_dag(m, seed));
            for cap in [1, 2, UNLIMITED] {
                for j in 0..m {
                    assert_eq!(phase1(&o, j, 0.05, cap).unwrap().cp, naive_phase1(&o, j, 0.05, cap));
                }
            }
        }
    }

    #[test]
    fn fdr_examples() {
        let mut g = DiGraph::new(3);
        g.add_edge_with_p(0, 1, 0.0).unwrap();
        g.add_edge_with_p(1, 2, 0.0).unwrap();
        let d = fdr_select(&g, 0.05, 2).unwrap();
        assert_eq!(d.retained, 2);

        let mut g = DiGraph::new(2);
        g.add_edge_with_p(0, 1, 0.04).unwrap();
        let d = fdr_select(&g, 0.05, 1).unwrap();
        assert_eq!((d.retained, d.beta_star), (1, 0.04));

        let mut g = DiGraph::new(2);
        g.add_edge_with_p(0, 1, 0.5).unwrap();
        let d = fdr_select(&g, 0.05, 1).unwrap();
        assert_eq!((d.retained, d.beta_star), (0, 0.0));

        let mut g = DiGraph::new(2);
        g.add_edge(0, 1).unwrap();
        assert_eq!(fdr_select(&g, 0.05, 1), Err(FdrError::MissingPValue(0, 1)));
    }

    #[test]
    fn fdr_three_values_six_hypotheses() {
        // H(6) = 2.45; FDR(0.001) = 6*.001*2.45/1 = 0.0147; FDR(0.01) = 6*.01*2.45/2 = 0.0735;
        // FDR(0.04) = 6*.04*2.45/3 = 0.196
        let mut g = DiGraph::new(4);
        g.add_edge_with_p(0, 1, 0.01).unwrap();
        g.add_edge_with_p(1, 2, 0.04).unwrap();
        g.add_edge_with_p(2, 3, 0.001).unwrap();
        let d = fdr_select(&g, 0.1, 6).unwrap();
        assert_eq!(d.beta_star, 0.01);
        assert_eq!(d.retained, 2);
        assert!(!d.flags.iter().find(|(e, _)| *e == (1, 2)).unwrap().1);
    }

    proptest! {
        #[test]
        fn fdr_matches_bruteforce_scan(
            ps in proptest::collection::vec(prop_oneof![0.0f64..0.05, Just(0.01), Just(0.0)], 1..12),
            extra in 0usize..10,
            q in 0.01f64..0.5
        ) {
            let mut g = DiGraph::new(13);
            for (k, &p) in ps.iter().enumerate() {
                g.add_edge_with_p(k, k + 1, p).unwrap();
            }
            let n = ps.len() + extra;
            let d = fdr_select(&g, q, n).unwrap();
            let mut best: Option<f64> = None;
            for &b in &ps {
                let r = ps.iter().filter(|&&p| p <= b).count();
                if fdr_by(b, n, r) <= q && best.is_none_or(|x| b > x) {
                    best = Some(b);
                }
            }
            prop_assert_eq!(d.beta_star, best.unwrap_or(0.0));
            let want = best.map_or(0, |b| ps.iter().filter(|&&p| p <= b).count());
            prop_assert_eq!(d.retained, want);
        }
    }
}
