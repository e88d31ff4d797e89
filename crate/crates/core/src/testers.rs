//! Directed-information testing oracles.
//!
//! A tester answers `DI(i, j, A)`: the p-value of the null hypothesis that the
//! past of `i` carries no information about the next value of `j` once the
//! pasts of `j` and of the conditioning set `A` are known.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{transition_pairs, PanelData, VariableSet};
use crate::graph::DiGraph;
use crate::stats::{chi2_sf_1dof, logdet_tail_ratio, residual_covariance, Moments, StatsError};

/// Subset-size cap meaning "no cap".
pub const UNLIMITED: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TesterKind {
    #[serde(rename = "tester1")]
    Tester1,
    #[serde(rename = "tester2")]
    Tester2,
    #[serde(rename = "perfect")]
    Perfect,
}

impl TesterKind {
    pub fn label(self) -> &'static str {
        match self {
            TesterKind::Tester1 => "1",
            TesterKind::Tester2 => "2",
            TesterKind::Perfect => "perfect",
        }
    }
}

impl fmt::Display for TesterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for TesterKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" | "tester1" => Ok(TesterKind::Tester1),
            "2" | "tester2" => Ok(TesterKind::Tester2),
            "perfect" => Ok(TesterKind::Perfect),
            other => Err(format!("unknown tester `{other}` (expected 1 or 2)")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TesterError {
    #[error("invalid query DI({i}, {j}, {cond}): {reason}")]
    InvalidQuery {
        i: usize,
        j: usize,
        cond: VariableSet,
        reason: &'static str,
    },
    #[error("insufficient samples: {pairs} stacked pairs cannot support {covariates} covariates")]
    InsufficientSamples { pairs: usize, covariates: usize },
    #[error("insufficient replicates: N = {n} but the regression needs N > {needed}, T >= 2 (T = {t})")]
    InsufficientReplicates { n: usize, needed: usize, t: usize },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// A tester error together with the query that produced it.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("DI({source_var} -> {target} | {subset}) failed: {error}")]
pub struct QueryError {
    pub source_var: usize,
    pub target: usize,
    pub subset: VariableSet,
    #[source]
    pub error: TesterError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiTestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub tester: TesterKind,
    pub source: usize,
    pub target: usize,
    pub conditioning: VariableSet,
}

pub trait DiTester: Sync {
    fn kind(&self) -> TesterKind;

    fn n_vars(&self) -> usize;

    fn test(&self, i: usize, j: usize, cond: &VariableSet) -> Result<DiTestResult, TesterError>;

    /// [`DiTester::test`] with the query attached to any error.
    fn query(&self, i: usize, j: usize, cond: &VariableSet) -> Result<DiTestResult, QueryError> {
        self.test(i, j, cond).map_err(|error| QueryError {
            source_var: i,
            target: j,
            subset: cond.clone(),
            error,
        })
    }
}

fn validate(m: usize, i: usize, j: usize, cond: &VariableSet) -> Result<(), TesterError> {
    let bad = |reason| {
        Err(TesterError::InvalidQuery {
            i,
            j,
            cond: cond.clone(),
            reason,
        })
    };
    if i >= m || j >= m || cond.iter().any(|v| v >= m) {
        return bad("variable index out of range");
    }
    if i == j {
        return bad("source equals target");
    }
    if cond.contains(i) || cond.contains(j) {
        return bad("conditioning set contains source or target");
    }
    Ok(())
}

fn from_statistic(
    raw: f64,
    tester: TesterKind,
    i: usize,
    j: usize,
    cond: &VariableSet,
) -> DiTestResult {
    let statistic = if raw.is_nan() { 0.0 } else { raw.max(0.0) };
    DiTestResult {
        statistic,
        p_value: chi2_sf_1dof(statistic),
        tester,
        source: i,
        target: j,
        conditioning: cond.clone(),
    }
}

/// Stacked-regression tester.
///
/// All consecutive `(t, t+1)` pairs of every replicate are stacked. The next
/// value of `j` is regressed on the current values of `{j} ∪ A` (restricted)
/// and of `{i, j} ∪ A` (unrestricted); the statistic is
/// `(NT - 1) ln(mse_restricted / mse_unrestricted)`, referred to chi-square(1).
#[derive(Debug, Clone)]
pub struct Tester1 {
    /// Columns `0..m` are time-t values, `m..2m` the time-(t+1) values.
    moments: Moments,
    n_vars: usize,
    n_pairs: usize,
    intercept: bool,
}

impl Tester1 {
    pub fn new(data: &PanelData) -> Self {
        Self::with_intercept(data, true)
    }

    pub fn with_intercept(data: &PanelData, intercept: bool) -> Self {
        let m = data.n_vars();
        let pairs = transition_pairs(data, &VariableSet::new(0..m));
        let n_pairs = pairs.current.nrows();
        let mut cols = DMatrix::zeros(n_pairs, 2 * m);
        cols.columns_mut(0, m).copy_from(&pairs.current);
        cols.columns_mut(m, m).copy_from(&pairs.next);
        Tester1 {
            moments: Moments::from_columns(&cols, intercept),
            n_vars: m,
            n_pairs,
            intercept,
        }
    }

    /// Mean squared errors of the restricted and unrestricted regressions.
    pub fn mse_pair(&self, i: usize, j: usize, cond: &VariableSet) -> Result<(f64, f64), TesterError> {
        validate(self.n_vars, i, j, cond)?;
        let covariates = cond.len() + 2 + usize::from(self.intercept);
        if self.n_pairs <= covariates + usize::from(!self.intercept) {
            return Err(TesterError::InsufficientSamples {
                pairs: self.n_pairs,
                covariates,
            });
        }
        let mut regressors: Vec<usize> = Vec::with_capacity(cond.len() + 2);
        regressors.push(j);
        regressors.extend(cond.iter());
        let target = self.n_vars + j;
        let n = self.n_pairs as f64;
        let mse1 = self.moments.residual_ss(&regressors, target) / n;
        regressors.push(i);
        let mse2 = self.moments.residual_ss(&regressors, target) / n;
        Ok((mse1, mse2))
    }
}

impl DiTester for Tester1 {
    fn kind(&self) -> TesterKind {
        TesterKind::Tester1
    }

    fn n_vars(&self) -> usize {
        self.n_vars
    }

    fn test(&self, i: usize, j: usize, cond: &VariableSet) -> Result<DiTestResult, TesterError> {
        let (mse1, mse2) = self.mse_pair(i, j, cond)?;
        let raw = if mse2 <= 0.0 {
            if mse1 > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        } else {
            (self.n_pairs as f64 - 1.0) * (mse1 / mse2).ln()
        };
        Ok(from_statistic(raw, TesterKind::Tester1, i, j, cond))
    }
}

pub fn di_tester1(data: &PanelData, i: usize, j: usize, cond: &VariableSet) -> Result<DiTestResult, TesterError> {
    Tester1::new(data).test(i, j, cond)
}

/// Cross-sectional tester for panels with many replicates.
///
/// For every transition `t -> t+1` the next value of `j` is regressed across
/// the N replicates, with and without `i`. The T x T covariances of the two
/// residual sequences give asymptotic prediction errors as log-determinant
/// ratios; `(N - 1)` times their difference is referred to chi-square(1).
#[derive(Debug, Clone)]
pub struct Tester2 {
    /// Per transition: N x 2m centered columns (time-t values, then time-(t+1)).
    steps: Vec<DMatrix<f64>>,
    moments: Vec<Moments>,
    n_vars: usize,
    n_replicates: usize,
}

impl Tester2 {
    pub fn new(data: &PanelData) -> Self {
        let m = data.n_vars();
        let n = data.n_replicates();
        let mut steps = Vec::with_capacity(data.n_transitions());
        let mut moments = Vec::with_capacity(data.n_transitions());
        for t in 0..data.n_transitions() {
            let mut cols = DMatrix::from_fn(n, 2 * m, |r, c| {
                if c < m {
                    data.get(r, t, c)
                } else {
                    data.get(r, t + 1, c - m)
                }
            });
            for mut col in cols.column_iter_mut() {
                let mean = col.mean();
                col.add_scalar_mut(-mean);
            }
            moments.push(Moments::from_columns(&cols, false));
            steps.push(cols);
        }
        Tester2 {
            steps,
            moments,
            n_vars: m,
            n_replicates: n,
        }
    }

    fn log_prediction_error(&self, regressors: &[usize], j: usize) -> Result<f64, TesterError> {
        let target = self.n_vars + j;
        let t_len = self.steps.len();
        let mut resid = DMatrix::zeros(t_len, self.n_replicates);
        for (t, (cols, mom)) in self.steps.iter().zip(&self.moments).enumerate() {
            let b = mom.coefficients(regressors, target);
            for r in 0..self.n_replicates {
                let fitted: f64 = regressors.iter().zip(b.iter()).map(|(&c, &w)| w * cols[(r, c)]).sum();
                resid[(t, r)] = cols[(r, target)] - fitted;
            }
        }
        let cov = residual_covariance(&resid)?;
        Ok(logdet_tail_ratio(&cov, t_len)?)
    }

    /// Log asymptotic prediction errors `(restricted, unrestricted)`.
    pub fn log_errors(&self, i: usize, j: usize, cond: &VariableSet) -> Result<(f64, f64), TesterError> {
        validate(self.n_vars, i, j, cond)?;
        let needed = cond.len() + 3;
        if self.n_replicates <= needed || self.steps.len() < 2 {
            return Err(TesterError::InsufficientReplicates {
                n: self.n_replicates,
                needed,
                t: self.steps.len(),
            });
        }
        let mut regressors: Vec<usize> = Vec::with_capacity(cond.len() + 2);
        regressors.push(j);
        regressors.extend(cond.iter());
        let restricted = self.log_prediction_error(&regressors, j)?;
        regressors.push(i);
        let unrestricted = self.log_prediction_error(&regressors, j)?;
        Ok((restricted, unrestricted))
    }

    /// Plug-in Gaussian DI estimate `½ (log e²(j,A) − log e²(j,A∪i))`.
    pub fn di_estimate(&self, i: usize, j: usize, cond: &VariableSet) -> Result<f64, TesterError> {
        let (r, u) = self.log_errors(i, j, cond)?;
        Ok(0.5 * (r - u))
    }
}

impl DiTester for Tester2 {
    fn kind(&self) -> TesterKind {
        TesterKind::Tester2
    }

    fn n_vars(&self) -> usize {
        self.n_vars
    }

    fn test(&self, i: usize, j: usize, cond: &VariableSet) -> Result<DiTestResult, TesterError> {
        let (restricted, unrestricted) = self.log_errors(i, j, cond)?;
        let raw = (self.n_replicates as f64 - 1.0) * (restricted - unrestricted);
        Ok(from_statistic(raw, TesterKind::Tester2, i, j, cond))
    }
}

pub fn di_tester2(data: &PanelData, i: usize, j: usize, cond: &VariableSet) -> Result<DiTestResult, TesterError> {
    Tester2::new(data).test(i, j, cond)
}

/// Oracle that answers from the generating graph.
///
/// The graph is unrolled in time (every node also drives its own next value)
/// and `DI(i, j, A)` is zero exactly when the latest value of `j` is
/// d-separated from the whole past of `i` given the pasts of `j` and `A`.
/// Returns p = 0 for dependence and p = 1 for independence.
#[derive(Debug, Clone)]
pub struct PerfectOracle {
    truth: DiGraph,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    horizon: usize,
}

impl PerfectOracle {
    pub fn new(truth: DiGraph) -> Self {
        let m = truth.n_vars();
        Self::with_horizon(truth, m * m + 2 * m + 4)
    }

    pub fn with_horizon(truth: DiGraph, horizon: usize) -> Self {
        let m = truth.n_vars();
        let parents = (0..m).map(|v| truth.parents(v)).collect();
        let children = (0..m).map(|v| truth.children(v)).collect();
        PerfectOracle {
            truth,
            parents,
            children,
            horizon: horizon.max(2),
        }
    }

    pub fn truth(&self) -> &DiGraph {
        &self.truth
    }

    /// True when the past of `i` is d-connected to the next value of `j`.
    pub fn dependent(&self, i: usize, j: usize, cond: &VariableSet) -> bool {
        if self.truth.has_edge(i, j) {
            return true;
        }
        let m = self.truth.n_vars();
        let h = self.horizon;
        let id = |v: usize, s: usize| s * m + v;
        let total = (h + 1) * m;

        let mut observed = vec![false; total];
        for s in 0..h {
            observed[id(j, s)] = true;
            for a in cond.iter() {
                observed[id(a, s)] = true;
            }
        }

        // nodes that are observed or have an observed descendant
        let mut anc = observed.clone();
        let mut queue: VecDeque<usize> = (0..total).filter(|&n| observed[n]).collect();
        while let Some(node) = queue.pop_front() {
            let (v, s) = (node % m, node / m);
            if s == 0 {
                continue;
            }
            for p in self.parents[v].iter().copied().chain(std::iter::once(v)) {
                let pid = id(p, s - 1);
                if !anc[pid] {
                    anc[pid] = true;
                    queue.push_back(pid);
                }
            }
        }

        // Bayes-ball from X_{j,h}; direction `up` means arrived from a child.
        let mut seen_up = vec![false; total];
        let mut seen_down = vec![false; total];
        let mut stack = vec![(id(j, h), true)];
        while let Some((node, up)) = stack.pop() {
            let seen = if up { &mut seen_up } else { &mut seen_down };
            if seen[node] {
                continue;
            }
            seen[node] = true;
            let (v, s) = (node % m, node / m);
            if !observed[node] && v == i && s < h {
                return true;
            }
            let push_parents = |stack: &mut Vec<(usize, bool)>| {
                if s > 0 {
                    for p in self.parents[v].iter().copied().chain(std::iter::once(v)) {
                        stack.push((id(p, s - 1), true));
                    }
                }
            };
            let push_children = |stack: &mut Vec<(usize, bool)>| {
                if s < h {
                    for c in self.children[v].iter().copied().chain(std::iter::once(v)) {
                        stack.push((id(c, s + 1), false));
                    }
                }
            };
            if up {
                if !observed[node] {
                    push_parents(&mut stack);
                    push_children(&mut stack);
                }
            } else {
                if !observed[node] {
                    push_children(&mut stack);
                }
                if anc[node] {
                    push_parents(&mut stack);
                }
            }
        }
        false
    }
}

impl DiTester for PerfectOracle {
    fn kind(&self) -> TesterKind {
        TesterKind::Perfect
    }

    fn n_vars(&self) -> usize {
        self.truth.n_vars()
    }

    fn test(&self, i: usize, j: usize, cond: &VariableSet) -> Result<DiTestResult, TesterError> {
        validate(self.n_vars(), i, j, cond)?;
        let dep = self.dependent(i, j, cond);
        Ok(DiTestResult {
            statistic: if dep { f64::INFINITY } else { 0.0 },
            p_value: if dep { 0.0 } else { 1.0 },
            tester: TesterKind::Perfect,
            source: i,
            target: j,
            conditioning: cond.clone(),
        })
    }
}

pub fn di_perfect_oracle(truth: &DiGraph, i: usize, j: usize, cond: &VariableSet) -> Result<DiTestResult, TesterError> {
    PerfectOracle::new(truth.clone()).test(i, j, cond)
}

/// Builds a data-driven tester of the requested kind.
pub fn build_tester(kind: TesterKind, data: &PanelData) -> Option<Box<dyn DiTester + Send>> {
    match kind {
        TesterKind::Tester1 => Some(Box::new(Tester1::new(data))),
        TesterKind::Tester2 => Some(Box::new(Tester2::new(data))),
        TesterKind::Perfect => None,
    }
}

/// Clipped association `alpha - min(alpha, p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssocValue {
    pub value: f64,
    pub alpha: f64,
}

impl AssocValue {
    pub fn from_p(alpha: f64, p: f64) -> Self {
        AssocValue {
            value: alpha - alpha.min(p),
            alpha,
        }
    }

    pub fn zero(alpha: f64) -> Self {
        AssocValue { value: 0.0, alpha }
    }

    pub fn is_zero(&self) -> bool {
        self.value <= 0.0
    }
}

pub fn assoc(alpha: f64, result: &DiTestResult) -> AssocValue {
    AssocValue::from_p(alpha, result.p_value)
}

#[derive(Debug, Clone)]
pub struct MinAssoc {
    pub value: AssocValue,
    pub argmin: VariableSet,
    /// Every `(F, p)` evaluated, in evaluation order. Partial when the scan
    /// stopped early on a zero association.
    pub ledger: Vec<(VariableSet, f64)>,
}

/// `min_{F ⊆ pool, |F| <= max_subset} Assoc(i -> j; F)`, stopping at the first
/// subset whose p-value reaches `alpha`.
pub fn min_assoc(
    tester: &dyn DiTester,
    i: usize,
    j: usize,
    pool: &VariableSet,
    alpha: f64,
    max_subset: usize,
) -> Result<MinAssoc, QueryError> {
    let mut best: Option<(AssocValue, VariableSet)> = None;
    let mut ledger = Vec::new();
    for subset in pool.subsets_up_to(max_subset) {
        let res = tester.query(i, j, &subset)?;
        let a = assoc(alpha, &res);
        ledger.push((subset.clone(), res.p_value));
        if best.as_ref().is_none_or(|(b, _)| a.value < b.value) {
            best = Some((a, subset));
        }
        if a.is_zero() {
            break;
        }
    }
    let (value, argmin) = best.expect("the empty subset is always evaluated");
    Ok(MinAssoc { value, argmin, ledger })
}

/// Max-min association over candidates `i ∉ {j} ∪ cp ∪ excluded`.
///
/// Returns the maximizing candidate (lowest index on ties) and its value, or
/// `None` when every candidate has zero association.
pub fn mma_amma(
    tester: &dyn DiTester,
    j: usize,
    cp: &VariableSet,
    excluded: &VariableSet,
    alpha: f64,
    max_subset: usize,
) -> Result<(Option<usize>, AssocValue), QueryError> {
    let mut best: Option<(usize, AssocValue)> = None;
    for i in 0..tester.n_vars() {
        if i == j || cp.contains(i) || excluded.contains(i) {
            continue;
        }
        let ma = min_assoc(tester, i, j, cp, alpha, max_subset)?;
        if ma.value.is_zero() {
            continue;
        }
        if best.is_none_or(|(_, b)| ma.value.value > b.value) {
            best = Some((i, ma.value));
        }
    }
    Ok(match best {
        Some((i, v)) => (Some(i), v),
        None => (None, AssocValue::zero(alpha)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn chain3() -> DiGraph {
        DiGraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn oracle_examples() {
        let g = DiGraph::from_edges(2, &[(0, 1)]).unwrap();
        assert_eq!(di_perfect_oracle(&g, 0, 1, &VariableSet::empty()).unwrap().p_value, 0.0);
        let c = chain3();
        assert_eq!(di_perfect_oracle(&c, 0, 2, &VariableSet::new([1])).unwrap().p_value, 1.0);
        assert_eq!(di_perfect_oracle(&c, 0, 2, &VariableSet::empty()).unwrap().p_value, 0.0);
        // the child's past says nothing about the root
        assert_eq!(di_perfect_oracle(&c, 1, 0, &VariableSet::empty()).unwrap().p_value, 1.0);
        // nor does the grandchild about its parent, given the parent's own past
        assert_eq!(di_perfect_oracle(&c, 2, 1, &VariableSet::empty()).unwrap().p_value, 1.0);
    }

    #[test]
    fn oracle_collider_in_conditioning_set_opens_path() {
        // 0 -> 2 <- 1 and 1 -> 3: conditioning on 2 links 0 with 1, which drives 3
        let g = DiGraph::from_edges(4, &[(0, 2), (1, 2), (1, 3)]).unwrap();
        let o = PerfectOracle::new(g);
        assert!(!o.dependent(0, 3, &VariableSet::empty()));
        assert!(o.dependent(0, 3, &VariableSet::new([2])));
        assert!(!o.dependent(0, 3, &VariableSet::new([1, 2])));
    }

    #[test]
    fn oracle_rejects_bad_queries() {
        let o = PerfectOracle::new(chain3());
        assert!(matches!(o.test(1, 1, &VariableSet::empty()), Err(TesterError::InvalidQuery { .. })));
        assert!(matches!(o.test(0, 2, &VariableSet::new([0])), Err(TesterError::InvalidQuery { .. })));
    }

    #[test]
    fn assoc_examples() {
        assert_eq!(AssocValue::from_p(0.05, 0.05).value, 0.0);
        assert_eq!(AssocValue::from_p(0.05, 0.0).value, 0.05);
        assert_eq!(AssocValue::from_p(0.05, 0.2).value, 0.0);
    }

    #[test]
    fn min_assoc_examples() {
        let o = PerfectOracle::new(chain3());
        let r = min_assoc(&o, 0, 2, &VariableSet::empty(), 0.05, 3).unwrap();
        assert_eq!(r.ledger.len(), 1);

        let r = min_assoc(&o, 0, 2, &VariableSet::new([1]), 0.05, 3).unwrap();
        assert!(r.value.is_zero());
        assert_eq!(r.argmin, VariableSet::new([1]));

        // collider 0 -> 2 <- 1
        let o = PerfectOracle::new(DiGraph::from_edges(3, &[(0, 2), (1, 2)]).unwrap());
        let r = min_assoc(&o, 0, 2, &VariableSet::new([1]), 0.05, 3).unwrap();
        assert_eq!(r.value.value, 0.05);
        assert_eq!(r.ledger.len(), 2);
        assert!(r.ledger.iter().all(|(_, p)| *p == 0.0));
    }

    #[test]
    fn mma_examples() {
        let empty = PerfectOracle::new(DiGraph::new(4));
        let (best, v) = mma_amma(&empty, 2, &VariableSet::empty(), &VariableSet::empty(), 0.05, 3).unwrap();
        assert_eq!(best, None);
        assert!(v.is_zero());

        let g = PerfectOracle::new(DiGraph::from_edges(2, &[(0, 1)]).unwrap());
        let (best, v) = mma_amma(&g, 1, &VariableSet::empty(), &VariableSet::empty(), 0.05, 3).unwrap();
        assert_eq!(best, Some(0));
        assert_eq!(v.value, 0.05);

        // two parents 1 and 3 of node 2, both at alpha: lowest index wins
        let g = PerfectOracle::new(DiGraph::from_edges(4, &[(3, 2), (1, 2)]).unwrap());
        let (best, _) = mma_amma(&g, 2, &VariableSet::empty(), &VariableSet::empty(), 0.05, 3).unwrap();
        assert_eq!(best, Some(1));
        let (best, _) = mma_amma(&g, 2, &VariableSet::empty(), &VariableSet::new([1]), 0.05, 3).unwrap();
        assert_eq!(best, Some(3));
    }

    #[test]
    fn tester1_deterministic_parent() {
        // X1_{t+1} = X0_t exactly; X0 is an arbitrary deterministic sequence
        let t1 = 60;
        let mut vals = Vec::new();
        let mut x0 = Vec::new();
        for t in 0..t1 {
            x0.push(((t * 37 + 11) % 17) as f64 - 8.0 + (t as f64 * 0.3).sin());
        }
        for t in 0..t1 {
            let x1 = if t == 0 { 0.5 } else { x0[t - 1] };
            vals.push(x0[t]);
            vals.push(x1);
        }
        let d = PanelData::new(vals, 1, t1, 2).unwrap();
        let r = di_tester1(&d, 0, 1, &VariableSet::empty()).unwrap();
        assert!(r.p_value < 1e-12, "p = {}", r.p_value);
        assert!(r.statistic > 100.0);
    }

    #[test]
    fn tester1_no_improvement_gives_p_one() {
        // X0 is identically zero after centering: adding it changes nothing
        let vals: Vec<f64> = (0..40).flat_map(|t| [1.0, ((t * 7) % 5) as f64]).collect();
        let d = PanelData::new(vals, 1, 40, 2).unwrap();
        let r = di_tester1(&d, 0, 1, &VariableSet::empty()).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn tester1_insufficient_samples() {
        let d = PanelData::new(vec![0.1, 0.2, 0.3, 0.5, 0.8, 1.3, 2.1, 3.4], 1, 4, 2).unwrap();
        assert!(matches!(
            di_tester1(&d, 0, 1, &VariableSet::empty()),
            Err(TesterError::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn tester2_identical_residuals_give_p_one() {
        // X0 constant within each time step: its centered column is zero
        let (n, t1) = (12, 5);
        let mut vals = Vec::new();
        for r in 0..n {
            for t in 0..t1 {
                vals.push(t as f64);
                vals.push((((r * 31 + t * 17) % 11) as f64) * 0.37 + (r as f64).sin());
            }
        }
        let d = PanelData::new(vals, n, t1, 2).unwrap();
        let r = di_tester2(&d, 0, 1, &VariableSet::empty()).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn tester2_needs_replicates() {
        let d = PanelData::new(vec![0.0; 3 * 4 * 2], 3, 4, 2).unwrap();
        assert!(matches!(
            di_tester2(&d, 0, 1, &VariableSet::empty()),
            Err(TesterError::InsufficientReplicates { .. })
        ));
    }

    proptest! {
        #[test]
        fn assoc_is_monotone_in_p(a in 0.0f64..1.0, b in 0.0f64..1.0, alpha in 0.001f64..0.5) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(AssocValue::from_p(alpha, lo).value >= AssocValue::from_p(alpha, hi).value);
            let v = AssocValue::from_p(alpha, a).value;
            prop_assert!((0.0..=alpha).contains(&v));
            prop_assert_eq!(v == 0.0, a >= alpha);
        }

        #[test]
        fn tester1_statistic_nonnegative_on_near_collinear_data(
            noise in proptest::collection::vec(-1e-9f64..1e-9, 150),
            base in proptest::collection::vec(-1.0f64..1.0, 50)
        ) {
            // three variables, the third a near copy of the first
            let mut vals = Vec::new();
            for t in 0..50 {
                vals.push(base[t]);
                vals.push(base[(t + 7) % 50] + noise[t]);
                vals.push(base[t] + noise[50 + t]);
            }
            let d = PanelData::new(vals, 1, 50, 3).unwrap();
            let t = Tester1::new(&d);
            for (i, j) in [(0usize, 1usize), (2, 1), (1, 0), (2, 0)] {
                let r = t.test(i, j, &VariableSet::empty()).unwrap();
                prop_assert!(r.statistic >= 0.0 && (0.0..=1.0).contains(&r.p_value));
                let k = 3 - i - j;
                let r = t.test(i, j, &VariableSet::new([k])).unwrap();
                prop_assert!(r.statistic >= 0.0 && (0.0..=1.0).contains(&r.p_value));
            }
        }
    }
}
