//! Comparison algorithms: modified Granger causality (full conditioning) and a
//! modified PC (prune-from-complete over current parents).

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{PanelData, VariableSet};
use crate::graph::DiGraph;
use crate::testers::{DiTester, QueryError, Tester1};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error(
        "GC cannot run because of the conditioning set being large: {m} variables need more than \
         {needed} stacked samples, have {available}"
    )]
    GcInfeasible {
        m: usize,
        needed: usize,
        available: usize,
    },
    #[error(transparent)]
    Query(#[from] QueryError),
}

/// Sample requirement for full-conditioning GC.
///
/// Each pairwise regression has `m + 1` columns (intercept and all m lagged
/// variables), and the m equations of the full VAR(1) together estimate
/// `m (m + 1)` coefficients. Both must be strictly below the `N·T - 1`
/// available stacked samples.
pub fn gc_feasibility(n_pairs: usize, m: usize) -> Result<(), BaselineError> {
    let available = n_pairs.saturating_sub(1);
    let needed = (m * (m + 1)).max(m + 1);
    if available > needed {
        Ok(())
    } else {
        Err(BaselineError::GcInfeasible { m, needed, available })
    }
}

/// Tests every ordered pair `(i, j)` conditioned on all other variables; keeps
/// the edge when `p <= alpha` and records the p-value on it.
pub fn modified_gc(tester: &dyn DiTester, alpha: f64) -> Result<DiGraph, BaselineError> {
    let m = tester.n_vars();
    let all = VariableSet::new(0..m);
    type Found = Vec<(usize, usize, f64)>;
    let rows: Vec<Result<Found, QueryError>> = (0..m)
        .into_par_iter()
        .map(|j| {
            let mut found = Vec::new();
            for i in (0..m).filter(|&i| i != j) {
                let cond = all.without(i).without(j);
                let p = tester.query(i, j, &cond)?.p_value;
                if p <= alpha {
                    found.push((i, j, p));
                }
            }
            Ok(found)
        })
        .collect();
    let mut g = DiGraph::new(m);
    for row in rows {
        for (i, j, p) in row? {
            g.add_edge_with_p(i, j, p).expect("valid pair");
        }
    }
    Ok(g)
}

/// Feasibility check followed by [`modified_gc`] with Tester 1.
pub fn modified_gc_on(data: &PanelData, alpha: f64) -> Result<DiGraph, BaselineError> {
    gc_feasibility(data.n_replicates() * data.n_transitions(), data.n_vars())?;
    let t = Tester1::new(data);
    let mut g = modified_gc(&t, alpha)?;
    g.set_variables(data.variable_names().to_vec());
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcEvent {
    pub level: usize,
    pub from: usize,
    pub to: usize,
    pub subset: Vec<usize>,
    pub p_value: f64,
    pub removed: bool,
}

#[derive(Debug, Clone)]
pub struct PcResult {
    pub graph: DiGraph,
    pub trace: Vec<PcEvent>,
}

/// Starts from the complete directed graph and, for conditioning sizes
/// `0..=max_cond`, tests each surviving edge `(i, j)` against every subset of
/// `j`'s other parents of that size. Parent sets are frozen at the start of each
/// level. An edge is dropped at the first `p > alpha`; survivors carry the
/// largest p-value seen.
pub fn modified_pc(tester: &dyn DiTester, alpha: f64, max_cond: usize) -> Result<PcResult, QueryError> {
    let m = tester.n_vars();
    let mut edges: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for i in 0..m {
        for j in 0..m {
            if i != j {
                edges.insert((i, j), 0.0);
            }
        }
    }
    let mut trace = Vec::new();
    let mut level = 0;
    while level <= max_cond {
        let mut parents: Vec<VariableSet> = vec![VariableSet::empty(); m];
        for &(i, j) in edges.keys() {
            parents[j] = parents[j].with(i);
        }
        let work: Vec<(usize, usize)> = edges
            .keys()
            .copied()
            .filter(|&(_, j)| parents[j].len() > level)
            .collect();
        if work.is_empty() {
            break;
        }
        let outcomes: Vec<Result<Vec<PcEvent>, QueryError>> = work
            .par_iter()
            .map(|&(i, j)| {
                let pool = parents[j].without(i);
                let mut events = Vec::new();
                for subset in pool.subsets_up_to(level).into_iter().filter(|s| s.len() == level) {
                    let p = tester.query(i, j, &subset)?.p_value;
                    let removed = p > alpha;
                    events.push(PcEvent {
                        level,
                        from: i,
                        to: j,
                        subset: subset.members().to_vec(),
                        p_value: p,
                        removed,
                    });
                    if removed {
                        break;
                    }
                }
                Ok(events)
            })
            .collect();
        for out in outcomes {
            for ev in out? {
                if ev.removed {
                    edges.remove(&(ev.from, ev.to));
                } else if let Some(maxp) = edges.get_mut(&(ev.from, ev.to)) {
                    *maxp = maxp.max(ev.p_value);
                }
                trace.push(ev);
            }
        }
        level += 1;
    }
    let mut graph = DiGraph::new(m);
    for (&(i, j), &p) in &edges {
        graph.add_edge_with_p(i, j, p).expect("valid pair");
    }
    Ok(PcResult { graph, trace })
}
