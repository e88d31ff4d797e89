//! Omission/commission metrics and the benchmark sweep harness.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{gc_feasibility, modified_gc, modified_pc, BaselineError};
use crate::data::load_panel;
use crate::graph::{DiGraph, GraphError};
use crate::mmpcp::{mmpc_p, HypothesisCount, MmpcpConfig};
use crate::synth::{cell_dir, SuiteManifest, SynthError};
use crate::testers::{DiTester, PerfectOracle, Tester1, Tester2, TesterKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub omission_rate: f64,
    pub commission_rate: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

/// Compares the selected edges of `estimated` against `truth` over all
/// `m (m - 1)` ordered pairs. Empty denominators give a rate of 0.
pub fn evaluate(estimated: &DiGraph, truth: &DiGraph) -> Result<EvalResult, GraphError> {
    let m = truth.n_vars();
    if estimated.n_vars() != m {
        return Err(GraphError::DimensionMismatch(estimated.n_vars(), m));
    }
    let est = estimated.selected();
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for i in 0..m {
        for j in (0..m).filter(|&j| j != i) {
            match (est.has_edge(i, j), truth.has_edge(i, j)) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => tn += 1,
            }
        }
    }
    let rate = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    Ok(EvalResult {
        omission_rate: rate(fn_, tp + fn_),
        commission_rate: rate(fp, fp + tn),
        tp,
        fp,
        fn_,
        tn,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Mmpcp,
    Pc,
    Gc,
}

impl Algo {
    pub fn label(self) -> &'static str {
        match self {
            Algo::Mmpcp => "mmpcp",
            Algo::Pc => "pc",
            Algo::Gc => "gc",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Algo {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mmpcp" | "mmpc-p" | "mmpc_p" => Ok(Algo::Mmpcp),
            "pc" => Ok(Algo::Pc),
            "gc" => Ok(Algo::Gc),
            other => Err(format!("unknown algorithm `{other}` (expected mmpcp, pc or gc)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Ok,
    Infeasible,
    Error,
}

impl RowStatus {
    pub fn label(self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::Infeasible => "infeasible",
            RowStatus::Error => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub algo: Algo,
    pub tester: TesterKind,
    pub m: usize,
    pub rho: f64,
    pub dataset_index: usize,
    pub alpha: f64,
    pub q: Option<f64>,
    pub omission: Option<f64>,
    pub commission: Option<f64>,
    pub runtime_seconds: f64,
    pub status: RowStatus,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub algos: Vec<Algo>,
    pub testers: Vec<TesterKind>,
    pub alpha: f64,
    /// FDR level for MMPC-p; `None` keeps every surviving edge.
    pub q: Option<f64>,
    pub max_subset: usize,
    pub n_hypotheses: HypothesisCount,
    pub workers: usize,
    pub emit_plot_data: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            algos: vec![Algo::Mmpcp, Algo::Pc, Algo::Gc],
            testers: vec![TesterKind::Tester1, TesterKind::Tester2],
            alpha: 0.05,
            q: Some(0.05),
            max_subset: 3,
            n_hypotheses: HypothesisCount::Surviving,
            workers: 1,
            emit_plot_data: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Suite(#[from] SynthError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
    #[error("invalid sweep config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algo: Algo,
    pub tester: TesterKind,
    pub m: usize,
    pub rho: f64,
    pub n_ok: usize,
    pub n_infeasible: usize,
    pub n_error: usize,
    pub omission_mean: Option<f64>,
    pub omission_stderr: Option<f64>,
    pub commission_mean: Option<f64>,
    pub commission_stderr: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SummaryRow>,
}

impl SweepOutput {
    pub fn cell(&self, algo: Algo, tester: TesterKind, m: usize, rho: f64) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|s| s.algo == algo && s.tester == tester && s.m == m && s.rho == rho)
    }

    pub fn all_infeasible(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.status == RowStatus::Infeasible)
    }
}

/// Runs one algorithm on one dataset. Returns the estimated graph or the
/// non-ok status with a message.
pub fn run_algorithm(
    algo: Algo,
    tester: &dyn DiTester,
    n_pairs: usize,
    cfg: &SweepConfig,
) -> Result<DiGraph, (RowStatus, String)> {
    let m = tester.n_vars();
    match algo {
        Algo::Mmpcp => {
            let config = MmpcpConfig {
                alpha: cfg.alpha,
                max_subset: cfg.max_subset,
                q: cfg.q,
                n_hypotheses: cfg.n_hypotheses,
            };
            let res = mmpc_p(tester, &config);
            if let Some((j, e)) = res.failures.first() {
                return Err((
                    RowStatus::Error,
                    format!("{} of {m} targets failed; target {j}: {e}", res.failures.len()),
                ));
            }
            Ok(res.graph)
        }
        Algo::Pc => modified_pc(tester, cfg.alpha, cfg.max_subset)
            .map(|r| r.graph)
            .map_err(|e| (RowStatus::Error, e.to_string())),
        Algo::Gc => {
            if tester.kind() != TesterKind::Perfect {
                if let Err(e) = gc_feasibility(n_pairs, m) {
                    return Err((RowStatus::Infeasible, e.to_string()));
                }
            }
            modified_gc(tester, cfg.alpha).map_err(|e| match e {
                e @ BaselineError::GcInfeasible { .. } => (RowStatus::Infeasible, e.to_string()),
                e => (RowStatus::Error, e.to_string()),
            })
        }
    }
}

struct Job<'a> {
    algo: Algo,
    tester: TesterKind,
    entry: &'a crate::synth::ManifestEntry,
}

fn graph_rel_path(algo: Algo, tester: TesterKind, m: usize, rho: f64, k: usize) -> String {
    format!("graphs/{}_t{}/{}/{}.json", algo, tester.label(), cell_dir(m, rho), k)
}

/// Runs every requested (algorithm, tester) pair on every dataset of the suite
/// using a pool of `cfg.workers` threads, and writes to `out`:
///
/// - `results.csv`: one row per run, without runtimes;
/// - `timings.csv`: runtimes, kept apart so the other outputs are reproducible byte for byte;
/// - `summary.csv`: mean and standard error per (algo, tester, m, rho);
/// - `graphs/<algo>_t<tester>/<m>_<rho>/<k>.json` for each ok run;
/// - `sweep.json`: the config;
/// - `plots/*.csv` when `cfg.emit_plot_data` is set.
///
/// GC has no tester choice and always runs with Tester 1 (or the perfect oracle
/// if that is the only tester requested).
pub fn run_sweep(suite: &Path, cfg: &SweepConfig, out: &Path) -> Result<SweepOutput, BenchError> {
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(BenchError::Config(format!("alpha must lie in (0, 1), got {}", cfg.alpha)));
    }
    if let Some(q) = cfg.q.filter(|q| !(*q > 0.0 && *q < 1.0)) {
        return Err(BenchError::Config(format!("q must lie in (0, 1), got {q}")));
    }
    if cfg.workers == 0 {
        return Err(BenchError::Config("workers must be at least 1".into()));
    }
    let manifest = SuiteManifest::load(suite)?;

    let mut jobs = Vec::new();
    for entry in &manifest.datasets {
        for &algo in &cfg.algos {
            if algo == Algo::Gc {
                if let Some(t) = gc_tester(&cfg.testers) {
                    jobs.push(Job { algo, tester: t, entry });
                }
                continue;
            }
            for &tester in &cfg.testers {
                jobs.push(Job { algo, tester, entry });
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build()?;
    let results: Vec<Result<(SweepRow, Option<DiGraph>), BenchError>> =
        pool.install(|| jobs.par_iter().map(|job| run_job(suite, job, cfg)).collect());

    let mut rows = Vec::with_capacity(results.len());
    let mut graphs = Vec::new();
    for r in results {
        let (row, g) = r?;
        if let Some(g) = g {
            graphs.push((graph_rel_path(row.algo, row.tester, row.m, row.rho, row.dataset_index), g));
        }
        rows.push(row);
    }
    rows.sort_by(|a, b| {
        (a.algo, a.tester.label(), a.m, a.dataset_index)
            .cmp(&(b.algo, b.tester.label(), b.m, b.dataset_index))
            .then(a.rho.total_cmp(&b.rho))
    });
    let summary = summarize(&rows);

    mkdir(out)?;
    write_file(&out.join("results.csv"), &results_csv(&rows))?;
    write_file(&out.join("timings.csv"), &timings_csv(&rows))?;
    write_file(&out.join("summary.csv"), &summary_csv(&summary))?;
    let echo = serde_json::json!({ "sweep": cfg, "suite": suite.display().to_string(), "benchmark": manifest.config });
    write_file(&out.join("sweep.json"), &serde_json::to_string_pretty(&echo).expect("config serializes"))?;
    for (rel, g) in &graphs {
        let path = out.join(rel);
        mkdir(path.parent().expect("graph path has a parent"))?;
        write_file(&path, &g.to_json())?;
    }
    if cfg.emit_plot_data {
        write_plot_data(&out.join("plots"), &summary)?;
    }
    Ok(SweepOutput { rows, summary })
}

fn gc_tester(testers: &[TesterKind]) -> Option<TesterKind> {
    if testers.is_empty() {
        None
    } else if testers.iter().all(|&t| t == TesterKind::Perfect) {
        Some(TesterKind::Perfect)
    } else {
        Some(TesterKind::Tester1)
    }
}

fn run_job(suite: &Path, job: &Job<'_>, cfg: &SweepConfig) -> Result<(SweepRow, Option<DiGraph>), BenchError> {
    let e = job.entry;
    let dir = suite.join(&e.dir);
    let mut row = SweepRow {
        algo: job.algo,
        tester: job.tester,
        m: e.m,
        rho: e.rho,
        dataset_index: e.index,
        alpha: cfg.alpha,
        q: if job.algo == Algo::Mmpcp { cfg.q } else { None },
        omission: None,
        commission: None,
        runtime_seconds: 0.0,
        status: RowStatus::Error,
        message: String::new(),
    };
    let loaded = load_panel(&dir.join("data.csv"))
        .map_err(|err| err.to_string())
        .and_then(|d| DiGraph::load(&dir.join("truth.json")).map(|t| (d, t)).map_err(|err| err.to_string()));
    let (data, truth) = match loaded {
        Ok(x) => x,
        Err(msg) => {
            row.message = msg;
            return Ok((row, None));
        }
    };
    let start = Instant::now();
    let tester: Box<dyn DiTester> = match job.tester {
        TesterKind::Tester1 => Box::new(Tester1::new(&data)),
        TesterKind::Tester2 => Box::new(Tester2::new(&data)),
        TesterKind::Perfect => Box::new(PerfectOracle::new(truth.clone())),
    };
    let outcome = run_algorithm(job.algo, tester.as_ref(), data.n_replicates() * data.n_transitions(), cfg);
    row.runtime_seconds = start.elapsed().as_secs_f64();
    match outcome {
        Ok(mut g) => {
            g.set_variables(data.variable_names().to_vec());
            match evaluate(&g, &truth) {
                Ok(ev) => {
                    row.omission = Some(ev.omission_rate);
                    row.commission = Some(ev.commission_rate);
                    row.status = RowStatus::Ok;
                    Ok((row, Some(g)))
                }
                Err(err) => {
                    row.message = err.to_string();
                    Ok((row, None))
                }
            }
        }
        Err((status, msg)) => {
            row.status = status;
            row.message = msg;
            Ok((row, None))
        }
    }
}

fn mean_stderr(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (Some(mean), None);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some((var / n).sqrt()))
}

/// Per-(algo, tester, m, rho) aggregation over ok rows, in first-seen row order.
pub fn summarize(rows: &[SweepRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(Algo, TesterKind, usize, f64)> = Vec::new();
    for r in rows {
        let k = (r.algo, r.tester, r.m, r.rho);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(algo, tester, m, rho)| {
            let cell: Vec<&SweepRow> = rows
                .iter()
                .filter(|r| r.algo == algo && r.tester == tester && r.m == m && r.rho == rho)
                .collect();
            let count = |s: RowStatus| cell.iter().filter(|r| r.status == s).count();
            let om: Vec<f64> = cell.iter().filter_map(|r| r.omission).collect();
            let cm: Vec<f64> = cell.iter().filter_map(|r| r.commission).collect();
            let (omission_mean, omission_stderr) = mean_stderr(&om);
            let (commission_mean, commission_stderr) = mean_stderr(&cm);
            SummaryRow {
                algo,
                tester,
                m,
                rho,
                n_ok: count(RowStatus::Ok),
                n_infeasible: count(RowStatus::Infeasible),
                n_error: count(RowStatus::Error),
                omission_mean,
                omission_stderr,
                commission_mean,
                commission_stderr,
            }
        })
        .collect()
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn results_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("algo,tester,m,rho,dataset_index,alpha,q,omission,commission,status,message\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.algo,
            r.tester.label(),
            r.m,
            r.rho,
            r.dataset_index,
            r.alpha,
            opt(r.q),
            opt(r.omission),
            opt(r.commission),
            r.status.label(),
            csv_field(&r.message)
        ));
    }
    s
}

fn timings_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("algo,tester,m,rho,dataset_index,runtime_seconds\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.algo,
            r.tester.label(),
            r.m,
            r.rho,
            r.dataset_index,
            r.runtime_seconds
        ));
    }
    s
}

fn summary_csv(summary: &[SummaryRow]) -> String {
    let mut s = String::from(
        "algo,tester,m,rho,n_ok,n_infeasible,n_error,omission_mean,omission_stderr,commission_mean,commission_stderr\n",
    );
    for r in summary {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.algo,
            r.tester.label(),
            r.m,
            r.rho,
            r.n_ok,
            r.n_infeasible,
            r.n_error,
            opt(r.omission_mean),
            opt(r.omission_stderr),
            opt(r.commission_mean),
            opt(r.commission_stderr)
        ));
    }
    s
}

/// One CSV per figure: error against m, one curve per algorithm, one panel per
/// density. Figures 3 and 4 take GC from its Tester 1 rows. `fig5_largest_m.csv`
/// holds every algorithm and tester at the largest m in the suite.
fn write_plot_data(dir: &Path, summary: &[SummaryRow]) -> Result<(), BenchError> {
    mkdir(dir)?;
    let figures = [
        ("fig1_commission_tester1.csv", TesterKind::Tester1, false),
        ("fig2_omission_tester1.csv", TesterKind::Tester1, true),
        ("fig3_commission_tester2.csv", TesterKind::Tester2, false),
        ("fig4_omission_tester2.csv", TesterKind::Tester2, true),
    ];
    let pick = |r: &SummaryRow, omission: bool| {
        if omission {
            (r.omission_mean, r.omission_stderr)
        } else {
            (r.commission_mean, r.commission_stderr)
        }
    };
    for (name, tester, omission) in figures {
        let mut s = String::from("rho,m,algo,mean,stderr,n_ok,n_infeasible\n");
        let mut sel: Vec<&SummaryRow> = summary
            .iter()
            .filter(|r| r.tester == tester || (r.algo == Algo::Gc && r.tester == TesterKind::Tester1))
            .collect();
        sel.sort_by(|a, b| a.rho.total_cmp(&b.rho).then((a.m, a.algo).cmp(&(b.m, b.algo))));
        for r in sel {
            let (mean, se) = pick(r, omission);
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.rho,
                r.m,
                r.algo,
                opt(mean),
                opt(se),
                r.n_ok,
                r.n_infeasible
            ));
        }
        write_file(&dir.join(name), &s)?;
    }
    let mut s = String::from("rho,tester,algo,metric,mean,stderr,n_ok,n_infeasible\n");
    if let Some(max_m) = summary.iter().map(|r| r.m).max() {
        let mut sel: Vec<&SummaryRow> = summary.iter().filter(|r| r.m == max_m).collect();
        sel.sort_by(|a, b| a.rho.total_cmp(&b.rho).then((a.tester.label(), a.algo).cmp(&(b.tester.label(), b.algo))));
        for r in sel {
            for (metric, omission) in [("commission", false), ("omission", true)] {
                let (mean, se) = pick(r, omission);
                s.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    r.rho,
                    r.tester.label(),
                    r.algo,
                    metric,
                    opt(mean),
                    opt(se),
                    r.n_ok,
                    r.n_infeasible
                ));
            }
        }
    }
    write_file(&dir.join("fig5_largest_m.csv"), &s)
}

fn mkdir(dir: &Path) -> Result<(), BenchError> {
    fs::create_dir_all(dir).map_err(|source| BenchError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), BenchError> {
    fs::File::create(path)
        .and_then(|mut f| f.write_all(contents.as_bytes()))
        .map_err(|source| BenchError::Io {
            path: path.to_path_buf(),
            source,
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_graphs_have_zero_error() {
        let g = DiGraph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        let r = evaluate(&g, &g).unwrap();
        assert_eq!((r.omission_rate, r.commission_rate), (0.0, 0.0));
        assert_eq!(r.tp + r.fp + r.fn_ + r.tn, 12);
    }

    #[test]
    fn misses_two_adds_four() {
        let truth_edges: Vec<(usize, usize)> = (0..10).map(|k| (k, (k + 1) % 10)).collect();
        let truth = DiGraph::from_edges(10, &truth_edges).unwrap();
        let mut est_edges = truth_edges[2..].to_vec();
        est_edges.extend([(0, 5), (5, 0), (3, 8), (8, 3)]);
        let est = DiGraph::from_edges(10, &est_edges).unwrap();
        let r = evaluate(&est, &truth).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_, r.tn), (8, 4, 2, 76));
        assert!((r.omission_rate - 0.2).abs() < 1e-15);
        assert!((r.commission_rate - 0.05).abs() < 1e-15);
    }

    #[test]
    fn empty_estimate_and_rejected_edges() {
        let truth = DiGraph::from_edges(3, &[(0, 1)]).unwrap();
        let r = evaluate(&DiGraph::new(3), &truth).unwrap();
        assert_eq!((r.omission_rate, r.commission_rate), (1.0, 0.0));
        let mut est = DiGraph::from_edges(3, &[(0, 1), (2, 1)]).unwrap();
        est.edge_mut(2, 1).unwrap().retained = Some(false);
        let r = evaluate(&est, &truth).unwrap();
        assert_eq!((r.fp, r.tp), (0, 1));
        assert!(evaluate(&DiGraph::new(4), &truth).is_err());
        let r = evaluate(&truth, &DiGraph::new(3)).unwrap();
        assert_eq!(r.omission_rate, 0.0);
    }

    #[test]
    fn summary_matches_brute_force() {
        let mk = |k: usize, om: Option<f64>, status| SweepRow {
            algo: Algo::Pc,
            tester: TesterKind::Tester1,
            m: 10,
            rho: 0.1,
            dataset_index: k,
            alpha: 0.05,
            q: None,
            omission: om,
            commission: om.map(|x| x / 2.0),
            runtime_seconds: 0.0,
            status,
            message: String::new(),
        };
        let rows = vec![
            mk(0, Some(0.1), RowStatus::Ok),
            mk(1, Some(0.3), RowStatus::Ok),
            mk(2, None, RowStatus::Infeasible),
        ];
        let s = summarize(&rows);
        assert_eq!(s.len(), 1);
        assert_eq!((s[0].n_ok, s[0].n_infeasible), (2, 1));
        assert!((s[0].omission_mean.unwrap() - 0.2).abs() < 1e-15);
        // sd of {0.1, 0.3} is sqrt(0.02); stderr divides by sqrt(2)
        assert!((s[0].omission_stderr.unwrap() - 0.1).abs() < 1e-12);
    }
}
