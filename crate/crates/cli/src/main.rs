//! `mmpcp` command-line tool: benchmark generation, graph discovery,
//! evaluation and benchmark sweeps.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 infeasible.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use mmpcp::baselines::{gc_feasibility, modified_gc, modified_pc};
use mmpcp::bench::{evaluate, run_sweep, Algo, SweepConfig};
use mmpcp::data::load_panel;
use mmpcp::graph::DiGraph;
use mmpcp::mmpcp::{mmpc_p, trace_jsonl, HypothesisCount, MmpcpConfig};
use mmpcp::synth::{make_benchmark_suite, BenchmarkConfig};
use mmpcp::testers::{DiTester, PerfectOracle, Tester1, Tester2, TesterKind};

#[derive(Parser, Debug)]
#[command(name = "mmpcp", version, about = "Directed information graph learning with MMPC-p")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic AR(1) benchmark suite.
    Generate(GenerateArgs),
    /// Learn a graph from one panel CSV.
    Discover(DiscoverArgs),
    /// Compare an estimated graph with a truth graph; prints JSON.
    Eval(EvalArgs),
    /// Run algorithms x testers over a generated suite.
    Benchmark(BenchmarkArgs),
}

#[derive(Args, Debug, Serialize)]
struct GenerateArgs {
    /// Output directory.
    #[arg(long, default_value = "suite")]
    out: PathBuf,
    /// Comma-separated node counts.
    #[arg(long, value_delimiter = ',', default_value = "10,15,20,25,30,50")]
    nodes: Vec<usize>,
    /// Comma-separated edge densities in (0, 1].
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3")]
    density: Vec<f64>,
    /// Datasets per (nodes, density) cell.
    #[arg(long, default_value_t = 50)]
    datasets: usize,
    /// Replicate series per dataset.
    #[arg(long, default_value_t = 10)]
    series: usize,
    /// Time points per series.
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Noise standard deviation.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Discarded initial steps per series.
    #[arg(long, default_value_t = 100)]
    burn_in: usize,
    /// Lower bound of coefficient magnitudes.
    #[arg(long, default_value_t = 0.2)]
    coeff_min: f64,
    /// Upper bound of coefficient magnitudes.
    #[arg(long, default_value_t = 0.8)]
    coeff_max: f64,
    /// Off-diagonal part is divided by this times its spectral radius.
    #[arg(long, default_value_t = 1.1)]
    normalization: f64,
    /// Scale of the identity added to the coefficient matrix.
    #[arg(long, default_value_t = 0.25)]
    identity_scale: f64,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Args, Debug, Serialize)]
struct TestArgs {
    /// Significance level for every test.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// FDR level applied to MMPC-p p-values.
    #[arg(long, default_value_t = 0.05)]
    q: f64,
    /// Skip FDR selection and keep every surviving edge.
    #[arg(long)]
    no_fdr: bool,
    /// Largest conditioning subset (0 = unlimited).
    #[arg(long, default_value_t = 3)]
    max_subset: usize,
    /// Hypothesis count n for FDR: surviving edges or all m(m-1) pairs.
    #[arg(long, default_value = "surviving", value_parser = parse_hypotheses)]
    #[serde(serialize_with = "ser_hypotheses")]
    n_hypotheses: HypothesisCount,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Args, Debug, Serialize)]
struct DiscoverArgs {
    /// Long-format panel CSV: series_id,time,<variables...>.
    #[arg(long)]
    input: PathBuf,
    /// Graph JSON output.
    #[arg(long, default_value = "graph.json")]
    output: PathBuf,
    /// mmpcp, pc or gc.
    #[arg(long, default_value = "mmpcp")]
    #[serde(serialize_with = "ser_display")]
    algo: Algo,
    /// 1, 2 or perfect (perfect needs --truth).
    #[arg(long, default_value = "1")]
    #[serde(serialize_with = "ser_display")]
    tester: TesterKind,
    /// Truth graph for the perfect oracle.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    test: TestArgs,
    /// Also write a Graphviz file.
    #[arg(long)]
    dot: Option<PathBuf>,
    /// Also write the MMPC-p decision trace as JSON lines.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    estimated: PathBuf,
    #[arg(long)]
    truth: PathBuf,
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    /// Suite directory written by `generate`.
    #[arg(long, default_value = "suite")]
    suite: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "mmpcp,pc,gc")]
    algos: Vec<Algo>,
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    testers: Vec<TesterKind>,
    #[command(flatten)]
    test: TestArgs,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Also write per-figure CSVs under <out>/plots.
    #[arg(long)]
    emit_plot_data: bool,
}

fn parse_hypotheses(s: &str) -> Result<HypothesisCount, String> {
    match s {
        "surviving" => Ok(HypothesisCount::Surviving),
        "all-pairs" => Ok(HypothesisCount::AllPairs),
        other => Err(format!("expected `surviving` or `all-pairs`, got `{other}`")),
    }
}

fn ser_hypotheses<S: serde::Serializer>(h: &HypothesisCount, s: S) -> Result<S::Ok, S::Error> {
    h.serialize(s)
}

fn ser_display<T: Display, S: serde::Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

enum Failure {
    Usage(String),
    Data(String),
    Infeasible(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Infeasible(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Infeasible(m) => m,
        }
    }
}

fn data_err(path: &Path) -> impl FnOnce(String) -> Failure + '_ {
    move |e| Failure::Data(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Discover(a) => discover(a),
        Command::Eval(a) => eval(a),
        Command::Benchmark(a) => benchmark(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn check_levels(t: &TestArgs) -> Result<(), Failure> {
    if !(t.alpha > 0.0 && t.alpha < 1.0) {
        return Err(Failure::Usage(format!("--alpha must lie in (0, 1), got {}", t.alpha)));
    }
    if !t.no_fdr && !(t.q > 0.0 && t.q < 1.0) {
        return Err(Failure::Usage(format!("--q must lie in (0, 1), got {}", t.q)));
    }
    Ok(())
}

fn workers(n: usize) -> usize {
    if n > 0 {
        n
    } else {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    }
}

fn max_subset(n: usize) -> usize {
    if n == 0 {
        mmpcp::testers::UNLIMITED
    } else {
        n
    }
}

fn pool(n: usize) -> Result<(), Failure> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers(n))
        .build_global()
        .map_err(|e| Failure::Data(format!("worker pool: {e}")))
}

fn generate(a: GenerateArgs) -> Result<(), Failure> {
    let cfg = BenchmarkConfig {
        n_vars: a.nodes.clone(),
        densities: a.density.clone(),
        n_datasets: a.datasets,
        n_series: a.series,
        n_samples: a.samples,
        coeff_min: a.coeff_min,
        coeff_max: a.coeff_max,
        normalization: a.normalization,
        identity_scale: a.identity_scale,
        sigma: a.sigma,
        burn_in: a.burn_in,
        seed: a.seed,
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    pool(a.workers)?;
    let manifest = make_benchmark_suite(&cfg, &a.out).map_err(|e| Failure::Data(e.to_string()))?;
    eprintln!(
        "wrote {} datasets to {}",
        manifest.datasets.len(),
        a.out.display()
    );
    Ok(())
}

fn discover(a: DiscoverArgs) -> Result<(), Failure> {
    check_levels(&a.test)?;
    pool(a.test.workers)?;
    let data = load_panel(&a.input).map_err(|e| Failure::Data(e.to_string()))?;
    let tester: Box<dyn DiTester> = match a.tester {
        TesterKind::Tester1 => Box::new(Tester1::new(&data)),
        TesterKind::Tester2 => Box::new(Tester2::new(&data)),
        TesterKind::Perfect => {
            let path = a
                .truth
                .as_ref()
                .ok_or_else(|| Failure::Usage("--tester perfect requires --truth".into()))?;
            let truth = DiGraph::load(path).map_err(|e| data_err(path)(e.to_string()))?;
            if truth.n_vars() != data.n_vars() {
                return Err(data_err(path)(format!(
                    "truth has {} nodes, data has {} variables",
                    truth.n_vars(),
                    data.n_vars()
                )));
            }
            Box::new(PerfectOracle::new(truth))
        }
    };
    let q = (!a.test.no_fdr).then_some(a.test.q);
    let mut trace = None;
    let mut graph = match a.algo {
        Algo::Mmpcp => {
            let config = MmpcpConfig {
                alpha: a.test.alpha,
                max_subset: max_subset(a.test.max_subset),
                q,
                n_hypotheses: a.test.n_hypotheses,
            };
            let res = mmpc_p(tester.as_ref(), &config);
            if let Some((j, e)) = res.failures.first() {
                return Err(Failure::Data(format!(
                    "{}: discovery failed for target {}: {e}",
                    a.input.display(),
                    data.variable_names()[*j]
                )));
            }
            if let Some(fdr) = &res.fdr {
                eprintln!(
                    "FDR: beta* = {}, retained {} of {} edges",
                    fdr.beta_star,
                    fdr.retained,
                    res.graph.n_edges()
                );
            }
            trace = Some(trace_jsonl(res.trace()));
            res.graph
        }
        Algo::Pc => modified_pc(tester.as_ref(), a.test.alpha, max_subset(a.test.max_subset))
            .map_err(|e| Failure::Data(e.to_string()))?
            .graph,
        Algo::Gc => {
            if a.tester != TesterKind::Perfect {
                gc_feasibility(data.n_replicates() * data.n_transitions(), data.n_vars())
                    .map_err(|e| Failure::Infeasible(e.to_string()))?;
            }
            modified_gc(tester.as_ref(), a.test.alpha).map_err(|e| Failure::Data(e.to_string()))?
        }
    };
    graph.set_variables(data.variable_names().to_vec());

    let mut file = graph.to_file();
    file.config = Some(serde_json::to_value(&a).expect("config serializes"));
    let json = serde_json::to_string_pretty(&file).expect("graph serializes");
    write(&a.output, &json)?;
    if let Some(path) = &a.dot {
        write(path, &graph.to_dot())?;
    }
    if let Some(path) = &a.trace {
        match trace {
            Some(t) => write(path, &t)?,
            None => log::warn!("--trace is only produced by mmpcp"),
        }
    }
    eprintln!(
        "{} edges selected ({} variables)",
        graph.selected_edges().count(),
        graph.n_vars()
    );
    Ok(())
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| data_err(path)(e.to_string()))
}

fn eval(a: EvalArgs) -> Result<(), Failure> {
    let est = DiGraph::load(&a.estimated).map_err(|e| data_err(&a.estimated)(e.to_string()))?;
    let truth = DiGraph::load(&a.truth).map_err(|e| data_err(&a.truth)(e.to_string()))?;
    let r = evaluate(&est, &truth).map_err(|e| Failure::Data(e.to_string()))?;
    println!("{}", serde_json::to_string(&r).expect("result serializes"));
    Ok(())
}

fn benchmark(a: BenchmarkArgs) -> Result<(), Failure> {
    check_levels(&a.test)?;
    if a.algos.is_empty() || a.testers.is_empty() {
        return Err(Failure::Usage("--algos and --testers must be nonempty".into()));
    }
    let cfg = SweepConfig {
        algos: a.algos.clone(),
        testers: a.testers.clone(),
        alpha: a.test.alpha,
        q: (!a.test.no_fdr).then_some(a.test.q),
        max_subset: max_subset(a.test.max_subset),
        n_hypotheses: a.test.n_hypotheses,
        workers: workers(a.test.workers),
        emit_plot_data: a.emit_plot_data,
    };
    let out = run_sweep(&a.suite, &cfg, &a.out).map_err(|e| Failure::Data(e.to_string()))?;
    for s in &out.summary {
        let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
        eprintln!(
            "{:<6} tester {:<7} m={:<3} rho={:<4} ok={:<3} infeasible={:<3} omission={} commission={}",
            s.algo.label(),
            s.tester.label(),
            s.m,
            s.rho,
            s.n_ok,
            s.n_infeasible,
            fmt(s.omission_mean),
            fmt(s.commission_mean)
        );
    }
    if out.all_infeasible() {
        return Err(Failure::Infeasible("every run was infeasible".into()));
    }
    Ok(())
}
