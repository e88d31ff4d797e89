//! Monte-Carlo behaviour of the testers and algorithms on simulated AR(1) data.

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mmpcp::baselines::{modified_gc, modified_pc};
use mmpcp::graph::DiGraph;
use mmpcp::mmpcp::{mmpc_p, HypothesisCount, MmpcpConfig};
use mmpcp::synth::{dataset_seed, generate_dataset, simulate, ArModel, BenchmarkConfig};
use mmpcp::testers::{DiTester, Tester1, Tester2};
use mmpcp::{PanelData, VariableSet};

fn ar_data(phi: &[f64], m: usize, n: usize, t1: usize, seed: u64) -> PanelData {
    let model = ArModel {
        phi: DMatrix::from_row_slice(m, m, phi),
        noise_sd: 1.0,
        truth: DiGraph::new(m),
    };
    simulate(&model, n, t1, 100, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

const CHAIN2: [f64; 4] = [0.5, 0.0, 0.5, 0.5];

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    (v[v.len() / 2 - 1] + v[v.len() / 2]) / 2.0
}

#[test]
fn tester1_two_variable_chain() {
    let d = ar_data(&CHAIN2, 2, 10, 101, 3);
    let t = Tester1::new(&d);
    assert!(t.test(0, 1, &VariableSet::empty()).unwrap().p_value < 0.01);
    let reverse: Vec<f64> = (0..100)
        .map(|s| {
            let d = ar_data(&CHAIN2, 2, 10, 101, 100 + s);
            Tester1::new(&d).test(1, 0, &VariableSet::empty()).unwrap().p_value
        })
        .collect();
    let med = median(reverse);
    assert!((0.25..=0.75).contains(&med), "median null p-value {med}");
}

#[test]
fn tester2_two_variable_chain() {
    let d = ar_data(&CHAIN2, 2, 200, 6, 4);
    assert!(Tester2::new(&d).test(0, 1, &VariableSet::empty()).unwrap().p_value < 0.01);
}

#[test]
fn three_node_chain_is_screened_by_the_middle_node() {
    // 0 -> 1 -> 2 with self-feedback
    let phi = [0.4, 0.0, 0.0, 0.6, 0.4, 0.0, 0.0, 0.6, 0.4];
    let mut rejections_direct = 0;
    let mut rejections_screened = 0;
    for s in 0..100 {
        let d = ar_data(&phi, 3, 10, 101, 500 + s);
        let t = Tester1::new(&d);
        if t.test(0, 2, &VariableSet::empty()).unwrap().p_value <= 0.05 {
            rejections_direct += 1;
        }
        if t.test(0, 2, &VariableSet::new([1])).unwrap().p_value <= 0.05 {
            rejections_screened += 1;
        }
    }
    assert!(rejections_direct >= 90, "{rejections_direct}");
    assert!(rejections_screened <= 12, "{rejections_screened}");

    let d = ar_data(&phi, 3, 10, 101, 1);
    let cfg = MmpcpConfig {
        q: None,
        ..MmpcpConfig::default()
    };
    let res = mmpc_p(&Tester1::new(&d), &cfg);
    let truth = DiGraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
    assert!(res.graph.same_structure(&truth), "{:?}", res.graph);
}

#[test]
fn gc_false_positive_rate_near_alpha() {
    // four independent AR(1) processes: every one of the 12 ordered pairs is null
    let phi: Vec<f64> = (0..16).map(|k| if k % 5 == 0 { 0.5 } else { 0.0 }).collect();
    let mut fp = 0;
    let runs = 100;
    for s in 0..runs {
        let d = ar_data(&phi, 4, 10, 101, 900 + s);
        fp += modified_gc(&Tester1::new(&d), 0.05).unwrap().n_edges();
    }
    let rate = fp as f64 / (12 * runs) as f64;
    assert!((0.03..=0.07).contains(&rate), "false-positive rate {rate}");
}

#[test]
fn results_do_not_depend_on_pool_size() {
    let cfg = BenchmarkConfig::default();
    let ds = generate_dataset(15, 0.2, dataset_seed(5, 15, 0.2, 0), &cfg).unwrap();
    let t = Tester1::new(&ds.data);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let g = mmpc_p(&t, &MmpcpConfig::default()).graph;
            let pc = modified_pc(&t, 0.05, 3).unwrap();
            (g.to_json(), pc.graph.to_json(), pc.trace)
        })
    };
    assert_eq!(run(1), run(6));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn recorded_p_values_bound_the_ledger(seed in 0u64..100_000) {
        let cfg = BenchmarkConfig::default();
        let ds = generate_dataset(8, 0.3, seed, &cfg).unwrap();
        let t = Tester1::new(&ds.data);
        let res = mmpc_p(&t, &MmpcpConfig { q: None, n_hypotheses: HypothesisCount::Surviving, ..MmpcpConfig::default() });
        for state in res.states.iter().flatten() {
            let j = state.target;
            for (&y, &recorded) in &state.recorded {
                let seen: Vec<f64> = state.phase2_tests.iter().filter(|(v, _, _)| *v == y).map(|(_, _, p)| *p).collect();
                prop_assert!(!seen.is_empty());
                prop_assert!(seen.iter().all(|&p| p < 0.05 && p <= recorded));
                prop_assert_eq!(recorded, seen.iter().copied().fold(0.0, f64::max));
                prop_assert_eq!(res.graph.edge(y, j).unwrap().p_value, Some(recorded));
            }
        }
    }
}
