//! Synthetic AR(1) benchmark generation.
//!
//! A benchmark dataset is a random directed graph that contains a Hamiltonian
//! cycle, an AR(1) coefficient matrix supported on that graph plus a scaled
//! identity, and a Gaussian simulation of the resulting process split into
//! independent replicate series.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::{DataError, PanelData};
use crate::graph::{DiGraph, GraphError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("density {rho} is outside (0, 1]")]
    DensityTooLow { rho: f64 },
    #[error("a directed cycle through all nodes needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("invalid benchmark config: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("{0}")]
    Mismatch(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SynthError + '_ {
    move |source| SynthError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub n_vars: Vec<usize>,
    pub densities: Vec<f64>,
    pub n_datasets: usize,
    pub n_series: usize,
    /// Time points per series.
    pub n_samples: usize,
    pub coeff_min: f64,
    pub coeff_max: f64,
    /// The off-diagonal matrix is divided by `normalization * spectral_radius`.
    pub normalization: f64,
    /// Scale `c` of the identity added after normalization.
    pub identity_scale: f64,
    pub sigma: f64,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            n_vars: vec![10, 15, 20, 25, 30, 50],
            densities: vec![0.1, 0.2, 0.3],
            n_datasets: 50,
            n_series: 10,
            n_samples: 100,
            coeff_min: 0.2,
            coeff_max: 0.8,
            normalization: 1.1,
            identity_scale: 0.25,
            sigma: 1.0,
            burn_in: 100,
            seed: 0,
        }
    }
}

impl BenchmarkConfig {
    pub fn total_samples(&self) -> usize {
        self.n_series * self.n_samples
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |s: &str| Err(SynthError::InvalidConfig(s.to_string()));
        if self.n_vars.is_empty() || self.densities.is_empty() {
            return bad("need at least one node count and one density");
        }
        if let Some(&m) = self.n_vars.iter().find(|&&m| m < 2) {
            return Err(SynthError::TooFewNodes(m));
        }
        if let Some(&rho) = self.densities.iter().find(|&&r| !(r > 0.0 && r <= 1.0)) {
            return Err(SynthError::DensityTooLow { rho });
        }
        if self.n_series == 0 || self.n_samples < 2 {
            return bad("need n_series >= 1 and n_samples >= 2");
        }
        if !(0.0 < self.coeff_min && self.coeff_min <= self.coeff_max) {
            return bad("coefficient range must satisfy 0 < min <= max");
        }
        if !(self.normalization >= 1.0 && (0.0..1.0).contains(&self.identity_scale)) {
            return bad("need normalization >= 1 and identity scale in [0, 1)");
        }
        if self.sigma.is_nan() || self.sigma <= 0.0 {
            return bad("sigma must be positive");
        }
        Ok(())
    }
}

/// `max(m, ceil(rho * m * (m - 1)))`: the edge target, never below the cycle length.
pub fn target_edge_count(m: usize, rho: f64) -> usize {
    let slots = (m * m.saturating_sub(1)) as f64;
    let want = (rho * slots - 1e-9).ceil().max(0.0) as usize;
    want.max(m).min(m * m.saturating_sub(1))
}

/// Random directed graph with a Hamiltonian cycle and `target_edge_count(m, rho)`
/// edges. Returns the graph and the cycle (node order).
pub fn random_cyclic_digraph<R: Rng + ?Sized>(
    m: usize,
    rho: f64,
    rng: &mut R,
) -> Result<(DiGraph, Vec<usize>), SynthError> {
    if m < 2 {
        return Err(SynthError::TooFewNodes(m));
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(SynthError::DensityTooLow { rho });
    }
    let mut cycle: Vec<usize> = (0..m).collect();
    cycle.shuffle(rng);
    let mut g = DiGraph::new(m);
    for k in 0..m {
        g.add_edge(cycle[k], cycle[(k + 1) % m])?;
    }
    let mut rest: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j && !g.has_edge(i, j))
        .collect();
    rest.shuffle(rng);
    let extra = target_edge_count(m, rho) - g.n_edges();
    for &(i, j) in rest.iter().take(extra) {
        g.add_edge(i, j)?;
    }
    Ok((g, cycle))
}

/// Checks that `cycle` visits every node once and that each step is an edge.
pub fn is_hamiltonian_cycle(g: &DiGraph, cycle: &[usize]) -> bool {
    let m = g.n_vars();
    if cycle.len() != m {
        return false;
    }
    let mut seen = vec![false; m];
    for &v in cycle {
        if v >= m || std::mem::replace(&mut seen[v], true) {
            return false;
        }
    }
    (0..m).all(|k| g.has_edge(cycle[k], cycle[(k + 1) % m]))
}

/// AR(1) model `X_{t+1} = phi X_t + noise`. `phi[(i, j)]` is the effect of `j`
/// on `i`, so its off-diagonal support is the transpose of the graph's edges.
#[derive(Debug, Clone)]
pub struct ArModel {
    pub phi: DMatrix<f64>,
    pub noise_sd: f64,
    pub truth: DiGraph,
}

impl ArModel {
    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.phi)
    }
}

/// Largest eigenvalue modulus: from the real Schur form up to 64 x 64, via
/// normalized repeated squaring (Gelfand's formula) above that.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    if n <= 64 {
        if let Some(schur) = a.clone().try_schur(1e-14, 10_000) {
            return schur
                .complex_eigenvalues()
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
        }
    }
    gelfand_radius(a)
}

fn gelfand_radius(a: &DMatrix<f64>) -> f64 {
    let mut b = a.clone();
    let mut log_scale = 0.0f64;
    let mut power = 1.0f64;
    let mut estimate = f64::NAN;
    for _ in 0..60 {
        let norm = b.norm();
        if norm == 0.0 {
            return 0.0;
        }
        b /= norm;
        log_scale += norm.ln() / power;
        let next = log_scale.exp();
        if (next - estimate).abs() <= 1e-8 * next {
            return next;
        }
        estimate = next;
        b = &b * &b;
        power *= 2.0;
    }
    estimate
}

fn is_acyclic(g: &DiGraph) -> bool {
    let m = g.n_vars();
    let mut indeg: Vec<usize> = (0..m).map(|v| g.parents(v).len()).collect();
    let mut stack: Vec<usize> = (0..m).filter(|&v| indeg[v] == 0).collect();
    let mut seen = 0;
    while let Some(v) = stack.pop() {
        seen += 1;
        for c in g.children(v) {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                stack.push(c);
            }
        }
    }
    seen == m
}

/// Draws coefficients uniformly from `±[min, max]`, divides by
/// `normalization * spectral radius`, adds `identity_scale * I`, then shrinks
/// the off-diagonal part by 0.9 until the spectral radius is at most 0.98.
///
/// An acyclic graph has a nilpotent coefficient matrix (radius 0) and is left
/// unnormalized.
pub fn ar_from_graph<R: Rng + ?Sized>(truth: &DiGraph, cfg: &BenchmarkConfig, rng: &mut R) -> ArModel {
    let m = truth.n_vars();
    let mut off = DMatrix::zeros(m, m);
    for ((j, i), _) in truth.edges() {
        let mag = rng.random_range(cfg.coeff_min..=cfg.coeff_max);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        off[(i, j)] = sign * mag;
    }
    if !is_acyclic(truth) {
        let r = spectral_radius(&off);
        if r > 0.0 {
            off /= cfg.normalization * r;
        }
    }
    let ident = DMatrix::<f64>::identity(m, m) * cfg.identity_scale;
    let mut phi = &off + &ident;
    while spectral_radius(&phi) > 0.98 {
        off *= 0.9;
        phi = &off + &ident;
    }
    ArModel {
        phi,
        noise_sd: cfg.sigma,
        truth: truth.clone(),
    }
}

/// Simulates `n_series` independent replicates of `n_samples` time points each.
/// Every replicate starts at zero and discards its first `burn_in` steps.
pub fn simulate<R: Rng + ?Sized>(
    model: &ArModel,
    n_series: usize,
    n_samples: usize,
    burn_in: usize,
    rng: &mut R,
) -> Result<PanelData, DataError> {
    let m = model.phi.nrows();
    let mut values = Vec::with_capacity(n_series * n_samples * m);
    let mut x = vec![0.0; m];
    let mut next = vec![0.0; m];
    for _ in 0..n_series {
        x.iter_mut().for_each(|v| *v = 0.0);
        for step in 0..burn_in + n_samples {
            if step > 0 {
                for (i, slot) in next.iter_mut().enumerate() {
                    let s: f64 = model.phi.row(i).iter().zip(&x).map(|(a, b)| a * b).sum();
                    let z: f64 = StandardNormal.sample(rng);
                    *slot = s + model.noise_sd * z;
                }
                std::mem::swap(&mut x, &mut next);
            }
            if step >= burn_in {
                values.extend_from_slice(&x);
            }
        }
    }
    let mut data = PanelData::new(values, n_series, n_samples, m)?;
    if model.truth.n_vars() == m {
        data = PanelData::with_labels(
            data.values().to_vec(),
            n_series,
            n_samples,
            model.truth.variables().to_vec(),
            data.series_ids().to_vec(),
            data.times().to_vec(),
        )?;
    }
    Ok(data)
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of dataset `index` in cell `(m, rho)`; independent of generation order.
pub fn dataset_seed(master: u64, m: usize, rho: f64, index: usize) -> u64 {
    let mut s = mix(master);
    s = mix(s ^ m as u64);
    s = mix(s ^ rho.to_bits());
    mix(s ^ index as u64)
}

#[derive(Debug, Clone)]
pub struct GeneratedDataset {
    pub truth: DiGraph,
    pub cycle: Vec<usize>,
    pub model: ArModel,
    pub data: PanelData,
}

/// Graph, model and data for one dataset, all drawn from one stream seeded by `seed`.
pub fn generate_dataset(m: usize, rho: f64, seed: u64, cfg: &BenchmarkConfig) -> Result<GeneratedDataset, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (truth, cycle) = random_cyclic_digraph(m, rho, &mut rng)?;
    let model = ar_from_graph(&truth, cfg, &mut rng);
    let data = simulate(&model, cfg.n_series, cfg.n_samples, cfg.burn_in, &mut rng)?;
    Ok(GeneratedDataset {
        truth,
        cycle,
        model,
        data,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub m: usize,
    pub rho: f64,
    pub index: usize,
    pub seed: u64,
    /// Relative to the suite root.
    pub dir: String,
    pub data_sha256: String,
    pub truth_sha256: String,
    pub cycle: Vec<usize>,
    pub spectral_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteManifest {
    pub config: BenchmarkConfig,
    pub datasets: Vec<ManifestEntry>,
}

impl SuiteManifest {
    pub fn load(suite: &Path) -> Result<Self, SynthError> {
        let path = suite.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn cell_dir(m: usize, rho: f64) -> String {
    format!("{m}_{rho}")
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn render(ds: &GeneratedDataset) -> Result<(Vec<u8>, Vec<u8>), SynthError> {
    let mut csv = Vec::new();
    ds.data.write_csv(&mut csv).map_err(|e| SynthError::Mismatch(e.to_string()))?;
    let truth = ds.truth.to_json().into_bytes();
    Ok((csv, truth))
}

/// Writes `<out>/<m>_<rho>/<k>/{data.csv,truth.json}` for every cell and
/// dataset, plus `<out>/manifest.json` with seeds and content hashes.
/// Datasets are generated in parallel on the current rayon pool.
pub fn make_benchmark_suite(cfg: &BenchmarkConfig, out: &Path) -> Result<SuiteManifest, SynthError> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for &m in &cfg.n_vars {
        for &rho in &cfg.densities {
            for k in 0..cfg.n_datasets {
                jobs.push((m, rho, k));
            }
        }
    }
    let entries: Vec<Result<ManifestEntry, SynthError>> = jobs
        .par_iter()
        .map(|&(m, rho, k)| {
            let seed = dataset_seed(cfg.seed, m, rho, k);
            let ds = generate_dataset(m, rho, seed, cfg)?;
            let (csv, truth) = render(&ds)?;
            let rel = format!("{}/{}", cell_dir(m, rho), k);
            let dir = out.join(&rel);
            std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            let p = dir.join("data.csv");
            std::fs::write(&p, &csv).map_err(io_err(&p))?;
            let p = dir.join("truth.json");
            std::fs::write(&p, &truth).map_err(io_err(&p))?;
            Ok(ManifestEntry {
                m,
                rho,
                index: k,
                seed,
                dir: rel,
                data_sha256: sha256_hex(&csv),
                truth_sha256: sha256_hex(&truth),
                cycle: ds.cycle.clone(),
                spectral_radius: ds.model.spectral_radius(),
            })
        })
        .collect();
    let manifest = SuiteManifest {
        config: cfg.clone(),
        datasets: entries.into_iter().collect::<Result<_, _>>()?,
    };
    let p = out.join("manifest.json");
    std::fs::write(&p, serde_json::to_string_pretty(&manifest)?).map_err(io_err(&p))?;
    Ok(manifest)
}

/// Regenerates every dataset from its recorded seed and compares content hashes
/// with both the manifest and the files on disk.
pub fn verify_suite(suite: &Path) -> Result<SuiteManifest, SynthError> {
    let manifest = SuiteManifest::load(suite)?;
    for e in &manifest.datasets {
        let ds = generate_dataset(e.m, e.rho, e.seed, &manifest.config)?;
        let (csv, truth) = render(&ds)?;
        if sha256_hex(&csv) != e.data_sha256 || sha256_hex(&truth) != e.truth_sha256 {
            return Err(SynthError::Mismatch(format!("{}: regenerated content differs", e.dir)));
        }
        let on_disk = std::fs::read(suite.join(&e.dir).join("data.csv")).map_err(io_err(suite))?;
        if sha256_hex(&on_disk) != e.data_sha256 {
            return Err(SynthError::Mismatch(format!("{}: data.csv was modified", e.dir)));
        }
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_counts() {
        assert_eq!(target_edge_count(10, 0.1), 10);
        assert_eq!(target_edge_count(10, 0.3), 27);
        assert_eq!(target_edge_count(50, 0.1), 245);
        assert_eq!(target_edge_count(20, 0.1), 38);
    }

    #[test]
    fn cyclic_graph_has_cycle_and_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (m, rho) in [(10, 0.1), (10, 0.3), (50, 0.1), (2, 1.0)] {
            let (g, cycle) = random_cyclic_digraph(m, rho, &mut rng).unwrap();
            assert_eq!(g.n_edges(), target_edge_count(m, rho));
            assert!(is_hamiltonian_cycle(&g, &cycle));
        }
        assert!(matches!(
            random_cyclic_digraph(1, 0.5, &mut rng),
            Err(SynthError::TooFewNodes(1))
        ));
        assert!(matches!(
            random_cyclic_digraph(5, 0.0, &mut rng),
            Err(SynthError::DensityTooLow { .. })
        ));
    }

    #[test]
    fn spectral_radius_of_rotation_and_large_matrix() {
        // rotation by 90 degrees scaled by 0.7: eigenvalues ±0.7i
        let r = DMatrix::from_row_slice(2, 2, &[0.0, -0.7, 0.7, 0.0]);
        assert!((spectral_radius(&r) - 0.7).abs() < 1e-12);
        assert!((gelfand_radius(&r) - 0.7).abs() < 1e-6);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = DMatrix::from_fn(30, 30, |_, _| rng.random::<f64>() - 0.5);
        assert!((spectral_radius(&a) - gelfand_radius(&a)).abs() < 1e-5 * spectral_radius(&a));
    }

    #[test]
    fn empty_graph_model_is_scaled_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = DiGraph::new(4);
        let model = ar_from_graph(&g, &BenchmarkConfig::default(), &mut rng);
        assert_eq!(model.phi, DMatrix::identity(4, 4) * 0.25);
        assert!((model.spectral_radius() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn single_edge_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = DiGraph::from_edges(2, &[(0, 1)]).unwrap();
        let model = ar_from_graph(&g, &BenchmarkConfig::default(), &mut rng);
        assert!(model.spectral_radius() <= 0.98);
        assert!(model.phi[(1, 0)].abs() >= 0.2 * 0.8 / (1.1 * 0.8));
        assert_eq!(model.phi[(0, 1)], 0.0);
    }

    #[test]
    fn models_are_stable_with_exact_support() {
        let cfg = BenchmarkConfig::default();
        for seed in 0..30 {
            let m = [5, 10, 20][seed % 3];
            let rho = [0.1, 0.2, 0.3][(seed / 3) % 3];
            let ds = generate_dataset(m, rho, seed as u64, &BenchmarkConfig { n_series: 1, n_samples: 2, ..cfg.clone() })
                .unwrap();
            assert!(ds.model.spectral_radius() <= 0.98);
            for i in 0..m {
                assert_eq!(ds.model.phi[(i, i)], 0.25);
                for j in 0..m {
                    if i != j {
                        assert_eq!(ds.model.phi[(i, j)] != 0.0, ds.truth.has_edge(j, i));
                    }
                }
            }
        }
    }

    #[test]
    fn simulation_shapes_and_autocorrelation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = ArModel {
            phi: DMatrix::from_element(1, 1, 0.5),
            noise_sd: 1.0,
            truth: DiGraph::new(1),
        };
        let d = simulate(&model, 10, 1001, 100, &mut rng).unwrap();
        assert_eq!((d.n_replicates(), d.n_timesteps()), (10, 1001));
        let mut num = 0.0;
        let mut den = 0.0;
        for n in 0..10 {
            for t in 0..1000 {
                num += d.get(n, t, 0) * d.get(n, t + 1, 0);
                den += d.get(n, t, 0) * d.get(n, t, 0);
            }
        }
        assert!((num / den - 0.5).abs() < 0.05);

        let zero = ArModel {
            phi: DMatrix::zeros(1, 1),
            noise_sd: 1.0,
            truth: DiGraph::new(1),
        };
        let d = simulate(&zero, 10, 1001, 0, &mut rng).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for n in 0..10 {
            for t in 0..1000 {
                num += d.get(n, t, 0) * d.get(n, t + 1, 0);
                den += d.get(n, t, 0) * d.get(n, t, 0);
            }
        }
        assert!((num / den).abs() < 0.05);
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let a = dataset_seed(7, 10, 0.1, 0);
        assert_eq!(a, dataset_seed(7, 10, 0.1, 0));
        assert_ne!(a, dataset_seed(7, 10, 0.1, 1));
        assert_ne!(a, dataset_seed(7, 10, 0.2, 0));
        assert_ne!(a, dataset_seed(8, 10, 0.1, 0));
    }
}
