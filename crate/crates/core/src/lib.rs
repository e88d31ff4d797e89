//! Directed-information (Granger causal) graph learning for panel time series.
//!
//! The crate is organised bottom-up:
//!
//! * [`data`] holds panel datasets and their long-CSV ingestion.
//! * [`stats`] provides the least-squares, covariance and chi-square kernels.
//! * [`testers`] implements the DI testing oracles and the association measures.
//! * [`graph`] is the directed graph shared by every algorithm.
//! * [`mmpcp`] is the two-phase MMPC-p search with p-value ledgers and FDR selection.
//! * [`baselines`] holds the modified GC and modified PC comparison algorithms.
//! * [`synth`] generates the synthetic AR(1) benchmark suites.
//! * [`bench`] scores estimated graphs and runs algorithm sweeps over a suite.

pub mod baselines;
pub mod bench;
pub mod data;
pub mod graph;
pub mod mmpcp;
pub mod stats;
pub mod synth;
pub mod testers;

pub use data::{PanelData, VariableSet};
pub use graph::DiGraph;
pub use testers::{DiTestResult, DiTester, TesterKind};
