//! Directed graph over m process nodes, with optional per-edge p-values.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("edge ({from}, {to}) out of range for {n_vars} nodes")]
    OutOfRange { from: usize, to: usize, n_vars: usize },
    #[error("graphs have different sizes ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EdgeAttr {
    pub p_value: Option<f64>,
    pub retained: Option<bool>,
}

/// Directed graph with no self-loops. Edge `(i, j)` reads "i drives j".
#[derive(Debug, Clone, PartialEq)]
pub struct DiGraph {
    n_vars: usize,
    variables: Vec<String>,
    edges: BTreeMap<(usize, usize), EdgeAttr>,
}

impl DiGraph {
    pub fn new(n_vars: usize) -> Self {
        DiGraph {
            n_vars,
            variables: (0..n_vars).map(|i| format!("X{i}")).collect(),
            edges: BTreeMap::new(),
        }
    }

    pub fn with_variables(variables: Vec<String>) -> Self {
        DiGraph {
            n_vars: variables.len(),
            variables,
            edges: BTreeMap::new(),
        }
    }

    pub fn from_edges(n_vars: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut g = DiGraph::new(n_vars);
        for &(i, j) in edges {
            g.add_edge(i, j)?;
        }
        Ok(g)
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn set_variables(&mut self, names: Vec<String>) {
        assert_eq!(names.len(), self.n_vars, "variable name count");
        self.variables = names;
    }

    pub fn add_edge(&mut self, from: usize, to: usize) -> Result<&mut EdgeAttr, GraphError> {
        self.check(from, to)?;
        Ok(self.edges.entry((from, to)).or_default())
    }

    pub fn add_edge_with_p(&mut self, from: usize, to: usize, p: f64) -> Result<(), GraphError> {
        self.add_edge(from, to)?.p_value = Some(p);
        Ok(())
    }

    fn check(&self, from: usize, to: usize) -> Result<(), GraphError> {
        if from >= self.n_vars || to >= self.n_vars {
            return Err(GraphError::OutOfRange {
                from,
                to,
                n_vars: self.n_vars,
            });
        }
        if from == to {
            return Err(GraphError::SelfLoop(from));
        }
        Ok(())
    }

    pub fn remove_edge(&mut self, from: usize, to: usize) -> Option<EdgeAttr> {
        self.edges.remove(&(from, to))
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges.contains_key(&(from, to))
    }

    pub fn edge(&self, from: usize, to: usize) -> Option<&EdgeAttr> {
        self.edges.get(&(from, to))
    }

    pub fn edge_mut(&mut self, from: usize, to: usize) -> Option<&mut EdgeAttr> {
        self.edges.get_mut(&(from, to))
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Edges in lexicographic (from, to) order.
    pub fn edges(&self) -> impl Iterator<Item = ((usize, usize), &EdgeAttr)> {
        self.edges.iter().map(|(&k, v)| (k, v))
    }

    /// Edges not explicitly rejected by a selection step.
    pub fn selected_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges
            .iter()
            .filter(|(_, a)| a.retained != Some(false))
            .map(|(&k, _)| k)
    }

    /// Copy containing only the selected edges.
    pub fn selected(&self) -> DiGraph {
        let mut g = self.clone();
        g.edges.retain(|_, a| a.retained != Some(false));
        g
    }

    pub fn parents(&self, to: usize) -> Vec<usize> {
        self.edges.keys().filter(|&&(_, j)| j == to).map(|&(i, _)| i).collect()
    }

    pub fn children(&self, from: usize) -> Vec<usize> {
        self.edges
            .range((from, 0)..(from + 1, 0))
            .map(|(&(_, j), _)| j)
            .collect()
    }

    pub fn same_structure(&self, other: &DiGraph) -> bool {
        self.n_vars == other.n_vars && self.edges.keys().eq(other.edges.keys())
    }

    pub fn to_file(&self) -> GraphFile {
        GraphFile {
            n_vars: self.n_vars,
            variables: self.variables.clone(),
            edges: self
                .edges
                .iter()
                .map(|(&(from, to), a)| EdgeRecord {
                    from,
                    to,
                    p_value: a.p_value,
                    retained: a.retained.unwrap_or(true),
                })
                .collect(),
            config: None,
        }
    }

    pub fn from_file(file: &GraphFile) -> Result<Self, GraphError> {
        let variables = if file.variables.is_empty() {
            (0..file.n_vars).map(|i| format!("X{i}")).collect()
        } else if file.variables.len() != file.n_vars {
            return Err(GraphError::DimensionMismatch(file.variables.len(), file.n_vars));
        } else {
            file.variables.clone()
        };
        let mut g = DiGraph::with_variables(variables);
        for e in &file.edges {
            let attr = g.add_edge(e.from, e.to)?;
            attr.p_value = e.p_value;
            attr.retained = Some(e.retained);
        }
        Ok(g)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let file: GraphFile = serde_json::from_str(text)?;
        Self::from_file(&file)
    }

    pub fn load(path: &Path) -> Result<Self, GraphError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), GraphError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    /// Graphviz rendering; edges carry their p-value as label and rejected
    /// edges are dashed.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph di_graph {\n");
        for (i, name) in self.variables.iter().enumerate() {
            let _ = writeln!(out, "  n{i} [label=\"{}\"];", name.replace('"', "\\\""));
        }
        for (&(i, j), a) in &self.edges {
            let mut attrs = Vec::new();
            if let Some(p) = a.p_value {
                attrs.push(format!("label=\"{p:.3e}\""));
            }
            if a.retained == Some(false) {
                attrs.push("style=dashed".to_string());
            }
            if attrs.is_empty() {
                let _ = writeln!(out, "  n{i} -> n{j};");
            } else {
                let _ = writeln!(out, "  n{i} -> n{j} [{}];", attrs.join(", "));
            }
        }
        out.push_str("}\n");
        out
    }
}

/// On-disk graph schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphFile {
    pub n_vars: usize,
    #[serde(default)]
    pub variables: Vec<String>,
    pub edges: Vec<EdgeRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub from: usize,
    pub to: usize,
    #[serde(default)]
    pub p_value: Option<f64>,
    #[serde(default = "yes")]
    pub retained: bool,
}

fn yes() -> bool {
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_self_loops_and_out_of_range() {
        let mut g = DiGraph::new(3);
        assert!(matches!(g.add_edge(1, 1), Err(GraphError::SelfLoop(1))));
        assert!(matches!(g.add_edge(0, 3), Err(GraphError::OutOfRange { .. })));
    }

    #[test]
    fn json_round_trip_keeps_p_values_and_flags() {
        let mut g = DiGraph::new(3);
        g.add_edge_with_p(0, 1, 0.003).unwrap();
        g.add_edge(1, 2).unwrap().retained = Some(false);
        let back = DiGraph::from_json(&g.to_json()).unwrap();
        assert_eq!(back.edge(0, 1).unwrap().p_value, Some(0.003));
        assert_eq!(back.edge(1, 2).unwrap().retained, Some(false));
        assert_eq!(back.selected_edges().collect::<Vec<_>>(), vec![(0, 1)]);
        let text = g.to_json();
        assert!(text.contains("\"from\": 0") && text.contains("\"retained\": false"));
    }

    #[test]
    fn parents_and_children() {
        let g = DiGraph::from_edges(4, &[(0, 2), (1, 2), (2, 3)]).unwrap();
        assert_eq!(g.parents(2), vec![0, 1]);
        assert_eq!(g.children(2), vec![3]);
        assert!(g.to_dot().contains("n2 -> n3;"));
    }
}
