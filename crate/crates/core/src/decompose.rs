//! Network decomposition by greedy modularity agglomeration (Newman's fast
//! algorithm), plus ingestion of hand-made partitions.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde_json::Value;
use thiserror::Error;

use crate::network::TrafficScenario;

#[derive(Debug, Error)]
pub enum DecomposeError {
    #[error("junction graph has no edges")]
    NoEdges,
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed partition file: {0}")]
    Parse(String),
    #[error("invalid partition: {0}")]
    Validation(String),
}

/// Undirected, unweighted junction adjacency. Nodes are junction indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JunctionGraph {
    adjacency: Vec<BTreeSet<usize>>,
    edges: Vec<(usize, usize)>,
}

impl JunctionGraph {
    /// Builds a graph on `n` nodes; self-loops are dropped and parallel edges merged.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut adjacency = vec![BTreeSet::new(); n];
        for (a, b) in edges {
            if a != b {
                adjacency[a].insert(b);
                adjacency[b].insert(a);
            }
        }
        let edges = adjacency
            .iter()
            .enumerate()
            .flat_map(|(a, nbrs)| nbrs.iter().filter(move |&&b| a < b).map(move |&b| (a, b)))
            .collect();
        JunctionGraph { adjacency, edges }
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[v].iter().copied()
    }
}

pub fn build_junction_graph(scenario: &TrafficScenario) -> Result<JunctionGraph, DecomposeError> {
    let edges: Vec<(usize, usize)> = scenario
        .links
        .iter()
        .filter_map(|l| Some((scenario.junction_index(&l.from)?, scenario.junction_index(&l.to)?)))
        .collect();
    let graph = JunctionGraph::from_edges(scenario.junctions.len(), edges);
    if graph.edge_count() == 0 {
        return Err(DecomposeError::NoEdges);
    }
    Ok(graph)
}

/// Assignment of junctions to sub-networks.
///
/// Group labels are canonical: numbered by first appearance in junction order.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    groups: Vec<usize>,
    count: usize,
    modularity: f64,
}

impl Partition {
    /// Canonicalizes arbitrary labels. Modularity is left at 0 until
    /// [`Partition::with_modularity`] is applied.
    pub fn from_groups(labels: Vec<usize>) -> Result<Self, DecomposeError> {
        if labels.is_empty() {
            return Err(DecomposeError::Validation("partition covers no junctions".into()));
        }
        let mut remap = BTreeMap::new();
        let groups = labels
            .iter()
            .map(|l| {
                let next = remap.len();
                *remap.entry(*l).or_insert(next)
            })
            .collect();
        Ok(Partition {
            groups,
            count: remap.len(),
            modularity: 0.0,
        })
    }

    pub fn single(n: usize) -> Self {
        Partition {
            groups: vec![0; n],
            count: 1,
            modularity: 0.0,
        }
    }

    pub fn with_modularity(mut self, graph: &JunctionGraph) -> Self {
        self.modularity = modularity(graph, &self.groups);
        self
    }

    pub fn group_count(&self) -> usize {
        self.count
    }

    pub fn junction_count(&self) -> usize {
        self.groups.len()
    }

    pub fn group_of(&self, junction: usize) -> usize {
        self.groups[junction]
    }

    pub fn groups(&self) -> &[usize] {
        &self.groups
    }

    pub fn modularity(&self) -> f64 {
        self.modularity
    }

    /// Junction indices of group `i`, ascending.
    pub fn members(&self, i: usize) -> Vec<usize> {
        (0..self.groups.len()).filter(|&j| self.groups[j] == i).collect()
    }

    /// JSON object mapping junction id to group index.
    pub fn to_json(&self, scenario: &TrafficScenario) -> String {
        let map: BTreeMap<&str, usize> = scenario
            .junctions
            .iter()
            .zip(&self.groups)
            .map(|(j, &g)| (j.id.as_str(), g))
            .collect();
        serde_json::to_string_pretty(&map).expect("partition serializes")
    }
}

/// Newman–Girvan modularity `Q = Σ_i (e_ii − a_i²)`. Returns 0 on an edgeless graph.
pub fn modularity(graph: &JunctionGraph, groups: &[usize]) -> f64 {
    let m = graph.edge_count();
    if m == 0 {
        return 0.0;
    }
    let k = groups.iter().copied().max().map_or(0, |g| g + 1);
    let mut inside = vec![0usize; k];
    let mut degree = vec![0usize; k];
    for &(a, b) in graph.edges() {
        if groups[a] == groups[b] {
            inside[groups[a]] += 1;
        }
    }
    for (v, &g) in groups.iter().enumerate() {
        degree[g] += graph.degree(v);
    }
    let m = m as f64;
    inside
        .iter()
        .zip(&degree)
        .map(|(&e, &d)| {
            let a = d as f64 / (2.0 * m);
            e as f64 / m - a * a
        })
        .sum()
}

/// Greedy agglomerative modularity maximization.
///
/// Starts from singletons and repeatedly merges the connected pair with the
/// largest modularity gain (ties go to the lowest `(i, j)` pair), returning the
/// best state seen. All comparisons use exact integer arithmetic scaled by `4M²`.
pub fn newman_fast(graph: &JunctionGraph) -> Result<Partition, DecomposeError> {
    let n = graph.node_count();
    let m = graph.edge_count() as i128;
    if m == 0 {
        return Err(DecomposeError::NoEdges);
    }

    // between[i][j]: edges joining communities i and j
    let mut between = vec![vec![0i128; n]; n];
    for &(a, b) in graph.edges() {
        between[a][b] += 1;
        between[b][a] += 1;
    }
    let mut degree: Vec<i128> = (0..n).map(|v| graph.degree(v) as i128).collect();
    let mut active = vec![true; n];
    let mut label: Vec<usize> = (0..n).collect();

    // q_scaled = 4M² · Q
    let mut q_scaled: i128 = degree.iter().map(|d| -d * d).sum();
    let mut best_q = q_scaled;
    let mut best_labels = label.clone();

    loop {
        let mut best: Option<(i128, usize, usize)> = None;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in i + 1..n {
                if !active[j] || between[i][j] == 0 {
                    continue;
                }
                let gain = 2 * m * between[i][j] - degree[i] * degree[j];
                if best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, i, j));
                }
            }
        }
        let Some((gain, i, j)) = best else { break };

        for k in 0..n {
            if k != i && k != j {
                between[i][k] += between[j][k];
                between[k][i] = between[i][k];
            }
            between[j][k] = 0;
            between[k][j] = 0;
        }
        between[i][i] = 0;
        degree[i] += degree[j];
        active[j] = false;
        for l in label.iter_mut() {
            if *l == j {
                *l = i;
            }
        }
        q_scaled += 2 * gain;
        if q_scaled > best_q {
            best_q = q_scaled;
            best_labels.clone_from(&label);
        }
    }
    Ok(Partition::from_groups(best_labels)?.with_modularity(graph))
}

/// Reads a `{junction_id: group_label}` JSON object. Labels may be strings or numbers.
pub fn load_partition(
    path: impl AsRef<Path>,
    scenario: &TrafficScenario,
) -> Result<Partition, DecomposeError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| DecomposeError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_partition(&text, scenario)
}

pub fn parse_partition(text: &str, scenario: &TrafficScenario) -> Result<Partition, DecomposeError> {
    let value: Value = serde_json::from_str(text).map_err(|e| DecomposeError::Parse(e.to_string()))?;
    let Value::Object(map) = value else {
        return Err(DecomposeError::Parse("expected a JSON object".into()));
    };
    let mut labels: Vec<Option<String>> = vec![None; scenario.junctions.len()];
    for (id, label) in &map {
        let idx = scenario
            .junction_index(id)
            .ok_or_else(|| DecomposeError::Validation(format!("unknown junction {id}")))?;
        let label = match label {
            Value::String(s) => s.clone(),
            Value::Number(n) => n.to_string(),
            other => {
                return Err(DecomposeError::Parse(format!(
                    "junction {id}: group label must be a string or number, got {other}"
                )))
            }
        };
        labels[idx] = Some(label);
    }
    if let Some(k) = labels.iter().position(Option::is_none) {
        return Err(DecomposeError::Validation(format!(
            "junction {} is not assigned to a group",
            scenario.junctions[k].id
        )));
    }
    let mut ids: BTreeMap<String, usize> = BTreeMap::new();
    let raw: Vec<usize> = labels
        .into_iter()
        .map(|l| {
            let next = ids.len();
            *ids.entry(l.expect("checked above")).or_insert(next)
        })
        .collect();
    let partition = Partition::from_groups(raw)?;
    Ok(match build_junction_graph(scenario) {
        Ok(graph) => partition.with_modularity(&graph),
        Err(_) => partition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn barbell() -> JunctionGraph {
        JunctionGraph::from_edges(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)])
    }

    #[test]
    fn parallel_links_collapse() {
        let g = JunctionGraph::from_edges(2, [(0, 1), (1, 0), (0, 1), (1, 1)]);
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn one_group_has_zero_modularity() {
        assert_eq!(modularity(&barbell(), &[0; 6]), 0.0);
    }

    #[test]
    fn barbell_split_modularity() {
        let q = modularity(&barbell(), &[0, 0, 0, 1, 1, 1]);
        assert!((q - 5.0 / 14.0).abs() < 1e-15);
    }

    #[test]
    fn pair_split_modularity() {
        let g = JunctionGraph::from_edges(2, [(0, 1)]);
        assert!((modularity(&g, &[0, 1]) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn relabeling_groups_keeps_modularity() {
        let a = modularity(&barbell(), &[0, 0, 1, 1, 2, 2]);
        let b = modularity(&barbell(), &[2, 2, 0, 0, 1, 1]);
        assert_eq!(a, b);
    }

    #[test]
    fn newman_splits_barbell() {
        let p = newman_fast(&barbell()).unwrap();
        assert_eq!(p.groups(), &[0, 0, 0, 1, 1, 1]);
        assert!((p.modularity() - 5.0 / 14.0).abs() < 1e-12);
    }

    #[test]
    fn newman_keeps_a_pair_together() {
        let p = newman_fast(&JunctionGraph::from_edges(2, [(0, 1)])).unwrap();
        assert_eq!(p.group_count(), 1);
        assert_eq!(p.modularity(), 0.0);
    }

    #[test]
    fn newman_rejects_edgeless_graph() {
        assert!(matches!(
            newman_fast(&JunctionGraph::from_edges(3, [])),
            Err(DecomposeError::NoEdges)
        ));
    }

    #[test]
    fn canonical_labels() {
        let p = Partition::from_groups(vec![7, 3, 7, 9]).unwrap();
        assert_eq!(p.groups(), &[0, 1, 0, 2]);
        assert_eq!(p.group_count(), 3);
        assert_eq!(p.members(0), vec![0, 2]);
    }
}
