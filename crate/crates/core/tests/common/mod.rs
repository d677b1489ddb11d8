//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use scso::network::{Direction, Entrance, Junction, JunctionKind, RoadLink, TrafficScenario, TurnRates};
use scso::plan::SignalPlan;

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

/// One crossroad `J1` with an entrance and an exit on every side. Entrance
/// ids are `EN`, `EE`, `ES`, `EW` in that order; `rates` is per approach
/// (N, E, S, W) as (left, through, right).
pub fn one_crossroad(
    free_speed: f64,
    length: f64,
    rates: [(f64, f64, f64); 4],
    demands: [f64; 4],
) -> TrafficScenario {
    let sides = [Direction::N, Direction::E, Direction::S, Direction::W];
    let mut turn_rates = BTreeMap::new();
    for (d, (l, t, r)) in sides.iter().zip(rates) {
        turn_rates.insert(
            *d,
            TurnRates {
                left: Some(l),
                through: Some(t),
                right: Some(r),
            },
        );
    }
    let mut links = Vec::new();
    let mut entrances = Vec::new();
    for (d, demand) in sides.iter().zip(demands) {
        let id = format!("E{d:?}");
        links.push(RoadLink {
            from: id.clone(),
            to: "J1".into(),
            length_m: length,
            approach_dir: *d,
        });
        links.push(RoadLink {
            from: "J1".into(),
            to: id.clone(),
            length_m: length,
            approach_dir: d.opposite(),
        });
        entrances.push(Entrance { id, demand_vph: demand });
    }
    TrafficScenario::new(TrafficScenario {
        name: "one-crossroad".into(),
        free_speed_mps: free_speed,
        topology_approximate: false,
        junctions: vec![Junction {
            id: "J1".into(),
            kind: JunctionKind::Crossroad,
            approaches: sides.to_vec(),
            turn_rates,
        }],
        links,
        entrances,
    })
    .expect("fixture is valid")
}

/// Modularity straight from its definition: for every group, the fraction of
/// edges inside it minus the squared fraction of edge ends attached to it.
pub fn modularity_oracle(n: usize, edges: &[(usize, usize)], groups: &[usize]) -> f64 {
    let m = edges.len() as f64;
    let mut degree = vec![0usize; n];
    for &(a, b) in edges {
        degree[a] += 1;
        degree[b] += 1;
    }
    let count = groups.iter().max().map_or(0, |g| g + 1);
    let mut q = 0.0;
    for g in 0..count {
        let inside = edges
            .iter()
            .filter(|&&(a, b)| groups[a] == g && groups[b] == g)
            .count() as f64;
        let ends: usize = (0..n).filter(|&v| groups[v] == g).map(|v| degree[v]).sum();
        q += inside / m - (ends as f64 / (2.0 * m)).powi(2);
    }
    q
}

/// Best modularity over every set partition of `n` nodes (restricted growth strings).
pub fn best_modularity_exhaustive(n: usize, edges: &[(usize, usize)]) -> f64 {
    let mut labels = vec![0usize; n];
    let mut best = f64::NEG_INFINITY;
    fn rec(i: usize, max: usize, labels: &mut [usize], n: usize, edges: &[(usize, usize)], best: &mut f64) {
        if i == n {
            *best = best.max(modularity_oracle(n, edges, labels));
            return;
        }
        for g in 0..=max + 1 {
            labels[i] = g;
            rec(i + 1, max.max(g), labels, n, edges, best);
        }
    }
    if n == 0 {
        return 0.0;
    }
    labels[0] = 0;
    rec(1, 0, &mut labels, n, edges, &mut best);
    best
}

/// Two-sided rank-sum p-value by listing every way to pick `a.len()` of the
/// pooled observations. Midranks are computed from counts of smaller and equal values.
pub fn ranksum_p_bruteforce(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let total = pooled.len();
    let ranks: Vec<f64> = pooled
        .iter()
        .map(|&v| {
            let less = pooled.iter().filter(|&&w| w < v).count() as f64;
            let equal = pooled.iter().filter(|&&w| w == v).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect();
    let n = a.len();
    let expected = n as f64 * (total as f64 + 1.0) / 2.0;
    let observed: f64 = ranks[..n].iter().sum();
    let dev = (observed - expected).abs();
    let mut extreme = 0u64;
    let mut all = 0u64;
    for mask in 0u32..(1 << total) {
        if mask.count_ones() as usize != n {
            continue;
        }
        let w: f64 = (0..total).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        all += 1;
        if (w - expected).abs() >= dev - 1e-9 {
            extreme += 1;
        }
    }
    extreme as f64 / all as f64
}

/// `(1/|H|) Σ (h − μ)(h − μ)ᵀ` as nested loops over plain vectors.
pub fn covariance_oracle(points: &[Vec<f64>], mean: &[f64]) -> Vec<Vec<f64>> {
    let n = mean.len();
    let mut out = vec![vec![0.0; n]; n];
    for p in points {
        for i in 0..n {
            for j in 0..n {
                out[i][j] += (p[i] - mean[i]) * (p[j] - mean[j]);
            }
        }
    }
    for row in &mut out {
        for v in row.iter_mut() {
            *v /= points.len() as f64;
        }
    }
    out
}

/// Separable convex objective with every phase's optimum at 30 s.
pub fn separable_mock(plan: &SignalPlan) -> f64 {
    plan.0.iter().map(|&x| (x as f64 - 30.0).powi(2)).sum()
}

/// `4M²·Q` in exact integers: Σ over groups of `4M·inside − ends²`.
pub fn scaled_modularity(n: usize, edges: &[(usize, usize)], groups: &[usize]) -> i64 {
    let m = edges.len() as i64;
    let mut degree = vec![0i64; n];
    for &(a, b) in edges {
        degree[a] += 1;
        degree[b] += 1;
    }
    let mut labels: Vec<usize> = groups.to_vec();
    labels.sort_unstable();
    labels.dedup();
    labels
        .iter()
        .map(|&g| {
            let inside = edges.iter().filter(|&&(a, b)| groups[a] == g && groups[b] == g).count() as i64;
            let ends: i64 = (0..n).filter(|&v| groups[v] == g).map(|v| degree[v]).sum();
            4 * m * inside - ends * ends
        })
        .sum()
}

/// Greedy agglomeration recomputing Q from scratch for every candidate merge.
/// Groups are named by their smallest member; among connected pairs with the
/// largest gain the lexicographically smallest pair wins; the labeling with the
/// first strict maximum of Q along the way is returned (as member-minimum labels).
pub fn greedy_modularity_reference(n: usize, edges: &[(usize, usize)]) -> (Vec<usize>, i64) {
    let mut label: Vec<usize> = (0..n).collect();
    let mut best = (label.clone(), scaled_modularity(n, edges, &label));
    loop {
        let current = scaled_modularity(n, edges, &label);
        let mut choice: Option<(i64, usize, usize)> = None;
        let mut ids: Vec<usize> = label.clone();
        ids.sort_unstable();
        ids.dedup();
        for (x, &i) in ids.iter().enumerate() {
            for &j in &ids[x + 1..] {
                let connected = edges
                    .iter()
                    .any(|&(a, b)| (label[a] == i && label[b] == j) || (label[a] == j && label[b] == i));
                if !connected {
                    continue;
                }
                let merged: Vec<usize> = label.iter().map(|&l| if l == j { i } else { l }).collect();
                let gain = scaled_modularity(n, edges, &merged) - current;
                if choice.is_none_or(|(g, _, _)| gain > g) {
                    choice = Some((gain, i, j));
                }
            }
        }
        let Some((_, i, j)) = choice else { break };
        for l in label.iter_mut() {
            if *l == j {
                *l = i;
            }
        }
        let q = scaled_modularity(n, edges, &label);
        if q > best.1 {
            best = (label.clone(), q);
        }
    }
    best
}

/// Relabels groups by order of first appearance.
pub fn canonical(groups: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    groups
        .iter()
        .map(|g| {
            let next = map.len();
            *map.entry(*g).or_insert(next)
        })
        .collect()
}
