//! Synthetic topology families used by tests, experiments and benchmarks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::topology::{EdgeSpec, Topology, WeightPolicy};

fn build(n: usize, edges: &[(usize, usize)], capacity: f64) -> Topology {
    let specs: Vec<EdgeSpec> = edges
        .iter()
        .map(|&(u, v)| EdgeSpec::new(u, v, capacity))
        .collect();
    Topology::from_edges(n, &specs, WeightPolicy::Unit).expect("synthetic topology is valid")
}

pub fn line(n: usize, capacity: f64) -> Topology {
    let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
    build(n, &edges, capacity)
}

pub fn ring(n: usize, capacity: f64) -> Topology {
    let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    build(n, &edges, capacity)
}

/// Node 0 is the hub.
pub fn star(n: usize, capacity: f64) -> Topology {
    let edges: Vec<_> = (1..n).map(|i| (0, i)).collect();
    build(n, &edges, capacity)
}

pub fn complete(n: usize, capacity: f64) -> Topology {
    let edges: Vec<_> = (0..n)
        .flat_map(|u| ((u + 1)..n).map(move |v| (u, v)))
        .collect();
    build(n, &edges, capacity)
}

pub fn grid(rows: usize, cols: usize, capacity: f64) -> Topology {
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let id = r * cols + c;
            if c + 1 < cols {
                edges.push((id, id + 1));
            }
            if r + 1 < rows {
                edges.push((id, id + cols));
            }
        }
    }
    build(rows * cols, &edges, capacity)
}

/// Random connected graph: a random spanning tree plus uniformly chosen extra
/// edges up to `num_edges` (capped at the complete graph). Each edge capacity
/// is drawn from `capacities`.
pub fn random_connected(n: usize, num_edges: usize, capacities: &[f64], seed: u64) -> Topology {
    assert!(n >= 2 && !capacities.is_empty());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut pairs = std::collections::BTreeSet::new();
    for i in 1..n {
        let parent = order[rng.gen_range(0..i)];
        let child = order[i];
        pairs.insert((parent.min(child), parent.max(child)));
    }
    let mut missing: Vec<(usize, usize)> = (0..n)
        .flat_map(|u| ((u + 1)..n).map(move |v| (u, v)))
        .filter(|p| !pairs.contains(p))
        .collect();
    missing.shuffle(&mut rng);
    let extra = num_edges.saturating_sub(pairs.len()).min(missing.len());
    pairs.extend(missing.into_iter().take(extra));
    let specs: Vec<EdgeSpec> = pairs
        .into_iter()
        .map(|(u, v)| EdgeSpec::new(u, v, *capacities.choose(&mut rng).unwrap()))
        .collect();
    Topology::from_edges(n, &specs, WeightPolicy::Unit).expect("random topology is connected")
}
