//! A topology bundled with the structures every optimizer needs: the
//! all-pairs OSPF path table and the link adjacency used for message passing.

use std::sync::Arc;

use crate::routing::PathTable;
use crate::topology::{LinkId, Topology};

/// Directed link adjacency: `a -> b` whenever `head(a) == tail(b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkGraph {
    num_links: usize,
    /// `(from, to)` link pairs, sorted.
    edges: Vec<(LinkId, LinkId)>,
}

impl LinkGraph {
    pub fn of(topo: &Topology) -> Self {
        let mut edges = Vec::new();
        for (a, link) in topo.links().iter().enumerate() {
            for &b in topo.out_links(link.head) {
                edges.push((a, b));
            }
        }
        edges.sort_unstable();
        Self {
            num_links: topo.num_links(),
            edges,
        }
    }

    pub fn from_edges(num_links: usize, mut edges: Vec<(LinkId, LinkId)>) -> Self {
        assert!(edges.iter().all(|&(a, b)| a < num_links && b < num_links));
        edges.sort_unstable();
        Self { num_links, edges }
    }

    pub fn num_links(&self) -> usize {
        self.num_links
    }

    pub fn edges(&self) -> &[(LinkId, LinkId)] {
        &self.edges
    }
}

#[derive(Debug, Clone)]
pub struct Network {
    pub name: String,
    pub topology: Topology,
    pub paths: PathTable,
    pub link_graph: LinkGraph,
}

impl Network {
    pub fn new(name: impl Into<String>, topology: Topology) -> Arc<Self> {
        let paths = PathTable::compute(&topology);
        let link_graph = LinkGraph::of(&topology);
        Arc::new(Self {
            name: name.into(),
            topology,
            paths,
            link_graph,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.topology.num_nodes()
    }

    pub fn num_links(&self) -> usize {
        self.topology.num_links()
    }
}
