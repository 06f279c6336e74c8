//! Network topology: nodes, directed links with capacities and OSPF weights,
//! ingestion from the plain-text `.topo` format and GraphML, link-pair
//! removal, and structural metrics (node degree, edge betweenness).
//!
//! Every physical edge is represented by two directed links (upstream and
//! downstream). Parallel edges between the same node pair are merged into one
//! link whose capacity is the sum of the merged capacities.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt::Write as _;

use crate::error::{Error, Result};

pub type NodeId = usize;
pub type LinkId = usize;

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub label: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub tail: NodeId,
    pub head: NodeId,
    pub capacity: f64,
    pub ospf_weight: f64,
}

/// How to fill in OSPF weights that the input does not specify.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightPolicy {
    #[default]
    Unit,
    InverseCapacity,
}

impl WeightPolicy {
    fn weight_for(self, capacity: f64) -> f64 {
        match self {
            WeightPolicy::Unit => 1.0,
            WeightPolicy::InverseCapacity => 1.0 / capacity,
        }
    }
}

/// Size bounds enforced at ingestion. `max_edges` counts undirected link pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TopologyLimits {
    pub max_nodes: usize,
    pub max_edges: usize,
}

impl Default for TopologyLimits {
    fn default() -> Self {
        Self {
            max_nodes: 30,
            max_edges: 100,
        }
    }
}

impl TopologyLimits {
    pub fn unbounded() -> Self {
        Self {
            max_nodes: usize::MAX,
            max_edges: usize::MAX,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    pub weights: WeightPolicy,
    pub limits: TopologyLimits,
}

/// One undirected physical edge before expansion into two directed links.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeSpec {
    pub u: NodeId,
    pub v: NodeId,
    pub capacity: f64,
    pub weight: Option<f64>,
}

impl EdgeSpec {
    pub fn new(u: NodeId, v: NodeId, capacity: f64) -> Self {
        Self {
            u,
            v,
            capacity,
            weight: None,
        }
    }
}

/// A validated, immutable, strongly connected topology.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    nodes: Vec<Node>,
    links: Vec<Link>,
    link_index: HashMap<(NodeId, NodeId), LinkId>,
    out_links: Vec<Vec<LinkId>>,
}

impl Topology {
    /// Builds a topology from undirected edges. Each edge becomes two directed
    /// links; repeated node pairs are aggregated by summing capacity (the
    /// smallest explicit weight wins).
    pub fn from_edges(
        num_nodes: usize,
        edges: &[EdgeSpec],
        weights: WeightPolicy,
    ) -> Result<Self> {
        Self::from_labeled_edges(vec![None; num_nodes], edges, weights)
    }

    pub fn from_labeled_edges(
        labels: Vec<Option<String>>,
        edges: &[EdgeSpec],
        weights: WeightPolicy,
    ) -> Result<Self> {
        let num_nodes = labels.len();
        let mut merged: BTreeMap<(NodeId, NodeId), (f64, Option<f64>)> = BTreeMap::new();
        for e in edges {
            if e.u >= num_nodes || e.v >= num_nodes {
                return Err(Error::InvalidTopology(format!(
                    "edge {}-{} references a node outside 0..{num_nodes}",
                    e.u, e.v
                )));
            }
            if e.u == e.v {
                return Err(Error::InvalidTopology(format!("self-loop on node {}", e.u)));
            }
            check_capacity(e.capacity)?;
            if let Some(w) = e.weight {
                check_weight(w)?;
            }
            let key = (e.u.min(e.v), e.u.max(e.v));
            let entry = merged.entry(key).or_insert((0.0, None));
            entry.0 += e.capacity;
            entry.1 = match (entry.1, e.weight) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            };
        }
        let mut links = Vec::with_capacity(merged.len() * 2);
        for (&(u, v), &(capacity, weight)) in &merged {
            let ospf_weight = weight.unwrap_or_else(|| weights.weight_for(capacity));
            links.push(Link {
                tail: u,
                head: v,
                capacity,
                ospf_weight,
            });
            links.push(Link {
                tail: v,
                head: u,
                capacity,
                ospf_weight,
            });
        }
        let nodes = labels
            .into_iter()
            .enumerate()
            .map(|(id, label)| Node { id, label })
            .collect();
        Self::from_links(nodes, links)
    }

    /// Validating constructor over explicit directed links.
    pub fn from_links(nodes: Vec<Node>, mut links: Vec<Link>) -> Result<Self> {
        let n = nodes.len();
        if n < 2 {
            return Err(Error::InvalidTopology("need at least two nodes".into()));
        }
        for (i, node) in nodes.iter().enumerate() {
            if node.id != i {
                return Err(Error::InvalidTopology(format!(
                    "node ids must be contiguous, found {} at position {i}",
                    node.id
                )));
            }
        }
        links.sort_by_key(|l| (l.tail, l.head));
        let mut link_index = HashMap::with_capacity(links.len());
        let mut out_links = vec![Vec::new(); n];
        for (id, l) in links.iter().enumerate() {
            if l.tail >= n || l.head >= n || l.tail == l.head {
                return Err(Error::InvalidTopology(format!(
                    "bad link {}->{}",
                    l.tail, l.head
                )));
            }
            check_capacity(l.capacity)?;
            check_weight(l.ospf_weight)?;
            if link_index.insert((l.tail, l.head), id).is_some() {
                return Err(Error::InvalidTopology(format!(
                    "duplicate link {}->{}",
                    l.tail, l.head
                )));
            }
            out_links[l.tail].push(id);
        }
        for l in &links {
            if !link_index.contains_key(&(l.head, l.tail)) {
                return Err(Error::InvalidTopology(format!(
                    "link {}->{} has no reverse link",
                    l.tail, l.head
                )));
            }
        }
        let topo = Self {
            nodes,
            links,
            link_index,
            out_links,
        };
        if !topo.is_connected() {
            return Err(Error::Disconnected);
        }
        Ok(topo)
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_links(&self) -> usize {
        self.links.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id]
    }

    pub fn link_id(&self, tail: NodeId, head: NodeId) -> Option<LinkId> {
        self.link_index.get(&(tail, head)).copied()
    }

    pub fn out_links(&self, node: NodeId) -> &[LinkId] {
        &self.out_links[node]
    }

    pub fn capacities(&self) -> Vec<f64> {
        self.links.iter().map(|l| l.capacity).collect()
    }

    pub fn max_capacity(&self) -> f64 {
        self.links.iter().map(|l| l.capacity).fold(0.0, f64::max)
    }

    /// Undirected node pairs `(u, v)` with `u < v`, in link order.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        self.links
            .iter()
            .filter(|l| l.tail < l.head)
            .map(|l| (l.tail, l.head))
            .collect()
    }

    pub fn num_edges(&self) -> usize {
        self.links.len() / 2
    }

    /// Same graph and capacities with new OSPF weights, given per link id.
    pub fn with_weights(&self, weights: &[f64]) -> Result<Self> {
        if weights.len() != self.links.len() {
            return Err(Error::Shape(format!(
                "{} weights for {} links",
                weights.len(),
                self.links.len()
            )));
        }
        let links = self
            .links
            .iter()
            .zip(weights)
            .map(|(l, &w)| Link { ospf_weight: w, ..*l })
            .collect();
        Self::from_links(self.nodes.clone(), links)
    }

    /// Returns a copy without the links `(u,v)` and `(v,u)`.
    pub fn remove_link_pair(&self, u: NodeId, v: NodeId) -> Result<Self> {
        if self.link_id(u, v).is_none() || self.link_id(v, u).is_none() {
            return Err(Error::LinkNotFound(u, v));
        }
        let links = self
            .links
            .iter()
            .filter(|l| !((l.tail == u && l.head == v) || (l.tail == v && l.head == u)))
            .copied()
            .collect();
        Self::from_links(self.nodes.clone(), links)
    }

    // Links are symmetric, so a single BFS reaching every node means strongly
    // connected.
    fn is_connected(&self) -> bool {
        let n = self.nodes.len();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &l in &self.out_links[u] {
                let v = self.links[l].head;
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == n
    }

    /// Serializes into the `.topo` text format. Parsing the output yields an
    /// equal topology.
    pub fn to_topo_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "NODES {}", self.nodes.len());
        for node in &self.nodes {
            if let Some(label) = &node.label {
                let _ = writeln!(out, "{} {}", node.id, label);
            }
        }
        let _ = writeln!(out, "EDGES {}", self.num_edges());
        for l in self.links.iter().filter(|l| l.tail < l.head) {
            let _ = writeln!(out, "{} {} {} {}", l.tail, l.head, l.capacity, l.ospf_weight);
        }
        out
    }
}

fn check_capacity(c: f64) -> Result<()> {
    if c.is_finite() && c > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidTopology(format!(
            "capacity must be positive, got {c}"
        )))
    }
}

fn check_weight(w: f64) -> Result<()> {
    if w.is_finite() && w > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidTopology(format!(
            "OSPF weight must be positive, got {w}"
        )))
    }
}

/// Parses the `.topo` text format:
///
/// ```text
/// # comment
/// NODES 3
/// 0 paris        (optional label lines)
/// EDGES 2
/// 0 1 10.0       (u v capacity [weight])
/// 1 2 40.0 2.5
/// ```
pub fn parse_topology(text: &str, opts: &ParseOptions) -> Result<Topology> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let (line_no, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty topology file"))?;
    let num_nodes = parse_keyword(header, "NODES", line_no)?;
    if num_nodes > opts.limits.max_nodes {
        return Err(Error::InvalidTopology(format!(
            "{num_nodes} nodes exceeds the limit of {}",
            opts.limits.max_nodes
        )));
    }
    let mut labels: Vec<Option<String>> = vec![None; num_nodes];
    let mut num_edges = None;
    let mut edges = Vec::new();
    for (line_no, line) in lines {
        if num_edges.is_none() {
            if line.starts_with("EDGES") {
                num_edges = Some(parse_keyword(line, "EDGES", line_no)?);
                continue;
            }
            let mut parts = line.splitn(2, char::is_whitespace);
            let id: usize = parse_field(parts.next(), "node id", line_no)?;
            if id >= num_nodes {
                return Err(Error::parse(line_no, format!("node id {id} out of range")));
            }
            labels[id] = parts.next().map(|s| s.trim().to_string());
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if !(3..=4).contains(&fields.len()) {
            return Err(Error::parse(
                line_no,
                "expected `<u> <v> <capacity> [weight]`",
            ));
        }
        let u: usize = parse_field(Some(fields[0]), "node id", line_no)?;
        let v: usize = parse_field(Some(fields[1]), "node id", line_no)?;
        let capacity: f64 = parse_field(Some(fields[2]), "capacity", line_no)?;
        let weight = match fields.get(3) {
            Some(w) => Some(parse_field::<f64>(Some(w), "weight", line_no)?),
            None => None,
        };
        if u >= num_nodes || v >= num_nodes {
            return Err(Error::parse(line_no, format!("edge {u}-{v} out of range")));
        }
        edges.push(EdgeSpec {
            u,
            v,
            capacity,
            weight,
        });
    }
    let declared = num_edges.ok_or_else(|| Error::parse(0, "missing EDGES section"))?;
    if declared != edges.len() {
        return Err(Error::parse(
            0,
            format!("EDGES declares {declared} edges, found {}", edges.len()),
        ));
    }
    let topo = Topology::from_labeled_edges(labels, &edges, opts.weights)?;
    check_limits(&topo, &opts.limits)?;
    Ok(topo)
}

fn check_limits(topo: &Topology, limits: &TopologyLimits) -> Result<()> {
    if topo.num_nodes() > limits.max_nodes || topo.num_edges() > limits.max_edges {
        return Err(Error::InvalidTopology(format!(
            "{} nodes / {} edges exceeds the limit of {} / {}",
            topo.num_nodes(),
            topo.num_edges(),
            limits.max_nodes,
            limits.max_edges
        )));
    }
    Ok(())
}

fn parse_keyword(line: &str, keyword: &str, line_no: usize) -> Result<usize> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(keyword) {
        return Err(Error::parse(line_no, format!("expected `{keyword} <count>`")));
    }
    parse_field(parts.next(), "count", line_no)
}

fn parse_field<T: std::str::FromStr>(s: Option<&str>, what: &str, line_no: usize) -> Result<T> {
    let s = s.ok_or_else(|| Error::parse(line_no, format!("missing {what}")))?;
    s.parse()
        .map_err(|_| Error::parse(line_no, format!("invalid {what} `{s}`")))
}

#[derive(Debug, Clone)]
pub struct GraphmlOptions {
    pub capacity_attr: String,
    pub default_capacity: f64,
    pub weights: WeightPolicy,
    pub limits: TopologyLimits,
}

impl Default for GraphmlOptions {
    fn default() -> Self {
        Self {
            capacity_attr: "capacity".into(),
            default_capacity: 10_000.0,
            weights: WeightPolicy::Unit,
            limits: TopologyLimits::default(),
        }
    }
}

/// Imports a GraphML document (e.g. from TopologyZoo). Nodes get ids in
/// document order; edge capacities come from the configured attribute.
/// Self-loops are dropped.
pub fn parse_graphml(text: &str, opts: &GraphmlOptions) -> Result<Topology> {
    let doc = roxmltree::Document::parse(text).map_err(|e| Error::parse(0, e.to_string()))?;
    let line_of = |n: roxmltree::Node| doc.text_pos_at(n.range().start).row as usize;

    let mut cap_key = None;
    let mut label_key = None;
    for key in doc.descendants().filter(|n| n.has_tag_name("key")) {
        let name = key.attribute("attr.name");
        let target = key.attribute("for");
        if name == Some(opts.capacity_attr.as_str()) && target != Some("node") {
            cap_key = key.attribute("id");
        }
        if name == Some("label") && target == Some("node") {
            label_key = key.attribute("id");
        }
    }

    let mut ids = HashMap::new();
    let mut labels = Vec::new();
    for node in doc.descendants().filter(|n| n.has_tag_name("node")) {
        let id = node
            .attribute("id")
            .ok_or_else(|| Error::parse(line_of(node), "node without id"))?;
        ids.insert(id.to_string(), labels.len());
        let label = label_key.and_then(|k| data_value(node, k)).map(str::to_string);
        labels.push(label);
    }

    let mut edges = Vec::new();
    for edge in doc.descendants().filter(|n| n.has_tag_name("edge")) {
        let endpoint = |attr: &str| -> Result<usize> {
            let name = edge
                .attribute(attr)
                .ok_or_else(|| Error::parse(line_of(edge), format!("edge without {attr}")))?;
            ids.get(name)
                .copied()
                .ok_or_else(|| Error::parse(line_of(edge), format!("unknown node `{name}`")))
        };
        let (u, v) = (endpoint("source")?, endpoint("target")?);
        if u == v {
            continue;
        }
        let capacity = match cap_key.and_then(|k| data_value(edge, k)) {
            Some(raw) => raw.trim().parse::<f64>().map_err(|_| {
                Error::parse(line_of(edge), format!("invalid capacity `{raw}`"))
            })?,
            None => opts.default_capacity,
        };
        edges.push(EdgeSpec::new(u, v, capacity));
    }
    if labels.len() > opts.limits.max_nodes {
        return Err(Error::InvalidTopology(format!(
            "{} nodes exceeds the limit of {}",
            labels.len(),
            opts.limits.max_nodes
        )));
    }
    let topo = Topology::from_labeled_edges(labels, &edges, opts.weights)?;
    check_limits(&topo, &opts.limits)?;
    Ok(topo)
}

fn data_value<'a>(node: roxmltree::Node<'a, 'a>, key: &str) -> Option<&'a str> {
    node.children()
        .find(|c| c.has_tag_name("data") && c.attribute("key") == Some(key))
        .and_then(|c| c.text())
}

/// `(min, max, mean)` of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl Summary {
    fn of(values: &[f64]) -> Self {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        // mean can drift a ulp outside [min, max] on constant samples
        Self {
            min,
            max,
            mean: mean.clamp(min, max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopologyMetrics {
    pub node_degree: Summary,
    pub edge_betweenness: Summary,
}

/// Node degree and normalized edge betweenness on the undirected simple graph
/// with unit edge lengths.
pub fn compute_metrics(topo: &Topology) -> TopologyMetrics {
    let degrees: Vec<f64> = (0..topo.num_nodes())
        .map(|u| topo.out_links(u).len() as f64)
        .collect();
    let betweenness = edge_betweenness(topo);
    let values: Vec<f64> = betweenness.values().copied().collect();
    TopologyMetrics {
        node_degree: Summary::of(&degrees),
        edge_betweenness: Summary::of(&values),
    }
}

/// Brandes' edge betweenness, unordered source/target pairs, normalized by
/// `n(n-1)/2` so every value lies in `[0, 1]`. Keys are `(u, v)` with `u < v`.
pub fn edge_betweenness(topo: &Topology) -> BTreeMap<(NodeId, NodeId), f64> {
    let n = topo.num_nodes();
    let mut scores: BTreeMap<(NodeId, NodeId), f64> =
        topo.edges().into_iter().map(|e| (e, 0.0)).collect();
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![usize::MAX; n];
    let mut delta = vec![0.0f64; n];
    let mut preds: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    for s in 0..n {
        sigma.fill(0.0);
        dist.fill(usize::MAX);
        delta.fill(0.0);
        preds.iter_mut().for_each(Vec::clear);
        sigma[s] = 1.0;
        dist[s] = 0;
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &l in topo.out_links(u) {
                let v = topo.link(l).head;
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
                if dist[v] == dist[u] + 1 {
                    sigma[v] += sigma[u];
                    preds[v].push(u);
                }
            }
        }
        for &w in order.iter().rev() {
            for &u in &preds[w] {
                let c = sigma[u] / sigma[w] * (1.0 + delta[w]);
                *scores.get_mut(&(u.min(w), u.max(w))).expect("edge exists") += c;
                delta[u] += c;
            }
        }
    }
    // each unordered pair was counted from both endpoints
    let norm = (n * (n - 1)) as f64;
    scores.values_mut().for_each(|v| *v /= norm);
    scores
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;

    fn parse(text: &str) -> Result<Topology> {
        parse_topology(text, &ParseOptions::default())
    }

    #[test]
    fn two_node_file_expands_symmetrically() {
        let t = parse("NODES 2\nEDGES 1\n0 1 10.0\n").unwrap();
        assert_eq!(t.num_nodes(), 2);
        assert_eq!(t.num_links(), 2);
        for l in t.links() {
            assert_eq!(l.capacity, 10.0);
            assert_eq!(l.ospf_weight, 1.0);
        }
        assert!(t.link_id(0, 1).is_some() && t.link_id(1, 0).is_some());
    }

    #[test]
    fn ring_file() {
        let text = "# ring\nNODES 5\n0 a\n1 b\nEDGES 5\n0 1 10\n1 2 10\n2 3 10\n3 4 10\n4 0 10 # back\n";
        let t = parse(text).unwrap();
        assert_eq!(t.num_links(), 10);
        assert_eq!(t.nodes()[1].label.as_deref(), Some("b"));
        assert_eq!(t.nodes()[2].label, None);
    }

    #[test]
    fn negative_capacity_rejected() {
        let err = parse("NODES 2\nEDGES 1\n0 1 -3\n").unwrap_err();
        assert!(matches!(err, Error::InvalidTopology(_)), "{err}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse("NODES 2\nEDGES 1\n0 x 10\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn disconnected_rejected() {
        let err = parse("NODES 4\nEDGES 2\n0 1 1\n2 3 1\n").unwrap_err();
        assert!(matches!(err, Error::Disconnected));
    }

    #[test]
    fn parallel_edges_sum_capacity() {
        let t = parse("NODES 2\nEDGES 2\n0 1 10\n1 0 5 3\n").unwrap();
        assert_eq!(t.num_links(), 2);
        let l = t.link(t.link_id(0, 1).unwrap());
        assert_eq!(l.capacity, 15.0);
        assert_eq!(l.ospf_weight, 3.0);
    }

    #[test]
    fn inverse_capacity_weights() {
        let opts = ParseOptions {
            weights: WeightPolicy::InverseCapacity,
            ..Default::default()
        };
        let t = parse_topology("NODES 2\nEDGES 1\n0 1 4\n", &opts).unwrap();
        assert_eq!(t.links()[0].ospf_weight, 0.25);
    }

    #[test]
    fn limits_enforced() {
        let opts = ParseOptions {
            limits: TopologyLimits {
                max_nodes: 2,
                max_edges: 100,
            },
            ..Default::default()
        };
        assert!(parse_topology("NODES 3\nEDGES 2\n0 1 1\n1 2 1\n", &opts).is_err());
    }

    #[test]
    fn topo_string_round_trip() {
        let t = synthetic::random_connected(9, 16, &[10.0, 40.0], 3);
        let back = parse(&t.to_topo_string()).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn remove_from_triangle() {
        let t = synthetic::complete(3, 10.0);
        let r = t.remove_link_pair(0, 1).unwrap();
        assert_eq!(r.num_links(), 4);
        assert_eq!(t.num_links(), 6);
    }

    #[test]
    fn remove_bridge_fails() {
        let t = synthetic::line(3, 10.0);
        assert!(matches!(t.remove_link_pair(0, 1), Err(Error::Disconnected)));
    }

    #[test]
    fn remove_from_k4() {
        let t = synthetic::complete(4, 10.0);
        assert_eq!(t.remove_link_pair(2, 3).unwrap().num_links(), 10);
        assert!(matches!(
            t.remove_link_pair(2, 2),
            Err(Error::LinkNotFound(2, 2))
        ));
    }

    #[test]
    fn graphml_import() {
        let text = r#"<?xml version="1.0" encoding="utf-8"?>
<graphml xmlns="http://graphml.graphdrawing.org/xmlns">
  <key attr.name="label" attr.type="string" for="node" id="d1"/>
  <key attr.name="capacity" attr.type="double" for="edge" id="d2"/>
  <graph edgedefault="undirected">
    <node id="n0"><data key="d1">Paris</data></node>
    <node id="n1"><data key="d1">Lyon</data></node>
    <node id="n2"/>
    <edge source="n0" target="n1"><data key="d2">100</data></edge>
    <edge source="n1" target="n2"/>
    <edge source="n2" target="n2"/>
  </graph>
</graphml>"#;
        let opts = GraphmlOptions {
            default_capacity: 7.0,
            ..Default::default()
        };
        let t = parse_graphml(text, &opts).unwrap();
        assert_eq!(t.num_nodes(), 3);
        assert_eq!(t.num_links(), 4);
        assert_eq!(t.nodes()[0].label.as_deref(), Some("Paris"));
        assert_eq!(t.link(t.link_id(0, 1).unwrap()).capacity, 100.0);
        assert_eq!(t.link(t.link_id(2, 1).unwrap()).capacity, 7.0);
    }

    #[test]
    fn star_degree() {
        let m = compute_metrics(&synthetic::star(4, 10.0));
        assert_eq!(
            m.node_degree,
            Summary {
                min: 1.0,
                max: 3.0,
                mean: 1.5
            }
        );
    }

    #[test]
    fn ring_betweenness_uniform() {
        let eb = edge_betweenness(&synthetic::ring(3, 10.0));
        let vals: Vec<f64> = eb.values().copied().collect();
        assert_eq!(vals.len(), 3);
        assert!(vals.iter().all(|&v| (v - vals[0]).abs() < 1e-12));
        // each edge carries only its own endpoint pair: 1 of 3 pairs
        assert!((vals[0] - 1.0 / 3.0).abs() < 1e-12);
    }

    /// Enumerates every shortest path per unordered pair by DFS and counts the
    /// fraction crossing each edge.
    fn brute_force_betweenness(t: &Topology) -> BTreeMap<(usize, usize), f64> {
        fn dfs(
            t: &Topology,
            at: usize,
            dst: usize,
            budget: usize,
            path: &mut Vec<usize>,
            out: &mut Vec<Vec<usize>>,
        ) {
            if at == dst {
                out.push(path.clone());
                return;
            }
            if budget == 0 {
                return;
            }
            for &l in t.out_links(at) {
                let v = t.link(l).head;
                if !path.contains(&v) {
                    path.push(v);
                    dfs(t, v, dst, budget - 1, path, out);
                    path.pop();
                }
            }
        }
        let n = t.num_nodes();
        let mut scores: BTreeMap<(usize, usize), f64> =
            t.edges().into_iter().map(|e| (e, 0.0)).collect();
        for s in 0..n {
            for d in (s + 1)..n {
                let mut shortest = Vec::new();
                for hops in 1..n {
                    dfs(t, s, d, hops, &mut vec![s], &mut shortest);
                    if !shortest.is_empty() {
                        break;
                    }
                }
                let share = 1.0 / shortest.len() as f64;
                for p in &shortest {
                    for w in p.windows(2) {
                        *scores.get_mut(&(w[0].min(w[1]), w[0].max(w[1]))).unwrap() += share;
                    }
                }
            }
        }
        let pairs = (n * (n - 1) / 2) as f64;
        scores.values_mut().for_each(|v| *v /= pairs);
        scores
    }

    #[test]
    fn betweenness_matches_enumeration() {
        let five = Topology::from_edges(
            5,
            &[
                EdgeSpec::new(0, 1, 1.0),
                EdgeSpec::new(1, 2, 1.0),
                EdgeSpec::new(2, 3, 1.0),
                EdgeSpec::new(3, 0, 1.0),
                EdgeSpec::new(1, 4, 1.0),
                EdgeSpec::new(3, 4, 1.0),
            ],
            WeightPolicy::Unit,
        )
        .unwrap();
        for t in [
            five,
            synthetic::random_connected(8, 12, &[1.0], 11),
            synthetic::grid(3, 3, 1.0),
        ] {
            let fast = edge_betweenness(&t);
            let slow = brute_force_betweenness(&t);
            for (k, v) in &fast {
                assert!((v - slow[k]).abs() < 1e-12, "{k:?}: {v} vs {}", slow[k]);
                assert!((0.0..=1.0).contains(v));
            }
            let m = compute_metrics(&t);
            assert!(m.edge_betweenness.min <= m.edge_betweenness.mean);
            assert!(m.edge_betweenness.mean <= m.edge_betweenness.max);
        }
    }

    #[test]
    fn vertex_transitive_degree_is_flat() {
        for t in [synthetic::ring(7, 1.0), synthetic::complete(5, 1.0)] {
            let d = compute_metrics(&t).node_degree;
            assert_eq!(d.min, d.max);
            assert_eq!(d.min, d.mean);
        }
    }

    #[test]
    fn every_link_has_reverse() {
        for seed in 0..20 {
            let t = synthetic::random_connected(10, 18, &[10.0, 40.0, 100.0], seed);
            for l in t.links() {
                let r = t.link(t.link_id(l.head, l.tail).unwrap());
                assert!(r.capacity > 0.0);
            }
        }
    }
}
