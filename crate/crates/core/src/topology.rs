//! Topologies: nodes, duplex links and equal-cost shortest paths.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::link::LinkParams;
use crate::ids::{LinkId, NodeId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Host,
    Switch,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkSpec {
    pub src: NodeId,
    pub dst: NodeId,
    pub params: LinkParams,
}

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("fat-tree arity must be even and at least 2, got {0}")]
    InvalidArity(usize),
    #[error("{0} must be at least 1")]
    Empty(&'static str),
}

#[derive(Clone, Debug)]
pub struct Topology {
    pub name: String,
    kinds: Vec<NodeKind>,
    links: Vec<LinkSpec>,
    out: Vec<Vec<LinkId>>,
    /// Rack (first-hop switch) of each node; `None` for switches.
    rack: Vec<Option<NodeId>>,
}

impl Topology {
    pub fn new(name: impl Into<String>) -> Self {
        Topology {
            name: name.into(),
            kinds: Vec::new(),
            links: Vec::new(),
            out: Vec::new(),
            rack: Vec::new(),
        }
    }

    pub fn add_node(&mut self, kind: NodeKind) -> NodeId {
        let id = NodeId(self.kinds.len() as u32);
        self.kinds.push(kind);
        self.out.push(Vec::new());
        self.rack.push(None);
        id
    }

    /// Adds `a -> b` and `b -> a`; the two ids differ only in the lowest bit.
    pub fn add_duplex(&mut self, a: NodeId, b: NodeId, params: LinkParams) -> (LinkId, LinkId) {
        let ab = LinkId(self.links.len() as u32);
        self.links.push(LinkSpec { src: a, dst: b, params });
        let ba = LinkId(self.links.len() as u32);
        self.links.push(LinkSpec { src: b, dst: a, params });
        self.out[a.index()].push(ab);
        self.out[b.index()].push(ba);
        if self.kinds[a.index()] == NodeKind::Host && self.kinds[b.index()] == NodeKind::Switch {
            self.rack[a.index()].get_or_insert(b);
        }
        if self.kinds[b.index()] == NodeKind::Host && self.kinds[a.index()] == NodeKind::Switch {
            self.rack[b.index()].get_or_insert(a);
        }
        (ab, ba)
    }

    pub fn node_count(&self) -> usize {
        self.kinds.len()
    }

    pub fn kind(&self, n: NodeId) -> NodeKind {
        self.kinds[n.index()]
    }

    pub fn is_switch(&self, n: NodeId) -> bool {
        self.kind(n) == NodeKind::Switch
    }

    pub fn hosts(&self) -> Vec<NodeId> {
        (0..self.kinds.len() as u32)
            .map(NodeId)
            .filter(|&n| self.kind(n) == NodeKind::Host)
            .collect()
    }

    pub fn switches(&self) -> Vec<NodeId> {
        (0..self.kinds.len() as u32)
            .map(NodeId)
            .filter(|&n| self.kind(n) == NodeKind::Switch)
            .collect()
    }

    pub fn rack_of(&self, host: NodeId) -> Option<NodeId> {
        self.rack[host.index()]
    }

    pub fn links(&self) -> &[LinkSpec] {
        &self.links
    }

    pub fn link(&self, l: LinkId) -> &LinkSpec {
        &self.links[l.index()]
    }

    pub fn twin(&self, l: LinkId) -> LinkId {
        LinkId(l.0 ^ 1)
    }

    pub fn out_links(&self, n: NodeId) -> &[LinkId] {
        &self.out[n.index()]
    }

    /// Sets the parameters of every link.
    pub fn set_all_params(&mut self, params: LinkParams) {
        for l in &mut self.links {
            l.params = params;
        }
    }

    fn hop_distances_to(&self, dst: NodeId) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.kinds.len()];
        dist[dst.index()] = Some(0);
        let mut q = VecDeque::from([dst]);
        while let Some(v) = q.pop_front() {
            let d = dist[v.index()].unwrap();
            // links are duplex, so each neighbor u reaches v over the twin
            for &l in &self.out[v.index()] {
                let u = self.links[l.index()].dst;
                if dist[u.index()].is_none() {
                    dist[u.index()] = Some(d + 1);
                    // hosts never relay, so only switches are expanded
                    if self.kind(u) == NodeKind::Switch {
                        q.push_back(u);
                    }
                }
            }
        }
        dist
    }

    /// All equal-cost shortest paths from `src` to `dst` as link lists,
    /// in a deterministic order. Hosts never relay.
    pub fn shortest_paths(&self, src: NodeId, dst: NodeId) -> Vec<Vec<LinkId>> {
        if src == dst {
            return Vec::new();
        }
        let dist = self.hop_distances_to(dst);
        let Some(total) = dist[src.index()] else {
            return Vec::new();
        };
        let mut paths = Vec::new();
        let mut stack: Vec<LinkId> = Vec::with_capacity(total);
        self.collect_paths(src, dst, &dist, &mut stack, &mut paths);
        paths
    }

    fn collect_paths(
        &self,
        at: NodeId,
        dst: NodeId,
        dist: &[Option<usize>],
        stack: &mut Vec<LinkId>,
        out: &mut Vec<Vec<LinkId>>,
    ) {
        if at == dst {
            out.push(stack.clone());
            return;
        }
        if !stack.is_empty() && self.kind(at) == NodeKind::Host {
            return;
        }
        let here = dist[at.index()].unwrap();
        for &l in &self.out[at.index()] {
            let next = self.links[l.index()].dst;
            if dist[next.index()] == Some(here - 1) {
                stack.push(l);
                self.collect_paths(next, dst, dist, stack, out);
                stack.pop();
            }
        }
    }

    /// Node sequence visited by a path.
    pub fn path_nodes(&self, path: &[LinkId]) -> Vec<NodeId> {
        let mut nodes = Vec::with_capacity(path.len() + 1);
        if let Some(&first) = path.first() {
            nodes.push(self.link(first).src);
        }
        nodes.extend(path.iter().map(|&l| self.link(l).dst));
        nodes
    }

    /// Reverse path: twins in reverse order.
    pub fn reverse_path(&self, path: &[LinkId]) -> Vec<LinkId> {
        path.iter().rev().map(|&l| self.twin(l)).collect()
    }
}

/// n senders, one switch, one receiver. Senders are hosts `0..n`, the
/// receiver is host `n`, the switch is node `n + 1`.
pub fn build_single_bottleneck(n_senders: usize, params: LinkParams) -> Result<Topology, TopologyError> {
    if n_senders == 0 {
        return Err(TopologyError::Empty("n_senders"));
    }
    let mut t = Topology::new(format!("single-bottleneck-{n_senders}"));
    let hosts: Vec<NodeId> = (0..=n_senders).map(|_| t.add_node(NodeKind::Host)).collect();
    let sw = t.add_node(NodeKind::Switch);
    for &h in &hosts {
        t.add_duplex(h, sw, params);
    }
    Ok(t)
}

/// Two-level tree: 12 servers (nodes 0..12), four leaf switches with three
/// servers each (12..16), and a root switch (16).
pub fn build_single_rooted_tree(params: LinkParams) -> Topology {
    let mut t = Topology::new("single-rooted-tree");
    let servers: Vec<NodeId> = (0..12).map(|_| t.add_node(NodeKind::Host)).collect();
    let leaves: Vec<NodeId> = (0..4).map(|_| t.add_node(NodeKind::Switch)).collect();
    let root = t.add_node(NodeKind::Switch);
    for (i, &s) in servers.iter().enumerate() {
        t.add_duplex(s, leaves[i / 3], params);
    }
    for &l in &leaves {
        t.add_duplex(l, root, params);
    }
    t
}

/// Standard k-ary fat-tree: k^3/4 hosts first, then edge, aggregation and
/// core switches.
pub fn build_fat_tree(k: usize, params: LinkParams) -> Result<Topology, TopologyError> {
    if k < 2 || k % 2 != 0 {
        return Err(TopologyError::InvalidArity(k));
    }
    let half = k / 2;
    let mut t = Topology::new(format!("fat-tree-{k}"));
    let hosts: Vec<NodeId> = (0..k * k * k / 4).map(|_| t.add_node(NodeKind::Host)).collect();
    let edge: Vec<NodeId> = (0..k * half).map(|_| t.add_node(NodeKind::Switch)).collect();
    let agg: Vec<NodeId> = (0..k * half).map(|_| t.add_node(NodeKind::Switch)).collect();
    let core: Vec<NodeId> = (0..half * half).map(|_| t.add_node(NodeKind::Switch)).collect();
    for pod in 0..k {
        for e in 0..half {
            let edge_sw = edge[pod * half + e];
            for h in 0..half {
                t.add_duplex(hosts[(pod * half + e) * half + h], edge_sw, params);
            }
            for a in 0..half {
                t.add_duplex(edge_sw, agg[pod * half + a], params);
            }
        }
        for a in 0..half {
            for c in 0..half {
                t.add_duplex(agg[pod * half + a], core[a * half + c], params);
            }
        }
    }
    Ok(t)
}

/// Two hosts (0 and 1) joined through `n_paths` switches, one per path.
pub fn build_parallel_paths(n_paths: usize, params: LinkParams) -> Result<Topology, TopologyError> {
    if n_paths == 0 {
        return Err(TopologyError::Empty("n_paths"));
    }
    let mut t = Topology::new(format!("parallel-paths-{n_paths}"));
    let src = t.add_node(NodeKind::Host);
    let dst = t.add_node(NodeKind::Host);
    for _ in 0..n_paths {
        let sw = t.add_node(NodeKind::Switch);
        t.add_duplex(src, sw, params);
        t.add_duplex(sw, dst, params);
    }
    Ok(t)
}

/// Deterministic 64-bit mixer (splitmix64 finalizer) for ECMP hashing.
pub fn ecmp_hash(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
