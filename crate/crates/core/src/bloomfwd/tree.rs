use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{analytic_fp_rate, build_zfilter, derive_flow_id, BloomError, Edge, FlowId, ZFilter};

/// Analytic false-positive estimate above which the FP trigger fires.
pub const FP_THRESHOLD: f64 = 0.01;
/// Fraction of capacity above which the congestion trigger fires.
pub const CONGESTION_THRESHOLD: f64 = 0.9;

/// Undirected topology; every link can be used in both directions.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    adj: Vec<Vec<u32>>,
}

impl Graph {
    pub fn new(nodes: usize) -> Self {
        Self {
            adj: vec![Vec::new(); nodes],
        }
    }

    pub fn add_link(&mut self, a: u32, b: u32) {
        for (u, v) in [(a, b), (b, a)] {
            let list = &mut self.adj[u as usize];
            if let Err(pos) = list.binary_search(&v) {
                list.insert(pos, v);
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    /// Neighbours in ascending order.
    pub fn neighbors(&self, u: u32) -> &[u32] {
        &self.adj[u as usize]
    }

    pub fn has_edge(&self, e: Edge) -> bool {
        self.adj
            .get(e.from as usize)
            .is_some_and(|l| l.binary_search(&e.to).is_ok())
    }

    pub fn out_edges(&self, u: u32) -> impl Iterator<Item = Edge> + '_ {
        self.adj[u as usize].iter().map(move |&v| Edge::new(u, v))
    }

    pub fn directed_edges(&self) -> Vec<Edge> {
        (0..self.adj.len() as u32).flat_map(|u| self.out_edges(u)).collect()
    }
}

/// Edges a flow's packets are meant to traverse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeliveryTree {
    pub flow: FlowId,
    pub root: u32,
    pub edges: BTreeSet<Edge>,
    pub subscribers: BTreeSet<u32>,
}

impl DeliveryTree {
    /// Union of BFS shortest paths from `root`; ties go to the lower-numbered parent.
    /// `None` if some subscriber is unreachable.
    pub fn shortest_path(graph: &Graph, flow: FlowId, root: u32, subscribers: &[u32]) -> Option<Self> {
        let mut parent: Vec<Option<u32>> = vec![None; graph.node_count()];
        let mut seen = vec![false; graph.node_count()];
        seen[root as usize] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            for &v in graph.neighbors(u) {
                if !seen[v as usize] {
                    seen[v as usize] = true;
                    parent[v as usize] = Some(u);
                    queue.push_back(v);
                }
            }
        }
        let mut edges = BTreeSet::new();
        for &s in subscribers {
            if !seen[s as usize] {
                return None;
            }
            let mut v = s;
            while let Some(p) = parent[v as usize] {
                if !edges.insert(Edge::new(p, v)) {
                    break;
                }
                v = p;
            }
        }
        Some(Self {
            flow,
            root,
            edges,
            subscribers: subscribers.iter().copied().collect(),
        })
    }

    pub fn zfilter(&self, seed: u64) -> ZFilter {
        build_zfilter(&self.edges, seed)
    }

    pub fn nodes(&self) -> BTreeSet<u32> {
        let mut n: BTreeSet<u32> = self.edges.iter().flat_map(|e| [e.from, e.to]).collect();
        n.insert(self.root);
        n
    }
}

/// Condition under which a coded segment is worth setting up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Trigger {
    FalsePositiveRate,
    /// Offered loads of both flows against the capacity of the shared links.
    Congestion {
        load_a: f64,
        load_b: f64,
        capacity: f64,
    },
    Resilience,
}

/// Coded merge of two flows over their shared partition.
#[derive(Debug, Clone, PartialEq)]
pub struct NcBinding {
    pub parents: (FlowId, FlowId),
    pub derived: FlowId,
    pub k: usize,
    pub ingress: u32,
    pub egress: BTreeSet<u32>,
    pub shared_edges: BTreeSet<Edge>,
    pub edges_a_only: BTreeSet<Edge>,
    pub edges_b_only: BTreeSet<Edge>,
    pub filter_a_only: ZFilter,
    pub filter_b_only: ZFilter,
    pub filter_coded: ZFilter,
}

impl NcBinding {
    /// Binding over an explicit shared partition; the derived id is computed here.
    pub fn new(
        tree_a: &DeliveryTree,
        tree_b: &DeliveryTree,
        shared_edges: BTreeSet<Edge>,
        ingress: u32,
        egress: BTreeSet<u32>,
        k: usize,
        seed: u64,
    ) -> Result<Self, BloomError> {
        let derived = derive_flow_id(tree_a.flow, tree_b.flow)?;
        let edges_a_only: BTreeSet<Edge> = tree_a.edges.difference(&shared_edges).copied().collect();
        let edges_b_only: BTreeSet<Edge> = tree_b.edges.difference(&shared_edges).copied().collect();
        Ok(Self {
            parents: (tree_a.flow, tree_b.flow),
            derived,
            k,
            ingress,
            egress,
            filter_a_only: build_zfilter(&edges_a_only, seed),
            filter_b_only: build_zfilter(&edges_b_only, seed),
            filter_coded: build_zfilter(&shared_edges, seed),
            shared_edges,
            edges_a_only,
            edges_b_only,
        })
    }

    pub fn parent_filter(&self, flow: FlowId) -> Option<ZFilter> {
        if flow == self.parents.0 {
            Some(self.filter_a_only)
        } else if flow == self.parents.1 {
            Some(self.filter_b_only)
        } else {
            None
        }
    }
}

fn trigger_fires(trigger: Trigger, tree_a: &DeliveryTree, tree_b: &DeliveryTree) -> bool {
    match trigger {
        Trigger::FalsePositiveRate => {
            analytic_fp_rate(tree_a.edges.len()) > FP_THRESHOLD || analytic_fp_rate(tree_b.edges.len()) > FP_THRESHOLD
        }
        Trigger::Congestion {
            load_a,
            load_b,
            capacity,
        } => load_a + load_b > CONGESTION_THRESHOLD * capacity,
        Trigger::Resilience => true,
    }
}

/// Largest weakly connected group of edges; ties go to the group holding the smallest edge.
fn largest_component(edges: &BTreeSet<Edge>) -> BTreeSet<Edge> {
    let mut adj: BTreeMap<u32, Vec<Edge>> = BTreeMap::new();
    for e in edges {
        adj.entry(e.from).or_default().push(*e);
        adj.entry(e.to).or_default().push(*e);
    }
    let mut assigned: BTreeSet<Edge> = BTreeSet::new();
    let mut best: BTreeSet<Edge> = BTreeSet::new();
    for start in edges {
        if assigned.contains(start) {
            continue;
        }
        let mut comp = BTreeSet::new();
        let mut stack = vec![*start];
        while let Some(e) = stack.pop() {
            if !comp.insert(e) {
                continue;
            }
            for n in [e.from, e.to] {
                stack.extend(adj[&n].iter().filter(|x| !comp.contains(x)));
            }
        }
        assigned.extend(comp.iter().copied());
        if comp.len() > best.len() {
            best = comp;
        }
    }
    best
}

/// Finds the shared partition of two trees and, if `trigger` fires, binds a
/// coded flow over it. Ingress is the partition's entry node; egress nodes
/// are partition nodes where either tree leaves the partition or that
/// subscribe to either flow.
pub fn plan_coded_subgraph(
    graph: &Graph,
    tree_a: &DeliveryTree,
    tree_b: &DeliveryTree,
    trigger: Trigger,
    k: usize,
    seed: u64,
) -> Result<Option<NcBinding>, BloomError> {
    if let Some(e) = tree_a.edges.iter().chain(&tree_b.edges).find(|e| !graph.has_edge(**e)) {
        return Err(BloomError::UnknownEdge(*e));
    }
    if tree_a.flow == tree_b.flow {
        return Err(BloomError::DegenerateBinding);
    }
    let shared: BTreeSet<Edge> = tree_a.edges.intersection(&tree_b.edges).copied().collect();
    if shared.is_empty() || !trigger_fires(trigger, tree_a, tree_b) {
        return Ok(None);
    }
    let part = largest_component(&shared);
    let nodes: BTreeSet<u32> = part.iter().flat_map(|e| [e.from, e.to]).collect();
    let heads: BTreeSet<u32> = part.iter().map(|e| e.to).collect();
    let ingress = *nodes
        .iter()
        .find(|n| !heads.contains(n))
        .expect("a subtree of a tree has a root");
    let egress = nodes
        .iter()
        .copied()
        .filter(|&n| n != ingress)
        .filter(|&n| {
            let leaves = tree_a
                .edges
                .iter()
                .chain(&tree_b.edges)
                .any(|e| e.from == n && !part.contains(e));
            leaves || tree_a.subscribers.contains(&n) || tree_b.subscribers.contains(&n)
        })
        .collect();
    NcBinding::new(tree_a, tree_b, part, ingress, egress, k, seed).map(Some)
}
