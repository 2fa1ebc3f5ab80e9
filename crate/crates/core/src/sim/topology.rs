use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::ccn::{CacheGranularity, FaceId, Strategy};

use super::links::LinkParams;
use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Consumer,
    Router,
    Repository,
    NcBorder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteSpec {
    pub prefix: String,
    /// Link ids or neighbour node ids, in tie-break order.
    pub via: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NodeConfig {
    pub cache_capacity: usize,
    pub granularity: CacheGranularity,
    pub strategy: Strategy,
    /// Whether the node may take part in coding when the arm enables it.
    pub nc_enabled: bool,
    pub cache_coded: bool,
    pub routes: Vec<RouteSpec>,
}

impl Default for NodeConfig {
    fn default() -> Self {
        Self {
            cache_capacity: 64,
            granularity: CacheGranularity::Chunk,
            strategy: Strategy::BestRoute,
            nc_enabled: true,
            cache_coded: true,
            routes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: String,
    pub role: Role,
    #[serde(default)]
    pub config: NodeConfig,
}

/// Drop the `ordinal`-th (1-based) packet sent by node `from` over the link.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedDrop {
    pub from: String,
    pub ordinal: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    #[serde(default)]
    pub id: Option<String>,
    pub a: String,
    pub b: String,
    /// Seconds, one way.
    pub latency: f64,
    /// Chunks per second; omitted means packets are not serialized.
    #[serde(default)]
    pub capacity: Option<f64>,
    #[serde(default)]
    pub loss: f64,
    #[serde(default)]
    pub drops: Vec<ScriptedDrop>,
}

impl LinkSpec {
    pub fn new(a: &str, b: &str, latency: f64) -> Self {
        Self {
            id: None,
            a: a.into(),
            b: b.into(),
            latency,
            capacity: None,
            loss: 0.0,
            drops: Vec::new(),
        }
    }

    pub fn with_id(mut self, id: &str) -> Self {
        self.id = Some(id.into());
        self
    }

    pub fn with_capacity(mut self, c: f64) -> Self {
        self.capacity = Some(c);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    pub nodes: Vec<NodeSpec>,
    pub links: Vec<LinkSpec>,
}

/// Index-based view of a validated topology.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub names: Vec<String>,
    pub roles: Vec<Role>,
    pub configs: Vec<NodeConfig>,
    pub links: Vec<LinkParams>,
    pub link_labels: Vec<String>,
    pub scripted: BTreeSet<(usize, usize, u64)>,
    /// Per node, per face: (link, direction leaving the node).
    pub faces: Vec<Vec<(usize, usize)>>,
    /// Per node: FIB prefix → faces.
    pub routes: Vec<Vec<(String, Vec<FaceId>)>>,
}

impl Resolved {
    /// Face at the receiving end of `link` travelled in direction `dir`.
    pub fn arrival_face(&self, node: usize, link: usize, dir: usize) -> FaceId {
        let f = self.faces[node]
            .iter()
            .position(|&(l, d)| l == link && d == 1 - dir)
            .expect("links are incident to both endpoints");
        FaceId(f as u32)
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn direction_label(&self, link: usize, dir: usize) -> String {
        let p = &self.links[link];
        let (from, to) = if dir == 0 { (p.a, p.b) } else { (p.b, p.a) };
        format!("{}:{}->{}", self.link_labels[link], self.names[from], self.names[to])
    }
}

fn cfg_err(msg: String) -> SimError {
    SimError::Config(msg)
}

impl Topology {
    pub fn resolve(&self) -> Result<Resolved, SimError> {
        let mut index = BTreeMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id.is_empty() {
                return Err(cfg_err("node id must not be empty".into()));
            }
            if index.insert(n.id.as_str(), i).is_some() {
                return Err(cfg_err(format!("duplicate node id {:?}", n.id)));
            }
        }
        let lookup = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| cfg_err(format!("link endpoint {name:?} is not a node")))
        };
        let mut links = Vec::new();
        let mut labels = Vec::new();
        let mut scripted = BTreeSet::new();
        let mut faces = vec![Vec::new(); self.nodes.len()];
        let mut seen_ids = BTreeSet::new();
        for (l, spec) in self.links.iter().enumerate() {
            let a = lookup(&spec.a)?;
            let b = lookup(&spec.b)?;
            let label = spec.id.clone().unwrap_or_else(|| format!("l{l}"));
            if !seen_ids.insert(label.clone()) {
                return Err(cfg_err(format!("duplicate link id {label:?}")));
            }
            if a == b {
                return Err(cfg_err(format!("link {label} connects {} to itself", spec.a)));
            }
            if !(spec.latency.is_finite() && spec.latency > 0.0) {
                return Err(cfg_err(format!("link {label}: latency must be positive")));
            }
            if let Some(c) = spec.capacity {
                if !(c.is_finite() && c > 0.0) {
                    return Err(cfg_err(format!("link {label}: capacity must be positive")));
                }
            }
            if !(0.0..=1.0).contains(&spec.loss) {
                return Err(cfg_err(format!("link {label}: loss must lie in [0, 1]")));
            }
            for d in &spec.drops {
                let dir = if d.from == spec.a {
                    0
                } else if d.from == spec.b {
                    1
                } else {
                    return Err(cfg_err(format!(
                        "link {label}: drop sender {:?} is not an endpoint",
                        d.from
                    )));
                };
                if d.ordinal == 0 {
                    return Err(cfg_err(format!("link {label}: drop ordinals start at 1")));
                }
                scripted.insert((l, dir, d.ordinal));
            }
            faces[a].push((l, 0));
            faces[b].push((l, 1));
            links.push(LinkParams {
                a,
                b,
                latency: spec.latency,
                capacity: spec.capacity,
                loss: spec.loss,
            });
            labels.push(label);
        }

        let mut routes = Vec::new();
        for (i, n) in self.nodes.iter().enumerate() {
            let mut node_routes = Vec::new();
            for r in &n.config.routes {
                let prefix: crate::ccn::ContentName = r
                    .prefix
                    .parse()
                    .map_err(|e| cfg_err(format!("node {}: route prefix {:?}: {e}", n.id, r.prefix)))?;
                let mut out = Vec::new();
                for via in &r.via {
                    let matched: Vec<FaceId> = faces[i]
                        .iter()
                        .enumerate()
                        .filter(|(_, (l, d))| {
                            let p = &links[*l];
                            let other = if *d == 0 { p.b } else { p.a };
                            labels[*l] == *via || self.nodes[other].id == *via
                        })
                        .map(|(f, _)| FaceId(f as u32))
                        .collect();
                    if matched.is_empty() {
                        return Err(cfg_err(format!("node {}: route via {via:?} matches no face", n.id)));
                    }
                    out.extend(matched);
                }
                node_routes.push((prefix.to_string(), out));
            }
            routes.push(node_routes);
        }

        Ok(Resolved {
            names: self.nodes.iter().map(|n| n.id.clone()).collect(),
            roles: self.nodes.iter().map(|n| n.role).collect(),
            configs: self.nodes.iter().map(|n| n.config.clone()).collect(),
            links,
            link_labels: labels,
            scripted,
            faces,
            routes,
        })
    }
}
