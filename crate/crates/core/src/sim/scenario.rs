use serde::{Deserialize, Serialize};

use crate::ccn::{ContentName, TraceRecord};

use super::bloom::{run_bloom, BloomParams};
use super::ccn_net::{run_ccn, CcnRun, ConsumerSpec, RunOutput};
use super::fig1::{run_push, PushParams};
use super::topology::{LinkSpec, NodeConfig, NodeSpec, Role, Topology};
use super::SimError;

fn default_seed() -> u64 {
    1
}

fn default_max_time() -> f64 {
    600.0
}

fn yes() -> bool {
    true
}

/// Top-level experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Run both the coded and the uncoded arm.
    #[serde(default)]
    pub compare: bool,
    /// Arm to run when not comparing.
    #[serde(default = "yes")]
    pub nc: bool,
    /// Simulated-time horizon in seconds.
    #[serde(default = "default_max_time")]
    pub max_time: f64,
    pub scenario: ScenarioKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioKind {
    Fig1(PushParams),
    Multipath(CcnParams),
    CachingDelay(CcnParams),
    RateAdditivity(CcnParams),
    BloomFp(BloomParams),
}

impl ScenarioKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::Fig1(_) => "fig1",
            ScenarioKind::Multipath(_) => "multipath",
            ScenarioKind::CachingDelay(_) => "caching_delay",
            ScenarioKind::RateAdditivity(_) => "rate_additivity",
            ScenarioKind::BloomFp(_) => "bloom_fp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodingParams {
    /// Generation size; each kind supplies its own default.
    pub k: Option<usize>,
    pub chunk_size: usize,
}

impl Default for CodingParams {
    fn default() -> Self {
        Self {
            k: None,
            chunk_size: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Workload {
    pub object: String,
    pub chunks: Option<usize>,
    /// Empty means the kind's canonical consumer schedule.
    pub consumers: Vec<ConsumerSpec>,
}

impl Default for Workload {
    fn default() -> Self {
        Self {
            object: "www.foo.com/Dir/File".into(),
            chunks: None,
            consumers: Vec::new(),
        }
    }
}

/// Interest/Data scenario parameters; anything omitted takes the kind's
/// canonical value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CcnParams {
    pub topology: Option<Topology>,
    pub coding: CodingParams,
    pub workload: Workload,
}

fn node(id: &str, role: Role) -> NodeSpec {
    NodeSpec {
        id: id.into(),
        role,
        config: NodeConfig::default(),
    }
}

/// Canonical topology, object size and consumer schedule of a kind.
fn canonical(kind: &ScenarioKind) -> (Topology, usize, Vec<ConsumerSpec>) {
    match kind {
        ScenarioKind::Multipath(_) => (
            Topology {
                nodes: vec![node("C", Role::Consumer), node("S", Role::Repository)],
                links: vec![
                    LinkSpec::new("C", "S", 0.01).with_id("wifi"),
                    LinkSpec::new("C", "S", 0.05).with_id("3g"),
                ],
            },
            2,
            vec![ConsumerSpec {
                sync_rounds: true,
                ..ConsumerSpec::new("C")
            }],
        ),
        ScenarioKind::CachingDelay(_) => (
            Topology {
                nodes: vec![
                    node("N", Role::Consumer),
                    node("R", Role::Router),
                    node("repo1", Role::Repository),
                    node("repo2", Role::Repository),
                ],
                links: vec![
                    LinkSpec::new("N", "R", 0.015625),
                    LinkSpec::new("R", "repo1", 0.0625),
                    LinkSpec::new("R", "repo2", 0.0625),
                ],
            },
            2,
            vec![ConsumerSpec::new("N")],
        ),
        _ => (
            Topology {
                nodes: vec![node("C", Role::Consumer), node("S", Role::Repository)],
                links: vec![
                    LinkSpec::new("C", "S", 0.001).with_id("wifi").with_capacity(30.0),
                    LinkSpec::new("C", "S", 0.001).with_id("3g").with_capacity(10.0),
                ],
            },
            40,
            vec![ConsumerSpec {
                window: 4,
                ..ConsumerSpec::new("C")
            }],
        ),
    }
}

/// Every arm of one scenario run, uncoded arm first.
#[derive(Default)]
pub struct ScenarioOutcome {
    pub arms: Vec<RunOutput>,
}

impl ScenarioOutcome {
    pub fn arm(&self, name: &str) -> Option<&RunOutput> {
        self.arms.iter().find(|a| a.metrics.arm == name)
    }
}

pub fn trace_text(trace: &[TraceRecord]) -> String {
    let mut out = String::new();
    for r in trace {
        out.push_str(&r.to_string());
        out.push('\n');
    }
    out
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::Config(e.to_string()))
    }

    /// Arms to run: `false` is uncoded, `true` coded.
    pub fn arms(&self) -> Vec<bool> {
        if self.compare {
            vec![false, true]
        } else {
            vec![self.nc]
        }
    }

    fn ccn_run(&self, params: &CcnParams, nc: bool) -> Result<CcnRun, SimError> {
        let (topo, chunks, consumers) = canonical(&self.scenario);
        let topology = params.topology.clone().unwrap_or(topo);
        let chunks = params.workload.chunks.unwrap_or(chunks);
        let consumers = if params.workload.consumers.is_empty() {
            consumers
        } else {
            params.workload.consumers.clone()
        };
        let object: ContentName = params
            .workload
            .object
            .parse()
            .map_err(|e| SimError::Config(format!("workload object: {e}")))?;
        Ok(CcnRun {
            scenario: self.name.clone(),
            kind: self.scenario.name().into(),
            topology: topology.resolve()?,
            object,
            chunks,
            chunk_size: params.coding.chunk_size,
            k: params.coding.k.unwrap_or(chunks.clamp(1, 64)),
            consumers,
            nc,
            seed: self.seed,
            max_time: self.max_time,
        })
    }
}

/// Builds the scenario's network and runs the requested arms.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioOutcome, SimError> {
    if cfg.max_time.is_nan() || cfg.max_time <= 0.0 {
        return Err(SimError::Config("max_time must be positive".into()));
    }
    let mut out = ScenarioOutcome::default();
    for nc in cfg.arms() {
        let arm = match &cfg.scenario {
            ScenarioKind::Fig1(p) => run_push(&cfg.name, p, nc, cfg.seed)?,
            ScenarioKind::BloomFp(p) => run_bloom(&cfg.name, p, nc, cfg.seed)?,
            ScenarioKind::Multipath(p) | ScenarioKind::CachingDelay(p) | ScenarioKind::RateAdditivity(p) => {
                run_ccn(&cfg.ccn_run(p, nc)?)?
            }
        };
        out.arms.push(arm);
    }
    Ok(out)
}
