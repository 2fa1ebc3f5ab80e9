//! Deterministic discrete-event harness and the scenario drivers built on it.

pub mod bloom;
pub mod ccn_net;
pub mod engine;
pub mod fig1;
pub mod links;
pub mod metrics;
pub mod scenario;
pub mod topology;

use thiserror::Error;

pub use ccn_net::{ConsumerSpec, RunOutput};
pub use engine::Scheduler;
pub use links::{LinkParams, LinkTable, TxOutcome};
pub use metrics::{BindingSummary, BloomMetrics, ConsumerMetrics, LinkMetrics, Metrics, RoundMetrics};
pub use scenario::{run_scenario, ScenarioConfig, ScenarioKind, ScenarioOutcome};
pub use topology::{LinkSpec, NodeConfig, NodeSpec, Role, RouteSpec, ScriptedDrop, Topology};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl SimError {
    /// Process exit code for command-line front ends.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config(_) => 2,
            SimError::Invariant(_) | SimError::Internal(_) => 3,
        }
    }
}

/// Deterministic object payload: `chunks` chunks of `chunk_size` bytes.
pub fn object_payload(seed: u64, chunks: usize, chunk_size: usize) -> Vec<Vec<u8>> {
    use rand::{RngCore, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x0b1e_c7da_7a00_0000);
    (0..chunks)
        .map(|_| {
            let mut v = vec![0u8; chunk_size];
            rng.fill_bytes(&mut v);
            v
        })
        .collect()
}
