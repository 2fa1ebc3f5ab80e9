use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ccn::ForwarderStats;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkMetrics {
    pub transmissions: u64,
    pub bytes: u64,
    pub losses: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConsumerMetrics {
    /// Data transmissions whose next hop was this consumer.
    pub addressed: u64,
    pub received: u64,
    pub innovative: u64,
    pub wasted: u64,
    pub lost: u64,
    pub in_flight: u64,
    pub useful_ratio: f64,
    pub complete: bool,
    pub completion_time: Option<f64>,
    /// Decoded or received content matched the published object byte for byte.
    pub content_verified: bool,
    pub rank: u64,
    pub held_chunks: Vec<u32>,
    /// Arrival time of each innovative chunk.
    pub innovative_times: Vec<f64>,
    /// For each innovative chunk, time since the Interest it answered was (last) sent.
    pub retrieval_times: Vec<f64>,
    pub interests_sent: u64,
    pub retransmissions: u64,
    pub abandoned: u64,
}

impl ConsumerMetrics {
    pub fn finish_ratio(&mut self) {
        self.useful_ratio = if self.received == 0 {
            0.0
        } else {
            self.innovative as f64 / self.received as f64
        };
    }
}

/// Traffic attributable to a consumer's first batch of Interests.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub interests: u64,
    pub received: u64,
    pub innovative: u64,
    pub useful_ratio: f64,
    /// Link transmissions of the batch's Interests and the Data they elicited.
    pub transmissions: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BindingSummary {
    pub derived_flow: String,
    pub ingress: String,
    pub egress: Vec<String>,
    pub shared_edges: usize,
    pub a_only_edges: usize,
    pub b_only_edges: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BloomMetrics {
    pub tree_a_edges: usize,
    pub tree_b_edges: usize,
    pub analytic_fp_a: f64,
    pub analytic_fp_b: f64,
    pub binding: Option<BindingSummary>,
    pub false_positive_deliveries: u64,
    pub flow_transmissions: u64,
    pub coded_transmissions: u64,
    pub generations_coded: u64,
    pub generations_decoded: u64,
    pub generation_losses: u64,
    pub padded_flushes: u64,
    pub stalled_packets: u64,
    /// Per subscriber: sorted `flow/seq/payload-digest` entries.
    pub deliveries: BTreeMap<String, Vec<String>>,
}

/// Everything a run reports; key order is fixed for byte-stable JSON.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub scenario: String,
    pub kind: String,
    pub arm: String,
    pub seed: u64,
    pub events: u64,
    pub end_time: f64,
    pub links: BTreeMap<String, LinkMetrics>,
    pub consumers: BTreeMap<String, ConsumerMetrics>,
    pub first_round: BTreeMap<String, RoundMetrics>,
    pub nodes: BTreeMap<String, ForwarderStats>,
    pub bloom: Option<BloomMetrics>,
}

impl Metrics {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics always serialize")
    }

    pub fn total_transmissions(&self) -> u64 {
        self.links.values().map(|l| l.transmissions).sum()
    }
}
