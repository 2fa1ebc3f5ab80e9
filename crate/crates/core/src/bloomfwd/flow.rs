use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::BloomError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlowId(pub u64);

impl fmt::Display for FlowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

/// First 8 bytes of SHA-256 over `min(a,b) || max(a,b)`, both big-endian.
pub fn derive_flow_id(a: FlowId, b: FlowId) -> Result<FlowId, BloomError> {
    if a == b {
        return Err(BloomError::DegenerateBinding);
    }
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let mut h = Sha256::new();
    h.update(lo.0.to_be_bytes());
    h.update(hi.0.to_be_bytes());
    let out = h.finalize();
    Ok(FlowId(u64::from_be_bytes(out[..8].try_into().expect("8 bytes"))))
}
