use std::fmt;

/// Event kind column of a trace line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    Interest,
    Data,
}

impl fmt::Display for TraceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraceKind::Interest => "INT",
            TraceKind::Data => "DATA",
        })
    }
}

/// One packet-arrival event. Rendered as a tab-separated line:
///
/// `time  node  kind  face  name  nonce-or-gen  vector`
///
/// Time is seconds with nine decimals. Interests carry their nonce as 16 hex
/// digits; coded Data carries the generation id in decimal; plain Data leaves
/// the column empty. The vector column is lowercase hex, empty for plain Data.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub time: f64,
    pub node: String,
    pub kind: TraceKind,
    pub face: u32,
    pub name: String,
    pub nonce_or_gen: String,
    pub vector: String,
}

impl TraceRecord {
    pub fn nonce_field(nonce: u64) -> String {
        format!("{nonce:016x}")
    }
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:.9}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.time, self.node, self.kind, self.face, self.name, self.nonce_or_gen, self.vector
        )
    }
}
