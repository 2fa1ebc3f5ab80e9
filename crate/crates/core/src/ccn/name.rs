use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Literal component that asks for any innovative coded chunk.
pub const NC_MARKER: &str = "NCChunk";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NameError {
    #[error("name has no components")]
    Empty,
    #[error("empty component in {0:?}")]
    EmptyComponent(String),
    #[error("malformed chunk label {0:?}")]
    MalformedChunk(String),
}

/// Trailing component selecting a chunk of the named object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ChunkComponent {
    /// `C<n>`, 1-based.
    Index(u32),
    /// `NCChunk`.
    Coded,
}

/// What an Interest name asks for once the implicit-first-chunk rule is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChunkRequest {
    Plain(u32),
    Coded,
}

/// Hierarchical content name such as `www.foo.com/Dir/File/C1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContentName {
    components: Vec<String>,
    chunk: Option<ChunkComponent>,
}

impl ContentName {
    pub fn new<S: Into<String>>(
        components: impl IntoIterator<Item = S>,
        chunk: Option<ChunkComponent>,
    ) -> Result<Self, NameError> {
        let components: Vec<String> = components.into_iter().map(Into::into).collect();
        if components.is_empty() {
            return Err(NameError::Empty);
        }
        if let Some(c) = components.iter().find(|c| c.is_empty() || c.contains('/')) {
            return Err(NameError::EmptyComponent(c.clone()));
        }
        Ok(Self { components, chunk })
    }

    pub fn components(&self) -> &[String] {
        &self.components
    }

    pub fn chunk(&self) -> Option<ChunkComponent> {
        self.chunk
    }

    /// The object name with any chunk component removed.
    pub fn object(&self) -> ContentName {
        Self {
            components: self.components.clone(),
            chunk: None,
        }
    }

    pub fn with_chunk(&self, index: u32) -> ContentName {
        Self {
            components: self.components.clone(),
            chunk: Some(ChunkComponent::Index(index)),
        }
    }

    pub fn with_nc_marker(&self) -> ContentName {
        Self {
            components: self.components.clone(),
            chunk: Some(ChunkComponent::Coded),
        }
    }

    /// Bare object names implicitly request the first chunk.
    pub fn resolve_implicit(&self) -> ChunkRequest {
        match self.chunk {
            None => ChunkRequest::Plain(1),
            Some(ChunkComponent::Index(n)) => ChunkRequest::Plain(n),
            Some(ChunkComponent::Coded) => ChunkRequest::Coded,
        }
    }

    /// Component-wise prefix test; the chunk component counts as the last component.
    pub fn is_prefix_of(&self, other: &ContentName) -> bool {
        if self.components.len() > other.components.len() {
            return false;
        }
        if self.components[..] != other.components[..self.components.len()] {
            return false;
        }
        match self.chunk {
            None => true,
            Some(c) => self.components.len() == other.components.len() && other.chunk == Some(c),
        }
    }
}

fn parse_chunk(label: &str) -> Result<Option<ChunkComponent>, NameError> {
    if label == NC_MARKER {
        return Ok(Some(ChunkComponent::Coded));
    }
    let Some(rest) = label.strip_prefix('C') else {
        return Ok(None);
    };
    if !rest.starts_with(|c: char| c.is_ascii_digit()) {
        return Ok(None);
    }
    let malformed = || NameError::MalformedChunk(label.to_owned());
    if !rest.bytes().all(|b| b.is_ascii_digit()) {
        return Err(malformed());
    }
    match rest.parse::<u32>() {
        Ok(n) if n >= 1 => Ok(Some(ChunkComponent::Index(n))),
        _ => Err(malformed()),
    }
}

impl FromStr for ContentName {
    type Err = NameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.strip_suffix('/').unwrap_or(s);
        if trimmed.is_empty() {
            return Err(NameError::Empty);
        }
        let mut parts: Vec<&str> = trimmed.split('/').collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(NameError::EmptyComponent(s.to_owned()));
        }
        let chunk = parse_chunk(parts.last().expect("split yields at least one part"))?;
        if chunk.is_some() {
            parts.pop();
        }
        ContentName::new(parts, chunk)
    }
}

impl fmt::Display for ContentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.components.join("/"))?;
        match self.chunk {
            None => Ok(()),
            Some(ChunkComponent::Index(n)) => write!(f, "/C{n}"),
            Some(ChunkComponent::Coded) => write!(f, "/{NC_MARKER}"),
        }
    }
}
