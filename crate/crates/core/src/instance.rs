//! Instance and colouring files (versioned, pretty-printed JSON).

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correspondence::{Colour, Colouring, CorrespondenceFile, EdgeCorrespondence, Violation};
use crate::graph::{GraphError, GraphFile, SimpleGraph};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: line {line}, column {column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: unsupported version {found} (expected {FORMAT_VERSION})")]
    Version { path: String, found: u32 },
    #[error("{path}: {source}")]
    Graph {
        path: String,
        source: GraphError,
    },
    #[error("{path}: invalid correspondence: {source}")]
    Correspondence { path: String, source: Violation },
}

impl FileError {
    fn parse(path: &str, err: serde_json::Error) -> Self {
        FileError::Parse {
            path: path.to_string(),
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub version: u32,
    pub graph: GraphFile,
    pub correspondence: CorrespondenceFile,
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub graph: SimpleGraph,
    pub correspondence: EdgeCorrespondence,
}

impl Instance {
    pub fn to_file(&self) -> InstanceFile {
        InstanceFile {
            version: FORMAT_VERSION,
            graph: self.graph.to_file(),
            correspondence: self.correspondence.to_file(),
        }
    }

    pub fn to_json(&self) -> String {
        pretty(&self.to_file())
    }

    pub fn from_json(text: &str, path: &str) -> Result<Self, FileError> {
        let file: InstanceFile = serde_json::from_str(text).map_err(|e| FileError::parse(path, e))?;
        if file.version != FORMAT_VERSION {
            return Err(FileError::Version {
                path: path.into(),
                found: file.version,
            });
        }
        let graph = SimpleGraph::try_from(&file.graph).map_err(|source| FileError::Graph {
            path: path.into(),
            source,
        })?;
        let correspondence = EdgeCorrespondence::from(&file.correspondence);
        correspondence
            .validate(&graph)
            .map_err(|source| FileError::Correspondence {
                path: path.into(),
                source,
            })?;
        Ok(Instance { graph, correspondence })
    }

    pub fn load(path: &Path) -> Result<Self, FileError> {
        let p = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| FileError::Io { path: p.clone(), source })?;
        Self::from_json(&text, &p)
    }

    pub fn save(&self, path: &Path) -> Result<(), FileError> {
        write(path, &self.to_json())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColouringFile {
    pub version: u32,
    pub colours: Vec<Option<Colour>>,
}

pub fn colouring_to_json(c: &Colouring) -> String {
    pretty(&ColouringFile {
        version: FORMAT_VERSION,
        colours: c.as_slice().to_vec(),
    })
}

pub fn colouring_from_json(text: &str, path: &str) -> Result<Colouring, FileError> {
    let file: ColouringFile = serde_json::from_str(text).map_err(|e| FileError::parse(path, e))?;
    if file.version != FORMAT_VERSION {
        return Err(FileError::Version {
            path: path.into(),
            found: file.version,
        });
    }
    Ok(Colouring::from_options(file.colours))
}

pub fn load_colouring(path: &Path) -> Result<Colouring, FileError> {
    let p = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| FileError::Io { path: p.clone(), source })?;
    colouring_from_json(&text, &p)
}

pub fn save_colouring(c: &Colouring, path: &Path) -> Result<(), FileError> {
    write(path, &colouring_to_json(c))
}

/// Pretty JSON with a trailing newline.
pub fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

pub fn write(path: &Path, text: &str) -> Result<(), FileError> {
    std::fs::write(path, text).map_err(|source| FileError::Io {
        path: path.display().to_string(),
        source,
    })
}
