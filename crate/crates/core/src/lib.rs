//! Few-shot estimation of per-cell coverage KPIs with graph neural networks.
//!
//! The pipeline runs from a cell configuration [`scenario`], through a
//! propagation oracle ([`radio`]) that produces ground-truth KPI bins, to an
//! attributed inter-cell graph ([`graph`]) with geometric pretext targets
//! ([`geometry`]). Message-passing backbones ([`models`]) built on a small
//! reverse-mode autodiff engine ([`tensor`]) are trained either with full
//! supervision or with self-supervised pretraining followed by few-shot
//! fine-tuning ([`training`]).

pub mod bench;
pub mod error;
pub mod geometry;
pub mod graph;
pub mod models;
pub mod radio;
pub mod scenario;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};

use std::path::Path;

/// Writes `text` to `path`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
