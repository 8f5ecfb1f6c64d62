//! Checkpoint format: one JSON header line, then the raw little-endian
//! f32 parameter arrays in declared order. Loading cross-checks the
//! header's array manifest against the actual byte count.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{ModelConfig, ModelParams, NamedParam};
use crate::error::{Error, Result};
use crate::popdyn::{BucketingKind, PopConfig, TimeBucketing};

/// Everything a later pipeline stage must agree on. The bucketing
/// origin is dataset-specific and deliberately excluded: zero-shot
/// transfer re-anchors periods on the target log.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PipelineConfig {
    pub model: ModelConfig,
    pub pop: PopConfig,
    pub bucketing_kind: BucketingKind,
    pub fine_len: i64,
    pub coarse_fine_ratio: u32,
}

impl PipelineConfig {
    pub fn new(model: ModelConfig, pop: PopConfig, bucketing: &TimeBucketing) -> Self {
        PipelineConfig {
            model,
            pop,
            bucketing_kind: bucketing.kind,
            fine_len: bucketing.fine_len,
            coarse_fine_ratio: bucketing.coarse_fine_ratio,
        }
    }

    /// Re-anchor this configuration's bucketing on a new dataset
    /// origin.
    pub fn bucketing_for(&self, origin: i64) -> Result<TimeBucketing> {
        TimeBucketing::from_raw(
            self.bucketing_kind,
            origin,
            self.fine_len,
            self.coarse_fine_ratio,
        )
    }

    /// Transfer guard: the popularity pipeline feeding the model must
    /// be built with the same γ, percentile width, window sizes, and
    /// bucketing. The prediction-time offset is a runtime knob and not
    /// part of the contract.
    pub fn compatible_for_transfer(&self, other: &PipelineConfig) -> std::result::Result<(), String> {
        let mut diffs = Vec::new();
        if self.pop.gamma != other.pop.gamma {
            diffs.push(format!("gamma {} vs {}", self.pop.gamma, other.pop.gamma));
        }
        if self.pop.include_inactive != other.pop.include_inactive {
            diffs.push("include_inactive differs".to_string());
        }
        let (a, b) = (self.model.windows, other.model.windows);
        if (a.k, a.m, a.n) != (b.k, b.m, b.n) {
            diffs.push(format!(
                "window (k,m,n) ({},{},{}) vs ({},{},{})",
                a.k, a.m, a.n, b.k, b.m, b.n
            ));
        }
        if self.bucketing_kind != other.bucketing_kind
            || self.fine_len != other.fine_len
            || self.coarse_fine_ratio != other.coarse_fine_ratio
        {
            diffs.push("bucketing differs".to_string());
        }
        if diffs.is_empty() {
            Ok(())
        } else {
            Err(diffs.join("; "))
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ArrayInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub len: usize,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub config: PipelineConfig,
    pub seed: u64,
    pub git_describe: String,
    pub dataset_fingerprint: String,
    pub arrays: Vec<ArrayInfo>,
    pub param_bytes: usize,
}

/// `git describe --always --dirty`, or `"unknown"` outside a work tree.
pub fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".to_string())
}

pub fn save_checkpoint(
    params: &ModelParams<f32>,
    config: &PipelineConfig,
    seed: u64,
    dataset_fingerprint: &str,
    path: &Path,
) -> Result<()> {
    let bytes = params.to_le_bytes();
    let header = CheckpointHeader {
        format_version: 1,
        config: *config,
        seed,
        git_describe: git_describe(),
        dataset_fingerprint: dataset_fingerprint.to_string(),
        arrays: params
            .params
            .iter()
            .map(|p| ArrayInfo {
                name: p.name.clone(),
                shape: p.shape.clone(),
                len: p.values.len(),
            })
            .collect(),
        param_bytes: bytes.len(),
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, &header)
        .map_err(|e| Error::data(format!("checkpoint header serialization: {e}")))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams<f32>, CheckpointHeader)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut header_line = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        r.read_exact(&mut byte)
            .map_err(|_| Error::data(format!("{}: truncated checkpoint header", path.display())))?;
        if byte[0] == b'\n' {
            break;
        }
        header_line.push(byte[0]);
    }
    let header: CheckpointHeader = serde_json::from_slice(&header_line)
        .map_err(|e| Error::data(format!("{}: bad checkpoint header: {e}", path.display())))?;
    let mut raw = Vec::new();
    r.read_to_end(&mut raw).map_err(|e| Error::io(path, e))?;

    let expected: usize = header.arrays.iter().map(|a| a.len * 4).sum();
    if raw.len() != expected || header.param_bytes != expected {
        return Err(Error::data(format!(
            "{}: parameter bytes {} do not match header manifest {} (declared {})",
            path.display(),
            raw.len(),
            expected,
            header.param_bytes
        )));
    }
    header.config.model.validate()?;

    let mut params = Vec::with_capacity(header.arrays.len());
    let mut off = 0usize;
    for info in &header.arrays {
        if info.shape.iter().product::<usize>() != info.len {
            return Err(Error::data(format!(
                "{}: array {} shape/len mismatch",
                path.display(),
                info.name
            )));
        }
        let mut values = Vec::with_capacity(info.len);
        for i in 0..info.len {
            let s = off + i * 4;
            values.push(f32::from_le_bytes(raw[s..s + 4].try_into().unwrap()));
        }
        off += info.len * 4;
        params.push(NamedParam {
            name: info.name.clone(),
            shape: info.shape.clone(),
            values,
        });
    }
    let loaded = ModelParams {
        config: header.config.model,
        params,
    };
    let expected_count = super::count_params(&loaded.config);
    if loaded.total_len() != expected_count {
        return Err(Error::data(format!(
            "{}: checkpoint holds {} parameters, config implies {}",
            path.display(),
            loaded.total_len(),
            expected_count
        )));
    }
    Ok((loaded, header))
}
