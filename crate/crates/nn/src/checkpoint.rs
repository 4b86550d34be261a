//! Plain-text parameter checkpoints.
//!
//! ```text
//! aerial-params v1
//! count <n>
//! param <name> <rank> <dim_0> ... <dim_{rank-1}>
//! <value> <value> ...
//! ```
//!
//! One `param` header line per tensor, followed by a single line of its
//! row-major values. Values are written in shortest round-trip form, so a
//! save/load cycle is bit-exact. Names may not contain whitespace.

use std::io::{BufRead, Write};

use crate::error::NnError;
use crate::params::ParameterStore;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &str = "aerial-params";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(store: &ParameterStore, mut out: W) -> Result<(), NnError> {
    writeln!(out, "{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION}")?;
    writeln!(out, "count {}", store.len())?;
    for (name, value) in store.names().iter().zip(store.values()) {
        if name.chars().any(char::is_whitespace) || name.is_empty() {
            return Err(NnError::Checkpoint(format!("unwritable parameter name {name:?}")));
        }
        let dims: Vec<String> = value.shape().iter().map(usize::to_string).collect();
        writeln!(out, "param {name} {} {}", dims.len(), dims.join(" "))?;
        let vals: Vec<String> = value.data().iter().map(|v| format!("{v:?}")).collect();
        writeln!(out, "{}", vals.join(" "))?;
    }
    Ok(())
}

/// Reads every named tensor in file order.
pub fn read_checkpoint<R: BufRead>(input: R) -> Result<Vec<(String, Tensor)>, NnError> {
    let bad = |msg: String| NnError::Checkpoint(msg);
    let mut lines = input.lines();
    let mut next = |what: &str| -> Result<String, NnError> {
        lines
            .next()
            .transpose()?
            .ok_or_else(|| NnError::Checkpoint(format!("unexpected end of file, expected {what}")))
    };
    let header = next("header")?;
    let expected = format!("{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION}");
    if header.trim() != expected {
        return Err(bad(format!("unsupported header {header:?}, expected {expected:?}")));
    }
    let count_line = next("count")?;
    let count: usize = count_line
        .strip_prefix("count ")
        .and_then(|c| c.trim().parse().ok())
        .ok_or_else(|| bad(format!("malformed count line {count_line:?}")))?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let head = next("param header")?;
        let mut parts = head.split_whitespace();
        if parts.next() != Some("param") {
            return Err(bad(format!("malformed param header {head:?}")));
        }
        let name = parts
            .next()
            .ok_or_else(|| bad(format!("missing name in {head:?}")))?
            .to_string();
        let nums: Vec<usize> = parts
            .map(|p| p.parse().map_err(|_| bad(format!("bad dimension {p:?} in {head:?}"))))
            .collect::<Result<_, _>>()?;
        let (&rank, dims) = nums
            .split_first()
            .ok_or_else(|| bad(format!("missing rank in {head:?}")))?;
        if dims.len() != rank {
            return Err(bad(format!("rank {rank} does not match dimensions in {head:?}")));
        }
        let body = next("values")?;
        let data: Vec<f64> = body
            .split_whitespace()
            .map(|v| v.parse().map_err(|_| bad(format!("bad value {v:?} for {name}"))))
            .collect::<Result<_, _>>()?;
        let tensor = Tensor::new(dims.to_vec(), data)?;
        out.push((name, tensor));
    }
    Ok(out)
}

/// Overwrites every parameter of `store` from a checkpoint with exactly the
/// same names and shapes.
pub fn load_checkpoint<R: BufRead>(store: &mut ParameterStore, input: R) -> Result<(), NnError> {
    let entries = read_checkpoint(input)?;
    if entries.len() != store.len() {
        return Err(NnError::Checkpoint(format!(
            "checkpoint has {} parameters, model has {}",
            entries.len(),
            store.len()
        )));
    }
    for (name, value) in entries {
        let id = store.id(&name)?;
        store.set(id, value)?;
    }
    Ok(())
}
