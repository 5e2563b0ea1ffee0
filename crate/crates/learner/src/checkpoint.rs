//! Binary checkpoint format, little-endian throughout:
//!
//! ```text
//! magic    b"HXCK"
//! version  u32
//! hash     [u8; 32]   content hash of the run configuration
//! episodes u64        completed training episodes
//! count    u64        number of blocks
//! block*   name_len u32, name utf-8, ndim u32, dims u64 x ndim, data f64 x prod(dims)
//! ```
//!
//! Block names are `agent{i}/{actor|critic}/{param}`; Adam moments add
//! `agent{i}/{actor|critic}_opt/{m|v}/{param}` and a one-element `.../step`.

use std::collections::BTreeMap;
use std::path::Path;

use crate::agent::Agent;
use crate::error::{LearnError, Result};
use crate::optim::Optimizer;
use crate::tensor::{Block, ParamSet};

pub const MAGIC: &[u8; 4] = b"HXCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointHeader {
    pub config_hash: [u8; 32],
    pub episodes: u64,
}

fn push_set(out: &mut Vec<Block>, prefix: &str, set: &ParamSet) {
    for b in &set.blocks {
        out.push(Block {
            name: format!("{prefix}/{}", b.name),
            shape: b.shape.clone(),
            data: b.data.clone(),
        });
    }
}

fn push_opt(out: &mut Vec<Block>, prefix: &str, opt: &Optimizer) {
    if let Some((m, v)) = &opt.moments {
        push_set(out, &format!("{prefix}/m"), m);
        push_set(out, &format!("{prefix}/v"), v);
        out.push(Block {
            name: format!("{prefix}/step"),
            shape: vec![1],
            data: vec![opt.step as f64],
        });
    }
}

fn agent_blocks(agents: &[Agent]) -> Vec<Block> {
    let mut out = Vec::new();
    for (i, a) in agents.iter().enumerate() {
        push_set(&mut out, &format!("agent{i}/actor"), &a.policy.params);
        push_set(&mut out, &format!("agent{i}/critic"), &a.value.params);
        push_opt(&mut out, &format!("agent{i}/actor_opt"), &a.actor_opt);
        push_opt(&mut out, &format!("agent{i}/critic_opt"), &a.critic_opt);
    }
    out
}

pub fn encode(header: &CheckpointHeader, agents: &[Agent]) -> Vec<u8> {
    let blocks = agent_blocks(agents);
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&header.config_hash);
    buf.extend_from_slice(&header.episodes.to_le_bytes());
    buf.extend_from_slice(&(blocks.len() as u64).to_le_bytes());
    for b in &blocks {
        buf.extend_from_slice(&(b.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(b.name.as_bytes());
        buf.extend_from_slice(&(b.shape.len() as u32).to_le_bytes());
        for &d in &b.shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in &b.data {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    buf
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let Some(end) = end else {
            return Err(LearnError::Checkpoint("truncated file".into()));
        };
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Parses a checkpoint into its header and a name-indexed block map.
pub fn decode(bytes: &[u8]) -> Result<(CheckpointHeader, BTreeMap<String, Block>)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(LearnError::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(LearnError::Checkpoint(format!("unsupported version {version}")));
    }
    let config_hash: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
    let episodes = r.u64()?;
    let count = r.u64()?;
    let mut blocks = BTreeMap::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| LearnError::Checkpoint("block name is not utf-8".into()))?;
        let ndim = r.u32()? as usize;
        let shape = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(8).ok_or_else(|| LearnError::Checkpoint("block too large".into()))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        blocks.insert(name.clone(), Block { name, shape, data });
    }
    if r.pos != bytes.len() {
        return Err(LearnError::Checkpoint("trailing bytes".into()));
    }
    Ok((CheckpointHeader { config_hash, episodes }, blocks))
}

fn fill_set(blocks: &mut BTreeMap<String, Block>, prefix: &str, set: &mut ParamSet) -> Result<()> {
    for b in &mut set.blocks {
        let key = format!("{prefix}/{}", b.name);
        let src = blocks
            .remove(&key)
            .ok_or_else(|| LearnError::Checkpoint(format!("missing block {key}")))?;
        if src.shape != b.shape {
            return Err(LearnError::Checkpoint(format!(
                "block {key} has shape {:?}, expected {:?}",
                src.shape, b.shape
            )));
        }
        b.data = src.data;
    }
    Ok(())
}

fn fill_opt(blocks: &mut BTreeMap<String, Block>, prefix: &str, opt: &mut Optimizer) -> Result<()> {
    if let Some((m, v)) = &mut opt.moments {
        fill_set(blocks, &format!("{prefix}/m"), m)?;
        fill_set(blocks, &format!("{prefix}/v"), v)?;
        let key = format!("{prefix}/step");
        let step = blocks
            .remove(&key)
            .ok_or_else(|| LearnError::Checkpoint(format!("missing block {key}")))?;
        opt.step = step.data.first().copied().unwrap_or(0.0) as u64;
    }
    Ok(())
}

/// Loads parameters into `agents`, whose architecture and optimizer kinds
/// define the expected shapes. Extra or missing blocks are errors.
pub fn restore(bytes: &[u8], agents: &mut [Agent]) -> Result<CheckpointHeader> {
    let (header, mut blocks) = decode(bytes)?;
    for (i, a) in agents.iter_mut().enumerate() {
        fill_set(&mut blocks, &format!("agent{i}/actor"), &mut a.policy.params)?;
        fill_set(&mut blocks, &format!("agent{i}/critic"), &mut a.value.params)?;
        fill_opt(&mut blocks, &format!("agent{i}/actor_opt"), &mut a.actor_opt)?;
        fill_opt(&mut blocks, &format!("agent{i}/critic_opt"), &mut a.critic_opt)?;
    }
    if let Some(extra) = blocks.keys().next() {
        return Err(LearnError::Checkpoint(format!("unexpected block {extra}")));
    }
    Ok(header)
}

pub fn save(path: &Path, header: &CheckpointHeader, agents: &[Agent]) -> Result<()> {
    std::fs::write(path, encode(header, agents))?;
    Ok(())
}

pub fn load(path: &Path, agents: &mut [Agent]) -> Result<CheckpointHeader> {
    restore(&std::fs::read(path)?, agents)
}
