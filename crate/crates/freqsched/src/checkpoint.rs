//! Binary parameter checkpoints.
//!
//! Layout: an 8-byte magic, a little-endian `u32` version, a
//! length-prefixed structured text block (`key = value` lines) describing
//! the architecture, problem dimensions and environment digest, the
//! parameter leaves (name, shape, 32-bit little-endian IEEE-754 values),
//! and a trailing FNV-1a checksum over everything before it.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::agents::{AgentSpec, ProblemDims, Variant};
use crate::env::EnvConfig;
use crate::error::Error;
use crate::numerics::ParamTree;
use crate::Result;

const MAGIC: &[u8; 8] = b"FQSCHKPT";
const VERSION: u32 = 1;

/// FNV-1a over a byte slice; used for checkpoint integrity and config
/// digests.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Digest of an environment configuration (canonical text form).
pub fn env_digest(config: &EnvConfig) -> u64 {
    let text = toml::to_string(config).expect("EnvConfig always serializes");
    fnv1a64(text.as_bytes())
}

/// A loaded checkpoint: the architecture, the dimensions it was built
/// for, the digest of the training environment, and the parameters.
#[derive(Debug)]
pub struct Checkpoint {
    pub spec: AgentSpec,
    pub dims: ProblemDims,
    pub env_digest: u64,
    pub params: ParamTree,
}

fn header_text(spec: &AgentSpec, dims: &ProblemDims, env_digest: u64) -> String {
    let mut s = String::new();
    s.push_str(&format!("variant = {}\n", spec.variant.name()));
    s.push_str(&format!("local_repr_size = {}\n", spec.local_repr_size));
    s.push_str(&format!("shared_repr_size = {}\n", spec.shared_repr_size));
    s.push_str(&format!("branch_layers = {}\n", spec.branch_layers));
    s.push_str(&format!("shared_layers = {}\n", spec.shared_layers));
    s.push_str(&format!("gnn_iterations = {}\n", spec.gnn_iterations));
    s.push_str(&format!("gnn_heads = {}\n", spec.gnn_heads));
    s.push_str(&format!("positional_encoding = {}\n", spec.positional_encoding));
    s.push_str(&format!("n_subbands = {}\n", dims.n_subbands));
    s.push_str(&format!("n_actions = {}\n", dims.n_actions));
    s.push_str(&format!("feature_len = {}\n", dims.feature_len));
    s.push_str(&format!("env_digest = {env_digest:016x}\n"));
    s
}

fn parse_header(text: &str) -> Result<(AgentSpec, ProblemDims, u64)> {
    let mut map = HashMap::new();
    for line in text.lines() {
        if let Some((k, v)) = line.split_once('=') {
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    let get = |key: &str| {
        map.get(key)
            .ok_or_else(|| Error::Checkpoint(format!("header is missing `{key}`")))
    };
    let parse_usize = |key: &str| -> Result<usize> {
        get(key)?
            .parse()
            .map_err(|_| Error::Checkpoint(format!("header field `{key}` is not a number")))
    };
    let spec = AgentSpec {
        variant: Variant::parse(get("variant")?)?,
        local_repr_size: parse_usize("local_repr_size")?,
        shared_repr_size: parse_usize("shared_repr_size")?,
        branch_layers: parse_usize("branch_layers")?,
        shared_layers: parse_usize("shared_layers")?,
        gnn_iterations: parse_usize("gnn_iterations")?,
        gnn_heads: parse_usize("gnn_heads")?,
        positional_encoding: get("positional_encoding")? == "true",
    };
    let dims = ProblemDims {
        n_subbands: parse_usize("n_subbands")?,
        n_actions: parse_usize("n_actions")?,
        feature_len: parse_usize("feature_len")?,
    };
    let digest = u64::from_str_radix(get("env_digest")?, 16)
        .map_err(|_| Error::Checkpoint("header field `env_digest` is not hex".into()))?;
    Ok((spec, dims, digest))
}

/// Serializes a checkpoint to bytes.
pub fn encode(spec: &AgentSpec, dims: &ProblemDims, env_digest: u64, params: &ParamTree) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let header = header_text(spec, dims, env_digest);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&(params.n_leaves() as u32).to_le_bytes());
    for leaf in params.leaves() {
        let name = leaf.name.as_bytes();
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        out.push(leaf.shape.len() as u8);
        for &d in &leaf.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &leaf.values {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let checksum = fnv1a64(&out);
    out.extend_from_slice(&checksum.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint("file is truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
}

/// Parses a checkpoint from bytes, verifying magic, version and checksum.
pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < MAGIC.len() + 12 {
        return Err(Error::Checkpoint("file is too short".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().unwrap());
    if fnv1a64(body) != stored {
        return Err(Error::Checkpoint("integrity checksum mismatch".into()));
    }
    let mut r = Reader { bytes: body, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic; not a checkpoint file".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let header_len = r.u32()? as usize;
    let header = std::str::from_utf8(r.take(header_len)?)
        .map_err(|_| Error::Checkpoint("header is not UTF-8".into()))?;
    let (spec, dims, env_digest) = parse_header(header)?;

    let n_leaves = r.u32()? as usize;
    let mut params = ParamTree::new();
    for _ in 0..n_leaves {
        let name_len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Checkpoint("leaf name is not UTF-8".into()))?
            .to_string();
        let ndim = r.u8()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32()? as usize);
        }
        let count: usize = shape.iter().product();
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            let raw: [u8; 4] = r.take(4)?.try_into().unwrap();
            values.push(f32::from_le_bytes(raw) as f64);
        }
        params.add_leaf(&name, shape, values);
    }
    if r.pos != body.len() {
        return Err(Error::Checkpoint("trailing bytes after the last leaf".into()));
    }
    Ok(Checkpoint {
        spec,
        dims,
        env_digest,
        params,
    })
}

pub fn save(
    path: &Path,
    spec: &AgentSpec,
    dims: &ProblemDims,
    env_digest: u64,
    params: &ParamTree,
) -> Result<()> {
    fs::write(path, encode(spec, dims, env_digest, params))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)
        .map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
    decode(&bytes)
}
