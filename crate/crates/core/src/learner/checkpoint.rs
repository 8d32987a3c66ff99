//! Binary checkpoint container.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! magic "GRSPCKPT" | version u32 | sha256(config) [32]
//! config_len u64 | config (UTF-8 TOML)
//! tensor_count u32
//! per tensor: name_len u32 | name | ndim u32 | dims u64 * ndim | values f64 * prod(dims)
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};

use super::ddpg::Agent;
use super::LearnError;

pub const MAGIC: &[u8; 8] = b"GRSPCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Full run configuration as TOML.
    pub config: String,
    pub tensors: Vec<TensorRecord>,
}

pub fn config_digest(config: &str) -> [u8; 32] {
    Sha256::digest(config.as_bytes()).into()
}

fn corrupt(msg: impl Into<String>) -> LearnError {
    LearnError::Checkpoint(msg.into())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], LearnError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| corrupt(format!("truncated while reading {what}")))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32, LearnError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64, LearnError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self, what: &str) -> Result<usize, LearnError> {
        usize::try_from(self.u64(what)?).map_err(|_| corrupt(format!("{what} too large")))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

impl Checkpoint {
    pub fn from_agent(config: String, agent: &Agent) -> Self {
        Self {
            config,
            tensors: agent
                .named_tensors()
                .into_iter()
                .map(|(name, shape, values)| TensorRecord {
                    name,
                    shape,
                    values: values.to_vec(),
                })
                .collect(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let values: usize = self.tensors.iter().map(|t| t.values.len()).sum();
        let mut out = Vec::with_capacity(64 + self.config.len() + 8 * values);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&config_digest(&self.config));
        out.extend_from_slice(&(self.config.len() as u64).to_le_bytes());
        out.extend_from_slice(self.config.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in &t.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, LearnError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8, "magic").ok() != Some(MAGIC.as_slice()) {
            return Err(corrupt("bad magic: not a checkpoint file"));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(corrupt(format!("unsupported version {version}")));
        }
        let digest: [u8; 32] = r.take(32, "digest")?.try_into().expect("32 bytes");
        let config_len = r.len("config length")?;
        let config = std::str::from_utf8(r.take(config_len, "config")?)
            .map_err(|_| corrupt("config is not UTF-8"))?
            .to_string();
        if config_digest(&config) != digest {
            return Err(corrupt("config digest mismatch"));
        }
        let count = r.u32("tensor count")?;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let name_len = r.u32("name length")? as usize;
            let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
                .map_err(|_| corrupt("tensor name is not UTF-8"))?
                .to_string();
            let ndim = r.u32("rank")? as usize;
            let mut shape = Vec::with_capacity(ndim.min(8));
            let mut count = 1usize;
            for _ in 0..ndim {
                let d = r.len("dimension")?;
                count = count
                    .checked_mul(d)
                    .ok_or_else(|| corrupt(format!("tensor {name} size overflows")))?;
                shape.push(d);
            }
            let bytes_needed = count
                .checked_mul(8)
                .ok_or_else(|| corrupt(format!("tensor {name} size overflows")))?;
            let raw = r.take(bytes_needed, "tensor values")?;
            let values = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.push(TensorRecord { name, shape, values });
        }
        if r.remaining() != 0 {
            return Err(corrupt(format!("{} trailing bytes", r.remaining())));
        }
        Ok(Self { config, tensors })
    }

    /// Copies tensor values into `agent`, whose architecture must match
    /// name for name and shape for shape.
    pub fn apply_to(&self, agent: &mut Agent) -> Result<(), LearnError> {
        let expected: Vec<(String, Vec<usize>)> = agent.named_tensors().into_iter().map(|(n, s, _)| (n, s)).collect();
        if expected.len() != self.tensors.len() {
            return Err(corrupt(format!(
                "checkpoint has {} tensors, configuration implies {}",
                self.tensors.len(),
                expected.len()
            )));
        }
        for ((name, shape), t) in expected.iter().zip(&self.tensors) {
            if *name != t.name || *shape != t.shape {
                return Err(corrupt(format!(
                    "tensor {} {:?} does not match expected {name} {shape:?}",
                    t.name, t.shape
                )));
            }
        }
        for (dst, t) in agent.named_tensors_mut().into_iter().zip(&self.tensors) {
            dst.copy_from_slice(&t.values);
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<(), LearnError> {
        std::fs::write(path, self.encode()).map_err(|e| LearnError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self, LearnError> {
        let bytes = std::fs::read(path).map_err(|e| LearnError::io(path, e))?;
        Self::decode(&bytes)
    }
}
