//! Binary parameter checkpoints.
//!
//! Layout (little-endian): magic `BMSL`, `u32` version, `u32` tensor count;
//! per tensor a `u16` name length, the name, a `u8` rank, `u64` dims and `f64`
//! data; then the run configuration as `u32`-length-prefixed UTF-8 text. The
//! completed meta-step count travels inside that text as `completed_steps`.

use std::path::Path;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::model::ParamSet;
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"BMSL";
pub const VERSION: u32 = 1;
const STEPS_KEY: &str = "completed_steps";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ParamSet,
    pub config: RunConfig,
    pub meta_step: u64,
}

fn format_err(reason: impl Into<String>) -> Error {
    Error::Format {
        what: "checkpoint",
        reason: reason.into(),
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.params.tensors().len() as u32).to_le_bytes());
        for (name, t) in self.params.iter() {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.shape().len() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let text = format!("{}{STEPS_KEY} = {}\n", self.config.to_text(), self.meta_step);
        out.extend_from_slice(&(text.len() as u32).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut cur = Cursor::new(buf, "checkpoint");
        if cur.take(4)? != MAGIC {
            return Err(format_err("bad magic"));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(format_err(format!("unsupported version {version}")));
        }
        let count = cur.u32()? as usize;
        let mut named = Vec::with_capacity(count.min(64));
        for _ in 0..count {
            let len = cur.u16()? as usize;
            let name = std::str::from_utf8(cur.take(len)?)
                .map_err(|_| format_err("tensor name is not UTF-8"))?
                .to_string();
            let rank = cur.u8()? as usize;
            let shape = (0..rank)
                .map(|_| cur.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let numel = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| format_err("tensor size overflows"))?;
            let bytes = cur.take(numel.checked_mul(8).ok_or_else(|| format_err("tensor size overflows"))?)?;
            let data = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            named.push((name, Tensor::new(shape, data)?));
        }
        let len = cur.u32()? as usize;
        let text = std::str::from_utf8(cur.take(len)?).map_err(|_| format_err("config is not UTF-8"))?;
        if !cur.is_empty() {
            return Err(format_err("trailing bytes"));
        }
        let mut meta_step = None;
        let mut config_text = String::new();
        for line in text.lines() {
            match line.split_once('=') {
                Some((k, v)) if k.trim() == STEPS_KEY => {
                    meta_step = Some(v.trim().parse().map_err(|_| format_err("bad step counter"))?)
                }
                _ => {
                    config_text.push_str(line);
                    config_text.push('\n');
                }
            }
        }
        let config = RunConfig::parse_text(&config_text)?;
        let params = ParamSet::from_named_infer(named)?;
        Ok(Self {
            params,
            config,
            meta_step: meta_step.ok_or_else(|| format_err("missing step counter"))?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf)
    }
}

/// Little-endian reader over a byte slice.
pub(crate) struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(buf: &'a [u8], what: &'static str) -> Self {
        Self { buf, pos: 0, what }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format {
                what: self.what,
                reason: format!("truncated at byte {}", self.pos),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        self.array().map(u16::from_le_bytes)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        self.array().map(u32::from_le_bytes)
    }

    pub(crate) fn i32(&mut self) -> Result<i32> {
        self.array().map(i32::from_le_bytes)
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        self.array().map(u64::from_le_bytes)
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        self.array().map(f32::from_le_bytes)
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.pos == self.buf.len()
    }
}
