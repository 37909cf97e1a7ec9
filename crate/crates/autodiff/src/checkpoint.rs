//! Binary checkpoint container.
//!
//! Layout, all integers and reals little-endian:
//!
//! ```text
//! magic    8 bytes  "TGCKPT\0\0"
//! version  u32      currently 1
//! step     u64      schedule step at save time
//! metadata u32 length + UTF-8 bytes (free-form, JSON by convention)
//! count    u32      number of parameters
//! per parameter:
//!   name   u32 length + UTF-8 bytes
//!   rank   u32, then rank x u64 extents
//!   values numel x f64
//! optimizer flag u8 (0 = absent)
//! if present: lr, weight_decay, beta1, beta2, eps as f64, adam step u64,
//!   then per parameter the first-moment values followed by the second-moment values
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{AutodiffError, Result};
use crate::optim::Adam;
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"TGCKPT\0\0";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    pub metadata: String,
    pub params: ParamStore,
    pub optimizer: Option<Adam>,
}

fn bad(msg: impl Into<String>) -> AutodiffError {
    AutodiffError::Checkpoint(msg.into())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(bad(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| bad(e.to_string()))
    }
    fn values(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn put_values(out: &mut Vec<u8>, t: &Tensor) {
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.params.num_scalars() * 8 * 3);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        put_str(&mut out, &self.metadata);
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in self.params.iter() {
            put_str(&mut out, name);
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            put_values(&mut out, t);
        }
        match &self.optimizer {
            None => out.push(0),
            Some(adam) => {
                out.push(1);
                for x in [adam.lr, adam.weight_decay, adam.beta1, adam.beta2, adam.eps] {
                    out.extend_from_slice(&x.to_le_bytes());
                }
                out.extend_from_slice(&adam.step.to_le_bytes());
                for (m, v) in adam.m.iter().zip(&adam.v) {
                    put_values(&mut out, m);
                    put_values(&mut out, v);
                }
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(bad("not a checkpoint (bad magic)"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let step = r.u64()?;
        let metadata = r.string()?;
        let count = r.u32()? as usize;
        let mut params = ParamStore::new();
        for _ in 0..count {
            let name = r.string()?;
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n = shape.iter().product();
            let values = r.values(n)?;
            params.add(name, Tensor::new(shape, values)?);
        }
        let optimizer = match r.u8()? {
            0 => None,
            1 => {
                let lr = r.f64()?;
                let weight_decay = r.f64()?;
                let beta1 = r.f64()?;
                let beta2 = r.f64()?;
                let eps = r.f64()?;
                let adam_step = r.u64()?;
                let mut m = Vec::with_capacity(count);
                let mut v = Vec::with_capacity(count);
                for p in params.values() {
                    m.push(Tensor::new(p.shape().to_vec(), r.values(p.numel())?)?);
                    v.push(Tensor::new(p.shape().to_vec(), r.values(p.numel())?)?);
                }
                Some(Adam {
                    lr,
                    weight_decay,
                    beta1,
                    beta2,
                    eps,
                    step: adam_step,
                    m,
                    v,
                })
            }
            f => return Err(bad(format!("bad optimizer flag {f}"))),
        };
        if r.pos != buf.len() {
            return Err(bad(format!("{} trailing bytes", buf.len() - r.pos)));
        }
        Ok(Self {
            step,
            metadata,
            params,
            optimizer,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}
