//! Binary checkpoint format.
//!
//! ```text
//! magic    8 bytes  "NSIMCKPT"
//! version  u8       1
//! seed     u64 LE
//! meta     u32 LE length + UTF-8 bytes (opaque to this crate)
//! count    u32 LE
//! tensor*  u16 LE name length, name bytes, u8 rank, rank x u32 LE dims,
//!          prod(dims) x f64 LE values
//! ```

use std::io::{Read, Write};

use crate::{NeuralError, ParamSet, Tensor};

pub const MAGIC: &[u8; 8] = b"NSIMCKPT";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub meta: String,
    pub params: ParamSet,
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), NeuralError> {
        w.write_all(MAGIC)?;
        w.write_all(&[VERSION])?;
        w.write_all(&self.seed.to_le_bytes())?;
        let meta = self.meta.as_bytes();
        w.write_all(&(meta.len() as u32).to_le_bytes())?;
        w.write_all(meta)?;
        w.write_all(&(self.params.len() as u32).to_le_bytes())?;
        for (name, t) in self.params.names().iter().zip(self.params.tensors()) {
            let nb = name.as_bytes();
            w.write_all(&(nb.len() as u16).to_le_bytes())?;
            w.write_all(nb)?;
            w.write_all(&[t.shape().len() as u8])?;
            for &d in t.shape() {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, NeuralError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(NeuralError::Checkpoint("bad magic header".into()));
        }
        let version = read_u8(&mut r)?;
        if version != VERSION {
            return Err(NeuralError::Checkpoint(format!("unsupported version {version}")));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let seed = u64::from_le_bytes(b8);
        let meta_len = read_u32(&mut r)? as usize;
        let mut meta = vec![0u8; meta_len];
        r.read_exact(&mut meta)?;
        let meta = String::from_utf8(meta).map_err(|_| NeuralError::Checkpoint("meta is not UTF-8".into()))?;
        let count = read_u32(&mut r)?;
        let mut params = ParamSet::new();
        for _ in 0..count {
            let mut b2 = [0u8; 2];
            r.read_exact(&mut b2)?;
            let mut name = vec![0u8; u16::from_le_bytes(b2) as usize];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| NeuralError::Checkpoint("tensor name is not UTF-8".into()))?;
            let rank = read_u8(&mut r)? as usize;
            let shape = (0..rank).map(|_| read_u32(&mut r).map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                r.read_exact(&mut b8)?;
                data.push(f64::from_le_bytes(b8));
            }
            params.push(name, Tensor::new(shape, data)?);
        }
        Ok(Self { seed, meta, params })
    }
}

fn read_u8<R: Read>(r: &mut R) -> Result<u8, NeuralError> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, NeuralError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
