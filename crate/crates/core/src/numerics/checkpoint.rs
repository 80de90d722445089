//! Flat binary parameter files: `DDCK` magic, version, tensor count, a shape
//! table, then every entry as a little-endian f64 in declaration order.

use std::io::{Read, Write};

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"DDCK";
pub const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(out: &mut W, tensors: &[Tensor]) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in tensors {
        out.write_all(&(t.dims().len() as u32).to_le_bytes())?;
        for &d in t.dims() {
            out.write_all(&(d as u32).to_le_bytes())?;
        }
    }
    for t in tensors {
        for &x in t.data() {
            out.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

pub fn read_checkpoint<R: Read>(input: &mut R) -> Result<Vec<Tensor>> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = read_u32(input)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = read_u32(input)? as usize;
    let mut shapes = Vec::with_capacity(count);
    for _ in 0..count {
        let rank = read_u32(input)? as usize;
        if rank > super::tensor::MAX_RANK {
            return Err(Error::Checkpoint(format!("rank {rank} too large")));
        }
        let dims = (0..rank)
            .map(|_| read_u32(input).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        shapes.push(dims);
    }
    let mut tensors = Vec::with_capacity(count);
    for dims in shapes {
        let n: usize = dims.iter().product();
        let mut data = Vec::with_capacity(n);
        let mut buf = [0u8; 8];
        for _ in 0..n {
            input.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        tensors.push(Tensor::new(&dims, data)?);
    }
    let mut rest = Vec::new();
    input.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", rest.len())));
    }
    Ok(tensors)
}
