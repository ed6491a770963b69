//! Binary encoding of named tensors: `(name, rank, dims…, f32 values)`, little-endian.

use std::io::{Read, Write};

use super::{NumericsError, Tensor};

pub fn write_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

/// Writes one tensor segment. Values are narrowed to `f32`.
pub fn write_tensor<W: Write>(w: &mut W, name: &str, t: &Tensor) -> Result<(), NumericsError> {
    let bytes = name.as_bytes();
    write_u32(w, bytes.len() as u32)?;
    w.write_all(bytes)?;
    write_u32(w, t.rank() as u32)?;
    for &d in t.shape() {
        write_u32(w, d as u32)?;
    }
    for &v in t.data() {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_tensor<R: Read>(r: &mut R) -> Result<(String, Tensor), NumericsError> {
    let len = read_u32(r)? as usize;
    if len > 1 << 16 {
        return Err(NumericsError::Format(format!("tensor name length {len}")));
    }
    let mut name = vec![0u8; len];
    r.read_exact(&mut name)?;
    let name = String::from_utf8(name).map_err(|e| NumericsError::Format(e.to_string()))?;
    let rank = read_u32(r)? as usize;
    if rank > 8 {
        return Err(NumericsError::Format(format!("tensor {name}: rank {rank}")));
    }
    let shape = (0..rank)
        .map(|_| read_u32(r).map(|d| d as usize))
        .collect::<std::io::Result<Vec<_>>>()?;
    let n: usize = shape.iter().product();
    let mut raw = vec![0u8; n * 4];
    r.read_exact(&mut raw)?;
    let data = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok((name, Tensor::new(shape, data)?))
}
