//! Flat binary tensor container.
//!
//! Record layout: the magic string "SSTK1", one precision byte (bytes per
//! scalar: 4 or 8), the rank as a 64-bit little-endian integer, the extents
//! as 64-bit little-endian integers, then the raw buffer in little-endian
//! scalar order. Network checkpoints are a sequence of these records.

use std::io::{Read, Write};

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 5] = b"SSTK1";

pub fn write_tensor<S: Scalar, W: Write>(out: &mut W, tensor: &Tensor<S>) -> std::io::Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&[S::PRECISION])?;
    out.write_all(&(tensor.shape().len() as u64).to_le_bytes())?;
    for &extent in tensor.shape() {
        out.write_all(&(extent as u64).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(tensor.len() * S::PRECISION as usize);
    for &v in tensor.data() {
        v.write_le(&mut buf);
    }
    out.write_all(&buf)
}

pub fn read_tensor<S: Scalar, R: Read>(input: &mut R) -> Result<Tensor<S>> {
    let bad = |msg: String| Error::Checkpoint(msg);
    let mut magic = [0u8; 5];
    read_exact(input, &mut magic)?;
    if &magic != MAGIC {
        return Err(bad(format!("bad magic {magic:?}, expected {MAGIC:?}")));
    }
    let mut precision = [0u8; 1];
    read_exact(input, &mut precision)?;
    if precision[0] != S::PRECISION {
        return Err(bad(format!(
            "precision byte {} does not match requested {}-byte scalars",
            precision[0],
            S::PRECISION
        )));
    }
    let mut u64buf = [0u8; 8];
    read_exact(input, &mut u64buf)?;
    let rank = u64::from_le_bytes(u64buf) as usize;
    if rank == 0 || rank > 8 {
        return Err(bad(format!("implausible tensor rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        read_exact(input, &mut u64buf)?;
        let extent = u64::from_le_bytes(u64buf) as usize;
        if extent == 0 {
            return Err(bad("zero extent in tensor header".into()));
        }
        shape.push(extent);
    }
    let len: usize = shape.iter().product();
    let width = S::PRECISION as usize;
    let mut raw = vec![0u8; len * width];
    read_exact(input, &mut raw)?;
    let data = raw.chunks_exact(width).map(S::read_le).collect();
    Tensor::new(shape, data)
}

fn read_exact<R: Read>(input: &mut R, buf: &mut [u8]) -> Result<()> {
    input
        .read_exact(buf)
        .map_err(|e| Error::Checkpoint(format!("truncated tensor record: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_f32() {
        let t = Tensor::<f32>::new(vec![2, 3], vec![1.0, -2.5, 0.0, 4.0, 1e-7, 3.25]).unwrap();
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        let back: Tensor<f32> = read_tensor(&mut buf.as_slice()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn precision_mismatch_rejected() {
        let t = Tensor::<f64>::zeros(&[2]);
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        let err = read_tensor::<f32, _>(&mut buf.as_slice()).unwrap_err();
        assert!(err.to_string().contains("precision"));
    }

    #[test]
    fn bad_magic_rejected() {
        let err = read_tensor::<f32, _>(&mut b"NOPE!xxxxxxxx".as_slice()).unwrap_err();
        assert!(err.to_string().contains("magic"));
    }
}
