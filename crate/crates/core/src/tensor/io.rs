//! SCR1 binary tensor format.
//!
//! Layout: magic `SCR1`, u8 dtype tag (0 = f32, 1 = f64), u8 rank,
//! `rank` little-endian u32 dims, then the row-major little-endian payload.

use std::path::Path;

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SCR1";

pub fn encode<T: Scalar>(t: &Tensor<T>, out: &mut Vec<u8>) {
    out.extend_from_slice(MAGIC);
    out.push(T::DTYPE);
    out.push(t.shape().len() as u8);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in t.data() {
        v.write_le(out);
    }
}

pub fn to_bytes<T: Scalar>(t: &Tensor<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(6 + 4 * t.shape().len() + T::WIDTH * t.len());
    encode(t, &mut out);
    out
}

/// Decodes one tensor from the front of `bytes`; returns it with the number
/// of bytes consumed.
pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<(Tensor<T>, usize)> {
    if bytes.len() < 6 || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing SCR1 magic".into()));
    }
    let dtype = bytes[4];
    if dtype != T::DTYPE {
        return Err(Error::Format(format!(
            "dtype tag {dtype} does not match requested tag {}",
            T::DTYPE
        )));
    }
    let rank = bytes[5] as usize;
    let mut pos = 6;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let chunk = bytes
            .get(pos..pos + 4)
            .ok_or_else(|| Error::Format("truncated SCR1 header".into()))?;
        shape.push(u32::from_le_bytes(chunk.try_into().unwrap()) as usize);
        pos += 4;
    }
    let n: usize = shape.iter().product();
    let payload = bytes
        .get(pos..pos + n * T::WIDTH)
        .ok_or_else(|| Error::Format("truncated SCR1 payload".into()))?;
    let data = payload.chunks_exact(T::WIDTH).map(T::read_le).collect();
    Ok((Tensor::new(shape, data)?, pos + n * T::WIDTH))
}

pub fn from_bytes<T: Scalar>(bytes: &[u8]) -> Result<Tensor<T>> {
    let (t, used) = decode(bytes)?;
    if used != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after SCR1 tensor",
            bytes.len() - used
        )));
    }
    Ok(t)
}

pub fn save<T: Scalar>(t: &Tensor<T>, path: &Path) -> Result<()> {
    crate::fsutil::write_atomic(path, &to_bytes(t))
}

pub fn load<T: Scalar>(path: &Path) -> Result<Tensor<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let t = Tensor::<f32>::from_f64(&[1, 2], &[1.0, -2.0]).unwrap();
        let b = to_bytes(&t);
        assert_eq!(&b[..4], b"SCR1");
        assert_eq!(b[4], 0);
        assert_eq!(b[5], 2);
        assert_eq!(&b[6..10], &1u32.to_le_bytes());
        assert_eq!(&b[10..14], &2u32.to_le_bytes());
        assert_eq!(&b[14..18], &1.0f32.to_le_bytes());
        assert_eq!(b.len(), 22);
    }

    #[test]
    fn rejects_wrong_dtype_and_truncation() {
        let t = Tensor::<f64>::from_f64(&[3], &[1.0, 2.0, 3.0]).unwrap();
        let b = to_bytes(&t);
        assert!(from_bytes::<f32>(&b).is_err());
        assert!(from_bytes::<f64>(&b[..b.len() - 1]).is_err());
        assert!(from_bytes::<f64>(b"XXXX").is_err());
    }

    proptest! {
        #[test]
        fn roundtrip(dims in prop::collection::vec(1usize..5, 1..4), seed in any::<u64>()) {
            let n: usize = dims.iter().product();
            let data: Vec<f64> = (0..n).map(|i| ((i as u64 ^ seed) as f64).sin()).collect();
            let t = Tensor::<f64>::new(dims, data).unwrap();
            prop_assert_eq!(from_bytes::<f64>(&to_bytes(&t)).unwrap(), t.clone());
            let t32: Tensor<f32> = t.cast();
            prop_assert_eq!(from_bytes::<f32>(&to_bytes(&t32)).unwrap(), t32);
        }
    }
}
