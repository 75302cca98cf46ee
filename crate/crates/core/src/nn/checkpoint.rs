//! Named-tensor container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    4 bytes  "AUGB"
//! version  u32      1
//! count    u64      number of tensors
//! count × {
//!     name_len u32, name (UTF-8, name_len bytes),
//!     rank u32, extents (rank × u64),
//!     values (product(extents) × f32)
//! }
//! ```

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"AUGB";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

pub fn write_tensors<W: Write>(mut w: W, tensors: &[NamedTensor]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(tensors.len() as u64).to_le_bytes())?;
    for t in tensors {
        let n: usize = t.shape.iter().product();
        if n != t.values.len() {
            return Err(Error::Checkpoint(format!(
                "tensor {} has shape {:?} but {} values",
                t.name,
                t.shape,
                t.values.len()
            )));
        }
        w.write_all(&(t.name.len() as u32).to_le_bytes())?;
        w.write_all(t.name.as_bytes())?;
        w.write_all(&(t.shape.len() as u32).to_le_bytes())?;
        for &e in &t.shape {
            w.write_all(&(e as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(4 * n);
        for v in &t.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_tensors<R: Read>(mut r: R) -> Result<Vec<NamedTensor>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = read_u64(&mut r)?;
    let mut out = Vec::new();
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| Error::Checkpoint("name is not UTF-8".into()))?;
        let rank = read_u32(&mut r)? as usize;
        let shape = (0..rank)
            .map(|_| read_u64(&mut r).map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let mut raw = vec![0u8; 4 * n];
        r.read_exact(&mut raw)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        out.push(NamedTensor { name, shape, values });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_fixed() {
        let mut buf = Vec::new();
        let t = NamedTensor {
            name: "w".into(),
            shape: vec![2],
            values: vec![1.0, -2.5],
        };
        write_tensors(&mut buf, &[t]).unwrap();
        assert_eq!(&buf[0..4], b"AUGB");
        assert_eq!(&buf[4..8], &1u32.to_le_bytes());
        assert_eq!(&buf[8..16], &1u64.to_le_bytes());
        assert_eq!(&buf[16..20], &1u32.to_le_bytes());
        assert_eq!(buf[20], b'w');
        assert_eq!(&buf[21..25], &1u32.to_le_bytes());
        assert_eq!(&buf[25..33], &2u64.to_le_bytes());
        assert_eq!(&buf[33..37], &1.0f32.to_le_bytes());
        assert_eq!(buf.len(), 41);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(read_tensors(&b"NOPE\x01\x00\x00\x00"[..]).is_err());
        let mut buf = Vec::new();
        let t = NamedTensor {
            name: "w".into(),
            shape: vec![3],
            values: vec![1.0; 3],
        };
        write_tensors(&mut buf, &[t]).unwrap();
        assert!(read_tensors(&buf[..buf.len() - 1]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(
            entries in prop::collection::vec(
                ("[a-z.]{0,12}", prop::collection::vec(0usize..4, 0..3)),
                0..4,
            ),
            seed in any::<u32>(),
        ) {
            let tensors: Vec<NamedTensor> = entries
                .into_iter()
                .enumerate()
                .map(|(i, (name, shape))| {
                    let n: usize = shape.iter().product();
                    let values = (0..n).map(|j| (seed as f32) * 0.5 - (i * 31 + j) as f32).collect();
                    NamedTensor { name, shape, values }
                })
                .collect();
            let mut buf = Vec::new();
            write_tensors(&mut buf, &tensors).unwrap();
            prop_assert_eq!(read_tensors(&buf[..]).unwrap(), tensors);
        }
    }
}
