//! SPDF tensor file: the on-disk layout for model weights and image stacks.
//!
//! Layout, all integers little-endian, no padding, no compression:
//!
//! ```text
//! magic  b"SPDF"
//! u16    version (= 1)
//! u32    tensor count
//! per tensor:
//!   u16    name length in bytes
//!   [u8]   UTF-8 name
//!   u8     rank
//!   [u32]  one dim per rank entry
//!   [f32]  row-major payload, product(dims) entries
//! ```

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"SPDF";
pub const VERSION: u16 = 1;

pub fn write_tensors(path: &Path, entries: &[(String, Tensor)]) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let count = u32::try_from(entries.len())
        .map_err(|_| Error::format("too many tensors for u32 count"))?;
    w.write_all(&count.to_le_bytes())?;
    for (name, tensor) in entries {
        let name_bytes = name.as_bytes();
        let name_len = u16::try_from(name_bytes.len())
            .map_err(|_| Error::format(format!("tensor name too long: {name}")))?;
        w.write_all(&name_len.to_le_bytes())?;
        w.write_all(name_bytes)?;
        let rank = u8::try_from(tensor.rank())
            .map_err(|_| Error::format("tensor rank exceeds u8"))?;
        w.write_all(&[rank])?;
        for &d in tensor.shape() {
            let d = u32::try_from(d).map_err(|_| Error::format("dim exceeds u32"))?;
            w.write_all(&d.to_le_bytes())?;
        }
        for &v in tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_tensors(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::format(format!("magic mismatch: got {magic:?}")));
    }
    let version = read_u16(&mut r, "version")?;
    if version != VERSION {
        return Err(Error::format(format!(
            "version mismatch: got {version}, expected {VERSION}"
        )));
    }
    let count = read_u32(&mut r, "tensor count")? as usize;

    let mut entries = Vec::with_capacity(count);
    for idx in 0..count {
        let name_len = read_u16(&mut r, "name length")? as usize;
        let mut name_bytes = vec![0u8; name_len];
        read_exact(&mut r, &mut name_bytes, "name")?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| Error::format(format!("tensor {idx}: name is not UTF-8")))?;
        let mut rank_byte = [0u8; 1];
        read_exact(&mut r, &mut rank_byte, "rank")?;
        let rank = rank_byte[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(&mut r, "dim")? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut payload = vec![0u8; numel * 4];
        read_exact(&mut r, &mut payload, "payload")?;
        let data: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let tensor = Tensor::new(shape, data)
            .map_err(|e| Error::format(format!("tensor `{name}`: {e}")))?;
        entries.push((name, tensor));
    }

    // The declared count must account for the whole file.
    let mut trailing = [0u8; 1];
    match r.read(&mut trailing)? {
        0 => Ok(entries),
        _ => Err(Error::format(
            "tensor-count mismatch: trailing bytes after declared tensors",
        )),
    }
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::format(format!("truncated file while reading {what}")))
}

fn read_u16(r: &mut impl Read, what: &str) -> Result<u16> {
    let mut b = [0u8; 2];
    read_exact(r, &mut b, what)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let mut p = std::env::temp_dir();
        p.push(format!("spdf-test-{}-{}", std::process::id(), name));
        p
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let path = tmp("roundtrip.spdf");
        let entries = vec![
            (
                "layer0.weight".to_string(),
                Tensor::new(vec![2, 3], vec![1.5, -2.25, 0.1, 3.0, -0.0, 7.5e-3]).unwrap(),
            ),
            ("layer0.bias".to_string(), Tensor::new(vec![2], vec![0.5, -1.0]).unwrap()),
        ];
        write_tensors(&path, &entries).unwrap();
        let back = read_tensors(&path).unwrap();
        assert_eq!(entries.len(), back.len());
        for ((n0, t0), (n1, t1)) in entries.iter().zip(&back) {
            assert_eq!(n0, n1);
            assert_eq!(t0.shape(), t1.shape());
            let a: Vec<u32> = t0.data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = t1.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b);
        }
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn truncated_file_is_rejected() {
        let path = tmp("truncated.spdf");
        let entries = vec![(
            "w".to_string(),
            Tensor::new(vec![4], vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
        )];
        write_tensors(&path, &entries).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        match read_tensors(&path) {
            Err(Error::Format(m)) => assert!(m.contains("truncated"), "{m}"),
            other => panic!("expected format error, got {other:?}"),
        }
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn magic_and_version_mismatches_are_format_errors() {
        let path = tmp("magic.spdf");
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(b"NOPE").unwrap();
        f.write_all(&1u16.to_le_bytes()).unwrap();
        f.write_all(&0u32.to_le_bytes()).unwrap();
        drop(f);
        assert!(matches!(read_tensors(&path), Err(Error::Format(_))));

        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(MAGIC).unwrap();
        f.write_all(&9u16.to_le_bytes()).unwrap();
        f.write_all(&0u32.to_le_bytes()).unwrap();
        drop(f);
        match read_tensors(&path) {
            Err(Error::Format(m)) => assert!(m.contains("version")),
            other => panic!("expected version error, got {other:?}"),
        }
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn count_mismatch_is_detected() {
        let path = tmp("count.spdf");
        let entries = vec![
            ("a".to_string(), Tensor::new(vec![1], vec![1.0]).unwrap()),
            ("b".to_string(), Tensor::new(vec![1], vec![2.0]).unwrap()),
        ];
        write_tensors(&path, &entries).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[6] = 1; // declare one tensor, leave both payloads in place
        std::fs::write(&path, &bytes).unwrap();
        match read_tensors(&path) {
            Err(Error::Format(m)) => assert!(m.contains("tensor-count"), "{m}"),
            other => panic!("expected count mismatch, got {other:?}"),
        }
        std::fs::remove_file(&path).ok();
    }

    // File assembled by hand from the documented byte layout, independently of
    // write_tensors.
    #[test]
    fn independently_written_file_loads() {
        let path = tmp("crosswriter.spdf");
        let mut bytes: Vec<u8> = Vec::new();
        bytes.extend_from_slice(b"SPDF");
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        let name = b"dense.weight";
        bytes.extend_from_slice(&(name.len() as u16).to_le_bytes());
        bytes.extend_from_slice(name);
        bytes.push(2);
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        for v in [0.25f32, -1.0, 3.5, 42.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(&path, &bytes).unwrap();

        let entries = read_tensors(&path).unwrap();
        assert_eq!(entries.len(), 1);
        assert_eq!(entries[0].0, "dense.weight");
        assert_eq!(entries[0].1.shape(), &[2, 2]);
        assert_eq!(entries[0].1.data(), &[0.25, -1.0, 3.5, 42.0]);
        std::fs::remove_file(&path).ok();
    }
}
