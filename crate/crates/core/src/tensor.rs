//! Dense batch container, random tensor generation, and the RGT1/RGI1
//! binary tensor formats used for fixture I/O.
//!
//! Binary layout (all integers little-endian):
//! - f32 tensor, magic `RGT1`: magic, u32 rank, rank x u64 dims, then the
//!   row-major f32 payload.
//! - i64 vector, magic `RGI1`: same header, i64 payload.
//! - container, magic `RGC1`: magic, u64 manifest byte length, a JSON
//!   manifest listing `{name, shape, offset}` per tensor (offset in bytes
//!   into the payload region), then the concatenated f32 payloads.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fixed-shape `[B, S, D]` token tensor, row-major and contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseBatch {
    pub data: Vec<f32>,
    pub batch: usize,
    pub seq_len: usize,
    pub dim: usize,
}

impl DenseBatch {
    /// Construct with shape and finiteness checks.
    pub fn new(data: Vec<f32>, batch: usize, seq_len: usize, dim: usize) -> Result<Self> {
        if data.len() != batch * seq_len * dim {
            return Err(Error::ShapeMismatch(format!(
                "storage length {} != {batch} * {seq_len} * {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!(
                "dense batch entry {pos} is {}",
                data[pos]
            )));
        }
        Ok(Self {
            data,
            batch,
            seq_len,
            dim,
        })
    }

    pub fn zeros(batch: usize, seq_len: usize, dim: usize) -> Self {
        Self {
            data: vec![0.0; batch * seq_len * dim],
            batch,
            seq_len,
            dim,
        }
    }

    /// Standard-normal entries, deterministic for a given seed.
    pub fn random(batch: usize, seq_len: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..batch * seq_len * dim)
            .map(|_| normal_f32(&mut rng))
            .collect();
        Self {
            data,
            batch,
            seq_len,
            dim,
        }
    }

    #[inline]
    pub fn row(&self, image: usize, position: usize) -> &[f32] {
        let start = (image * self.seq_len + position) * self.dim;
        &self.data[start..start + self.dim]
    }

    #[inline]
    pub fn row_mut(&mut self, image: usize, position: usize) -> &mut [f32] {
        let start = (image * self.seq_len + position) * self.dim;
        &mut self.data[start..start + self.dim]
    }

    /// Row at a flattened `image * seq_len + position` index.
    #[inline]
    pub fn flat_row(&self, r: usize) -> &[f32] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }
}

/// One standard-normal draw (Box-Muller over a uniform pair).
pub(crate) fn normal_f32<R: Rng>(rng: &mut R) -> f32 {
    let u1: f64 = 1.0 - rng.random::<f64>(); // (0, 1]
    let u2: f64 = rng.random();
    ((-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()) as f32
}

const MAGIC_F32: &[u8; 4] = b"RGT1";
const MAGIC_I64: &[u8; 4] = b"RGI1";
const MAGIC_CONTAINER: &[u8; 4] = b"RGC1";

/// Write an f32 tensor in the RGT1 format.
pub fn write_rgt1<W: Write>(w: &mut W, dims: &[usize], data: &[f32]) -> Result<()> {
    let expected: usize = dims.iter().product();
    if data.len() != expected {
        return Err(Error::ShapeMismatch(format!(
            "payload length {} != product of dims {expected}",
            data.len()
        )));
    }
    w.write_all(MAGIC_F32)?;
    w.write_all(&(dims.len() as u32).to_le_bytes())?;
    for &d in dims {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for &x in data {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

/// Read an f32 tensor in the RGT1 format.
pub fn read_rgt1<R: Read>(r: &mut R) -> Result<(Vec<usize>, Vec<f32>)> {
    let dims = read_header(r, MAGIC_F32)?;
    let count: usize = dims.iter().product();
    let mut payload = vec![0u8; count * 4];
    r.read_exact(&mut payload)
        .map_err(|_| Error::Malformed("RGT1 payload truncated".into()))?;
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((dims, data))
}

/// Write an i64 vector in the RGI1 format.
pub fn write_rgi1<W: Write>(w: &mut W, data: &[i64]) -> Result<()> {
    w.write_all(MAGIC_I64)?;
    w.write_all(&1u32.to_le_bytes())?;
    w.write_all(&(data.len() as u64).to_le_bytes())?;
    for &x in data {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

/// Read an i64 vector in the RGI1 format.
pub fn read_rgi1<R: Read>(r: &mut R) -> Result<Vec<i64>> {
    let dims = read_header(r, MAGIC_I64)?;
    if dims.len() != 1 {
        return Err(Error::Malformed(format!(
            "RGI1 rank {} (integer files hold rank-1 vectors)",
            dims.len()
        )));
    }
    let mut payload = vec![0u8; dims[0] * 8];
    r.read_exact(&mut payload)
        .map_err(|_| Error::Malformed("RGI1 payload truncated".into()))?;
    Ok(payload
        .chunks_exact(8)
        .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn read_header<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<Vec<usize>> {
    let mut got = [0u8; 4];
    r.read_exact(&mut got)
        .map_err(|_| Error::Malformed("file shorter than magic".into()))?;
    if &got != magic {
        return Err(Error::Malformed(format!(
            "bad magic {:?} (expected {:?})",
            String::from_utf8_lossy(&got),
            String::from_utf8_lossy(magic)
        )));
    }
    let mut rank_b = [0u8; 4];
    r.read_exact(&mut rank_b)
        .map_err(|_| Error::Malformed("rank field truncated".into()))?;
    let rank = u32::from_le_bytes(rank_b) as usize;
    if rank > 8 {
        return Err(Error::Malformed(format!("implausible rank {rank}")));
    }
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut d = [0u8; 8];
        r.read_exact(&mut d)
            .map_err(|_| Error::Malformed("dims truncated".into()))?;
        dims.push(u64::from_le_bytes(d) as usize);
    }
    Ok(dims)
}

pub fn write_rgt1_file<P: AsRef<Path>>(path: P, dims: &[usize], data: &[f32]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_rgt1(&mut f, dims, data)
}

pub fn read_rgt1_file<P: AsRef<Path>>(path: P) -> Result<(Vec<usize>, Vec<f32>)> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_rgt1(&mut f)
}

pub fn write_rgi1_file<P: AsRef<Path>>(path: P, data: &[i64]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_rgi1(&mut f, data)
}

pub fn read_rgi1_file<P: AsRef<Path>>(path: P) -> Result<Vec<i64>> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_rgi1(&mut f)
}

/// Manifest entry of one tensor inside an RGC1 container.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ContainerEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the payload region.
    pub offset: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
struct ContainerManifest {
    tensors: Vec<ContainerEntry>,
}

/// Write several named f32 tensors into one RGC1 container file.
pub fn write_container<W: Write>(w: &mut W, tensors: &[(&str, &[usize], &[f32])]) -> Result<()> {
    let mut manifest = ContainerManifest::default();
    let mut offset = 0u64;
    for (name, shape, data) in tensors {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "tensor `{name}`: payload {} != product of dims {expected}",
                data.len()
            )));
        }
        manifest.tensors.push(ContainerEntry {
            name: name.to_string(),
            shape: shape.to_vec(),
            offset,
        });
        offset += (data.len() * 4) as u64;
    }
    let manifest_json = serde_json::to_vec(&manifest)?;
    w.write_all(MAGIC_CONTAINER)?;
    w.write_all(&(manifest_json.len() as u64).to_le_bytes())?;
    w.write_all(&manifest_json)?;
    for (_, _, data) in tensors {
        for &x in *data {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

/// A named tensor read back from a container: (name, shape, data).
pub type NamedTensor = (String, Vec<usize>, Vec<f32>);

/// Read back every tensor of an RGC1 container, in manifest order.
pub fn read_container<R: Read>(r: &mut R) -> Result<Vec<NamedTensor>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Malformed("container shorter than magic".into()))?;
    if &magic != MAGIC_CONTAINER {
        return Err(Error::Malformed("bad container magic".into()));
    }
    let mut len_b = [0u8; 8];
    r.read_exact(&mut len_b)
        .map_err(|_| Error::Malformed("manifest length truncated".into()))?;
    let manifest_len = u64::from_le_bytes(len_b) as usize;
    let mut manifest_json = vec![0u8; manifest_len];
    r.read_exact(&mut manifest_json)
        .map_err(|_| Error::Malformed("manifest truncated".into()))?;
    let manifest: ContainerManifest = serde_json::from_slice(&manifest_json)?;

    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let mut out = Vec::with_capacity(manifest.tensors.len());
    for entry in &manifest.tensors {
        let count: usize = entry.shape.iter().product();
        let start = entry.offset as usize;
        let end = start + count * 4;
        if end > payload.len() {
            return Err(Error::Malformed(format!(
                "tensor `{}` extends past payload end",
                entry.name
            )));
        }
        let data = payload[start..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        out.push((entry.name.clone(), entry.shape.clone(), data));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_batch_rejects_non_finite() {
        let err = DenseBatch::new(vec![0.0, f32::NAN], 1, 1, 2).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn dense_batch_row_indexing() {
        let d = DenseBatch::new((0..12).map(|x| x as f32).collect(), 2, 3, 2).unwrap();
        assert_eq!(d.row(0, 0), &[0.0, 1.0]);
        assert_eq!(d.row(1, 2), &[10.0, 11.0]);
        assert_eq!(d.flat_row(5), &[10.0, 11.0]);
    }

    #[test]
    fn random_is_deterministic_per_seed() {
        let a = DenseBatch::random(2, 3, 4, 7);
        let b = DenseBatch::random(2, 3, 4, 7);
        let c = DenseBatch::random(2, 3, 4, 8);
        assert_eq!(a.data, b.data);
        assert_ne!(a.data, c.data);
    }

    #[test]
    fn rgt1_round_trip() {
        let dims = vec![2, 3];
        let data: Vec<f32> = vec![1.5, -2.0, 0.0, 3.25, f32::MIN_POSITIVE, 1e10];
        let mut buf = Vec::new();
        write_rgt1(&mut buf, &dims, &data).unwrap();
        assert_eq!(&buf[..4], b"RGT1");
        let (rd, rdata) = read_rgt1(&mut buf.as_slice()).unwrap();
        assert_eq!(rd, dims);
        assert_eq!(rdata, data);
    }

    #[test]
    fn rgi1_round_trip() {
        let data = vec![0i64, 3, 7, -1];
        let mut buf = Vec::new();
        write_rgi1(&mut buf, &data).unwrap();
        assert_eq!(&buf[..4], b"RGI1");
        let back = read_rgi1(&mut buf.as_slice()).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let mut buf = Vec::new();
        write_rgt1(&mut buf, &[4], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_rgt1(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn container_round_trip() {
        let a = vec![1.0f32, 2.0, 3.0, 4.0];
        let b = vec![-1.0f32; 6];
        let mut buf = Vec::new();
        write_container(&mut buf, &[("a", &[2, 2], &a), ("b", &[6], &b)]).unwrap();
        let back = read_container(&mut buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0], ("a".to_string(), vec![2, 2], a));
        assert_eq!(back[1], ("b".to_string(), vec![6], b));
    }
}
