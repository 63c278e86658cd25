//! Byte-stable little-endian encoding of a shard's index payload.
//!
//! Layout:
//!
//! ```text
//! magic  "SMSB"         4 bytes
//! version u16           2
//! shard   u32           4
//! count   u64           8
//! root    4 x f64      32   (min x, min y, max x, max y)
//! record * count:
//!   path_id u64, embedding 2 x f64, n u8,
//!   key labels n x u32, vertices n x u32
//! ```

use thiserror::Error;

use super::{DominanceEmbedding, LabelKey, Mbr};
use crate::{PathId, ShardId, VertexId};

const MAGIC: &[u8; 4] = b"SMSB";
const VERSION: u16 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BlobError {
    #[error("blob truncated at byte {0}")]
    Truncated(usize),
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported blob version {0}")]
    Version(u16),
    #[error("{0} trailing bytes after last record")]
    Trailing(usize),
    #[error("record {0}: key length differs from vertex count")]
    Mismatch(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShardRecord {
    pub path_id: PathId,
    pub embedding: DominanceEmbedding,
    pub key: LabelKey,
    pub vertices: Vec<VertexId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShardBlob {
    pub shard: ShardId,
    pub root: Mbr,
    pub records: Vec<ShardRecord>,
}

pub fn encode_shard_blob(blob: &ShardBlob) -> Vec<u8> {
    let mut out = Vec::with_capacity(50 + blob.records.len() * 64);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&blob.shard.to_le_bytes());
    out.extend_from_slice(&(blob.records.len() as u64).to_le_bytes());
    for v in [blob.root.min[0], blob.root.min[1], blob.root.max[0], blob.root.max[1]] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for r in &blob.records {
        out.extend_from_slice(&r.path_id.to_le_bytes());
        out.extend_from_slice(&r.embedding.0[0].to_le_bytes());
        out.extend_from_slice(&r.embedding.0[1].to_le_bytes());
        debug_assert_eq!(r.key.labels().len(), r.vertices.len());
        out.push(r.vertices.len() as u8);
        for l in r.key.labels() {
            out.extend_from_slice(&l.to_le_bytes());
        }
        for v in &r.vertices {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], BlobError> {
        let end = self.pos + n;
        if end > self.buf.len() {
            return Err(BlobError::Truncated(self.buf.len()));
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], BlobError> {
        Ok(self.take(N)?.try_into().expect("slice length checked"))
    }

    fn u32(&mut self) -> Result<u32, BlobError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, BlobError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64, BlobError> {
        Ok(f64::from_le_bytes(self.array()?))
    }
}

pub fn decode_shard_blob(bytes: &[u8]) -> Result<ShardBlob, BlobError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(BlobError::BadMagic);
    }
    let version = u16::from_le_bytes(r.array()?);
    if version != VERSION {
        return Err(BlobError::Version(version));
    }
    let shard = r.u32()?;
    let count = r.u64()? as usize;
    let root = Mbr {
        min: [r.f64()?, r.f64()?],
        max: [r.f64()?, r.f64()?],
    };
    let mut records = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let path_id = r.u64()?;
        let embedding = DominanceEmbedding([r.f64()?, r.f64()?]);
        let n = r.take(1)?[0] as usize;
        let labels = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
        let vertices = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
        let key = LabelKey::from_sequence(&labels);
        if key.labels() != labels.as_slice() {
            return Err(BlobError::Mismatch(records.len()));
        }
        records.push(ShardRecord {
            path_id,
            embedding,
            key,
            vertices,
        });
    }
    if r.pos != bytes.len() {
        return Err(BlobError::Trailing(bytes.len() - r.pos));
    }
    Ok(ShardBlob {
        shard,
        root,
        records,
    })
}
