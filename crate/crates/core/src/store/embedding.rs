//! Binary embedding stores.
//!
//! `<name>.emb` layout, all integers little-endian:
//!
//! ```text
//! "SLEM" | version u8 = 1 | kind u8 (1 single, 2 multi) | dtype u8 (1 fp32, 2 fp16)
//! dim u32 | count u32
//! count x ( rows u32 | rows*dim values )
//! ```
//!
//! `<name>.ids` holds one doc id per line in record order.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use half::f16;

use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"SLEM";
const VERSION: u8 = 0x01;
pub(crate) const HEADER_LEN: usize = 4 + 1 + 1 + 1 + 4 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoreKind {
    Single,
    Multi,
}

impl StoreKind {
    fn byte(self) -> u8 {
        match self {
            StoreKind::Single => 0x01,
            StoreKind::Multi => 0x02,
        }
    }

    /// Persisted dtype when none is requested.
    pub fn default_dtype(self) -> DType {
        match self {
            StoreKind::Single => DType::F32,
            StoreKind::Multi => DType::F16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    F16,
}

impl DType {
    fn byte(self) -> u8 {
        match self {
            DType::F32 => 0x01,
            DType::F16 => 0x02,
        }
    }

    pub fn width(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F16 => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DType::F32 => "fp32",
            DType::F16 => "fp16",
        }
    }

    /// The value this dtype stores for `x`.
    pub fn quantize(self, x: f32) -> f32 {
        match self {
            DType::F32 => x,
            DType::F16 => f16::from_f32(x).to_f32(),
        }
    }
}

/// A `rows x dim` row-major block for one document (rows = 1 for single-vector).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub doc_id: String,
    pub rows: usize,
    pub dim: usize,
    pub values: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(doc_id: impl Into<String>, rows: usize, dim: usize, values: Vec<f32>) -> Result<Self> {
        let doc_id = doc_id.into();
        if rows == 0 || dim == 0 {
            return Err(Error::Invalid(format!("`{doc_id}`: empty matrix {rows}x{dim}")));
        }
        if values.len() != rows * dim {
            return Err(Error::Invalid(format!(
                "`{doc_id}`: {} values for a {rows}x{dim} matrix",
                values.len()
            )));
        }
        Ok(EmbeddingMatrix {
            doc_id,
            rows,
            dim,
            values,
        })
    }

    pub fn single(doc_id: impl Into<String>, vector: Vec<f32>) -> Result<Self> {
        let dim = vector.len();
        Self::new(doc_id, 1, dim, vector)
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_iter(&self) -> std::slice::ChunksExact<'_, f32> {
        self.values.chunks_exact(self.dim)
    }

    pub fn quantized(&self, dtype: DType) -> EmbeddingMatrix {
        EmbeddingMatrix {
            values: self.values.iter().map(|&x| dtype.quantize(x)).collect(),
            ..self.clone()
        }
    }
}

/// A loaded store: header fields plus the matrices in record order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    pub kind: StoreKind,
    pub dtype: DType,
    pub dim: usize,
    pub matrices: Vec<EmbeddingMatrix>,
}

impl EmbeddingStore {
    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&EmbeddingMatrix> {
        self.matrices.iter().find(|m| m.doc_id == doc_id)
    }

    pub fn total_rows(&self) -> usize {
        self.matrices.iter().map(|m| m.rows).sum()
    }
}

fn sidecar_path(emb: &Path) -> PathBuf {
    emb.with_extension("ids")
}

fn emb_path(path: &Path) -> PathBuf {
    path.with_extension("emb")
}

/// Held while a store is being written; the lock file is removed on drop.
struct WriteLock(PathBuf);

impl WriteLock {
    fn acquire(emb: &Path) -> Result<Self> {
        let mut name = emb.as_os_str().to_owned();
        name.push(".lock");
        let lock = PathBuf::from(name);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(_) => Ok(WriteLock(lock)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(lock)),
            Err(e) => Err(Error::io(lock, e)),
        }
    }
}

impl Drop for WriteLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

/// Writes `<path>.emb` and `<path>.ids` (any extension on `path` is replaced)
/// and returns the combined size on disk in bytes.
pub fn write_embeddings(
    path: impl AsRef<Path>,
    entries: &[EmbeddingMatrix],
    kind: StoreKind,
    dtype: DType,
) -> Result<u64> {
    let emb = emb_path(path.as_ref());
    let ids = sidecar_path(&emb);

    let dim = entries.first().map_or(0, |m| m.dim);
    for m in entries {
        if m.dim != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                actual: m.dim,
            });
        }
        if m.values.len() != m.rows * m.dim || m.rows == 0 {
            return Err(Error::Invalid(format!("`{}`: malformed matrix", m.doc_id)));
        }
        if kind == StoreKind::Single && m.rows != 1 {
            return Err(Error::Invalid(format!(
                "`{}` has {} rows in a single-vector store",
                m.doc_id, m.rows
            )));
        }
        if m.doc_id.is_empty() || m.doc_id.contains(['\n', '\r']) {
            return Err(Error::Invalid(format!("unusable doc id {:?}", m.doc_id)));
        }
        for &v in &m.values {
            let unencodable = !v.is_finite() || (dtype == DType::F16 && !f16::from_f32(v).is_finite());
            if unencodable {
                return Err(Error::Unencodable {
                    doc_id: m.doc_id.clone(),
                    value: v,
                    dtype: dtype.name(),
                });
            }
        }
    }
    let count = u32::try_from(entries.len()).map_err(|_| Error::Invalid("too many records".into()))?;
    let dim32 = u32::try_from(dim).map_err(|_| Error::Invalid("dimension too large".into()))?;

    let _lock = WriteLock::acquire(&emb)?;
    let io = |e| Error::io(&emb, e);
    let mut w = BufWriter::new(File::create(&emb).map_err(io)?);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&[VERSION, kind.byte(), dtype.byte()]).map_err(io)?;
    w.write_all(&dim32.to_le_bytes()).map_err(io)?;
    w.write_all(&count.to_le_bytes()).map_err(io)?;
    for m in entries {
        w.write_all(&(m.rows as u32).to_le_bytes()).map_err(io)?;
        match dtype {
            DType::F32 => {
                for v in &m.values {
                    w.write_all(&v.to_le_bytes()).map_err(io)?;
                }
            }
            DType::F16 => {
                for v in &m.values {
                    w.write_all(&f16::from_f32(*v).to_le_bytes()).map_err(io)?;
                }
            }
        }
    }
    w.into_inner().map_err(|e| io(e.into_error()))?.sync_all().map_err(io)?;

    let mut sidecar = String::new();
    for m in entries {
        sidecar.push_str(&m.doc_id);
        sidecar.push('\n');
    }
    fs::write(&ids, sidecar).map_err(|e| Error::io(&ids, e))?;

    let size = |p: &Path| fs::metadata(p).map(|m| m.len()).map_err(|e| Error::io(p, e));
    Ok(size(&emb)? + size(&ids)?)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.buf.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }
}

/// Reads a store written by [`write_embeddings`]. fp16 values are widened to f32.
pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingStore> {
    let emb = emb_path(path.as_ref());
    let ids_path = sidecar_path(&emb);
    let bytes = fs::read(&emb).map_err(|e| Error::io(&emb, e))?;
    let bad = |msg: String| Error::Format(emb.clone(), msg);

    let mut cur = Cursor { buf: &bytes, pos: 0 };
    let header = cur.take(HEADER_LEN).ok_or_else(|| bad("truncated header".into()))?;
    if &header[..4] != MAGIC {
        return Err(bad("bad magic bytes".into()));
    }
    if header[4] != VERSION {
        return Err(bad(format!("unsupported version {}", header[4])));
    }
    let kind = match header[5] {
        0x01 => StoreKind::Single,
        0x02 => StoreKind::Multi,
        k => return Err(bad(format!("unknown kind byte {k:#04x}"))),
    };
    let dtype = match header[6] {
        0x01 => DType::F32,
        0x02 => DType::F16,
        d => return Err(bad(format!("unknown dtype byte {d:#04x}"))),
    };
    let dim = u32::from_le_bytes(header[7..11].try_into().unwrap()) as usize;
    let count = u32::from_le_bytes(header[11..15].try_into().unwrap()) as usize;
    if count > 0 && dim == 0 {
        return Err(bad("zero dimension".into()));
    }

    let sidecar = fs::read_to_string(&ids_path).map_err(|e| Error::io(&ids_path, e))?;
    let ids: Vec<&str> = sidecar.lines().collect();
    if ids.len() != count {
        return Err(bad(format!(
            "sidecar lists {} ids, payload has {count} records",
            ids.len()
        )));
    }

    let mut matrices = Vec::with_capacity(count);
    for (i, id) in ids.into_iter().enumerate() {
        let rows = cur
            .u32()
            .ok_or_else(|| bad(format!("truncated payload at record {i}")))? as usize;
        if rows == 0 {
            return Err(bad(format!("record `{id}` has zero rows")));
        }
        if kind == StoreKind::Single && rows != 1 {
            return Err(bad(format!("record `{id}` has {rows} rows in a single-vector store")));
        }
        let n = rows
            .checked_mul(dim)
            .ok_or_else(|| bad(format!("record `{id}` too large")))?;
        let raw = cur
            .take(n * dtype.width())
            .ok_or_else(|| bad(format!("truncated payload at record `{id}`")))?;
        let values: Vec<f32> = match dtype {
            DType::F32 => raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
            DType::F16 => raw
                .chunks_exact(2)
                .map(|c| f16::from_le_bytes(c.try_into().unwrap()).to_f32())
                .collect(),
        };
        if values.iter().any(|v| !v.is_finite()) {
            return Err(bad(format!("non-finite value in record `{id}`")));
        }
        matrices.push(EmbeddingMatrix {
            doc_id: id.to_string(),
            rows,
            dim,
            values,
        });
    }
    if cur.pos != bytes.len() {
        return Err(bad(format!("{} trailing bytes", bytes.len() - cur.pos)));
    }
    Ok(EmbeddingStore {
        kind,
        dtype,
        dim,
        matrices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn fp32_single_byte_count() {
        let dir = tmp();
        let m = EmbeddingMatrix::single("d1", vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let bytes = write_embeddings(dir.path().join("s"), &[m], StoreKind::Single, DType::F32).unwrap();
        let emb = fs::metadata(dir.path().join("s.emb")).unwrap().len();
        assert_eq!(emb, (HEADER_LEN + 4 + 16) as u64);
        assert_eq!(bytes, emb + 3);
    }

    #[test]
    fn fp16_multi_payload() {
        let dir = tmp();
        let m = EmbeddingMatrix::new("d1", 2, 3, vec![0.5; 6]).unwrap();
        write_embeddings(dir.path().join("m"), &[m], StoreKind::Multi, DType::F16).unwrap();
        let emb = fs::metadata(dir.path().join("m.emb")).unwrap().len();
        assert_eq!(emb, (HEADER_LEN + 4 + 12) as u64);
    }

    #[test]
    fn empty_store() {
        let dir = tmp();
        write_embeddings(dir.path().join("e"), &[], StoreKind::Multi, DType::F16).unwrap();
        let store = read_embeddings(dir.path().join("e.emb")).unwrap();
        assert!(store.is_empty());
        assert_eq!(fs::metadata(dir.path().join("e.emb")).unwrap().len(), HEADER_LEN as u64);
    }

    #[test]
    fn fp16_one_is_exact() {
        let dir = tmp();
        let m = EmbeddingMatrix::single("d1", vec![1.0, -1.0]).unwrap();
        write_embeddings(dir.path().join("h"), &[m], StoreKind::Single, DType::F16).unwrap();
        let store = read_embeddings(dir.path().join("h")).unwrap();
        assert_eq!(store.matrices[0].values, vec![1.0, -1.0]);
        assert_eq!(store.dtype, DType::F16);
    }

    #[test]
    fn corrupt_magic() {
        let dir = tmp();
        let m = EmbeddingMatrix::single("d1", vec![1.0]).unwrap();
        write_embeddings(dir.path().join("c"), &[m], StoreKind::Single, DType::F32).unwrap();
        let p = dir.path().join("c.emb");
        let mut b = fs::read(&p).unwrap();
        b[0] = b'X';
        fs::write(&p, b).unwrap();
        assert!(matches!(read_embeddings(&p), Err(Error::Format(..))));
    }

    #[test]
    fn truncated_and_sidecar_mismatch() {
        let dir = tmp();
        let m = EmbeddingMatrix::new("d1", 2, 2, vec![1.0; 4]).unwrap();
        write_embeddings(dir.path().join("t"), &[m], StoreKind::Multi, DType::F32).unwrap();
        let p = dir.path().join("t.emb");
        let b = fs::read(&p).unwrap();
        fs::write(&p, &b[..b.len() - 1]).unwrap();
        let err = read_embeddings(&p).unwrap_err().to_string();
        assert!(err.contains("truncated"), "{err}");

        fs::write(&p, &b).unwrap();
        fs::write(dir.path().join("t.ids"), "d1\nd2\n").unwrap();
        let err = read_embeddings(&p).unwrap_err().to_string();
        assert!(err.contains("sidecar"), "{err}");
    }

    #[test]
    fn missing_sidecar_is_error() {
        let dir = tmp();
        let m = EmbeddingMatrix::single("d1", vec![1.0]).unwrap();
        write_embeddings(dir.path().join("x"), &[m], StoreKind::Single, DType::F32).unwrap();
        fs::remove_file(dir.path().join("x.ids")).unwrap();
        assert!(read_embeddings(dir.path().join("x.emb")).is_err());
    }

    #[test]
    fn write_rejects_bad_input() {
        let dir = tmp();
        let a = EmbeddingMatrix::single("a", vec![1.0, 2.0]).unwrap();
        let b = EmbeddingMatrix::single("b", vec![1.0]).unwrap();
        assert!(matches!(
            write_embeddings(dir.path().join("d"), &[a.clone(), b], StoreKind::Single, DType::F32),
            Err(Error::DimMismatch { expected: 2, actual: 1 })
        ));
        let big = EmbeddingMatrix::single("big", vec![1.0e6]).unwrap();
        assert!(matches!(
            write_embeddings(dir.path().join("d"), std::slice::from_ref(&big), StoreKind::Single, DType::F16),
            Err(Error::Unencodable { .. })
        ));
        write_embeddings(dir.path().join("d"), &[big], StoreKind::Single, DType::F32).unwrap();
        let multi = EmbeddingMatrix::new("m", 2, 1, vec![1.0, 2.0]).unwrap();
        assert!(write_embeddings(dir.path().join("d"), &[multi], StoreKind::Single, DType::F32).is_err());
        let nan = EmbeddingMatrix::single("n", vec![f32::NAN]).unwrap();
        assert!(write_embeddings(dir.path().join("d"), &[nan], StoreKind::Single, DType::F32).is_err());
    }

    #[test]
    fn lock_blocks_second_writer() {
        let dir = tmp();
        let _held = WriteLock::acquire(&dir.path().join("l.emb")).unwrap();
        let m = EmbeddingMatrix::single("d1", vec![1.0]).unwrap();
        assert!(matches!(
            write_embeddings(dir.path().join("l"), &[m], StoreKind::Single, DType::F32),
            Err(Error::Locked(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn round_trip_after_quantization(
            rows in 1usize..2048,
            dim in 1usize..4096,
            seed in any::<u64>(),
            half in any::<bool>(),
        ) {
            // keep the payload bounded
            let rows = if rows * dim > 200_000 { (200_000 / dim).max(1) } else { rows };
            let dtype = if half { DType::F16 } else { DType::F32 };
            let mut state = seed | 1;
            let values: Vec<f32> = (0..rows * dim)
                .map(|_| {
                    state ^= state << 13;
                    state ^= state >> 7;
                    state ^= state << 17;
                    ((state >> 40) as f32 / (1u64 << 24) as f32) * 8.0 - 4.0
                })
                .collect();
            let m = EmbeddingMatrix::new("doc", rows, dim, values).unwrap();
            let dir = tmp();
            write_embeddings(dir.path().join("p"), std::slice::from_ref(&m), StoreKind::Multi, dtype).unwrap();
            let back = read_embeddings(dir.path().join("p")).unwrap();
            prop_assert_eq!(&back.matrices[0], &m.quantized(dtype));
        }
    }
}
