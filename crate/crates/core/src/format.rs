//! On-disk snapshot containers.
//!
//! Both formats are little-endian throughout.
//!
//! `.fsnp` (full snapshot):
//!
//! ```text
//! magic        b"FSNP"
//! version      u32 = 1
//! model_id     u16 byte length + UTF-8
//! tensor_count u32
//! per tensor, canonical order:
//!   name       u16 byte length + UTF-8
//!   ndim       u8
//!   dims       ndim x u32
//!   values     product(dims) x f64 (IEEE-754)
//! ```
//!
//! `.fsum` (summary snapshot): magic `b"FSUM"`, version, model_id,
//! `entry_count: u32`, then per entry the name followed by four f64 values
//! (mean, std, min, max).

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::features::TensorStats;
use crate::snapshot::{
    Result, SnapshotError, SummaryEntry, SummarySnapshot, TensorRecord, WeightSnapshot,
};

pub const SNAPSHOT_MAGIC: [u8; 4] = *b"FSNP";
pub const SUMMARY_MAGIC: [u8; 4] = *b"FSUM";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode_snapshot(s: &WeightSnapshot) -> Result<Vec<u8>> {
    s.validate()?;
    let payload: usize = s.tensors.iter().map(|t| t.values.len() * 8).sum();
    let mut buf = Vec::with_capacity(payload + 64 * s.tensors.len() + 32);
    buf.extend_from_slice(&SNAPSHOT_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    put_str(&mut buf, &s.model_id)?;
    put_u32(&mut buf, s.tensors.len(), "tensor_count")?;
    for t in &s.tensors {
        put_str(&mut buf, &t.name)?;
        let ndim = u8::try_from(t.shape.len())
            .map_err(|_| SnapshotError::FieldOverflow(format!("ndim of `{}`", t.name)))?;
        buf.push(ndim);
        for &d in &t.shape {
            put_u32(&mut buf, d, "dimension")?;
        }
        for v in &t.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<WeightSnapshot> {
    let mut r = Reader::new(bytes);
    r.header(SNAPSHOT_MAGIC)?;
    let model_id = r.string("model_id")?;
    let count = r.u32("tensor_count")? as usize;
    // Cap the preallocation; a corrupt count must not trigger a huge alloc.
    let mut tensors = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let name = r.string("tensor name")?;
        let ndim = r.u8("ndim")? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32("dimension")? as usize);
        }
        let numel = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or(SnapshotError::TruncatedFile("tensor values"))?;
        if numel.checked_mul(8).is_none_or(|n| n > r.remaining()) {
            return Err(SnapshotError::TruncatedFile("tensor values"));
        }
        let values = (0..numel)
            .map(|_| r.f64("tensor values"))
            .collect::<Result<Vec<_>>>()?;
        tensors.push(TensorRecord {
            name,
            shape,
            values,
        });
    }
    r.finish()?;
    let s = WeightSnapshot { model_id, tensors };
    s.validate()?;
    Ok(s)
}

pub fn encode_summary(s: &SummarySnapshot) -> Result<Vec<u8>> {
    s.validate()?;
    let mut buf = Vec::with_capacity(s.entries.len() * 64 + 32);
    buf.extend_from_slice(&SUMMARY_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    put_str(&mut buf, &s.model_id)?;
    put_u32(&mut buf, s.entries.len(), "entry_count")?;
    for e in &s.entries {
        put_str(&mut buf, &e.name)?;
        for v in e.stats.to_array() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

pub fn decode_summary(bytes: &[u8]) -> Result<SummarySnapshot> {
    let mut r = Reader::new(bytes);
    r.header(SUMMARY_MAGIC)?;
    let model_id = r.string("model_id")?;
    let count = r.u32("entry_count")? as usize;
    let mut entries = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let name = r.string("entry name")?;
        let mut v = [0.0; 4];
        for slot in &mut v {
            *slot = r.f64("summary statistics")?;
        }
        entries.push(SummaryEntry {
            name,
            stats: TensorStats::from_array(v),
        });
    }
    r.finish()?;
    let s = SummarySnapshot { model_id, entries };
    s.validate()?;
    Ok(s)
}

pub fn save_snapshot(s: &WeightSnapshot, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_snapshot(s)?)
}

pub fn load_snapshot(path: impl AsRef<Path>) -> Result<WeightSnapshot> {
    decode_snapshot(&fs::read(path)?)
}

pub fn save_summary(s: &SummarySnapshot, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_summary(s)?)
}

pub fn load_summary(path: impl AsRef<Path>) -> Result<SummarySnapshot> {
    decode_summary(&fs::read(path)?)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    f.flush()?;
    Ok(())
}

fn put_str(buf: &mut Vec<u8>, s: &str) -> Result<()> {
    let len = u16::try_from(s.len()).map_err(|_| SnapshotError::FieldOverflow(s.to_string()))?;
    buf.extend_from_slice(&len.to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
    Ok(())
}

fn put_u32(buf: &mut Vec<u8>, v: usize, what: &str) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| SnapshotError::FieldOverflow(what.to_string()))?;
    buf.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(SnapshotError::TruncatedFile(what));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn header(&mut self, magic: [u8; 4]) -> Result<()> {
        let n = self.remaining().min(4);
        let found = &self.bytes[..n];
        if found != magic {
            return Err(SnapshotError::BadMagic {
                expected: magic,
                found: found.to_vec(),
            });
        }
        self.pos = 4;
        let version = self.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(SnapshotError::UnsupportedVersion(version));
        }
        Ok(())
    }

    fn u8(&mut self, what: &'static str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &'static str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &'static str) -> Result<String> {
        let len = self.u16(what)? as usize;
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| SnapshotError::InvalidUtf8(what))
    }

    fn finish(&self) -> Result<()> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(SnapshotError::TrailingBytes(n)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> WeightSnapshot {
        WeightSnapshot::new(
            "demo",
            vec![
                TensorRecord::new("w", vec![2, 2], vec![1.0, -2.5, 3.25, 1e-300]).unwrap(),
                TensorRecord::new("b", vec![3], vec![0.1, 0.2, 0.3]).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn header_layout_is_exact() {
        let bytes = encode_snapshot(&sample()).unwrap();
        assert_eq!(&bytes[..4], b"FSNP");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..10], &[4, 0]);
        assert_eq!(&bytes[10..14], b"demo");
        assert_eq!(&bytes[14..18], &[2, 0, 0, 0]);
        // first tensor in canonical order is "b"
        assert_eq!(&bytes[18..21], &[1, 0, b'b']);
        assert_eq!(bytes[21], 1);
        assert_eq!(&bytes[22..26], &[3, 0, 0, 0]);
        assert_eq!(&bytes[26..34], &0.1f64.to_le_bytes());
        // header + b(2+1+1+4+24) + w(2+1+1+8+32)
        assert_eq!(bytes.len(), 18 + 32 + 44);
    }

    #[test]
    fn round_trip() {
        let s = sample();
        let back = decode_snapshot(&encode_snapshot(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode_snapshot(&sample()).unwrap();
        bytes[0] = b'X';
        assert!(matches!(
            decode_snapshot(&bytes),
            Err(SnapshotError::BadMagic { .. })
        ));
        assert!(matches!(
            decode_snapshot(b"FS"),
            Err(SnapshotError::BadMagic { .. })
        ));
        // a summary file is not a snapshot file
        let sum = SummarySnapshot::from_snapshot(&sample()).unwrap();
        assert!(matches!(
            decode_snapshot(&encode_summary(&sum).unwrap()),
            Err(SnapshotError::BadMagic { .. })
        ));
    }

    #[test]
    fn unsupported_version() {
        let mut bytes = encode_snapshot(&sample()).unwrap();
        bytes[4] = 2;
        assert!(matches!(
            decode_snapshot(&bytes),
            Err(SnapshotError::UnsupportedVersion(2))
        ));
    }

    #[test]
    fn truncated_mid_tensor() {
        let bytes = encode_snapshot(&sample()).unwrap();
        for cut in [5, 12, 20, bytes.len() - 3] {
            assert!(
                matches!(
                    decode_snapshot(&bytes[..cut]),
                    Err(SnapshotError::TruncatedFile(_))
                ),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = encode_snapshot(&sample()).unwrap();
        bytes.push(0);
        assert!(matches!(
            decode_snapshot(&bytes),
            Err(SnapshotError::TrailingBytes(1))
        ));
    }

    #[test]
    fn summary_round_trip_and_constant() {
        let s = WeightSnapshot::new(
            "c",
            vec![TensorRecord::new("k", vec![3], vec![5.0; 3]).unwrap()],
        )
        .unwrap();
        let sum = SummarySnapshot::from_snapshot(&s).unwrap();
        let bytes = encode_summary(&sum).unwrap();
        assert_eq!(&bytes[..4], b"FSUM");
        let back = decode_summary(&bytes).unwrap();
        assert_eq!(back, sum);
        assert_eq!(back.entries[0].stats.to_array(), [5.0, 0.0, 5.0, 5.0]);
    }

    #[test]
    fn summary_empty_rejected() {
        let empty = SummarySnapshot {
            model_id: "e".into(),
            entries: vec![],
        };
        assert!(matches!(
            encode_summary(&empty),
            Err(SnapshotError::EmptySnapshot)
        ));
        // hand-built file with entry_count = 0
        let mut bytes = b"FSUM".to_vec();
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.push(b'e');
        bytes.extend_from_slice(&0u32.to_le_bytes());
        assert!(matches!(
            decode_summary(&bytes),
            Err(SnapshotError::EmptySnapshot)
        ));
    }

    #[test]
    fn file_io() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.fsnp");
        save_snapshot(&sample(), &p).unwrap();
        assert_eq!(load_snapshot(&p).unwrap(), sample());
        assert!(matches!(
            load_snapshot(dir.path().join("missing.fsnp")),
            Err(SnapshotError::IoFailure(_))
        ));
    }
}
