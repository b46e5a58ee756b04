//! `FEF1` checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "FEF1"
//! u32 entry count
//! per entry: u32 name length, UTF-8 name, u32 rank, rank × u64 extents
//! per entry, in table order: numel × f64
//! ```
//!
//! Parameters come first in store order, then each BN buffer as
//! `{name}.mean`, `{name}.var`, `{name}.tracked`, then any
//! extra entries (optimizer state). The model config is written next to the
//! file as `key=value` text.

use std::io::Read;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;

use super::ModelConfig;
use crate::error::{FeError, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FEF1";

const BUFFER_SUFFIXES: [&str; 3] = ["mean", "var", "tracked"];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub entries: IndexMap<String, Tensor>,
}

/// `model.fef` → `model.fef.cfg`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".cfg");
    PathBuf::from(s)
}

pub fn read_config_sidecar(path: &Path) -> Result<ModelConfig> {
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| FeError::Io(format!("{}: {e}", side.display())))?;
    ModelConfig::from_kv(&text)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(FeError::Format(format!(
                "truncated checkpoint reading {what}: need {n} bytes at offset {}, {} left",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

impl Checkpoint {
    pub fn from_store(store: &ParamStore) -> Self {
        let mut entries = IndexMap::new();
        for (_, name, p) in store.iter() {
            entries.insert(name.to_string(), p.value.clone());
        }
        for (_, name, b) in store.buffers() {
            let c = b.mean.len();
            entries.insert(format!("{name}.mean"), Tensor::new(&[c], b.mean.clone()).unwrap());
            entries.insert(format!("{name}.var"), Tensor::new(&[c], b.var.clone()).unwrap());
            entries.insert(format!("{name}.tracked"), Tensor::scalar(b.tracked as f64).reshape(&[1]).unwrap());
        }
        Checkpoint { entries }
    }

    pub fn insert(&mut self, name: &str, t: Tensor) {
        self.entries.insert(name.to_string(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    /// Copies every parameter and buffer of `store` from this checkpoint.
    /// Missing names and shape mismatches are errors; extra entries are left
    /// for the caller.
    pub fn restore_into(&self, store: &mut ParamStore) -> Result<()> {
        let names: Vec<String> = store.iter().map(|(_, n, _)| n.to_string()).collect();
        for name in names {
            let t = self
                .entries
                .get(&name)
                .ok_or_else(|| FeError::Format(format!("checkpoint has no parameter {name}")))?;
            let dst = store.by_name_mut(&name).unwrap();
            if dst.shape() != t.shape() {
                return Err(FeError::Format(format!(
                    "parameter {name}: checkpoint shape {:?}, model shape {:?}",
                    t.shape(),
                    dst.shape()
                )));
            }
            *dst = t.clone();
        }
        let bufs: Vec<String> = store.buffers().map(|(_, n, _)| n.to_string()).collect();
        for name in bufs {
            let mut got = Vec::new();
            for suffix in BUFFER_SUFFIXES {
                let key = format!("{name}.{suffix}");
                got.push(
                    self.entries
                        .get(&key)
                        .ok_or_else(|| FeError::Format(format!("checkpoint has no buffer {key}")))?,
                );
            }
            let run = store.buffer_by_name_mut(&name).unwrap();
            if got[0].numel() != run.mean.len() || got[1].numel() != run.var.len() || got[2].numel() != 1 {
                return Err(FeError::Format(format!("buffer {name}: channel count mismatch")));
            }
            run.mean = got[0].data().to_vec();
            run.var = got[1].data().to_vec();
            run.tracked = got[2].data()[0] as u64;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, t) in &self.entries {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
        }
        for t in self.entries.values() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut c = Cursor { buf, pos: 0 };
        if c.take(4, "magic")? != CHECKPOINT_MAGIC {
            return Err(FeError::Format("not a checkpoint: bad magic bytes".into()));
        }
        let n = c.u32("entry count")? as usize;
        let mut table = Vec::with_capacity(n.min(1 << 16));
        for i in 0..n {
            let len = c.u32("name length")? as usize;
            let name = std::str::from_utf8(c.take(len, "name")?)
                .map_err(|_| FeError::Format(format!("entry {i}: name is not UTF-8")))?
                .to_string();
            let rank = c.u32("rank")? as usize;
            if rank > 8 {
                return Err(FeError::Format(format!("entry {name}: rank {rank} too large")));
            }
            let shape: Vec<usize> = (0..rank).map(|_| c.u64("extent").map(|d| d as usize)).collect::<Result<_>>()?;
            table.push((name, shape));
        }
        let mut entries = IndexMap::new();
        for (name, shape) in table {
            let numel = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| FeError::Format(format!("entry {name}: extent overflow")))?;
            let bytes = numel
                .checked_mul(8)
                .ok_or_else(|| FeError::Format(format!("entry {name}: extent overflow")))?;
            let raw = c.take(bytes, &name)?;
            let data = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
            if entries.insert(name.clone(), Tensor::new(&shape, data)?).is_some() {
                return Err(FeError::Format(format!("duplicate entry {name}")));
            }
        }
        if c.pos != buf.len() {
            return Err(FeError::Format(format!("{} trailing bytes after checkpoint data", buf.len() - c.pos)));
        }
        Ok(Checkpoint { entries })
    }

    /// Writes the checkpoint and its config sidecar.
    pub fn save(&self, path: &Path, cfg: &ModelConfig) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| FeError::Io(format!("{}: {e}", path.display())))?;
        let side = sidecar_path(path);
        std::fs::write(&side, cfg.to_kv()).map_err(|e| FeError::Io(format!("{}: {e}", side.display())))
    }

    pub fn load(path: &Path) -> Result<(Self, ModelConfig)> {
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| FeError::Io(format!("{}: {e}", path.display())))?;
        Ok((Checkpoint::from_bytes(&buf)?, read_config_sidecar(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FeFormer;

    #[test]
    fn bytes_round_trip() {
        let (_, mut store) = FeFormer::build(&ModelConfig::toy(4, 2)).unwrap();
        store.buffer_by_name_mut("stem.embed0.down.bn.running").unwrap().tracked = 7;
        let mut ck = Checkpoint::from_store(&store);
        ck.insert("optim.step", Tensor::new(&[1], vec![3.0]).unwrap());
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        let (_, mut fresh) = FeFormer::build(&ModelConfig { seed: 5, ..ModelConfig::toy(4, 2) }).unwrap();
        back.restore_into(&mut fresh).unwrap();
        assert_eq!(fresh, store);
    }

    #[test]
    fn layout_is_as_documented() {
        let mut ck = Checkpoint::default();
        ck.insert("ab", Tensor::new(&[2], vec![1.0, -2.0]).unwrap());
        let b = ck.to_bytes();
        assert_eq!(&b[..4], b"FEF1");
        assert_eq!(&b[4..8], &1u32.to_le_bytes());
        assert_eq!(&b[8..12], &2u32.to_le_bytes());
        assert_eq!(&b[12..14], b"ab");
        assert_eq!(&b[14..18], &1u32.to_le_bytes());
        assert_eq!(&b[18..26], &2u64.to_le_bytes());
        assert_eq!(&b[26..34], &1.0f64.to_le_bytes());
        assert_eq!(&b[34..42], &(-2.0f64).to_le_bytes());
        assert_eq!(b.len(), 42);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let mut ck = Checkpoint::default();
        ck.insert("w", Tensor::new(&[3], vec![1.0, 2.0, 3.0]).unwrap());
        let b = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&b[..b.len() - 1]).unwrap_err().to_string().contains("truncated"));
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut extra = b;
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }

    #[test]
    fn mismatched_model_is_rejected() {
        let (_, small) = FeFormer::build(&ModelConfig::toy(4, 2)).unwrap();
        let (_, mut big) = FeFormer::build(&ModelConfig::toy(8, 2)).unwrap();
        let err = Checkpoint::from_store(&small).restore_into(&mut big).unwrap_err();
        assert!(err.to_string().contains("shape"));
    }
}
