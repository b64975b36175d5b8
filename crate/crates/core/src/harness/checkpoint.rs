use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Matrix, ParamStore};

pub const CHECKPOINT_MAGIC: &[u8] = b"SLIMCKPT1\n";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

/// JSON line between the magic and the little-endian payload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config_hash: String,
    pub epoch: usize,
    pub params: Vec<ParamEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub values: Vec<Matrix>,
}

pub fn save_checkpoint(path: &Path, store: &ParamStore, config_hash: &str, epoch: usize) -> Result<()> {
    let header = CheckpointHeader {
        config_hash: config_hash.to_string(),
        epoch,
        params: store
            .iter()
            .map(|(_, p)| {
                let (rows, cols) = p.shape();
                ParamEntry {
                    name: p.name().to_string(),
                    rows,
                    cols,
                }
            })
            .collect(),
    };
    let json = serde_json::to_string(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut bytes = Vec::with_capacity(CHECKPOINT_MAGIC.len() + json.len() + 1 + 8 * store.scalar_count());
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    bytes.extend_from_slice(json.as_bytes());
    bytes.push(b'\n');
    for (_, p) in store.iter() {
        for x in p.value().data() {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let rest = bytes
        .strip_prefix(CHECKPOINT_MAGIC)
        .ok_or_else(|| Error::Checkpoint(format!("{}: not a checkpoint", path.display())))?;
    let nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Checkpoint("truncated header".into()))?;
    let header: CheckpointHeader =
        serde_json::from_slice(&rest[..nl]).map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    let mut payload = rest[nl + 1..].chunks_exact(8);
    let expected: usize = header.params.iter().map(|p| p.rows * p.cols).sum();
    if payload.len() != expected || !payload.remainder().is_empty() {
        return Err(Error::Checkpoint(format!(
            "payload holds {} bytes, header describes {expected} scalars",
            rest.len() - nl - 1
        )));
    }
    let mut values = Vec::with_capacity(header.params.len());
    for p in &header.params {
        let data = payload
            .by_ref()
            .take(p.rows * p.cols)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        values.push(Matrix::from_vec(p.rows, p.cols, data)?);
    }
    Ok(Checkpoint { header, values })
}

/// Loads parameters into `store`, refusing a checkpoint written under a
/// different config or with a different parameter layout.
pub fn load_checkpoint(path: &Path, store: &mut ParamStore, config_hash: &str) -> Result<usize> {
    let ck = read_checkpoint(path)?;
    if ck.header.config_hash != config_hash {
        return Err(Error::Checkpoint(format!(
            "config hash mismatch: checkpoint {} vs config {config_hash}",
            ck.header.config_hash
        )));
    }
    if ck.header.params.len() != store.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint has {} parameters, model has {}",
            ck.header.params.len(),
            store.len()
        )));
    }
    for (entry, value) in ck.header.params.iter().zip(ck.values) {
        let id = store
            .find(&entry.name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown parameter `{}`", entry.name)))?;
        if store.value(id).shape() != value.shape() {
            return Err(Error::Checkpoint(format!("shape mismatch for `{}`", entry.name)));
        }
        *store.value_mut(id) = value;
    }
    Ok(ck.header.epoch)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore {
        let mut s = ParamStore::new();
        s.add("a", Matrix::from_vec(2, 2, vec![1.0, -2.5, 3.0, 1e-300]).unwrap()).unwrap();
        s.add("b", Matrix::from_vec(1, 3, vec![0.1, 0.2, f64::MIN_POSITIVE]).unwrap()).unwrap();
        s
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        let src = store();
        save_checkpoint(&path, &src, "h", 7).unwrap();
        let mut dst = store();
        *dst.value_mut(dst.find("a").unwrap()) = Matrix::zeros(2, 2);
        assert_eq!(load_checkpoint(&path, &mut dst, "h").unwrap(), 7);
        for ((_, p), (_, q)) in src.iter().zip(dst.iter()) {
            assert_eq!(p.value(), q.value());
        }
    }

    #[test]
    fn mismatches_are_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        save_checkpoint(&path, &store(), "h", 0).unwrap();
        assert!(matches!(load_checkpoint(&path, &mut store(), "other"), Err(Error::Checkpoint(_))));
        let mut wrong = ParamStore::new();
        wrong.add("a", Matrix::zeros(2, 2)).unwrap();
        wrong.add("b", Matrix::zeros(3, 1)).unwrap();
        assert!(load_checkpoint(&path, &mut wrong, "h").is_err());
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.pop();
        std::fs::write(&path, bytes).unwrap();
        assert!(read_checkpoint(&path).is_err());
    }
}
