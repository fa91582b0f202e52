//! Checkpoint files: a text manifest plus one raw little-endian `f32` blob.
//!
//! ```text
//! ECGSEG1
//! blob model.ckpt.bin
//! meta <key> <value>
//! tensor <name> f32 <d0,d1,...> <byte offset>
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{NnError, Result};
use crate::Tensor;

pub const CHECKPOINT_MAGIC: &str = "ECGSEG1";

fn bad(msg: impl Into<String>) -> NnError {
    NnError::Checkpoint(msg.into())
}

/// Named tensors and string metadata stored together.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub metadata: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_meta(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.metadata.push((key.into(), value.into()));
    }

    pub fn insert_tensor(&mut self, name: impl Into<String>, t: Tensor<f32>) {
        self.tensors.push((name.into(), t));
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Path of the blob that accompanies a manifest.
    pub fn blob_path(manifest: &Path) -> PathBuf {
        let mut name = manifest.file_name().unwrap_or_default().to_os_string();
        name.push(".bin");
        manifest.with_file_name(name)
    }

    /// Manifest text and blob bytes, without touching the file system.
    pub fn encode(&self, blob_name: &str) -> Result<(String, Vec<u8>)> {
        let mut manifest = format!("{CHECKPOINT_MAGIC}\nblob {blob_name}\n");
        for (k, v) in &self.metadata {
            if k.contains(char::is_whitespace) || v.contains('\n') {
                return Err(bad(format!("metadata {k:?} must be a single-line pair")));
            }
            writeln!(manifest, "meta {k} {v}").expect("string write");
        }
        let mut blob = Vec::new();
        for (name, t) in &self.tensors {
            if name.contains(char::is_whitespace) {
                return Err(bad(format!("tensor name {name:?} contains whitespace")));
            }
            let shape: Vec<String> = t.shape().iter().map(usize::to_string).collect();
            writeln!(manifest, "tensor {name} f32 {} {}", shape.join(","), blob.len()).expect("string write");
            for v in t.data() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok((manifest, blob))
    }

    /// Parses a manifest and its blob.
    pub fn decode(manifest: &str, blob: &[u8]) -> Result<Self> {
        let mut lines = manifest.lines();
        let magic = lines.next().unwrap_or("").trim();
        if magic != CHECKPOINT_MAGIC {
            if magic.starts_with("ECGSEG") {
                return Err(NnError::CheckpointVersion {
                    found: magic.to_string(),
                    expected: CHECKPOINT_MAGIC,
                });
            }
            return Err(bad("missing ECGSEG magic line"));
        }
        let mut ck = Checkpoint::new();
        let mut expected_offset = 0usize;
        for (lineno, line) in lines.enumerate() {
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            let (kind, rest) = line.split_once(' ').unwrap_or((line, ""));
            match kind {
                "blob" => {}
                "meta" => {
                    let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                    ck.insert_meta(k, v);
                }
                "tensor" => {
                    let parts: Vec<&str> = rest.split(' ').collect();
                    let &[name, dtype, shape, offset] = parts.as_slice() else {
                        return Err(bad(format!("line {}: malformed tensor entry", lineno + 2)));
                    };
                    if dtype != "f32" {
                        return Err(bad(format!("line {}: unsupported dtype {dtype}", lineno + 2)));
                    }
                    let shape: Vec<usize> = shape
                        .split(',')
                        .map(str::parse)
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad(format!("line {}: bad shape", lineno + 2)))?;
                    let offset: usize = offset
                        .parse()
                        .map_err(|_| bad(format!("line {}: bad offset", lineno + 2)))?;
                    if offset != expected_offset {
                        return Err(bad(format!("line {}: offset {offset} != {expected_offset}", lineno + 2)));
                    }
                    let len: usize = shape.iter().product();
                    let end = offset + 4 * len;
                    let bytes = blob
                        .get(offset..end)
                        .ok_or_else(|| bad(format!("blob truncated while reading {name}")))?;
                    let data = bytes
                        .chunks_exact(4)
                        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                        .collect();
                    ck.insert_tensor(name, Tensor::new(shape, data)?);
                    expected_offset = end;
                }
                other => return Err(bad(format!("line {}: unknown entry {other:?}", lineno + 2))),
            }
        }
        if expected_offset != blob.len() {
            return Err(bad(format!(
                "blob has {} bytes, manifest describes {expected_offset}",
                blob.len()
            )));
        }
        Ok(ck)
    }

    pub fn save(&self, manifest_path: &Path) -> Result<()> {
        let blob_path = Self::blob_path(manifest_path);
        let blob_name = blob_path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let (manifest, blob) = self.encode(&blob_name)?;
        fs::write(&blob_path, blob)?;
        fs::write(manifest_path, manifest)?;
        Ok(())
    }

    pub fn load(manifest_path: &Path) -> Result<Self> {
        let manifest = fs::read_to_string(manifest_path)
            .map_err(|e| bad(format!("cannot read {}: {e}", manifest_path.display())))?;
        let blob_name = manifest
            .lines()
            .find_map(|l| l.strip_prefix("blob "))
            .map(str::to_string);
        // validate the magic before touching the blob
        if !manifest.starts_with(CHECKPOINT_MAGIC) {
            return Self::decode(&manifest, &[]);
        }
        let blob_path = match blob_name {
            Some(name) => manifest_path.with_file_name(name.trim()),
            None => Self::blob_path(manifest_path),
        };
        let blob = fs::read(&blob_path).map_err(|e| bad(format!("cannot read {}: {e}", blob_path.display())))?;
        Self::decode(&manifest, &blob)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.insert_meta("config", r#"{"widths":[16,32]}"#);
        ck.insert_tensor("a.weight", Tensor::new(vec![2, 1, 3], vec![1., 2., 3., 4., 5., -6.5]).unwrap());
        ck.insert_tensor("a.bias", Tensor::new(vec![2], vec![0.25, f32::MIN_POSITIVE]).unwrap());
        ck
    }

    #[test]
    fn encode_decode_round_trip() {
        let ck = sample();
        let (m, b) = ck.encode("x.bin").unwrap();
        assert!(m.starts_with("ECGSEG1\n"));
        assert_eq!(b.len(), 8 * 4);
        assert_eq!(Checkpoint::decode(&m, &b).unwrap(), ck);
    }

    #[test]
    fn other_version_is_reported() {
        let err = Checkpoint::decode("ECGSEG2\n", &[]).unwrap_err();
        assert!(matches!(err, NnError::CheckpointVersion { .. }));
        assert!(matches!(Checkpoint::decode("garbage", &[]), Err(NnError::Checkpoint(_))));
    }

    #[test]
    fn truncated_blob_rejected() {
        let (m, b) = sample().encode("x.bin").unwrap();
        assert!(Checkpoint::decode(&m, &b[..b.len() - 4]).is_err());
    }

    #[test]
    fn save_and_load_files() {
        let dir = std::env::temp_dir().join(format!("ecgseg-ck-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.ckpt");
        sample().save(&path).unwrap();
        assert!(dir.join("model.ckpt.bin").exists());
        assert_eq!(Checkpoint::load(&path).unwrap(), sample());
        fs::remove_dir_all(&dir).unwrap();
    }
}
