//! Row-major little-endian `f32` matrices with a JSON sidecar.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorSidecar {
    pub ids: Vec<String>,
    pub dim: usize,
    pub provider: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorTable {
    pub ids: Vec<String>,
    pub dim: usize,
    pub provider: String,
    data: Vec<f32>,
}

impl VectorTable {
    pub fn new(provider: impl Into<String>, dim: usize) -> Self {
        VectorTable {
            ids: Vec::new(),
            dim,
            provider: provider.into(),
            data: Vec::new(),
        }
    }

    pub fn push(&mut self, id: impl Into<String>, vector: &[f32]) {
        assert_eq!(vector.len(), self.dim, "vector dimension mismatch");
        self.ids.push(id.into());
        self.data.extend_from_slice(vector);
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.ids.iter().position(|x| x == id).map(|i| self.row(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), self.row(i)))
    }

    /// Sidecar path for a `.bin` file: same stem, `.json` extension.
    pub fn sidecar_path(bin: &Path) -> PathBuf {
        bin.with_extension("json")
    }

    pub fn write(&self, bin: &Path) -> io::Result<()> {
        if let Some(parent) = bin.parent() {
            fs::create_dir_all(parent)?;
        }
        let bytes: Vec<u8> = self.data.iter().flat_map(|x| x.to_le_bytes()).collect();
        fs::write(bin, bytes)?;
        let sidecar = VectorSidecar {
            ids: self.ids.clone(),
            dim: self.dim,
            provider: self.provider.clone(),
        };
        let json = serde_json::to_string_pretty(&sidecar).map_err(io::Error::other)?;
        fs::write(Self::sidecar_path(bin), json + "\n")
    }

    pub fn read(bin: &Path) -> io::Result<Self> {
        let sidecar: VectorSidecar =
            serde_json::from_str(&fs::read_to_string(Self::sidecar_path(bin))?)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        let bytes = fs::read(bin)?;
        if bytes.len() != sidecar.ids.len() * sidecar.dim * 4 {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!(
                    "{}: {} bytes, expected {} rows of dimension {}",
                    bin.display(),
                    bytes.len(),
                    sidecar.ids.len(),
                    sidecar.dim
                ),
            ));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(VectorTable {
            ids: sidecar.ids,
            dim: sidecar.dim,
            provider: sidecar.provider,
            data,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v/cause.bin");
        let mut t = VectorTable::new("hash-bow-3", 3);
        t.push("CWE-79", &[1.0, 0.0, -0.5]);
        t.push("CWE-89", &[0.25, 2.0, 0.0]);
        t.write(&path).unwrap();
        assert_eq!(fs::read(&path).unwrap().len(), 24);
        assert_eq!(&fs::read(&path).unwrap()[..4], &1.0f32.to_le_bytes());
        let back = VectorTable::read(&path).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.get("CWE-89"), Some(&[0.25, 2.0, 0.0][..]));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("code.bin");
        let mut t = VectorTable::new("p", 2);
        t.push("a", &[1.0, 2.0]);
        t.write(&path).unwrap();
        fs::write(&path, [0u8; 5]).unwrap();
        assert!(VectorTable::read(&path).is_err());
    }
}
