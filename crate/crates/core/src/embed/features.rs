//! Feature store: a raw little-endian f64 file holding `N x dim` values,
//! plus a text sidecar (`<file>.idx`) whose first line is `dim\t<dim>` and
//! whose remaining lines are `<feature_ref>\t<row>`.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::DenseMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStore {
    keys: Vec<String>,
    index: HashMap<String, usize>,
    matrix: DenseMatrix,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".idx");
    PathBuf::from(name)
}

impl FeatureStore {
    pub fn new(dim: usize) -> Self {
        Self { keys: Vec::new(), index: HashMap::new(), matrix: DenseMatrix::zeros(0, dim) }
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn insert(&mut self, key: impl Into<String>, feature: &[f64]) -> Result<()> {
        let key = key.into();
        if feature.len() != self.dim() {
            return Err(Error::Shape(format!("feature `{key}` has {} values, store dim is {}", feature.len(), self.dim())));
        }
        if !feature.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput(format!("feature `{key}` has non-finite values")));
        }
        if self.index.contains_key(&key) {
            return Err(Error::InvalidInput(format!("duplicate feature key `{key}`")));
        }
        let mut values = std::mem::replace(&mut self.matrix, DenseMatrix::zeros(0, 0)).into_values();
        values.extend_from_slice(feature);
        self.matrix = DenseMatrix::from_vec(self.keys.len() + 1, feature.len(), values)?;
        self.index.insert(key.clone(), self.keys.len());
        self.keys.push(key);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.index.get(key).map(|&r| self.matrix.row(r))
    }

    /// Looks up every key, failing on the first missing one.
    pub fn gather<'a>(&self, keys: impl IntoIterator<Item = &'a str>) -> Result<DenseMatrix> {
        let mut rows = Vec::new();
        for k in keys {
            rows.push(*self.index.get(k).ok_or_else(|| Error::InvalidInput(format!("no feature for `{k}`")))?);
        }
        Ok(self.matrix.select_rows(&rows))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut bytes = Vec::with_capacity(self.matrix.values().len() * 8);
        for v in self.matrix.values() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        let mut idx = format!("dim\t{}\n", self.dim());
        for (row, key) in self.keys.iter().enumerate() {
            idx.push_str(&format!("{key}\t{row}\n"));
        }
        let side = sidecar_path(path);
        fs::write(&side, idx).map_err(|e| Error::io(format!("writing {}", side.display()), e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let side = sidecar_path(path);
        let idx = fs::read_to_string(&side).map_err(|e| Error::io(format!("reading {}", side.display()), e))?;
        let mut lines = idx.lines();
        let dim: usize = lines
            .next()
            .and_then(|l| l.strip_prefix("dim\t"))
            .and_then(|d| d.trim().parse().ok())
            .ok_or_else(|| Error::parse(&side, "line 1: expected `dim\\t<n>`"))?;

        let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        if dim == 0 || bytes.len() % (8 * dim) != 0 {
            return Err(Error::parse(path, format!("{} bytes is not a whole number of {dim}-dim rows", bytes.len())));
        }
        let rows = bytes.len() / (8 * dim);
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunks of 8")))
            .collect();
        let matrix = DenseMatrix::from_vec(rows, dim, values)?;

        let mut keys = vec![String::new(); rows];
        let mut index = HashMap::with_capacity(rows);
        for (n, line) in lines.enumerate() {
            let lineno = n + 2;
            let (key, row) = line
                .rsplit_once('\t')
                .ok_or_else(|| Error::parse(&side, format!("line {lineno}: expected `<key>\\t<row>`")))?;
            let row: usize = row
                .trim()
                .parse()
                .ok()
                .filter(|&r| r < rows)
                .ok_or_else(|| Error::parse(&side, format!("line {lineno}: bad row `{row}`")))?;
            if index.insert(key.to_string(), row).is_some() || !keys[row].is_empty() {
                return Err(Error::parse(&side, format!("line {lineno}: duplicate key or row")));
            }
            keys[row] = key.to_string();
        }
        if index.len() != rows {
            return Err(Error::parse(&side, format!("{} keys for {rows} rows", index.len())));
        }
        Ok(Self { keys, index, matrix })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("feats.bin");
        let mut store = FeatureStore::new(3);
        store.insert("b", &[0.1, -2.5, 1e-300]).unwrap();
        store.insert("a", &[f64::MIN_POSITIVE, 3.0, -0.0]).unwrap();
        store.write(&p).unwrap();
        let back = FeatureStore::read(&p).unwrap();
        assert_eq!(back.keys(), store.keys());
        for k in ["a", "b"] {
            let (x, y) = (store.get(k).unwrap(), back.get(k).unwrap());
            assert!(x.iter().zip(y).all(|(u, v)| u.to_bits() == v.to_bits()));
        }
        assert_eq!(std::fs::metadata(&p).unwrap().len(), 48);
    }

    #[test]
    fn insert_checks() {
        let mut store = FeatureStore::new(2);
        assert!(store.insert("a", &[1.0]).is_err());
        assert!(store.insert("a", &[f64::NAN, 1.0]).is_err());
        store.insert("a", &[1.0, 2.0]).unwrap();
        assert!(store.insert("a", &[1.0, 2.0]).is_err());
        assert!(store.gather(["a", "zz"]).is_err());
    }
}
