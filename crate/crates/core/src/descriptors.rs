use std::path::Path;

use crate::error::{Error, Result};
use crate::formats::{decode_matrix, encode_matrix, read_bytes, write_bytes, MatrixKind};
use crate::hog::HogDescriptor;

/// Dense row-major matrix of descriptors sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    dim: usize,
    data: Vec<f32>,
}

impl DescriptorSet {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            data: Vec::new(),
        }
    }

    pub fn from_flat(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::Shape(format!(
                "{} values do not form rows of length {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let dim = rows
            .first()
            .map(|r| r.as_ref().len())
            .ok_or_else(|| Error::Argument("empty descriptor list".into()))?;
        let mut set = Self::new(dim);
        for r in rows {
            set.push(r.as_ref())?;
        }
        Ok(set)
    }

    pub fn from_descriptors(descs: &[HogDescriptor]) -> Result<Self> {
        let rows: Vec<&[f32]> = descs.iter().map(|d| d.values.as_slice()).collect();
        Self::from_rows(&rows)
    }

    pub fn push(&mut self, row: &[f32]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::Shape(format!(
                "descriptor of length {} in a set of dimension {}",
                row.len(),
                self.dim
            )));
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f32] {
        &self.data
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::Data(format!(
                "non-finite value in descriptor {}",
                i / self.dim
            ))),
            None => Ok(()),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode_matrix(MatrixKind::Descriptors, self.len(), self.dim, &self.data)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_bytes(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let (_, dim, data) = decode_matrix(MatrixKind::Descriptors, &read_bytes(path)?, path)?;
        Self::from_flat(dim, data).map_err(|e| Error::malformed(path, e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixed_dimensions_rejected() {
        let mut s = DescriptorSet::new(3);
        s.push(&[1.0, 2.0, 3.0]).unwrap();
        assert!(s.push(&[1.0]).is_err());
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.bin");
        let s = DescriptorSet::from_rows(&[[0.5f32, 0.25], [1.0, 0.0]]).unwrap();
        s.save(&p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"BOWG-DESC v1 2 2\n"));
        assert_eq!(DescriptorSet::load(&p).unwrap(), s);
    }
}
