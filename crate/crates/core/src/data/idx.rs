//! Unsigned-byte IDX files (the MNIST distribution format): a big-endian
//! magic `0x0000 08 nd`, `nd` big-endian u32 dimensions, then the data.

use std::fs;
use std::path::Path;

use super::{DataError, SequenceBatch, Targets, Window};
use crate::tensor::Tensor;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
const UBYTE: u8 = 0x08;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxArray {
    pub fn images(
        count: usize,
        rows: usize,
        cols: usize,
        data: Vec<u8>,
    ) -> Result<Self, DataError> {
        Self::new(vec![count, rows, cols], data)
    }

    pub fn labels(data: Vec<u8>) -> Self {
        IdxArray {
            dims: vec![data.len()],
            data,
        }
    }

    pub fn new(dims: Vec<usize>, data: Vec<u8>) -> Result<Self, DataError> {
        if dims.is_empty() || dims.len() > 255 {
            return Err(DataError::Idx(format!("unsupported rank {}", dims.len())));
        }
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(DataError::Idx(format!(
                "dimensions {dims:?} need {expected} bytes, got {}",
                data.len()
            )));
        }
        Ok(IdxArray { dims, data })
    }

    pub fn magic(&self) -> u32 {
        ((UBYTE as u32) << 8) | self.dims.len() as u32
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 4 * self.dims.len() + self.data.len());
        out.extend_from_slice(&self.magic().to_be_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_be_bytes());
        }
        out.extend_from_slice(&self.data);
        out
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let bytes = fs::read(path).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        read_idx(&bytes).map_err(|e| match e {
            DataError::Idx(msg) => DataError::Idx(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        fs::write(path, self.to_bytes()).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

pub fn read_idx(bytes: &[u8]) -> Result<IdxArray, DataError> {
    let word = |k: usize| -> Result<u32, DataError> {
        bytes
            .get(k..k + 4)
            .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| DataError::Idx(format!("truncated header at byte {k}")))
    };
    let magic = word(0)?;
    if magic >> 16 != 0 || (magic >> 8) & 0xff != UBYTE as u32 {
        return Err(DataError::Idx(format!("bad magic number {magic:#010x}")));
    }
    let rank = (magic & 0xff) as usize;
    let dims = (0..rank)
        .map(|k| word(4 + 4 * k).map(|d| d as usize))
        .collect::<Result<Vec<_>, _>>()?;
    let body = &bytes[4 + 4 * rank..];
    IdxArray::new(dims, body.to_vec())
}

/// Each image becomes a sequence of its pixel rows, scaled to `[0, 1]`.
pub fn mnist_sequences(images: &IdxArray, labels: &IdxArray) -> Result<SequenceBatch, DataError> {
    if images.magic() != IMAGE_MAGIC {
        return Err(DataError::Idx(format!(
            "image file has magic {:#010x}, expected {IMAGE_MAGIC:#010x}",
            images.magic()
        )));
    }
    if labels.magic() != LABEL_MAGIC {
        return Err(DataError::Idx(format!(
            "label file has magic {:#010x}, expected {LABEL_MAGIC:#010x}",
            labels.magic()
        )));
    }
    let (count, rows, cols) = (images.dims[0], images.dims[1], images.dims[2]);
    if labels.dims[0] != count {
        return Err(DataError::Idx(format!(
            "{count} images but {} labels",
            labels.dims[0]
        )));
    }
    if let Some(bad) = labels.data.iter().find(|&&l| l > 9) {
        return Err(DataError::Idx(format!("label {bad} outside 0..=9")));
    }
    let size = rows * cols;
    let sources = (0..count)
        .map(|k| {
            let pixels = images.data[k * size..(k + 1) * size]
                .iter()
                .map(|&p| p as f64 / 255.0)
                .collect();
            Tensor::new(rows, cols, pixels).expect("image size")
        })
        .collect();
    Ok(SequenceBatch {
        sources,
        windows: (0..count)
            .map(|source| Window { source, start: 0 })
            .collect(),
        seq_len: rows,
        targets: Targets::Classes {
            labels: labels.data.iter().map(|&l| l as usize).collect(),
            n_classes: 10,
        },
        targets_are_features: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let a = IdxArray::labels(vec![3, 1]);
        assert_eq!(a.to_bytes(), vec![0, 0, 8, 1, 0, 0, 0, 2, 3, 1]);
        assert_eq!(read_idx(&a.to_bytes()).unwrap(), a);
    }

    #[test]
    fn rejects_malformed_files() {
        assert!(read_idx(&[0, 0, 9, 1, 0, 0, 0, 0]).is_err());
        assert!(read_idx(&[0, 0, 8]).is_err());
        assert!(read_idx(&[0, 0, 8, 1, 0, 0, 0, 2, 5]).is_err());
        assert!(read_idx(&[0, 0, 8, 1, 0, 0, 0, 1, 5, 6]).is_err());
    }

    #[test]
    fn mnist_scaling_and_shape() {
        let mut px = vec![0u8; 2 * 28 * 28];
        px[28 * 28] = 255;
        let images = IdxArray::images(2, 28, 28, px).unwrap();
        let set = mnist_sequences(&images, &IdxArray::labels(vec![7, 2])).unwrap();
        assert_eq!(set.seq_len, 28);
        assert_eq!(set.n_features(), 28);
        assert!(set.sources[0].data().iter().all(|&v| v == 0.0));
        assert_eq!(set.sources[1].get(0, 0), 1.0);
        assert!(mnist_sequences(&images, &IdxArray::labels(vec![7])).is_err());
        assert!(
            mnist_sequences(&IdxArray::labels(vec![1, 2]), &IdxArray::labels(vec![7, 2])).is_err()
        );
    }
}
