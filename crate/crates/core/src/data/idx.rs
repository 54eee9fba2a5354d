//! Big-endian IDX image/label ingestion (the Fashion-MNIST on-disk format).

use std::path::Path;

use crate::error::{IdxError, Result};

use super::Dataset;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32_be(bytes: &[u8], offset: usize) -> std::result::Result<u32, IdxError> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(IdxError::Truncated {
            needed: end,
            available: bytes.len(),
        });
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

fn parse_images(bytes: &[u8]) -> std::result::Result<(usize, usize, Vec<f64>), IdxError> {
    let magic = read_u32_be(bytes, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(IdxError::BadMagic {
            expected: IMAGES_MAGIC,
            found: magic,
        });
    }
    let n = read_u32_be(bytes, 4)? as usize;
    let rows = read_u32_be(bytes, 8)? as usize;
    let cols = read_u32_be(bytes, 12)? as usize;
    let needed = 16 + n * rows * cols;
    if bytes.len() < needed {
        return Err(IdxError::Truncated {
            needed,
            available: bytes.len(),
        });
    }
    let features = bytes[16..needed].iter().map(|&b| b as f64 / 255.0).collect();
    Ok((n, rows * cols, features))
}

fn parse_labels(bytes: &[u8]) -> std::result::Result<Vec<usize>, IdxError> {
    let magic = read_u32_be(bytes, 0)?;
    if magic != LABELS_MAGIC {
        return Err(IdxError::BadMagic {
            expected: LABELS_MAGIC,
            found: magic,
        });
    }
    let n = read_u32_be(bytes, 4)? as usize;
    let needed = 8 + n;
    if bytes.len() < needed {
        return Err(IdxError::Truncated {
            needed,
            available: bytes.len(),
        });
    }
    Ok(bytes[8..needed].iter().map(|&b| b as usize).collect())
}

/// Load an IDX image/label file pair into a [`Dataset`]. Pixels are scaled
/// to `[0, 1]` and flattened row-major; the class count is the highest label
/// plus one.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let image_bytes = std::fs::read(images_path)?;
    let label_bytes = std::fs::read(labels_path)?;
    let (n_images, n_features, features) = parse_images(&image_bytes)?;
    let labels = parse_labels(&label_bytes)?;
    if n_images != labels.len() {
        return Err(IdxError::CountMismatch {
            images: n_images,
            labels: labels.len(),
        }
        .into());
    }
    let n_classes = labels.iter().max().map_or(1, |&m| m + 1);
    Dataset::new(features, n_features, labels, n_classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn image_file(n: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
        bytes.extend_from_slice(&n.to_be_bytes());
        bytes.extend_from_slice(&rows.to_be_bytes());
        bytes.extend_from_slice(&cols.to_be_bytes());
        bytes.extend_from_slice(pixels);
        bytes
    }

    fn label_file(labels: &[u8]) -> Vec<u8> {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        bytes.extend_from_slice(labels);
        bytes
    }

    fn write_pair(images: &[u8], labels: &[u8]) -> (tempfile::TempDir, Dataset) {
        let dir = tempfile::tempdir().unwrap();
        let ipath = dir.path().join("images.idx");
        let lpath = dir.path().join("labels.idx");
        std::fs::write(&ipath, images).unwrap();
        std::fs::write(&lpath, labels).unwrap();
        let d = load_idx(&ipath, &lpath).unwrap();
        (dir, d)
    }

    #[test]
    fn two_image_pair_parses() {
        // 2 images of 2x2 pixels, byte values chosen so scaling is exact.
        let images = image_file(2, 2, 2, &[0, 51, 102, 255, 255, 204, 153, 0]);
        let labels = label_file(&[1, 0]);
        let (_dir, d) = write_pair(&images, &labels);
        assert_eq!(d.n_samples(), 2);
        assert_eq!(d.n_features(), 4);
        assert_eq!(d.row(0), &[0.0, 51.0 / 255.0, 102.0 / 255.0, 1.0]);
        assert_eq!(d.label(0), 1);
        assert_eq!(d.label(1), 0);
    }

    #[test]
    fn wrong_magic_in_labels_is_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let ipath = dir.path().join("images.idx");
        let lpath = dir.path().join("labels.idx");
        std::fs::write(&ipath, image_file(1, 1, 1, &[7])).unwrap();
        // An images magic where the labels magic belongs.
        let mut bad = label_file(&[0]);
        bad[..4].copy_from_slice(&IMAGES_MAGIC.to_be_bytes());
        std::fs::write(&lpath, bad).unwrap();
        match load_idx(&ipath, &lpath) {
            Err(Error::Idx(IdxError::BadMagic { expected, found })) => {
                assert_eq!(expected, LABELS_MAGIC);
                assert_eq!(found, IMAGES_MAGIC);
            }
            other => panic!("expected BadMagic, got {other:?}"),
        }
    }

    #[test]
    fn count_mismatch_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let ipath = dir.path().join("images.idx");
        let lpath = dir.path().join("labels.idx");
        std::fs::write(&ipath, image_file(3, 1, 1, &[1, 2, 3])).unwrap();
        std::fs::write(&lpath, label_file(&[0, 1])).unwrap();
        match load_idx(&ipath, &lpath) {
            Err(Error::Idx(IdxError::CountMismatch { images, labels })) => {
                assert_eq!((images, labels), (3, 2));
            }
            other => panic!("expected CountMismatch, got {other:?}"),
        }
    }

    #[test]
    fn truncated_pixel_payload_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let ipath = dir.path().join("images.idx");
        let lpath = dir.path().join("labels.idx");
        let mut images = image_file(2, 2, 2, &[0; 8]);
        images.truncate(16 + 5);
        std::fs::write(&ipath, images).unwrap();
        std::fs::write(&lpath, label_file(&[0, 1])).unwrap();
        match load_idx(&ipath, &lpath) {
            Err(Error::Idx(IdxError::Truncated { needed, available })) => {
                assert_eq!(needed, 24);
                assert_eq!(available, 21);
            }
            other => panic!("expected Truncated, got {other:?}"),
        }
    }
}
