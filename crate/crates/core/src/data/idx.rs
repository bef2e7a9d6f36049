//! IDX ubyte reader (MNIST / FashionMNIST layout).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::Dataset;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Truncated {
            path: path.to_path_buf(),
            detail: format!("header ends before byte {}", offset + 4),
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

/// Raw image bytes plus `(count, rows, cols)`.
pub fn read_images(path: &Path) -> Result<(Vec<u8>, usize, usize, usize)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    check_magic(&bytes, IMAGES_MAGIC, path)?;
    let count = be_u32(&bytes, 4, path)? as usize;
    let rows = be_u32(&bytes, 8, path)? as usize;
    let cols = be_u32(&bytes, 12, path)? as usize;
    let need = count * rows * cols;
    let body = &bytes[16..];
    if body.len() < need {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            detail: format!("{} pixel bytes, header promises {need}", body.len()),
        });
    }
    Ok((body[..need].to_vec(), count, rows, cols))
}

pub fn read_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    check_magic(&bytes, LABELS_MAGIC, path)?;
    let count = be_u32(&bytes, 4, path)? as usize;
    let body = &bytes[8..];
    if body.len() < count {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            detail: format!("{} label bytes, header promises {count}", body.len()),
        });
    }
    Ok(body[..count].to_vec())
}

/// Load an image/label file pair, scaling pixels to `[0, 1]` by `/255`.
///
/// The class count is taken as `max(label) + 1`.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let (pixels, count, rows, cols) = read_images(images)?;
    let label_bytes = read_labels(labels)?;
    if label_bytes.len() != count {
        return Err(Error::CountMismatch {
            images: count,
            labels: label_bytes.len(),
        });
    }
    let num_classes = label_bytes.iter().copied().max().map_or(0, |m| m as usize + 1);
    let features = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    let labels = label_bytes.iter().map(|&l| l as usize).collect();
    Dataset::new(rows * cols, num_classes.max(2), features, labels)
}

/// Write an IDX image/label pair; the inverse of [`load_idx`] on byte data.
pub fn write_idx(
    images: &Path,
    labels: &Path,
    rows: usize,
    cols: usize,
    pixels: &[u8],
    label_bytes: &[u8],
) -> Result<()> {
    let count = label_bytes.len();
    if pixels.len() != count * rows * cols {
        return Err(Error::CountMismatch {
            images: pixels.len() / (rows * cols).max(1),
            labels: count,
        });
    }
    let mut img = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, count as u32, rows as u32, cols as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    img.extend_from_slice(pixels);
    let mut lab = Vec::with_capacity(8 + count);
    for v in [LABELS_MAGIC, count as u32] {
        lab.extend_from_slice(&v.to_be_bytes());
    }
    lab.extend_from_slice(label_bytes);
    fs::write(images, img).map_err(|e| Error::io(images, e))?;
    fs::write(labels, lab).map_err(|e| Error::io(labels, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(dir: &Path, n_images: usize, n_labels: usize) -> (std::path::PathBuf, std::path::PathBuf) {
        let img = dir.join("images-idx3-ubyte");
        let lab = dir.join("labels-idx1-ubyte");
        let pixels: Vec<u8> = (0..n_images * 784).map(|i| (i % 256) as u8).collect();
        let labels: Vec<u8> = (0..n_labels).map(|i| (i % 10) as u8).collect();
        // Write the two halves separately so counts may disagree.
        write_idx(&img, &dir.join("unused"), 28, 28, &pixels, &vec![0; n_images]).unwrap();
        write_idx(&dir.join("unused2"), &lab, 1, 1, &vec![0; n_labels], &labels).unwrap();
        (img, lab)
    }

    #[test]
    fn loads_four_images() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = fixture(dir.path(), 4, 4);
        let ds = load_idx(&img, &lab).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.dim(), 784);
        assert!(ds.in_unit_range());
        // byte 255 sits at index 255 of the first image
        assert_eq!(ds.example(0)[255], 1.0);
        assert_eq!(ds.example(0)[0], 0.0);
    }

    #[test]
    fn count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = fixture(dir.path(), 4, 5);
        assert!(matches!(
            load_idx(&img, &lab),
            Err(Error::CountMismatch { images: 4, labels: 5 })
        ));
    }

    #[test]
    fn swapped_files_fail_on_magic() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = fixture(dir.path(), 2, 2);
        assert!(matches!(
            load_idx(&lab, &img),
            Err(Error::BadMagic { expected: IMAGES_MAGIC, found: LABELS_MAGIC, .. })
        ));
    }

    #[test]
    fn truncated_pixels() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = fixture(dir.path(), 3, 3);
        let bytes = fs::read(&img).unwrap();
        fs::write(&img, &bytes[..bytes.len() - 10]).unwrap();
        assert!(matches!(load_idx(&img, &lab), Err(Error::Truncated { .. })));
        fs::write(&img, &bytes[..6]).unwrap();
        assert!(matches!(load_idx(&img, &lab), Err(Error::Truncated { .. })));
    }

    #[test]
    fn round_trip_recovers_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = (dir.path().join("i"), dir.path().join("l"));
        let pixels: Vec<u8> = (0..5 * 12).map(|i| ((i * 37) % 256) as u8).collect();
        let labels = [3u8, 0, 1, 3, 2];
        write_idx(&img, &lab, 3, 4, &pixels, &labels).unwrap();
        let ds = load_idx(&img, &lab).unwrap();
        let back: Vec<u8> = ds.features().iter().map(|v| (v * 255.0).round() as u8).collect();
        assert_eq!(back, pixels);
        assert_eq!(ds.labels(), &[3, 0, 1, 3, 2]);
        assert_eq!(ds.num_classes(), 4);
    }
}
