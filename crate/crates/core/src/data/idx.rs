//! IDX container (the MNIST distribution format): big-endian header, raw
//! unsigned bytes.

use std::path::Path;

use super::image::{downscale_2x2, GrayImage};
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledImageSet {
    pub name: String,
    pub images: Vec<GrayImage>,
    pub labels: Vec<u8>,
}

impl LabeledImageSet {
    pub fn new(name: impl Into<String>, images: Vec<GrayImage>, labels: Vec<u8>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::CountMismatch {
                images: images.len(),
                labels: labels.len(),
            });
        }
        if let Some(first) = images.first() {
            if images
                .iter()
                .any(|i| i.height() != first.height() || i.width() != first.width())
            {
                return Err(Error::Shape("images in a set must share dimensions".into()));
            }
        }
        Ok(Self {
            name: name.into(),
            images,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// `(rows, cols)` of the images, `(0, 0)` for an empty set.
    pub fn dims(&self) -> (usize, usize) {
        self.images
            .first()
            .map_or((0, 0), |i| (i.height(), i.width()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&GrayImage, u8)> {
        self.images.iter().zip(self.labels.iter().copied())
    }

    pub fn downscaled(&self) -> Result<LabeledImageSet> {
        let images = self.images.iter().map(downscale_2x2).collect::<Result<_>>()?;
        Ok(LabeledImageSet {
            name: self.name.clone(),
            images,
            labels: self.labels.clone(),
        })
    }

    pub fn take(&self, n: usize) -> LabeledImageSet {
        let n = n.min(self.len());
        LabeledImageSet {
            name: self.name.clone(),
            images: self.images[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }
}

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < self.pos + n {
            return Err(Error::Truncated {
                path: self.path.to_path_buf(),
                needed: self.pos + n,
                available: self.bytes.len(),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32_be(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn magic(&mut self, expected: u32) -> Result<()> {
        let found = self.u32_be()?;
        if found != expected {
            return Err(Error::BadMagic {
                path: self.path.to_path_buf(),
                expected,
                found,
            });
        }
        Ok(())
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn read_idx_images(path: impl AsRef<Path>) -> Result<Vec<GrayImage>> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let mut r = Reader {
        path,
        bytes: &bytes,
        pos: 0,
    };
    r.magic(IMAGES_MAGIC)?;
    let count = r.u32_be()? as usize;
    let rows = r.u32_be()? as usize;
    let cols = r.u32_be()? as usize;
    let payload = r.take(count * rows * cols)?;
    if rows * cols == 0 {
        return Ok(Vec::new());
    }
    payload
        .chunks(rows * cols)
        .map(|px| GrayImage::new(rows, cols, px.to_vec()))
        .collect()
}

pub fn read_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let mut r = Reader {
        path,
        bytes: &bytes,
        pos: 0,
    };
    r.magic(LABELS_MAGIC)?;
    let count = r.u32_be()? as usize;
    Ok(r.take(count)?.to_vec())
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<LabeledImageSet> {
    let images = read_idx_images(&images_path)?;
    let labels = read_idx_labels(labels_path)?;
    let name = images_path
        .as_ref()
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    LabeledImageSet::new(name, images, labels)
}

pub fn write_idx(
    set: &LabeledImageSet,
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<()> {
    let (rows, cols) = set.dims();
    let mut img = Vec::with_capacity(16 + set.len() * rows * cols);
    for v in [IMAGES_MAGIC, set.len() as u32, rows as u32, cols as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    for i in &set.images {
        img.extend_from_slice(i.pixels());
    }
    let mut lab = Vec::with_capacity(8 + set.len());
    lab.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(set.len() as u32).to_be_bytes());
    lab.extend_from_slice(&set.labels);
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    std::fs::write(ip, img).map_err(|e| Error::io(ip, e))?;
    std::fs::write(lp, lab).map_err(|e| Error::io(lp, e))
}

/// Locates the four standard MNIST files in `dir` and loads train and test sets.
pub fn load_mnist_dir(dir: impl AsRef<Path>) -> Result<(LabeledImageSet, LabeledImageSet)> {
    let dir = dir.as_ref();
    let train = load_idx(
        dir.join("train-images-idx3-ubyte"),
        dir.join("train-labels-idx1-ubyte"),
    )?;
    let test = load_idx(
        dir.join("t10k-images-idx3-ubyte"),
        dir.join("t10k-labels-idx1-ubyte"),
    )?;
    Ok((train, test))
}
