//! Dataset ingestion: IDX-format digit images, the 3073-byte-record binary
//! image batches, normalization to [0,1], deterministic batching, and the
//! conjugated frequency-domain entry transform.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fft::fft2_slices;
use crate::plane::FeatureBlock;
use crate::rng::{rng_for, TAG_SHUFFLE};

/// Normalized images with labels. Pixel layout is sample-major then
/// channel-plane-major: images[((s*C + c)*rows + r)*cols + col].
#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: Vec<f64>,
    pub labels: Vec<u8>,
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
    pub classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn sample_len(&self) -> usize {
        self.channels * self.rows * self.cols
    }

    pub fn images_slice(&self, from: usize, to: usize) -> &[f64] {
        &self.images[from * self.sample_len()..to * self.sample_len()]
    }

    /// First `n` samples.
    pub fn subset(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            images: self.images[..n * self.sample_len()].to_vec(),
            labels: self.labels[..n].to_vec(),
            rows: self.rows,
            cols: self.cols,
            channels: self.channels,
            classes: self.classes,
        }
    }

    /// Copy the given samples into contiguous batch buffers.
    pub fn gather(&self, indices: &[usize]) -> (Vec<f64>, Vec<u8>) {
        let sl = self.sample_len();
        let mut images = Vec::with_capacity(indices.len() * sl);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            images.extend_from_slice(&self.images[i * sl..(i + 1) * sl]);
            labels.push(self.labels[i]);
        }
        (images, labels)
    }
}

fn read_be_u32(data: &[u8], offset: usize) -> Result<u32> {
    if data.len() < offset + 4 {
        return Err(Error::Format("file truncated in header".into()));
    }
    Ok(u32::from_be_bytes([
        data[offset],
        data[offset + 1],
        data[offset + 2],
        data[offset + 3],
    ]))
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Load an IDX image/label file pair. Headers are big-endian; pixels are
/// scaled by 1/255.
pub fn load_mnist(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let img_data = fs::read(images_path)?;
    let magic = read_be_u32(&img_data, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!(
            "bad image magic {magic:#010x} in {}",
            images_path.display()
        )));
    }
    let count = read_be_u32(&img_data, 4)? as usize;
    let rows = read_be_u32(&img_data, 8)? as usize;
    let cols = read_be_u32(&img_data, 12)? as usize;
    let expected = 16 + count * rows * cols;
    if img_data.len() < expected {
        return Err(Error::Format(format!(
            "image file truncated: {} bytes, need {expected}",
            img_data.len()
        )));
    }

    let lbl_data = fs::read(labels_path)?;
    let magic = read_be_u32(&lbl_data, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!(
            "bad label magic {magic:#010x} in {}",
            labels_path.display()
        )));
    }
    let lbl_count = read_be_u32(&lbl_data, 4)? as usize;
    if lbl_count != count {
        return Err(Error::Format(format!(
            "image/label count mismatch: {count} images vs {lbl_count} labels"
        )));
    }
    if lbl_data.len() < 8 + count {
        return Err(Error::Format("label file truncated".into()));
    }

    let images: Vec<f64> = img_data[16..16 + count * rows * cols]
        .iter()
        .map(|&b| b as f64 / 255.0)
        .collect();
    let labels = lbl_data[8..8 + count].to_vec();
    Ok(Dataset {
        images,
        labels,
        rows,
        cols,
        channels: 1,
        classes: 10,
    })
}

const CIFAR_RECORD: usize = 3073; // 1 label byte + 3 * 1024 channel-major pixels
const CIFAR_DIM: usize = 32;

/// Load one or more binary batches of 3073-byte records (1 label byte, then
/// 3072 channel-major RGB pixels), scaled by 1/255.
pub fn load_cifar10<P: AsRef<Path>>(batch_paths: &[P]) -> Result<Dataset> {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for path in batch_paths {
        let data = fs::read(path.as_ref())?;
        if data.is_empty() || data.len() % CIFAR_RECORD != 0 {
            return Err(Error::Format(format!(
                "{}: length {} is not a multiple of {CIFAR_RECORD}",
                path.as_ref().display(),
                data.len()
            )));
        }
        for record in data.chunks_exact(CIFAR_RECORD) {
            let label = record[0];
            if label >= 10 {
                return Err(Error::Format(format!("label {label} out of range")));
            }
            labels.push(label);
            images.extend(record[1..].iter().map(|&b| b as f64 / 255.0));
        }
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(Dataset {
        images,
        labels,
        rows: CIFAR_DIM,
        cols: CIFAR_DIM,
        channels: 3,
        classes: 10,
    })
}

/// Entry transform: per sample and channel, the conjugated forward DFT of
/// the image plane. This is the single conjugation point of the whole
/// network; downstream layers consume the conjugated spectra as-is.
pub fn to_frequency_input(
    images: &[f64],
    batch: usize,
    channels: usize,
    rows: usize,
    cols: usize,
) -> FeatureBlock {
    let plen = rows * cols;
    debug_assert_eq!(images.len(), batch * channels * plen);
    let mut out = FeatureBlock::zeros(batch, channels, rows, cols);
    let zeros = vec![0.0; plen];
    for s in 0..batch {
        for c in 0..channels {
            let off = (s * channels + c) * plen;
            fft2_slices(
                &images[off..off + plen],
                &zeros,
                rows,
                cols,
                false,
                &mut out.re[off..off + plen],
                &mut out.im[off..off + plen],
            );
        }
    }
    for v in out.im.iter_mut() {
        *v = -*v;
    }
    out
}

/// Deterministic per-epoch shuffling; batches of exactly `batch_size`
/// (partial tails are dropped).
pub struct BatchIterator {
    indices: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

impl BatchIterator {
    pub fn new(n: usize, batch_size: usize, seed: u64, epoch: u64) -> Self {
        let mut indices: Vec<usize> = (0..n).collect();
        let mut rng = rng_for(&[seed, TAG_SHUFFLE, epoch]);
        // Fisher-Yates
        for i in (1..n).rev() {
            let j = rand::Rng::random_range(&mut rng, 0..=i);
            indices.swap(i, j);
        }
        BatchIterator {
            indices,
            batch_size,
            pos: 0,
        }
    }

    pub fn next_batch(&mut self) -> Option<&[usize]> {
        if self.pos + self.batch_size > self.indices.len() {
            return None;
        }
        let batch = &self.indices[self.pos..self.pos + self.batch_size];
        self.pos += self.batch_size;
        Some(batch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fft::{conjugate, idft2};
    use crate::oracle::naive_dft2;
    use crate::plane::RealPlane;
    use std::io::Write;

    fn write_idx_images(path: &Path, images: &[Vec<u8>], rows: usize, cols: usize) {
        let mut f = fs::File::create(path).unwrap();
        f.write_all(&IDX_IMAGES_MAGIC.to_be_bytes()).unwrap();
        f.write_all(&(images.len() as u32).to_be_bytes()).unwrap();
        f.write_all(&(rows as u32).to_be_bytes()).unwrap();
        f.write_all(&(cols as u32).to_be_bytes()).unwrap();
        for img in images {
            f.write_all(img).unwrap();
        }
    }

    fn write_idx_labels(path: &Path, labels: &[u8]) {
        let mut f = fs::File::create(path).unwrap();
        f.write_all(&IDX_LABELS_MAGIC.to_be_bytes()).unwrap();
        f.write_all(&(labels.len() as u32).to_be_bytes()).unwrap();
        f.write_all(labels).unwrap();
    }

    #[test]
    fn idx_roundtrip_with_fabricated_file() {
        let dir = std::env::temp_dir().join("freqnet-idx-test");
        fs::create_dir_all(&dir).unwrap();
        let img_path = dir.join("images");
        let lbl_path = dir.join("labels");
        write_idx_images(&img_path, &[vec![0u8; 28 * 28]], 28, 28);
        write_idx_labels(&lbl_path, &[7]);
        let ds = load_mnist(&img_path, &lbl_path).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.rows, 28);
        assert!(ds.images.iter().all(|&v| v == 0.0));
        assert_eq!(ds.labels, vec![7]);
    }

    #[test]
    fn idx_rejects_wrong_magic_and_truncation() {
        let dir = std::env::temp_dir().join("freqnet-idx-test2");
        fs::create_dir_all(&dir).unwrap();
        let img_path = dir.join("images");
        let lbl_path = dir.join("labels");
        write_idx_images(&img_path, &[vec![1u8; 4]], 2, 2);
        write_idx_labels(&lbl_path, &[1]);
        // A label file offered as an image file has the wrong magic.
        assert!(load_mnist(&lbl_path, &lbl_path).is_err());
        // Truncated image payload.
        let data = fs::read(&img_path).unwrap();
        fs::write(&img_path, &data[..data.len() - 2]).unwrap();
        assert!(load_mnist(&img_path, &lbl_path).is_err());
    }

    #[test]
    fn loaders_are_bit_deterministic() {
        let dir = std::env::temp_dir().join("freqnet-idx-det");
        fs::create_dir_all(&dir).unwrap();
        let img_path = dir.join("images");
        let lbl_path = dir.join("labels");
        write_idx_images(&img_path, &[vec![7u8; 9], vec![200u8; 9]], 3, 3);
        write_idx_labels(&lbl_path, &[1, 2]);
        let a = load_mnist(&img_path, &lbl_path).unwrap();
        let b = load_mnist(&img_path, &lbl_path).unwrap();
        assert_eq!(a.images, b.images);
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn cifar_single_record_and_guards() {
        let dir = std::env::temp_dir().join("freqnet-cifar-test");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("batch.bin");
        let mut record = vec![255u8; CIFAR_RECORD];
        record[0] = 3;
        fs::write(&path, &record).unwrap();
        let ds = load_cifar10(&[&path]).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.labels, vec![3]);
        assert!(ds.images.iter().all(|&v| v == 1.0));

        // Truncated record.
        fs::write(&path, &record[..CIFAR_RECORD - 1]).unwrap();
        assert!(load_cifar10(&[&path]).is_err());
        // Out-of-range label.
        record[0] = 11;
        fs::write(&path, &record).unwrap();
        assert!(load_cifar10(&[&path]).is_err());
    }

    #[test]
    fn frequency_input_is_conjugated_spectrum() {
        let mut rng = crate::rng::rng_for(&[81]);
        let mut image = vec![0.0; 36];
        for v in image.iter_mut() {
            *v = rand::Rng::random::<f64>(&mut rng);
        }
        let fb = to_frequency_input(&image, 1, 1, 6, 6);
        let plane = RealPlane::from_vec(6, 6, image.clone()).unwrap();
        let oracle = naive_dft2(&plane);
        let got = fb.plane(0, 0);
        assert!(crate::plane::max_abs_diff(got.re.as_slice(), oracle.re.as_slice()) < 1e-8);
        let neg: Vec<f64> = oracle.im.as_slice().iter().map(|v| -v).collect();
        assert!(crate::plane::max_abs_diff(got.im.as_slice(), &neg) < 1e-8);

        // DC bin of a real signal is real.
        assert_eq!(got.im.get(0, 0), 0.0);

        // Round trip back to pixels.
        let recovered = idft2(&conjugate(&got));
        assert!(crate::plane::max_abs_diff(recovered.re.as_slice(), &image) < 1e-9);
    }

    #[test]
    fn zero_image_gives_zero_feature() {
        let fb = to_frequency_input(&vec![0.0; 16], 1, 1, 4, 4);
        assert!(fb.re.iter().chain(fb.im.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn batch_iterator_partitions_each_epoch() {
        let mut seen = vec![0usize; 30];
        let mut iter = BatchIterator::new(30, 5, 9, 0);
        while let Some(batch) = iter.next_batch() {
            for &i in batch {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));

        // Same (seed, epoch) reproduces the order; new epoch reshuffles.
        let mut a = BatchIterator::new(30, 5, 9, 1);
        let mut b = BatchIterator::new(30, 5, 9, 1);
        assert_eq!(a.next_batch(), b.next_batch());
        let mut c = BatchIterator::new(30, 5, 9, 2);
        let first_c: Vec<usize> = c.next_batch().unwrap().to_vec();
        let mut a1 = BatchIterator::new(30, 5, 9, 1);
        assert_ne!(a1.next_batch().unwrap(), first_c.as_slice());
    }

    #[test]
    fn partial_tail_batches_are_dropped() {
        let mut iter = BatchIterator::new(13, 5, 0, 0);
        let mut count = 0;
        while iter.next_batch().is_some() {
            count += 1;
        }
        assert_eq!(count, 2);
    }
}
