//! Two-branch tensor types: every complex quantity is stored as separate
//! real and imaginary planes of `f64`.

use crate::error::{Error, Result};

/// A dense `rows x cols` matrix of real values, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RealPlane {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealPlane {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "plane dims must be >= 1");
        RealPlane {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims("RealPlane::from_vec", rows * cols, data.len()));
        }
        Ok(RealPlane { rows, cols, data })
    }

    /// Build from nested rows; handy in tests.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows[0].len();
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        RealPlane { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// A complex matrix held as two same-shaped real planes.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexPlane {
    pub re: RealPlane,
    pub im: RealPlane,
}

impl ComplexPlane {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexPlane {
            re: RealPlane::zeros(rows, cols),
            im: RealPlane::zeros(rows, cols),
        }
    }

    pub fn new(re: RealPlane, im: RealPlane) -> Result<Self> {
        if re.rows() != im.rows() || re.cols() != im.cols() {
            return Err(Error::dims(
                "ComplexPlane::new",
                format!("{}x{}", re.rows(), re.cols()),
                format!("{}x{}", im.rows(), im.cols()),
            ));
        }
        Ok(ComplexPlane { re, im })
    }

    /// A purely real plane (imaginary branch all zero).
    pub fn from_real(re: RealPlane) -> Self {
        let im = RealPlane::zeros(re.rows(), re.cols());
        ComplexPlane { re, im }
    }

    pub fn rows(&self) -> usize {
        self.re.rows()
    }

    pub fn cols(&self) -> usize {
        self.re.cols()
    }

    pub fn get(&self, r: usize, c: usize) -> (f64, f64) {
        (self.re.get(r, c), self.im.get(r, c))
    }

    pub fn is_finite(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }

    /// Largest absolute deviation from `other` over both branches.
    pub fn max_abs_diff(&self, other: &ComplexPlane) -> f64 {
        let re = max_abs_diff(self.re.as_slice(), other.re.as_slice());
        let im = max_abs_diff(self.im.as_slice(), other.im.as_slice());
        re.max(im)
    }
}

/// A batch of multi-channel complex feature maps. Planes are stored
/// contiguously per branch with sample-major, channel-minor layout:
/// plane `(s, c)` starts at `(s * channels + c) * rows * cols`.
#[derive(Debug, Clone)]
pub struct FeatureBlock {
    batch: usize,
    channels: usize,
    rows: usize,
    cols: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl FeatureBlock {
    pub fn zeros(batch: usize, channels: usize, rows: usize, cols: usize) -> Self {
        assert!(batch >= 1 && channels >= 1, "batch and channels must be >= 1");
        let n = batch * channels * rows * cols;
        FeatureBlock {
            batch,
            channels,
            rows,
            cols,
            re: vec![0.0; n],
            im: vec![0.0; n],
        }
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Elements per plane.
    pub fn plane_len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn plane_offset(&self, sample: usize, channel: usize) -> usize {
        debug_assert!(sample < self.batch && channel < self.channels);
        (sample * self.channels + channel) * self.plane_len()
    }

    pub fn plane_slices(&self, sample: usize, channel: usize) -> (&[f64], &[f64]) {
        let off = self.plane_offset(sample, channel);
        let len = self.plane_len();
        (&self.re[off..off + len], &self.im[off..off + len])
    }

    pub fn plane(&self, sample: usize, channel: usize) -> ComplexPlane {
        let (re, im) = self.plane_slices(sample, channel);
        ComplexPlane {
            re: RealPlane::from_vec(self.rows, self.cols, re.to_vec()).unwrap(),
            im: RealPlane::from_vec(self.rows, self.cols, im.to_vec()).unwrap(),
        }
    }

    pub fn set_plane(&mut self, sample: usize, channel: usize, plane: &ComplexPlane) {
        assert_eq!(plane.rows(), self.rows);
        assert_eq!(plane.cols(), self.cols);
        let off = self.plane_offset(sample, channel);
        let len = self.plane_len();
        self.re[off..off + len].copy_from_slice(plane.re.as_slice());
        self.im[off..off + len].copy_from_slice(plane.im.as_slice());
    }

    pub fn same_shape(&self, other: &FeatureBlock) -> bool {
        self.batch == other.batch
            && self.channels == other.channels
            && self.rows == other.rows
            && self.cols == other.cols
    }

    pub fn is_finite(&self) -> bool {
        self.re.iter().all(|v| v.is_finite()) && self.im.iter().all(|v| v.is_finite())
    }
}

/// Largest absolute element-wise deviation between two slices.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
