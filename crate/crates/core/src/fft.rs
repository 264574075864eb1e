//! Forward and inverse 2D discrete Fourier transforms plus the element-wise
//! complex primitives the spectral layers are built from.
//!
//! Convention: the forward transform is unnormalized with the imaginary part
//! carrying the negative sine; the inverse carries the 1/(M*N) factor. The
//! fast path runs mixed-radix/Bluestein 1D transforms along rows then
//! columns, so arbitrary sizes (28, 32, 7, ...) are supported.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Error, Result};
use crate::plane::{ComplexPlane, RealPlane};

type Plan = Arc<dyn Fft<f64>>;

fn plan(len: usize, direction: FftDirection) -> Plan {
    static CACHE: OnceLock<Mutex<HashMap<(usize, bool), Plan>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (len, matches!(direction, FftDirection::Forward));
    let mut guard = cache.lock().unwrap();
    guard
        .entry(key)
        .or_insert_with(|| FftPlanner::new().plan_fft(len, direction))
        .clone()
}

/// In-place 2D transform over interleaved complex data, row-major.
/// `inverse` applies the positive-exponent transform WITHOUT normalization;
/// callers that want the true inverse scale by 1/(rows*cols) afterwards.
fn fft2_buffer(buf: &mut [Complex<f64>], rows: usize, cols: usize, inverse: bool) {
    debug_assert_eq!(buf.len(), rows * cols);
    let dir = if inverse {
        FftDirection::Inverse
    } else {
        FftDirection::Forward
    };

    let row_plan = plan(cols, dir);
    let mut scratch = vec![Complex::default(); row_plan.get_inplace_scratch_len()];
    for r in 0..rows {
        row_plan.process_with_scratch(&mut buf[r * cols..(r + 1) * cols], &mut scratch);
    }

    let col_plan = plan(rows, dir);
    let mut col = vec![Complex::default(); rows];
    let mut scratch = vec![Complex::default(); col_plan.get_inplace_scratch_len()];
    for c in 0..cols {
        for r in 0..rows {
            col[r] = buf[r * cols + c];
        }
        col_plan.process_with_scratch(&mut col, &mut scratch);
        for r in 0..rows {
            buf[r * cols + c] = col[r];
        }
    }
}

/// 2D transform over split re/im slices; the workhorse behind the plane API
/// and the layer hot paths.
pub(crate) fn fft2_slices(
    re: &[f64],
    im: &[f64],
    rows: usize,
    cols: usize,
    inverse: bool,
    out_re: &mut [f64],
    out_im: &mut [f64],
) {
    let n = rows * cols;
    debug_assert!(re.len() == n && im.len() == n && out_re.len() == n && out_im.len() == n);
    let mut buf: Vec<Complex<f64>> = re
        .iter()
        .zip(im)
        .map(|(&r, &i)| Complex::new(r, i))
        .collect();
    fft2_buffer(&mut buf, rows, cols, inverse);
    let scale = if inverse { 1.0 / n as f64 } else { 1.0 };
    for (k, z) in buf.iter().enumerate() {
        out_re[k] = z.re * scale;
        out_im[k] = z.im * scale;
    }
}

/// Forward 2D DFT of a complex plane (unnormalized, negative exponent).
pub fn dft2(plane: &ComplexPlane) -> ComplexPlane {
    let (rows, cols) = (plane.rows(), plane.cols());
    let mut out = ComplexPlane::zeros(rows, cols);
    fft2_slices(
        plane.re.as_slice(),
        plane.im.as_slice(),
        rows,
        cols,
        false,
        out.re.as_mut_slice(),
        out.im.as_mut_slice(),
    );
    out
}

/// Forward 2D DFT of a real plane.
pub fn dft2_real(plane: &RealPlane) -> ComplexPlane {
    let zeros = vec![0.0; plane.rows() * plane.cols()];
    let mut out = ComplexPlane::zeros(plane.rows(), plane.cols());
    fft2_slices(
        plane.as_slice(),
        &zeros,
        plane.rows(),
        plane.cols(),
        false,
        out.re.as_mut_slice(),
        out.im.as_mut_slice(),
    );
    out
}

/// Inverse 2D DFT, normalized by 1/(M*N), so `idft2(dft2(x)) == x`.
pub fn idft2(plane: &ComplexPlane) -> ComplexPlane {
    let (rows, cols) = (plane.rows(), plane.cols());
    let mut out = ComplexPlane::zeros(rows, cols);
    fft2_slices(
        plane.re.as_slice(),
        plane.im.as_slice(),
        rows,
        cols,
        true,
        out.re.as_mut_slice(),
        out.im.as_mut_slice(),
    );
    out
}

/// Complex conjugate: real branch unchanged, imaginary branch negated.
pub fn conjugate(plane: &ComplexPlane) -> ComplexPlane {
    let mut out = plane.clone();
    for v in out.im.as_mut_slice() {
        *v = -*v;
    }
    out
}

/// Place a KxK kernel at the upper-left corner of a rows x cols plane,
/// zero elsewhere.
pub fn zero_pad_kernel(kernel: &RealPlane, rows: usize, cols: usize) -> Result<RealPlane> {
    let k_rows = kernel.rows();
    let k_cols = kernel.cols();
    if k_rows > rows || k_cols > cols {
        return Err(Error::KernelTooLarge {
            k: k_rows.max(k_cols),
            rows,
            cols,
        });
    }
    let mut out = RealPlane::zeros(rows, cols);
    for r in 0..k_rows {
        for c in 0..k_cols {
            out.set(r, c, kernel.get(r, c));
        }
    }
    Ok(out)
}

/// Pad a flat KxK kernel slice into a flat rows x cols plane (hot path form).
pub(crate) fn zero_pad_slice(kernel: &[f64], k: usize, rows: usize, cols: usize) -> Vec<f64> {
    debug_assert_eq!(kernel.len(), k * k);
    let mut out = vec![0.0; rows * cols];
    for r in 0..k {
        out[r * cols..r * cols + k].copy_from_slice(&kernel[r * k..(r + 1) * k]);
    }
    out
}

/// Element-wise complex product: (ar*br - ai*bi, ar*bi + ai*br).
/// Exactly four real multiplications per element.
pub fn complex_hadamard(a: &ComplexPlane, b: &ComplexPlane) -> Result<ComplexPlane> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::dims(
            "complex_hadamard",
            format!("{}x{}", a.rows(), a.cols()),
            format!("{}x{}", b.rows(), b.cols()),
        ));
    }
    let mut out = ComplexPlane::zeros(a.rows(), a.cols());
    hadamard_acc(
        a.re.as_slice(),
        a.im.as_slice(),
        b.re.as_slice(),
        b.im.as_slice(),
        out.re.as_mut_slice(),
        out.im.as_mut_slice(),
    );
    Ok(out)
}

/// out += a (*) b, element-wise complex product over flat branch slices.
#[inline]
pub(crate) fn hadamard_acc(
    a_re: &[f64],
    a_im: &[f64],
    b_re: &[f64],
    b_im: &[f64],
    out_re: &mut [f64],
    out_im: &mut [f64],
) {
    // Re-slice to one length so the element loop vectorizes.
    let n = a_re.len();
    let (a_re, a_im) = (&a_re[..n], &a_im[..n]);
    let (b_re, b_im) = (&b_re[..n], &b_im[..n]);
    let (out_re, out_im) = (&mut out_re[..n], &mut out_im[..n]);
    for k in 0..n {
        out_re[k] += a_re[k] * b_re[k] - a_im[k] * b_im[k];
        out_im[k] += a_re[k] * b_im[k] + a_im[k] * b_re[k];
    }
}

/// out[c] += a (*) b[c] for every plane c of a contiguous block of `cout`
/// planes. One plane `a` against many `b` planes; the hot path of the
/// multiplication layer.
#[inline]
pub(crate) fn hadamard_acc_block(
    a_re: &[f64],
    a_im: &[f64],
    b_re: &[f64],
    b_im: &[f64],
    out_re: &mut [f64],
    out_im: &mut [f64],
    plen: usize,
) {
    let (a_re, a_im) = (&a_re[..plen], &a_im[..plen]);
    for (((b_re, b_im), o_re), o_im) in b_re
        .chunks_exact(plen)
        .zip(b_im.chunks_exact(plen))
        .zip(out_re.chunks_exact_mut(plen))
        .zip(out_im.chunks_exact_mut(plen))
    {
        for k in 0..plen {
            o_re[k] += a_re[k] * b_re[k] - a_im[k] * b_im[k];
            o_im[k] += a_re[k] * b_im[k] + a_im[k] * b_re[k];
        }
    }
}

/// out[c] += a[c] (*) conj(b) over a contiguous block of planes
/// (weight-gradient shape: many upstream planes against one input plane).
/// a (*) conj(b) is the product form both gradient paths of the
/// multiplication layer reduce to under the real-parameter convention.
#[inline]
pub(crate) fn hadamard_conj_acc_block_many_a(
    a_re: &[f64],
    a_im: &[f64],
    b_re: &[f64],
    b_im: &[f64],
    out_re: &mut [f64],
    out_im: &mut [f64],
    plen: usize,
) {
    let (b_re, b_im) = (&b_re[..plen], &b_im[..plen]);
    for (((a_re, a_im), o_re), o_im) in a_re
        .chunks_exact(plen)
        .zip(a_im.chunks_exact(plen))
        .zip(out_re.chunks_exact_mut(plen))
        .zip(out_im.chunks_exact_mut(plen))
    {
        for k in 0..plen {
            o_re[k] += a_re[k] * b_re[k] + a_im[k] * b_im[k];
            o_im[k] += a_im[k] * b_re[k] - a_re[k] * b_im[k];
        }
    }
}

/// out += sum_c a[c] (*) conj(b[c]) over a contiguous block of planes
/// (input-gradient shape: many upstream planes against many weight planes,
/// reducing into one plane).
#[inline]
pub(crate) fn hadamard_conj_acc_block_reduce(
    a_re: &[f64],
    a_im: &[f64],
    b_re: &[f64],
    b_im: &[f64],
    out_re: &mut [f64],
    out_im: &mut [f64],
    plen: usize,
) {
    let (out_re, out_im) = (&mut out_re[..plen], &mut out_im[..plen]);
    for (((a_re, a_im), b_re), b_im) in a_re
        .chunks_exact(plen)
        .zip(a_im.chunks_exact(plen))
        .zip(b_re.chunks_exact(plen))
        .zip(b_im.chunks_exact(plen))
    {
        for k in 0..plen {
            out_re[k] += a_re[k] * b_re[k] + a_im[k] * b_im[k];
            out_im[k] += a_im[k] * b_re[k] - a_re[k] * b_im[k];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dft2_of_zeros_is_zeros() {
        let x = ComplexPlane::zeros(5, 7);
        let y = dft2(&x);
        assert_eq!(y, ComplexPlane::zeros(5, 7));
    }

    #[test]
    fn dft2_of_unit_impulse_is_all_ones() {
        let mut x = RealPlane::zeros(4, 4);
        x.set(0, 0, 1.0);
        let y = dft2_real(&x);
        for r in 0..4 {
            for c in 0..4 {
                let (re, im) = y.get(r, c);
                assert!((re - 1.0).abs() < 1e-12);
                assert!(im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn idft2_of_all_ones_is_impulse() {
        let x = ComplexPlane::from_real(RealPlane::from_vec(4, 4, vec![1.0; 16]).unwrap());
        let y = idft2(&x);
        for r in 0..4 {
            for c in 0..4 {
                let (re, im) = y.get(r, c);
                let want = if r == 0 && c == 0 { 1.0 } else { 0.0 };
                assert!((re - want).abs() < 1e-12);
                assert!(im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dft2_2x2_known_values() {
        let x = RealPlane::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let y = dft2_real(&x);
        let expect = [[10.0, -2.0], [-4.0, 0.0]];
        for r in 0..2 {
            for c in 0..2 {
                let (re, im) = y.get(r, c);
                assert!((re - expect[r][c]).abs() < 1e-12);
                assert!(im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conjugate_is_involution() {
        let mut x = ComplexPlane::zeros(3, 3);
        for (k, v) in x.re.as_mut_slice().iter_mut().enumerate() {
            *v = k as f64;
        }
        for (k, v) in x.im.as_mut_slice().iter_mut().enumerate() {
            *v = -(k as f64) * 0.5;
        }
        let y = conjugate(&x);
        assert_eq!(y.re, x.re);
        assert!(y.im.as_slice().iter().zip(x.im.as_slice()).all(|(a, b)| *a == -*b));
        assert_eq!(conjugate(&y), x);
    }

    #[test]
    fn zero_pad_kernel_examples() {
        let k = RealPlane::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let p = zero_pad_kernel(&k, 4, 4).unwrap();
        let expect = [
            [1.0, 2.0, 0.0, 0.0],
            [3.0, 4.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0],
        ];
        for r in 0..4 {
            for c in 0..4 {
                assert_eq!(p.get(r, c), expect[r][c]);
            }
        }
        // K == target is the identity.
        let same = zero_pad_kernel(&k, 2, 2).unwrap();
        assert_eq!(same, k);
        // Oversized kernels are rejected.
        assert!(zero_pad_kernel(&k, 1, 4).is_err());
        assert!(zero_pad_kernel(&k, 4, 1).is_err());
    }

    #[test]
    fn hadamard_identity_and_i_squared() {
        let mut a = ComplexPlane::zeros(2, 2);
        for (k, v) in a.re.as_mut_slice().iter_mut().enumerate() {
            *v = k as f64 + 1.0;
        }
        a.im.set(0, 1, 3.0);
        let ones = ComplexPlane::from_real(RealPlane::from_vec(2, 2, vec![1.0; 4]).unwrap());
        assert_eq!(complex_hadamard(&a, &ones).unwrap(), a);

        let mut i_plane = ComplexPlane::zeros(2, 2);
        for v in i_plane.im.as_mut_slice() {
            *v = 1.0;
        }
        let sq = complex_hadamard(&i_plane, &i_plane).unwrap();
        assert!(sq.re.as_slice().iter().all(|&v| (v + 1.0).abs() < 1e-15));
        assert!(sq.im.as_slice().iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn hadamard_rejects_mismatched_dims() {
        let a = ComplexPlane::zeros(2, 2);
        let b = ComplexPlane::zeros(2, 3);
        assert!(complex_hadamard(&a, &b).is_err());
    }
}
