//! Integer execution: int8 x int8 products accumulated in i32, then
//! requantized to the output spec.

use crate::error::{Error, Result};
use crate::quant::{QuantSpec, QuantizedTensor, Scheme};
use crate::scalar::{round_half_even, Scalar};

/// Largest reduction length whose worst-case accumulator fits in i32 when
/// zero-point-centred activations span 255 codes and weights reach -128.
pub const MAX_REDUCTION: usize = (i32::MAX as usize) / (255 * 128);

#[inline]
pub fn int_dot(w: &[i8], x: &[i16]) -> i32 {
    debug_assert_eq!(w.len(), x.len());
    w.iter().zip(x).map(|(&a, &b)| i32::from(a) * i32::from(b)).sum()
}

/// Round `acc * multiplier`, add the output zero-point and clamp.
#[inline]
pub fn requantize(acc: i32, multiplier: f64, out: &QuantSpec) -> i8 {
    let q = round_half_even(f64::from(acc) * multiplier) + f64::from(out.zero_point);
    q.clamp(f64::from(out.qmin), f64::from(out.qmax)) as i8
}

/// Bias in accumulator units: `round(b / (S_x * S_w[c]))`.
pub fn quantize_bias(bias: &[f32], input_scale: f64, weight: &QuantSpec) -> Vec<i32> {
    bias.iter()
        .enumerate()
        .map(|(c, &b)| {
            let s = input_scale * weight.scales[if weight.scales.len() == 1 { 0 } else { c }];
            round_half_even(f64::from(b) / s).clamp(f64::from(i32::MIN), f64::from(i32::MAX)) as i32
        })
        .collect()
}

/// Activation codes with the zero-point removed.
pub fn centered(x: &QuantizedTensor) -> Vec<i16> {
    let zp = x.spec.zero_point as i16;
    x.data.iter().map(|&v| i16::from(v) - zp).collect()
}

fn check_operands(x: &QuantizedTensor, w: &QuantizedTensor, bias: &[i32], out_channels: usize) -> Result<()> {
    if x.spec.scheme != Scheme::PerTensorAffine {
        return Err(Error::config("integer kernels expect per-tensor activations"));
    }
    if w.spec.zero_point != 0 {
        return Err(Error::config("integer kernels expect symmetric weights"));
    }
    if w.spec.scales.len() != 1 && w.spec.scales.len() != out_channels {
        return Err(Error::shape(format!(
            "{} weight scales for {out_channels} output channels",
            w.spec.scales.len()
        )));
    }
    if bias.len() != out_channels {
        return Err(Error::shape(format!(
            "{} bias terms for {out_channels} output channels",
            bias.len()
        )));
    }
    Ok(())
}

fn multipliers(x: &QuantizedTensor, w: &QuantizedTensor, out: &QuantSpec, channels: usize) -> Vec<f64> {
    let sy = out.scales[0];
    (0..channels)
        .map(|c| x.spec.scales[0] * w.spec.scales[if w.spec.scales.len() == 1 { 0 } else { c }] / sy)
        .collect()
}

/// Integer dense layer on float activations: quantize `xs` at `input`,
/// accumulate against weights packed by [`pack_int8`] in i32, requantize
/// each row with its multiplier and dequantize into `ys`.
pub fn dense_int8<T: Scalar>(
    wt: &[i16],
    bias: &[i32],
    multipliers: &[f64],
    input: &QuantSpec,
    output: &QuantSpec,
    xs: &[T],
    ys: &mut [T],
) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the feature was detected at runtime.
            unsafe { dense_int8_avx2(wt, bias, multipliers, input, output, xs, ys) };
            return;
        }
    }
    dense_int8_generic::<T, false>(wt, bias, multipliers, input, output, xs, ys);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn dense_int8_avx2<T: Scalar>(
    wt: &[i16],
    bias: &[i32],
    multipliers: &[f64],
    input: &QuantSpec,
    output: &QuantSpec,
    xs: &[T],
    ys: &mut [T],
) {
    dense_int8_generic::<T, true>(wt, bias, multipliers, input, output, xs, ys);
}

const BLOCK: usize = 32;

/// `acc[j] += sum_p w[p][r0 + j] . x[p]` over a full block of rows, with
/// `xpairs[p]` holding two i16 codes in its low and high halves.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn block_madd(wt: &[i16], rows: usize, r0: usize, xpairs: &[i32], acc: &mut [i32; BLOCK]) {
    use std::arch::x86_64::*;
    assert!(xpairs.is_empty() || wt.len() >= 2 * ((xpairs.len() - 1) * rows + r0 + BLOCK));
    // SAFETY: the assert above keeps every 64-byte load in bounds.
    unsafe {
        let out = acc.as_mut_ptr() as *mut __m256i;
        let mut a = [
            _mm256_loadu_si256(out),
            _mm256_loadu_si256(out.add(1)),
            _mm256_loadu_si256(out.add(2)),
            _mm256_loadu_si256(out.add(3)),
        ];
        for (p, &xp) in xpairs.iter().enumerate() {
            let xv = _mm256_set1_epi32(xp);
            let base = wt.as_ptr().add(2 * (p * rows + r0)) as *const __m256i;
            for (i, ai) in a.iter_mut().enumerate() {
                *ai = _mm256_add_epi32(*ai, _mm256_madd_epi16(_mm256_loadu_si256(base.add(i)), xv));
            }
        }
        for (i, ai) in a.iter().enumerate() {
            _mm256_storeu_si256(out.add(i), *ai);
        }
    }
}

#[inline(always)]
fn block_scalar(wt: &[i16], rows: usize, r0: usize, width: usize, xpairs: &[i32], acc: &mut [i32; BLOCK]) {
    for (p, &xp) in xpairs.iter().enumerate() {
        let col = &wt[2 * (p * rows + r0)..2 * (p * rows + r0 + width)];
        let (x0, x1) = (i32::from(xp as i16), xp >> 16);
        for j in 0..width {
            // overflow is ruled out by MAX_REDUCTION
            let m = i32::from(col[2 * j])
                .wrapping_mul(x0)
                .wrapping_add(i32::from(col[2 * j + 1]).wrapping_mul(x1));
            acc[j] = acc[j].wrapping_add(m);
        }
    }
}

#[inline(always)]
fn dense_int8_generic<T: Scalar, const SIMD: bool>(
    wt: &[i16],
    bias: &[i32],
    multipliers: &[f64],
    input: &QuantSpec,
    output: &QuantSpec,
    xs: &[T],
    ys: &mut [T],
) {
    let rows = bias.len();
    let pairs = wt.len() / (2 * rows);
    let cols = xs.len() / (ys.len() / rows);
    let (sx, zx) = (input.scales[0], f64::from(input.zero_point));
    let (lo, hi) = (f64::from(input.qmin), f64::from(input.qmax));
    let (sy, zy) = (output.scales[0], f64::from(output.zero_point));
    let (ylo, yhi) = (f64::from(output.qmin), f64::from(output.qmax));
    let mut xq = vec![0i16; 2 * pairs];
    let mut xpairs = vec![0i32; pairs];
    let mut acc = [0i32; BLOCK];
    for (x, y) in xs.chunks_exact(cols).zip(ys.chunks_exact_mut(rows)) {
        for (d, v) in xq.iter_mut().zip(x) {
            *d = (((v.as_f64() / sx).round_ties_even() + zx).clamp(lo, hi) - zx) as i16;
        }
        for (d, p) in xpairs.iter_mut().zip(xq.chunks_exact(2)) {
            *d = i32::from(p[0] as u16) | (i32::from(p[1]) << 16);
        }
        let mut r0 = 0;
        while r0 < rows {
            let width = BLOCK.min(rows - r0);
            acc[..width].copy_from_slice(&bias[r0..r0 + width]);
            #[cfg(target_arch = "x86_64")]
            if SIMD && width == BLOCK {
                // SAFETY: SIMD is only set on the avx2 path.
                unsafe { block_madd(wt, rows, r0, &xpairs, &mut acc) };
            } else {
                block_scalar(wt, rows, r0, width, &xpairs, &mut acc);
            }
            #[cfg(not(target_arch = "x86_64"))]
            block_scalar(wt, rows, r0, width, &xpairs, &mut acc);
            for ((yr, &a), m) in y[r0..r0 + width].iter_mut().zip(&acc[..width]).zip(&multipliers[r0..]) {
                let q = ((f64::from(a) * m).round_ties_even() + zy).clamp(ylo, yhi);
                *yr = T::lit(sy * (q - zy));
            }
            r0 += width;
        }
    }
}

/// Pack a row-major `rows x cols` int8 matrix for [`dense_int8`]: input
/// columns are taken in pairs (the last one zero-padded) and each pair is
/// stored row by row, `[pair][row][2]`.
pub fn pack_int8(w: &[i8], rows: usize, cols: usize) -> Vec<i16> {
    let pairs = cols.div_ceil(2);
    let mut out = vec![0i16; 2 * pairs * rows];
    for r in 0..rows {
        for k in 0..cols {
            out[2 * ((k / 2) * rows + r) + k % 2] = i16::from(w[r * cols + k]);
        }
    }
    out
}

/// `y[n, m] = x[n, :] . w[m, :] + bias[m]` with `x: [N, K]`, `w: [M, K]`.
pub fn q_matmul(x: &QuantizedTensor, w: &QuantizedTensor, bias: &[i32], out_spec: &QuantSpec) -> Result<QuantizedTensor> {
    let (&[n, k], &[m, k2]) = (x.shape.as_slice(), w.shape.as_slice()) else {
        return Err(Error::shape("q_matmul expects 2-D operands"));
    };
    if k != k2 {
        return Err(Error::shape(format!("inner dimensions {k} and {k2} differ")));
    }
    assert!(k < MAX_REDUCTION, "reduction length {k} could overflow the i32 accumulator");
    check_operands(x, w, bias, m)?;
    let xc = centered(x);
    let mult = multipliers(x, w, out_spec, m);
    let mut data = Vec::with_capacity(n * m);
    for row in xc.chunks_exact(k.max(1)).take(n) {
        for c in 0..m {
            let acc = int_dot(&w.data[c * k..(c + 1) * k], row) + bias[c];
            data.push(requantize(acc, mult[c], out_spec));
        }
    }
    Ok(QuantizedTensor {
        data,
        shape: vec![n, m],
        spec: out_spec.clone(),
    })
}

/// 1-D convolution, `x: [C_in, L]`, `w: [C_out, C_in, K]`, zero padding of
/// `padding` on both ends.
pub fn q_conv1d(
    x: &QuantizedTensor,
    w: &QuantizedTensor,
    bias: &[i32],
    stride: usize,
    padding: usize,
    out_spec: &QuantSpec,
) -> Result<QuantizedTensor> {
    let (&[cin, len], &[cout, cin2, kw]) = (x.shape.as_slice(), w.shape.as_slice()) else {
        return Err(Error::shape("q_conv1d expects x: [C_in, L] and w: [C_out, C_in, K]"));
    };
    if cin != cin2 || stride == 0 || len + 2 * padding < kw {
        return Err(Error::shape("q_conv1d operand shapes are inconsistent"));
    }
    assert!(cin * kw < MAX_REDUCTION, "reduction could overflow the i32 accumulator");
    check_operands(x, w, bias, cout)?;
    let xc = centered(x);
    let mult = multipliers(x, w, out_spec, cout);
    let lout = (len + 2 * padding - kw) / stride + 1;
    let mut patch = vec![0i16; cin * kw];
    let mut data = vec![0i8; cout * lout];
    for o in 0..lout {
        for c in 0..cin {
            for j in 0..kw {
                let pos = (o * stride + j) as isize - padding as isize;
                patch[c * kw + j] = if pos >= 0 && (pos as usize) < len {
                    xc[c * len + pos as usize]
                } else {
                    0
                };
            }
        }
        for co in 0..cout {
            let acc = int_dot(&w.data[co * cin * kw..(co + 1) * cin * kw], &patch) + bias[co];
            data[co * lout + o] = requantize(acc, mult[co], out_spec);
        }
    }
    Ok(QuantizedTensor {
        data,
        shape: vec![cout, lout],
        spec: out_spec.clone(),
    })
}

/// Transposed 1-D convolution, `x: [C_in, L]`, `w: [C_out, C_in, K]`,
/// output length `(L - 1) * stride + K`.
pub fn q_deconv1d(
    x: &QuantizedTensor,
    w: &QuantizedTensor,
    bias: &[i32],
    stride: usize,
    out_spec: &QuantSpec,
) -> Result<QuantizedTensor> {
    let (&[cin, len], &[cout, cin2, kw]) = (x.shape.as_slice(), w.shape.as_slice()) else {
        return Err(Error::shape("q_deconv1d expects x: [C_in, L] and w: [C_out, C_in, K]"));
    };
    if cin != cin2 || stride == 0 || len == 0 {
        return Err(Error::shape("q_deconv1d operand shapes are inconsistent"));
    }
    assert!(cin * kw < MAX_REDUCTION, "reduction could overflow the i32 accumulator");
    check_operands(x, w, bias, cout)?;
    let xc = centered(x);
    let mult = multipliers(x, w, out_spec, cout);
    let lout = (len - 1) * stride + kw;
    let mut acc = vec![0i32; cout * lout];
    for co in 0..cout {
        for c in 0..cin {
            for i in 0..len {
                let xv = i32::from(xc[c * len + i]);
                for j in 0..kw {
                    acc[co * lout + i * stride + j] += i32::from(w.data[(co * cin + c) * kw + j]) * xv;
                }
            }
        }
    }
    let data = acc
        .iter()
        .enumerate()
        .map(|(idx, &a)| {
            let co = idx / lout;
            requantize(a + bias[co], mult[co], out_spec)
        })
        .collect();
    Ok(QuantizedTensor {
        data,
        shape: vec![cout, lout],
        spec: out_spec.clone(),
    })
}
