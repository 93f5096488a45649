//! Scalar abstraction shared by every numeric kernel in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rustfft::FftNum;

/// Floating point sample type: `f32` for deployment, `f64` for oracles.
pub trait Scalar:
    Float + FloatConst + FftNum + FromPrimitive + ToPrimitive + Default + Debug + Display + Sum + 'static
{
    /// Lossy conversion from `f64`; never fails for finite inputs.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).unwrap_or_else(Self::nan)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    #[inline]
    fn as_f32(self) -> f32 {
        ToPrimitive::to_f32(&self).unwrap_or(f32::NAN)
    }

    /// `exp` used by the gate nonlinearities.
    #[inline(always)]
    fn gate_exp(self) -> Self {
        self.exp()
    }

    /// `tanh` used by the gate nonlinearities.
    #[inline(always)]
    fn gate_tanh(self) -> Self {
        self.tanh()
    }
}

impl Scalar for f32 {
    #[inline(always)]
    fn lit(x: f64) -> f32 {
        x as f32
    }

    #[inline(always)]
    fn as_f64(self) -> f64 {
        f64::from(self)
    }

    #[inline(always)]
    fn as_f32(self) -> f32 {
        self
    }

    /// Branch-free polynomial `exp`, within 2 ulp over the clamped range.
    #[inline(always)]
    fn gate_exp(self) -> f32 {
        const ROUND: f32 = 12_582_912.0; // 1.5 * 2^23
        let x = self.clamp(-87.0, 88.0);
        let t = x * std::f32::consts::LOG2_E + ROUND;
        let n = t - ROUND;
        let r = x - n * 0.693_359_4 + n * 2.121_944_4e-4;
        let p = ((((1.987_569_1e-4 * r + 1.398_199_9e-3) * r + 8.333_452e-3) * r + 4.166_579_6e-2) * r
            + 0.166_666_65)
            * r
            + 0.5;
        let e = p * r * r + r + 1.0;
        let pow2 = f32::from_bits((t.to_bits().wrapping_sub(0x4B40_0000).wrapping_add(127)) << 23);
        e * pow2
    }

    #[inline(always)]
    fn gate_tanh(self) -> f32 {
        1.0 - 2.0 / ((2.0 * self).gate_exp() + 1.0)
    }
}

impl Scalar for f64 {
    #[inline(always)]
    fn lit(x: f64) -> f64 {
        x
    }

    #[inline(always)]
    fn as_f64(self) -> f64 {
        self
    }

    #[inline(always)]
    fn as_f32(self) -> f32 {
        self as f32
    }
}

/// Dot product with eight independent accumulators so the reduction vectorizes.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] = acc[i] + x[i] * y[i];
        }
    }
    let mut s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        s = s + *x * *y;
    }
    s
}

#[inline(always)]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).gate_exp())
}

/// `y = bias + W x` for a batch of inputs, with `W` stored column-major
/// (`wt[k * rows + r]`). Each output is summed in the same order whatever
/// the batch size, so on a given machine results are bit-identical between
/// batched and single-input calls. Fused multiply-add is used when the CPU
/// has it.
pub fn gemv_t<T: Scalar>(wt: &[T], bias: &[T], xs: &[T], ys: &mut [T]) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma") {
            // SAFETY: the features were detected at runtime.
            unsafe { gemv_t_fma(wt, bias, xs, ys) };
            return;
        }
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the feature was detected at runtime.
            unsafe { gemv_t_avx2(wt, bias, xs, ys) };
            return;
        }
    }
    gemv_t_generic::<T, false>(wt, bias, xs, ys);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn gemv_t_fma<T: Scalar>(wt: &[T], bias: &[T], xs: &[T], ys: &mut [T]) {
    gemv_t_generic::<T, true>(wt, bias, xs, ys);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn gemv_t_avx2<T: Scalar>(wt: &[T], bias: &[T], xs: &[T], ys: &mut [T]) {
    gemv_t_generic::<T, false>(wt, bias, xs, ys);
}

#[inline(always)]
fn mac<T: Scalar, const FMA: bool>(acc: T, a: T, b: T) -> T {
    if FMA {
        a.mul_add(b, acc)
    } else {
        acc + a * b
    }
}

#[inline(always)]
fn gemv_t_generic<T: Scalar, const FMA: bool>(wt: &[T], bias: &[T], xs: &[T], ys: &mut [T]) {
    // row blocks small enough to stay in registers across the k loop
    const BLOCK: usize = 32;
    let rows = bias.len();
    let cols = wt.len() / rows;
    debug_assert_eq!(xs.len() / cols * rows, ys.len());
    for (x, y) in xs.chunks_exact(cols).zip(ys.chunks_exact_mut(rows)) {
        let mut r0 = 0;
        while r0 + BLOCK <= rows {
            let mut acc = [T::zero(); BLOCK];
            acc.copy_from_slice(&bias[r0..r0 + BLOCK]);
            for (k, xk) in x.iter().enumerate() {
                let col = &wt[k * rows + r0..k * rows + r0 + BLOCK];
                for j in 0..BLOCK {
                    acc[j] = mac::<T, FMA>(acc[j], *xk, col[j]);
                }
            }
            y[r0..r0 + BLOCK].copy_from_slice(&acc);
            r0 += BLOCK;
        }
        if r0 < rows {
            let y = &mut y[r0..];
            y.copy_from_slice(&bias[r0..]);
            for (xk, col) in x.iter().zip(wt.chunks_exact(rows)) {
                for (yr, w) in y.iter_mut().zip(&col[r0..]) {
                    *yr = mac::<T, FMA>(*yr, *xk, *w);
                }
            }
        }
    }
}

/// Column-major copy of a row-major `rows x cols` matrix.
pub fn transpose<T: Copy>(w: &[T], rows: usize, cols: usize) -> Vec<T> {
    debug_assert_eq!(w.len(), rows * cols);
    let mut out = Vec::with_capacity(w.len());
    for k in 0..cols {
        out.extend((0..rows).map(|r| w[r * cols + k]));
    }
    out
}

/// Round half to even.
#[inline]
pub fn round_half_even<T: Float>(x: T) -> T {
    let f = x.floor();
    let diff = x - f;
    let half = T::from(0.5).unwrap();
    if diff > half {
        f + T::one()
    } else if diff < half {
        f
    } else {
        let two = T::one() + T::one();
        if (f / two).floor() * two == f {
            f
        } else {
            f + T::one()
        }
    }
}
