use crate::scalar::Scalar;

/// Upper 16 bits of `x` after round-to-nearest-even on the dropped bits.
#[inline]
pub fn bf16_bits(x: f32) -> u16 {
    let bits = x.to_bits();
    if x.is_nan() {
        return ((bits >> 16) as u16) | 0x0040;
    }
    let lsb = (bits >> 16) & 1;
    (bits.wrapping_add(0x7FFF + lsb) >> 16) as u16
}

#[inline]
pub fn bf16_to_f32(bits: u16) -> f32 {
    f32::from_bits(u32::from(bits) << 16)
}

/// Round to the nearest bfloat16 value (ties to even).
#[inline]
pub fn bf16_round<T: Scalar>(x: T) -> T {
    T::lit(f64::from(bf16_to_f32(bf16_bits(x.as_f32()))))
}

pub fn bf16_round_slice<T: Scalar>(xs: &mut [T]) {
    for x in xs {
        *x = bf16_round(*x);
    }
}
