use crate::scalar::Scalar;

pub const PRE_EMPHASIS_COEFF: f64 = 0.97;

/// `y[n] = x[n] - coeff * x[n-1]`, with `carry` standing in for `x[-1]`.
///
/// Returns the filtered chunk and the new carry (the last raw input sample).
pub fn pre_emphasis<T: Scalar>(chunk: &[T], carry: T, coeff: T) -> (Vec<T>, T) {
    let mut out = chunk.to_vec();
    let carry = pre_emphasis_in_place(&mut out, carry, coeff);
    (out, carry)
}

pub fn pre_emphasis_in_place<T: Scalar>(chunk: &mut [T], mut carry: T, coeff: T) -> T {
    for x in chunk.iter_mut() {
        let raw = *x;
        *x = raw - coeff * carry;
        carry = raw;
    }
    carry
}

/// Inverse recursion `x[n] = y[n] + coeff * x[n-1]`.
pub fn de_emphasis<T: Scalar>(chunk: &[T], mut carry: T, coeff: T) -> (Vec<T>, T) {
    let out = chunk
        .iter()
        .map(|&y| {
            carry = y + coeff * carry;
            carry
        })
        .collect();
    (out, carry)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn impulse_and_dc() {
        let (y, c) = pre_emphasis(&[1.0f64, 0.0, 0.0], 0.0, 0.97);
        assert_eq!(y, vec![1.0, -0.97, 0.0]);
        assert_eq!(c, 0.0);
        let (y, c) = pre_emphasis(&[1.0f64, 1.0, 1.0], 1.0, 0.97);
        for v in y {
            assert!((v - 0.03).abs() < 1e-12);
        }
        assert_eq!(c, 1.0);
    }

    #[test]
    fn chunked_matches_direct_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f32> = (0..1024).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut direct = vec![0.0f32; x.len()];
        for n in 0..x.len() {
            let prev = if n == 0 { 0.0 } else { x[n - 1] };
            direct[n] = x[n] - 0.97 * prev;
        }
        let mut carry = 0.0f32;
        let mut chunked = Vec::new();
        for c in x.chunks(96) {
            let (y, nc) = pre_emphasis(c, carry, 0.97);
            carry = nc;
            chunked.extend(y);
        }
        assert_eq!(chunked, direct);
    }

    #[test]
    fn inverse_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<f64> = (0..4096).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (y, _) = pre_emphasis(&x, 0.0, 0.97);
        let (back, _) = de_emphasis(&y, 0.0, 0.97);
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
