use crate::scalar::Scalar;

/// Activations of shape (channels, frames, bins), stored frame-major with
/// channels innermost: index `(t * bins + f) * channels + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor<T> {
    pub channels: usize,
    pub frames: usize,
    pub bins: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> FeatureTensor<T> {
    pub fn zeros(channels: usize, frames: usize, bins: usize) -> Self {
        Self {
            channels,
            frames,
            bins,
            data: vec![T::zero(); channels * frames * bins],
        }
    }

    #[inline]
    pub fn get(&self, c: usize, t: usize, f: usize) -> T {
        self.data[(t * self.bins + f) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, c: usize, t: usize, f: usize, v: T) {
        self.data[(t * self.bins + f) * self.channels + c] = v;
    }

    /// All bins of frame `t`, `bins * channels` values.
    pub fn frame(&self, t: usize) -> &[T] {
        let n = self.bins * self.channels;
        &self.data[t * n..(t + 1) * n]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [T] {
        let n = self.bins * self.channels;
        &mut self.data[t * n..(t + 1) * n]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
