use crate::scalar::Scalar;

pub const DEFAULT_MOMENTUM: f64 = 0.9;

/// Min-max moving-average range tracker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverState {
    pub alpha: f64,
    pub beta: f64,
    pub momentum: f64,
    pub initialized: bool,
}

impl Default for ObserverState {
    fn default() -> Self {
        Self::new(DEFAULT_MOMENTUM)
    }
}

impl ObserverState {
    pub fn new(momentum: f64) -> Self {
        assert!(momentum > 0.0 && momentum <= 1.0, "observer momentum must be in (0, 1]");
        Self {
            alpha: 0.0,
            beta: 0.0,
            momentum,
            initialized: false,
        }
    }

    /// Fold one batch with range `[lo, hi]` into the running estimate.
    pub fn observe_range(&mut self, lo: f64, hi: f64) {
        if !self.initialized {
            self.alpha = lo;
            self.beta = hi;
            self.initialized = true;
        } else {
            self.alpha += self.momentum * (lo - self.alpha);
            self.beta += self.momentum * (hi - self.beta);
        }
    }

    /// Observe a tensor; empty tensors are ignored.
    pub fn observe<T: Scalar>(&mut self, values: &[T]) {
        if let Some((lo, hi)) = min_max(values) {
            self.observe_range(lo, hi);
        }
    }
}

pub fn min_max<T: Scalar>(values: &[T]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    Some(values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        let v = v.as_f64();
        (lo.min(v), hi.max(v))
    }))
}
