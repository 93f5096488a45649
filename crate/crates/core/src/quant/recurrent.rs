//! Recurrent steps with int8 matrix products and float gate math.

use crate::model::{GruCell, LstmCell, NoProbe};
use crate::quant::{fake_quant_value, QuantSpec};
use crate::scalar::Scalar;

fn requant_state<T: Scalar>(values: &mut [T], spec: Option<&QuantSpec>) {
    if let Some(spec) = spec {
        for v in values.iter_mut() {
            *v = T::lit(fake_quant_value(v.as_f64(), spec.scales[0], spec));
        }
    }
}

/// One GRU step on input `x`. The cell's dense layers carry their own
/// precision; gates run in float and the new state is requantized at
/// `state_spec` when given.
pub fn q_gru_step<T: Scalar>(cell: &GruCell<T>, x: &[T], h: &mut [T], state_spec: Option<&QuantSpec>) {
    let gx = cell.ih.forward(x, &mut NoProbe);
    cell.step(&gx, h, &mut NoProbe);
    requant_state(h, state_spec);
}

/// One LSTM step; see [`q_gru_step`].
pub fn q_lstm_step<T: Scalar>(
    cell: &LstmCell<T>,
    x: &[T],
    h: &mut [T],
    c: &mut [T],
    state_spec: Option<&QuantSpec>,
) {
    let gx = cell.ih.forward(x, &mut NoProbe);
    cell.step(&gx, h, c, &mut NoProbe);
    requant_state(h, state_spec);
}
