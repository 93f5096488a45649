//! Dense building block shared by every layer, in f32, bfloat16 or int8.

use crate::error::{Error, Result};
use crate::model::{ModelConfig, TensorData, WeightStore};
use crate::quant::kernels::{dense_int8, pack_int8, quantize_bias, MAX_REDUCTION};
use crate::quant::{
    bf16_round, quantize, ActivationSpecs, Precision, QuantSpec,
};
use crate::scalar::{gemv_t, sigmoid, transpose, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Input,
    Output,
}

/// Observes activations flowing into and out of dense layers.
pub trait Probe<T> {
    fn record(&mut self, layer: usize, side: Side, values: &[T]);
}

/// Probe that ignores everything.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoProbe;

impl<T> Probe<T> for NoProbe {
    #[inline(always)]
    fn record(&mut self, _: usize, _: Side, _: &[T]) {}
}

#[derive(Debug, Clone)]
enum Kernel<T> {
    /// Column-major weights.
    Float(Vec<T>),
    /// Column-major bfloat16-valued weights; inputs and outputs are rounded
    /// as well.
    Bf16(Vec<T>),
    /// Int8 weights in the [`pack_int8`] layout.
    Int8 {
        weight: Vec<i16>,
        bias: Vec<i32>,
        multipliers: Vec<f64>,
        input: QuantSpec,
        output: QuantSpec,
    },
}

/// `y = W x + b` with `W: [rows, cols]`.
#[derive(Debug, Clone)]
pub struct Dense<T> {
    pub id: usize,
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    bias: Vec<T>,
    kernel: Kernel<T>,
}

impl<T: Scalar> Dense<T> {
    /// Float layer from raw parts (tests and oracles).
    pub fn from_parts(rows: usize, cols: usize, weight: Vec<T>, bias: Vec<T>) -> Self {
        assert_eq!(weight.len(), rows * cols);
        assert_eq!(bias.len(), rows);
        Self {
            id: 0,
            name: String::new(),
            rows,
            cols,
            bias,
            kernel: Kernel::Float(transpose(&weight, rows, cols)),
        }
    }

    /// Int8 layer from float parts: weights are quantized per output row
    /// (symmetric), activations use the given specs.
    pub fn int8_from_parts(
        rows: usize,
        cols: usize,
        weight: &[f32],
        bias: &[f32],
        input: QuantSpec,
        output: QuantSpec,
    ) -> Result<Self> {
        if weight.len() != rows * cols || bias.len() != rows {
            return Err(Error::shape(format!("int8 layer {rows}x{cols}: bad weight or bias length")));
        }
        if cols >= MAX_REDUCTION {
            return Err(Error::config(format!("reduction length {cols} too long")));
        }
        let wspec = QuantSpec::per_channel_from(weight, rows, 8)?;
        let q = quantize(weight, &[rows, cols], &wspec)?;
        let sx = input.scales[0];
        Ok(Self {
            id: 0,
            name: String::new(),
            rows,
            cols,
            bias: bias.iter().map(|&b| T::lit(f64::from(b))).collect(),
            kernel: Kernel::Int8 {
                weight: pack_int8(&q.data, rows, cols),
                bias: quantize_bias(bias, sx, &wspec),
                multipliers: wspec.scales.iter().map(|s| sx * s / output.scales[0]).collect(),
                input,
                output,
            },
        })
    }

    /// Build layer `path` from the store at the planned precision. The
    /// spectral deconvolution expands each output channel into `q`
    /// consecutive rows, one per tap.
    pub(crate) fn build(
        id: usize,
        path: &str,
        cfg: &ModelConfig,
        store: &WeightStore,
        precision: Precision,
        acts: Option<&ActivationSpecs>,
    ) -> Result<Self> {
        let shape = cfg
            .weight_shape(path)
            .ok_or_else(|| Error::config(format!("unknown layer {path}")))?;
        let wt = store.get(&format!("{path}.weight"))?;
        let bt = store.get(&format!("{path}.bias"))?;
        if wt.shape != shape {
            return Err(Error::shape(format!("{path}: weight shape {:?}, expected {shape:?}", wt.shape)));
        }
        let channels = shape[0];
        let rows_per_channel = if path.ends_with("spectral.deconv") { shape[1] } else { 1 };
        let rows = channels * rows_per_channel;
        let cols = shape.iter().product::<usize>() / rows;
        let bias_f32 = bt.to_f32();
        let bias: Vec<T> = (0..rows)
            .map(|r| T::lit(f64::from(bias_f32[r / rows_per_channel])))
            .collect();
        let kernel = match precision {
            Precision::F32 => {
                let w: Vec<T> = wt.to_f32().iter().map(|&v| T::lit(f64::from(v))).collect();
                Kernel::Float(transpose(&w, rows, cols))
            }
            Precision::Bf16 => {
                let w: Vec<T> = wt.to_f32().iter().map(|&v| bf16_round(T::lit(f64::from(v)))).collect();
                Kernel::Bf16(transpose(&w, rows, cols))
            }
            Precision::Int8 => {
                let acts = acts.ok_or_else(|| {
                    Error::config(format!("{path} runs in int8 but no activation specs were calibrated"))
                })?;
                let input = acts.get(&format!("{path}.in"))?.clone();
                let output = acts.get(&format!("{path}.out"))?.clone();
                let (weight, wspec) = match &wt.data {
                    TensorData::I8 { data, spec } => (data.clone(), spec.clone()),
                    _ => {
                        let values = wt.to_f32();
                        let spec = QuantSpec::per_channel_from(&values, channels, 8)?;
                        (quantize(&values, &shape, &spec)?.data, spec)
                    }
                };
                if cols >= MAX_REDUCTION {
                    return Err(Error::config(format!("{path}: reduction length {cols} too long")));
                }
                let sx = input.scales[0];
                let bias_ch = quantize_bias(&bias_f32, sx, &wspec);
                let scale_of = |c: usize| wspec.scales[if wspec.scales.len() == 1 { 0 } else { c }];
                Kernel::Int8 {
                    weight: pack_int8(&weight, rows, cols),
                    bias: (0..rows).map(|r| bias_ch[r / rows_per_channel]).collect(),
                    multipliers: (0..rows)
                        .map(|r| sx * scale_of(r / rows_per_channel) / output.scales[0])
                        .collect(),
                    input,
                    output,
                }
            }
        };
        let bias = match &kernel {
            Kernel::Bf16(_) => bias.into_iter().map(bf16_round).collect(),
            _ => bias,
        };
        Ok(Self {
            id,
            name: path.to_string(),
            rows,
            cols,
            bias,
            kernel,
        })
    }

    pub fn precision(&self) -> Precision {
        match self.kernel {
            Kernel::Float(_) => Precision::F32,
            Kernel::Bf16(_) => Precision::Bf16,
            Kernel::Int8 { .. } => Precision::Int8,
        }
    }

    /// Apply to `n = xs.len() / cols` stacked inputs.
    pub fn forward_batch<P: Probe<T>>(&self, xs: &[T], ys: &mut [T], probe: &mut P) {
        debug_assert_eq!(xs.len() % self.cols, 0);
        let n = xs.len() / self.cols;
        debug_assert_eq!(ys.len(), n * self.rows);
        probe.record(self.id, Side::Input, xs);
        match &self.kernel {
            Kernel::Float(w) => gemv_t(w, &self.bias, xs, ys),
            Kernel::Bf16(w) => {
                let xr: Vec<T> = xs.iter().map(|&v| bf16_round(v)).collect();
                gemv_t(w, &self.bias, &xr, ys);
                for y in ys.iter_mut() {
                    *y = bf16_round(*y);
                }
            }
            Kernel::Int8 {
                weight,
                bias,
                multipliers,
                input,
                output,
            } => dense_int8(weight, bias, multipliers, input, output, xs, ys),
        }
        probe.record(self.id, Side::Output, ys);
    }

    pub fn forward<P: Probe<T>>(&self, x: &[T], probe: &mut P) -> Vec<T> {
        let mut y = vec![T::zero(); self.rows];
        self.forward_batch(x, &mut y, probe);
        y
    }
}

/// GRU cell, gate order (reset, update, new).
#[derive(Debug, Clone)]
pub struct GruCell<T> {
    pub ih: Dense<T>,
    pub hh: Dense<T>,
}

impl<T: Scalar> GruCell<T> {
    pub fn hidden(&self) -> usize {
        self.hh.cols
    }

    /// Advance `h` given the precomputed input projection `gx` (3H).
    pub fn step<P: Probe<T>>(&self, gx: &[T], h: &mut [T], probe: &mut P) {
        let hd = self.hidden();
        let mut g = self.hh.forward(h, probe);
        let (rz, gn) = g.split_at_mut(2 * hd);
        for (v, x) in rz.iter_mut().zip(&gx[..2 * hd]) {
            *v = sigmoid(*x + *v);
        }
        let (r, z) = rz.split_at(hd);
        for ((n, x), r) in gn.iter_mut().zip(&gx[2 * hd..3 * hd]).zip(r) {
            *n = (*x + *r * *n).gate_tanh();
        }
        for ((h, z), n) in h.iter_mut().zip(z.iter()).zip(gn.iter()) {
            *h = (T::one() - *z) * *n + *z * *h;
        }
    }
}

/// LSTM cell, gate order (input, forget, cell, output).
#[derive(Debug, Clone)]
pub struct LstmCell<T> {
    pub ih: Dense<T>,
    pub hh: Dense<T>,
}

impl<T: Scalar> LstmCell<T> {
    pub fn hidden(&self) -> usize {
        self.hh.cols
    }

    /// Advance `(h, c)` given the precomputed input projection `gx` (4H).
    pub fn step<P: Probe<T>>(&self, gx: &[T], h: &mut [T], c: &mut [T], probe: &mut P) {
        self.step_batch(gx, h, c, probe);
    }

    /// Advance `n` independent states at once: `gx` is `n x 4H`, `h` and
    /// `c` are `n x H`. Same result as `n` calls to [`LstmCell::step`].
    pub fn step_batch<P: Probe<T>>(&self, gx: &[T], h: &mut [T], c: &mut [T], probe: &mut P) {
        let hd = self.hidden();
        let mut g = vec![T::zero(); gx.len()];
        self.hh.forward_batch(h, &mut g, probe);
        // tanh(x) = 2 sigmoid(2x) - 1, so a single flat sigmoid pass covers
        // all four gates
        let two = T::one() + T::one();
        for (gates, x) in g.chunks_exact_mut(4 * hd).zip(gx.chunks_exact(4 * hd)) {
            for (k, (v, x)) in gates.iter_mut().zip(x).enumerate() {
                let pre = *x + *v;
                *v = if (2 * hd..3 * hd).contains(&k) { two * pre } else { pre };
            }
        }
        for v in g.iter_mut() {
            *v = sigmoid(*v);
        }
        for ((gates, h), c) in g
            .chunks_exact(4 * hd)
            .zip(h.chunks_exact_mut(hd))
            .zip(c.chunks_exact_mut(hd))
        {
            let (i, rest) = gates.split_at(hd);
            let (f, rest) = rest.split_at(hd);
            let (gg, o) = rest.split_at(hd);
            for k in 0..hd {
                c[k] = f[k] * c[k] + i[k] * (two * gg[k] - T::one());
            }
            for k in 0..hd {
                h[k] = o[k] * c[k].gate_tanh();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-0.7..0.7)).collect()
    }

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    #[test]
    fn gru_matches_scalar_recurrence() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (din, hd) = (5, 7);
        let wih = rand_vec(&mut rng, 3 * hd * din);
        let whh = rand_vec(&mut rng, 3 * hd * hd);
        let bih = rand_vec(&mut rng, 3 * hd);
        let bhh = rand_vec(&mut rng, 3 * hd);
        let cell = GruCell {
            ih: Dense::from_parts(3 * hd, din, wih.clone(), bih.clone()),
            hh: Dense::from_parts(3 * hd, hd, whh.clone(), bhh.clone()),
        };
        let mut h = vec![0.0; hd];
        let mut h_ref = vec![0.0; hd];
        for _ in 0..6 {
            let x = rand_vec(&mut rng, din);
            let gx = cell.ih.forward(&x, &mut NoProbe);
            cell.step(&gx, &mut h, &mut NoProbe);
            // scalar oracle
            let lin = |w: &[f64], b: &[f64], v: &[f64], row: usize| -> f64 {
                b[row] + (0..v.len()).map(|k| w[row * v.len() + k] * v[k]).sum::<f64>()
            };
            let mut next = vec![0.0; hd];
            for i in 0..hd {
                let r = sig(lin(&wih, &bih, &x, i) + lin(&whh, &bhh, &h_ref, i));
                let z = sig(lin(&wih, &bih, &x, hd + i) + lin(&whh, &bhh, &h_ref, hd + i));
                let n = (lin(&wih, &bih, &x, 2 * hd + i) + r * lin(&whh, &bhh, &h_ref, 2 * hd + i)).tanh();
                next[i] = (1.0 - z) * n + z * h_ref[i];
            }
            h_ref = next;
            for (a, b) in h.iter().zip(&h_ref) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_weight_cells_stay_silent() {
        let hd = 4;
        let gru = GruCell {
            ih: Dense::from_parts(3 * hd, 3, vec![0.0f32; 3 * hd * 3], vec![0.0; 3 * hd]),
            hh: Dense::from_parts(3 * hd, hd, vec![0.0; 3 * hd * hd], vec![0.0; 3 * hd]),
        };
        let mut h = vec![0.0f32; hd];
        gru.step(&vec![0.0; 3 * hd], &mut h, &mut NoProbe);
        assert_eq!(h, vec![0.0; hd]);
        let lstm = LstmCell {
            ih: Dense::from_parts(4 * hd, 3, vec![0.0f32; 4 * hd * 3], vec![0.0; 4 * hd]),
            hh: Dense::from_parts(4 * hd, hd, vec![0.0; 4 * hd * hd], vec![0.0; 4 * hd]),
        };
        let (mut h, mut c) = (vec![0.0f32; hd], vec![0.0f32; hd]);
        lstm.step(&vec![0.0; 4 * hd], &mut h, &mut c, &mut NoProbe);
        assert_eq!(h, vec![0.0; hd]);
        assert_eq!(c, vec![0.0; hd]);
    }
}
