//! Fully connected rectifier networks over a flat parameter vector.
//!
//! Parameters are stored layer by layer: the row-major `(out, in)` weight
//! matrix followed by the `out` biases. Hidden layers use ReLU; the output
//! layer is either the identity (critics) or a tanh squashed into a box
//! (actors).
//!
//! Batched inputs are row-major `(n, input_dim)` slices. The dense products run
//! through `matrixmultiply`, which is single threaded and deterministic for a
//! fixed input.

use crate::error::{check_len, Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq)]
pub enum OutputActivation {
    Identity,
    /// `mid + half * tanh(z)` per coordinate, mapping onto `[low, high]`.
    ScaledTanh { low: Vec<f64>, high: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    layer_sizes: Vec<usize>,
    output: OutputActivation,
}

/// Location of one dense layer inside the flat parameter vector.
#[derive(Debug, Clone, Copy)]
pub struct LayerSlot {
    pub inputs: usize,
    pub outputs: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, output: OutputActivation) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least an input and an output layer, got {} sizes",
                layer_sizes.len()
            )));
        }
        if let Some(pos) = layer_sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidSpec(format!("layer {pos} has zero width")));
        }
        if let OutputActivation::ScaledTanh { low, high } = &output {
            let out = *layer_sizes.last().unwrap();
            if low.len() != out || high.len() != out {
                return Err(Error::InvalidSpec(format!(
                    "output bounds have {}/{} entries for {out} outputs",
                    low.len(),
                    high.len()
                )));
            }
            if low.iter().zip(high).any(|(l, h)| !(l < h) || !l.is_finite() || !h.is_finite()) {
                return Err(Error::InvalidSpec("output bounds need low < high".into()));
            }
        }
        Ok(Self {
            layer_sizes,
            output,
        })
    }

    /// Critic-style network: `input -> hidden... -> 1`, identity output.
    pub fn critic(input_dim: usize, hidden: &[usize]) -> Result<Self> {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Self::new(sizes, OutputActivation::Identity)
    }

    /// Actor-style network squashed into `[low, high]`.
    pub fn actor(input_dim: usize, hidden: &[usize], low: &[f64], high: &[f64]) -> Result<Self> {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(low.len());
        Self::new(
            sizes,
            OutputActivation::ScaledTanh {
                low: low.to_vec(),
                high: high.to_vec(),
            },
        )
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn output_activation(&self) -> &OutputActivation {
        &self.output
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    pub fn slots(&self) -> Vec<LayerSlot> {
        let mut offset = 0;
        self.layer_sizes
            .windows(2)
            .map(|w| {
                let slot = LayerSlot {
                    inputs: w[0],
                    outputs: w[1],
                    weight_offset: offset,
                    bias_offset: offset + w[0] * w[1],
                };
                offset += w[0] * w[1] + w[1];
                slot
            })
            .collect()
    }
}

/// `c = a * b + beta * c` for row-major/strided operands.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    assert!(k == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    assert!((m - 1) * n + (n - 1) < c.len());
    // SAFETY: the asserts above bound every element the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    acc.iter().sum::<f64>() + tail
}

/// Cached intermediate values of a batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    batch: usize,
    /// Input to each layer; `layer_inputs[0]` is the network input.
    layer_inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pre_activations: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    spec: MlpSpec,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(spec: MlpSpec) -> Self {
        let values = vec![0.0; spec.param_count()];
        Self { spec, values }
    }

    pub fn from_values(spec: MlpSpec, values: Vec<f64>) -> Result<Self> {
        check_len("parameter vector", spec.param_count(), values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter vector".into()));
        }
        Ok(Self { spec, values })
    }

    /// Fan-in scaled uniform weights `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, zero biases.
    pub fn init(spec: MlpSpec, rng: &mut RngStream) -> Self {
        let mut p = Self::zeros(spec);
        for slot in p.spec.slots() {
            let limit = 1.0 / (slot.inputs as f64).sqrt();
            let weights =
                &mut p.values[slot.weight_offset..slot.weight_offset + slot.inputs * slot.outputs];
            for w in weights {
                *w = rng.uniform_range(-limit, limit);
            }
        }
        p
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same network shape with different values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::from_values(self.spec.clone(), values)
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.forward_batch(input, 1)
    }

    /// Reverse-mode gradients of `<output, cotangent>` with respect to the
    /// parameters and the input.
    pub fn gradients(&self, input: &[f64], cotangent: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let trace = self.forward_trace(input, 1)?;
        self.backward(&trace, cotangent)
    }

    pub fn forward_batch(&self, inputs: &[f64], batch: usize) -> Result<Vec<f64>> {
        check_len("network input", batch * self.spec.input_dim(), inputs.len())?;
        let slots = self.spec.slots();
        let mut current: Option<Vec<f64>> = None;
        for (l, slot) in slots.iter().enumerate() {
            let x = current.as_deref().unwrap_or(inputs);
            let mut z = self.affine(x, batch, slot);
            if l + 1 == slots.len() {
                z = self.apply_output(&z);
            } else {
                for v in &mut z {
                    *v = v.max(0.0);
                }
            }
            current = Some(z);
        }
        Ok(current.unwrap_or_default())
    }

    pub fn forward_trace(&self, inputs: &[f64], batch: usize) -> Result<ForwardTrace> {
        check_len("network input", batch * self.spec.input_dim(), inputs.len())?;
        let slots = self.spec.slots();
        let mut layer_inputs = Vec::with_capacity(slots.len());
        let mut pre_activations = Vec::with_capacity(slots.len());
        let mut current = inputs.to_vec();
        for (l, slot) in slots.iter().enumerate() {
            let z = self.affine(&current, batch, slot);
            let last = l + 1 == slots.len();
            let a = if last {
                self.apply_output(&z)
            } else {
                z.iter().map(|&v| v.max(0.0)).collect()
            };
            layer_inputs.push(std::mem::replace(&mut current, a));
            pre_activations.push(z);
        }
        Ok(ForwardTrace {
            batch,
            layer_inputs,
            pre_activations,
            output: current,
        })
    }

    /// `x W^T + b` for `batch` rows of `x`.
    fn affine(&self, x: &[f64], batch: usize, slot: &LayerSlot) -> Vec<f64> {
        let (k, n) = (slot.inputs, slot.outputs);
        let w = &self.values[slot.weight_offset..slot.bias_offset];
        let b = &self.values[slot.bias_offset..slot.bias_offset + n];
        let mut z = Vec::with_capacity(batch * n);
        if n == 1 {
            z.extend(x.chunks_exact(k).map(|row| b[0] + dot(row, w)));
        } else if k <= 4 {
            let wt: Vec<f64> = (0..k).flat_map(|j| (0..n).map(move |o| w[o * k + j])).collect();
            for row in x.chunks_exact(k) {
                let start = z.len();
                z.extend_from_slice(b);
                let zr = &mut z[start..];
                for (j, &xj) in row.iter().enumerate() {
                    for (zo, &wv) in zr.iter_mut().zip(&wt[j * n..(j + 1) * n]) {
                        *zo += xj * wv;
                    }
                }
            }
        } else {
            for _ in 0..batch {
                z.extend_from_slice(b);
            }
            // z (batch x out) += x (batch x in) * W^T
            gemm(batch, k, n, x, k, 1, w, 1, k, 1.0, &mut z);
        }
        z
    }

    fn apply_output(&self, z: &[f64]) -> Vec<f64> {
        match &self.spec.output {
            OutputActivation::Identity => z.to_vec(),
            OutputActivation::ScaledTanh { low, high } => {
                let d = low.len();
                z.iter()
                    .enumerate()
                    .map(|(i, &v)| {
                        let j = i % d;
                        let mid = 0.5 * (high[j] + low[j]);
                        let half = 0.5 * (high[j] - low[j]);
                        (mid + half * v.tanh()).clamp(low[j], high[j])
                    })
                    .collect()
            }
        }
    }

    /// Backpropagates per-row output cotangents through a recorded pass.
    ///
    /// The parameter gradient is summed over the batch rows; the input
    /// gradient keeps one row per sample.
    pub fn backward(&self, trace: &ForwardTrace, cotangent: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let batch = trace.batch;
        check_len(
            "output cotangent",
            batch * self.spec.output_dim(),
            cotangent.len(),
        )?;
        let slots = self.spec.slots();
        let mut grad = vec![0.0; self.values.len()];
        let last = slots.len() - 1;

        let mut delta: Vec<f64> = match &self.spec.output {
            OutputActivation::Identity => cotangent.to_vec(),
            OutputActivation::ScaledTanh { low, high } => {
                let d = low.len();
                trace.pre_activations[last]
                    .iter()
                    .zip(cotangent)
                    .enumerate()
                    .map(|(i, (&z, &u))| {
                        let j = i % d;
                        let t = z.tanh();
                        u * 0.5 * (high[j] - low[j]) * (1.0 - t * t)
                    })
                    .collect()
            }
        };

        for l in (0..slots.len()).rev() {
            let slot = slots[l];
            let x = &trace.layer_inputs[l];
            let w = &self.values[slot.weight_offset..slot.bias_offset];
            let mut dx = vec![0.0; batch * slot.inputs];
            if slot.outputs == 1 {
                let gw = &mut grad[slot.weight_offset..slot.bias_offset];
                for ((&d, xr), dr) in delta
                    .iter()
                    .zip(x.chunks_exact(slot.inputs))
                    .zip(dx.chunks_exact_mut(slot.inputs))
                {
                    for ((g, &xv), (o, &wv)) in gw.iter_mut().zip(xr).zip(dr.iter_mut().zip(w)) {
                        *g += d * xv;
                        *o = d * wv;
                    }
                }
                grad[slot.bias_offset] = delta.iter().sum();
            } else {
                // dW (out x in) = delta^T (out x batch) * x (batch x in)
                gemm(
                    slot.outputs,
                    batch,
                    slot.inputs,
                    &delta,
                    1,
                    slot.outputs,
                    x,
                    slot.inputs,
                    1,
                    0.0,
                    &mut grad[slot.weight_offset..slot.bias_offset],
                );
                let gb = &mut grad[slot.bias_offset..slot.bias_offset + slot.outputs];
                for row in delta.chunks_exact(slot.outputs) {
                    for (g, d) in gb.iter_mut().zip(row) {
                        *g += d;
                    }
                }
                // dx (batch x in) = delta (batch x out) * W (out x in)
                gemm(
                    batch,
                    slot.outputs,
                    slot.inputs,
                    &delta,
                    slot.outputs,
                    1,
                    w,
                    slot.inputs,
                    1,
                    0.0,
                    &mut dx,
                );
            }
            if l > 0 {
                for (g, &z) in dx.iter_mut().zip(&trace.pre_activations[l - 1]) {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            delta = dx;
        }
        Ok((grad, delta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear(w: Vec<f64>, b: Vec<f64>, inp: usize, out: usize) -> ParamVector {
        let spec = MlpSpec::new(vec![inp, out], OutputActivation::Identity).unwrap();
        let mut v = w;
        v.extend(b);
        ParamVector::from_values(spec, v).unwrap()
    }

    #[test]
    fn rejects_degenerate_specs() {
        assert!(MlpSpec::new(vec![3], OutputActivation::Identity).is_err());
        assert!(MlpSpec::critic(2, &[0]).is_err());
        assert!(MlpSpec::actor(1, &[4], &[1.0], &[-1.0]).is_err());
    }

    #[test]
    fn param_count_matches_layout() {
        let spec = MlpSpec::critic(2, &[8, 4]).unwrap();
        assert_eq!(spec.param_count(), 2 * 8 + 8 + 8 * 4 + 4 + 4 + 1);
        let slots = spec.slots();
        assert_eq!(slots[2].bias_offset + 1, spec.param_count());
    }

    #[test]
    fn zero_params_give_zero_output() {
        let spec = MlpSpec::actor(3, &[5, 5], &[-1.0, -2.0], &[1.0, 2.0]).unwrap();
        let p = ParamVector::zeros(spec);
        assert_eq!(p.forward(&[0.3, -4.0, 9.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let p = linear(vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0], 2, 2);
        assert_eq!(p.forward(&[0.7, -1.5]).unwrap(), vec![0.7, -1.5]);
    }

    #[test]
    fn linear_layer_gradients_are_analytic() {
        let w = vec![1.0, 2.0, -3.0, 0.5, 0.25, 4.0];
        let p = linear(w.clone(), vec![0.1, -0.2], 3, 2);
        let x = [0.5, -1.0, 2.0];
        let u = [3.0, -2.0];
        let (gp, gx) = p.gradients(&x, &u).unwrap();
        // weight block u x^T, bias block u
        let expected_w: Vec<f64> = u.iter().flat_map(|ui| x.iter().map(move |xj| ui * xj)).collect();
        assert_eq!(&gp[..6], &expected_w[..]);
        assert_eq!(&gp[6..], &u);
        // input gradient W^T u
        for j in 0..3 {
            let expect = w[j] * u[0] + w[3 + j] * u[1];
            assert!((gx[j] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_cotangent_zero_gradients() {
        let spec = MlpSpec::critic(2, &[6]).unwrap();
        let p = ParamVector::init(spec, &mut RngStream::new(1));
        let (gp, gx) = p.gradients(&[0.2, 0.4], &[0.0]).unwrap();
        assert!(gp.iter().chain(&gx).all(|&g| g == 0.0));
    }

    #[test]
    fn dimension_errors() {
        let spec = MlpSpec::critic(2, &[6]).unwrap();
        let p = ParamVector::zeros(spec.clone());
        assert!(matches!(p.forward(&[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(p.gradients(&[1.0, 2.0], &[1.0, 1.0]).is_err());
        assert!(ParamVector::from_values(spec, vec![0.0; 3]).is_err());
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let spec = MlpSpec::critic(3, &[7, 5]).unwrap();
        let a = ParamVector::init(spec.clone(), &mut RngStream::new(9));
        let b = ParamVector::init(spec.clone(), &mut RngStream::new(9));
        assert_eq!(a.values(), b.values());
        for slot in spec.slots() {
            assert!(a.values()[slot.bias_offset..slot.bias_offset + slot.outputs]
                .iter()
                .all(|&v| v == 0.0));
        }
    }

    #[test]
    fn batch_rows_match_single_evaluations() {
        let spec = MlpSpec::actor(2, &[16, 16], &[-1.0], &[1.0]).unwrap();
        let p = ParamVector::init(spec, &mut RngStream::new(3));
        let xs = [0.1, 0.2, -3.0, 4.0, 5.5, 0.0];
        let batch = p.forward_batch(&xs, 3).unwrap();
        for i in 0..3 {
            let single = p.forward(&xs[2 * i..2 * i + 2]).unwrap();
            assert!((single[0] - batch[i]).abs() < 1e-14);
        }
    }
}
