//! Dense Q-network: forward inference, manual backpropagation of the TD
//! loss, and per-layer symmetric 8-bit quantization.
//!
//! The network is the substrate for fault injection: its parameters are
//! quantized per layer to signed 8-bit codes (`QuantizedLayer`), the codes'
//! bits live at deterministic addresses in a linear memory image (see
//! `faults::MemoryLayout`), and bit errors are applied to that image.
//!
//! Gradient convention: the TD loss is the batch *sum* Σ_j (Q(s_j,a_j) − y_j)²,
//! not the mean. Learning rates must be sized for sum reduction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// One dense layer, row-major weights (out × in).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major: weights[o * in_dim + i] connects input i to output o.
    pub weights: Vec<f32>,
    pub biases: Vec<f32>,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        DenseLayer {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            biases: vec![0.0; out_dim],
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

/// Multilayer perceptron with ReLU hidden activations and an identity
/// output layer. Immutable between updates; `forward` and `td_gradient`
/// are pure and safe to share read-only across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    pub arch: Vec<usize>,
    pub layers: Vec<DenseLayer>,
    /// Seed the parameters were initialized from (checkpoint metadata).
    pub seed: u64,
}

impl QNetwork {
    /// Glorot-style uniform initialization: weights from
    /// U(−√(6/(fan_in+fan_out)), +√(6/(fan_in+fan_out))), biases zero.
    /// Deterministic per (arch, seed).
    pub fn init(arch: &[usize], seed: u64) -> Result<QNetwork> {
        if arch.len() < 2 {
            return Err(Error::Config(format!(
                "network arch needs at least input and output widths, got {arch:?}"
            )));
        }
        if arch.iter().any(|&w| w == 0) {
            return Err(Error::Config(format!("network arch has a zero width: {arch:?}")));
        }
        let mut rng = SimRng::new(seed);
        let mut layers = Vec::with_capacity(arch.len() - 1);
        for w in arch.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
            let mut layer = DenseLayer::zeros(fan_in, fan_out);
            for w in layer.weights.iter_mut() {
                *w = (rng.next_f32() * 2.0 - 1.0) * bound;
            }
            layers.push(layer);
        }
        Ok(QNetwork {
            arch: arch.to_vec(),
            layers,
            seed,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.arch[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.arch.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    /// Q(s, ·): ReLU on hidden layers, identity on the output layer.
    pub fn forward(&self, state: &[f32]) -> Result<Vec<f32>> {
        if state.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "state has {} features, network expects {}",
                state.len(),
                self.input_dim()
            )));
        }
        let mut act = state.to_vec();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            act = affine(layer, &act);
            if li != last {
                for z in act.iter_mut() {
                    if *z < 0.0 {
                        *z = 0.0;
                    }
                }
            }
        }
        Ok(act)
    }

    /// True when every parameter is finite.
    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.iter().all(|w| w.is_finite()) && l.biases.iter().all(|b| b.is_finite())
        })
    }

    /// θ ← θ − α(Δ + Δ̃). Pure: returns the updated network.
    /// `g_perturbed = None` is the classical mode (Δ̃ = 0).
    pub fn apply_update(
        &self,
        g_clean: &Gradient,
        g_perturbed: Option<&Gradient>,
        alpha: f32,
    ) -> Result<QNetwork> {
        let mut next = self.clone();
        next.apply_update_mut(g_clean, g_perturbed, alpha)?;
        Ok(next)
    }

    /// Clamps every weight into [-c, c]. Biases stay free: they carry the
    /// value-level offset and are not what sets the quantization scale in
    /// full-precision bias mode.
    pub fn clamp_weights(&mut self, c: f32) {
        for layer in self.layers.iter_mut() {
            for w in layer.weights.iter_mut() {
                *w = w.clamp(-c, c);
            }
        }
    }

    /// In-place variant of [`QNetwork::apply_update`] for the training loop.
    pub fn apply_update_mut(
        &mut self,
        g_clean: &Gradient,
        g_perturbed: Option<&Gradient>,
        alpha: f32,
    ) -> Result<()> {
        if alpha <= 0.0 {
            return Err(Error::Usage(format!("learning rate must be positive, got {alpha}")));
        }
        self.check_grad_shape(g_clean)?;
        if let Some(g) = g_perturbed {
            self.check_grad_shape(g)?;
        }
        for (li, layer) in self.layers.iter_mut().enumerate() {
            let gc = &g_clean.layers[li];
            let gp = g_perturbed.map(|g| &g.layers[li]);
            for (i, w) in layer.weights.iter_mut().enumerate() {
                let g = gc.d_weights[i] + gp.map_or(0.0, |g| g.d_weights[i]);
                *w -= alpha * g;
            }
            for (i, b) in layer.biases.iter_mut().enumerate() {
                let g = gc.d_biases[i] + gp.map_or(0.0, |g| g.d_biases[i]);
                *b -= alpha * g;
            }
        }
        Ok(())
    }

    fn check_grad_shape(&self, g: &Gradient) -> Result<()> {
        if g.layers.len() != self.layers.len()
            || self
                .layers
                .iter()
                .zip(&g.layers)
                .any(|(l, gl)| gl.d_weights.len() != l.weights.len() || gl.d_biases.len() != l.biases.len())
        {
            return Err(Error::Shape("gradient shape does not match network".into()));
        }
        Ok(())
    }
}

fn affine(layer: &DenseLayer, input: &[f32]) -> Vec<f32> {
    let mut out = layer.biases.clone();
    for (o, out_v) in out.iter_mut().enumerate() {
        let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
        let mut acc = 0.0f32;
        for (w, x) in row.iter().zip(input) {
            acc += w * x;
        }
        *out_v += acc;
    }
    out
}

/// Per-layer parameter gradients, same shapes as the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub layers: Vec<LayerGradient>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub d_weights: Vec<f32>,
    pub d_biases: Vec<f32>,
}

impl Gradient {
    pub fn zeros_like(net: &QNetwork) -> Gradient {
        Gradient {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGradient {
                    d_weights: vec![0.0; l.weights.len()],
                    d_biases: vec![0.0; l.biases.len()],
                })
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.d_weights.iter().all(|g| g.is_finite()) && l.d_biases.iter().all(|g| g.is_finite())
        })
    }

    /// Euclidean norm over every component, in f64 for headroom.
    pub fn global_norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.d_weights.iter().chain(&l.d_biases))
            .map(|&g| g as f64 * g as f64)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales the gradient so its global norm is at most `max_norm`.
    pub fn clip_global_norm(&mut self, max_norm: f64) {
        let norm = self.global_norm();
        if norm <= max_norm || norm == 0.0 {
            return;
        }
        let s = (max_norm / norm) as f32;
        for l in &mut self.layers {
            for g in &mut l.d_weights {
                *g *= s;
            }
            for g in &mut l.d_biases {
                *g *= s;
            }
        }
    }
}

/// One regression sample for the TD loss: Q(state, action) is pulled
/// toward the (already computed, constant) target.
#[derive(Debug, Clone, Copy)]
pub struct TdSample<'a> {
    pub state: &'a [f32],
    pub action: usize,
    pub target: f32,
}

/// Batch-sum TD loss and its exact gradient.
///
/// loss = Σ_j (Q(s_j, a_j) − y_j)²; gradients flow only through each
/// sample's selected action output. ReLU backward uses the z > 0
/// subgradient (zero at the kink).
pub fn td_gradient(net: &QNetwork, batch: &[TdSample]) -> Result<(f64, Gradient)> {
    if batch.is_empty() {
        return Err(Error::Usage("td_gradient on an empty batch".into()));
    }
    for s in batch {
        if s.action >= net.output_dim() {
            return Err(Error::Shape(format!(
                "action {} out of range for {} outputs",
                s.action,
                net.output_dim()
            )));
        }
        if !s.target.is_finite() {
            return Err(Error::Numerical(format!("non-finite TD target {}", s.target)));
        }
    }

    let n_layers = net.layers.len();
    let mut grad = Gradient::zeros_like(net);
    let mut loss = 0.0f64;

    // Per-sample forward with cached post-activations, then backward.
    // acts[0] = state, acts[l] = post-activation output of layer l-1.
    let mut acts: Vec<Vec<f32>> = Vec::with_capacity(n_layers + 1);
    for sample in batch {
        if sample.state.len() != net.input_dim() {
            return Err(Error::Shape(format!(
                "state has {} features, network expects {}",
                sample.state.len(),
                net.input_dim()
            )));
        }
        acts.clear();
        acts.push(sample.state.to_vec());
        for (li, layer) in net.layers.iter().enumerate() {
            let mut z = affine(layer, acts.last().unwrap());
            if li != n_layers - 1 {
                for v in z.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            acts.push(z);
        }

        let q = acts[n_layers][sample.action];
        let err = q - sample.target;
        loss += (err as f64) * (err as f64);

        // d loss / d output = 2(q - y) at the selected action, 0 elsewhere.
        let mut delta = vec![0.0f32; net.output_dim()];
        delta[sample.action] = 2.0 * err;

        for li in (0..n_layers).rev() {
            let layer = &net.layers[li];
            let input = &acts[li];
            let gl = &mut grad.layers[li];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                gl.d_biases[o] += d;
                let row = &mut gl.d_weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (gw, x) in row.iter_mut().zip(input) {
                    *gw += d * x;
                }
            }
            if li == 0 {
                break;
            }
            // Propagate: delta_prev = Wᵀ delta, masked by ReLU'(post-act).
            // Post-activation > 0 iff pre-activation > 0, so the cached
            // post-activations carry the mask.
            let mut prev = vec![0.0f32; layer.in_dim];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            for (p, &a) in prev.iter_mut().zip(&acts[li]) {
                if a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }

    if !loss.is_finite() || !grad.is_finite() {
        return Err(Error::Numerical("non-finite TD loss or gradient".into()));
    }
    Ok((loss, grad))
}

/// Whether layer biases are quantized into the same code/memory image as
/// the weights (they share the SRAM) or kept at full precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BiasMode {
    #[default]
    Quantized,
    FullPrecision,
}

/// Symmetric signed 8-bit quantization of one layer.
///
/// scale = max|v| / 127 over the quantized values (weights, plus biases in
/// `BiasMode::Quantized`); 1.0 when all values are zero. Codes are
/// round-half-away-from-zero(v / scale) clamped to [−127, 127]; −128 is
/// never produced by quantization (it stays reachable through bit faults)
/// so the code space is symmetric under negation.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Weight codes row-major, then bias codes (if biases are quantized).
    pub codes: Vec<i8>,
    pub scale: f32,
    /// Full-precision biases carried through when not quantized.
    pub raw_biases: Option<Vec<f32>>,
}

impl QuantizedLayer {
    pub fn quantize(layer: &DenseLayer, bias_mode: BiasMode) -> QuantizedLayer {
        let bias_vals: &[f32] = match bias_mode {
            BiasMode::Quantized => &layer.biases,
            BiasMode::FullPrecision => &[],
        };
        let max_abs = layer
            .weights
            .iter()
            .chain(bias_vals)
            .fold(0.0f32, |m, &v| m.max(v.abs()));
        let scale = if max_abs == 0.0 { 1.0 } else { max_abs / 127.0 };

        let mut codes = Vec::with_capacity(layer.weights.len() + bias_vals.len());
        for &v in layer.weights.iter().chain(bias_vals) {
            // f32::round rounds half away from zero, the contract here.
            let c = (v / scale).round() as i32;
            codes.push(c.clamp(-127, 127) as i8);
        }
        QuantizedLayer {
            in_dim: layer.in_dim,
            out_dim: layer.out_dim,
            codes,
            scale,
            raw_biases: match bias_mode {
                BiasMode::Quantized => None,
                BiasMode::FullPrecision => Some(layer.biases.clone()),
            },
        }
    }

    /// v = code × scale; shapes restored from the stored dimensions.
    pub fn dequantize(&self) -> DenseLayer {
        let w_count = self.in_dim * self.out_dim;
        let weights = self.codes[..w_count]
            .iter()
            .map(|&c| c as f32 * self.scale)
            .collect();
        let biases = match &self.raw_biases {
            Some(b) => b.clone(),
            None => self.codes[w_count..]
                .iter()
                .map(|&c| c as f32 * self.scale)
                .collect(),
        };
        DenseLayer {
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            weights,
            biases,
        }
    }
}

/// Quantized view of a whole network. The concatenation of all layers'
/// codes, in layer order, is the linear memory image fault maps address.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedNetwork {
    pub arch: Vec<usize>,
    pub layers: Vec<QuantizedLayer>,
    pub seed: u64,
}

impl QuantizedNetwork {
    pub fn quantize(net: &QNetwork, bias_mode: BiasMode) -> QuantizedNetwork {
        QuantizedNetwork {
            arch: net.arch.clone(),
            layers: net
                .layers
                .iter()
                .map(|l| QuantizedLayer::quantize(l, bias_mode))
                .collect(),
            seed: net.seed,
        }
    }

    pub fn dequantize(&self) -> QNetwork {
        QNetwork {
            arch: self.arch.clone(),
            layers: self.layers.iter().map(|l| l.dequantize()).collect(),
            seed: self.seed,
        }
    }

    /// Total 8-bit codes in the memory image.
    pub fn code_count(&self) -> usize {
        self.layers.iter().map(|l| l.codes.len()).sum()
    }
}
