//! Voltage→BER→energy curve, persistent fault-map generation, and the
//! bit-error operator that corrupts a quantized network.
//!
//! Fault model: a fault map assigns stuck values to bit addresses of the
//! network's 8-bit code image. Stuck-at semantics (the cell always reads
//! its stuck value) model persistent low-voltage SRAM failures; on random
//! data a stuck cell disagrees with the written bit half the time, so the
//! observed flip rate is ≈ p/2. An XOR-flip mode is available where the
//! map entries should be read as guaranteed flips instead.

pub mod curve;
pub mod inject;
pub mod map;

pub use curve::{CurvePoint, VoltageCurve};
pub use inject::{apply_fault_map, apply_to_codes, FaultSemantics};
pub use map::{FaultEntry, FaultMap, FaultSource, MemoryLayout};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::qnet::{BiasMode, QNetwork, QuantizedNetwork};
use crate::rng::derive_seed2;

/// How the bit-error operator quantizes and corrupts a network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BerrConfig {
    pub semantics: FaultSemantics,
    pub bias_mode: BiasMode,
    /// Bits per memory row; only the column geometry depends on it.
    pub cols: usize,
    /// P(stuck value = 1) when sampling maps.
    pub stuck_bias: f64,
}

impl Default for BerrConfig {
    fn default() -> Self {
        BerrConfig {
            semantics: FaultSemantics::StuckAt,
            bias_mode: BiasMode::Quantized,
            cols: 64,
            stuck_bias: 0.5,
        }
    }
}

/// Memory layout that holds the network's quantized code image at
/// `cols` bits per row (rows padded up).
pub fn layout_for(net: &QNetwork, bias_mode: BiasMode, cols: usize) -> Result<MemoryLayout> {
    let q = QuantizedNetwork::quantize(net, bias_mode);
    MemoryLayout::for_codes(q.code_count(), cols)
}

/// BErr with a fixed map (on-device mode): quantize → corrupt → dequantize.
/// Pure; θ is never modified.
pub fn berr_with_map(
    net: &QNetwork,
    layout: &MemoryLayout,
    fault_map: &FaultMap,
    cfg: &BerrConfig,
) -> Result<QNetwork> {
    let q = QuantizedNetwork::quantize(net, cfg.bias_mode);
    let corrupted = apply_fault_map(&q, layout, fault_map, cfg.semantics)?;
    Ok(corrupted.dequantize())
}

/// Which parameter coordinates a fault map actually changed, layer by
/// layer. Weights are row-major; bias flags stay false in full-precision
/// bias mode (nothing of theirs is stored in the faulty memory).
#[derive(Debug, Clone, PartialEq)]
pub struct TouchedCoords {
    pub layers: Vec<TouchedLayer>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TouchedLayer {
    pub weights: Vec<bool>,
    pub biases: Vec<bool>,
}

/// [`berr_with_map`] variant that also reports which coordinates the map
/// changed (stuck cells that already agree with the stored bit touch
/// nothing). Training uses the flags to mask gradient components at
/// corrupted coordinates: the stored code there no longer responds to the
/// underlying parameter, so those components carry no signal.
pub fn berr_with_map_tracked(
    net: &QNetwork,
    layout: &MemoryLayout,
    fault_map: &FaultMap,
    cfg: &BerrConfig,
) -> Result<(QNetwork, TouchedCoords)> {
    let q = QuantizedNetwork::quantize(net, cfg.bias_mode);
    let corrupted = apply_fault_map(&q, layout, fault_map, cfg.semantics)?;
    let layers = q
        .layers
        .iter()
        .zip(&corrupted.layers)
        .map(|(cl, xl)| {
            let n_w = cl.in_dim * cl.out_dim;
            let changed: Vec<bool> =
                cl.codes.iter().zip(&xl.codes).map(|(a, b)| a != b).collect();
            let has_bias_codes = changed.len() > n_w;
            TouchedLayer {
                weights: changed[..n_w].to_vec(),
                biases: if has_bias_codes {
                    changed[n_w..].to_vec()
                } else {
                    vec![false; cl.out_dim]
                },
            }
        })
        .collect();
    Ok((corrupted.dequantize(), TouchedCoords { layers }))
}

/// BErr with a freshly sampled map at rate `p` (offline mode).
pub fn berr_sampled(net: &QNetwork, p: f64, seed: u64, cfg: &BerrConfig) -> Result<QNetwork> {
    let q = QuantizedNetwork::quantize(net, cfg.bias_mode);
    let layout = MemoryLayout::for_codes(q.code_count(), cfg.cols)?;
    let fault_map = FaultMap::sample_biased(&layout, p, cfg.stuck_bias, seed)?;
    let corrupted = apply_fault_map(&q, &layout, &fault_map, cfg.semantics)?;
    Ok(corrupted.dequantize())
}

/// Optional forward-pass hook injecting faults into hidden-layer
/// activations (quantize → fault → dequantize at each hidden output).
/// Off by default everywhere; enable per evaluation config.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationFaults {
    pub p: f64,
    pub seed: u64,
    pub semantics: FaultSemantics,
    pub cols: usize,
}

/// Forward pass with activation-fault injection. `call_tag` decorrelates
/// fault draws across forward calls (e.g. the rollout step index); the
/// per-layer map seed is derived from (seed, call_tag, layer index).
pub fn forward_with_activation_faults(
    net: &QNetwork,
    state: &[f32],
    af: &ActivationFaults,
    call_tag: u64,
) -> Result<Vec<f32>> {
    use crate::error::Error;
    if state.len() != net.input_dim() {
        return Err(Error::Shape(format!(
            "state has {} features, network expects {}",
            state.len(),
            net.input_dim()
        )));
    }
    let n_layers = net.layers.len();
    let mut act = state.to_vec();
    for (li, layer) in net.layers.iter().enumerate() {
        let mut z = vec![0.0f32; layer.out_dim];
        for (o, zv) in z.iter_mut().enumerate() {
            let mut acc = layer.biases[o];
            for (w, x) in layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim]
                .iter()
                .zip(&act)
            {
                acc += w * x;
            }
            *zv = acc;
        }
        if li != n_layers - 1 {
            for v in z.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            z = corrupt_activation_vector(&z, af, derive_seed2(af.seed, call_tag, li as u64))?;
        }
        act = z;
    }
    Ok(act)
}

/// Quantize an activation vector symmetrically (max-abs/127), inject a
/// fresh fault map over its 8·len bits, dequantize.
fn corrupt_activation_vector(values: &[f32], af: &ActivationFaults, seed: u64) -> Result<Vec<f32>> {
    let max_abs = values.iter().fold(0.0f32, |m, &v| m.max(v.abs()));
    let scale = if max_abs == 0.0 { 1.0 } else { max_abs / 127.0 };
    let mut codes: Vec<i8> = values
        .iter()
        .map(|&v| ((v / scale).round() as i32).clamp(-127, 127) as i8)
        .collect();
    let layout = MemoryLayout::for_codes(codes.len(), af.cols)?;
    let fault_map = FaultMap::sample_biased(&layout, af.p, 0.5, seed)?;
    apply_to_codes(&mut codes, &layout, &fault_map, af.semantics)?;
    Ok(codes.iter().map(|&c| c as f32 * scale).collect())
}
