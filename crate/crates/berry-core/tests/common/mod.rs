//! Shared test oracles, independent of the library's own math paths.

use berry_core::qnet::{Gradient, QNetwork, TdSample};

/// One owned regression sample: (state, action, target).
pub type OwnedSample = (Vec<f32>, usize, f32);

pub fn as_td_batch(samples: &[OwnedSample]) -> Vec<TdSample<'_>> {
    samples
        .iter()
        .map(|(s, a, y)| TdSample {
            state: s,
            action: *a,
            target: *y,
        })
        .collect()
}

/// Reference forward pass in f64 (parameters converted exactly from f32).
pub fn forward_f64(net: &QNetwork, state: &[f32]) -> Vec<f64> {
    let mut act: Vec<f64> = state.iter().map(|&x| x as f64).collect();
    let last = net.layers.len() - 1;
    for (li, layer) in net.layers.iter().enumerate() {
        let mut out: Vec<f64> = layer.biases.iter().map(|&b| b as f64).collect();
        for (o, out_v) in out.iter_mut().enumerate() {
            let mut acc = 0.0f64;
            for i in 0..layer.in_dim {
                acc += layer.weights[o * layer.in_dim + i] as f64 * act[i];
            }
            *out_v += acc;
        }
        if li != last {
            for z in out.iter_mut() {
                if *z < 0.0 {
                    *z = 0.0;
                }
            }
        }
        act = out;
    }
    act
}

/// Batch-sum TD loss recomputed in f64.
pub fn loss_f64(net: &QNetwork, samples: &[OwnedSample]) -> f64 {
    samples
        .iter()
        .map(|(s, a, y)| {
            let q = forward_f64(net, s);
            let d = q[*a] - *y as f64;
            d * d
        })
        .sum()
}

/// Smallest |hidden preactivation| over the batch. Finite differences
/// are only valid away from ReLU kinks, so callers skip nets where this
/// is tiny.
pub fn min_hidden_preact(net: &QNetwork, samples: &[OwnedSample]) -> f64 {
    let mut min = f64::INFINITY;
    for (s, _, _) in samples {
        let mut act: Vec<f64> = s.iter().map(|&x| x as f64).collect();
        let last = net.layers.len() - 1;
        for (li, layer) in net.layers.iter().enumerate() {
            let mut out: Vec<f64> = layer.biases.iter().map(|&b| b as f64).collect();
            for (o, out_v) in out.iter_mut().enumerate() {
                let mut acc = 0.0f64;
                for i in 0..layer.in_dim {
                    acc += layer.weights[o * layer.in_dim + i] as f64 * act[i];
                }
                *out_v += acc;
            }
            if li != last {
                for z in out.iter_mut() {
                    min = min.min(z.abs());
                    if *z < 0.0 {
                        *z = 0.0;
                    }
                }
            }
            act = out;
        }
    }
    min
}

/// Central-difference gradient of the f64 loss, using the actually
/// representable f32 steps. On a fixed ReLU branch the loss is piecewise
/// quadratic per parameter, so central differences are exact up to
/// rounding.
pub fn fd_gradient(net: &QNetwork, samples: &[OwnedSample], h: f32) -> Gradient {
    let mut g = Gradient::zeros_like(net);
    for li in 0..net.layers.len() {
        for wi in 0..net.layers[li].weights.len() {
            let orig = net.layers[li].weights[wi];
            let mut plus = net.clone();
            plus.layers[li].weights[wi] = orig + h;
            let mut minus = net.clone();
            minus.layers[li].weights[wi] = orig - h;
            let span = plus.layers[li].weights[wi] as f64 - minus.layers[li].weights[wi] as f64;
            g.layers[li].d_weights[wi] =
                ((loss_f64(&plus, samples) - loss_f64(&minus, samples)) / span) as f32;
        }
        for bi in 0..net.layers[li].biases.len() {
            let orig = net.layers[li].biases[bi];
            let mut plus = net.clone();
            plus.layers[li].biases[bi] = orig + h;
            let mut minus = net.clone();
            minus.layers[li].biases[bi] = orig - h;
            let span = plus.layers[li].biases[bi] as f64 - minus.layers[li].biases[bi] as f64;
            g.layers[li].d_biases[bi] =
                ((loss_f64(&plus, samples) - loss_f64(&minus, samples)) / span) as f32;
        }
    }
    g
}

/// Asserts two gradients agree elementwise within rel 1e-4 (abs floor
/// 1e-6).
pub fn assert_gradients_close(analytic: &Gradient, fd: &Gradient, context: &str) {
    assert_eq!(analytic.layers.len(), fd.layers.len());
    for (li, (a, b)) in analytic.layers.iter().zip(&fd.layers).enumerate() {
        for (i, (x, y)) in a.d_weights.iter().zip(&b.d_weights).enumerate() {
            let tol = 1e-6f32.max(1e-4 * x.abs().max(y.abs()));
            assert!(
                (x - y).abs() <= tol,
                "{context}: d_weights[{li}][{i}] analytic {x} vs fd {y}"
            );
        }
        for (i, (x, y)) in a.d_biases.iter().zip(&b.d_biases).enumerate() {
            let tol = 1e-6f32.max(1e-4 * x.abs().max(y.abs()));
            assert!(
                (x - y).abs() <= tol,
                "{context}: d_biases[{li}][{i}] analytic {x} vs fd {y}"
            );
        }
    }
}
