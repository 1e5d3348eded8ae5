//! The analytic TD gradient must match central finite differences of an
//! independently written f64 loss.

mod common;

use berry_core::qnet::{td_gradient, QNetwork};
use berry_core::rng::SimRng;
use common::{
    as_td_batch, assert_gradients_close, fd_gradient, loss_f64, min_hidden_preact, OwnedSample,
};

fn random_batch(rng: &mut SimRng, in_dim: usize, out_dim: usize, n: usize) -> Vec<OwnedSample> {
    (0..n)
        .map(|_| {
            let state: Vec<f32> = (0..in_dim).map(|_| 2.0 * rng.next_f32() - 1.0).collect();
            let action = rng.gen_index(out_dim);
            let target = 4.0 * rng.next_f32() - 2.0;
            (state, action, target)
        })
        .collect()
}

/// Finds a (net, batch) pair whose hidden preactivations all sit safely
/// away from the ReLU kink, so the finite-difference window never
/// crosses a branch.
fn safe_case(arch: &[usize], batch_n: usize, base_seed: u64) -> (QNetwork, Vec<OwnedSample>) {
    for attempt in 0..200 {
        let seed = base_seed.wrapping_add(attempt);
        let net = QNetwork::init(arch, seed).unwrap();
        let mut rng = SimRng::new(seed ^ 0xabcd);
        let batch = random_batch(&mut rng, arch[0], *arch.last().unwrap(), batch_n);
        if min_hidden_preact(&net, &batch) > 5e-3 {
            return (net, batch);
        }
    }
    panic!("no kink-safe test case found for {arch:?}");
}

#[test]
fn gradient_matches_finite_differences_across_shapes() {
    let cases: &[(&[usize], usize)] = &[
        (&[3, 5, 2], 1),
        (&[3, 5, 2], 6),
        (&[4, 8, 8, 3], 5),
        (&[2, 4, 4, 4, 2], 7),
        (&[6, 1, 3], 4),
    ];
    for &(arch, n) in cases {
        let (net, samples) = safe_case(arch, n, 1000 + n as u64);
        let batch = as_td_batch(&samples);
        let (loss, analytic) = td_gradient(&net, &batch).unwrap();
        let reference = loss_f64(&net, &samples);
        let tol = 1e-6f64.max(1e-5 * reference.abs());
        assert!(
            (loss - reference).abs() <= tol,
            "loss {loss} vs reference {reference} for {arch:?}"
        );
        let fd = fd_gradient(&net, &samples, 1e-3);
        assert_gradients_close(&analytic, &fd, &format!("{arch:?} batch {n}"));
    }
}

#[test]
fn gradient_of_repeated_sample_scales_linearly() {
    let (net, samples) = safe_case(&[4, 6, 3], 1, 77);
    let tripled: Vec<OwnedSample> = vec![samples[0].clone(); 3];
    let (l1, g1) = td_gradient(&net, &as_td_batch(&samples)).unwrap();
    let (l3, g3) = td_gradient(&net, &as_td_batch(&tripled)).unwrap();
    assert!((l3 - 3.0 * l1).abs() <= 1e-9f64.max(1e-6 * l1.abs()));
    for (a, b) in g1.layers.iter().zip(&g3.layers) {
        for (x, y) in a.d_weights.iter().zip(&b.d_weights) {
            assert!((3.0 * x - y).abs() <= 1e-6f32.max(1e-5 * y.abs()));
        }
        for (x, y) in a.d_biases.iter().zip(&b.d_biases) {
            assert!((3.0 * x - y).abs() <= 1e-6f32.max(1e-5 * y.abs()));
        }
    }
}

#[test]
fn gradient_is_zero_when_targets_equal_predictions() {
    let (net, mut samples) = safe_case(&[3, 6, 4], 5, 11);
    for (s, a, y) in samples.iter_mut() {
        *y = net.forward(s).unwrap()[*a];
    }
    let (loss, g) = td_gradient(&net, &as_td_batch(&samples)).unwrap();
    assert!(loss.abs() < 1e-10, "loss {loss}");
    for l in &g.layers {
        for &x in l.d_weights.iter().chain(&l.d_biases) {
            assert!(x.abs() < 1e-4, "residual gradient {x}");
        }
    }
}

#[test]
fn gradient_update_descends_the_loss() {
    let (net, samples) = safe_case(&[5, 8, 3], 6, 321);
    let batch = as_td_batch(&samples);
    let (before, g) = td_gradient(&net, &batch).unwrap();
    let stepped = net.apply_update(&g, None, 1e-3).unwrap();
    let after = loss_f64(&stepped, &samples);
    assert!(
        after < before,
        "gradient step should reduce the loss: {before} -> {after}"
    );
}
