mod common;

use common::{build_case, random_spec, rel_dev, spike_count, CaseSpec, KernelKind};
use ndarray::{array, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spikegrad::forward::{forward_network, DenseLayer, Mode, Network, SpikeTrain};
use spikegrad::grad::exodus::{backward_network_exodus_signals, exodus_dz, sigma_srm};
use spikegrad::grad::{backward_network_bptt_with, BpttOptions, Engine};
use spikegrad::neuron::{LifParams, SrmKernels, SurrogateFamily, SurrogateSpec};
use spikegrad::oracle::ift::{build_ift_jacobians, dense_from_sigma, max_abs_diff, solve_ift_dense};
use spikegrad::signal::CausalKernel;
use spikegrad::train::{LossGrad, LossGradKind};

fn all_engines(case: &common::Case) -> Vec<spikegrad::grad::GradientReport> {
    Engine::ALL
        .iter()
        .map(|e| e.backward(&case.net, &case.trace, &case.loss_grad).unwrap())
        .collect()
}

#[test]
fn exodus_matches_bptt_on_random_networks() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..60 {
        let case = build_case(random_spec(&mut rng, 3, 8, 48), &mut rng);
        let ex = Engine::Exodus.backward(&case.net, &case.trace, &case.loss_grad).unwrap();
        let bp = Engine::Bptt.backward(&case.net, &case.trace, &case.loss_grad).unwrap();
        let dev = ex.max_rel_deviation(&bp);
        assert!(dev <= 1e-9, "deviation {dev:e} for {:?}", case.spec);
    }
}

#[test]
fn single_step_engines_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..20 {
        let mut spec = random_spec(&mut rng, 3, 6, 1);
        spec.steps = 1;
        let case = build_case(spec, &mut rng);
        let r = all_engines(&case);
        assert!(r[0].max_rel_deviation(&r[1]) <= 1e-12);
        assert!(r[2].max_rel_deviation(&r[0]) <= 1e-12);
    }
}

#[test]
fn single_layer_single_step_gradient() {
    // dL/dW = d[0] ⊗ a_in[0], d[0] = f'(u[0]) · g[0]
    let p = LifParams::from_alpha(0.8, 1.0, 1e-3).unwrap();
    let sg = SurrogateSpec::new(SurrogateFamily::Exponential, 0.5, 1.0, 1.0).unwrap();
    let layer = DenseLayer::new(array![[0.7, 0.6]], SrmKernels::lif(p), sg).unwrap();
    let net = Network::new(vec![layer]).unwrap();
    let input = SpikeTrain::new(array![[1.0], [1.0]], 1e-3).unwrap();
    let trace = forward_network(&net, &input, Mode::Hard).unwrap();
    let g = LossGrad::filtered(array![[2.0]]);
    let u = 1.3;
    let fp = (-(u - 1.0f64).abs() / 0.5).exp() / (2.0 * 0.5);
    for e in Engine::ALL {
        let r = e.backward(&net, &trace, &g).unwrap();
        for v in r.weight_grads[0].iter() {
            assert!((v - 2.0 * fp).abs() < 1e-14, "{e}");
        }
    }
}

#[test]
fn reset_free_kernels_make_exodus_equal_slayer() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for _ in 0..30 {
        let spec = CaseSpec { kernel: KernelKind::Fir, ..random_spec(&mut rng, 3, 6, 32) };
        let mut case = build_case(spec, &mut rng);
        let layers: Vec<DenseLayer> = case
            .net
            .layers()
            .iter()
            .map(|l| DenseLayer { kernels: l.kernels.without_reset(case.spec.steps), ..l.clone() })
            .collect();
        case.net = Network::new(layers).unwrap();
        case.trace = forward_network(&case.net, &case.input, Mode::Hard).unwrap();
        let r = all_engines(&case);
        assert!(rel_dev(&r[0].weight_grads, &r[1].weight_grads) <= 1e-12);
        assert!(rel_dev(&r[2].weight_grads, &r[1].weight_grads) <= 1e-12);
    }
}

#[test]
fn bptt_without_reset_edges_is_slayer() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    for _ in 0..40 {
        let case = build_case(random_spec(&mut rng, 3, 8, 48), &mut rng);
        let sl = Engine::Slayer.backward(&case.net, &case.trace, &case.loss_grad).unwrap();
        let bp = backward_network_bptt_with(&case.net, &case.trace, &case.loss_grad, BpttOptions { reset_edges: false })
            .unwrap();
        assert!(bp.max_rel_deviation(&sl) <= 1e-12, "{:?}", case.spec);
    }
}

#[test]
fn silent_network_still_couples_through_the_reset() {
    // No spikes anywhere, yet ds/dz carries f'[m]·nu·f'[k] cross terms, so
    // the reset-free rule differs while BPTT still matches EXODUS.
    let p = LifParams::from_alpha(0.9, 1.0, 1e-3).unwrap();
    let sg = SurrogateSpec::new(SurrogateFamily::SigmoidDerivative, 0.5, 1.0, 1.0).unwrap();
    let layer = DenseLayer::new(array![[0.05, 0.03]], SrmKernels::lif(p), sg).unwrap();
    let net = Network::new(vec![layer]).unwrap();
    let input = SpikeTrain::new(Array2::ones((2, 15)), 1e-3).unwrap();
    let trace = forward_network(&net, &input, Mode::Hard).unwrap();
    assert_eq!(spike_count(&trace), 0.0);
    let g = LossGrad::raw(Array2::ones((1, 15)));
    let r: Vec<_> = Engine::ALL.iter().map(|e| e.backward(&net, &trace, &g).unwrap()).collect();
    assert!(r[1].max_rel_deviation(&r[0]) > 1e-3);
    assert!(r[2].max_rel_deviation(&r[0]) <= 1e-12);
}

#[test]
fn vanishing_surrogate_makes_slayer_exact() {
    // Piecewise-linear surrogate with every potential outside its support:
    // f' = 0 except where the reset loop cannot reach.
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    for _ in 0..10 {
        let spec = CaseSpec { family: SurrogateFamily::PiecewiseLinear, ..random_spec(&mut rng, 2, 5, 24) };
        let mut case = build_case(spec, &mut rng);
        for layer in case.net.layers_mut() {
            layer.weights.mapv_inplace(|w| -w.abs());
        }
        case.trace = forward_network(&case.net, &case.input, Mode::Hard).unwrap();
        let r = all_engines(&case);
        assert!(r[1].max_rel_deviation(&r[0]) <= 1e-12);
        assert!(r[2].max_rel_deviation(&r[0]) <= 1e-12);
    }
}

#[test]
fn slayer_diverges_on_a_spiking_lif_neuron() {
    // One neuron, steady drive, fires repeatedly; the reset loop matters.
    let p = LifParams::from_alpha(0.9, 1.0, 1e-3).unwrap();
    let sg = SurrogateSpec::new(SurrogateFamily::Exponential, 0.5, 1.0, 1.0).unwrap();
    let layer = DenseLayer::new(array![[0.6]], SrmKernels::lif(p), sg).unwrap();
    let net = Network::new(vec![layer]).unwrap();
    let input = SpikeTrain::new(Array2::ones((1, 20)), 1e-3).unwrap();
    let trace = forward_network(&net, &input, Mode::Hard).unwrap();
    assert!(trace.output_spikes().sum() >= 1.0);
    let g = LossGrad::filtered(Array2::ones((1, 20)));
    let ex = Engine::Exodus.backward(&net, &trace, &g).unwrap();
    let sl = Engine::Slayer.backward(&net, &trace, &g).unwrap();
    assert!(sl.max_rel_deviation(&ex) > 1e-3);
}

#[test]
fn loss_gradient_linearity() {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    for _ in 0..20 {
        let case = build_case(random_spec(&mut rng, 3, 6, 32), &mut rng);
        let split = case.loss_grad.values.mapv(|_| rng.random_range(-1.0..1.0));
        let a = LossGrad { kind: case.loss_grad.kind, values: split.clone() };
        let b = LossGrad { kind: case.loss_grad.kind, values: &case.loss_grad.values - &split };
        for e in Engine::ALL {
            let full = e.backward(&case.net, &case.trace, &case.loss_grad).unwrap();
            let mut sum = e.backward(&case.net, &case.trace, &a).unwrap();
            sum.accumulate(&e.backward(&case.net, &case.trace, &b).unwrap());
            assert!(sum.max_rel_deviation(&full) <= 1e-10, "{e}");
        }
    }
}

#[test]
fn raw_spike_losses_skip_the_output_filter() {
    // A RawSpikes gradient g equals a FilteredOutput gradient e with g = epsilon ⊙ e.
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    for _ in 0..10 {
        let spec = CaseSpec { kind: LossGradKind::FilteredOutput, ..random_spec(&mut rng, 2, 5, 24) };
        let case = build_case(spec, &mut rng);
        let raw = LossGrad::raw(case.net.last().kernels.filter_adjoint(case.loss_grad.values.view()));
        for e in Engine::ALL {
            let a = e.backward(&case.net, &case.trace, &case.loss_grad).unwrap();
            let b = e.backward(&case.net, &case.trace, &raw).unwrap();
            assert!(b.max_rel_deviation(&a) <= 1e-12, "{e}");
        }
    }
}

#[test]
fn exodus_d_matches_dense_ift_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    for kernel in common::KERNEL_KINDS {
        let spec = CaseSpec {
            widths: vec![3, 1],
            steps: 3,
            kernel,
            family: SurrogateFamily::TanhDerivative,
            scale: 1.0,
            kind: LossGradKind::RawSpikes,
            mode: Mode::Hard,
        };
        let case = build_case(spec, &mut rng);
        let layer = &case.net.layers()[0];
        let tr = &case.trace.layers[0];
        let dense = solve_ift_dense(&build_ift_jacobians(tr, &layer.kernels, &layer.surrogate).unwrap()).unwrap();
        let p = &case.loss_grad.values;
        let fp = tr.surrogate_grads(&layer.surrogate);
        let d = exodus_dz(&layer.kernels, &fp, p);
        for n in 0..3 {
            let expected: f64 = (0..3).map(|m| p[[0, m]] * dense[(m, n)]).sum();
            assert!((d[[0, n]] - expected).abs() <= 1e-12 * expected.abs().max(1.0));
        }
        let sigma = sigma_srm(tr, &layer.kernels, &layer.surrogate);
        assert!(max_abs_diff(&dense_from_sigma(&sigma), &dense) <= 1e-12);
        let signals = backward_network_exodus_signals(&case.net, &case.trace, &case.loss_grad).unwrap();
        assert!(rel_dev(&[signals.signals.unwrap()[0].d.clone()], &[d]) <= 1e-14);
    }
}

#[test]
fn repeated_backward_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let case = build_case(random_spec(&mut rng, 3, 8, 40), &mut rng);
    for e in Engine::ALL {
        let a = e.backward(&case.net, &case.trace, &case.loss_grad).unwrap();
        let b = e.backward(&case.net, &case.trace, &case.loss_grad).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn mismatched_shapes_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let case = build_case(random_spec(&mut rng, 2, 4, 10), &mut rng);
    let wrong = LossGrad::filtered(Array2::zeros((case.net.outputs() + 1, case.spec.steps)));
    for e in Engine::ALL {
        assert!(e.backward(&case.net, &case.trace, &wrong).is_err());
    }
}

#[test]
fn zero_scale_gives_zero_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(110);
    let mut case = build_case(random_spec(&mut rng, 3, 6, 20), &mut rng);
    for l in case.net.layers_mut() {
        l.surrogate.scale = 0.0;
    }
    for e in Engine::ALL {
        let r = e.backward(&case.net, &case.trace, &case.loss_grad).unwrap();
        assert!(r.layer_grad_norms.iter().all(|&n| n == 0.0));
    }
}

#[test]
fn identity_reset_kernel_layouts() {
    // nu with a leading zero tap delays the reset by one extra step; both
    // engines must agree on it as on any other kernel.
    let mut rng = ChaCha8Rng::seed_from_u64(111);
    let sg = SurrogateSpec::new(SurrogateFamily::PiecewiseLinear, 0.8, 1.0, 1.0).unwrap();
    let k = SrmKernels::fir(CausalKernel::new(vec![1.0, 0.5]).unwrap(), CausalKernel::new(vec![0.0, -1.0]).unwrap());
    let w = Array2::from_shape_simple_fn((3, 4), || rng.random_range(0.0..1.0));
    let net = Network::new(vec![DenseLayer::new(w, k, sg).unwrap()]).unwrap();
    let input = SpikeTrain::new(Array2::from_shape_simple_fn((4, 30), || rng.random_range(0..2) as f64), 1e-3).unwrap();
    let trace = forward_network(&net, &input, Mode::Hard).unwrap();
    let g = LossGrad::raw(Array2::from_shape_simple_fn((3, 30), || rng.random_range(-1.0..1.0)));
    let ex = Engine::Exodus.backward(&net, &trace, &g).unwrap();
    let bp = Engine::Bptt.backward(&net, &trace, &g).unwrap();
    assert!(ex.max_rel_deviation(&bp) <= 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn equivalence_property(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let case = build_case(random_spec(&mut rng, 3, 8, 64), &mut rng);
        let ex = Engine::Exodus.backward(&case.net, &case.trace, &case.loss_grad).unwrap();
        let bp = Engine::Bptt.backward(&case.net, &case.trace, &case.loss_grad).unwrap();
        prop_assert!(ex.is_finite());
        prop_assert!(ex.max_rel_deviation(&bp) <= 1e-9);
    }
}

#[test]
fn lif_if_alpha_one_is_supported() {
    let p = LifParams::new(f64::INFINITY, 1e-3, 1.0).unwrap();
    assert_eq!(p.alpha(), 1.0);
}
