use dbq_core::autodiff::*;
use dbq_core::rng::{purpose, CounterRng};
use dbq_core::stats::loglog_slope;
use proptest::prelude::*;

const ACTS: [Activation; 3] = [Activation::Tanh, Activation::Sigmoid, Activation::Relu];

/// Random depth, widths and activations; parameters iid `N(0, 1)`.
fn random_net(rng: &mut CounterRng) -> FeedForwardNet {
    let depth = 2 + rng.below(3);
    let sizes: Vec<usize> = (0..depth).map(|_| 1 + rng.below(6)).collect();
    let mut acts: Vec<Activation> = (0..depth - 2).map(|_| ACTS[rng.below(3)]).collect();
    acts.push(Activation::Identity);
    FeedForwardNet::random_normal(&sizes, &acts, 1.0, rng).unwrap()
}

fn normal_vec(n: usize, rng: &mut CounterRng) -> Vec<f64> {
    let mut v = vec![0.0; n];
    rng.fill_normal(&mut v);
    v
}

#[test]
fn forward_and_reverse_agree_on_random_nets() {
    let mut worst = 0.0f64;
    for i in 0..10_000u64 {
        let mut rng = CounterRng::new(1, purpose::TEST, i, 0);
        let net = random_net(&mut rng);
        let x = normal_vec(net.input_dim(), &mut rng);
        let v = ParamVector::new(normal_vec(net.n_params(), &mut rng));
        let loss = SquaredError(normal_vec(net.output_dim(), &mut rng));
        let (c, jvp) = forward_directional(&net, &x, &v, &loss).unwrap();
        let g = reverse_gradient(&net, &x, &loss).unwrap();
        worst = worst.max((jvp - g.dot(&v)).abs() / (1.0 + jvp.abs()));
        assert_eq!(c, loss.value(&forward_eval(&net, &x).unwrap()));
    }
    assert!(worst <= 1e-10, "worst relative disagreement {worst}");
}

#[test]
fn both_modes_converge_quadratically_in_h() {
    let mut rng = CounterRng::new(2, purpose::TEST, 0, 0);
    let net = FeedForwardNet::random_normal(
        &[3, 5, 4, 2],
        &[Activation::Tanh, Activation::Sigmoid, Activation::Identity],
        1.0,
        &mut rng,
    )
    .unwrap();
    let x = normal_vec(3, &mut rng);
    let v = normal_vec(net.n_params(), &mut rng);
    let loss = SquaredError(vec![0.3, -0.7]);
    let theta = net.params().values;
    let cost = |s: f64| {
        let p: Vec<f64> = theta.iter().zip(&v).map(|(t, vi)| t + s * vi).collect();
        let n = FeedForwardNet::from_params(net.layer_sizes(), &net.activations(), &ParamVector::new(p)).unwrap();
        loss.value(&n.forward(&x).unwrap())
    };
    let (_, jvp) = forward_directional(&net, &x, &ParamVector::new(v.clone()), &loss).unwrap();
    let rev = reverse_gradient(&net, &x, &loss).unwrap().dot(&ParamVector::new(v.clone()));
    let hs = [1e-2, 1e-3, 1e-4, 1e-5];
    for exact in [jvp, rev] {
        let errs: Vec<f64> = hs.iter().map(|&h| ((cost(h) - cost(-h)) / (2.0 * h) - exact).abs()).collect();
        let slope = loglog_slope(&hs, &errs);
        assert!((slope - 2.0).abs() <= 0.2, "slope {slope}, errors {errs:?}");
    }
}

#[test]
fn toy_network_matches_expanded_directional_derivative() {
    // Two inputs, two tanh hidden units, one output, no biases; C = a₂².
    let (w1, w2) = ([0.3, -0.8, 1.1, 0.4], [0.9, -0.5]);
    let x = [0.7, -1.2];
    let mut params = w1.to_vec();
    params.extend([0.0, 0.0]);
    params.extend(w2);
    params.push(0.0);
    let net = FeedForwardNet::from_params(
        &[2, 2, 1],
        &[Activation::Tanh, Activation::Identity],
        &ParamVector::new(params),
    )
    .unwrap();
    let f = |a: f64| a.tanh();
    let fp = |a: f64| 1.0 - a.tanh().powi(2);
    let a11 = x[0] * w1[0] + x[1] * w1[1];
    let a12 = x[0] * w1[2] + x[1] * w1[3];
    let a2 = f(a11) * w2[0] + f(a12) * w2[1];
    let loss_prime = 2.0 * a2;
    let mut rng = CounterRng::new(3, purpose::TEST, 0, 0);
    for _ in 0..20 {
        let v1 = normal_vec(4, &mut rng);
        let v2 = normal_vec(2, &mut rng);
        let expanded = loss_prime
            * (fp(a11) * (x[0] * v1[0] + x[1] * v1[1]) * w2[0]
                + f(a11) * v2[0]
                + fp(a12) * (x[0] * v1[2] + x[1] * v1[3]) * w2[1]
                + f(a12) * v2[1]);
        let mut v = v1.clone();
        v.extend([0.0, 0.0]);
        v.extend(&v2);
        v.push(0.0);
        let v = ParamVector::new(v);
        let loss = SquaredError(vec![0.0]);
        let (c, jvp) = forward_directional(&net, &x, &v, &loss).unwrap();
        assert!((c - a2 * a2).abs() < 1e-15);
        assert!((jvp - expanded).abs() <= 1e-13, "{jvp} vs {expanded}");
        let g = reverse_gradient(&net, &x, &loss).unwrap();
        assert!((g.dot(&v) - expanded).abs() <= 1e-13);
    }
}

#[test]
fn lipschitz_bound_dominates_sampled_ratios() {
    let mut rng = CounterRng::new(4, purpose::TEST, 0, 0);
    let net = FeedForwardNet::random_normal(
        &[3, 6, 6, 2],
        &[Activation::Tanh, Activation::Relu, Activation::Identity],
        0.8,
        &mut rng,
    )
    .unwrap();
    let l = lipschitz_bound(&net).unwrap();
    let f0 = net.forward(&[0.0; 3]).unwrap();
    let f0_sq: f64 = f0.iter().map(|v| v * v).sum();
    let mut max_ratio = 0.0f64;
    for _ in 0..10_000 {
        let x = normal_vec(3, &mut rng);
        let y = normal_vec(3, &mut rng);
        let (fx, fy) = (net.forward(&x).unwrap(), net.forward(&y).unwrap());
        let num: f64 = fx.iter().zip(&fy).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        max_ratio = max_ratio.max(num / den);
        // Growth bound in the squared convention: ‖f(X)‖² ≤ (L² + ‖f(0)‖²)(1 + ‖X‖²).
        let fx_sq: f64 = fx.iter().map(|v| v * v).sum();
        let x_sq: f64 = x.iter().map(|v| v * v).sum();
        assert!(fx_sq <= (l * l + f0_sq) * (1.0 + x_sq));
    }
    assert!(l >= max_ratio, "{l} < {max_ratio}");
}

proptest! {
    #[test]
    fn param_count_matches_traversal(sizes in prop::collection::vec(1usize..9, 2..6)) {
        // One bias per source neuron: visit each source neuron's outgoing weights and its bias.
        let visited: usize = sizes.windows(2).map(|w| (0..w[0]).map(|_| w[1] + 1).sum::<usize>()).sum();
        prop_assert_eq!(param_count(&sizes).unwrap(), visited);
        let acts = vec![Activation::Identity; sizes.len() - 1];
        let net = FeedForwardNet::zeros(&sizes, &acts).unwrap();
        prop_assert_eq!(stored_param_count(&sizes).unwrap(), net.params().len());
    }

    #[test]
    fn sgd_steps_compose_linearly(seed in 0u64..1000, eta in 0.01f64..1.0) {
        let mut rng = CounterRng::new(seed, purpose::TEST, 0, 0);
        let net = FeedForwardNet::random_normal(&[2, 3, 1], &[Activation::Tanh, Activation::Identity], 1.0, &mut rng).unwrap();
        let g1 = ParamVector::new(normal_vec(net.n_params(), &mut rng));
        let g2 = ParamVector::new(normal_vec(net.n_params(), &mut rng));
        let two = apply_sgd(&apply_sgd(&net, &g1, eta).unwrap(), &g2, eta).unwrap();
        let sum = ParamVector::new(g1.values.iter().zip(&g2.values).map(|(a, b)| a + b).collect());
        let one = apply_sgd(&net, &sum, eta).unwrap();
        for (a, b) in two.params().values.iter().zip(&one.params().values) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }
}
