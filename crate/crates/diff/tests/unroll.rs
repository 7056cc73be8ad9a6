use std::time::Instant;

use soel_core::plasticity::SoelConfig;
use soel_core::quant::quantize_weights;
use soel_core::snn::{run_network, NetworkTopology, NeuronConfig, ResetMode};
use soel_core::{BinnedSample, QuantizationScheme, RandomSource, WeightMatrix, WeightView};
use soel_diff::{
    forward_record, record_sample, DiffConfig, ForwardMode, GradCheckSetup, InnerLearning, SurrogateConfig, Tape, WeightNodes,
};

fn random_sample(inputs: usize, steps: usize, rate: f64, label: u32, src: &RandomSource) -> BinnedSample {
    let mut k = 0;
    let frames = (0..steps)
        .map(|_| {
            (0..inputs as u32)
                .filter(|_| {
                    k += 1;
                    src.uniform_at(k) < rate
                })
                .collect()
        })
        .collect();
    BinnedSample::from_frames(1, 1, inputs, frames, label).unwrap()
}

fn three_layer(reset: ResetMode, seed: u64) -> NetworkTopology {
    let r = RandomSource::new(seed, 0);
    let n = NeuronConfig {
        reset,
        ..NeuronConfig::default()
    };
    NetworkTopology::feedforward(
        vec![n; 3],
        vec![
            WeightMatrix::random_normal(24, 40, 40.0, 40.0, &r.substream(0)).unwrap(),
            WeightMatrix::random_normal(16, 24, 30.0, 40.0, &r.substream(1)).unwrap(),
            WeightMatrix::random_normal(5, 16, 30.0, 40.0, &r.substream(2)).unwrap(),
        ],
    )
    .unwrap()
}

fn full_precision() -> DiffConfig {
    DiffConfig {
        quantize: None,
        ..DiffConfig::default()
    }
}

#[test]
fn hard_forward_matches_simulator_counts() {
    for reset in [ResetMode::Hard, ResetMode::Soft] {
        let net = three_layer(reset, 3);
        let sample = random_sample(40, 100, 0.2, 0, &RandomSource::new(5, 1));
        let mut tape = Tape::new();
        let mut nodes = WeightNodes::register(&mut tape, &net, &full_precision(), &RandomSource::new(0, 0)).unwrap();
        let rec = record_sample(&mut tape, &net, &mut nodes, &sample, &full_precision(), None).unwrap();
        let sim = run_network(&net, &sample, 20, WeightView::Shadow).unwrap();
        let counts: Vec<f64> = sim.total_counts.iter().map(|&c| f64::from(c)).collect();
        assert_eq!(tape.value(rec.counts), counts.as_slice());
        assert!(counts.iter().sum::<f64>() > 0.0, "test net should be active");
    }
}

#[test]
fn quantized_forward_matches_deployed_view() {
    let mut net = three_layer(ResetMode::Hard, 4);
    let rounding = RandomSource::new(11, 3);
    let scheme = QuantizationScheme::default();
    for (k, layer) in net.layers_mut().iter_mut().enumerate() {
        quantize_weights(&mut layer.weights, &scheme, &rounding.substream(k as u64)).unwrap();
    }
    let sample = random_sample(40, 100, 0.2, 0, &RandomSource::new(6, 1));
    let cfg = DiffConfig::default();
    let mut tape = Tape::new();
    let mut nodes = WeightNodes::register(&mut tape, &net, &cfg, &rounding).unwrap();
    let rec = record_sample(&mut tape, &net, &mut nodes, &sample, &cfg, None).unwrap();
    let sim = run_network(&net, &sample, 20, WeightView::Quantized).unwrap();
    let counts: Vec<f64> = sim.total_counts.iter().map(|&c| f64::from(c)).collect();
    assert_eq!(tape.value(rec.counts), counts.as_slice());
}

#[test]
fn zero_input_gives_uniform_cross_entropy() {
    let net = three_layer(ResetMode::Hard, 1);
    let sample = BinnedSample::empty(1, 1, 40, 100, 2);
    let (tape, loss) = forward_record(&net, &[sample], &DiffConfig::default(), &RandomSource::new(0, 0)).unwrap();
    assert!((tape.scalar(loss) - 5f64.ln()).abs() < 1e-15);
}

#[test]
fn replay_reproduces_loss_bit_exactly() {
    let net = three_layer(ResetMode::Hard, 2);
    let samples: Vec<_> = (0..3)
        .map(|i| random_sample(40, 100, 0.2, i, &RandomSource::new(9, i as u64)))
        .collect();
    let (tape, loss) = forward_record(&net, &samples, &DiffConfig::default(), &RandomSource::new(1, 1)).unwrap();
    assert!(tape.replay_is_exact().unwrap());
    let values = tape.replay(None).unwrap();
    assert_eq!(values[loss.index()][0].to_bits(), tape.scalar(loss).to_bits());
}

#[test]
fn backward_reaches_every_layer() {
    let net = three_layer(ResetMode::Hard, 2);
    let samples: Vec<_> = (0..2)
        .map(|i| random_sample(40, 100, 0.2, i, &RandomSource::new(7, i as u64)))
        .collect();
    let (tape, loss) = forward_record(&net, &samples, &DiffConfig::default(), &RandomSource::new(1, 1)).unwrap();
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.grads.len(), 3);
    for (k, grad) in g.grads.iter().enumerate() {
        assert!(g.touched[k]);
        assert!(grad.iter().any(|&x| x != 0.0), "layer {k} received no gradient");
    }
    assert!(g.is_finite());
}

#[test]
fn silent_input_gets_zero_gradient() {
    let net = three_layer(ResetMode::Hard, 2);
    let mut sample = random_sample(40, 100, 0.2, 1, &RandomSource::new(7, 1));
    // input 0 never fires
    let frames: Vec<Vec<u32>> = sample
        .frames()
        .iter()
        .map(|f| f.iter().copied().filter(|&j| j != 0).collect())
        .collect();
    sample = BinnedSample::from_frames(1, 1, 40, frames, 1).unwrap();
    let (tape, loss) = forward_record(&net, &[sample], &DiffConfig::default(), &RandomSource::new(1, 1)).unwrap();
    let g = tape.backward(loss).unwrap();
    for i in 0..24 {
        assert_eq!(g.grads[0][i * 40], 0.0);
    }
}

#[test]
fn straight_through_quantization_leaves_gradients_unchanged() {
    // weights already on the grid, so rounding is the identity in the forward
    let mut net = three_layer(ResetMode::Hard, 8);
    for layer in net.layers_mut() {
        let w = &layer.weights;
        let on_grid: Vec<f64> = w.shadow().iter().map(|x| (x / 2.0).round().clamp(-128.0, 127.0) * 2.0).collect();
        layer.weights = WeightMatrix::from_shadow(w.rows(), w.cols(), on_grid).unwrap();
    }
    let samples: Vec<_> = (0..2)
        .map(|i| random_sample(40, 100, 0.2, i, &RandomSource::new(3, i as u64)))
        .collect();
    let rounding = RandomSource::new(1, 1);
    let (tq, lq) = forward_record(&net, &samples, &DiffConfig::default(), &rounding).unwrap();
    let (tf, lf) = forward_record(&net, &samples, &full_precision(), &rounding).unwrap();
    assert_eq!(tq.backward(lq).unwrap(), tf.backward(lf).unwrap());
}

#[test]
fn linear_path_gradient_matches_filter_convolution() {
    // single neuron with an unreachable threshold: v(T) is linear in w
    let (au, av) = (0.75, 0.875);
    let steps = 30;
    let src = RandomSource::new(2, 2);
    let sample = random_sample(6, steps, 0.3, 0, &src);
    let w = [0.3, -1.2, 2.0, 0.7, 0.1, -0.4];
    let mut tape = Tape::new();
    let wl = tape.leaf(0, 1, 6, w.to_vec()).unwrap();
    let mut u = tape.constant(vec![0.0]);
    let mut v = tape.constant(vec![0.0]);
    for t in 0..steps {
        let d = tape.sparse_matvec(wl, 6, sample.active(t)).unwrap();
        u = tape.lin(au, u, 1.0 - au, d).unwrap();
        v = tape.lin(av, v, 1.0 - av, u).unwrap();
    }
    let g = tape.backward(v).unwrap();
    // impulse response of the two cascaded filters
    let h = |k: usize| -> f64 { (0..=k).map(|m| au.powi(m as i32) * av.powi((k - m) as i32)).sum::<f64>() * (1.0 - au) * (1.0 - av) };
    for j in 0..6 {
        let expected: f64 = (0..steps)
            .filter(|&t| sample.active(t).contains(&(j as u32)))
            .map(|t| h(steps - 1 - t))
            .sum();
        assert!((g.grads[0][j] - expected).abs() < 1e-12, "{} vs {}", g.grads[0][j], expected);
    }
    let value: f64 = (0..6).map(|j| w[j] * g.grads[0][j]).sum();
    assert!((tape.scalar(v) - value).abs() < 1e-12);
}

#[test]
fn inner_loop_gradient_predicts_outer_loss_change() {
    let problem = GradCheckSetup::default().problem().unwrap();
    let params = problem.params();
    let (tape, root) = problem.record_meta(&params).unwrap();
    let g = tape.backward(root).unwrap();
    let dir = RandomSource::new(5, 5);
    let mut k = 0;
    let d: Vec<Vec<f64>> = params
        .iter()
        .map(|p| {
            p.iter()
                .map(|_| {
                    k += 1;
                    dir.uniform_at(k) - 0.5
                })
                .collect()
        })
        .collect();
    let h = 1e-3;
    let shifted: Vec<Vec<f64>> = params
        .iter()
        .zip(&d)
        .map(|(p, d)| p.iter().zip(d).map(|(a, b)| a + h * b).collect())
        .collect();
    let (t2, r2) = problem.record_meta(&shifted).unwrap();
    let actual = t2.scalar(r2) - tape.scalar(root);
    let predicted: f64 = g.grads.iter().flatten().zip(d.iter().flatten()).map(|(a, b)| a * b).sum::<f64>() * h;
    assert!(actual != 0.0);
    assert!((actual - predicted).abs() <= 0.05 * actual.abs(), "{actual} vs {predicted}");
}

#[test]
fn second_order_terms_change_the_meta_gradient() {
    let mut problem = GradCheckSetup::default().problem().unwrap();
    let params = problem.params();
    let (t, r) = problem.record_meta(&params).unwrap();
    let second = t.backward(r).unwrap();
    problem.cfg.first_order = true;
    let (t, r) = problem.record_meta(&params).unwrap();
    let first = t.backward(r).unwrap();
    assert_eq!(first.loss, second.loss);
    assert_ne!(first.grads, second.grads);
}

#[test]
fn inner_updates_only_move_the_plastic_layer() {
    let net = three_layer(ResetMode::Hard, 12);
    let soel = SoelConfig {
        target_spikes: 10,
        ..SoelConfig::default()
    };
    let cfg = full_precision();
    let mut tape = Tape::new();
    let mut nodes = WeightNodes::register(&mut tape, &net, &cfg, &RandomSource::new(0, 0)).unwrap();
    let before = nodes.clone();
    let mut epoch = 0;
    let mut learning = InnerLearning {
        soel: &soel,
        alpha: 0.1,
        label: 2,
        epoch: &mut epoch,
        rounding: RandomSource::new(0, 0),
    };
    let sample = random_sample(40, 100, 0.2, 2, &RandomSource::new(1, 9));
    let rec = record_sample(&mut tape, &net, &mut nodes, &sample, &cfg, Some(&mut learning)).unwrap();
    assert_eq!(epoch, 5);
    assert!(rec.row_updates > 0);
    assert_eq!(nodes.effective[..2], before.effective[..2]);
    assert_ne!(nodes.effective[2], before.effective[2]);
}

#[test]
fn backward_costs_less_than_five_forwards() {
    let net = three_layer(ResetMode::Hard, 2);
    let samples: Vec<_> = (0..5)
        .map(|i| random_sample(40, 100, 0.2, i, &RandomSource::new(7, i as u64)))
        .collect();
    let cfg = DiffConfig::default();
    let mut fwd = f64::INFINITY;
    let mut bwd = f64::INFINITY;
    for _ in 0..5 {
        let t0 = Instant::now();
        let (tape, loss) = forward_record(&net, &samples, &cfg, &RandomSource::new(1, 1)).unwrap();
        fwd = fwd.min(t0.elapsed().as_secs_f64());
        let t1 = Instant::now();
        let g = tape.backward(loss).unwrap();
        bwd = bwd.min(t1.elapsed().as_secs_f64());
        assert!(g.is_finite());
    }
    assert!(bwd < 5.0 * fwd, "backward {bwd}s vs forward {fwd}s");
}

#[test]
fn smoothed_mode_is_differentiable_everywhere() {
    let net = three_layer(ResetMode::Soft, 2);
    let cfg = DiffConfig {
        mode: ForwardMode::Smoothed,
        surrogate: SurrogateConfig::sigmoid(0.1),
        quantize: None,
        ..DiffConfig::default()
    };
    let sample = random_sample(40, 50, 0.2, 1, &RandomSource::new(2, 2));
    let (tape, loss) = forward_record(&net, &[sample], &cfg, &RandomSource::new(0, 0)).unwrap();
    let g = tape.backward(loss).unwrap();
    assert!(g.is_finite());
    assert!(g.grads.iter().all(|l| l.iter().any(|&x| x != 0.0)));
}
