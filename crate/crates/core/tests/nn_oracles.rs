mod common;

use common::*;
use ndarray::{array, Array1, Array2};
use vrprune::data::{GroupId, WindowedDataset};
use vrprune::nn::{hidden_stack, train, LayerSpec, Mlp, TrainConfig};

#[test]
fn forward_matches_loop_oracle() {
    let mut r = rng(11);
    let model = random_mlp(4, &[3], false, &mut r);
    let batch = random_matrix(25, 4, &mut r);
    let pred = model.predict(batch.view()).unwrap();
    for (b, p) in pred.iter().enumerate() {
        let want = oracle_predict(&model, &batch.row(b).to_vec());
        assert!(rel_err(*p, want) <= 1e-12, "{p} vs {want}");
    }
}

#[test]
fn masked_forward_matches_loop_oracle() {
    let mut r = rng(12);
    let model = random_mlp(6, &[5, 4], true, &mut r);
    let batch = random_matrix(30, 6, &mut r);
    let trace = model.forward(batch.view()).unwrap();
    for b in 0..30 {
        let o = oracle_forward(&model, &batch.row(b).to_vec());
        for l in 0..model.num_layers() {
            for (got, want) in trace.pre_activations[l].row(b).iter().zip(&o.pre[l]) {
                assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
            }
        }
    }
}

#[test]
fn backward_matches_finite_differences_on_five_four_one() {
    let mut r = rng(13);
    let model = random_mlp(5, &[4], false, &mut r);
    let data = random_dataset(16, 5, 1, &mut r);
    let trace = model.forward(data.features.view()).unwrap();
    let back = model.backward(&trace, data.targets.view()).unwrap();
    let fd = finite_difference_grads(&model, &data, 1e-5);
    for l in 0..model.num_layers() {
        for (a, n) in back.weight_grads[l].iter().zip(fd[l].0.iter()) {
            if a.abs().max(n.abs()) > 1e-6 {
                assert!(rel_err(*a, *n) < 1e-4, "layer {l}: {a} vs {n}");
            }
        }
        for (a, n) in back.bias_grads[l].iter().zip(fd[l].1.iter()) {
            if a.abs().max(n.abs()) > 1e-6 {
                assert!(rel_err(*a, *n) < 1e-4, "layer {l} bias: {a} vs {n}");
            }
        }
    }
}

#[test]
fn mask_depends_only_on_masked_product() {
    let mut r = rng(14);
    let model = random_mlp(4, &[3], true, &mut r);
    // Changing weights at masked positions must not change anything.
    let mut other = model.clone();
    let mut w = random_matrix(3, 4, &mut r);
    for ((i, j), v) in w.indexed_iter_mut() {
        if model.mask(0)[[i, j]] {
            *v = model.weights(0)[[i, j]];
        }
    }
    other.set_weights(0, w).unwrap();
    let x = random_matrix(10, 4, &mut r);
    assert_eq!(model.predict(x.view()).unwrap(), other.predict(x.view()).unwrap());

    // Applying the same mask twice is the same as once.
    let mut twice = model.clone();
    twice.set_masks(model.masks().to_vec()).unwrap();
    assert_eq!(twice, model);
}

#[test]
fn all_ones_mask_matches_unmasked_reference() {
    let mut r = rng(15);
    let model = random_mlp(3, &[4, 2], false, &mut r);
    let x = random_matrix(20, 3, &mut r);
    // Dense reference that never looks at a mask.
    let mut a = x.clone();
    for l in 0..model.num_layers() {
        let z = a.dot(&model.weights(l).t()) + model.biases(l);
        a = if l + 1 < model.num_layers() {
            z.mapv(|v| v.max(0.0))
        } else {
            z
        };
    }
    assert_eq!(model.predict(x.view()).unwrap(), a.column(0));
}

fn linear_target(n: usize) -> WindowedDataset {
    let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64 / n as f64);
    let y: Array1<f64> = x.column(0).mapv(|v| 2.0 * v);
    WindowedDataset::new(x, y, vec![GroupId::from("p"); n], vec!["x".into()]).unwrap()
}

#[test]
fn training_fits_linear_target() {
    let data = linear_target(200);
    let model = Mlp::init(&[LayerSpec::linear(1, 1)], 0).unwrap();
    let cfg = TrainConfig {
        epochs: 100,
        batch_size: 20,
        learning_rate: 1e-2,
        ..TrainConfig::default()
    };
    let out = train(model, &data, &cfg).unwrap();
    assert_eq!(out.loss_history.len(), 100);
    let mse = out.model.mse(data.features.view(), data.targets.view()).unwrap();
    assert!(mse < 1e-4, "training mse {mse}");
}

#[test]
fn training_is_bitwise_deterministic() {
    let mut r = rng(16);
    let data = random_dataset(90, 4, 3, &mut r);
    let cfg = TrainConfig {
        epochs: 5,
        batch_size: 16,
        seed: 9,
        ..TrainConfig::default()
    };
    let run = || train(Mlp::init(&hidden_stack(4, &[6]), 9).unwrap(), &data, &cfg).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.model, b.model);
    assert_eq!(a.loss_history, b.loss_history);
}

#[test]
fn epochs_zero_rejected() {
    let data = linear_target(10);
    let model = Mlp::init(&[LayerSpec::linear(1, 1)], 0).unwrap();
    let cfg = TrainConfig {
        epochs: 0,
        ..TrainConfig::default()
    };
    assert!(train(model, &data, &cfg).is_err());
}

#[test]
fn checkpoint_roundtrip_is_exact_after_training() {
    let mut r = rng(17);
    let data = random_dataset(50, 3, 2, &mut r);
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 8,
        ..TrainConfig::default()
    };
    let mut m = train(Mlp::init(&hidden_stack(3, &[5]), 1).unwrap(), &data, &cfg).unwrap().model;
    m.set_masks(vec![
        Array2::from_shape_fn((5, 3), |(i, j)| (i + j) % 3 != 0),
        array![[true, false, true, true, false]],
    ])
    .unwrap();
    let back = Mlp::from_json(&m.to_json().unwrap()).unwrap();
    assert_eq!(back, m);
    for l in 0..m.num_layers() {
        for (a, b) in back.weights(l).iter().zip(m.weights(l).iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
