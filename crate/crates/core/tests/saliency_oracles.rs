mod common;

use std::collections::BTreeMap;

use common::*;
use vrprune::calibration::{calibrate, merge_group_moments};
use vrprune::data::GroupId;
use vrprune::nn::{hidden_stack, train, Mlp, TrainConfig};
use vrprune::pruning::{saliency_phi, saliency_phi_group, score_vr, vr_scores, VrConfig};

fn assert_close(got: f64, want: f64, tol: f64, what: &str) {
    assert!(
        (got - want).abs() <= tol * want.abs().max(f64::MIN_POSITIVE) || got == want,
        "{what}: {got} vs {want}"
    );
}

#[test]
fn calibration_matches_per_sample_oracle() {
    let mut r = rng(21);
    let model = random_mlp(4, &[3], false, &mut r);
    let data = random_dataset(50, 4, 1, &mut r);
    let stats = calibrate(&model, &data).unwrap();
    let rows: Vec<usize> = (0..50).collect();
    let want = oracle_moments(&model, &data, &rows);
    for (l, m) in stats.global.iter().enumerate() {
        for (g, w) in m.act_sq.iter().zip(&want[l].0) {
            assert_close(*g, *w, 1e-12, "act_sq");
        }
        for (g, w) in m.grad_sq.iter().zip(&want[l].1) {
            assert_close(*g, *w, 1e-12, "grad_sq");
        }
        assert_eq!(m.sample_count, 50);
    }
}

#[test]
fn group_moments_match_oracle_restricted_to_group() {
    let mut r = rng(22);
    let model = random_mlp(3, &[4, 2], true, &mut r);
    let data = random_dataset(80, 3, 2, &mut r);
    let stats = calibrate(&model, &data).unwrap();
    for (g, rows) in data.indices_by_group() {
        let want = oracle_moments(&model, &data, &rows);
        let got = stats.group(&g).unwrap();
        for l in 0..model.num_layers() {
            for (a, b) in got[l].act_sq.iter().zip(&want[l].0) {
                assert_close(*a, *b, 1e-12, "group act_sq");
            }
            for (a, b) in got[l].grad_sq.iter().zip(&want[l].1) {
                assert_close(*a, *b, 1e-12, "group grad_sq");
            }
        }
        let phi_g = saliency_phi_group(&stats, &model, &g).unwrap();
        let oracle = oracle_phi(&model, &want);
        for (s, o) in phi_g.layers.iter().zip(&oracle) {
            for (a, b) in s.iter().zip(o.iter()) {
                assert_close(*a, *b, 1e-12, "phi_g");
            }
        }
    }
}

#[test]
fn phi_on_trained_three_two_one_matches_trace_oracle() {
    let mut r = rng(23);
    let data = random_dataset(120, 3, 3, &mut r);
    let cfg = TrainConfig {
        epochs: 20,
        batch_size: 16,
        learning_rate: 1e-2,
        ..TrainConfig::default()
    };
    let model = train(Mlp::init(&hidden_stack(3, &[2]), 4).unwrap(), &data, &cfg).unwrap().model;
    let stats = calibrate(&model, &data).unwrap();
    let phi = saliency_phi(&stats.global, &model).unwrap();
    let rows: Vec<usize> = (0..data.len()).collect();
    let oracle = oracle_phi(&model, &oracle_moments(&model, &data, &rows));
    for (s, o) in phi.layers.iter().zip(&oracle) {
        for (a, b) in s.iter().zip(o.iter()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300) || a == b, "{a} vs {b}");
        }
    }
}

#[test]
fn perfect_predictions_zero_group_saliency() {
    let mut r = rng(24);
    let model = random_mlp(3, &[3], false, &mut r);
    let mut data = random_dataset(20, 3, 2, &mut r);
    data.targets = model.predict(data.features.view()).unwrap();
    let stats = calibrate(&model, &data).unwrap();
    for g in data.groups() {
        let phi = saliency_phi_group(&stats, &model, &g).unwrap();
        assert!(phi.layers.iter().all(|l| l.iter().all(|&v| v == 0.0)));
    }
    assert!(saliency_phi_group(&stats, &model, &GroupId::from("missing")).is_err());
}

#[test]
fn merged_moments_reproduce_global() {
    for seed in 0..10 {
        let mut r = rng(100 + seed);
        let model = random_mlp(5, &[4], seed % 2 == 0, &mut r);
        let data = random_dataset(200, 5, 2 + seed as usize % 9, &mut r);
        let stats = calibrate(&model, &data).unwrap();
        let merged = merge_group_moments(&stats).unwrap();
        for (m, g) in merged.iter().zip(&stats.global) {
            for (a, b) in m.act_sq.iter().zip(&g.act_sq) {
                assert_close(*a, *b, 1e-12, "merged act_sq");
            }
            for (a, b) in m.grad_sq.iter().zip(&g.grad_sq) {
                assert_close(*a, *b, 1e-12, "merged grad_sq");
            }
        }
    }
}

#[test]
fn vr_score_independent_of_group_order() {
    let mut r = rng(25);
    let model = random_mlp(4, &[3], false, &mut r);
    let data = random_dataset(60, 4, 4, &mut r);
    let stats = calibrate(&model, &data).unwrap();
    let cfg = VrConfig { lambda_var: 2.0 };
    let forward = vr_scores(&stats, &model, &cfg).unwrap();
    // Rebuild the group map under renamed keys so iteration order reverses.
    let renamed: BTreeMap<GroupId, _> = stats
        .groups()
        .enumerate()
        .map(|(i, g)| {
            (
                GroupId(format!("{}", 9 - i)),
                saliency_phi_group(&stats, &model, g).unwrap(),
            )
        })
        .collect();
    let reversed = score_vr(&renamed, &cfg).unwrap();
    for (a, b) in forward.layers.iter().zip(&reversed.layers) {
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1e-300), "{x} vs {y}");
        }
    }
}

#[test]
fn vr_scores_non_negative() {
    let mut r = rng(26);
    let model = random_mlp(4, &[5, 3], true, &mut r);
    let data = random_dataset(70, 4, 5, &mut r);
    let stats = calibrate(&model, &data).unwrap();
    for lambda in [0.0, 1.0, 10.0] {
        let s = vr_scores(&stats, &model, &VrConfig { lambda_var: lambda }).unwrap();
        assert!(s.layers.iter().all(|l| l.iter().all(|&v| v >= 0.0)));
    }
}

#[test]
fn first_layer_act_sq_scales_with_feature_scale() {
    let mut r = rng(27);
    let model = random_mlp(3, &[4], false, &mut r);
    let data = random_dataset(40, 3, 2, &mut r);
    let mut scaled = data.clone();
    scaled.features *= 3.0;
    let a = calibrate(&model, &data).unwrap();
    let b = calibrate(&model, &scaled).unwrap();
    for (x, y) in a.global[0].act_sq.iter().zip(&b.global[0].act_sq) {
        assert_close(*y, 9.0 * x, 1e-12, "scaled act_sq");
    }
}
