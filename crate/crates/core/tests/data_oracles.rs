use vrprune::data::{
    generate_synthetic, generate_synthetic_with_truth, load_sessions, prepare_split, write_sessions,
    PreprocessConfig, SplitRatios, SyntheticConfig,
};

/// Solves `A x = b` for symmetric positive definite `A` and also returns
/// the diagonal of `A⁻¹`.
fn cholesky_solve(a: &[Vec<f64>], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                l[i][j] = (a[i][i] - s).sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    let solve = |rhs: &[f64]| {
        let mut y = vec![0.0; n];
        for i in 0..n {
            y[i] = (rhs[i] - (0..i).map(|k| l[i][k] * y[k]).sum::<f64>()) / l[i][i];
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            x[i] = (y[i] - (i + 1..n).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
        }
        x
    };
    let diag = (0..n)
        .map(|i| {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            solve(&e)[i]
        })
        .collect();
    (solve(b), diag)
}

#[test]
fn pooled_least_squares_recovers_stable_coefficients() {
    let cfg = SyntheticConfig::default();
    let truth = generate_synthetic_with_truth(&cfg).unwrap();
    let p = cfg.n_stable_features + cfg.n_spurious_features + 1;
    let mut xtx = vec![vec![0.0; p]; p];
    let mut xty = vec![0.0; p];
    let mut rows = Vec::new();
    for s in &truth.sessions {
        for (t, y) in s.arousal.iter().enumerate() {
            let mut x = vec![1.0];
            x.extend(s.features.row(t).iter().copied());
            for i in 0..p {
                xty[i] += x[i] * y;
                for j in 0..p {
                    xtx[i][j] += x[i] * x[j];
                }
            }
            rows.push((x, *y));
        }
    }
    let (beta, inv_diag) = cholesky_solve(&xtx, &xty);
    let n = rows.len() as f64;
    let rss: f64 = rows
        .iter()
        .map(|(x, y)| {
            let fit: f64 = x.iter().zip(&beta).map(|(a, b)| a * b).sum();
            (y - fit) * (y - fit)
        })
        .sum();
    let sigma2 = rss / (n - p as f64);
    for (k, b_true) in truth.stable_coefficients.iter().enumerate() {
        // targets were divided by the squash scale
        let want = b_true / truth.target_scale;
        let est = beta[1 + k];
        let se = (sigma2 * inv_diag[1 + k]).sqrt();
        assert!(
            (est - want).abs() <= 3.0 * se,
            "stable {k}: estimate {est}, truth {want}, se {se}"
        );
    }
}

#[test]
fn pipeline_is_deterministic() {
    let cfg = SyntheticConfig {
        n_participants: 5,
        samples_per_participant: 30,
        ..SyntheticConfig::default()
    };
    let sessions = generate_synthetic(&cfg).unwrap();
    let pre = PreprocessConfig::default();
    let a = prepare_split(&sessions, &pre, &SplitRatios::default(), 4).unwrap();
    let b = prepare_split(&sessions, &pre, &SplitRatios::default(), 4).unwrap();
    assert_eq!(a, b);
    let dir = tempfile::tempdir().unwrap();
    a.split.write_dir(dir.path().join("a")).unwrap();
    b.split.write_dir(dir.path().join("b")).unwrap();
    for f in ["train.csv", "val.csv", "test.csv"] {
        assert_eq!(
            std::fs::read(dir.path().join("a").join(f)).unwrap(),
            std::fs::read(dir.path().join("b").join(f)).unwrap()
        );
    }
}

#[test]
fn written_sessions_load_back_unchanged() {
    let cfg = SyntheticConfig {
        n_participants: 3,
        samples_per_participant: 12,
        n_spurious_features: 2,
        n_stable_features: 2,
        ..SyntheticConfig::default()
    };
    let sessions = generate_synthetic(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_sessions(&sessions, dir.path()).unwrap();
    let back = load_sessions(dir.path()).unwrap();
    assert_eq!(back, sessions);
}

#[test]
fn partitions_keep_participants_apart() {
    let cfg = SyntheticConfig {
        n_participants: 10,
        samples_per_participant: 20,
        ..SyntheticConfig::default()
    };
    let sessions = generate_synthetic(&cfg).unwrap();
    let prepared = prepare_split(&sessions, &PreprocessConfig::pointwise(), &SplitRatios::default(), 2).unwrap();
    let s = &prepared.split;
    assert_eq!(
        (s.train.groups().len(), s.val.groups().len(), s.test.groups().len()),
        (6, 2, 2)
    );
    for g in s.test.groups() {
        assert!(!s.train.groups().contains(&g) && !s.val.groups().contains(&g));
    }
    for g in s.val.groups() {
        assert!(!s.train.groups().contains(&g));
    }
    for part in [&s.train, &s.val, &s.test] {
        assert!(part.features.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(part.targets.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
