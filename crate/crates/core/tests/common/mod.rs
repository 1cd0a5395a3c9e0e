//! Reference implementations used as oracles. Everything here is written
//! with plain loops over `Vec<f64>` so it shares no code path with the
//! library under test.

#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use vrprune::data::{GroupId, WindowedDataset};
use vrprune::nn::{hidden_stack, Activation, Mlp};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || normal(rng))
}

/// Random MLP with nonzero biases and, optionally, a random sparse mask.
pub fn random_mlp(input: usize, hidden: &[usize], masked: bool, rng: &mut ChaCha8Rng) -> Mlp {
    let specs = hidden_stack(input, hidden);
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    let mut masks = Vec::new();
    for s in &specs {
        weights.push(random_matrix(s.output_dim, s.input_dim, rng) * 0.7);
        biases.push(Array1::from_shape_simple_fn(s.output_dim, || 0.3 * normal(rng)));
        masks.push(Array2::from_shape_simple_fn((s.output_dim, s.input_dim), || {
            !masked || rng.random::<f64>() > 0.25
        }));
    }
    Mlp::from_parts(specs, weights, biases, masks).unwrap()
}

pub fn random_dataset(n: usize, dim: usize, groups: usize, rng: &mut ChaCha8Rng) -> WindowedDataset {
    let features = Array2::from_shape_simple_fn((n, dim), || rng.random::<f64>());
    let targets = Array1::from_shape_simple_fn(n, || rng.random::<f64>());
    let group_ids = (0..n)
        .map(|_| GroupId(format!("g{}", rng.random_range(0..groups))))
        .collect();
    let names = (0..dim).map(|i| format!("f{i}")).collect();
    WindowedDataset::new(features, targets, group_ids, names).unwrap()
}

/// Per-layer inputs `a` and pre-activations `z` for one sample.
pub struct SampleTrace {
    pub inputs: Vec<Vec<f64>>,
    pub pre: Vec<Vec<f64>>,
}

impl SampleTrace {
    pub fn prediction(&self) -> f64 {
        self.pre.last().unwrap()[0]
    }
}

fn act(a: Activation, z: f64) -> f64 {
    match a {
        Activation::Relu => z.max(0.0),
        Activation::Linear => z,
    }
}

fn act_prime(a: Activation, z: f64) -> f64 {
    match a {
        Activation::Relu => {
            if z > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Activation::Linear => 1.0,
    }
}

pub fn oracle_forward(model: &Mlp, x: &[f64]) -> SampleTrace {
    let mut inputs = Vec::new();
    let mut pre = Vec::new();
    let mut a = x.to_vec();
    for (l, spec) in model.specs().iter().enumerate() {
        let w = model.weights(l);
        let m = model.mask(l);
        let b = model.biases(l);
        let mut z = vec![0.0; spec.output_dim];
        for j in 0..spec.output_dim {
            let mut acc = b[j];
            for i in 0..spec.input_dim {
                if m[[j, i]] {
                    acc += w[[j, i]] * a[i];
                }
            }
            z[j] = acc;
        }
        inputs.push(a);
        a = z.iter().map(|&v| act(spec.activation, v)).collect();
        pre.push(z);
    }
    SampleTrace { inputs, pre }
}

pub fn oracle_predict(model: &Mlp, x: &[f64]) -> f64 {
    oracle_forward(model, x).prediction()
}

/// `∂(ŷ − t)²/∂z` per layer for one sample.
pub fn oracle_deltas(model: &Mlp, trace: &SampleTrace, t: f64) -> Vec<Vec<f64>> {
    let n = model.num_layers();
    let mut deltas = vec![Vec::new(); n];
    let last = &model.specs()[n - 1];
    deltas[n - 1] = vec![2.0 * (trace.prediction() - t) * act_prime(last.activation, trace.pre[n - 1][0])];
    for l in (0..n - 1).rev() {
        let spec = &model.specs()[l];
        let w = model.weights(l + 1);
        let m = model.mask(l + 1);
        let next = &deltas[l + 1];
        deltas[l] = (0..spec.output_dim)
            .map(|j| {
                let back: f64 = (0..next.len())
                    .filter(|&k| m[[k, j]])
                    .map(|k| w[[k, j]] * next[k])
                    .sum();
                back * act_prime(spec.activation, trace.pre[l][j])
            })
            .collect();
    }
    deltas
}

/// Mean of `a_i²` and `g_j²` over `rows`, one sample at a time.
pub fn oracle_moments(model: &Mlp, data: &WindowedDataset, rows: &[usize]) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut out: Vec<(Vec<f64>, Vec<f64>)> = model
        .specs()
        .iter()
        .map(|s| (vec![0.0; s.input_dim], vec![0.0; s.output_dim]))
        .collect();
    for &r in rows {
        let x: Vec<f64> = data.features.row(r).to_vec();
        let tr = oracle_forward(model, &x);
        let d = oracle_deltas(model, &tr, data.targets[r]);
        for l in 0..model.num_layers() {
            for (s, v) in out[l].0.iter_mut().zip(&tr.inputs[l]) {
                *s += v * v;
            }
            for (s, v) in out[l].1.iter_mut().zip(&d[l]) {
                *s += v * v;
            }
        }
    }
    let n = rows.len() as f64;
    for (a, g) in &mut out {
        a.iter_mut().for_each(|v| *v /= n);
        g.iter_mut().for_each(|v| *v /= n);
    }
    out
}

/// `½ · E[a_i²] · E[g_j²] · W_ij²` with masked weights as 0.
pub fn oracle_phi(model: &Mlp, moments: &[(Vec<f64>, Vec<f64>)]) -> Vec<Array2<f64>> {
    (0..model.num_layers())
        .map(|l| {
            let w = model.weights(l);
            let m = model.mask(l);
            Array2::from_shape_fn(w.dim(), |(j, i)| {
                let wij = if m[[j, i]] { w[[j, i]] } else { 0.0 };
                0.5 * moments[l].0[i] * moments[l].1[j] * wij * wij
            })
        })
        .collect()
}

/// Zero the dropped units' incoming rows and biases in place, then run the
/// loop oracle. Kept units are chosen here independently of the library.
pub fn zero_out_oracle(model: &Mlp, budget: &[usize]) -> Mlp {
    let mut z = model.clone();
    for (l, &k) in budget.iter().enumerate() {
        let w = model.weights(l);
        let m = model.mask(l);
        let mut norms: Vec<(f64, usize)> = (0..w.nrows())
            .map(|j| {
                let sq: f64 = (0..w.ncols())
                    .filter(|&i| m[[j, i]])
                    .map(|i| w[[j, i]] * w[[j, i]])
                    .sum();
                (sq.sqrt(), j)
            })
            .collect();
        norms.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let mut w2 = w.clone();
        let mut b2 = model.biases(l).clone();
        for &(_, j) in &norms[k..] {
            w2.row_mut(j).fill(0.0);
            b2[j] = 0.0;
        }
        z.set_weights(l, w2).unwrap();
        z.set_biases(l, b2).unwrap();
    }
    z
}

pub fn oracle_mse(model: &Mlp, data: &WindowedDataset) -> f64 {
    let n = data.len();
    (0..n)
        .map(|r| {
            let e = oracle_predict(model, &data.features.row(r).to_vec()) - data.targets[r];
            e * e
        })
        .sum::<f64>()
        / n as f64
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Lin's concordance straight from the definition, two-pass moments.
pub fn oracle_ccc(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let vx = x.iter().map(|v| (v - mx) * (v - mx)).sum::<f64>() / n;
    let vy = y.iter().map(|v| (v - my) * (v - my)).sum::<f64>() / n;
    let cov = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n;
    2.0 * cov / (vx + vy + (mx - my) * (mx - my))
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let n = ra.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma) * (x - ma)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb) * (y - mb)).sum();
    cov / (va * vb).sqrt()
}

/// Central finite difference of the mean squared error with respect to
/// every weight and bias, in the order (layer, weights row-major, biases).
pub fn finite_difference_grads(model: &Mlp, data: &WindowedDataset, h: f64) -> Vec<(Array2<f64>, Array1<f64>)> {
    let mut out = Vec::new();
    for l in 0..model.num_layers() {
        let w0 = model.weights(l).clone();
        let b0 = model.biases(l).clone();
        let mut gw = Array2::zeros(w0.dim());
        for ((r, c), g) in gw.indexed_iter_mut() {
            if !model.mask(l)[[r, c]] {
                continue;
            }
            let mut plus = model.clone();
            let mut wp = w0.clone();
            wp[[r, c]] += h;
            plus.set_weights(l, wp).unwrap();
            let mut minus = model.clone();
            let mut wm = w0.clone();
            wm[[r, c]] -= h;
            minus.set_weights(l, wm).unwrap();
            *g = (oracle_mse(&plus, data) - oracle_mse(&minus, data)) / (2.0 * h);
        }
        let mut gb = Array1::zeros(b0.len());
        for (j, g) in gb.iter_mut().enumerate() {
            let mut plus = model.clone();
            let mut bp = b0.clone();
            bp[j] += h;
            plus.set_biases(l, bp).unwrap();
            let mut minus = model.clone();
            let mut bm = b0.clone();
            bm[j] -= h;
            minus.set_biases(l, bm).unwrap();
            *g = (oracle_mse(&plus, data) - oracle_mse(&minus, data)) / (2.0 * h);
        }
        out.push((gw, gb));
    }
    out
}
