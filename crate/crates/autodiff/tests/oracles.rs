//! Forward values compared against independent reference computations.

use mtm_autodiff::{
    adam_step, clip_grad_norm, AdamConfig, AdamState, AutodiffError, LstmVars, Rng, Tape, Tensor,
};

fn random(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect()
}

#[test]
fn matmul_matches_triple_loop() {
    let mut rng = Rng::new(11);
    let a = random(&mut rng, 12);
    let b = random(&mut rng, 8);
    let mut t = Tape::new();
    let va = t.constant(a.clone(), &[3, 4]).unwrap();
    let vb = t.constant(b.clone(), &[4, 2]).unwrap();
    let c = t.matmul(va, vb).unwrap();
    for i in 0..3 {
        for j in 0..2 {
            let mut s = 0.0;
            for k in 0..4 {
                s += a[i * 4 + k] * b[k * 2 + j];
            }
            assert!((t.value(c)[i * 2 + j] - s).abs() < 1e-12);
        }
    }
}

#[test]
fn log_softmax_matches_high_precision_values() {
    // Reference values computed at 40 significant digits.
    let expect = [
        -2.407_605_964_444_380_3,
        -1.407_605_964_444_380_3,
        -0.407_605_964_444_380_3,
    ];
    let mut t = Tape::new();
    let x = t.constant(vec![1.0, 2.0, 3.0], &[3]).unwrap();
    let y = t.log_softmax(x, 0).unwrap();
    for (a, b) in t.value(y).iter().zip(expect) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn cross_entropy_matches_high_precision_value() {
    let mut t = Tape::new();
    let x = t.constant(vec![1.0, 3.0], &[2]).unwrap();
    let l = t.cross_entropy(x, 0).unwrap();
    assert!((t.scalar(l) - 2.126_928_011_042_972_5).abs() < 1e-12);
}

#[test]
fn bce_fractional_target() {
    let mut t = Tape::new();
    let p = t.constant(vec![0.25], &[1]).unwrap();
    let l = t.binary_cross_entropy(p, 0.15).unwrap();
    assert!((t.scalar(l) - 0.45244).abs() < 1e-4);
}

#[test]
fn gumbel_zero_noise_matches_scalar_softmax() {
    let mut rng = Rng::new(0);
    rng.set_zero_gumbel(true);
    let mut t = Tape::new();
    let x = t.constant(vec![2.0, 0.0], &[2]).unwrap();
    let y = t.gumbel_softmax(x, 0.8, &mut rng, false).unwrap();
    let e = (2.5f64).exp();
    let expect = [e / (e + 1.0), 1.0 / (e + 1.0)];
    for (a, b) in t.value(y).iter().zip(expect) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn conv_matches_sliding_window() {
    let (l, d, f, width) = (5usize, 3usize, 2usize, 3usize);
    let mut rng = Rng::new(5);
    let x = random(&mut rng, l * d);
    let w = random(&mut rng, width * d * f);
    let b = random(&mut rng, f);
    let mut t = Tape::new();
    let vx = t.constant(x.clone(), &[l, d]).unwrap();
    let vw = t.constant(w.clone(), &[width * d, f]).unwrap();
    let vb = t.constant(b.clone(), &[f]).unwrap();
    let y = t.conv1d(vx, vw, vb, width).unwrap();
    let half = (width / 2) as isize;
    for pos in 0..l as isize {
        for j in 0..f {
            let mut s = b[j];
            for off in -half..=half {
                let src = pos + off;
                if src < 0 || src >= l as isize {
                    continue;
                }
                let tap = (off + half) as usize;
                for c in 0..d {
                    s += x[src as usize * d + c] * w[(tap * d + c) * f + j];
                }
            }
            assert!((t.value(y)[pos as usize * f + j] - s).abs() < 1e-12);
        }
    }
}

fn sig(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Step-by-step recurrence with each gate computed by its own dot products.
fn scalar_lstm(x: &[Vec<f64>], wx: &[f64], wh: &[f64], b: &[f64], h: usize) -> Vec<Vec<f64>> {
    let d = x[0].len();
    let gate = |g: usize, j: usize, xt: &[f64], hp: &[f64]| {
        let col = g * h + j;
        let mut z = b[col];
        for c in 0..d {
            z += xt[c] * wx[c * 4 * h + col];
        }
        for r in 0..h {
            z += hp[r] * wh[r * 4 * h + col];
        }
        z
    };
    let mut hs = Vec::new();
    let mut hp = vec![0.0; h];
    let mut cp = vec![0.0; h];
    for xt in x {
        let mut hn = vec![0.0; h];
        let mut cn = vec![0.0; h];
        for j in 0..h {
            let i = sig(gate(0, j, xt, &hp));
            let f = sig(gate(1, j, xt, &hp));
            let g = gate(2, j, xt, &hp).tanh();
            let o = sig(gate(3, j, xt, &hp));
            cn[j] = f * cp[j] + i * g;
            hn[j] = o * cn[j].tanh();
        }
        hs.push(hn.clone());
        hp = hn;
        cp = cn;
    }
    hs
}

#[test]
fn lstm_matches_unrolled_scalar_recurrence() {
    let (l, d, h) = (3usize, 4usize, 3usize);
    let mut rng = Rng::new(21);
    let x = random(&mut rng, l * d);
    let wx = Tensor::new(vec![d, 4 * h], random(&mut rng, d * 4 * h)).unwrap();
    let wh = Tensor::new(vec![h, 4 * h], random(&mut rng, h * 4 * h)).unwrap();
    let b = Tensor::new(vec![4 * h], random(&mut rng, 4 * h)).unwrap();
    let rows: Vec<Vec<f64>> = x.chunks(d).map(<[f64]>::to_vec).collect();

    let mut t = Tape::new();
    let vx = t.constant(x.clone(), &[l, d]).unwrap();
    let p = LstmVars {
        wx: t.leaf(&wx),
        wh: t.leaf(&wh),
        b: t.leaf(&b),
    };
    let fwd = t.lstm(vx, p, false).unwrap();
    let oracle = scalar_lstm(&rows, &wx.data, &wh.data, &b.data, h);
    for pos in 0..l {
        for j in 0..h {
            assert!((t.value(fwd)[pos * h + j] - oracle[pos][j]).abs() < 1e-10);
        }
    }

    let bwd = t.lstm(vx, p, true).unwrap();
    let reversed: Vec<Vec<f64>> = rows.iter().rev().cloned().collect();
    let oracle = scalar_lstm(&reversed, &wx.data, &wh.data, &b.data, h);
    for pos in 0..l {
        for j in 0..h {
            assert!((t.value(bwd)[pos * h + j] - oracle[l - 1 - pos][j]).abs() < 1e-10);
        }
    }
}

#[test]
fn bilstm_single_token_concatenates_both_steps() {
    let (d, h) = (2usize, 2usize);
    let mut rng = Rng::new(4);
    let mk = |rng: &mut Rng, shape: &[usize]| {
        Tensor::new(shape.to_vec(), random(rng, shape.iter().product())).unwrap()
    };
    let (wf, hf, bf) = (
        mk(&mut rng, &[d, 4 * h]),
        mk(&mut rng, &[h, 4 * h]),
        mk(&mut rng, &[4 * h]),
    );
    let (wb, hb, bb) = (
        mk(&mut rng, &[d, 4 * h]),
        mk(&mut rng, &[h, 4 * h]),
        mk(&mut rng, &[4 * h]),
    );
    let mut t = Tape::new();
    let x = t.constant(vec![0.3, -0.7], &[1, d]).unwrap();
    let f = LstmVars {
        wx: t.leaf(&wf),
        wh: t.leaf(&hf),
        b: t.leaf(&bf),
    };
    let b = LstmVars {
        wx: t.leaf(&wb),
        wh: t.leaf(&hb),
        b: t.leaf(&bb),
    };
    let y = t.bilstm(x, f, Some(b)).unwrap();
    let of = scalar_lstm(&[vec![0.3, -0.7]], &wf.data, &hf.data, &bf.data, h);
    let ob = scalar_lstm(&[vec![0.3, -0.7]], &wb.data, &hb.data, &bb.data, h);
    let expect: Vec<f64> = of[0].iter().chain(&ob[0]).copied().collect();
    for (a, e) in t.value(y).iter().zip(expect) {
        assert!((a - e).abs() < 1e-12);
    }
}

/// Plain scalar Adam, written out independently.
fn scalar_adam(x: &mut f64, m: &mut f64, v: &mut f64, step: i32, g: f64, lr: f64) {
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    *m = b1 * *m + (1.0 - b1) * g;
    *v = b2 * *v + (1.0 - b2) * g * g;
    let mh = *m / (1.0 - b1.powi(step));
    let vh = *v / (1.0 - b2.powi(step));
    *x -= lr * mh / (vh.sqrt() + eps);
}

#[test]
fn adam_first_step_is_learning_rate() {
    let mut p = Tensor::scalar(0.0).with_grad();
    p.grad = Some(vec![1.0]);
    let mut st = AdamState::new(1);
    adam_step(&mut p, &mut st, &AdamConfig::default()).unwrap();
    assert!((p.data[0] + 0.001).abs() < 1e-9);
}

#[test]
fn adam_two_steps_on_quadratic_match_scalar_oracle() {
    let cfg = AdamConfig::default();
    let mut p = Tensor::scalar(1.5).with_grad();
    let mut st = AdamState::new(1);
    let (mut x, mut m, mut v) = (1.5, 0.0, 0.0);
    for step in 1..=2 {
        // f(x) = x², g = 2x
        p.grad = Some(vec![2.0 * p.data[0]]);
        adam_step(&mut p, &mut st, &cfg).unwrap();
        let g = 2.0 * x;
        scalar_adam(&mut x, &mut m, &mut v, step, g, cfg.lr);
        assert!((p.data[0] - x).abs() < 1e-12);
    }
}

#[test]
fn adam_zero_gradient_keeps_moments_zero() {
    let mut p = Tensor::new(vec![2], vec![0.5, -0.5]).unwrap().with_grad();
    p.grad = Some(vec![0.0, 0.0]);
    let mut st = AdamState::new(2);
    adam_step(&mut p, &mut st, &AdamConfig::default()).unwrap();
    assert_eq!(p.data, vec![0.5, -0.5]);
    assert_eq!(st.m, vec![0.0, 0.0]);
    assert_eq!(st.v, vec![0.0, 0.0]);
}

#[test]
fn adam_rejects_state_of_wrong_size() {
    let mut p = Tensor::new(vec![2], vec![0.0, 0.0]).unwrap().with_grad();
    p.grad = Some(vec![1.0, 1.0]);
    let mut st = AdamState::new(3);
    assert!(matches!(
        adam_step(&mut p, &mut st, &AdamConfig::default()),
        Err(AutodiffError::Shape { .. })
    ));
}

#[test]
fn clip_three_four_five() {
    let mut a = Tensor::new(vec![2], vec![0.0; 2]).unwrap().with_grad();
    a.grad = Some(vec![3.0, 4.0]);
    let s = clip_grad_norm(&mut [&mut a], 1.0);
    assert!((s - 0.2).abs() < 1e-15);
    let g = a.grad.unwrap();
    assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
}

#[test]
fn clip_multi_tensor_matches_flattened_oracle() {
    let mut rng = Rng::new(8);
    let ga = random(&mut rng, 5)
        .iter()
        .map(|v| v * 4.0)
        .collect::<Vec<_>>();
    let gb = random(&mut rng, 3)
        .iter()
        .map(|v| v * 4.0)
        .collect::<Vec<_>>();
    let flat: Vec<f64> = ga.iter().chain(&gb).copied().collect();
    let norm = flat.iter().map(|v| v * v).sum::<f64>().sqrt();
    let expect: Vec<f64> = flat.iter().map(|v| v * 0.5 / norm).collect();

    let mut a = Tensor::new(vec![5], vec![0.0; 5]).unwrap().with_grad();
    let mut b = Tensor::new(vec![3], vec![0.0; 3]).unwrap().with_grad();
    a.grad = Some(ga);
    b.grad = Some(gb);
    let s = clip_grad_norm(&mut [&mut a, &mut b], 0.5);
    assert!((s - 0.5 / norm).abs() < 1e-12);
    let got: Vec<f64> = a.grad.unwrap().into_iter().chain(b.grad.unwrap()).collect();
    for (g, e) in got.iter().zip(expect) {
        assert!((g - e).abs() < 1e-12);
    }
}
