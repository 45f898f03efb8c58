use mtm_autodiff::{adam_step, AdamConfig, AdamState, Rng, Tape, Tensor};
use proptest::prelude::*;

fn finite_vec(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0f64..50.0, len)
}

proptest! {
    #[test]
    fn log_softmax_rows_are_distributions(rows in 1usize..4, data in finite_vec(1..7)) {
        let k = data.len();
        let full: Vec<f64> = (0..rows).flat_map(|r| data.iter().map(move |v| v + r as f64)).collect();
        let mut t = Tape::new();
        let x = t.constant(full, &[rows, k]).unwrap();
        let y = t.log_softmax(x, 1).unwrap();
        for row in t.value(y).chunks(k) {
            let s: f64 = row.iter().map(|v| v.exp()).sum();
            prop_assert!((s - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn gumbel_soft_samples_are_distributions(
        data in finite_vec(1..8),
        tau in 0.05f64..5.0,
        seed in any::<u64>(),
    ) {
        let k = data.len();
        let mut rng = Rng::new(seed);
        let mut t = Tape::new();
        let x = t.constant(data, &[k]).unwrap();
        let y = t.gumbel_softmax(x, tau, &mut rng, false).unwrap();
        let v = t.value(y);
        prop_assert!(v.iter().all(|p| (0.0..=1.0).contains(p)));
        prop_assert!((v.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn hard_gumbel_is_one_hot(data in finite_vec(1..8), seed in any::<u64>()) {
        let k = data.len();
        let mut rng = Rng::new(seed);
        let mut t = Tape::new();
        let x = t.constant(data, &[k]).unwrap();
        let y = t.gumbel_softmax(x, 0.8, &mut rng, true).unwrap();
        let v = t.value(y);
        prop_assert_eq!(v.iter().filter(|p| **p == 1.0).count(), 1);
        prop_assert_eq!(v.iter().filter(|p| **p == 0.0).count(), k - 1);
    }

    #[test]
    fn sparsemax_is_a_distribution(data in finite_vec(1..9)) {
        let p = mtm_autodiff::sparsemax_slice(&data);
        prop_assert!(p.iter().all(|v| *v >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn adam_zero_gradient_is_identity(data in finite_vec(1..10), steps in 1usize..5) {
        let n = data.len();
        let mut p = Tensor::new(vec![n], data.clone()).unwrap().with_grad();
        p.grad = Some(vec![0.0; n]);
        let mut st = AdamState::new(n);
        for _ in 0..steps {
            adam_step(&mut p, &mut st, &AdamConfig::default()).unwrap();
        }
        prop_assert_eq!(p.data, data);
    }

    #[test]
    fn same_seed_same_stream(seed in any::<u64>()) {
        let mut a = Rng::new(seed);
        let mut b = Rng::new(seed);
        for _ in 0..16 {
            prop_assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
            prop_assert_eq!(a.gumbel().to_bits(), b.gumbel().to_bits());
        }
    }

    #[test]
    fn backward_fills_every_reachable_leaf(data in finite_vec(2..6)) {
        let n = data.len();
        let a = Tensor::new(vec![n], data.clone()).unwrap().with_grad();
        let b = Tensor::new(vec![n, 2], data.iter().chain(&data).copied().collect()).unwrap().with_grad();
        let mut t = Tape::new();
        let (va, vb) = (t.leaf(&a), t.leaf(&b));
        let y = t.matmul(va, vb).unwrap();
        let y = t.tanh(y);
        let loss = t.sum(y);
        let g = t.backward(loss).unwrap();
        prop_assert_eq!(g.get(va).map(|s| s.len()), Some(n));
        prop_assert_eq!(g.get(vb).map(|s| s.len()), Some(2 * n));
    }
}
