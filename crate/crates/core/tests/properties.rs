//! Property tests over the compute core and the binary codec.

use epicast_core::autodiff::Graph;
use epicast_core::dataio::{load_embeddings, write_embeddings, EmbeddingsFile};
use epicast_core::gradcheck::{finite_difference_grad, max_relative_error, DEFAULT_FD_STEP};
use epicast_core::tensor::Tensor;
use proptest::prelude::*;

fn tensor_2d(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-50.0f64..50.0, rows * cols)
        .prop_map(move |data| Tensor::new(vec![rows, cols], data).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_sum_to_one(t in (1usize..5, 1usize..6).prop_flat_map(|(m, n)| tensor_2d(m, n))) {
        let mut g = Graph::new();
        let x = g.constant(t.clone());
        let s = g.softmax_rows(x).unwrap();
        let y = g.value(s);
        for r in 0..y.rows() {
            let sum: f64 = y.row(r).iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12, "row {r} sums to {sum}");
            prop_assert!(y.row(r).iter().all(|v| *v > 0.0));
        }
    }

    /// Chains of pointwise ops plus matmul and pooling agree with central
    /// finite differences for every coordinate of the input.
    #[test]
    fn backward_matches_finite_differences(
        t in tensor_2d(2, 3),
        w in tensor_2d(3, 2),
        ops in prop::collection::vec(0u8..5, 1..5),
    ) {
        // keep away from the ReLU kink, where the subgradient is arbitrary
        prop_assume!(t.data().iter().all(|v| v.abs() > 1e-3));
        let build = |g: &mut Graph, x: epicast_core::autodiff::NodeId| {
            let wn = g.constant(w.clone());
            let mut cur = g.matmul(x, wn).unwrap();
            for op in &ops {
                cur = match op {
                    0 => g.sigmoid(cur),
                    1 => g.tanh(cur),
                    2 => g.scale(cur, 0.7),
                    3 => g.softmax_rows(cur).unwrap(),
                    _ => {
                        let m = g.mul(cur, cur).unwrap();
                        g.scale(m, 0.5)
                    }
                };
            }
            let pooled = g.mean_rows(cur).unwrap();
            g.mean_all(pooled).unwrap()
        };
        let mut g = Graph::new();
        let x = g.param(t.clone());
        let loss = build(&mut g, x);
        let grads = g.backward(loss).unwrap();
        let analytic = grads.wrt_or_zeros(x, t.shape());

        let numeric = finite_difference_grad(
            |probe| {
                let mut g = Graph::new();
                let x = g.param(probe.clone());
                let loss = build(&mut g, x);
                Ok(g.value(loss).data()[0])
            },
            &t,
            DEFAULT_FD_STEP,
        ).unwrap();
        let err = max_relative_error(&analytic, &numeric);
        prop_assert!(err < 1e-5, "relative error {err}");
    }

    #[test]
    fn embedding_codec_roundtrip_exact_at_f32(
        data in prop::collection::vec(prop::num::f32::NORMAL, 12)
    ) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.mgeb");
        let values: Vec<f64> = data.iter().map(|v| *v as f64).collect();
        let emb = EmbeddingsFile {
            start_date: "2021-01-01".parse().unwrap(),
            region: "prop".into(),
            source: "proptest".into(),
            data: Tensor::new(vec![3, 2, 2], values).unwrap(),
        };
        write_embeddings(&path, &emb).unwrap();
        let loaded = load_embeddings(&path).unwrap();
        for (orig, got) in data.iter().zip(loaded.data.data()) {
            prop_assert_eq!(*orig, *got as f32);
        }
    }
}
