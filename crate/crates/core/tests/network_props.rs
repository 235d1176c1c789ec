use ndarray::{Array1, Array2};
use proptest::prelude::*;

use stablesgd::net::{self, Activation, NetworkParams, SecondLayer};

#[derive(Debug, Clone)]
struct Case {
    params: NetworkParams<f64>,
    x: Array2<f64>,
    y: Vec<usize>,
}

fn activation() -> impl Strategy<Value = Activation> {
    prop_oneof![Just(Activation::Relu), Just(Activation::Sigmoid), Just(Activation::Tanh)]
}

fn case(act: impl Strategy<Value = Activation>) -> impl Strategy<Value = Case> {
    (1usize..6, 1usize..5, 2usize..4, 1usize..6, act).prop_flat_map(|(n, d, l, m, act)| {
        (
            prop::collection::vec(-2.0f64..2.0, n * d),
            prop::collection::vec(-1.0f64..1.0, n),
            prop::collection::vec(-2.0f64..2.0, n * l),
            prop::collection::vec(-2.0f64..2.0, m * d),
            prop::collection::vec(0..l, m),
        )
            .prop_map(move |(w, b, c, x, y)| Case {
                params: NetworkParams::new(
                    Array2::from_shape_vec((n, d), w).unwrap(),
                    Some(Array1::from(b)),
                    Some(Array2::from_shape_vec((n, l), c).unwrap()),
                    SecondLayer::Trainable,
                    act,
                )
                .unwrap(),
                x: Array2::from_shape_vec((m, d), x).unwrap(),
                y,
            })
    })
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #[test]
    fn second_layer_scaling_is_linear(c in case(activation()), lambda in -3.0f64..3.0, unit in any::<prop::sample::Index>()) {
        let x = c.x.row(0).to_vec();
        let base = net::forward(&c.params, &x).unwrap();
        let scaled = net::forward(&c.params.with_scaled_second_layer(lambda).unwrap(), &x).unwrap();
        for (s, b) in scaled.iter().zip(&base) {
            prop_assert!(close(*s, lambda * b, 1e-12));
        }

        // Scaling a single unit's row moves the output by (lambda - 1) times that unit's share.
        let i = unit.index(c.params.n());
        let mut one = c.params.clone();
        one.parts_mut().2.row_mut(i).mapv_inplace(|v| v * lambda);
        let moved = net::forward(&one, &x).unwrap();
        let share = net::unit_output(&c.params.unit(i), &x, c.params.activation()).unwrap();
        let scale = 1.0 / c.params.n() as f64;
        for k in 0..c.params.l() {
            prop_assert!(close(moved[k], base[k] + (lambda - 1.0) * scale * share[k], 1e-12));
        }
    }

    #[test]
    fn softmax_sums_to_one_and_loss_is_nonnegative(logits in prop::collection::vec(-50.0f64..50.0, 1..8), pick in any::<prop::sample::Index>()) {
        let p = net::softmax(&logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let y = pick.index(logits.len());
        prop_assert!(net::loss(&logits, y).unwrap() >= 0.0);
    }

    #[test]
    fn permuting_units_is_equivariant(c in case(activation()), seed in any::<u64>()) {
        let n = c.params.n();
        let mut perm: Vec<usize> = (0..n).collect();
        // Deterministic shuffle from the seed.
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let q = c.params.permuted(&perm);
        let fp = net::forward_batch(&c.params, c.x.view()).unwrap();
        let fq = net::forward_batch(&q, c.x.view()).unwrap();
        for (a, b) in fp.iter().zip(fq.iter()) {
            prop_assert!(close(*a, *b, 1e-12));
        }
        let rp = net::risk(&c.params, c.x.view(), &c.y).unwrap();
        let rq = net::risk(&q, c.x.view(), &c.y).unwrap();
        prop_assert!(close(rp, rq, 1e-12));
        let gp = net::grad_risk(&c.params, c.x.view(), &c.y).unwrap();
        let gq = net::grad_risk(&q, c.x.view(), &c.y).unwrap();
        for (k, &src) in perm.iter().enumerate() {
            let a = gq.column(k, &q);
            let b = gp.column(src, &c.params);
            for (u, v) in a.iter().zip(&b) {
                prop_assert!(close(*u, *v, 1e-12));
            }
        }
    }

    #[test]
    fn relu_gradient_matches_finite_differences_away_from_kinks(c in case(Just(Activation::Relu))) {
        let h = 1e-6;
        // Skip instances with a pre-activation within 1e-4 of the kink.
        let z = c.x.dot(&c.params.weights().t()) + &c.params.biases();
        prop_assume!(z.iter().all(|v| v.abs() > 1e-4));
        let g = net::grad_risk(&c.params, c.x.view(), &c.y).unwrap();
        let risk = |p: &NetworkParams<f64>| net::risk(p, c.x.view(), &c.y).unwrap();
        let (n, d) = (c.params.n(), c.params.d());
        for i in 0..n {
            for j in 0..d {
                let mut up = c.params.clone();
                up.parts_mut().0[[i, j]] += h;
                let mut down = c.params.clone();
                down.parts_mut().0[[i, j]] -= h;
                let fd = (risk(&up) - risk(&down)) / (2.0 * h);
                prop_assert!((fd - g.w[[i, j]]).abs() <= 1e-5 * (1.0 + fd.abs()), "w[{i},{j}]: {fd} vs {}", g.w[[i, j]]);
            }
            for k in 0..c.params.l() {
                let mut up = c.params.clone();
                up.parts_mut().2[[i, k]] += h;
                let mut down = c.params.clone();
                down.parts_mut().2[[i, k]] -= h;
                let fd = (risk(&up) - risk(&down)) / (2.0 * h);
                prop_assert!((fd - g.c[[i, k]]).abs() <= 1e-5 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn single_and_double_precision_agree(c in case(Just(Activation::Tanh))) {
        let p32 = NetworkParams::new(
            c.params.weights().mapv(|v| v as f32),
            Some(c.params.biases().mapv(|v| v as f32)),
            Some(c.params.second_layer().mapv(|v| v as f32)),
            SecondLayer::Trainable,
            Activation::Tanh,
        ).unwrap();
        let x32 = c.x.mapv(|v| v as f32);
        let a = net::forward_batch(&c.params, c.x.view()).unwrap();
        let b = net::forward_batch(&p32, x32.view()).unwrap();
        for (u, v) in a.iter().zip(b.iter()) {
            prop_assert!((u - *v as f64).abs() < 1e-4);
        }
    }
}
