use ndarray::Array2;
use proptest::prelude::*;

use stablesgd::net::{Activation, NetworkParams};
use stablesgd::prune;

/// Fixed-mode network without bias whose unit columns are the rows of `w`.
fn net(w: Array2<f64>) -> NetworkParams<f64> {
    NetworkParams::fixed(w, None, 2, Activation::Relu).unwrap()
}

fn weights() -> impl Strategy<Value = Array2<f64>> {
    (1usize..40, 1usize..4).prop_flat_map(|(n, d)| {
        prop::collection::vec(-5.0f64..5.0, n * d)
            .prop_map(move |v| Array2::from_shape_vec((n, d), v).unwrap())
    })
}

fn nonzero_weights() -> impl Strategy<Value = Array2<f64>> {
    weights().prop_filter("nonzero", |w| w.iter().any(|v| v.abs() > 1e-3))
}

fn frob(p: &NetworkParams<f64>) -> f64 {
    prune::column_norms(p).iter().map(|v| v * v).sum::<f64>().sqrt()
}

proptest! {
    #[test]
    fn error_does_not_increase_with_kappa(w in nonzero_weights(), a in 0.01f64..=1.0, b in 0.01f64..=1.0) {
        let p = net(w);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let e_lo = prune::prune_topk(&p, lo).unwrap().1.rel_error;
        let e_hi = prune::prune_topk(&p, hi).unwrap().1.rel_error;
        prop_assert!(e_hi <= e_lo + 1e-15);
        prop_assert!(prune::prune_topk(&p, 1.0).unwrap().1.rel_error == 0.0);
    }

    #[test]
    fn ratio_does_not_decrease_with_epsilon(w in nonzero_weights(), a in 0.001f64..0.999, b in 0.001f64..0.999) {
        let p = net(w);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(prune::pruning_ratio(&p, lo).unwrap() <= prune::pruning_ratio(&p, hi).unwrap());
    }

    #[test]
    fn ratio_is_scale_invariant(w in nonzero_weights(), eps in 0.01f64..0.9, log_scale in -6.0f64..6.0) {
        let s = 2f64.powf(log_scale);
        let a = prune::pruning_ratio(&net(w.clone()), eps).unwrap();
        let b = prune::pruning_ratio(&net(w * s), eps).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn ratio_is_tight(w in nonzero_weights(), eps in 0.01f64..0.9) {
        let p = net(w);
        let n = p.n();
        let removed = prune::removable_columns(&p, eps).unwrap();
        if removed > 0 {
            let kappa = prune::kappa_for_ratio(prune::pruning_ratio(&p, eps).unwrap());
            let (_, rep) = prune::prune_topk(&p, kappa).unwrap();
            prop_assert_eq!(rep.kept.len(), n - removed);
            prop_assert!(rep.rel_error <= eps * (1.0 + 1e-12));
        }
        if removed < n {
            // One more removed column breaks the threshold.
            let keep = n - removed - 1;
            if keep > 0 {
                let (_, rep) = prune::prune_topk(&p, keep as f64 / n as f64).unwrap();
                prop_assert!(rep.rel_error > eps * (1.0 - 1e-12), "{} vs {eps}", rep.rel_error);
            }
        }
    }

    #[test]
    fn relative_error_is_the_kterm_error_of_column_norms(w in nonzero_weights(), kappa in 0.01f64..=1.0) {
        let p = net(w);
        let (_, rep) = prune::prune_topk(&p, kappa).unwrap();
        let k = prune::kept_count(kappa, p.n());
        let sigma = prune::kterm_error(&prune::column_norms(&p), k).unwrap();
        prop_assert!((sigma - rep.rel_error * frob(&p)).abs() <= 1e-10 * (1.0 + sigma));
    }

    #[test]
    fn pruned_network_keeps_only_the_reported_units(w in weights(), kappa in 0.01f64..=1.0) {
        let p = net(w);
        let (pruned, rep) = prune::prune_topk(&p, kappa).unwrap();
        for i in 0..p.n() {
            let col = pruned.column(i);
            if rep.kept.binary_search(&i).is_ok() {
                prop_assert_eq!(col, p.column(i));
            } else {
                prop_assert!(col.iter().all(|&v| v == 0.0));
            }
        }
    }
}

#[test]
fn equal_norms_keep_the_lower_index() {
    let p = net(Array2::from_elem((4, 1), 1.0));
    let (_, rep) = prune::prune_topk(&p, 0.5).unwrap();
    assert_eq!(rep.kept, vec![0, 1]);
}
