use ipv_core::analysis::{bound_report, check_bounds};
use ipv_core::sdpform::Margin;
use ipv_core::{
    bounds_for, build_relaxation_with, exact_gamma, Network, Sense, Variant, VariableLayout,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Case {
    net: Network,
    center: Vec<f64>,
    radius: f64,
    rng: ChaCha8Rng,
}

fn case(seed: u64, depth: usize, width: usize, radius: f64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Network::random(2, &vec![width; depth], 3, &mut rng).unwrap();
    let center = vec![rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)];
    Case { net, center, radius, rng }
}

impl Case {
    fn sample(&mut self) -> Vec<f64> {
        let r = self.radius;
        self.center.iter().map(|c| c + self.rng.random_range(-r..=r)).collect()
    }
}

/// `v = (1, x_0, ..., x_L)` from the true forward trace.
fn lifted(acts: &[DVector<f64>], depth: usize) -> Vec<f64> {
    std::iter::once(1.0).chain(acts[..=depth].iter().flat_map(|a| a.iter().copied())).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pruning_preserves_outputs_on_the_box(seed in 0u64..10_000, depth in 1usize..4, radius in 0.05f64..1.0) {
        let mut c = case(seed, depth, 4, radius);
        let bounds = bounds_for(&c.net, &c.center, radius).unwrap();
        let Ok((pruned, _, _)) = c.net.prune_inactive(&bounds) else { return Ok(()) };
        for _ in 0..50 {
            let x = c.sample();
            let d = (c.net.forward(&x).unwrap() - pruned.forward(&x).unwrap()).amax();
            prop_assert!(d <= 1e-12, "deviation {d}");
        }
    }

    #[test]
    fn weight_scaling_preserves_outputs_and_labels(seed in 0u64..10_000, depth in 1usize..6) {
        let mut c = case(seed, depth, 5, 2.0);
        let (scaled, factors) = c.net.w_scale().unwrap();
        prop_assert_eq!(factors.len(), depth);
        for _ in 0..50 {
            let x = c.sample();
            let (f, g) = (c.net.forward(&x).unwrap(), scaled.forward(&x).unwrap());
            prop_assert!((&g - &f).amax() <= 1e-9 * f.amax().max(1e-300));
            prop_assert_eq!(c.net.predict(&x).unwrap(), scaled.predict(&x).unwrap());
        }
    }

    #[test]
    fn save_load_is_bit_exact(seed in 0u64..10_000, depth in 1usize..4) {
        let c = case(seed, depth, 3, 0.1);
        let back = Network::from_json_str(&c.net.to_json_string()).unwrap();
        prop_assert_eq!(back, c.net);
    }

    #[test]
    fn sampled_activations_stay_in_their_boxes(seed in 0u64..10_000, depth in 1usize..5, radius in 0.01f64..1.0) {
        let mut c = case(seed, depth, 4, radius);
        let bounds = bounds_for(&c.net, &c.center, radius).unwrap();
        for _ in 0..100 {
            let x = c.sample();
            let acts = c.net.trace(&x).unwrap();
            for (i, a) in acts[..=depth].iter().enumerate() {
                prop_assert!(bounds.layer(i).contains(a.as_slice(), 1e-12), "layer {i}");
            }
        }
    }

    #[test]
    fn true_traces_satisfy_every_variant(seed in 0u64..10_000, depth in 1usize..4) {
        let mut c = case(seed, depth, 3, 0.3);
        let bounds = bounds_for(&c.net, &c.center, c.radius).unwrap();
        let predicted = c.net.predict(&c.center).unwrap();
        let target = (predicted + 1) % 3;
        let margin = Margin::for_target(&c.net, predicted, target).unwrap();
        let problems: Vec<_> =
            Variant::all().into_iter().map(|v| build_relaxation_with(&c.net, &bounds, &margin, v).unwrap()).collect();
        for _ in 0..100 {
            let x = c.sample();
            let acts = c.net.trace(&x).unwrap();
            let v = lifted(&acts, depth);
            for prob in &problems {
                for con in &prob.constraints {
                    let lhs = con.coeffs.inner_with(|_, r, s| v[r] * v[s]);
                    let tol = 1e-9 * (1.0 + con.rhs.abs());
                    let ok = match con.sense {
                        Sense::Eq => (lhs - con.rhs).abs() <= tol,
                        Sense::Le => lhs <= con.rhs + tol,
                        Sense::Ge => lhs >= con.rhs - tol,
                    };
                    prop_assert!(ok, "{} {:?}: {lhs} vs {}", prob.meta.variant, con.sense, con.rhs);
                }
                let objective = prob.objective.inner_with(|_, r, s| v[r] * v[s]) + prob.offset;
                let out = c.net.forward(&x).unwrap();
                let expected = out[predicted] - out[target];
                prop_assert!((objective - expected).abs() <= 1e-9 * (1.0 + expected.abs()));
            }
        }
    }

    #[test]
    fn rank_one_points_obey_the_analytic_bounds(seed in 0u64..10_000, depth in 1usize..5, radius in 0.01f64..0.5) {
        let mut c = case(seed, depth, 4, radius);
        let report = bound_report(&c.net, &c.center, radius).unwrap();
        let layout = VariableLayout::new(&c.net.layer_sizes()[..=depth]);
        for _ in 0..20 {
            let x = c.sample();
            let v = DVector::from_vec(lifted(&c.net.trace(&x).unwrap(), depth));
            let p: DMatrix<f64> = &v * v.transpose();
            let check = check_bounds(&p, &layout, &report).unwrap();
            prop_assert!(check.holds(1e-9), "{check:?}");
        }
    }

    #[test]
    fn sampled_margins_never_beat_the_oracle(seed in 0u64..10_000, depth in 1usize..3) {
        let mut c = case(seed, depth, 3, 0.25);
        let bounds = bounds_for(&c.net, &c.center, c.radius).unwrap();
        let predicted = c.net.predict(&c.center).unwrap();
        let target = (predicted + 2) % 3;
        let gamma = exact_gamma(&c.net, &bounds, target).unwrap();
        let sampled = (0..1000)
            .map(|_| {
                let x = c.sample();
                let out = c.net.forward(&x).unwrap();
                out[predicted] - out[target]
            })
            .fold(f64::INFINITY, f64::min);
        prop_assert!(gamma <= sampled + 1e-9, "oracle {gamma} above sample {sampled}");
    }
}
