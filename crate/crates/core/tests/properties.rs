//! Property tests for the structural invariants of each layer.

use kserver_lab::embedding::{EmbedderState, FiniteMetric};
use kserver_lab::geometry::{
    least_action, moreau_decompose, moreau_decompose_full, GeneratedCone, LeastActionOptions, LocalMetric, Polyhedron,
};
use kserver_lab::harness::{run_experiment, Algorithm, ExperimentConfig};
use kserver_lab::hst::{
    default_parameters, entropy_gradient_ceiling, opt_move_ratio, sample_assignment_points, union_closure_excess,
    w1_distance, AssignmentRegion, HstKServer, HstTree,
};
use kserver_lab::mirror_flow::{integrate, max_drift, velocity_bound_excess, ConstantControl, EntropicField, StepPolicy};
use kserver_lab::offline_opt::{opt_kserver_flow, DistanceMatrix};
use kserver_lab::paging::{run_paging, sampled_gradient_bound, PagingInstance};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cone_case() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, Vec<f64>)> {
    (1usize..=5).prop_flat_map(|n| {
        (
            prop::collection::vec(prop::collection::vec(-1.0..1.0f64, n), 1..=n + 2),
            prop::collection::vec(-2.0..2.0f64, n),
            prop::collection::vec(0.1..10.0f64, n),
        )
    })
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn moreau_postconditions((gens, x, diag) in cone_case()) {
        prop_assume!(gens.iter().all(|g| g.iter().any(|v| v.abs() > 1e-3)));
        let m = LocalMetric::new(diag).unwrap();
        let cone = GeneratedCone::new(gens.clone()).unwrap();
        let (u, v) = moreau_decompose(&cone, &x, &m).unwrap();
        prop_assert!(max_gap(&x, &u.iter().zip(&v).map(|(a, b)| a + b).collect::<Vec<_>>()) <= 1e-12);
        prop_assert!(m.inner(&u, &v).abs() <= 1e-8);
        for g in &gens {
            prop_assert!(m.inner(&v, g) <= 1e-8);
        }
        // Idempotent on both parts.
        let (uu, uv) = moreau_decompose(&cone, &u, &m).unwrap();
        prop_assert!(max_gap(&uu, &u) <= 1e-8 && uv.iter().all(|a| a.abs() <= 1e-8));
        let (vu, vv) = moreau_decompose(&cone, &v, &m).unwrap();
        prop_assert!(vu.iter().all(|a| a.abs() <= 1e-8) && max_gap(&vv, &v) <= 1e-8);
    }

    #[test]
    fn moreau_is_unique_under_warm_start((gens, x, diag) in cone_case(), pick in prop::collection::vec(any::<bool>(), 7)) {
        prop_assume!(gens.iter().all(|g| g.iter().any(|v| v.abs() > 1e-3)));
        let m = LocalMetric::new(diag).unwrap();
        let cone = GeneratedCone::new(gens).unwrap();
        let cold = moreau_decompose_full(&cone, &x, &m, &[]).unwrap();
        let warm: Vec<usize> = (0..cold.cone.generators().len()).filter(|&i| pick[i % pick.len()]).collect();
        let hot = moreau_decompose_full(&cone, &x, &m, &warm).unwrap();
        prop_assert!(max_gap(&cold.u, &hot.u) <= 1e-8);
    }

    #[test]
    fn least_action_beats_every_tangent_direction(
        seed in any::<u64>(),
        n in 2usize..=5,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cap = n as f64 / 2.0;
        let k = Polyhedron::builder(n).boxed(0.0, 1.0).le(vec![1.0; n], cap).build().unwrap();
        // A point on a random face of the box.
        let x: Vec<f64> = (0..n)
            .map(|_| match rng.gen_range(0..3) {
                0 => 0.0,
                1 => 1.0,
                _ => rng.gen_range(0.0..1.0),
            })
            .collect();
        prop_assume!(x.iter().sum::<f64>() <= cap);
        let m = LocalMetric::new((0..n).map(|_| rng.gen_range(0.2..5.0)).collect()).unwrap();
        let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let la = least_action(&k, &x, &m, &f, &LeastActionOptions::default(), None).unwrap();
        let hf = m.apply(&f);
        let obj = |d: &[f64]| m.dual_norm(&d.iter().zip(&hf).map(|(a, b)| a - b).collect::<Vec<_>>());
        let best = obj(&la.velocity);
        for _ in 0..200 {
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            if y.iter().sum::<f64>() > cap {
                continue;
            }
            let scale = rng.gen_range(0.01..20.0);
            let d: Vec<f64> = y.iter().zip(&x).map(|(a, b)| scale * (a - b)).collect();
            prop_assert!(best <= obj(&d) + 1e-9, "{} > {}", best, obj(&d));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn mirror_flow_respects_velocity_bound_and_region(n in 3usize..=5, r in 0usize..5, w in prop::collection::vec(0.5..3.0f64, 5)) {
        let r = r % n;
        let k = Polyhedron::builder(n).boxed(0.0, 1.0).eq(vec![1.0; n], 1.0).build().unwrap();
        let field = EntropicField::new(w[..n].to_vec(), 0.0).unwrap();
        let control = ConstantControl::negative_unit(n, r);
        let x0 = vec![1.0 / n as f64; n];
        let run = || integrate(&k, &field, &control, &x0, &[], 0.5, &StepPolicy::default()).unwrap();
        let (a, b) = (run(), run());
        prop_assert!(velocity_bound_excess(&a, &field, &control).unwrap() <= 1e-6);
        prop_assert!(max_drift(&a, &k) <= 1e-6);
        prop_assert_eq!(a.samples.len(), b.samples.len());
        prop_assert_eq!(&a.last().x, &b.last().x);
    }

    #[test]
    fn paging_run_invariants(
        w in prop::collection::vec(1.0..4.0f64, 6..=9),
        k in 1usize..=4,
        seed in any::<u64>(),
    ) {
        let n = w.len();
        let inst = PagingInstance::new(w, k, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let reqs: Vec<usize> = (0..40).map(|_| rng.gen_range(0..n)).collect();
        let run = run_paging(&inst, &reqs, true).unwrap();
        let c = run.checks.unwrap();
        prop_assert!(c.mass_error <= 1e-10);
        prop_assert!(c.monotonicity_excess <= 1e-12);
        prop_assert!(c.box_excess <= 1e-9);
        prop_assert!(c.descent_excess <= 1e-3);
        prop_assert!(c.movement_excess <= 1e-3);
        prop_assert!(run.opt_cost <= run.alg_cost + 1e-9);
        let g = sampled_gradient_bound(&inst, &mut rng, 200);
        prop_assert!(g <= (1.0 / inst.delta()).ln() + 1.0 + 1e-12);
    }

    #[test]
    fn w1_is_a_metric_on_tree_measures(seed in any::<u64>(), height in 1usize..=3, b in 2usize..=3) {
        let t = HstTree::complete(b, height, 2.0, 4.0).unwrap();
        let n = t.leaves().len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || {
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let s: f64 = v.iter().sum();
            v.into_iter().map(|a| 2.0 * a / s).collect::<Vec<_>>()
        };
        let (p, q, r) = (draw(), draw(), draw());
        let d = |a: &[f64], b: &[f64]| w1_distance(&t, a, b).unwrap();
        prop_assert!(d(&p, &p).abs() <= 1e-12);
        prop_assert!((d(&p, &q) - d(&q, &p)).abs() <= 1e-12);
        prop_assert!(d(&p, &r) <= d(&p, &q) + d(&q, &r) + 1e-12);
    }

    #[test]
    fn assignment_region_properties(seed in any::<u64>(), k in 2usize..=3) {
        let t = HstTree::complete(2, 3, 2.0, 4.0).unwrap();
        let (delta, eps) = default_parameters(k);
        let mut alg = HstKServer::new(t.clone(), k, delta, eps, &(0..k).collect::<Vec<_>>()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let leaves = t.leaves().len();
        for _ in 0..6 {
            alg.serve(rng.gen_range(0..leaves)).unwrap();
            let (pairs, worst) = union_closure_excess(alg.region(), alg.state(), 1e-9, 8);
            prop_assert!(pairs == 0 || worst <= 1e-8, "union slack {}", worst);
        }
        let region = AssignmentRegion::new(&t, k).unwrap();
        let pts = sample_assignment_points(&t, &region, &mut rng, 6).unwrap();
        let ceil = entropy_gradient_ceiling(delta);
        for x in &pts {
            for (y, y2) in pts.iter().zip(pts.iter().skip(1)) {
                prop_assert!(opt_move_ratio(&region, x, y, y2, delta) <= ceil + 1e-12);
            }
        }
    }

    #[test]
    fn opt_is_monotone_in_k(seed in any::<u64>(), n in 3usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0))).collect();
        let d = DistanceMatrix::from_fn(n, |i, j| ((pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2)).sqrt())
            .unwrap();
        let reqs: Vec<usize> = (0..8).map(|_| rng.gen_range(0..n)).collect();
        let mut prev = f64::INFINITY;
        for k in 1..n {
            let rho0: Vec<usize> = (0..k).collect();
            let c = opt_kserver_flow(&d, k, &reqs, &rho0).unwrap().cost;
            prop_assert!(c <= prev + 1e-6, "k={} {} > {}", k, c, prev);
            prev = c;
        }
    }

    #[test]
    fn embedder_is_deterministic(seed in any::<u64>(), k in 2usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let metric = FiniteMetric::random_euclidean(8, 2, &mut rng).unwrap();
        let reqs: Vec<usize> = (0..30).map(|_| rng.gen_range(0..8)).collect();
        let run = || {
            let mut st = EmbedderState::new(&metric, k, 4, seed).unwrap();
            for &r in &reqs {
                st.process_request(&metric, r).unwrap();
            }
            (st.stack(), st.reset_counts().to_vec())
        };
        prop_assert_eq!(run(), run());
    }
}

#[test]
fn harness_csv_is_reproducible() {
    let mut cfg = ExperimentConfig::new(Algorithm::Paging, vec![3, 1, 4]);
    cfg.paging.n = 8;
    cfg.paging.k = 3;
    cfg.requests.count = 30;
    cfg.verify = "fast".into();
    let a = run_experiment(&cfg).unwrap();
    cfg.workers = Some(2);
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert!(a.passed());
    let seeds: Vec<u64> = a.rows.iter().map(|r| r.seed).collect();
    assert_eq!(seeds, vec![3, 1, 4]);
}
