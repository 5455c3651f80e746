use levy_exit::domain::Domain;
use levy_exit::entrance::{entrance_time, Target};
use levy_exit::gen::{dyadic_scalar, TIME_GRID};
use levy_exit::levy::LevyModel;
use levy_exit::rng::stream;
use levy_exit::sde::{Coefficients, Policy, SimSpec};
use levy_exit::skorohod::{apply_timechange, metric_finite, timechange_seminorm, SearchBudget, TimeChange};
use levy_exit::value::{path_values, CostFn, CostSpec};
use levy_exit::CadlagPath;
use proptest::prelude::*;

const HORIZON: f64 = 4.0;

fn scalar_path(seed: u64) -> CadlagPath {
    dyadic_scalar(&mut stream(seed, 0), HORIZON, -1.5, 1.5, 10, 0.4).unwrap()
}

/// Piecewise-linear time change of `[0, 4]` with power-of-two slopes.
fn dyadic_timechange(exps: &[i32]) -> TimeChange {
    let w: Vec<f64> = exps.iter().map(|&e| 2f64.powi(e)).collect();
    let total: f64 = w.iter().sum();
    let n = w.len();
    let s: Vec<f64> = (0..=n).map(|i| HORIZON * i as f64 / n as f64).collect();
    let mut l = vec![0.0];
    let mut acc = 0.0;
    for wi in &w {
        acc += wi;
        l.push(HORIZON * acc / total);
    }
    l[n] = HORIZON;
    TimeChange::new(s, l).unwrap()
}

fn mesh(p: &CadlagPath) -> Vec<f64> {
    let mut ts: Vec<f64> = (0..256).map(|k| k as f64 * HORIZON / 256.0).collect();
    ts.extend(p.breakpoints());
    ts
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eval_is_right_continuous(seed in any::<u64>()) {
        let p = scalar_path(seed);
        for &t in p.breakpoints() {
            let v = p.eval_scalar(t).unwrap();
            let h = TIME_GRID / 1024.0;
            let near = p.eval_scalar(t + h).unwrap();
            let slope = p.slope_at(p.segment_index(t))[0];
            prop_assert!((near - v - slope * h).abs() <= 1e-12);
        }
    }

    #[test]
    fn envelope_below_path_and_left_limits(seed in any::<u64>()) {
        let p = scalar_path(seed);
        let env = p.lower_envelope().unwrap();
        for &t in &mesh(&p) {
            let e = env.eval(t).unwrap();
            prop_assert!(e <= p.eval_scalar(t).unwrap());
            if t > 0.0 {
                prop_assert!(e <= p.left_limit(t).unwrap()[0]);
            }
        }
    }

    #[test]
    fn running_inf_monotone_and_envelope_invariant(seed in any::<u64>()) {
        let p = scalar_path(seed);
        let env = p.lower_envelope().unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..64 {
            let t = HORIZON * k as f64 / 64.0;
            let m = p.running_inf(t).unwrap();
            prop_assert!(m <= prev);
            prop_assert_eq!(m, env.running_inf(t).unwrap());
            prev = m;
        }
    }

    #[test]
    fn sup_norm_triangle_and_homogeneity(a in any::<u64>(), b in any::<u64>(), c in -4i32..4) {
        let (x, y) = (scalar_path(a), scalar_path(b));
        let sum = x.linear_combination(1.0, &y, 1.0).unwrap();
        let nx = x.sup_norm(HORIZON).unwrap();
        let ny = y.sup_norm(HORIZON).unwrap();
        prop_assert!(sum.sup_norm(HORIZON).unwrap() <= nx + ny + 1e-12);
        let k = 2f64.powi(c);
        // same breakpoints, so the scaling is exact
        let scaled = x.linear_combination(k, &x, 0.0).unwrap();
        prop_assert_eq!(scaled.sup_norm(HORIZON).unwrap(), k * nx);
    }

    #[test]
    fn seminorm_of_inverse(exps in prop::collection::vec(-3i32..=3, 1..6)) {
        let lam = dyadic_timechange(&exps);
        prop_assert_eq!(timechange_seminorm(&lam), timechange_seminorm(&lam.inverse()));
    }

    #[test]
    fn entrance_commutes_with_time_change(seed in any::<u64>(), exps in prop::collection::vec(-2i32..=2, 1..5)) {
        let p = scalar_path(seed);
        let lam = dyadic_timechange(&exps);
        let q = apply_timechange(&p, &lam).unwrap();
        let dom = Domain::interval(-1.0, 1.0).unwrap();
        for target in [Target::OpenComplement, Target::ClosedComplement] {
            let t = entrance_time(&p, &dom, target).unwrap();
            let tq = entrance_time(&q, &dom, target).unwrap();
            if t.is_infinite() {
                prop_assert!(tq.is_infinite());
            } else {
                prop_assert!((tq - lam.eval_inverse(t)).abs() <= 1e-12, "{} vs {}", tq, lam.eval_inverse(t));
            }
        }
    }

    #[test]
    fn metric_is_symmetric(a in any::<u64>(), b in any::<u64>()) {
        let (x, y) = (scalar_path(a), scalar_path(b));
        let budget = SearchBudget::default();
        let xy = metric_finite(&x, &y, 2.0, &budget).unwrap();
        let yx = metric_finite(&y, &x, 2.0, &budget).unwrap();
        prop_assert_eq!(xy.upper, yx.upper);
        prop_assert_eq!(xy.lower, yx.lower);
        prop_assert!(xy.lower <= xy.upper);
    }

    #[test]
    fn signed_distance_sign_and_lipschitz(
        x in prop::collection::vec(-3.0f64..3.0, 2),
        y in prop::collection::vec(-3.0f64..3.0, 2),
        shape in 0usize..3,
    ) {
        let dom = match shape {
            0 => Domain::cube(2, 1.0).unwrap(),
            1 => Domain::ball(vec![0.5, -0.25], 1.5).unwrap(),
            _ => Domain::new(levy_exit::DomainSpec::Polytope {
                normals: vec![vec![1.0, 1.0], vec![-1.0, 0.0], vec![0.0, -1.0]],
                offsets: vec![1.0, 1.0, 1.0],
            }).unwrap(),
        };
        let (rx, ry) = (dom.signed_distance(&x).unwrap(), dom.signed_distance(&y).unwrap());
        prop_assert_eq!(rx > 0.0, dom.contains_open(&x).unwrap());
        prop_assert_eq!(rx >= 0.0, dom.contains_closed(&x).unwrap());
        let dist = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
        prop_assert!((rx - ry).abs() <= dist + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn value_dominance_and_boundary_shift(x in -0.9f64..0.9, c in 0.0f64..2.0, seed in any::<u64>()) {
        let spec = SimSpec::new(
            Domain::interval(-1.0, 1.0).unwrap(),
            Policy::constant(0.0, 1, -1.0, 1.0).unwrap(),
            Coefficients::scalar(-1.0, 1.0, 0.0, 0.0, 1.0, 0.0).unwrap(),
            LevyModel::none(1),
            1e-3,
            50.0,
        ).unwrap();
        let bump = CostFn::new(CostSpec::GaussianBump { center: vec![0.2], width: 0.5, height: 1.0 }, 1).unwrap();
        let g = CostFn::new(CostSpec::Coordinate { index: 0, scale: 0.5, offset: 0.0 }, 1).unwrap();
        let g_up = CostFn::new(CostSpec::Coordinate { index: 0, scale: 0.5, offset: c }, 1).unwrap();
        let zero = CostFn::constant(0.0, 1);
        let n = 16;
        let base = path_values(&[x], &spec, &bump, &g, n, seed).unwrap();
        let more = path_values(&[x], &spec, &CostFn::constant(1.0, 1), &g, n, seed).unwrap();
        let shifted = path_values(&[x], &spec, &bump, &g_up, n, seed).unwrap();
        let disc = path_values(&[x], &spec, &zero, &CostFn::constant(1.0, 1), n, seed).unwrap();
        for i in 0..n {
            // ℓ = bump ≤ 1 pointwise
            prop_assert!(base[i].0 <= more[i].0 + 1e-12);
            prop_assert!((shifted[i].0 - base[i].0 - c * disc[i].0).abs() <= 1e-12);
            prop_assert!(base[i].0.abs() <= 1.0 + 0.5);
        }
    }
}
