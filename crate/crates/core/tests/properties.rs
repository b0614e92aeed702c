use morseflow::flow::{integrate, Direction, StepControl, StopCriterion, Termination};
use morseflow::{Monomial, Objective, Polynomial, PolynomialSystem, SingularSpace, Tolerances};
use proptest::prelude::*;
use std::sync::OnceLock;

fn vars() -> Vec<String> {
    ["x", "y", "z"].iter().map(|s| s.to_string()).collect()
}

fn monomial() -> impl Strategy<Value = Monomial> {
    (-5.0..5.0f64, prop::collection::vec(0u32..4, 3)).prop_map(|(coefficient, exponents)| {
        Monomial {
            coefficient,
            exponents,
        }
    })
}

fn polynomial() -> impl Strategy<Value = Polynomial> {
    prop::collection::vec(monomial(), 0..7).prop_map(|terms| Polynomial::from_terms(&vars(), terms))
}

fn point(half: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-half..half, 3)
}

/// Richardson-extrapolated central difference.
fn fd(p: &Polynomial, x: &[f64], i: usize) -> f64 {
    let d = |h: f64| {
        let mut a = x.to_vec();
        let mut b = x.to_vec();
        a[i] += h;
        b[i] -= h;
        (p.evaluate(&a).unwrap() - p.evaluate(&b).unwrap()) / (2.0 * h)
    };
    let h = 1e-3;
    (4.0 * d(h / 2.0) - d(h)) / 3.0
}

fn cone() -> &'static SingularSpace {
    static Z: OnceLock<SingularSpace> = OnceLock::new();
    Z.get_or_init(|| {
        let v = vars();
        let g = Polynomial::parse("x^2 + y^2 - z^2", &v).unwrap();
        SingularSpace::new(
            PolynomialSystem::new(&v, vec![g]).unwrap(),
            vec![[-2.0, 2.0]; 3],
            Tolerances::default(),
        )
        .unwrap()
    })
}

fn sphere() -> &'static SingularSpace {
    static Z: OnceLock<SingularSpace> = OnceLock::new();
    Z.get_or_init(|| {
        let v = vars();
        let g = Polynomial::parse("x^2 + y^2 + z^2 - 1", &v).unwrap();
        SingularSpace::new(
            PolynomialSystem::new(&v, vec![g]).unwrap(),
            vec![[-2.0, 2.0]; 3],
            Tolerances::default(),
        )
        .unwrap()
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gradient_matches_finite_differences(p in polynomial(), x in point(1.5)) {
        let g = Objective::new(p.clone()).gradient(&x);
        let approx: Vec<f64> = (0..3).map(|i| fd(&p, &x, i)).collect();
        let scale = g.iter().map(|v| v.abs()).fold(1.0, f64::max);
        for (a, b) in g.iter().zip(&approx) {
            prop_assert!((a - b).abs() / scale < 1e-6, "{p}: {g:?} vs {approx:?}");
        }
    }

    #[test]
    fn print_then_parse_is_identity(p in polynomial()) {
        let text = p.to_string();
        let q = Polynomial::parse(&text, &vars()).unwrap();
        prop_assert_eq!(q, p);
    }

    #[test]
    fn evaluation_is_additive_and_multiplicative(p in polynomial(), q in polynomial(), x in point(1.5)) {
        let (pv, qv) = (p.evaluate(&x).unwrap(), q.evaluate(&x).unwrap());
        let sum = p.try_add(&q).unwrap().evaluate(&x).unwrap();
        let prod = p.try_mul(&q).unwrap().evaluate(&x).unwrap();
        let scale = 1.0 + pv.abs() + qv.abs();
        prop_assert!((sum - (pv + qv)).abs() < 1e-9 * scale);
        prop_assert!((prod - pv * qv).abs() < 1e-9 * scale * scale);
    }

    #[test]
    fn tangent_projection_is_an_orthogonal_projector(x in point(1.0), v in point(1.0)) {
        let z = sphere();
        prop_assume!(x.iter().map(|a| a * a).sum::<f64>() > 1e-2);
        let y = z.retract(&x).unwrap();
        let once = z.tangent_project(&y, &v);
        let twice = z.tangent_project(&y, &once);
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let normal: Vec<f64> = v.iter().zip(&once).map(|(a, b)| a - b).collect();
        prop_assert!(dot(&normal, &once).abs() < 1e-12);
        // The sphere's tangent space at y is y-perp.
        prop_assert!(dot(&once, &y).abs() < 1e-12);
    }

    #[test]
    fn retraction_lands_on_the_cone(x in point(1.5)) {
        let z = cone();
        if let Ok(y) = z.retract(&x) {
            prop_assert!(z.is_member(&y, z.tolerances().member_tol));
            let again = z.retract(&y).unwrap();
            for (a, b) in y.iter().zip(&again) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn descent_is_monotone_and_balances_energy(x in point(1.0)) {
        let v = vars();
        let f = Objective::new(Polynomial::parse("x^2 + 2*y^2 + 3*z^2 + x*y", &v).unwrap());
        let z = SingularSpace::unconstrained(&v, vec![[-2.0, 2.0]; 3], Tolerances::default()).unwrap();
        prop_assume!(f.value(&x) > 1e-3);
        let stop = [StopCriterion::ReachLevel { c: 0.5 * f.value(&x) }, StopCriterion::ArcBudget { length: 100.0 }];
        let traj = integrate(&f, &z, &x, Direction::Descend, &stop, &StepControl::default()).unwrap();
        prop_assert_eq!(traj.termination, Termination::ReachLevel);
        for w in traj.samples.windows(2) {
            prop_assert!(w[1].f <= w[0].f + 1e-9);
            prop_assert!(w[1].arc_len >= w[0].arc_len);
        }
        // f(x0) - f(xT) = integral of |grad f|^2 dt, by the trapezoid rule.
        let energy: f64 = traj
            .samples
            .windows(2)
            .map(|w| 0.5 * (w[1].t - w[0].t) * (w[0].grad_norm.powi(2) + w[1].grad_norm.powi(2)))
            .sum();
        let drop = traj.first().f - traj.last().f;
        prop_assert!((energy - drop).abs() < 0.02 * drop, "energy {energy} vs drop {drop}");
        prop_assert!(traj.path_length() <= 1.01 * traj.total_arc_length() + 1e-12);
    }

    #[test]
    fn flows_are_deterministic_on_the_cone(x in point(1.0)) {
        let z = cone();
        let v = vars();
        let f = Objective::new(Polynomial::parse("x", &v).unwrap());
        let Ok(y) = z.retract(&x) else { return Ok(()) };
        prop_assume!(y.iter().map(|a| a * a).sum::<f64>() > 1e-4);
        let stop = [StopCriterion::ReachLevel { c: y[0] - 0.2 }, StopCriterion::ArcBudget { length: 10.0 }];
        let a = integrate(&f, z, &y, Direction::Descend, &stop, &StepControl::default());
        let b = integrate(&f, z, &y, Direction::Descend, &stop, &StepControl::default());
        prop_assert_eq!(format!("{a:?}"), format!("{b:?}"));
        if let Ok(t) = a {
            for s in &t.samples {
                prop_assert!(z.is_member(&s.y, z.tolerances().member_tol));
            }
        }
    }
}
