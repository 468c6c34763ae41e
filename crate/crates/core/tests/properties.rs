use proptest::prelude::*;
use steepfit::certify::{compare_models, error_certificate};
use steepfit::data::{series_stats, GridField, SeriesStats, TimeSeries};
use steepfit::descent::{shotgun, steepest_descent, DescentOptions, ParamBox};
use steepfit::expr::{parse_model, BinOp, Expr, Func, ModelExpr};
use steepfit::integrate::{euler_piecewise, polygon_interpolant, rk4_solve, sample_times};
use steepfit::objective::{
    ClosureObjective, ConstraintMode, FnFitObjective, Objective, OdeObjective, PdeObjective, PdeTerm, Stencil,
};

fn central_difference(obj: &dyn Objective, a: &[f64]) -> Vec<f64> {
    (0..a.len())
        .map(|k| {
            let h = 1e-6 * a[k].abs().max(1.0);
            let mut plus = a.to_vec();
            let mut minus = a.to_vec();
            plus[k] += h;
            minus[k] -= h;
            (obj.value(&plus) - obj.value(&minus)) / (2.0 * h)
        })
        .collect()
}

fn assert_gradient_close(obj: &dyn Objective, a: &[f64]) -> Result<(), TestCaseError> {
    let (f, g) = obj.value_and_gradient(a);
    prop_assert!((f - obj.value(a)).abs() <= 1e-12 * f.abs().max(1.0));
    let fd = central_difference(obj, a);
    let scale = g.iter().chain(&fd).fold(1e-8, |m: f64, v| m.max(v.abs()));
    for (exact, approx) in g.iter().zip(&fd) {
        prop_assert!((exact - approx).abs() / scale < 1e-6, "{g:?} vs {fd:?}");
    }
    Ok(())
}

fn heat_grid() -> GridField {
    let xs: Vec<f64> = (0..=10).map(|i| 2.0 + i as f64 / 10.0).collect();
    let ts: Vec<f64> = (0..=10).map(|j| 2.0 + j as f64 / 10.0).collect();
    GridField::sample(xs, ts, |x, t| (-x * x / (4.0 * t)).exp() / t.sqrt()).unwrap()
}

fn pde_terms() -> Vec<PdeTerm> {
    [Stencil::UX, Stencil::UXX, Stencil::UT, Stencil::UTT]
        .into_iter()
        .enumerate()
        .map(|(coefficient, stencil)| PdeTerm { coefficient, stencil })
        .collect()
}

fn arb_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-5.0f64..5.0).prop_map(|v| Expr::Num((v * 100.0).round() / 100.0)),
        (0usize..2).prop_map(Expr::Param),
        (0usize..2).prop_map(Expr::State),
        Just(Expr::Time),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        let op = prop_oneof![
            Just(BinOp::Add),
            Just(BinOp::Sub),
            Just(BinOp::Mul),
            Just(BinOp::Div),
            Just(BinOp::Pow)
        ];
        let func = prop_oneof![Just(Func::Sin), Just(Func::Cos), Just(Func::Exp), Just(Func::Abs)];
        prop_oneof![
            inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
            (op, inner.clone(), inner.clone()).prop_map(|(o, l, r)| Expr::Binary(o, Box::new(l), Box::new(r))),
            (func, inner).prop_map(|(f, e)| Expr::Call(f, Box::new(e))),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn printed_expressions_reparse_to_the_same_function(e in arb_expr(), a in prop::array::uniform2(-2.0f64..2.0), x in prop::array::uniform2(-2.0f64..2.0), t in -2.0f64..2.0) {
        let model = ModelExpr::from_components(vec![e], 2, 2);
        let reparsed = parse_model(&model.to_string(), 2, 2).unwrap();
        let v1 = model.eval(&a, t, &x).unwrap()[0];
        let v2 = reparsed.eval(&a, t, &x).unwrap()[0];
        prop_assert!(v1 == v2 || (v1.is_nan() && v2.is_nan()), "{model}: {v1} vs {v2}");
    }

    #[test]
    fn fn_fit_gradient_matches_finite_differences(a in prop::array::uniform3(-1.5f64..1.5)) {
        let ts = TimeSeries::sample(|t| vec![(0.7 * t).sin() + t, t * t], 0.0, 2.0, 0.1).unwrap();
        let model = parse_model("a1*sin(a2*t) + a3*t; a1*a3*t^2 + exp(a2*t/4)", 3, 0).unwrap();
        let obj = FnFitObjective::new(model, ts).unwrap();
        assert_gradient_close(&obj, &a)?;
    }

    #[test]
    fn ode_gradient_matches_finite_differences(a in prop::array::uniform2(-3.0f64..3.0)) {
        let ts = TimeSeries::sample(|t| {
            let e = (2.0 * t).exp();
            vec![-2.0 * e / (e - 3.0)]
        }, 1.0, 2.0, 0.1).unwrap();
        let model = parse_model("a1*x1^2+a2*x1", 2, 1).unwrap();
        let obj = OdeObjective::new(model, ts).unwrap();
        assert_gradient_close(&obj, &a)?;
    }

    #[test]
    fn pde_gradient_matches_finite_differences(a in prop::array::uniform5(-2.0f64..2.0)) {
        let obj = PdeObjective::new(pde_terms(), &heat_grid(), ConstraintMode::None, true).unwrap();
        assert_gradient_close(&obj, &a)?;
    }

    #[test]
    fn pde_objective_is_homogeneous(a in prop::array::uniform4(-3.0f64..3.0), lambda in -10.0f64..10.0) {
        let obj = PdeObjective::new(pde_terms(), &heat_grid(), ConstraintMode::None, false).unwrap();
        let scaled: Vec<f64> = a.iter().map(|v| lambda * v).collect();
        let (f, fl) = (obj.value(&a), obj.value(&scaled));
        prop_assert!((fl - lambda * lambda * f).abs() <= 1e-12 * fl.abs().max(f64::MIN_POSITIVE));
    }

    #[test]
    fn certificate_bound_is_monotone(m in 0.0f64..1.0, b in 1e-3f64..0.5, delta in 0.0f64..10.0, l in 0.0f64..5.0, s in 0.0f64..1.0, bump in 1.0f64..2.0) {
        let stats = |b: f64, delta: f64| SeriesStats { min_gap: b, max_gap: b, max_slope: delta, t_start: 0.0, t_end: 1.0 };
        let base = error_certificate(m, &stats(b, delta), l).unwrap();
        prop_assert!(base.bound(0.0) >= 0.0);
        prop_assert!((base.bound(0.0) - m.sqrt() * b * b).abs() <= 1e-15);
        prop_assert!(error_certificate(m * bump, &stats(b, delta), l).unwrap().bound(s) >= base.bound(s));
        prop_assert!(error_certificate(m, &stats(b * bump, delta), l).unwrap().bound(s) >= base.bound(s));
        prop_assert!(error_certificate(m, &stats(b, delta * bump), l).unwrap().bound(s) >= base.bound(s));
        prop_assert!(error_certificate(m, &stats(b, delta), l * bump).unwrap().bound(s) >= base.bound(s));
        if l > 0.0 {
            prop_assert!(base.bound(s + 0.01) > base.bound(s));
        }
        let cmp = compare_models(&base, &base).unwrap();
        prop_assert!((cmp.bound(s) - 2.0 * base.bound(s)).abs() <= 1e-12 * cmp.bound(s).max(1.0));
    }

    #[test]
    fn descent_is_deterministic_and_monotone(c in prop::array::uniform2(-3.0f64..3.0), start in prop::array::uniform2(-5.0f64..5.0)) {
        let obj = ClosureObjective::new(2, move |a: &[f64]| {
            let (u, v) = (a[0] - c[0], a[1] - c[1]);
            (u * u + 10.0 * v * v + u * v, vec![2.0 * u + v, 20.0 * v + u])
        });
        let opts = DescentOptions { step: 0.5, record_trace: true, ..Default::default() };
        let first = steepest_descent(&obj, &start, &opts, &ConstraintMode::None).unwrap();
        let second = steepest_descent(&obj, &start, &opts, &ConstraintMode::None).unwrap();
        prop_assert_eq!(&first, &second);
        for w in first.trace.windows(2) {
            prop_assert!(w[1].objective <= w[0].objective);
        }
        prop_assert!((first.params[0] - c[0]).abs() < 1e-6 && (first.params[1] - c[1]).abs() < 1e-6);
    }

    #[test]
    fn unit_norm_descent_stays_on_the_sphere(start in prop::array::uniform3(0.1f64..2.0)) {
        let obj = ClosureObjective::new(3, |a: &[f64]| {
            let w = [3.0, 1.0, 2.0];
            (a.iter().zip(w).map(|(x, w)| w * x * x).sum(), a.iter().zip(w).map(|(x, w)| 2.0 * w * x).collect())
        });
        let opts = DescentOptions { step: 0.1, max_iters: 500, ..Default::default() };
        let r = steepest_descent(&obj, &start, &opts, &ConstraintMode::UnitNorm).unwrap();
        let norm: f64 = r.params.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() < 1e-12);
    }
}

#[test]
fn shotgun_is_reproducible_across_thread_counts() {
    let obj = ClosureObjective::new(2, |a: &[f64]| {
        let w = a[0] * a[0] - 1.0;
        (w * w + (a[1] - 0.5).powi(2), vec![4.0 * a[0] * w, 2.0 * (a[1] - 0.5)])
    });
    let bounds = ParamBox::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
    let opts = DescentOptions::default();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| shotgun(&obj, &bounds, 16, &opts, 99).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn certificate_holds_for_linear_growth() {
    // x' = k x with exact exponential data; the fitted model is exact.
    for &(k, h) in &[(1.0, 0.1), (-2.0, 0.05), (0.5, 0.2)] {
        let ts = TimeSeries::sample(|t: f64| vec![(k * t).exp()], 0.0, 1.0, h).unwrap();
        let model = parse_model("a1*x1", 1, 1).unwrap();
        let obj = OdeObjective::new(model.clone(), ts.clone()).unwrap();
        let m = obj.value(&[k]);
        let stats = series_stats(&ts);
        let l = steepfit::certify::estimate_lipschitz(&model, &[k], &ts).unwrap().value;
        let cert = error_certificate(m, &stats, l).unwrap();
        let y = rk4_solve(&model, &[k], 0.0, ts.value(0), ts.last_time(), 1e-4).unwrap();
        let polygon = polygon_interpolant(&ts);
        let euler = euler_piecewise(&model, &[k], &ts).unwrap();
        for t in sample_times(0.0, ts.last_time(), 1000) {
            let gap = (polygon.eval(t).unwrap()[0] - y.eval(t).unwrap()[0]).abs();
            assert!(gap <= cert.bound(t) + 1e-8, "k={k} t={t}: {gap} > {}", cert.bound(t));
            let euler_gap = (euler.eval(t).unwrap()[0] - polygon.eval(t).unwrap()[0]).abs();
            assert!(euler_gap <= m.sqrt() * stats.max_gap * (1.0 + 1e-9));
        }
    }
}
