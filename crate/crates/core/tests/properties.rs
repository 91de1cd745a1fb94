use finslerlab_core::connections::spray;
use finslerlab_core::expr::{Ast, BinOp, Func, Var};
use finslerlab_core::harness::jet_vs_fd;
use finslerlab_core::matsumoto::{change_identities, Orientation};
use finslerlab_core::metric::Structure;
use finslerlab_core::models::builtin;
use finslerlab_core::numkit::{rel_residual, Layout};
use finslerlab_core::{parse_expr, Jet, Scalar};
use proptest::prelude::*;

fn ast_strategy() -> impl Strategy<Value = Ast> {
    let leaf = prop_oneof![
        (0u32..10_000).prop_map(|k| Ast::Num(k as f64 / 8.0)),
        (0usize..3).prop_map(|i| Ast::Var(Var::X(i))),
        (0usize..3).prop_map(|i| Ast::Var(Var::Y(i))),
        prop::sample::select(vec!["a", "kappa", "w2"]).prop_map(|p| Ast::Param(p.to_string())),
    ];
    leaf.prop_recursive(5, 48, 2, |inner| {
        let func = prop::sample::select(vec![Func::Sqrt, Func::Abs, Func::Sin, Func::Cos, Func::Exp, Func::Log]);
        let op = prop::sample::select(vec![BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Pow]);
        prop_oneof![
            inner.clone().prop_map(|a| Ast::Neg(Box::new(a))),
            (func, inner.clone()).prop_map(|(f, a)| Ast::Call(f, Box::new(a))),
            (op, inner.clone(), inner).prop_map(|(o, a, b)| Ast::Binary(o, Box::new(a), Box::new(b))),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn printed_expressions_parse_back(ast in ast_strategy()) {
        let printed = ast.to_string();
        let reparsed = parse_expr(&printed).unwrap();
        prop_assert_eq!(reparsed, ast, "{}", printed);
    }

    #[test]
    fn jet_products_obey_leibniz(
        a in -3.0f64..3.0, b in -3.0f64..3.0, c in -1.0f64..1.0,
        u in -2.0f64..2.0, v in -2.0f64..2.0,
    ) {
        let layout = Layout::get(2, 3);
        let x0 = Jet::variable(&layout, 0, u);
        let x1 = Jet::variable(&layout, 1, v);
        let f = x0.sin() * a + x1.powi(2) * b;
        let g = (x0.clone() * c).exp() * x1.clone() + x0.cos();
        let fg = f.clone() * g.clone();
        let tol = 1e-10 * (1.0 + a.abs() + b.abs());
        for i in 0..2 {
            let first = f.deriv(&[i]) * g.val() + f.val() * g.deriv(&[i]);
            prop_assert!((fg.deriv(&[i]) - first).abs() <= tol);
            for j in 0..2 {
                let second = f.deriv(&[i, j]) * g.val()
                    + f.deriv(&[i]) * g.deriv(&[j])
                    + f.deriv(&[j]) * g.deriv(&[i])
                    + f.val() * g.deriv(&[i, j]);
                prop_assert!((fg.deriv(&[i, j]) - second).abs() <= tol);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn example_jets_agree_with_finite_differences(
        x in prop::array::uniform3(0.5f64..2.0),
        y in prop::array::uniform3(0.5f64..2.0),
    ) {
        let m = builtin("matsumoto_example").unwrap();
        let c = jet_vs_fd(&m, &m.sample(&x, &y)).unwrap();
        prop_assert!(rel_residual(&c.predicted, &c.direct) <= 1e-5);
    }

    #[test]
    fn example_is_homogeneous(
        x in prop::array::uniform3(0.5f64..2.0),
        y in prop::array::uniform3(0.5f64..2.0),
        lambda in 0.2f64..5.0,
    ) {
        let m = builtin("matsumoto_example").unwrap();
        let ly = y.map(|v| lambda * v);
        let f = m.finsler::<f64>(&x, &y).unwrap();
        prop_assert!((m.finsler::<f64>(&x, &ly).unwrap() - lambda * f).abs() <= 1e-12 * lambda * f);
        let g1 = spray(&m, &m.sample(&x, &y)).unwrap();
        let g2 = spray(&m, &m.sample(&x, &ly)).unwrap();
        let scaled: Vec<f64> = g1.iter().map(|v| lambda * lambda * v).collect();
        prop_assert!(rel_residual(&g2, &scaled) <= 1e-9);
    }

    #[test]
    fn euclid_hat_metric_matches_hessian(
        x in prop::array::uniform2(-0.45f64..0.45),
        y in prop::array::uniform2(-2.0f64..2.0),
    ) {
        prop_assume!(y[0].hypot(y[1]) > 0.1);
        let m = builtin("euclid_concurrent").unwrap();
        let out = change_identities(&m, &m, &m.sample(&x, &y), Orientation::Plus);
        // |x| < 0.65 keeps F − Φ ≥ 0.35F, but the margin may still vanish.
        let Ok(out) = out else { return Ok(()); };
        let c = out.iter().find(|c| c.name == "metric_tensor").unwrap();
        prop_assert!(rel_residual(&c.predicted, &c.direct) <= 1e-7);
    }
}
