use super::*;
use crate::expr::{EvalError, Evaluator, ParseErrorKind, Point};
use proptest::prelude::*;

fn pt(pairs: &[(&str, f64)]) -> Point {
    Point::from_pairs(pairs.iter().copied())
}

/// Central finite difference of `expr` in `var` at `point`.
fn central_fd(dag: &ExprDag, expr: &Expr, var: &str, point: &Point, h: f64) -> f64 {
    let _ = dag;
    let mut ev = Evaluator::new(expr.dag());
    let x0 = point.get(var).unwrap();
    let mut hi = point.clone();
    hi.set(var, x0 + h);
    let mut lo = point.clone();
    lo.set(var, x0 - h);
    (ev.eval1(expr, &hi).unwrap() - ev.eval1(expr, &lo).unwrap()) / (2.0 * h)
}

#[test]
fn interning_gives_identical_nodes_one_id() {
    let dag = ExprDag::new();
    let x = dag.symbol("x");
    let y = dag.symbol("y");
    let a = dag.add(&[dag.mul(&[x.clone(), y.clone()]), dag.sin(&x)]);
    let b = dag.add(&[dag.mul(&[x.clone(), y.clone()]), dag.sin(&x)]);
    assert_eq!(a, b);
    let n = dag.len();
    let _c = dag.add(&[dag.mul(&[x.clone(), y.clone()]), dag.sin(&x)]);
    assert_eq!(dag.len(), n, "rebuilding an interned expression adds no nodes");
}

#[test]
fn algebraic_identities_fold() {
    let dag = ExprDag::new();
    let x = dag.symbol("x");
    assert_eq!(dag.add(&[dag.zero(), x.clone()]), x);
    assert_eq!(dag.mul(&[dag.one(), x.clone()]), x);
    assert!(dag.mul(&[dag.zero(), x.clone()]).is_zero());
    assert_eq!(dag.pow(&x, 1), x);
    assert_eq!(dag.pow(&x, 0), dag.one());
    assert_eq!(dag.neg(&dag.neg(&x)), x);
    assert_eq!(dag.sub(&x, &x.clone()), dag.zero());
    assert_eq!(dag.quot(&x, &dag.one()), x);
    // Constant folding over rationals is exact.
    assert_eq!(dag.add(&[dag.rat(1, 3), dag.rat(1, 6)]), dag.rat(1, 2));
    assert_eq!(dag.mul(&[dag.rat(2, 3), dag.rat(3, 4)]), dag.rat(1, 2));
    assert_eq!(dag.pow(&dag.rat(2, 3), -2), dag.rat(9, 4));
}

#[test]
fn sums_and_products_are_order_canonical() {
    let dag = ExprDag::new();
    let x = dag.symbol("x");
    let y = dag.symbol("y");
    let s = dag.sin(&x);
    assert_eq!(dag.add(&[x.clone(), s.clone()]), dag.add(&[s.clone(), x.clone()]));
    assert_eq!(dag.mul(&[y.clone(), s.clone()]), dag.mul(&[s.clone(), y.clone()]));
    // Cancellation works regardless of build order: p*a - a*p = 0.
    let pa = dag.mul(&[x.clone(), y.clone()]);
    let ap = dag.mul(&[y.clone(), x.clone()]);
    assert!(dag.sub(&pa, &ap).is_zero());
}

#[test]
fn decimal_literals_are_exact_rationals() {
    let dag = ExprDag::new();
    let a = dag.parse("0.1 + 0.2").unwrap();
    assert_eq!(a, dag.rat(3, 10), "decimal literals must not round-trip through f64");
    assert_eq!(dag.parse("1.5e2").unwrap(), dag.int(150));
    assert_eq!(dag.parse("25e-2").unwrap(), dag.rat(1, 4));
}

#[test]
fn parser_precedence_and_associativity() {
    let dag = ExprDag::new();
    let x = dag.symbol("x");
    let y = dag.symbol("y");
    let z = dag.symbol("z");
    assert_eq!(
        dag.parse("x + y*z^2").unwrap(),
        dag.add(&[x.clone(), dag.mul(&[y.clone(), dag.pow(&z, 2)])])
    );
    assert_eq!(
        dag.parse("-x^2").unwrap(),
        dag.neg(&dag.pow(&x, 2)),
        "unary minus binds weaker than power"
    );
    assert_eq!(
        dag.parse("x/y/z").unwrap(),
        dag.quot(&dag.quot(&x, &y), &z),
        "division is left associative"
    );
    assert_eq!(dag.parse("x - y + z").unwrap(), dag.add(&[x.clone(), dag.neg(&y), z.clone()]));
    assert_eq!(dag.parse("x^(-2)").unwrap(), dag.pow(&x, -2));
    assert_eq!(dag.parse("sin(x)*cos(y)").unwrap(), dag.mul(&[dag.sin(&x), dag.cos(&y)]));
}

#[test]
fn parser_reports_error_kind_and_position() {
    let dag = ExprDag::new();
    let err = dag.parse("x + ").unwrap_err();
    assert_eq!(err.kind, ParseErrorKind::UnexpectedEnd);
    let err = dag.parse("x ^ y").unwrap_err();
    assert_eq!(err.kind, ParseErrorKind::IntegerExponentExpected);
    assert_eq!(err.pos, 4);
    let err = dag.parse("x + $").unwrap_err();
    assert_eq!(err.kind, ParseErrorKind::UnexpectedChar('$'));
    assert_eq!(err.pos, 4);
    let err = dag.parse("(x + y").unwrap_err();
    assert_eq!(err.kind, ParseErrorKind::UnexpectedEnd);
    let err = dag.parse("x) ").unwrap_err();
    assert!(matches!(err.kind, ParseErrorKind::UnexpectedToken(_)));
    let err = dag
        .parse_closed("q1 + bogus", &["q1".to_string()])
        .unwrap_err();
    match err.kind {
        ParseErrorKind::UnknownSymbol(name) => assert_eq!(name, "bogus"),
        other => panic!("expected UnknownSymbol, got {other:?}"),
    }
    assert_eq!(err.pos, 5);
}

#[test]
fn eval_matches_hand_computation() {
    let dag = ExprDag::new();
    let e = dag.parse("sin(x)^2 + cos(x)^2 + x*y/4").unwrap();
    let mut ev = Evaluator::new(&dag);
    let v = ev.eval1(&e, &pt(&[("x", 0.7), ("y", 2.0)])).unwrap();
    assert!((v - (1.0 + 0.7 * 2.0 / 4.0)).abs() < 1e-14);
}

#[test]
fn eval_is_linear_over_batches() {
    let dag = ExprDag::new();
    let a = dag.parse("sin(x)*y").unwrap();
    let b = dag.parse("x^3 - y").unwrap();
    let s = dag.add(&[a.clone(), b.clone()]);
    let mut ev = Evaluator::new(&dag);
    let points: Vec<Point> = (0..7)
        .map(|i| pt(&[("x", 0.3 * i as f64 - 1.0), ("y", 0.5 + i as f64)]))
        .collect();
    let rows = ev.eval_at_points(&[a, b, s], &points).unwrap();
    for row in rows {
        assert!((row[0] + row[1] - row[2]).abs() <= 1e-12 * (1.0 + row[2].abs()));
    }
}

#[test]
fn eval_division_by_zero_is_reported() {
    let dag = ExprDag::new();
    let e = dag.parse("1/q3").unwrap();
    let mut ev = Evaluator::new(&dag);
    match ev.eval1(&e, &pt(&[("q3", 0.0)])) {
        Err(EvalError::DivisionByZero { .. }) => {}
        other => panic!("expected DivisionByZero, got {other:?}"),
    }
    assert!((ev.eval1(&e, &pt(&[("q3", 2.0)])).unwrap() - 0.5).abs() < 1e-15);
}

#[test]
fn eval_unbound_symbol_is_reported() {
    let dag = ExprDag::new();
    let e = dag.parse("x + y").unwrap();
    let mut ev = Evaluator::new(&dag);
    match ev.eval1(&e, &pt(&[("x", 1.0)])) {
        Err(EvalError::UnboundSymbol { name }) => assert_eq!(name, "y"),
        other => panic!("expected UnboundSymbol, got {other:?}"),
    }
}

#[test]
fn eval_overflow_is_nonfinite() {
    let dag = ExprDag::new();
    let x = dag.symbol("x");
    let e = dag.pow(&x, 1000);
    let mut ev = Evaluator::new(&dag);
    match ev.eval1(&e, &pt(&[("x", 1.0e10)])) {
        Err(EvalError::NonFinite { .. }) => {}
        other => panic!("expected NonFinite, got {other:?}"),
    }
}

#[test]
fn solve_matches_hand_solved_system() {
    let dag = ExprDag::new();
    let x = dag.symbol("x");
    // [[2, x], [x, 3]] s = [1, x]  =>  s0 = (3 - x^2)/(6 - x^2), s1 = x/(6 - x^2)
    let m = vec![
        vec![dag.int(2), x.clone()],
        vec![x.clone(), dag.int(3)],
    ];
    let s = dag.solve(&m, &[dag.one(), x.clone()]);
    let mut ev = Evaluator::new(&dag);
    let p = pt(&[("x", 1.5)]);
    let got = ev.eval(&s, &p).unwrap();
    let d = 6.0 - 1.5f64 * 1.5;
    assert!((got[0] - (3.0 - 1.5 * 1.5) / d).abs() < 1e-14);
    assert!((got[1] - 1.5 / d).abs() < 1e-14);
}

#[test]
fn solve_singular_system_is_reported() {
    let dag = ExprDag::new();
    let x = dag.symbol("x");
    // Rows become linearly dependent at x = 2.
    let m = vec![
        vec![dag.one(), x.clone()],
        vec![dag.int(2), dag.int(4)],
    ];
    let s = dag.solve(&m, &[dag.one(), dag.one()]);
    let mut ev = Evaluator::new(&dag);
    match ev.eval(&s, &pt(&[("x", 2.0)])) {
        Err(EvalError::SingularSolve { .. }) => {}
        other => panic!("expected SingularSolve, got {other:?}"),
    }
    assert!(ev.eval(&s, &pt(&[("x", 1.0)])).is_ok());
}

#[test]
fn derivative_rules_hold_structurally() {
    let dag = ExprDag::new();
    let x = dag.symbol("x");
    let y = dag.symbol("y");
    let xy = dag.mul(&[x.clone(), y.clone()]);
    assert_eq!(xy.diff(&x), y);
    assert_eq!(dag.sin(&x).diff(&x), dag.cos(&x));
    assert_eq!(dag.cos(&x).diff(&x), dag.neg(&dag.sin(&x)));
    assert_eq!(dag.pow(&x, 3).diff(&x), dag.mul(&[dag.int(3), dag.pow(&x, 2)]));
    assert!(dag.sin(&y).diff(&x).is_zero());
    assert!(dag.rat(7, 2).diff(&x).is_zero());
}

#[test]
fn derivatives_are_memoized_to_one_node() {
    let dag = ExprDag::new();
    let x = dag.symbol("x");
    let e = dag.parse("sin(x^2)/(1 + cos(x))").unwrap();
    let d1 = e.diff(&x);
    let n = dag.len();
    let d2 = e.diff(&x);
    assert_eq!(d1, d2);
    assert_eq!(dag.len(), n, "repeated differentiation must hit the cache");
}

#[test]
fn derivative_matches_finite_differences() {
    let dag = ExprDag::new();
    let srcs = [
        "sin(x)*cos(y) + x^3*y",
        "x/(1 + y^2) - tan(x)",
        "sin(cos(x + y*x))",
        "(x - y)^4/(2 + sin(y))",
    ];
    let p = pt(&[("x", 0.37), ("y", -0.81)]);
    let mut ev = Evaluator::new(&dag);
    for src in srcs {
        let e = dag.parse(src).unwrap();
        for var in ["x", "y"] {
            let d = e.diff(&dag.symbol(var));
            let got = ev.eval1(&d, &p).unwrap();
            let fd = central_fd(&dag, &e, var, &p, 1e-5);
            assert!(
                (got - fd).abs() <= 1e-7 * (1.0 + fd.abs()),
                "d({src})/d{var}: got {got}, finite difference {fd}"
            );
        }
    }
}

#[test]
fn solve_node_derivative_matches_finite_differences() {
    let dag = ExprDag::new();
    let x = dag.symbol("x");
    let y = dag.symbol("y");
    // M(x, y) s = b(x): a system whose solution has no closed form in the DAG.
    let m = vec![
        vec![dag.add(&[dag.int(3), dag.sin(&x)]), y.clone()],
        vec![y.clone(), dag.add(&[dag.int(4), dag.pow(&x, 2)])],
    ];
    let b = vec![dag.cos(&x), dag.mul(&[x.clone(), y.clone()])];
    let s = dag.solve(&m, &b);
    let p = pt(&[("x", 0.6), ("y", 0.9)]);
    let mut ev = Evaluator::new(&dag);
    for comp in &s {
        for var in ["x", "y"] {
            let d = comp.diff(&dag.symbol(var));
            let got = ev.eval1(&d, &p).unwrap();
            let fd = central_fd(&dag, comp, var, &p, 1e-5);
            assert!(
                (got - fd).abs() <= 1e-6 * (1.0 + fd.abs()),
                "solve component derivative vs finite difference: {got} vs {fd}"
            );
        }
    }
}

#[test]
fn substitution_rewrites_symbols() {
    let dag = ExprDag::new();
    let x = dag.symbol("x");
    let y = dag.symbol("y");
    let e = dag.parse("sin(x) + x^2*y").unwrap();
    let rep = dag.parse("y + 1").unwrap();
    let s = e.subst(&[(x.clone(), rep.clone())]);
    let direct = dag.parse("sin(y + 1) + (y + 1)^2*y").unwrap();
    assert_eq!(s, direct);
    // Substituting an untouched symbol is the identity.
    assert_eq!(e.subst(&[(dag.symbol("q"), dag.int(5))]), e);
    // Simultaneous substitution does not chain.
    let swap = e.subst(&[(x.clone(), y.clone()), (y.clone(), x.clone())]);
    assert_eq!(swap, dag.parse("sin(y) + y^2*x").unwrap());
}

#[test]
fn free_symbols_and_dependence() {
    let dag = ExprDag::new();
    let e = dag.parse("sin(a)*b + c^2").unwrap();
    let syms = e.free_symbols();
    let names: Vec<String> = syms.iter().map(|s| dag.symbol_name(*s)).collect();
    assert_eq!(names, ["a", "b", "c"]);
    assert!(e.depends_on(dag.symbol_id("a")));
    assert!(!e.depends_on(dag.symbol_id("zz")));
}

#[test]
fn printer_keeps_fraction_and_power_grouping() {
    let dag = ExprDag::new();
    let x = dag.symbol("x");
    let a = dag.symbol("a");
    let b = dag.symbol("b");
    let e = dag.mul(&[x.clone(), dag.quot(&a, &b)]);
    let s = e.to_source().unwrap();
    assert_eq!(dag.parse(&s).unwrap(), e, "x*(a/b) must not reparse as (x*a)/b");
    let e = dag.pow(&dag.pow(&x, 2), 3);
    let s = e.to_source().unwrap();
    assert_eq!(dag.parse(&s).unwrap(), e);
    let e = dag.quot(&x, &dag.mul(&[a.clone(), b.clone()]));
    let s = e.to_source().unwrap();
    assert_eq!(dag.parse(&s).unwrap(), e, "x/(a*b) must keep the denominator grouped");
}

#[test]
fn solve_nodes_are_not_printable() {
    let dag = ExprDag::new();
    let x = dag.symbol("x");
    let s = dag.solve(&[vec![x.clone()]], &[dag.one()]);
    assert!(s[0].to_source().is_err());
    assert!(s[0].display().contains("solve"));
}

// ---------------------------------------------------------------------------
// Property tests: random expressions survive a print → parse round trip and
// differentiate consistently with finite differences.
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
enum Recipe {
    Sym(u8),
    Int(i8),
    Rat(i8, u8),
    Add(Vec<Recipe>),
    Mul(Vec<Recipe>),
    Sub(Box<Recipe>, Box<Recipe>),
    Quot(Box<Recipe>, Box<Recipe>),
    Pow(Box<Recipe>, i8),
    Neg(Box<Recipe>),
    Sin(Box<Recipe>),
    Cos(Box<Recipe>),
    Tan(Box<Recipe>),
}

fn build(dag: &ExprDag, r: &Recipe) -> Expr {
    match r {
        Recipe::Sym(i) => dag.symbol(["x", "y", "z"][(*i % 3) as usize]),
        Recipe::Int(k) => dag.int(*k as i64),
        Recipe::Rat(n, d) => dag.rat(*n as i64, *d as i64 + 1),
        Recipe::Add(ch) => {
            let ch: Vec<Expr> = ch.iter().map(|c| build(dag, c)).collect();
            dag.add(&ch)
        }
        Recipe::Mul(ch) => {
            let ch: Vec<Expr> = ch.iter().map(|c| build(dag, c)).collect();
            dag.mul(&ch)
        }
        Recipe::Sub(a, b) => dag.sub(&build(dag, a), &build(dag, b)),
        Recipe::Quot(a, b) => dag.quot(&build(dag, a), &build(dag, b)),
        Recipe::Pow(a, k) => dag.pow(&build(dag, a), (*k % 4) as i32),
        Recipe::Neg(a) => dag.neg(&build(dag, a)),
        Recipe::Sin(a) => dag.sin(&build(dag, a)),
        Recipe::Cos(a) => dag.cos(&build(dag, a)),
        Recipe::Tan(a) => dag.tan(&build(dag, a)),
    }
}

fn arb_recipe() -> impl Strategy<Value = Recipe> {
    let leaf = prop_oneof![
        any::<u8>().prop_map(Recipe::Sym),
        any::<i8>().prop_map(Recipe::Int),
        (any::<i8>(), any::<u8>()).prop_map(|(n, d)| Recipe::Rat(n, d)),
    ];
    leaf.prop_recursive(4, 48, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..4).prop_map(Recipe::Add),
            prop::collection::vec(inner.clone(), 2..4).prop_map(Recipe::Mul),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Recipe::Sub(a.into(), b.into())),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Recipe::Quot(a.into(), b.into())),
            (inner.clone(), any::<i8>()).prop_map(|(a, k)| Recipe::Pow(a.into(), k)),
            inner.clone().prop_map(|a| Recipe::Neg(a.into())),
            inner.clone().prop_map(|a| Recipe::Sin(a.into())),
            inner.clone().prop_map(|a| Recipe::Cos(a.into())),
            inner.prop_map(|a| Recipe::Tan(a.into())),
        ]
    })
}

proptest! {
    #[test]
    fn print_parse_roundtrip_is_identity(recipe in arb_recipe()) {
        let dag = ExprDag::new();
        let e = build(&dag, &recipe);
        let src = e.to_source().unwrap();
        let back = dag.parse(&src).unwrap();
        prop_assert_eq!(back, e, "source was {}", src);
    }

    #[test]
    fn random_derivatives_match_finite_differences(recipe in arb_recipe(), x0 in -0.9f64..0.9, y0 in -0.9f64..0.9) {
        let dag = ExprDag::new();
        let e = build(&dag, &recipe);
        let p = pt(&[("x", x0), ("y", y0), ("z", 0.4)]);
        let mut ev = Evaluator::new(&dag);
        // Only check where the expression and its neighborhood evaluate cleanly
        // and the value is moderate (finite differencing breaks near poles).
        let d = e.diff(&dag.symbol("x"));
        let dv = ev.eval1(&d, &p);
        let v = ev.eval1(&e, &p);
        if let (Ok(dv), Ok(v)) = (dv, v) {
            if v.abs() < 1e3 && dv.abs() < 1e3 {
                let h = 1e-5;
                let mut hi = p.clone();
                hi.set("x", x0 + h);
                let mut lo = p.clone();
                lo.set("x", x0 - h);
                let mut hi2 = p.clone();
                hi2.set("x", x0 + h / 2.0);
                let mut lo2 = p.clone();
                lo2.set("x", x0 - h / 2.0);
                if let (Ok(vh), Ok(vl), Ok(vh2), Ok(vl2)) = (
                    ev.eval1(&e, &hi),
                    ev.eval1(&e, &lo),
                    ev.eval1(&e, &hi2),
                    ev.eval1(&e, &lo2),
                ) {
                    let fd = (vh - vl) / (2.0 * h);
                    let fd2 = (vh2 - vl2) / h;
                    // The finite difference is only trusted when halving the
                    // step barely moves it; otherwise the function curves too
                    // much at this scale for the estimate to mean anything.
                    if fd.abs() < 1e3 && (fd - fd2).abs() <= 1e-5 * (1.0 + fd.abs()) {
                        prop_assert!(
                            (dv - fd2).abs() <= 2e-4 * (1.0 + fd2.abs()),
                            "derivative {} vs finite difference {}",
                            dv,
                            fd2
                        );
                    }
                }
            }
        }
    }
}
