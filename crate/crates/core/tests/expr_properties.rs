use lazykv_core::sexpr;
use lazykv_core::{Expr, FutureHandle, Node, OpKind, ResolvedValues, Value};
use proptest::prelude::*;

fn handle(i: u32) -> FutureHandle {
    FutureHandle::new(i, format!("k{i}"))
}

fn arb_value() -> impl Strategy<Value = Value> {
    prop_oneof![
        6 => (-50i64..50).prop_map(Value::Int),
        1 => prop_oneof![Just(i64::MAX - 1), Just(i64::MIN + 1)].prop_map(Value::Int),
        2 => "[a-c]{0,3}".prop_map(Value::Str),
        2 => any::<bool>().prop_map(Value::Bool),
    ]
}

fn arb_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![arb_value().prop_map(Expr::constant), (1u32..5).prop_map(|i| Expr::read(handle(i)))];
    leaf.prop_recursive(5, 48, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone(), 0usize..10)
                .prop_map(|(a, b, k)| Expr::compose(OpKind::ALL[k], vec![a, b]).unwrap()),
            inner.prop_map(|a| a.not()),
        ]
    })
}

fn arb_bindings() -> impl Strategy<Value = ResolvedValues> {
    proptest::collection::vec(arb_value(), 4).prop_map(|vals| {
        vals.into_iter().enumerate().map(|(i, v)| (handle(i as u32 + 1), v)).collect()
    })
}

/// Replaces every read leaf with the bound constant.
fn substitute(e: &Expr, rv: &ResolvedValues) -> Expr {
    match e.node() {
        Node::Const(_) => e.clone(),
        Node::Read(h) => Expr::constant(rv.get(h).cloned().expect("bound")),
        Node::Op { kind, children } => {
            Expr::compose(*kind, children.iter().map(|c| substitute(c, rv)).collect()).unwrap()
        }
    }
}

/// Ground-term evaluator written independently of the library's `apply`.
/// `None` stands for any evaluation error.
fn brute_eval(e: &Expr) -> Option<Value> {
    match e.node() {
        Node::Const(v) => Some(v.clone()),
        Node::Read(_) => None,
        Node::Op { kind, children } => {
            let a = brute_eval(&children[0])?;
            if *kind == OpKind::Not {
                return if let Value::Bool(b) = a { Some(Value::Bool(!b)) } else { None };
            }
            let b = brute_eval(&children[1])?;
            let ints = match (&a, &b) {
                (Value::Int(x), Value::Int(y)) => Some((*x as i128, *y as i128)),
                _ => None,
            };
            let fits = |r: i128| (r >= i64::MIN as i128 && r <= i64::MAX as i128).then_some(Value::Int(r as i64));
            match kind {
                OpKind::Add => ints.and_then(|(x, y)| fits(x + y)),
                OpKind::Sub => ints.and_then(|(x, y)| fits(x - y)),
                OpKind::Concat => {
                    let show = |v: &Value| match v {
                        Value::Int(i) => Some(i.to_string()),
                        Value::Str(s) => Some(s.clone()),
                        Value::Bool(_) => None,
                    };
                    Some(Value::Str(show(&a)? + &show(&b)?))
                }
                OpKind::Eq => match (&a, &b) {
                    (Value::Int(x), Value::Int(y)) => Some(Value::Bool(x == y)),
                    (Value::Str(x), Value::Str(y)) => Some(Value::Bool(x == y)),
                    (Value::Bool(x), Value::Bool(y)) => Some(Value::Bool(x == y)),
                    _ => None,
                },
                OpKind::Ge | OpKind::Gt | OpKind::Le | OpKind::Lt => {
                    let ord = match (&a, &b) {
                        (Value::Int(x), Value::Int(y)) => x.cmp(y),
                        (Value::Str(x), Value::Str(y)) => x.cmp(y),
                        _ => return None,
                    };
                    use std::cmp::Ordering::*;
                    Some(Value::Bool(match kind {
                        OpKind::Ge => ord != Less,
                        OpKind::Gt => ord == Greater,
                        OpKind::Le => ord != Greater,
                        _ => ord == Less,
                    }))
                }
                OpKind::And | OpKind::Or => match (&a, &b) {
                    (Value::Bool(x), Value::Bool(y)) => Some(Value::Bool(if *kind == OpKind::And { *x && *y } else { *x || *y })),
                    _ => None,
                },
                OpKind::Not => unreachable!(),
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn substitution_property(e in arb_expr(), rv in arb_bindings()) {
        let direct = e.resolve(&rv);
        let ground = substitute(&e, &rv);
        prop_assert!(ground.keys().is_empty());
        prop_assert_eq!(&direct, &ground.resolve(&ResolvedValues::new()));
        prop_assert_eq!(direct.ok(), brute_eval(&ground));
    }

    #[test]
    fn keys_soundness(e in arb_expr(), rv in arb_bindings()) {
        // Every handle the generator uses is bound, so no error can name one.
        prop_assert!(!matches!(e.resolve(&rv), Err(lazykv_core::ExprError::UnboundHandle(_))));
        prop_assert_eq!(e.resolve(&rv), e.resolve(&rv));
    }

    #[test]
    fn text_form_round_trips(e in arb_expr()) {
        prop_assert_eq!(sexpr::parse(&e.to_string()).unwrap(), e);
    }
}
