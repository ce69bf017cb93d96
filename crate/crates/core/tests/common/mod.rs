#![allow(dead_code)]

use std::path::PathBuf;

use proptest::prelude::*;
use scv::heap::Heap;
use scv::parse::parse_program;
use scv::shape::{atom_contract, neg_pred, pred, Atom};
use scv::syntax::*;

pub fn program_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("programs").join(format!("{name}.scv"))
}

pub fn program(name: &str) -> Program {
    let text = std::fs::read_to_string(program_path(name)).expect("program file");
    parse_program(&text).expect("program parses")
}

/// Drops refinement sets everywhere, leaving the bare value.
pub fn strip(v: &Value) -> Value {
    match v {
        Value::Addr(_) => v.clone(),
        Value::Refined(p, _) => {
            let p = match &**p {
                PreValue::Cons(a, b) => PreValue::Cons(strip(a), strip(b)),
                other => other.clone(),
            };
            Value::Refined(Box::new(p), RefSet::new())
        }
    }
}
pub const CMPS: [Op; 5] = [Op::Eq, Op::Lt, Op::Gt, Op::Le, Op::Ge];

/// Small concrete first-order values: integers, booleans, empty, and pairs.
pub fn concrete_value() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        4 => (-4i64..=4).prop_map(Value::int),
        1 => any::<bool>().prop_map(Value::bool),
        1 => Just(Value::empty()),
    ];
    leaf.prop_recursive(2, 8, 2, |inner| (inner.clone(), inner).prop_map(|(a, b)| Value::cons(a, b)))
}

/// An integer comparison or arithmetic atom whose operands are constants in
/// [-3, 3] or addresses below `addrs`.
pub fn int_atom(addrs: Addr) -> impl Strategy<Value = Atom> {
    let operand = move || {
        if addrs == 0 {
            (-3i64..=3).prop_map(Value::int).boxed()
        } else {
            prop_oneof![2 => (-3i64..=3).prop_map(Value::int), 1 => (0..addrs).prop_map(Value::Addr)].boxed()
        }
    };
    prop_oneof![
        4 => (proptest::sample::select(CMPS.to_vec()), operand()).prop_map(|(o, k)| Atom::Cmp(o, k)),
        1 => operand().prop_map(Atom::Neq),
        1 => (proptest::sample::select(vec![Op::Add, Op::Sub, Op::Mul]), operand(), operand())
            .prop_map(|(o, a, b)| Atom::Arith(o, a, b)),
    ]
}

/// Any flat contract the prover recognizes: primitive predicates, their
/// negations, and integer atoms.
pub fn flat_contract(addrs: Addr) -> impl Strategy<Value = Value> {
    prop_oneof![
        2 => proptest::sample::select(PREDICATES.to_vec()).prop_map(pred),
        1 => proptest::sample::select(PREDICATES.to_vec()).prop_map(neg_pred),
        3 => int_atom(addrs).prop_map(|a| atom_contract(&a)),
    ]
}

/// A heap of `n` addresses: unknown integers refined by a few integer atoms,
/// or concrete values.
pub fn heap(n: Addr) -> impl Strategy<Value = Heap> {
    let entry = move || {
        prop_oneof![
            3 => proptest::collection::vec(int_atom(n), 0..3).prop_map(|atoms| {
                let mut set: RefSet = atoms.iter().map(atom_contract).collect();
                set.insert(pred(Op::IntP));
                Value::opaque_with(set)
            }),
            1 => Just(Value::opaque()),
            1 => concrete_value(),
        ]
    };
    proptest::collection::vec(entry(), n as usize).prop_map(|vs| Heap::from_entries(vs.into_iter().enumerate().map(|(i, v)| (i as Addr, v))))
}

/// Semantics of an integer atom at `x` under an integer environment.
pub fn atom_holds(a: &Atom, x: i64, env: &dyn Fn(&Value) -> i64) -> bool {
    match a {
        Atom::Cmp(o, k) => {
            let k = env(k);
            match o {
                Op::Eq => x == k,
                Op::Lt => x < k,
                Op::Gt => x > k,
                Op::Le => x <= k,
                Op::Ge => x >= k,
                _ => unreachable!(),
            }
        }
        Atom::Neq(k) => x != env(k),
        Atom::Arith(o, a, b) => {
            let (a, b) = (env(a), env(b));
            x == match o {
                Op::Add => a + b,
                Op::Sub => a - b,
                Op::Mul => a * b,
                _ => unreachable!(),
            }
        }
        Atom::Pred(_) | Atom::NotPred(_) => unreachable!("not an integer atom"),
    }
}

/// Whether some assignment of integers in [-6, 6] to the heap's unknown
/// integers satisfies every integer fact recorded in it.
pub fn feasible(h: &Heap) -> bool {
    let unknown: Vec<Addr> = h
        .iter()
        .filter(|(_, v)| matches!(v.pre_value(), Some(PreValue::Opaque)) && v.refinements().is_some_and(|s| s.contains(&pred(Op::IntP))))
        .map(|(a, _)| *a)
        .collect();
    let mut env = vec![-6i64; unknown.len()];
    loop {
        let value_of = |v: &Value| -> Option<i64> {
            match v {
                Value::Addr(a) => match unknown.iter().position(|u| u == a) {
                    Some(i) => Some(env[i]),
                    None => h.get(*a).and_then(|e| e.as_int()),
                },
                v => v.as_int(),
            }
        };
        let ok = unknown.iter().enumerate().all(|(i, a)| {
            h.get(*a).and_then(|v| v.refinements()).into_iter().flatten().all(|c| match scv::shape::atom_of(c) {
                Some(Atom::Pred(Op::IntP)) | None => true,
                Some(Atom::Pred(_)) => false,
                Some(atom) => {
                    let operands_int = match &atom {
                        Atom::Cmp(_, k) | Atom::Neq(k) => value_of(k).is_some(),
                        Atom::Arith(_, x, y) => value_of(x).is_some() && value_of(y).is_some(),
                        _ => true,
                    };
                    operands_int && atom_holds(&atom, env[i], &|k| value_of(k).unwrap())
                }
            })
        });
        if ok {
            return true;
        }
        let mut i = 0;
        loop {
            if i == env.len() {
                return false;
            }
            if env[i] < 6 {
                env[i] += 1;
                break;
            }
            env[i] = -6;
            i += 1;
        }
    }
}
