mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use scv::approx::{abstractions, approximates, Approx};
use scv::concrete::{self, Outcome};
use scv::delta::{delta, Answer};
use scv::eval::{seed, Machine};
use scv::gen::{generate, GenProgram};
use scv::heap::{canonicalize, map_addrs_value, refine, rename_state, Heap, State};
use scv::parse::parse_program;
use scv::print::show_program;
use scv::proof::{self, Basic, Oracle, Proof};
use scv::shape::{atom_contract, pred};
use scv::smt::Smt;
use scv::summarize::{covers, widen};
use scv::syntax::*;

use common::*;

fn gen_program() -> impl Strategy<Value = GenProgram> {
    any::<u64>().prop_map(|s| generate(&mut ChaCha8Rng::seed_from_u64(s)))
}

/// Value of `v` with heap addresses inside pairs looked up.
fn resolve(h: &Heap, v: &Value) -> Value {
    let v = h.deref(v);
    match v.pre_value() {
        Some(PreValue::Cons(a, b)) => Value::cons(resolve(h, a), resolve(h, b)),
        _ => strip(&v),
    }
}

fn first_order(v: &Value) -> bool {
    match v.pre_value() {
        Some(PreValue::Int(_) | PreValue::Bool(_) | PreValue::Empty) => true,
        Some(PreValue::Cons(a, b)) => first_order(a) && first_order(b),
        _ => false,
    }
}

/// States reached by breadth-first stepping, at most `n` of them.
fn some_states(p: &Program, n: usize) -> Vec<State> {
    let or = Smt::none();
    let m = Machine::new(p, &or);
    let mut out = vec![canonicalize(&State::Running(seed(p, true), Heap::new()))];
    let mut i = 0;
    while i < out.len() && out.len() < n {
        if !out[i].is_terminal() {
            for (_, s) in m.step(&out[i]) {
                let s = canonicalize(&s);
                if !out.contains(&s) {
                    out.push(s);
                }
            }
        }
        i += 1;
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn printing_then_parsing_is_the_identity(gp in gen_program()) {
        let p = gp.parse().unwrap();
        let printed = show_program(&p);
        prop_assert_eq!(parse_program(&printed).unwrap(), p, "{}", printed);
    }

    #[test]
    fn substituting_a_variable_that_is_not_free_changes_nothing(gp in gen_program(), v in concrete_value()) {
        let p = gp.parse().unwrap();
        for e in p.modules.iter().filter_map(|m| m.body.as_ref()).chain([&p.top]) {
            prop_assert_eq!(&subst(&v, "unused", e), e);
        }
    }

    #[test]
    fn parsing_introduces_no_internal_forms(gp in gen_program()) {
        let p = gp.parse().unwrap();
        for e in p.modules.iter().filter_map(|m| m.body.as_ref()).chain([&p.top]) {
            prop_assert!(!has_internal_forms(e));
        }
    }

    #[test]
    fn canonical_form_ignores_address_names_and_garbage(
        gp in gen_program(),
        pick in any::<prop::sample::Index>(),
        shift in 1u32..50,
        stride in prop::sample::select(vec![1u32, 3, 7]),
    ) {
        let p = gp.parse().unwrap();
        let abs = abstractions(&p, 1).remove(0);
        let states = some_states(&abs, 40);
        let s = pick.get(&states);
        let renamed = match rename_state(s, &|a| a * stride + shift) {
            State::Running(e, mut h) => {
                h.set(10_000, Value::opaque());
                State::Running(e, h)
            }
            b => b,
        };
        prop_assert_eq!(canonicalize(&renamed), canonicalize(s));
    }

    #[test]
    fn concrete_programs_step_deterministically_and_agree_with_the_interpreter(gp in gen_program()) {
        let p = gp.parse().unwrap();
        let or = Smt::none();
        let m = Machine::new(&p, &or);
        let mut s = State::Running(seed(&p, false), Heap::new());
        let mut steps = 0;
        while !s.is_terminal() && steps < 20_000 {
            let next = m.step(&s);
            prop_assert_eq!(next.len(), 1, "{} successors", next.len());
            s = next.into_iter().next().unwrap().1;
            steps += 1;
        }
        let want = concrete::run(&p, 1_000_000);
        match (&s, &want) {
            (_, Outcome::Timeout) => {}
            (State::Running(..), _) if !s.is_terminal() => {}
            (State::Blamed(a, b), Outcome::Blame(c, d)) => prop_assert_eq!((a, b), (c, d)),
            (State::Running(Expr::Val(v), h), Outcome::Value(w)) => {
                if first_order(w) {
                    prop_assert_eq!(resolve(h, v), strip(w));
                } else {
                    prop_assert!(!first_order(&resolve(h, v)));
                }
            }
            _ => prop_assert!(false, "evaluator reached {:?}, interpreter {:?}", s, want),
        }
    }

    #[test]
    fn concrete_results_approximate_themselves(gp in gen_program()) {
        let p = gp.parse().unwrap();
        let sc = match concrete::run(&p, 100_000) {
            Outcome::Value(v) => State::Running(Expr::Val(v), Heap::new()),
            Outcome::Blame(a, b) => State::Blamed(a, b),
            Outcome::Timeout => return Ok(()),
        };
        match approximates(&sc, &sc, &p, &p) {
            Approx::Yes(f) => prop_assert!(f.is_empty()),
            other => prop_assert!(false, "{:?}", other),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 2000, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn predicates_on_concrete_values_agree_with_delta(v in concrete_value(), o in prop::sample::select(PREDICATES.to_vec())) {
        let want = concrete::delta(o, std::slice::from_ref(&v)).unwrap();
        let got = proof::check(&Heap::new(), &v, &pred(o));
        prop_assert_eq!(got, if want.is_false() { Proof::Refuted } else { Proof::Proved });
    }

    #[test]
    fn proofs_hold_for_every_instance(h in heap(2), v in prop_oneof![(0..2u32).prop_map(|a| Value::Addr(a as Addr)), concrete_value()], c in flat_contract(2)) {
        let r = proof::check(&h, &v, &c);
        if r == Proof::Ambiguous {
            return Ok(());
        }
        for inst in instances(&h) {
            let sub = |x: &Value| map_addrs_value(x, &|a| inst[a as usize].clone());
            let holds = h.iter().all(|(a, e)| e.refinements().into_iter().flatten().all(|k| satisfies(&sub(k), &inst[*a as usize]) == Some(true)));
            if !holds {
                continue;
            }
            let got = satisfies(&sub(&c), &sub(&v));
            match r {
                Proof::Proved => prop_assert_eq!(got, Some(true), "instance {:?}", inst),
                _ => prop_assert_ne!(got, Some(true), "instance {:?}", inst),
            }
        }
    }

    #[test]
    fn unknown_predicates_split_into_both_branches(o in prop::sample::select(PREDICATES.to_vec())) {
        let h = Heap::from_entries([(0, Value::opaque())]);
        let out = delta(&Basic, &h, o, &[Value::Addr(0)], &Label::Top);
        prop_assert_eq!(out.len(), 2);
        for (ans, h2) in &out {
            let Answer::Val(b) = ans else { return Err(TestCaseError::fail("blame from a predicate")) };
            let want = if b.is_false() { Proof::Refuted } else { Proof::Proved };
            prop_assert_eq!(proof::check(h2, &Value::Addr(0), &pred(o)), want);
        }
    }

    #[test]
    fn delta_only_grows_the_heap(
        h in heap(3),
        o in prop::sample::select(ALL_OPS.to_vec()),
        args in prop::collection::vec(prop_oneof![(0..3u32).prop_map(|a| Value::Addr(a as Addr)), concrete_value()], 2),
    ) {
        let args = &args[..o.arity()];
        for (_, h2) in delta(&Basic, &h, o, args, &Label::Top) {
            for (a, v) in h.iter() {
                let Some(w) = h2.get(*a) else { return Err(TestCaseError::fail(format!("lost address {a}"))) };
                let (old, new) = (v.refinements().unwrap(), w.refinements().unwrap());
                prop_assert!(old.is_subset(new), "refinements of {} shrank", a);
            }
        }
    }

    #[test]
    fn widening_covers_both_operands(v0 in deep_value(), v1 in deep_value()) {
        let h = Heap::new();
        let w = widen(&h, &v0, &v1);
        if w != v1 {
            prop_assert!(covers(&Basic, &h, &w, &h, &v0), "{:?} does not cover {:?}", w, v0);
            prop_assert!(covers(&Basic, &h, &w, &h, &v1), "{:?} does not cover {:?}", w, v1);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 300, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn the_solver_refines_the_basic_relation(h in heap(3), a in 0..3u32, c in int_atom(3)) {
        let z3 = Smt::from_command("z3 -in");
        let v = Value::Addr(a as Addr);
        let c = atom_contract(&c);
        let basic = proof::check(&h, &v, &c);
        let with = z3.check(&h, &v, &c);
        let without = Smt::none().check(&h, &v, &c);
        prop_assert_eq!(without, basic);
        if basic != Proof::Ambiguous {
            prop_assert_eq!(with, basic);
        }
    }

    #[test]
    fn refinement_keeps_what_was_proved(h in heap(3), a in 0..3u32, c in flat_contract(3), d in flat_contract(3)) {
        prop_assume!(feasible(&h));
        let v = Value::Addr(a as Addr);
        if proof::check(&h, &v, &c) == Proof::Proved && proof::check(&h, &v, &d) != Proof::Refuted {
            let (h2, v2) = refine(&h, &v, &d);
            prop_assert_eq!(proof::check(&h2, &v2, &c), Proof::Proved);
        }
    }
}

/// Concrete values of depth up to 4.
fn deep_value() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![(-2i64..=2).prop_map(Value::int), Just(Value::empty()), any::<bool>().prop_map(Value::bool)];
    leaf.prop_recursive(4, 16, 2, |inner| (inner.clone(), inner).prop_map(|(a, b)| Value::cons(a, b)))
}

/// Candidate concrete values for each heap address.
fn instances(h: &Heap) -> Vec<Vec<Value>> {
    let others = || {
        vec![Value::int(-1), Value::int(0), Value::int(2), Value::bool(true), Value::bool(false), Value::empty(), Value::cons(Value::int(0), Value::empty())]
    };
    let mut out: Vec<Vec<Value>> = vec![vec![]];
    for (_, v) in h.iter() {
        let choices: Vec<Value> = match v.pre_value() {
            Some(PreValue::Opaque) if v.refinements().is_some_and(|s| s.contains(&pred(Op::IntP))) => (-4..=4).map(Value::int).collect(),
            Some(PreValue::Opaque) => others(),
            _ => vec![strip(v)],
        };
        out = out.into_iter().flat_map(|p| choices.iter().map(move |c| [p.clone(), vec![c.clone()]].concat())).collect();
    }
    out
}

/// Runs contract `c` on `v`: `Some(true)` when it accepts, `Some(false)` when
/// it rejects, `None` when applying it fails.
fn satisfies(c: &Value, v: &Value) -> Option<bool> {
    let p = Program { modules: vec![], top: Expr::app(Expr::Val(c.clone()), Expr::Val(v.clone()), Label::Top) };
    match concrete::run_here(&p, 10_000) {
        Outcome::Value(r) => Some(!r.is_false()),
        _ => None,
    }
}
