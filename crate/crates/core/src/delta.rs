//! Primitive operations over symbolic heaps.

use crate::heap::{refine, refine_mut, Heap};
use crate::proof::{int_of, operand_of, Oracle, Proof};
use crate::shape::{atom_contract, neg_pred, negate_atom, pred, Atom};
use crate::syntax::*;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Answer {
    Val(Value),
    Blame(Label, Label),
}

pub type Outcomes = Vec<(Answer, Heap)>;

/// All outcomes of `o` applied to `args` in `h`.
pub fn delta(or: &dyn Oracle, h: &Heap, o: Op, args: &[Value], l: &Label) -> Outcomes {
    assert_eq!(args.len(), o.arity(), "arity of {}", o.name());
    let blame = || Answer::Blame(l.clone(), Label::Lang);
    match o {
        _ if o.is_pred() => split(or, h, &args[0], o)
            .into_iter()
            .map(|(b, h)| (Answer::Val(Value::bool(b)), h))
            .collect(),
        Op::Cons => vec![(Answer::Val(Value::cons(args[0].clone(), args[1].clone())), h.clone())],
        Op::Car | Op::Cdr => project(or, h, &args[0], o == Op::Car, l),
        _ => {
            let (a, b) = match o {
                Op::Add1 => (args[0].clone(), Value::int(1)),
                _ => (args[0].clone(), args[1].clone()),
            };
            let mut out = Vec::new();
            for (ok1, h1) in split(or, h, &a, Op::IntP) {
                if !ok1 {
                    out.push((blame(), h1));
                    continue;
                }
                for (ok2, h2) in split(or, &h1, &b, Op::IntP) {
                    if !ok2 {
                        out.push((blame(), h2));
                    } else if o.is_arith() {
                        out.push(arith(&h2, o, &a, &b));
                    } else {
                        out.extend(compare(or, &h2, o, &a, &b));
                    }
                }
            }
            out
        }
    }
}

/// Splits on a primitive predicate: `true` and/or `false` with the heap
/// refined accordingly.
pub fn split(or: &dyn Oracle, h: &Heap, v: &Value, o: Op) -> Vec<(bool, Heap)> {
    match or.check(h, v, &pred(o)) {
        Proof::Proved => vec![(true, h.clone())],
        Proof::Refuted => vec![(false, h.clone())],
        Proof::Ambiguous => vec![(true, refine(h, v, &pred(o)).0), (false, refine(h, v, &neg_pred(o)).0)],
    }
}

fn arith(h: &Heap, o: Op, a: &Value, b: &Value) -> (Answer, Heap) {
    let op = if o == Op::Add1 { Op::Add } else { o };
    if let (Some(x), Some(y)) = (int_of(h, a), int_of(h, b)) {
        return (Answer::Val(Value::int(op.eval_arith(x, y))), h.clone());
    }
    let exact = atom_contract(&Atom::Arith(op, operand_of(h, a), operand_of(h, b)));
    let (h2, l) = h.alloc_pure(Value::opaque_with([pred(Op::IntP), exact].into()));
    (Answer::Val(Value::Addr(l)), h2)
}

fn compare(or: &dyn Oracle, h: &Heap, o: Op, a: &Value, b: &Value) -> Outcomes {
    if let (Some(x), Some(y)) = (int_of(h, a), int_of(h, b)) {
        return vec![(Answer::Val(Value::bool(o.eval_cmp(x, y))), h.clone())];
    }
    // Record the fact on the abstract side.
    let (subject, atom) = if int_of(h, a).is_none() {
        (a, Atom::Cmp(o, operand_of(h, b)))
    } else {
        (b, Atom::Cmp(o.flip(), operand_of(h, a)))
    };
    let c = atom_contract(&atom);
    match or.check(h, subject, &c) {
        Proof::Proved => vec![(Answer::Val(Value::bool(true)), h.clone())],
        Proof::Refuted => vec![(Answer::Val(Value::bool(false)), h.clone())],
        Proof::Ambiguous => {
            let not_c = atom_contract(&negate_atom(&atom).expect("comparisons have complements"));
            vec![
                (Answer::Val(Value::bool(true)), refine(h, subject, &c).0),
                (Answer::Val(Value::bool(false)), refine(h, subject, &not_c).0),
            ]
        }
    }
}

fn project(or: &dyn Oracle, h: &Heap, v: &Value, first: bool, l: &Label) -> Outcomes {
    let pick = |a: &Value, b: &Value| if first { a.clone() } else { b.clone() };
    if let Some(PreValue::Cons(a, b)) = v.pre_value() {
        return vec![(Answer::Val(pick(a, b)), h.clone())];
    }
    let blame = Answer::Blame(l.clone(), Label::Lang);
    let Value::Addr(addr) = v else {
        return vec![(blame, h.clone())];
    };
    let through = |h: &Heap| -> (Answer, Heap) {
        let mut h2 = h.clone();
        refine_mut(&mut h2, v, &pred(Op::ConsP));
        match h2.entry(*addr).pre_value() {
            Some(PreValue::Cons(a, b)) => (Answer::Val(pick(a, b)), h2),
            // A pair whose components are not tracked individually.
            _ => {
                let fresh = h2.alloc(Value::opaque());
                (Answer::Val(Value::Addr(fresh)), h2)
            }
        }
    };
    match or.check(h, v, &pred(Op::ConsP)) {
        Proof::Proved => vec![through(h)],
        Proof::Refuted => vec![(blame, h.clone())],
        Proof::Ambiguous => vec![through(h), (blame, refine(h, v, &neg_pred(Op::ConsP)).0)],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proof::Basic;

    fn vals(out: &Outcomes) -> Vec<Answer> {
        out.iter().map(|(a, _)| a.clone()).collect()
    }

    #[test]
    fn concrete_add1() {
        let out = delta(&Basic, &Heap::new(), Op::Add1, &[Value::int(5)], &Label::Top);
        assert_eq!(vals(&out), vec![Answer::Val(Value::int(6))]);
    }

    #[test]
    fn abstract_add1_records_exact_result() {
        let h = Heap::from_entries([(0, Value::opaque())]);
        let out = delta(&Basic, &h, Op::Add1, &[Value::Addr(0)], &Label::module("f"));
        assert_eq!(out.len(), 2);
        let (Answer::Val(Value::Addr(l)), ht) = &out[0] else { panic!("{out:?}") };
        assert_eq!(*l, 1);
        let exact = atom_contract(&Atom::Arith(Op::Add, Value::Addr(0), Value::int(1)));
        assert_eq!(ht.get(1), Some(&Value::opaque_with([pred(Op::IntP), exact].into())));
        assert_eq!(ht.get(0), Some(&Value::opaque_with([pred(Op::IntP)].into())));
        assert_eq!(out[1].0, Answer::Blame(Label::module("f"), Label::Lang));
        assert_eq!(out[1].1.get(0), Some(&Value::opaque_with([neg_pred(Op::IntP)].into())));
    }

    #[test]
    fn predicate_split() {
        let h = Heap::from_entries([(0, Value::opaque())]);
        let out = delta(&Basic, &h, Op::IntP, &[Value::Addr(0)], &Label::Top);
        assert_eq!(vals(&out), vec![Answer::Val(Value::bool(true)), Answer::Val(Value::bool(false))]);
    }

    #[test]
    fn car_of_pair_and_of_empty() {
        let p = Value::cons(Value::int(1), Value::int(2));
        let out = delta(&Basic, &Heap::new(), Op::Car, &[p], &Label::Top);
        assert_eq!(vals(&out), vec![Answer::Val(Value::int(1))]);
        let out = delta(&Basic, &Heap::new(), Op::Car, &[Value::empty()], &Label::Top);
        assert_eq!(vals(&out), vec![Answer::Blame(Label::Top, Label::Lang)]);
    }

    #[test]
    fn comparison_refines_both_branches() {
        let h = Heap::from_entries([(0, Value::opaque_with([pred(Op::IntP)].into()))]);
        let out = delta(&Basic, &h, Op::Gt, &[Value::int(3), Value::Addr(0)], &Label::Top);
        let lt = atom_contract(&Atom::Cmp(Op::Lt, Value::int(3)));
        let ge = atom_contract(&Atom::Cmp(Op::Ge, Value::int(3)));
        assert!(out[0].1.get(0).unwrap().refinements().unwrap().contains(&lt));
        assert!(out[1].1.get(0).unwrap().refinements().unwrap().contains(&ge));
    }
}
