//! Recognition of the small set of flat contracts the prover and solver
//! understand, and their canonical representations.

use crate::syntax::*;

/// A primitive fact about a single value.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Atom {
    Pred(Op),
    NotPred(Op),
    /// `(⋈/c k)` with `k` an integer or an address.
    Cmp(Op, Value),
    /// `(!=/c k)`, the false branch of `=`.
    Neq(Value),
    /// `(=/c (⊙ a b))`.
    Arith(Op, Value, Value),
}

/// Structure of a flat contract's body.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Shape {
    True,
    False,
    Atom(Atom),
    And(Box<Shape>, Box<Shape>),
    Or(Box<Shape>, Box<Shape>),
    Not(Box<Shape>),
    Other,
}

const X: &str = "x";

pub fn pred(o: Op) -> Value {
    atom_contract(&Atom::Pred(o))
}

pub fn neg_pred(o: Op) -> Value {
    Value::pre(PreValue::NegPred(o))
}

pub fn atom_contract(a: &Atom) -> Value {
    let x = || Expr::var(X);
    let l = || Label::Lang;
    match a {
        Atom::Pred(o) => Value::lam(X, Expr::prim(*o, vec![x()], l())),
        Atom::NotPred(o) => neg_pred(*o),
        Atom::Cmp(o, k) => Value::lam(X, Expr::prim(*o, vec![x(), Expr::Val(k.clone())], l())),
        Atom::Neq(k) => Value::lam(
            X,
            Expr::prim(Op::FalseP, vec![Expr::prim(Op::Eq, vec![x(), Expr::Val(k.clone())], l())], l()),
        ),
        Atom::Arith(o, a, b) => Value::lam(
            X,
            Expr::prim(
                Op::Eq,
                vec![x(), Expr::prim(*o, vec![Expr::Val(a.clone()), Expr::Val(b.clone())], l())],
                l(),
            ),
        ),
    }
}

/// The contract `λx.true`.
pub fn any_contract() -> Value {
    Value::lam(X, Expr::Val(Value::bool(true)))
}

fn operand(e: &Expr) -> Option<Value> {
    match e {
        Expr::Val(Value::Addr(a)) => Some(Value::Addr(*a)),
        Expr::Val(v) => v.as_int().map(Value::int),
        _ => None,
    }
}

fn is_var(e: &Expr, x: &str) -> bool {
    matches!(e, Expr::Var(y) if &**y == x)
}

fn atom_body(e: &Expr, x: &str) -> Option<Atom> {
    let Expr::Prim(o, args, _) = e else { return None };
    match (o, args.as_slice()) {
        (o, [a]) if o.is_pred() && is_var(a, x) => Some(Atom::Pred(*o)),
        (Op::Eq, [a, Expr::Prim(ar, bs, _)]) if is_var(a, x) && matches!(ar, Op::Add | Op::Sub | Op::Mul) => {
            match bs.as_slice() {
                [b1, b2] => Some(Atom::Arith(*ar, operand(b1)?, operand(b2)?)),
                _ => None,
            }
        }
        (o, [a, k]) if o.is_cmp() && is_var(a, x) => Some(Atom::Cmp(*o, operand(k)?)),
        (o, [k, a]) if o.is_cmp() && is_var(a, x) => Some(Atom::Cmp(o.flip(), operand(k)?)),
        (Op::FalseP, [inner]) => match atom_body(inner, x)? {
            Atom::Cmp(Op::Eq, k) => Some(Atom::Neq(k)),
            Atom::Pred(p) => Some(Atom::NotPred(p)),
            _ => None,
        },
        _ => None,
    }
}

/// Recognizes a contract value that is exactly one atom.
pub fn atom_of(c: &Value) -> Option<Atom> {
    match c.pre_value()? {
        PreValue::NegPred(o) => Some(Atom::NotPred(*o)),
        PreValue::Lam(x, b) => atom_body(b, x),
        _ => None,
    }
}

pub fn shape_of(c: &Value) -> Shape {
    match c.pre_value() {
        Some(PreValue::NegPred(o)) => Shape::Atom(Atom::NotPred(*o)),
        Some(PreValue::Lam(x, b)) => shape_body(b, x, 0),
        _ => Shape::Other,
    }
}

fn shape_body(e: &Expr, x: &str, depth: usize) -> Shape {
    if depth > 16 {
        return Shape::Other;
    }
    if let Some(a) = atom_body(e, x) {
        return Shape::Atom(a);
    }
    match e {
        Expr::Val(v) if v.is_false() => Shape::False,
        Expr::Val(Value::Refined(p, _)) if !matches!(**p, PreValue::Opaque) => Shape::True,
        Expr::If(a, b, c) => {
            let sa = shape_body(a, x, depth + 1);
            let sb = shape_body(b, x, depth + 1);
            let sc = shape_body(c, x, depth + 1);
            match (sb, sc) {
                (Shape::True, Shape::False) => sa,
                (sb, Shape::False) => Shape::And(Box::new(sa), Box::new(sb)),
                (Shape::True, sc) => Shape::Or(Box::new(sa), Box::new(sc)),
                (Shape::False, Shape::True) => Shape::Not(Box::new(sa)),
                _ => Shape::Other,
            }
        }
        Expr::Prim(Op::FalseP, args, _) if args.len() == 1 => Shape::Not(Box::new(shape_body(&args[0], x, depth + 1))),
        Expr::App(f, a, _) if is_var(a, x) => match &**f {
            Expr::Val(Value::Refined(p, _)) => match &**p {
                PreValue::Lam(y, b) => shape_body(b, y, depth + 1),
                PreValue::NegPred(o) => Shape::Atom(Atom::NotPred(*o)),
                _ => Shape::Other,
            },
            _ => Shape::Other,
        },
        _ => Shape::Other,
    }
}

/// Atoms implied by a contract: the contract itself if atomic, or every
/// conjunct of a conjunction.
pub fn implied_atoms(c: &Value, out: &mut Vec<Atom>) {
    fn walk(s: &Shape, out: &mut Vec<Atom>) {
        match s {
            Shape::Atom(a) => out.push(a.clone()),
            Shape::And(a, b) => {
                walk(a, out);
                walk(b, out);
            }
            _ => {}
        }
    }
    walk(&shape_of(c), out);
}

/// All atoms implied by a refinement set.
pub fn facts(set: &RefSet) -> Vec<Atom> {
    let mut out = Vec::new();
    for c in set {
        implied_atoms(c, &mut out);
    }
    out
}

/// Comparison atoms and their negation within the integer fragment.
pub fn negate_atom(a: &Atom) -> Option<Atom> {
    match a {
        Atom::Pred(o) => Some(Atom::NotPred(*o)),
        Atom::NotPred(o) => Some(Atom::Pred(*o)),
        Atom::Cmp(Op::Eq, k) => Some(Atom::Neq(k.clone())),
        Atom::Neq(k) => Some(Atom::Cmp(Op::Eq, k.clone())),
        Atom::Cmp(o, k) => Some(Atom::Cmp(o.complement()?, k.clone())),
        Atom::Arith(..) => None,
    }
}

/// Normalizes a contract to canonical form when it is a single atom.
pub fn normalize(c: &Value) -> Value {
    match atom_of(&c.bare()) {
        Some(a) if c.refinements().is_none_or(|s| s.is_empty()) => atom_contract(&a),
        _ => c.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_atoms_round_trip() {
        let atoms = vec![
            Atom::Pred(Op::IntP),
            Atom::NotPred(Op::ConsP),
            Atom::Cmp(Op::Gt, Value::int(5)),
            Atom::Cmp(Op::Le, Value::Addr(3)),
            Atom::Neq(Value::int(0)),
            Atom::Arith(Op::Add, Value::Addr(1), Value::int(1)),
        ];
        for a in atoms {
            assert_eq!(atom_of(&atom_contract(&a)), Some(a));
        }
    }

    #[test]
    fn flipped_comparison_is_recognized() {
        let c = Value::lam("y", Expr::prim(Op::Lt, vec![Expr::int(0), Expr::var("y")], Label::module("m")));
        assert_eq!(atom_of(&c), Some(Atom::Cmp(Op::Gt, Value::int(0))));
    }

    #[test]
    fn conjunction_yields_both_atoms() {
        let body = Expr::if_(
            Expr::prim(Op::IntP, vec![Expr::var("v")], Label::Top),
            Expr::prim(Op::Ge, vec![Expr::var("v"), Expr::int(0)], Label::Top),
            Expr::Val(Value::bool(false)),
        );
        let c = Value::lam("v", body);
        let mut out = Vec::new();
        implied_atoms(&c, &mut out);
        assert_eq!(out, vec![Atom::Pred(Op::IntP), Atom::Cmp(Op::Ge, Value::int(0))]);
    }

    #[test]
    fn true_body_is_any() {
        assert_eq!(shape_of(&any_contract()), Shape::True);
    }
}
