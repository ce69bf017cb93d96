//! Three-valued provability of flat contracts against values.

use crate::heap::Heap;
use crate::shape::{facts, negate_atom, normalize, shape_of, Atom, Shape};
use crate::syntax::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize)]
pub enum Proof {
    Proved,
    Refuted,
    Ambiguous,
}

impl Proof {
    pub fn negate(self) -> Proof {
        match self {
            Proof::Proved => Proof::Refuted,
            Proof::Refuted => Proof::Proved,
            Proof::Ambiguous => Proof::Ambiguous,
        }
    }
}

/// Something that decides `σ ⊢ v : c`.
pub trait Oracle: Sync {
    fn check(&self, h: &Heap, v: &Value, c: &Value) -> Proof;
}

/// The basic relation, without a solver.
pub struct Basic;

impl Oracle for Basic {
    fn check(&self, h: &Heap, v: &Value, c: &Value) -> Proof {
        check(h, v, c)
    }
}

pub fn check(h: &Heap, v: &Value, c: &Value) -> Proof {
    check_with(h, v, c, &mut |h, v, a| basic_atom(h, v, a, 0))
}

const MAX_DEPTH: usize = 24;

/// Decides a contract by membership, then by its shape, delegating single
/// atoms to `atom`.
pub fn check_with(
    h: &Heap,
    v: &Value,
    c: &Value,
    atom: &mut dyn FnMut(&Heap, &Value, &Atom) -> Proof,
) -> Proof {
    let c = normalize(c);
    if let Some(set) = known_set(h, v) {
        if set.contains(&c) {
            return Proof::Proved;
        }
    }
    decide_shape(h, v, &shape_of(&c), atom)
}

fn decide_shape(h: &Heap, v: &Value, s: &Shape, atom: &mut dyn FnMut(&Heap, &Value, &Atom) -> Proof) -> Proof {
    match s {
        Shape::True => Proof::Proved,
        Shape::False => Proof::Refuted,
        Shape::Atom(a) => atom(h, v, a),
        Shape::Not(s) => decide_shape(h, v, s, atom).negate(),
        Shape::And(a, b) => match decide_shape(h, v, a, atom) {
            Proof::Refuted => Proof::Refuted,
            Proof::Proved => decide_shape(h, v, b, atom),
            Proof::Ambiguous => Proof::Ambiguous,
        },
        Shape::Or(a, b) => match decide_shape(h, v, a, atom) {
            Proof::Proved => Proof::Proved,
            Proof::Refuted => decide_shape(h, v, b, atom),
            Proof::Ambiguous => Proof::Ambiguous,
        },
        Shape::Other => Proof::Ambiguous,
    }
}

/// The refinement set attached to `v`, through one address.
fn known_set<'a>(h: &'a Heap, v: &'a Value) -> Option<&'a RefSet> {
    match v {
        Value::Addr(a) => h.get(*a).and_then(|e| e.refinements()),
        Value::Refined(_, s) => Some(s),
    }
}

/// Integer value of `v`, if concrete (directly or through its address).
pub fn int_of(h: &Heap, v: &Value) -> Option<i64> {
    match v {
        Value::Addr(a) => h.get(*a).and_then(|e| e.as_int()),
        _ => v.as_int(),
    }
}

/// Comparison operand as it appears in atoms: an address or a bare integer.
pub fn operand_of(h: &Heap, v: &Value) -> Value {
    match int_of(h, v) {
        Some(n) => Value::int(n),
        None => v.bare(),
    }
}

fn pred_holds(p: &PreValue, o: Op) -> Option<bool> {
    let own = match p {
        PreValue::Int(_) => Op::IntP,
        PreValue::Bool(false) => Op::FalseP,
        PreValue::Bool(true) => return Some(false),
        PreValue::Empty => Op::EmptyP,
        PreValue::Cons(..) => Op::ConsP,
        PreValue::Lam(..) | PreValue::NegPred(_) => Op::ProcP,
        PreValue::DepCon(..) => Op::DepP,
        PreValue::Opaque | PreValue::Rec(..) | PreValue::RecRef(_) => return None,
    };
    Some(own == o)
}

/// Relations `x ⋈ k` as the subset of {<, =, >} they admit.
fn rel_mask(a: &Atom) -> Option<(u8, &Value)> {
    const LT: u8 = 1;
    const EQ: u8 = 2;
    const GT: u8 = 4;
    match a {
        Atom::Cmp(o, k) => Some((
            match o {
                Op::Eq => EQ,
                Op::Gt => GT,
                Op::Lt => LT,
                Op::Ge => GT | EQ,
                Op::Le => LT | EQ,
                _ => return None,
            },
            k,
        )),
        Atom::Neq(k) => Some((LT | GT, k)),
        _ => None,
    }
}

/// Closed integer interval implied by facts with constant bounds.
fn interval(fs: &[Atom]) -> (i128, i128, Vec<i64>) {
    let (mut lo, mut hi) = (i128::MIN, i128::MAX);
    let mut holes = Vec::new();
    for f in fs {
        let Some((m, k)) = rel_mask(f) else { continue };
        let Some(n) = k.as_int() else { continue };
        let n = n as i128;
        match m {
            2 => {
                lo = lo.max(n);
                hi = hi.min(n);
            }
            4 => lo = lo.max(n + 1),
            6 => lo = lo.max(n),
            1 => hi = hi.min(n - 1),
            3 => hi = hi.min(n),
            5 => holes.push(n as i64),
            _ => {}
        }
    }
    (lo, hi, holes)
}

/// What the facts of a refinement set say about an atom.
fn from_facts(fs: &[Atom], a: &Atom) -> Proof {
    if fs.contains(a) {
        return Proof::Proved;
    }
    if let Some(n) = negate_atom(a) {
        if fs.contains(&n) {
            return Proof::Refuted;
        }
    }
    let numeric = |f: &Atom| matches!(f, Atom::Cmp(..) | Atom::Neq(_) | Atom::Arith(..));
    match a {
        Atom::Pred(o) => {
            for f in fs {
                match f {
                    Atom::Pred(p) if p != o => return Proof::Refuted,
                    f if numeric(f) => return if *o == Op::IntP { Proof::Proved } else { Proof::Refuted },
                    _ => {}
                }
            }
            Proof::Ambiguous
        }
        Atom::NotPred(o) => from_facts(fs, &Atom::Pred(*o)).negate(),
        Atom::Cmp(..) | Atom::Neq(_) => {
            let (gm, gk) = rel_mask(a).expect("comparison atom");
            // Same symbolic bound: compare admitted relation sets.
            let mut allowed = 7u8;
            for f in fs {
                if let Some((m, k)) = rel_mask(f) {
                    if k == gk {
                        allowed &= m;
                    }
                }
            }
            if allowed & !gm == 0 {
                return Proof::Proved;
            }
            if allowed & gm == 0 {
                return Proof::Refuted;
            }
            if let Some(n) = gk.as_int() {
                let (lo, hi, holes) = interval(fs);
                let n = n as i128;
                if lo > hi {
                    return Proof::Ambiguous;
                }
                let mut can = 0u8;
                if lo < n {
                    can |= 1;
                }
                if lo <= n && n <= hi && !holes.contains(&(n as i64)) {
                    can |= 2;
                }
                if hi > n {
                    can |= 4;
                }
                if can & !gm == 0 {
                    return Proof::Proved;
                }
                if can & gm == 0 {
                    return Proof::Refuted;
                }
            }
            Proof::Ambiguous
        }
        Atom::Arith(..) => Proof::Ambiguous,
    }
}

/// Basic decision of one atom.
pub fn basic_atom(h: &Heap, v: &Value, a: &Atom, depth: usize) -> Proof {
    if depth > MAX_DEPTH {
        return Proof::Ambiguous;
    }
    let (p, set) = match v {
        Value::Addr(l) => match h.get(*l) {
            Some(Value::Refined(p, s)) => (&**p, s),
            _ => return Proof::Ambiguous,
        },
        Value::Refined(p, s) => (&**p, s),
    };
    // A known constructor decides before the facts recorded about it.
    let structural = structural_atom(h, v, p, a, depth);
    if structural != Proof::Ambiguous {
        return structural;
    }
    let known = from_facts(&facts(set), a);
    if known != Proof::Ambiguous {
        return known;
    }
    if let PreValue::Rec(x, ms) = p {
        return rec_atom(h, x, ms, a, depth);
    }
    Proof::Ambiguous
}

fn structural_atom(h: &Heap, v: &Value, p: &PreValue, a: &Atom, depth: usize) -> Proof {
    match a {
        Atom::Pred(o) => match pred_holds(p, *o) {
            Some(true) => Proof::Proved,
            Some(false) => Proof::Refuted,
            None => Proof::Ambiguous,
        },
        Atom::NotPred(o) => basic_atom(h, v, &Atom::Pred(*o), depth + 1).negate(),
        Atom::Cmp(..) | Atom::Neq(_) => {
            let (m, k) = rel_mask(a).expect("comparison atom");
            let vi = match p {
                PreValue::Int(n) => Some(*n),
                _ => None,
            };
            let ki = int_of(h, k);
            if let (Some(x), Some(y)) = (vi, ki) {
                let rel = match x.cmp(&y) {
                    std::cmp::Ordering::Less => 1,
                    std::cmp::Ordering::Equal => 2,
                    std::cmp::Ordering::Greater => 4,
                };
                return if m & rel != 0 { Proof::Proved } else { Proof::Refuted };
            }
            if let (Value::Addr(l), Value::Addr(r)) = (v, k) {
                // Comparing an unknown with itself decides only once it is
                // known to be an integer; otherwise the comparison may fail.
                if l == r && basic_atom(h, v, &Atom::Pred(Op::IntP), depth + 1) == Proof::Proved {
                    return if m & 2 != 0 { Proof::Proved } else { Proof::Refuted };
                }
            }
            Proof::Ambiguous
        }
        Atom::Arith(o, x, y) => {
            let vi = match p {
                PreValue::Int(n) => Some(*n),
                _ => None,
            };
            match (vi, int_of(h, x), int_of(h, y)) {
                (Some(n), Some(a), Some(b)) => {
                    if o.eval_arith(a, b) == n {
                        Proof::Proved
                    } else {
                        Proof::Refuted
                    }
                }
                _ => Proof::Ambiguous,
            }
        }
    }
}

/// A recursive value satisfies an atom when every unrolled member does.
fn rec_atom(h: &Heap, x: &Name, ms: &std::collections::BTreeSet<Value>, a: &Atom, depth: usize) -> Proof {
    let mut all_p = true;
    let mut all_r = true;
    for m in ms {
        let u = subst_recref(m, x, &Value::opaque());
        match basic_atom(h, &u, a, depth + 1) {
            Proof::Proved => all_r = false,
            Proof::Refuted => all_p = false,
            Proof::Ambiguous => return Proof::Ambiguous,
        }
    }
    match (all_p, all_r) {
        (true, false) => Proof::Proved,
        (false, true) => Proof::Refuted,
        _ => Proof::Ambiguous,
    }
}
