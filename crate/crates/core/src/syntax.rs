//! Abstract syntax of the symbolic core language.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::heap::Heap;

pub type Name = Arc<str>;
pub type Addr = u32;

pub fn name(s: &str) -> Name {
    Arc::from(s)
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    /// The top-level expression (†).
    Top,
    /// The language itself (Λ).
    Lang,
    Havoc,
    Mod(Name),
}

impl Label {
    pub fn module(s: &str) -> Label {
        Label::Mod(name(s))
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Top => write!(f, "†"),
            Label::Lang => write!(f, "Λ"),
            Label::Havoc => write!(f, "havoc"),
            Label::Mod(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Op {
    Add1,
    Add,
    Sub,
    Mul,
    Eq,
    Gt,
    Lt,
    Ge,
    Le,
    Cons,
    Car,
    Cdr,
    IntP,
    FalseP,
    ConsP,
    EmptyP,
    ProcP,
    DepP,
}

pub const ALL_OPS: [Op; 18] = [
    Op::Add1,
    Op::Add,
    Op::Sub,
    Op::Mul,
    Op::Eq,
    Op::Gt,
    Op::Lt,
    Op::Ge,
    Op::Le,
    Op::Cons,
    Op::Car,
    Op::Cdr,
    Op::IntP,
    Op::FalseP,
    Op::ConsP,
    Op::EmptyP,
    Op::ProcP,
    Op::DepP,
];

pub const PREDICATES: [Op; 6] = [Op::IntP, Op::FalseP, Op::ConsP, Op::EmptyP, Op::ProcP, Op::DepP];

impl Op {
    pub fn name(self) -> &'static str {
        match self {
            Op::Add1 => "add1",
            Op::Add => "+",
            Op::Sub => "-",
            Op::Mul => "*",
            Op::Eq => "=",
            Op::Gt => ">",
            Op::Lt => "<",
            Op::Ge => ">=",
            Op::Le => "<=",
            Op::Cons => "cons",
            Op::Car => "car",
            Op::Cdr => "cdr",
            Op::IntP => "int?",
            Op::FalseP => "false?",
            Op::ConsP => "cons?",
            Op::EmptyP => "empty?",
            Op::ProcP => "proc?",
            Op::DepP => "dep?",
        }
    }

    pub fn from_name(s: &str) -> Option<Op> {
        // num? is the same predicate as int?
        if s == "num?" {
            return Some(Op::IntP);
        }
        ALL_OPS.iter().copied().find(|o| o.name() == s)
    }

    pub fn arity(self) -> usize {
        match self {
            Op::Add | Op::Sub | Op::Mul | Op::Eq | Op::Gt | Op::Lt | Op::Ge | Op::Le | Op::Cons => 2,
            _ => 1,
        }
    }

    pub fn is_pred(self) -> bool {
        PREDICATES.contains(&self)
    }

    pub fn is_cmp(self) -> bool {
        matches!(self, Op::Eq | Op::Gt | Op::Lt | Op::Ge | Op::Le)
    }

    pub fn is_arith(self) -> bool {
        matches!(self, Op::Add1 | Op::Add | Op::Sub | Op::Mul)
    }

    /// `a op b` holds iff `b flip(op) a` holds.
    pub fn flip(self) -> Op {
        match self {
            Op::Gt => Op::Lt,
            Op::Lt => Op::Gt,
            Op::Ge => Op::Le,
            Op::Le => Op::Ge,
            o => o,
        }
    }

    /// Comparison holding exactly when `self` fails. `=` has no complement here.
    pub fn complement(self) -> Option<Op> {
        match self {
            Op::Gt => Some(Op::Le),
            Op::Le => Some(Op::Gt),
            Op::Lt => Some(Op::Ge),
            Op::Ge => Some(Op::Lt),
            _ => None,
        }
    }

    pub fn eval_cmp(self, a: i64, b: i64) -> bool {
        match self {
            Op::Eq => a == b,
            Op::Gt => a > b,
            Op::Lt => a < b,
            Op::Ge => a >= b,
            Op::Le => a <= b,
            _ => panic!("not a comparison: {}", self.name()),
        }
    }

    pub fn eval_arith(self, a: i64, b: i64) -> i64 {
        match self {
            Op::Add | Op::Add1 => a.wrapping_add(b),
            Op::Sub => a.wrapping_sub(b),
            Op::Mul => a.wrapping_mul(b),
            _ => panic!("not arithmetic: {}", self.name()),
        }
    }
}

/// Refinement set: contracts a value is known to satisfy.
pub type RefSet = BTreeSet<Value>;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Addr(Addr),
    Refined(Box<PreValue>, RefSet),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PreValue {
    Lam(Name, Box<Expr>),
    Int(i64),
    Bool(bool),
    Empty,
    Cons(Value, Value),
    DepCon(Value, Name, Box<Expr>),
    Opaque,
    Rec(Name, BTreeSet<Value>),
    RecRef(Name),
    /// The negation ¬o? of a primitive predicate.
    NegPred(Op),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MonLabels {
    pub pos: Label,
    pub neg: Label,
    pub src: Label,
}

impl MonLabels {
    pub fn new(pos: Label, neg: Label, src: Label) -> Self {
        MonLabels { pos, neg, src }
    }

    pub fn swapped(&self) -> Self {
        MonLabels { pos: self.neg.clone(), neg: self.pos.clone(), src: self.src.clone() }
    }
}

/// Marks the body of an application `(f arg)` begun under heap `heap`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RtMark {
    pub heap: Heap,
    pub f: Value,
    pub arg: Value,
}

/// Guides approximation of the enclosed result by a previously known one.
/// `ren` pairs addresses of the earlier application with the current ones;
/// `heap` holds, per old address, the entry known when the result was reused.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlurMark {
    pub ren: Vec<(Addr, Addr)>,
    pub heap: BTreeMap<Addr, Value>,
    pub prev: Value,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expr {
    Val(Value),
    /// Lambda-bound variable.
    Var(Name),
    /// Module reference f^ℓ.
    Ref(Name, Label),
    App(Box<Expr>, Box<Expr>, Label),
    Prim(Op, Vec<Expr>, Label),
    If(Box<Expr>, Box<Expr>, Box<Expr>),
    DepCon(Box<Expr>, Name, Box<Expr>),
    Mon(Box<Expr>, MonLabels, Box<Expr>),
    Blame(Label, Label),
    Assume(Value, Value),
    Rt(Box<RtMark>, Box<Expr>),
    Blur(Box<BlurMark>, Box<Expr>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Module {
    pub name: Name,
    pub contract: Expr,
    /// `None` marks an opaque module.
    pub body: Option<Expr>,
}

impl Module {
    pub fn is_opaque(&self) -> bool {
        self.body.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    pub modules: Vec<Module>,
    pub top: Expr,
}

impl Program {
    pub fn module(&self, n: &str) -> Option<&Module> {
        self.modules.iter().find(|m| &*m.name == n)
    }
}

// ---------------------------------------------------------------------------
// Constructors

impl Value {
    pub fn pre(p: PreValue) -> Value {
        Value::Refined(Box::new(p), RefSet::new())
    }
    pub fn int(n: i64) -> Value {
        Value::pre(PreValue::Int(n))
    }
    pub fn bool(b: bool) -> Value {
        Value::pre(PreValue::Bool(b))
    }
    pub fn empty() -> Value {
        Value::pre(PreValue::Empty)
    }
    pub fn opaque() -> Value {
        Value::pre(PreValue::Opaque)
    }
    pub fn opaque_with(set: RefSet) -> Value {
        Value::Refined(Box::new(PreValue::Opaque), set)
    }
    pub fn cons(a: Value, b: Value) -> Value {
        Value::pre(PreValue::Cons(a, b))
    }
    pub fn lam(x: &str, body: Expr) -> Value {
        Value::pre(PreValue::Lam(name(x), Box::new(body)))
    }

    pub fn pre_value(&self) -> Option<&PreValue> {
        match self {
            Value::Refined(p, _) => Some(p),
            Value::Addr(_) => None,
        }
    }

    pub fn refinements(&self) -> Option<&RefSet> {
        match self {
            Value::Refined(_, s) => Some(s),
            Value::Addr(_) => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self.pre_value() {
            Some(PreValue::Int(n)) => Some(*n),
            _ => None,
        }
    }

    pub fn is_false(&self) -> bool {
        matches!(self.pre_value(), Some(PreValue::Bool(false)))
    }

    /// Same value with its refinement set cleared.
    pub fn bare(&self) -> Value {
        match self {
            Value::Refined(p, _) => Value::Refined(p.clone(), RefSet::new()),
            a => a.clone(),
        }
    }

    /// True when the value needs no further reduction in expression position.
    pub fn is_reduced(&self) -> bool {
        !matches!(self.pre_value(), Some(PreValue::Opaque) | Some(PreValue::Rec(..)) | Some(PreValue::RecRef(_)))
    }
}

impl Expr {
    pub fn val(v: Value) -> Expr {
        Expr::Val(v)
    }
    pub fn var(x: &str) -> Expr {
        Expr::Var(name(x))
    }
    pub fn int(n: i64) -> Expr {
        Expr::Val(Value::int(n))
    }
    pub fn app(f: Expr, a: Expr, l: Label) -> Expr {
        Expr::App(Box::new(f), Box::new(a), l)
    }
    pub fn prim(o: Op, args: Vec<Expr>, l: Label) -> Expr {
        Expr::Prim(o, args, l)
    }
    pub fn if_(c: Expr, t: Expr, e: Expr) -> Expr {
        Expr::If(Box::new(c), Box::new(t), Box::new(e))
    }
    pub fn mon(c: Expr, ls: MonLabels, e: Expr) -> Expr {
        Expr::Mon(Box::new(c), ls, Box::new(e))
    }

    pub fn is_value(&self) -> bool {
        matches!(self, Expr::Val(v) if v.is_reduced())
    }

    pub fn as_value(&self) -> Option<&Value> {
        match self {
            Expr::Val(v) => Some(v),
            _ => None,
        }
    }
}

// ---------------------------------------------------------------------------
// Substitution

/// Replaces free occurrences of `x` in `e` by `v`.
///
/// Substituted values are closed, so no renaming is needed to avoid capture.
pub fn subst(v: &Value, x: &str, e: &Expr) -> Expr {
    match e {
        Expr::Var(y) if &**y == x => Expr::Val(v.clone()),
        Expr::Var(_) | Expr::Ref(..) | Expr::Blame(..) => e.clone(),
        Expr::Val(w) => Expr::Val(subst_value(v, x, w)),
        Expr::App(f, a, l) => Expr::App(Box::new(subst(v, x, f)), Box::new(subst(v, x, a)), l.clone()),
        Expr::Prim(o, args, l) => Expr::Prim(*o, args.iter().map(|a| subst(v, x, a)).collect(), l.clone()),
        Expr::If(c, t, f) => Expr::if_(subst(v, x, c), subst(v, x, t), subst(v, x, f)),
        Expr::DepCon(c, y, d) => {
            let d2 = if &**y == x { (**d).clone() } else { subst(v, x, d) };
            Expr::DepCon(Box::new(subst(v, x, c)), y.clone(), Box::new(d2))
        }
        Expr::Mon(c, ls, b) => Expr::mon(subst(v, x, c), ls.clone(), subst(v, x, b)),
        Expr::Assume(a, c) => Expr::Assume(subst_value(v, x, a), subst_value(v, x, c)),
        Expr::Rt(m, b) => Expr::Rt(m.clone(), Box::new(subst(v, x, b))),
        Expr::Blur(m, b) => Expr::Blur(m.clone(), Box::new(subst(v, x, b))),
    }
}

pub fn subst_value(v: &Value, x: &str, w: &Value) -> Value {
    match w {
        Value::Addr(_) => w.clone(),
        Value::Refined(p, set) => {
            let p2 = match &**p {
                PreValue::Lam(y, b) if &**y != x => PreValue::Lam(y.clone(), Box::new(subst(v, x, b))),
                PreValue::Cons(a, b) => PreValue::Cons(subst_value(v, x, a), subst_value(v, x, b)),
                PreValue::DepCon(c, y, d) => {
                    let d2 = if &**y == x { (**d).clone() } else { subst(v, x, d) };
                    PreValue::DepCon(subst_value(v, x, c), y.clone(), Box::new(d2))
                }
                PreValue::Rec(r, members) => {
                    PreValue::Rec(r.clone(), members.iter().map(|m| subst_value(v, x, m)).collect())
                }
                other => other.clone(),
            };
            Value::Refined(Box::new(p2), set.iter().map(|c| subst_value(v, x, c)).collect())
        }
    }
}

/// Renames free occurrences of variable `from` to `to`.
pub fn rename_var(e: &Expr, from: &str, to: &str) -> Expr {
    subst_expr(e, from, &Expr::Var(name(to)))
}

/// Substitutes an arbitrary (variable-free or fresh-variable) expression for `x`.
fn subst_expr(e: &Expr, x: &str, r: &Expr) -> Expr {
    match e {
        Expr::Var(y) if &**y == x => r.clone(),
        Expr::Var(_) | Expr::Ref(..) | Expr::Blame(..) | Expr::Assume(..) => e.clone(),
        Expr::Val(w) => match w {
            Value::Refined(p, set) => match &**p {
                PreValue::Lam(y, b) if &**y != x => {
                    Expr::Val(Value::Refined(Box::new(PreValue::Lam(y.clone(), Box::new(subst_expr(b, x, r)))), set.clone()))
                }
                _ => e.clone(),
            },
            _ => e.clone(),
        },
        Expr::App(f, a, l) => Expr::App(Box::new(subst_expr(f, x, r)), Box::new(subst_expr(a, x, r)), l.clone()),
        Expr::Prim(o, args, l) => Expr::Prim(*o, args.iter().map(|a| subst_expr(a, x, r)).collect(), l.clone()),
        Expr::If(c, t, f) => Expr::if_(subst_expr(c, x, r), subst_expr(t, x, r), subst_expr(f, x, r)),
        Expr::DepCon(c, y, d) => {
            let d2 = if &**y == x { (**d).clone() } else { subst_expr(d, x, r) };
            Expr::DepCon(Box::new(subst_expr(c, x, r)), y.clone(), Box::new(d2))
        }
        Expr::Mon(c, ls, b) => Expr::mon(subst_expr(c, x, r), ls.clone(), subst_expr(b, x, r)),
        Expr::Rt(m, b) => Expr::Rt(m.clone(), Box::new(subst_expr(b, x, r))),
        Expr::Blur(m, b) => Expr::Blur(m.clone(), Box::new(subst_expr(b, x, r))),
    }
}

pub fn free_vars(e: &Expr) -> BTreeSet<Name> {
    let mut out = BTreeSet::new();
    fv_expr(e, &mut Vec::new(), &mut out);
    out
}

fn fv_expr(e: &Expr, bound: &mut Vec<Name>, out: &mut BTreeSet<Name>) {
    match e {
        Expr::Var(x) => {
            if !bound.contains(x) {
                out.insert(x.clone());
            }
        }
        Expr::Ref(..) | Expr::Blame(..) => {}
        Expr::Val(v) => fv_value(v, bound, out),
        Expr::App(f, a, _) => {
            fv_expr(f, bound, out);
            fv_expr(a, bound, out);
        }
        Expr::Prim(_, args, _) => args.iter().for_each(|a| fv_expr(a, bound, out)),
        Expr::If(c, t, f) => {
            fv_expr(c, bound, out);
            fv_expr(t, bound, out);
            fv_expr(f, bound, out);
        }
        Expr::DepCon(c, x, d) => {
            fv_expr(c, bound, out);
            bound.push(x.clone());
            fv_expr(d, bound, out);
            bound.pop();
        }
        Expr::Mon(c, _, b) => {
            fv_expr(c, bound, out);
            fv_expr(b, bound, out);
        }
        Expr::Assume(a, c) => {
            fv_value(a, bound, out);
            fv_value(c, bound, out);
        }
        Expr::Rt(_, b) | Expr::Blur(_, b) => fv_expr(b, bound, out),
    }
}

fn fv_value(v: &Value, bound: &mut Vec<Name>, out: &mut BTreeSet<Name>) {
    if let Value::Refined(p, set) = v {
        match &**p {
            PreValue::Lam(x, b) => {
                bound.push(x.clone());
                fv_expr(b, bound, out);
                bound.pop();
            }
            PreValue::Cons(a, b) => {
                fv_value(a, bound, out);
                fv_value(b, bound, out);
            }
            PreValue::DepCon(c, x, d) => {
                fv_value(c, bound, out);
                bound.push(x.clone());
                fv_expr(d, bound, out);
                bound.pop();
            }
            PreValue::Rec(_, ms) => ms.iter().for_each(|m| fv_value(m, bound, out)),
            _ => {}
        }
        set.iter().for_each(|c| fv_value(c, bound, out));
    }
}

/// Replaces every `!x` bound by the enclosing `μx` with `r`.
pub fn subst_recref(v: &Value, x: &str, r: &Value) -> Value {
    match v {
        Value::Addr(_) => v.clone(),
        Value::Refined(p, set) => match &**p {
            PreValue::RecRef(y) if &**y == x => r.clone(),
            PreValue::Cons(a, b) => Value::Refined(
                Box::new(PreValue::Cons(subst_recref(a, x, r), subst_recref(b, x, r))),
                set.clone(),
            ),
            PreValue::Rec(y, ms) if &**y != x => Value::Refined(
                Box::new(PreValue::Rec(y.clone(), ms.iter().map(|m| subst_recref(m, x, r)).collect())),
                set.clone(),
            ),
            _ => v.clone(),
        },
    }
}

/// Visits every address occurring in a value, including inside lambda bodies.
pub fn value_addrs(v: &Value, f: &mut dyn FnMut(Addr)) {
    match v {
        Value::Addr(a) => f(*a),
        Value::Refined(p, set) => {
            match &**p {
                PreValue::Lam(_, b) => expr_addrs(b, f),
                PreValue::Cons(a, b) => {
                    value_addrs(a, f);
                    value_addrs(b, f);
                }
                PreValue::DepCon(c, _, d) => {
                    value_addrs(c, f);
                    expr_addrs(d, f);
                }
                PreValue::Rec(_, ms) => ms.iter().for_each(|m| value_addrs(m, f)),
                _ => {}
            }
            set.iter().for_each(|c| value_addrs(c, f));
        }
    }
}

/// Visits addresses of an expression, not descending into summarization marks.
pub fn expr_addrs(e: &Expr, f: &mut dyn FnMut(Addr)) {
    match e {
        Expr::Val(v) => value_addrs(v, f),
        Expr::Var(_) | Expr::Ref(..) | Expr::Blame(..) => {}
        Expr::App(a, b, _) => {
            expr_addrs(a, f);
            expr_addrs(b, f);
        }
        Expr::Prim(_, args, _) => args.iter().for_each(|a| expr_addrs(a, f)),
        Expr::If(c, t, e2) => {
            expr_addrs(c, f);
            expr_addrs(t, f);
            expr_addrs(e2, f);
        }
        Expr::DepCon(c, _, d) => {
            expr_addrs(c, f);
            expr_addrs(d, f);
        }
        Expr::Mon(c, _, b) => {
            expr_addrs(c, f);
            expr_addrs(b, f);
        }
        Expr::Assume(a, c) => {
            value_addrs(a, f);
            value_addrs(c, f);
        }
        Expr::Rt(_, b) | Expr::Blur(_, b) => expr_addrs(b, f),
    }
}

/// Largest address mentioned anywhere in `e`, marks included.
pub fn max_addr_in(e: &Expr) -> Option<Addr> {
    let mut m: Option<Addr> = None;
    max_addr_rec(e, &mut m);
    m
}

fn max_addr_rec(e: &Expr, m: &mut Option<Addr>) {
    let mut bump = |a: Addr| *m = Some(m.map_or(a, |x| x.max(a)));
    match e {
        Expr::Rt(mark, b) => {
            value_addrs(&mark.f, &mut bump);
            value_addrs(&mark.arg, &mut bump);
            if let Some(k) = mark.heap.max_addr() {
                bump(k);
            }
            max_addr_rec(b, m);
        }
        Expr::Blur(mark, b) => {
            for (o, n) in &mark.ren {
                bump(*o);
                bump(*n);
            }
            value_addrs(&mark.prev, &mut bump);
            for (k, v) in &mark.heap {
                bump(*k);
                value_addrs(v, &mut bump);
            }
            max_addr_rec(b, m);
        }
        Expr::App(a, b, _) => {
            max_addr_rec(a, m);
            max_addr_rec(b, m);
        }
        Expr::Prim(_, args, _) => args.iter().for_each(|a| max_addr_rec(a, m)),
        Expr::If(c, t, f) => {
            max_addr_rec(c, m);
            max_addr_rec(t, m);
            max_addr_rec(f, m);
        }
        Expr::DepCon(c, _, d) => {
            max_addr_rec(c, m);
            max_addr_rec(d, m);
        }
        Expr::Mon(c, _, b) => {
            max_addr_rec(c, m);
            max_addr_rec(b, m);
        }
        other => expr_addrs(other, &mut bump),
    }
}

/// Whether the expression contains summarizer or monitoring-only forms.
pub fn has_internal_forms(e: &Expr) -> bool {
    match e {
        Expr::Rt(..) | Expr::Blur(..) | Expr::Assume(..) => true,
        Expr::Val(v) => value_has_internal(v),
        Expr::Var(_) | Expr::Ref(..) | Expr::Blame(..) => false,
        Expr::App(a, b, _) => has_internal_forms(a) || has_internal_forms(b),
        Expr::Prim(_, args, _) => args.iter().any(has_internal_forms),
        Expr::If(c, t, f) => has_internal_forms(c) || has_internal_forms(t) || has_internal_forms(f),
        Expr::DepCon(c, _, d) => has_internal_forms(c) || has_internal_forms(d),
        Expr::Mon(c, _, b) => has_internal_forms(c) || has_internal_forms(b),
    }
}

fn value_has_internal(v: &Value) -> bool {
    match v {
        Value::Addr(_) => false,
        Value::Refined(p, set) => {
            let inner = match &**p {
                PreValue::Rec(..) | PreValue::RecRef(_) => true,
                PreValue::Lam(_, b) => has_internal_forms(b),
                PreValue::Cons(a, b) => value_has_internal(a) || value_has_internal(b),
                PreValue::DepCon(c, _, d) => value_has_internal(c) || has_internal_forms(d),
                _ => false,
            };
            inner || set.iter().any(value_has_internal)
        }
    }
}
