//! Checking that a concrete state is approximated by a symbolic one, and a
//! differential soundness harness built on it.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::concrete::{self, Outcome};
use crate::eval::{verify, EvalOptions, Verdict};
use crate::gen::{generate, shrink, GenProgram};
use crate::print::{show_expr, show_program};
use crate::proof::Oracle;
use crate::heap::{map_addrs_value, Heap, State};
use crate::proof::{check, Proof};
use crate::syntax::*;

/// Witness: what each abstract address stands for.
pub type Witness = BTreeMap<Addr, Value>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Approx {
    Yes(Witness),
    No,
    /// The search hit its depth cap.
    Unknown,
}

const DEPTH_CAP: usize = 64;
const MAX_SOLUTIONS: usize = 16;
const CONTRACT_FUEL: usize = 2_000;
/// Integers tried for an address that only occurs inside refinements.
const INT_RANGE: i64 = 16;

#[derive(Clone, Debug)]
struct Sol {
    f: Witness,
    /// Concrete values that must satisfy these (abstract) contracts.
    pending: Vec<(Value, Value)>,
}

struct Cap;

type Sols = Result<Vec<Sol>, Cap>;

struct Search<'a> {
    /// Program used to run contracts; it must define every module.
    conc: &'a Program,
    abs: &'a Program,
    h: &'a Heap,
}

/// Searches for a witness under which `sc` is approximated by `sa`.
/// `conc` and `abs` are the concrete program and its abstraction.
pub fn approximates(sc: &State, sa: &State, conc: &Program, abs: &Program) -> Approx {
    match (sc, sa) {
        (_, State::Blamed(p, _)) if blame_is_wild(abs, p) => Approx::Yes(Witness::new()),
        (State::Blamed(p, s), State::Blamed(q, t)) => {
            if p == q && s == t {
                Approx::Yes(Witness::new())
            } else {
                Approx::No
            }
        }
        (State::Running(ec, hc), State::Running(ea, ha)) => {
            assert!(hc.is_empty(), "concrete states carry no heap");
            let s = Search { conc, abs, h: ha };
            let start = Sol { f: Witness::new(), pending: Vec::new() };
            match s.expr(ec, ea, start, 0).and_then(|sols| s.finish(sols)) {
                Ok(Some(f)) => Approx::Yes(f),
                Ok(None) => Approx::No,
                Err(Cap) => Approx::Unknown,
            }
        }
        _ => Approx::No,
    }
}

/// Blame of an unknown party approximates anything.
fn blame_is_wild(abs: &Program, p: &Label) -> bool {
    match p {
        Label::Top | Label::Havoc => true,
        Label::Mod(f) => abs.module(f).is_some_and(|m| m.is_opaque()),
        Label::Lang => false,
    }
}

fn join(out: &mut Vec<Sol>, more: Vec<Sol>) {
    for s in more {
        if out.len() < MAX_SOLUTIONS {
            out.push(s);
        }
    }
}

impl Search<'_> {
    fn expr(&self, ec: &Expr, ea: &Expr, sol: Sol, d: usize) -> Sols {
        if d > DEPTH_CAP {
            return Err(Cap);
        }
        let d = d + 1;
        match (ec, ea) {
            (_, Expr::Blame(p, _)) if blame_is_wild(self.abs, p) => Ok(vec![sol]),
            (Expr::Val(vc), Expr::Val(va)) => self.value(vc, va, sol, d),
            // An unknown value in expression position stands for any expression.
            (_, Expr::Val(va)) if matches!(va.pre_value(), Some(PreValue::Opaque)) => Ok(vec![sol]),
            (Expr::Var(x), Expr::Var(y)) => Ok(if x == y { vec![sol] } else { vec![] }),
            (Expr::Ref(f, l), Expr::Ref(g, m)) => Ok(if f == g && l == m { vec![sol] } else { vec![] }),
            (Expr::Blame(p, s), Expr::Blame(q, t)) => Ok(if p == q && s == t { vec![sol] } else { vec![] }),
            (Expr::App(f, a, l), Expr::App(g, b, m)) if l == m => self.exprs(&[f, a], &[g, b], sol, d),
            (Expr::Prim(o, xs, l), Expr::Prim(p, ys, m)) if o == p && l == m && xs.len() == ys.len() => {
                let xs: Vec<&Expr> = xs.iter().collect();
                let ys: Vec<&Expr> = ys.iter().collect();
                self.exprs(&xs, &ys, sol, d)
            }
            (Expr::If(a, b, c), Expr::If(x, y, z)) => self.exprs(&[a, b, c], &[x, y, z], sol, d),
            (Expr::DepCon(c, x, e), Expr::DepCon(c2, y, e2)) if x == y => self.exprs(&[c, e], &[c2, e2], sol, d),
            (Expr::Mon(c, l, e), Expr::Mon(c2, m, e2)) if l == m => self.exprs(&[c, e], &[c2, e2], sol, d),
            (Expr::Assume(v, c), Expr::Assume(w, k)) => {
                let mut out = Vec::new();
                for s in self.value(v, w, sol, d)? {
                    join(&mut out, self.value(c, k, s, d)?);
                }
                Ok(out)
            }
            _ => Ok(vec![]),
        }
    }

    fn exprs(&self, xs: &[&Expr], ys: &[&Expr], sol: Sol, d: usize) -> Sols {
        let mut sols = vec![sol];
        for (x, y) in xs.iter().zip(ys) {
            let mut next = Vec::new();
            for s in sols {
                join(&mut next, self.expr(x, y, s, d)?);
            }
            if next.is_empty() {
                return Ok(next);
            }
            sols = next;
        }
        Ok(sols)
    }

    fn value(&self, vc: &Value, va: &Value, mut sol: Sol, d: usize) -> Sols {
        if d > DEPTH_CAP {
            return Err(Cap);
        }
        let d = d + 1;
        let (p, set) = match va {
            Value::Addr(a) => {
                if let Some(bound) = sol.f.get(a) {
                    return Ok(if bound == vc { vec![sol] } else { vec![] });
                }
                sol.f.insert(*a, vc.clone());
                return match self.h.get(*a) {
                    Some(entry) => self.value(vc, &entry.clone(), sol, d),
                    None => Ok(vec![sol]),
                };
            }
            Value::Refined(p, set) => (p, set),
        };
        for c in set {
            sol.pending.push((vc.clone(), c.clone()));
        }
        let cp = vc.pre_value();
        match (&**p, cp) {
            (PreValue::Opaque, _) => Ok(vec![sol]),
            (PreValue::Rec(x, members), _) => {
                let unfold = Value::pre(PreValue::Rec(x.clone(), members.clone()));
                let mut out = Vec::new();
                for m in members {
                    let m = subst_recref(m, x, &unfold);
                    join(&mut out, self.value(vc, &m, sol.clone(), d)?);
                }
                Ok(out)
            }
            (PreValue::Int(a), Some(PreValue::Int(b))) if a == b => Ok(vec![sol]),
            (PreValue::Bool(a), Some(PreValue::Bool(b))) if a == b => Ok(vec![sol]),
            (PreValue::Empty, Some(PreValue::Empty)) => Ok(vec![sol]),
            (PreValue::NegPred(a), Some(PreValue::NegPred(b))) if a == b => Ok(vec![sol]),
            (PreValue::Cons(a, b), Some(PreValue::Cons(x, y))) => {
                let mut out = Vec::new();
                for s in self.value(x, a, sol, d)? {
                    join(&mut out, self.value(y, b, s, d)?);
                }
                Ok(out)
            }
            (PreValue::Lam(x, b), Some(PreValue::Lam(y, e))) if x == y => self.expr(e, b, sol, d),
            (PreValue::DepCon(c, x, r), Some(PreValue::DepCon(c2, y, r2))) if x == y => {
                let mut out = Vec::new();
                for s in self.value(c2, c, sol, d)? {
                    join(&mut out, self.expr(r2, r, s, d)?);
                }
                Ok(out)
            }
            _ => Ok(vec![]),
        }
    }

    /// Discharges pending refinement checks; the first solution that passes wins.
    fn finish(&self, sols: Vec<Sol>) -> Result<Option<Witness>, Cap> {
        for s in sols {
            if let Some(f) = self.discharge(s, 0)? {
                return Ok(Some(f));
            }
        }
        Ok(None)
    }

    fn discharge(&self, mut sol: Sol, d: usize) -> Result<Option<Witness>, Cap> {
        if d > DEPTH_CAP {
            return Err(Cap);
        }
        // Addresses that only occur in refinements are existential: guess them.
        let mut free = BTreeSet::new();
        for (_, c) in &sol.pending {
            value_addrs(c, &mut |a| {
                if !sol.f.contains_key(&a) {
                    free.insert(a);
                }
            });
        }
        let guess = free.into_iter().find(|a| self.is_int(*a));
        if let Some(a) = guess {
            for n in -INT_RANGE..=INT_RANGE {
                let v = Value::int(n);
                let start = Sol { f: sol.f.clone(), pending: sol.pending.clone() };
                for s in self.value(&v, &Value::Addr(a), start, d)? {
                    if let Some(f) = self.discharge(s, d + 1)? {
                        return Ok(Some(f));
                    }
                }
            }
            return Ok(None);
        }
        let pending = std::mem::take(&mut sol.pending);
        for (v, c) in &pending {
            if !self.satisfies(v, c, &sol.f) {
                return Ok(None);
            }
        }
        Ok(Some(sol.f))
    }

    fn is_int(&self, a: Addr) -> bool {
        let int_p = Value::pre(PreValue::Lam(name("x"), Box::new(Expr::prim(Op::IntP, vec![Expr::var("x")], Label::Lang))));
        check(self.h, &Value::Addr(a), &int_p) == Proof::Proved
    }

    fn satisfies(&self, v: &Value, c: &Value, f: &Witness) -> bool {
        let mut unbound = false;
        let c = map_addrs_value(c, &|a| match f.get(&a) {
            Some(w) => w.clone(),
            None => Value::opaque(),
        });
        value_addrs(&c, &mut |_| unbound = true);
        if unbound || !c.is_reduced() || contains_opaque(&c) {
            // Depends on an address with no concrete counterpart.
            return true;
        }
        let p = Program {
            modules: self.conc.modules.clone(),
            top: Expr::app(Expr::Val(c), Expr::Val(v.clone()), Label::Top),
        };
        match concrete::run_here(&p, CONTRACT_FUEL) {
            Outcome::Value(r) => !r.is_false(),
            Outcome::Timeout => true,
            Outcome::Blame(..) => false,
        }
    }
}

fn contains_opaque(v: &Value) -> bool {
    fn expr(e: &Expr) -> bool {
        match e {
            Expr::Val(v) => contains_opaque(v),
            Expr::Var(_) | Expr::Ref(..) | Expr::Blame(..) => false,
            Expr::App(a, b, _) | Expr::DepCon(a, _, b) | Expr::Mon(a, _, b) => expr(a) || expr(b),
            Expr::Prim(_, xs, _) => xs.iter().any(expr),
            Expr::If(a, b, c) => expr(a) || expr(b) || expr(c),
            Expr::Assume(v, c) => contains_opaque(v) || contains_opaque(c),
            Expr::Rt(..) | Expr::Blur(..) => true,
        }
    }
    match v.pre_value() {
        None => false,
        Some(PreValue::Opaque | PreValue::Rec(..) | PreValue::RecRef(_)) => true,
        Some(PreValue::Lam(_, b)) => expr(b),
        Some(PreValue::Cons(a, b)) => contains_opaque(a) || contains_opaque(b),
        Some(PreValue::DepCon(c, _, r)) => contains_opaque(c) || expr(r),
        Some(_) => false,
    }
}

// ---------------------------------------------------------------------------
// Differential soundness

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// Which property failed: `approximation` or `verified-blamed`.
    pub kind: String,
    pub program: String,
    pub abstraction: String,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SoundnessReport {
    pub seed: u64,
    pub programs: usize,
    pub abstractions: usize,
    /// Pairs where the concrete run finished and the symbolic run was exhaustive.
    pub checked: usize,
    /// Pairs skipped because a run ran out of fuel or budget.
    pub skipped: usize,
    pub violations: Vec<Violation>,
}

#[derive(Clone, Debug)]
pub struct SoundnessOptions {
    pub eval: EvalOptions,
    pub fuel: usize,
    /// Shrink counterexamples before reporting them.
    pub shrink: bool,
}

impl Default for SoundnessOptions {
    fn default() -> Self {
        SoundnessOptions { eval: EvalOptions { budget: 20_000, ..EvalOptions::default() }, fuel: 100_000, shrink: true }
    }
}

enum Checked {
    Ok { checked: usize, skipped: usize, abstractions: usize },
    Bad(Violation),
}

/// Runs `count` generated programs against their abstractions.
pub fn differential_soundness(seed: u64, count: usize, oracle: &dyn Oracle, opts: &SoundnessOptions) -> SoundnessReport {
    let results: Vec<(GenProgram, u64, Checked)> = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i);
            let gp = generate(&mut ChaCha8Rng::seed_from_u64(s));
            let c = check_program(&gp, s, oracle, opts);
            (gp, s, c)
        })
        .collect();
    let mut rep = SoundnessReport { seed, programs: count, ..SoundnessReport::default() };
    for (gp, s, c) in results {
        match c {
            Checked::Ok { checked, skipped, abstractions } => {
                rep.checked += checked;
                rep.skipped += skipped;
                rep.abstractions += abstractions;
            }
            Checked::Bad(v) => {
                rep.abstractions += 1;
                let v = if opts.shrink {
                    let fails = |q: &GenProgram| matches!(check_program(q, s, oracle, opts), Checked::Bad(_));
                    let small = shrink(&gp, &fails);
                    match check_program(&small, s, oracle, opts) {
                        Checked::Bad(w) => w,
                        Checked::Ok { .. } => v,
                    }
                } else {
                    v
                };
                rep.violations.push(v);
            }
        }
    }
    rep
}

/// Abstractions of a concrete program: some integer literals become
/// unknown, and separately one module becomes opaque.
pub fn abstractions(p: &Program, seed: u64) -> Vec<Program> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    let mut out = Vec::new();
    let mut lit = p.clone();
    for m in lit.modules.iter_mut() {
        if let Some(b) = &m.body {
            m.body = Some(blur_literals(b, &mut rng));
        }
    }
    lit.top = blur_literals(&lit.top, &mut rng);
    out.push(lit);
    if !p.modules.is_empty() {
        let mut opq = p.clone();
        let i = rng.gen_range(0..p.modules.len());
        opq.modules[i].body = None;
        out.push(opq);
    }
    out
}

fn blur_literals(e: &Expr, rng: &mut ChaCha8Rng) -> Expr {
    match e {
        Expr::Val(v) if v.as_int().is_some() => {
            if rng.gen_bool(1.0 / 3.0) {
                Expr::Val(Value::opaque())
            } else {
                e.clone()
            }
        }
        Expr::Val(Value::Refined(p, set)) => match &**p {
            PreValue::Lam(x, b) => {
                Expr::Val(Value::Refined(Box::new(PreValue::Lam(x.clone(), Box::new(blur_literals(b, rng)))), set.clone()))
            }
            _ => e.clone(),
        },
        Expr::Val(_) | Expr::Var(_) | Expr::Ref(..) | Expr::Blame(..) | Expr::Assume(..) => e.clone(),
        Expr::App(a, b, l) => Expr::app(blur_literals(a, rng), blur_literals(b, rng), l.clone()),
        Expr::Prim(o, xs, l) => Expr::prim(*o, xs.iter().map(|x| blur_literals(x, rng)).collect(), l.clone()),
        Expr::If(a, b, c) => Expr::if_(blur_literals(a, rng), blur_literals(b, rng), blur_literals(c, rng)),
        Expr::DepCon(a, x, b) => Expr::DepCon(Box::new(blur_literals(a, rng)), x.clone(), Box::new(blur_literals(b, rng))),
        Expr::Mon(a, ls, b) => Expr::mon(blur_literals(a, rng), ls.clone(), blur_literals(b, rng)),
        Expr::Rt(..) | Expr::Blur(..) => e.clone(),
    }
}

fn check_program(gp: &GenProgram, seed: u64, oracle: &dyn Oracle, opts: &SoundnessOptions) -> Checked {
    let Ok(conc) = gp.parse() else { return Checked::Ok { checked: 0, skipped: 0, abstractions: 0 } };
    let outcome = concrete::run(&conc, opts.fuel);
    let sc = match &outcome {
        Outcome::Value(v) => State::Running(Expr::Val(v.clone()), Heap::new()),
        Outcome::Blame(p, s) => State::Blamed(p.clone(), s.clone()),
        Outcome::Timeout => {
            return Checked::Ok { checked: 0, skipped: 1, abstractions: 0 };
        }
    };
    let abs = abstractions(&conc, seed);
    let (mut checked, mut skipped) = (0, 0);
    let n = abs.len();
    for a in abs {
        let (vs, r) = verify(&a, oracle, &opts.eval);
        let bad = |kind: &str, detail: String| {
            Checked::Bad(Violation {
                kind: kind.into(),
                program: gp.source(),
                abstraction: show_program(&a),
                detail,
            })
        };
        // Verified modules are never blamed concretely.
        if let Outcome::Blame(Label::Mod(f), src) = &outcome {
            if vs.iter().any(|m| *m.module == **f && m.verdict == Verdict::Verified) {
                return bad("verified-blamed", format!("{f} verified but concretely blamed by {src}"));
            }
        }
        if r.exhausted {
            skipped += 1;
            continue;
        }
        let mut unknown = false;
        let found = r.finals.iter().any(|sa| match approximates(&sc, sa, &conc, &a) {
            Approx::Yes(_) => true,
            Approx::Unknown => {
                unknown = true;
                false
            }
            Approx::No => false,
        });
        if !found {
            let what = match &sc {
                State::Running(e, _) => show_expr(e),
                State::Blamed(p, s) => format!("(blame {p} {s})"),
            };
            let why = if unknown { "search cap reached" } else { "no symbolic terminal approximates it" };
            return bad("approximation", format!("concrete result {what}: {why}; {} symbolic terminals", r.finals.len()));
        }
        checked += 1;
    }
    Checked::Ok { checked, skipped, abstractions: n }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty() -> Program {
        Program { modules: vec![], top: Expr::int(0) }
    }

    fn run(e: Expr) -> State {
        State::Running(e, Heap::new())
    }

    fn addr(a: Addr) -> Expr {
        Expr::Val(Value::Addr(a))
    }

    fn if_false_1_2() -> Expr {
        Expr::if_(Expr::Val(Value::bool(false)), Expr::int(1), Expr::int(2))
    }

    #[test]
    fn unknown_address_takes_the_concrete_value() {
        let sa = State::Running(addr(0), Heap::from_entries([(0, Value::opaque())]));
        let p = empty();
        assert_eq!(approximates(&run(Expr::int(1)), &sa, &p, &p), Approx::Yes(Witness::from([(0, Value::int(1))])));
    }

    #[test]
    fn one_address_cannot_stand_for_different_values() {
        let p = empty();
        let sa = State::Running(Expr::if_(addr(0), addr(0), addr(0)), Heap::from_entries([(0, Value::opaque())]));
        assert_eq!(approximates(&run(if_false_1_2()), &sa, &p, &p), Approx::No);
        let h = Heap::from_entries([(0, Value::opaque()), (1, Value::opaque()), (2, Value::opaque())]);
        let sa = State::Running(Expr::if_(addr(0), addr(1), addr(2)), h);
        let f = Witness::from([(0, Value::bool(false)), (1, Value::int(1)), (2, Value::int(2))]);
        assert_eq!(approximates(&run(if_false_1_2()), &sa, &p, &p), Approx::Yes(f));
    }

    #[test]
    fn refinements_are_checked() {
        let p = empty();
        let pos = crate::parse::parse_program("(top pos?)").unwrap().top;
        let Expr::Val(pos) = pos else { panic!() };
        let sa = State::Running(addr(0), Heap::from_entries([(0, Value::opaque_with([pos].into()))]));
        assert!(matches!(approximates(&run(Expr::int(3)), &sa, &p, &p), Approx::Yes(_)));
        assert_eq!(approximates(&run(Expr::int(0)), &sa, &p, &p), Approx::No);
    }

    #[test]
    fn recursive_values_unfold() {
        let p = empty();
        let x = name("x");
        let body = Value::cons(Value::opaque(), Value::pre(PreValue::RecRef(x.clone())));
        let list = Value::pre(PreValue::Rec(x, [Value::empty(), body].into()));
        let sa = State::Running(Expr::Val(list), Heap::new());
        let l = Value::cons(Value::int(1), Value::cons(Value::int(2), Value::empty()));
        assert!(matches!(approximates(&run(Expr::Val(l)), &sa, &p, &p), Approx::Yes(_)));
        assert_eq!(approximates(&run(Expr::int(1)), &sa, &p, &p), Approx::No);
    }

    #[test]
    fn blame_of_unknown_parties_approximates_anything() {
        let p = empty();
        let sa = State::Blamed(Label::Top, Label::Lang);
        assert!(matches!(approximates(&run(Expr::int(1)), &sa, &p, &p), Approx::Yes(_)));
        let sa = State::Blamed(Label::Lang, Label::Lang);
        assert_eq!(approximates(&run(Expr::int(1)), &sa, &p, &p), Approx::No);
    }
}
