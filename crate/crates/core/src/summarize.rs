//! Summarization of recursive calls: return marks, memo tables, and the
//! widening operator that makes repeated calls converge.

use std::collections::{BTreeMap, BTreeSet};

use rustc_hash::{FxHashMap as HashMap, FxHashSet as HashSet};

use serde::Serialize;

use crate::eval::{decompose, plug, EvalOptions, Frame, Machine, Rule};
use crate::heap::{canonicalize_with_map, heapify, map_addrs_value, Heap, Renamer, State};
use crate::print::show_value;
use crate::proof::{self, Oracle, Proof};
use crate::shape::{atom_contract, facts};
use crate::syntax::*;

/// Which heap entry a blur step widens against the pre-call snapshot.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum BlurReading {
    /// The entry at the caller's address, i.e. the one the snapshot was merged into.
    #[default]
    Pairwise,
    /// The entry at the callee's original address.
    Literal,
}

/// A call suspended because an enclosing call subsumes it.
#[derive(Clone, Debug)]
pub struct Waiting {
    pub outer: Vec<Frame>,
    pub mark: RtMark,
    pub inner: Vec<Frame>,
    pub heap: Heap,
    /// Instantiation of the enclosing call's addresses.
    pub f: BTreeMap<Addr, Value>,
}

/// Waiting contexts and memoized results, both keyed by canonical call.
#[derive(Clone, Debug, Default)]
pub struct Tables {
    pub xi: HashMap<State, Vec<Waiting>>,
    pub m: HashMap<State, BTreeSet<(Value, Heap)>>,
}

impl Tables {
    /// Memoized results for every call whose key applies `f` (ignoring refinements).
    pub fn results_for(&self, f: &Value) -> Vec<(&State, &BTreeSet<(Value, Heap)>)> {
        let want = f.bare();
        self.m
            .iter()
            .filter(|(k, _)| match k {
                State::Running(Expr::App(g, _, _), h) => match &**g {
                    Expr::Val(v) => h.deref(v).bare() == want,
                    _ => false,
                },
                _ => false,
            })
            .collect()
    }
}

/// Canonical key of a call and the renaming from state addresses to key addresses.
pub fn key_of(mark: &RtMark) -> (State, HashMap<Addr, Addr>) {
    let e = Expr::app(Expr::Val(mark.f.clone()), Expr::Val(mark.arg.clone()), Label::Top);
    canonicalize_with_map(&State::Running(e, mark.heap.clone()))
}

fn lam_of(h: &Heap, f: &Value) -> Option<Value> {
    let d = h.deref(f);
    matches!(d.pre_value(), Some(PreValue::Lam(..))).then(|| d.bare())
}

fn roots(vs: &[&Value]) -> Vec<Addr> {
    let mut out = Vec::new();
    for v in vs {
        value_addrs(v, &mut |a| out.push(a));
    }
    out
}

fn beta(lam: &Value, arg: &Value) -> Expr {
    match lam.pre_value() {
        Some(PreValue::Lam(x, b)) => subst(arg, x, b),
        _ => unreachable!("beta on a non-lambda"),
    }
}

/// Successors of `s` under summarizing evaluation.
pub fn step(m: &Machine, t: &mut Tables, s: &State, opts: &EvalOptions) -> Vec<(Rule, State)> {
    let State::Running(e, h0) = s else { return Vec::new() };
    let Some((frames, redex)) = decompose(e) else { return Vec::new() };
    let mut h = h0.clone();
    if let Some(a) = max_addr_in(e) {
        h.reserve(a + 1);
    }
    match &redex {
        Expr::App(f, a, _) => {
            let (Some(fv), Some(av)) = (f.as_value(), a.as_value()) else { return m.step(s) };
            match lam_of(&h, fv) {
                Some(lam) => call(m.oracle, t, frames, lam, av.clone(), h),
                None => m.step(s),
            }
        }
        Expr::Rt(mark, body) => match body.as_value() {
            Some(v) => ret(t, &frames, mark, v, &h),
            None => m.step(s),
        },
        Expr::Blur(bm, body) => match body.as_value() {
            Some(v) => vec![("blur", State::Running(plug(&frames, Expr::Val(blur(&mut h, bm, v, opts.blur))), h))],
            None => m.step(s),
        },
        _ => m.step(s),
    }
}

fn call(or: &dyn Oracle, t: &mut Tables, frames: Vec<Frame>, lam: Value, arg: Value, h: Heap) -> Vec<(Rule, State)> {
    let enclosing = frames.iter().rposition(|fr| matches!(fr, Frame::Rt(mk) if mk.f == lam));
    let Some(i) = enclosing else {
        let mark = RtMark { heap: h.restrict(&roots(&[&lam, &arg])), f: lam.clone(), arg: arg.clone() };
        let e = Expr::Rt(Box::new(mark), Box::new(beta(&lam, &arg)));
        return vec![("summarize-call", State::Running(plug(&frames, e), h))];
    };
    let Frame::Rt(mark) = &frames[i] else { unreachable!() };
    if let Some(f) = subsumes(or, &h, &arg, &mark.heap, &mark.arg) {
        let w = Waiting {
            outer: frames[..i].to_vec(),
            mark: (**mark).clone(),
            inner: frames[i + 1..].to_vec(),
            heap: h,
            f,
        };
        let (key, k) = key_of(&w.mark);
        let known: Vec<(Value, Heap)> = t.m.get(&key).map(|r| r.iter().cloned().collect()).unwrap_or_default();
        let out = known.iter().map(|(va, sa)| ("summarize-reuse", resume(&w, &k, va, sa))).collect();
        t.xi.entry(key).or_default().push(w);
        return out;
    }
    if log::log_enabled!(log::Level::Debug) {
        let show = |h: &Heap| h.iter().map(|(a, v)| format!("L{a}={}", show_value(v))).collect::<Vec<_>>().join(" ");
        log::debug!("not subsumed: {} [{}] by {} [{}]", show_value(&arg), show(&h), show_value(&mark.arg), show(&mark.heap));
    }
    let mut h = h;
    let widened = widen_tight_with(or, &mark.heap, &mark.arg, &h, &arg);
    let v1 = heapify(&mut h, &widened);
    let mark = RtMark { heap: h.restrict(&roots(&[&lam, &v1])), f: lam.clone(), arg: v1.clone() };
    let e = Expr::Rt(Box::new(mark), Box::new(beta(&lam, &v1)));
    vec![("summarize-widen", State::Running(plug(&frames, e), h))]
}

fn ret(t: &mut Tables, frames: &[Frame], mark: &RtMark, v: &Value, h: &Heap) -> Vec<(Rule, State)> {
    let (key, k) = key_of(mark);
    let (vk, hk) = record(&k, v, h);
    let mut out = vec![("summarize-return", State::Running(plug(frames, Expr::Val(v.clone())), h.clone()))];
    let known = t.m.entry(key.clone()).or_default();
    let (vk, hk) = generalize(known, &vk, &hk).unwrap_or((vk, hk));
    if known.insert((vk.clone(), hk.clone())) {
        if let Some(ws) = t.xi.get(&key) {
            for w in ws {
                out.push(("summarize-resume", resume(w, &k, &vk, &hk)));
            }
        }
    }
    out
}

/// A result of the same shape as an earlier one is widened against it, so
/// that results fed back into waiting calls cannot grow forever. The first
/// result of each shape is kept exact.
fn generalize(known: &BTreeSet<(Value, Heap)>, v: &Value, h: &Heap) -> Option<(Value, Heap)> {
    let d = detach(h, v, 0);
    let olds: Vec<Value> = known.iter().map(|(o, oh)| detach(oh, o, 0)).filter(|o| same_shape(o, &d)).collect();
    if olds.is_empty() || olds.contains(&d) && address_free(v) {
        return None;
    }
    let empty = Heap::new();
    let base = olds.iter().rev().find(|o| known.contains(&((*o).clone(), Heap::new()))).unwrap_or(&olds[0]);
    let w = widen(&empty, base, &d);
    let covered = known.iter().find(|(o, oh)| oh.is_empty() && address_free(o) && covers(&proof::Basic, &empty, o, &empty, &w));
    Some(match covered {
        Some(c) => c.clone(),
        None => (w, empty),
    })
}

/// The returned value and heap, renamed into the call key's address space.
fn record(k: &HashMap<Addr, Addr>, v: &Value, h: &Heap) -> (Value, Heap) {
    let mut r = Renamer::with_map(k.clone());
    let mut olds: Vec<(Addr, Addr)> = k.iter().map(|(s, key)| (*key, *s)).collect();
    olds.sort();
    for (_, s) in olds {
        if h.contains(s) {
            r.visit_root(s, h);
        }
    }
    r.visit_value(v, 0, h);
    (r.rename_value(v), r.visited_heap(h))
}

/// Continues a waiting call with a memoized result.
fn resume(w: &Waiting, k: &HashMap<Addr, Addr>, va: &Value, sa: &Heap) -> State {
    let kinv: HashMap<Addr, Addr> = k.iter().map(|(s, key)| (*key, *s)).collect();
    let mut h = w.heap.clone();
    let hole = plug(&w.outer, Expr::Rt(Box::new(w.mark.clone()), Box::new(plug(&w.inner, Expr::int(0)))));
    if let Some(a) = max_addr_in(&hole) {
        h.reserve(a + 1);
    }
    for v in w.f.values() {
        value_addrs(v, &mut |a| h.reserve(a + 1));
    }

    // Key addresses reachable from the result or describing the call's own addresses.
    let mut stack: Vec<Addr> = Vec::new();
    let mut ks: Vec<Addr> = kinv.keys().copied().filter(|a| sa.contains(*a)).collect();
    ks.sort_unstable_by(|a, b| b.cmp(a));
    stack.extend(ks);
    let mut va_roots = Vec::new();
    value_addrs(va, &mut |a| va_roots.push(a));
    stack.extend(va_roots.into_iter().rev());
    let mut order = Vec::new();
    let mut seen = HashSet::default();
    while let Some(a) = stack.pop() {
        if !seen.insert(a) {
            continue;
        }
        order.push(a);
        if let Some(e) = sa.get(a) {
            let mut next = Vec::new();
            value_addrs(e, &mut |b| next.push(b));
            stack.extend(next.into_iter().rev());
        }
    }

    let mut to: HashMap<Addr, Value> = HashMap::default();
    let mut fresh = Vec::new();
    let mut kept = Vec::new();
    for a in order {
        match kinv.get(&a) {
            Some(lo) => match w.f.get(lo) {
                Some(v) => {
                    to.insert(a, v.clone());
                }
                None => {
                    to.insert(a, Value::Addr(*lo));
                    kept.push((a, *lo));
                }
            },
            None => {
                let n = h.alloc(Value::opaque());
                to.insert(a, Value::Addr(n));
                fresh.push((a, n));
            }
        }
    }
    let imp = |v: &Value| map_addrs_value(v, &|a| to.get(&a).cloned().unwrap_or(Value::Addr(a)));
    for (a, n) in fresh {
        if let Some(e) = sa.get(a) {
            h.set(n, imp(e));
        }
    }
    for (a, lo) in kept {
        if !h.contains(lo) {
            if let Some(e) = sa.get(a) {
                h.set(lo, imp(e));
            }
        }
    }
    let mut ren = Vec::new();
    let mut bheap = BTreeMap::new();
    for (lo, v) in &w.f {
        let (Value::Addr(ln), Some(key)) = (v, k.get(lo)) else { continue };
        let Some(e) = sa.get(*key) else { continue };
        let ea = imp(e);
        ren.push((*lo, *ln));
        bheap.insert(*lo, ea.clone());
        let cur = h.entry(*ln);
        h.set(*ln, merge_entry(&cur, &ea));
    }
    let va2 = imp(va);
    let bm = BlurMark { ren, heap: bheap, prev: va2.clone() };
    let body = Expr::Blur(Box::new(bm), Box::new(plug(&w.inner, Expr::Val(va2))));
    State::Running(plug(&w.outer, Expr::Rt(Box::new(w.mark.clone()), Box::new(body))), h)
}

/// Adds what a summary knows about an address to what the caller knows.
fn merge_entry(cur: &Value, add: &Value) -> Value {
    let (Value::Refined(pc, sc), Value::Refined(pa, sa)) = (cur, add) else { return cur.clone() };
    let p = if matches!(**pc, PreValue::Opaque) { pa.clone() } else { pc.clone() };
    Value::Refined(p, sc.union(sa).cloned().collect())
}

fn blur(h: &mut Heap, bm: &BlurMark, v: &Value, reading: BlurReading) -> Value {
    let out = widen_tight(h, &bm.prev, h, v);
    for (lo, ln) in &bm.ren {
        let Some(prev) = bm.heap.get(lo) else { continue };
        let cur = match reading {
            BlurReading::Pairwise => h.entry(*ln),
            BlurReading::Literal => h.entry(*lo),
        };
        let w = match widen_tight(h, prev, h, &cur) {
            Value::Addr(a) => h.entry(a),
            w => w,
        };
        h.set(*ln, w);
    }
    out
}

// ---------------------------------------------------------------------------
// Subsumption

/// Whether every instance of `v` in `h` is an instance of `v0` in `h0`.
/// On success returns the instantiation of `v0`'s addresses.
pub fn subsumes(or: &dyn Oracle, h: &Heap, v: &Value, h0: &Heap, v0: &Value) -> Option<BTreeMap<Addr, Value>> {
    let mut m = Matcher { or, h, h0, f: BTreeMap::new(), checks: Vec::new() };
    if !m.go(v, v0, 0) {
        return None;
    }
    let f = m.f;
    for (v, c) in &m.checks {
        let c2 = map_addrs_value(c, &|a| f.get(&a).cloned().unwrap_or(Value::Addr(a)));
        if or.check(h, v, &c2) != Proof::Proved {
            return None;
        }
    }
    Some(f)
}

struct Matcher<'a> {
    or: &'a dyn Oracle,
    h: &'a Heap,
    h0: &'a Heap,
    f: BTreeMap<Addr, Value>,
    checks: Vec<(Value, Value)>,
}

impl Matcher<'_> {
    fn go(&mut self, v: &Value, v0: &Value, depth: usize) -> bool {
        if depth > 32 {
            return false;
        }
        match v0 {
            Value::Addr(l0) => {
                if let Some(b) = self.f.get(l0) {
                    return same(self.h, b, v);
                }
                self.f.insert(*l0, v.clone());
                let e0 = self.h0.entry(*l0);
                self.entry(v, &e0, depth)
            }
            _ => self.entry(v, v0, depth),
        }
    }

    fn entry(&mut self, v: &Value, e0: &Value, depth: usize) -> bool {
        let Value::Refined(p0, set0) = e0 else { return false };
        let d = self.h.deref(v);
        let ok = match &**p0 {
            PreValue::Opaque => true,
            PreValue::Rec(..) => return covers(self.or, self.h0, e0, self.h, v),
            PreValue::Cons(a0, b0) => match d.pre_value() {
                Some(PreValue::Cons(a, b)) => {
                    let (a, b) = (a.clone(), b.clone());
                    self.go(&a, a0, depth + 1) && self.go(&b, b0, depth + 1)
                }
                _ => false,
            },
            PreValue::Int(_) | PreValue::Bool(_) | PreValue::Empty => d.pre_value() == Some(&**p0),
            _ => d.bare() == e0.bare(),
        };
        if ok {
            self.checks.extend(set0.iter().map(|c| (v.clone(), c.clone())));
        }
        ok
    }
}

fn same(h: &Heap, a: &Value, b: &Value) -> bool {
    if a == b {
        return true;
    }
    let (da, db) = (h.deref(a), h.deref(b));
    matches!(da.pre_value(), Some(PreValue::Int(_) | PreValue::Bool(_) | PreValue::Empty))
        && da.pre_value() == db.pre_value()
}

/// Whether every value described by `v` (in `hv`) is described by the
/// pattern `pat` (in `hp`), where patterns may be recursive.
pub fn covers(or: &dyn Oracle, hp: &Heap, pat: &Value, hv: &Heap, v: &Value) -> bool {
    Cover { or, hp, hv, seen: HashSet::default() }.go(pat, v, &[], 0)
}

struct Cover<'a> {
    or: &'a dyn Oracle,
    hp: &'a Heap,
    hv: &'a Heap,
    seen: HashSet<(Value, Value)>,
}

impl Cover<'_> {
    fn go(&mut self, pat: &Value, v: &Value, env: &[(Name, Value)], depth: usize) -> bool {
        if depth > 40 {
            return false;
        }
        let pat = self.hp.deref(pat);
        let Value::Refined(pp, pset) = &pat else { return false };
        if let PreValue::RecRef(x) = &**pp {
            return match env.iter().rev().find(|(y, _)| y == x) {
                Some((_, r)) => {
                    let r = r.clone();
                    self.go(&r, v, env, depth + 1)
                }
                None => false,
            };
        }
        let d = self.hv.deref(v);
        if let Some(PreValue::Rec(y, vms)) = d.pre_value() {
            if !self.seen.insert((pat.clone(), d.clone())) {
                return true;
            }
            let whole = d.clone();
            let ok = vms.iter().all(|m| self.go(&pat, &subst_recref(m, y, &whole), env, depth + 1));
            return ok && self.contracts(pset, v);
        }
        let ok = match &**pp {
            PreValue::Rec(x, ms) => {
                if !self.seen.insert((pat.clone(), d.clone())) {
                    return true;
                }
                let mut env2 = env.to_vec();
                env2.push((x.clone(), pat.clone()));
                ms.iter().any(|m| self.go(m, v, &env2, depth + 1))
            }
            PreValue::Opaque => true,
            PreValue::Cons(a0, b0) => match d.pre_value() {
                Some(PreValue::Cons(a, b)) => {
                    self.go(a0, a, env, depth + 1) && self.go(b0, b, env, depth + 1)
                }
                _ => false,
            },
            PreValue::Int(_) | PreValue::Bool(_) | PreValue::Empty => d.pre_value() == Some(&**pp),
            _ => d.bare() == pat.bare(),
        };
        ok && self.contracts(pset, v)
    }

    fn contracts(&self, set: &RefSet, v: &Value) -> bool {
        set.iter().all(|c| self.or.check(self.hv, v, c) == Proof::Proved)
    }
}

// ---------------------------------------------------------------------------
// Widening

/// The widening `v0 ⊕ v1` of a previous value by a new one.
pub fn widen(h: &Heap, v0: &Value, v1: &Value) -> Value {
    Widen { or: &proof::Basic, h0: h, h1: h, tight: false }.go(v0, v1, 0).0
}

/// Like [`widen`], but a recursive approximation replaces only the inner
/// occurrence, keeping the outermost layer of `v1` exact.
pub fn widen_tight(h0: &Heap, v0: &Value, h1: &Heap, v1: &Value) -> Value {
    widen_tight_with(&proof::Basic, h0, v0, h1, v1)
}

/// [`widen_tight`] deciding which refinements survive with `or`.
pub fn widen_tight_with(or: &dyn Oracle, h0: &Heap, v0: &Value, h1: &Heap, v1: &Value) -> Value {
    Widen { or, h0, h1, tight: true }.go(v0, v1, 0).0
}

struct Widen<'a> {
    or: &'a dyn Oracle,
    h0: &'a Heap,
    h1: &'a Heap,
    tight: bool,
}

const REC_VAR: &str = "x";

fn rec_ref(x: &str) -> Value {
    Value::pre(PreValue::RecRef(name(x)))
}

/// Follows an address only when it holds a pair or a recursive value.
fn expand(h: &Heap, v: &Value) -> Value {
    match v {
        Value::Addr(a) => match h.entry(*a) {
            e @ Value::Refined(..) if matches!(e.pre_value(), Some(PreValue::Cons(..) | PreValue::Rec(..))) => e,
            _ => v.clone(),
        },
        _ => v.clone(),
    }
}

impl Widen<'_> {
    /// The widened value, and whether it also covers `v0`. The fallback row
    /// returns `v1` as is, which covers only `v1`.
    fn go(&self, v0: &Value, v1: &Value, depth: usize) -> (Value, bool) {
        if v0 == v1 {
            return (v1.clone(), true);
        }
        if depth > 8 {
            return (v1.clone(), false);
        }
        let d0 = expand(self.h0, v0);
        let d1 = expand(self.h1, v1);
        match (d0.pre_value(), d1.pre_value()) {
            (Some(PreValue::Cons(a0, b0)), Some(PreValue::Cons(a1, b1))) => {
                let (a, ok_a) = self.go(a0, a1, depth + 1);
                let (b, ok_b) = self.go(b0, b1, depth + 1);
                // A pair with one component left as is would lose the other
                // operand, so it falls back whole.
                if !(ok_a && ok_b) {
                    return (v1.clone(), false);
                }
                let set = d0.refinements().unwrap().intersection(d1.refinements().unwrap()).cloned().collect();
                return (Value::Refined(Box::new(PreValue::Cons(a, b)), set), true);
            }
            (Some(PreValue::Rec(x, _)), Some(PreValue::Rec(y, ms1))) => {
                let mut r = d0.bare();
                for m in ms1 {
                    r = rec_add(self.h1, &r, &subst_recref(m, y, &rec_ref(x)));
                }
                return (r, true);
            }
            (Some(PreValue::Rec(x, _)), _) => {
                let v1x = replace(v1, v0, &rec_ref(x));
                return (rec_add(self.h1, &d0.bare(), &v1x), true);
            }
            (_, Some(PreValue::Rec(..))) => return (rec_add(self.h0, &d1.bare(), v0), true),
            _ => {}
        }
        if occurs_proper(v0, v1) {
            let mut ms = BTreeSet::new();
            ms.insert(detach(self.h0, v0, 0));
            ms.insert(detach(self.h1, &replace(v1, v0, &rec_ref(REC_VAR)), 0));
            let mu = Value::pre(PreValue::Rec(name(REC_VAR), ms));
            return (if self.tight { replace(v1, v0, &mu) } else { mu }, true);
        }
        if let (Some(n0), Some(n1)) = (int_like(self.h0, &d0), int_like(self.h1, &d1)) {
            if n0.is_some() && n0 == n1 {
                return (v1.clone(), true);
            }
            return (Value::opaque_with(common(self.or, self.h0, v0, self.h1, v1)), true);
        }
        (v1.clone(), false)
    }
}

/// `Some(Some(n))` for a concrete integer, `Some(None)` for a value proved
/// to be an integer, `None` otherwise.
fn int_like(h: &Heap, v: &Value) -> Option<Option<i64>> {
    let d = h.deref(v);
    if let Some(n) = d.as_int() {
        return Some(Some(n));
    }
    (proof::check(h, v, &crate::shape::pred(Op::IntP)) == Proof::Proved).then_some(None)
}

fn address_free(v: &Value) -> bool {
    let mut any = false;
    value_addrs(v, &mut |_| any = true);
    !any
}

/// Address-free contracts proved of both values, always including `int?`.
fn common(or: &dyn Oracle, h0: &Heap, v0: &Value, h1: &Heap, v1: &Value) -> RefSet {
    let mut cands: BTreeSet<Value> = BTreeSet::new();
    for (h, v) in [(h0, v0), (h1, v1)] {
        if let Some(set) = h.deref(v).refinements() {
            cands.extend(set.iter().cloned());
            cands.extend(facts(set).iter().map(atom_contract));
        }
    }
    let mut out: RefSet = cands
        .into_iter()
        .filter(address_free)
        .filter(|c| or.check(h0, v0, c) == Proof::Proved && or.check(h1, v1, c) == Proof::Proved)
        .collect();
    out.insert(crate::shape::pred(Op::IntP));
    out
}

/// Whether `v0` is a proper component of the pair structure `v1`.
fn occurs_proper(v0: &Value, v1: &Value) -> bool {
    match v1.pre_value() {
        Some(PreValue::Cons(a, b)) => a == v0 || b == v0 || occurs_proper(v0, a) || occurs_proper(v0, b),
        _ => false,
    }
}

/// `v[target := with]` over the pair structure of `v`.
fn replace(v: &Value, target: &Value, with: &Value) -> Value {
    if v == target {
        return with.clone();
    }
    match v {
        Value::Refined(p, set) => match &**p {
            PreValue::Cons(a, b) => {
                Value::Refined(Box::new(PreValue::Cons(replace(a, target, with), replace(b, target, with))), set.clone())
            }
            _ => v.clone(),
        },
        _ => v.clone(),
    }
}

/// An address-free approximation of `v`, for use inside a recursive value.
fn detach(h: &Heap, v: &Value, depth: usize) -> Value {
    let v = match v {
        Value::Addr(a) => h.entry(*a),
        _ => v.clone(),
    };
    let Value::Refined(p, set) = &v else { unreachable!() };
    let set: RefSet = set.iter().filter(|c| address_free(c)).cloned().collect();
    let p = match &**p {
        PreValue::Cons(a, b) if depth < 8 => PreValue::Cons(detach(h, a, depth + 1), detach(h, b, depth + 1)),
        PreValue::Cons(..) => PreValue::Opaque,
        other => other.clone(),
    };
    Value::Refined(Box::new(p), set)
}

/// Adds a member to a recursive value unless an existing member covers it.
fn rec_add(h: &Heap, r: &Value, v: &Value) -> Value {
    let Some(PreValue::Rec(x, ms)) = r.pre_value() else { return r.clone() };
    let v = fold_covered(h, r, x, &detach(h, v, 0));
    let closed = subst_recref(&v, x, r);
    if covers(&proof::Basic, h, r, h, &closed) {
        return r.clone();
    }
    let mut ms = ms.clone();
    let similar = ms.iter().find(|m| same_shape(m, &v)).cloned();
    match similar {
        Some(m) => {
            ms.remove(&m);
            ms.insert(merge_member(&m, &v));
        }
        None => {
            ms.insert(v);
        }
    }
    Value::pre(PreValue::Rec(x.clone(), ms))
}

/// Replaces components of a pair structure already described by `r` with `!x`.
fn fold_covered(h: &Heap, r: &Value, x: &Name, v: &Value) -> Value {
    match v {
        Value::Refined(p, set) => match &**p {
            PreValue::Cons(a, b) => {
                let fold = |c: &Value| {
                    if covers(&proof::Basic, h, r, h, &subst_recref(c, x, r)) {
                        rec_ref(x)
                    } else {
                        fold_covered(h, r, x, c)
                    }
                };
                Value::Refined(Box::new(PreValue::Cons(fold(a), fold(b))), set.clone())
            }
            _ => v.clone(),
        },
        _ => v.clone(),
    }
}

fn shape_class(v: &Value) -> u8 {
    match v.pre_value() {
        Some(PreValue::Cons(..)) => 1,
        Some(PreValue::Int(_)) => 2,
        Some(PreValue::Opaque) if v.refinements().is_some_and(|s| s.contains(&crate::shape::pred(Op::IntP))) => 2,
        Some(PreValue::Empty) => 3,
        Some(PreValue::Bool(_)) => 4,
        Some(PreValue::RecRef(_)) => 5,
        _ => 0,
    }
}

fn same_shape(a: &Value, b: &Value) -> bool {
    let c = shape_class(a);
    c != 0 && c == shape_class(b)
}

/// Pointwise join of two address-free members of the same shape.
fn merge_member(a: &Value, b: &Value) -> Value {
    if a == b {
        return a.clone();
    }
    let inter = |x: &Value, y: &Value| -> RefSet {
        x.refinements().unwrap().intersection(y.refinements().unwrap()).cloned().collect()
    };
    match (a.pre_value(), b.pre_value()) {
        (Some(PreValue::Cons(a1, a2)), Some(PreValue::Cons(b1, b2))) => {
            Value::Refined(Box::new(PreValue::Cons(merge_member(a1, b1), merge_member(a2, b2))), inter(a, b))
        }
        _ if shape_class(a) == 2 && shape_class(b) == 2 => {
            let h = Heap::new();
            Value::opaque_with(common(&proof::Basic, &h, a, &h, b))
        }
        _ if a.bare() == b.bare() => Value::Refined(Box::new(a.pre_value().unwrap().clone()), inter(a, b)),
        _ => Value::opaque(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shape::pred;

    fn mu(ms: Vec<Value>) -> Value {
        Value::pre(PreValue::Rec(name("x"), ms.into_iter().collect()))
    }

    #[test]
    fn widen_empty_by_singleton_list() {
        let h = Heap::new();
        let one = Value::cons(Value::int(1), Value::empty());
        let expect = mu(vec![Value::empty(), Value::cons(Value::int(1), rec_ref("x"))]);
        assert_eq!(widen(&h, &Value::empty(), &one), expect);
        assert_eq!(widen_tight(&h, &Value::empty(), &h, &one), Value::cons(Value::int(1), expect));
    }

    #[test]
    fn widen_distinct_ints() {
        let h = Heap::new();
        assert_eq!(widen(&h, &Value::int(1), &Value::int(2)), Value::opaque_with([pred(Op::IntP)].into()));
        assert_eq!(widen(&h, &Value::int(3), &Value::int(3)), Value::int(3));
    }

    #[test]
    fn widen_pairs_pointwise() {
        let h = Heap::new();
        let a = Value::cons(Value::int(1), Value::bool(true));
        let b = Value::cons(Value::int(2), Value::bool(true));
        let got = widen(&h, &a, &b);
        assert_eq!(got, Value::cons(Value::opaque_with([pred(Op::IntP)].into()), Value::bool(true)));
    }

    #[test]
    fn recursive_value_absorbs_longer_lists() {
        let h = Heap::new();
        let r = widen(&h, &Value::empty(), &Value::cons(Value::int(1), Value::empty()));
        let longer = Value::cons(Value::int(2), Value::cons(Value::int(1), Value::empty()));
        let r2 = widen(&h, &r, &longer);
        let expect = mu(vec![Value::empty(), Value::cons(Value::opaque_with([pred(Op::IntP)].into()), rec_ref("x"))]);
        assert_eq!(r2, expect);
        assert_eq!(widen(&h, &r2, &longer), r2);
    }

    #[test]
    fn subsumption_instantiates_addresses() {
        let int = || Value::opaque_with([pred(Op::IntP)].into());
        let h0 = Heap::from_entries([(0, int())]);
        let h = Heap::from_entries([(0, int()), (1, int())]);
        let f = subsumes(&proof::Basic, &h, &Value::Addr(1), &h0, &Value::Addr(0)).expect("subsumed");
        assert_eq!(f.get(&0), Some(&Value::Addr(1)));
        assert!(subsumes(&proof::Basic, &Heap::new(), &Value::bool(true), &h0, &Value::Addr(0)).is_none());
    }

    #[test]
    fn covers_recursive_lists() {
        let list = mu(vec![Value::empty(), Value::cons(Value::opaque(), rec_ref("x"))]);
        let h = Heap::new();
        let two = Value::cons(Value::int(1), Value::cons(Value::int(2), Value::empty()));
        assert!(covers(&proof::Basic, &h, &list, &h, &two));
        assert!(!covers(&proof::Basic, &h, &list, &h, &Value::int(3)));
        assert!(covers(&proof::Basic, &h, &list, &h, &list));
        assert!(!covers(&proof::Basic, &h, &Value::empty(), &h, &list));
    }
}
