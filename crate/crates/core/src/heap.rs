//! Heaps of refined symbolic values, refinement, and state canonicalization.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use rustc_hash::{FxHashMap as HashMap, FxHashSet as HashSet};
use std::hash::{Hash, Hasher};

use crate::print::show_value;
use crate::proof::{self, Proof};
use crate::shape::{normalize, shape_of, Atom, Shape};
use crate::syntax::*;

/// Finite map from addresses to refined pre-values.
///
/// `floor` is a lower bound for fresh addresses; it keeps allocation clear of
/// addresses still named by summarization marks. It is not part of equality.
#[derive(Clone, Debug, Default)]
pub struct Heap {
    map: BTreeMap<Addr, Value>,
    floor: Addr,
}

impl PartialEq for Heap {
    fn eq(&self, o: &Self) -> bool {
        self.map == o.map
    }
}
impl Eq for Heap {}
impl PartialOrd for Heap {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Heap {
    fn cmp(&self, o: &Self) -> Ordering {
        self.map.cmp(&o.map)
    }
}
impl Hash for Heap {
    fn hash<H: Hasher>(&self, h: &mut H) {
        self.map.hash(h)
    }
}

impl Heap {
    pub fn new() -> Heap {
        Heap::default()
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (Addr, Value)>) -> Heap {
        Heap { map: entries.into_iter().collect(), floor: 0 }
    }

    pub fn get(&self, a: Addr) -> Option<&Value> {
        self.map.get(&a)
    }

    /// The entry at `a`; a missing entry reads as an unconstrained unknown.
    pub fn entry(&self, a: Addr) -> Value {
        self.map.get(&a).cloned().unwrap_or_else(Value::opaque)
    }

    pub fn contains(&self, a: Addr) -> bool {
        self.map.contains_key(&a)
    }

    pub fn set(&mut self, a: Addr, v: Value) {
        debug_assert!(!matches!(v, Value::Addr(_)), "heap entries are refined values");
        self.map.insert(a, v);
    }

    pub fn remove(&mut self, a: Addr) {
        self.map.remove(&a);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Addr, &Value)> {
        self.map.iter()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn max_addr(&self) -> Option<Addr> {
        self.map.keys().next_back().copied()
    }

    pub fn reserve(&mut self, floor: Addr) {
        self.floor = self.floor.max(floor);
    }

    pub fn fresh(&self) -> Addr {
        self.max_addr().map_or(0, |m| m + 1).max(self.floor)
    }

    /// Extends the heap at a fresh address: one more than the largest key.
    pub fn alloc(&mut self, v: Value) -> Addr {
        let a = self.fresh();
        self.set(a, v);
        a
    }

    pub fn alloc_pure(&self, v: Value) -> (Heap, Addr) {
        let mut h = self.clone();
        let a = h.alloc(v);
        (h, a)
    }

    /// Follows an address to its entry; other values are returned unchanged.
    pub fn deref(&self, v: &Value) -> Value {
        match v {
            Value::Addr(a) => self.entry(*a),
            _ => v.clone(),
        }
    }

    /// The heap restricted to entries reachable from `roots`.
    pub fn restrict(&self, roots: &[Addr]) -> Heap {
        let mut out = BTreeMap::new();
        let mut stack: Vec<Addr> = roots.to_vec();
        while let Some(a) = stack.pop() {
            if out.contains_key(&a) {
                continue;
            }
            if let Some(v) = self.map.get(&a) {
                out.insert(a, v.clone());
                value_addrs(v, &mut |b| stack.push(b));
            }
        }
        Heap { map: out, floor: self.floor }
    }
}

/// Refines `v` with contract `c`.
pub fn refine(sigma: &Heap, v: &Value, c: &Value) -> (Heap, Value) {
    let mut h = sigma.clone();
    let v2 = refine_mut(&mut h, v, c);
    (h, v2)
}

pub fn refine_mut(h: &mut Heap, v: &Value, c: &Value) -> Value {
    let c = normalize(c);
    match v {
        Value::Addr(a) => {
            let entry = h.entry(*a);
            let refined = refine_mut(h, &entry, &c);
            let refined = match refined {
                Value::Addr(b) => h.entry(b),
                r => r,
            };
            h.set(*a, refined);
            Value::Addr(*a)
        }
        Value::Refined(p, set) => {
            let pred = match shape_of(&c) {
                Shape::Atom(Atom::Pred(o)) => Some(o),
                _ => None,
            };
            match (&**p, pred) {
                (PreValue::Opaque, Some(Op::ConsP)) => {
                    let l1 = h.alloc(Value::opaque());
                    let l2 = h.alloc(Value::opaque());
                    Value::Refined(Box::new(PreValue::Cons(Value::Addr(l1), Value::Addr(l2))), set.clone())
                }
                (PreValue::Opaque, Some(Op::DepP)) => {
                    let l = h.alloc(Value::opaque());
                    Value::Refined(
                        Box::new(PreValue::DepCon(Value::Addr(l), name("x"), Box::new(Expr::Val(Value::opaque())))),
                        set.clone(),
                    )
                }
                (PreValue::Rec(x, ms), _) => refine_rec(h, x, ms, set, &c),
                _ => {
                    let mut s = set.clone();
                    s.insert(c);
                    Value::Refined(p.clone(), s)
                }
            }
        }
    }
}

/// Refining a recursive value keeps only the members not refuted by `c`;
/// a lone survivor is unrolled one level.
fn refine_rec(h: &mut Heap, x: &Name, ms: &std::collections::BTreeSet<Value>, set: &RefSet, c: &Value) -> Value {
    let whole = Value::Refined(Box::new(PreValue::Rec(x.clone(), ms.clone())), RefSet::new());
    let keep: Vec<&Value> = ms
        .iter()
        .filter(|m| proof::check(h, &subst_recref(m, x, &Value::opaque()), c) != Proof::Refuted)
        .collect();
    if keep.is_empty() || keep.len() == ms.len() {
        let mut s = set.clone();
        s.insert(c.clone());
        return Value::Refined(Box::new(PreValue::Rec(x.clone(), ms.clone())), s);
    }
    let back = h.alloc(whole);
    let unrolled: Vec<Value> = keep.iter().map(|m| subst_recref(m, x, &Value::Addr(back))).collect();
    if unrolled.len() == 1 {
        let m = heapify(h, &unrolled[0]);
        let m = match m {
            Value::Addr(b) => h.entry(b),
            m => m,
        };
        let merged = match m {
            Value::Refined(p, s0) => Value::Refined(p, s0.union(set).cloned().collect()),
            a => a,
        };
        return refine_mut(h, &merged, c);
    }
    let mut s = set.clone();
    s.insert(c.clone());
    Value::Refined(Box::new(PreValue::Rec(name("_"), unrolled.into_iter().collect())), s)
}

/// Moves unknown and recursive components of a pair structure onto the heap,
/// so repeated projections observe the same address.
pub fn heapify(h: &mut Heap, v: &Value) -> Value {
    match v {
        Value::Addr(_) => v.clone(),
        Value::Refined(p, set) => match &**p {
            PreValue::Opaque | PreValue::Rec(..) => Value::Addr(h.alloc(v.clone())),
            PreValue::Cons(a, b) => {
                let a2 = heapify(h, a);
                let b2 = heapify(h, b);
                Value::Refined(Box::new(PreValue::Cons(a2, b2)), set.clone())
            }
            _ => v.clone(),
        },
    }
}

// ---------------------------------------------------------------------------
// States

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum State {
    Running(Expr, Heap),
    Blamed(Label, Label),
}

impl State {
    pub fn is_terminal(&self) -> bool {
        match self {
            State::Blamed(..) => true,
            State::Running(e, _) => e.is_value(),
        }
    }
}

/// Garbage-collects unreachable heap entries and renames addresses in order
/// of first reachability.
pub fn canonicalize(s: &State) -> State {
    canonicalize_with_map(s).0
}

/// Like [`canonicalize`], but reuses `s` when it is already canonical.
pub fn canonicalize_owned(s: State) -> State {
    let State::Running(e, h) = &s else { return s };
    let mut r = Renamer::new();
    r.visit_expr(e, h);
    let canonical = r.mark_heaps.is_empty()
        && r.map.iter().all(|(a, b)| a == b)
        && h.iter().all(|(a, _)| r.visited.contains(&(0, *a)));
    if canonical {
        return s;
    }
    let e2 = r.rename_expr(e);
    let out = r.visited_heap(h);
    State::Running(e2, out)
}

/// Canonical form together with the renaming applied to the state's addresses.
pub fn canonicalize_with_map(s: &State) -> (State, HashMap<Addr, Addr>) {
    match s {
        State::Blamed(..) => (s.clone(), HashMap::default()),
        State::Running(e, h) => {
            let mut r = Renamer::new();
            r.visit_expr(e, h);
            let e2 = r.rename_expr(e);
            let out = r.visited_heap(h);
            (State::Running(e2, out), r.map)
        }
    }
}

/// Canonical form of a value under a heap: the value renamed together with
/// the reachable part of the heap.
pub fn canonical_value(v: &Value, h: &Heap) -> (Value, Heap) {
    match canonicalize(&State::Running(Expr::Val(v.clone()), h.clone())) {
        State::Running(Expr::Val(v2), h2) => (v2, h2),
        _ => unreachable!(),
    }
}

pub(crate) struct Renamer {
    pub map: HashMap<Addr, Addr>,
    pub visited: HashSet<(usize, Addr)>,
    next: Addr,
    /// Heaps of summarization marks, in traversal order.
    mark_heaps: Vec<Heap>,
    mark_cursor: usize,
}

impl Renamer {
    pub fn new() -> Renamer {
        Renamer { map: HashMap::default(), visited: HashSet::default(), next: 0, mark_heaps: Vec::new(), mark_cursor: 0 }
    }

    /// Renamer that assigns ids starting after an existing assignment.
    pub fn with_map(map: HashMap<Addr, Addr>) -> Renamer {
        let next = map.values().copied().max().map_or(0, |m| m + 1);
        Renamer { map, visited: HashSet::default(), next, mark_heaps: Vec::new(), mark_cursor: 0 }
    }

    /// Visits a root address of the main heap.
    pub fn visit_root(&mut self, a: Addr, h: &Heap) {
        self.visit_addr(a, 0, h)
    }

    /// The visited part of the main heap, renamed.
    pub fn visited_heap(&self, h: &Heap) -> Heap {
        let mut out = Heap::new();
        for (a, v) in h.iter() {
            if self.visited.contains(&(0, *a)) {
                out.set(self.lookup(*a), self.rename_value(v));
            }
        }
        out
    }

    fn assign(&mut self, a: Addr) {
        if !self.map.contains_key(&a) {
            self.map.insert(a, self.next);
            self.next += 1;
        }
    }

    /// Visits an address in heap context `ctx` (0 = main heap).
    fn visit_addr(&mut self, a: Addr, ctx: usize, h: &Heap) {
        self.assign(a);
        if self.visited.insert((ctx, a)) {
            if let Some(v) = h.get(a) {
                self.visit_value(v, ctx, h);
            }
        }
    }

    pub fn visit_value(&mut self, v: &Value, ctx: usize, h: &Heap) {
        match v {
            Value::Addr(a) => self.visit_addr(*a, ctx, h),
            Value::Refined(p, set) => {
                match &**p {
                    PreValue::Lam(_, b) => self.visit_plain_expr(b, ctx, h),
                    PreValue::Cons(a, b) => {
                        self.visit_value(a, ctx, h);
                        self.visit_value(b, ctx, h);
                    }
                    PreValue::DepCon(c, _, d) => {
                        self.visit_value(c, ctx, h);
                        self.visit_plain_expr(d, ctx, h);
                    }
                    PreValue::Rec(_, ms) => self.visit_set(ms, ctx, h),
                    _ => {}
                }
                self.visit_set(set, ctx, h);
            }
        }
    }

    fn visit_set(&mut self, set: &BTreeSet<Value>, ctx: usize, h: &Heap) {
        // Address-free elements need no visit, and without addresses the
        // set's own order is already independent of address names.
        let with_addrs: Vec<&Value> = set.iter().filter(|v| has_addr(v)).collect();
        if with_addrs.len() == 1 {
            self.visit_value(with_addrs[0], ctx, h);
        } else if with_addrs.len() > 1 {
            for m in self.ordered(with_addrs.into_iter(), h) {
                self.visit_value(&m, ctx, h);
            }
        }
    }

    /// Orders set elements by a key that ignores not-yet-named addresses, so
    /// the traversal does not depend on the incoming address names.
    fn ordered<'a>(&self, it: impl Iterator<Item = &'a Value>, h: &Heap) -> Vec<Value> {
        let mut v: Vec<(String, Value)> = it.map(|x| (self.order_key(x, h), x.clone())).collect();
        if v.len() > 1 {
            v.sort_by(|a, b| a.0.cmp(&b.0));
        }
        v.into_iter().map(|(_, x)| x).collect()
    }

    fn order_key(&self, v: &Value, h: &Heap) -> String {
        let mut unnamed = Vec::new();
        let mut named = HashMap::default();
        value_addrs(v, &mut |a| match self.map.get(&a) {
            Some(n) => {
                named.insert(a, *n);
            }
            None => unnamed.push(a),
        });
        let mut key = show_value(&rename_value_with(v, &|a| named.get(&a).copied().unwrap_or(Addr::MAX)));
        for a in unnamed {
            key.push('|');
            if let Some(e) = h.get(a) {
                key.push_str(&show_value(&rename_value_with(e, &|b| {
                    self.map.get(&b).copied().unwrap_or(Addr::MAX)
                })));
            }
        }
        key
    }

    fn visit_plain_expr(&mut self, e: &Expr, ctx: usize, h: &Heap) {
        match e {
            Expr::Val(v) => self.visit_value(v, ctx, h),
            Expr::Assume(a, c) => {
                self.visit_value(a, ctx, h);
                self.visit_value(c, ctx, h);
            }
            Expr::Var(_) | Expr::Ref(..) | Expr::Blame(..) => {}
            Expr::App(a, b, _) | Expr::DepCon(a, _, b) | Expr::Mon(a, _, b) => {
                self.visit_plain_expr(a, ctx, h);
                self.visit_plain_expr(b, ctx, h);
            }
            Expr::Prim(_, args, _) => args.iter().for_each(|a| self.visit_plain_expr(a, ctx, h)),
            Expr::If(c, t, f) => {
                self.visit_plain_expr(c, ctx, h);
                self.visit_plain_expr(t, ctx, h);
                self.visit_plain_expr(f, ctx, h);
            }
            Expr::Rt(_, b) | Expr::Blur(_, b) => self.visit_plain_expr(b, ctx, h),
        }
    }

    /// Visits an evaluation-position expression, which may contain marks.
    pub fn visit_expr(&mut self, e: &Expr, h: &Heap) {
        match e {
            Expr::Rt(m, b) => {
                let ctx = self.mark_heaps.len() + 1;
                self.mark_heaps.push(m.heap.clone());
                self.visit_value(&m.f, ctx, &m.heap);
                self.visit_value(&m.arg, ctx, &m.heap);
                // Addresses named by the mark stay live in the main heap.
                let mut keys: Vec<Addr> = m.heap.iter().map(|(a, _)| *a).filter(|a| h.contains(*a)).collect();
                keys.sort_by_key(|a| self.map.get(a).copied().unwrap_or(Addr::MAX));
                for a in keys {
                    self.visit_addr(a, 0, h);
                }
                self.visit_expr(b, h);
            }
            Expr::Blur(m, b) => {
                for (o, n) in &m.ren {
                    self.visit_addr(*n, 0, h);
                    self.assign(*o);
                }
                self.visit_value(&m.prev, 0, h);
                for v in m.heap.values() {
                    self.visit_value(v, 0, h);
                }
                self.visit_expr(b, h);
            }
            Expr::App(a, b, _) => {
                self.visit_expr(a, h);
                self.visit_expr(b, h);
            }
            Expr::Prim(_, args, _) => args.iter().for_each(|a| self.visit_expr(a, h)),
            Expr::If(c, t, f) => {
                self.visit_expr(c, h);
                self.visit_expr(t, h);
                self.visit_expr(f, h);
            }
            Expr::DepCon(c, _, d) => {
                self.visit_expr(c, h);
                self.visit_expr(d, h);
            }
            Expr::Mon(c, _, b) => {
                self.visit_expr(c, h);
                self.visit_expr(b, h);
            }
            Expr::Val(v) => self.visit_value(v, 0, h),
            Expr::Assume(v, c) => {
                self.visit_value(v, 0, h);
                self.visit_value(c, 0, h);
            }
            Expr::Var(_) | Expr::Ref(..) | Expr::Blame(..) => {}
        }
    }

    fn lookup(&self, a: Addr) -> Addr {
        *self.map.get(&a).expect("address visited before renaming")
    }

    pub fn rename_value(&self, v: &Value) -> Value {
        rename_value_with(v, &|a| self.lookup(a))
    }

    pub fn rename_expr(&mut self, e: &Expr) -> Expr {
        match e {
            Expr::Rt(m, b) => {
                let ctx = self.mark_cursor + 1;
                self.mark_cursor += 1;
                let src = &self.mark_heaps[ctx - 1];
                let mut heap = Heap::new();
                for (a, v) in src.iter() {
                    if self.visited.contains(&(ctx, *a)) {
                        heap.set(self.lookup(*a), self.rename_value(v));
                    }
                }
                let mark = RtMark { heap, f: self.rename_value(&m.f), arg: self.rename_value(&m.arg) };
                Expr::Rt(Box::new(mark), Box::new(self.rename_expr(b)))
            }
            Expr::Blur(m, b) => {
                let mark = BlurMark {
                    ren: m.ren.iter().map(|(o, n)| (self.lookup(*o), self.lookup(*n))).collect(),
                    heap: m.heap.iter().map(|(a, v)| (self.lookup(*a), self.rename_value(v))).collect(),
                    prev: self.rename_value(&m.prev),
                };
                Expr::Blur(Box::new(mark), Box::new(self.rename_expr(b)))
            }
            Expr::App(a, b, l) => Expr::App(Box::new(self.rename_expr(a)), Box::new(self.rename_expr(b)), l.clone()),
            Expr::Prim(o, args, l) => Expr::Prim(*o, args.iter().map(|a| self.rename_expr(a)).collect(), l.clone()),
            Expr::If(c, t, f) => {
                let c = self.rename_expr(c);
                let t = self.rename_expr(t);
                let f = self.rename_expr(f);
                Expr::if_(c, t, f)
            }
            Expr::DepCon(c, x, d) => {
                let c = self.rename_expr(c);
                let d = self.rename_expr(d);
                Expr::DepCon(Box::new(c), x.clone(), Box::new(d))
            }
            Expr::Mon(c, ls, b) => {
                let c = self.rename_expr(c);
                let b = self.rename_expr(b);
                Expr::mon(c, ls.clone(), b)
            }
            Expr::Val(v) => Expr::Val(self.rename_value(v)),
            Expr::Assume(v, c) => Expr::Assume(self.rename_value(v), self.rename_value(c)),
            Expr::Var(_) | Expr::Ref(..) | Expr::Blame(..) => e.clone(),
        }
    }
}

fn has_addr(v: &Value) -> bool {
    let mut any = false;
    value_addrs(v, &mut |_| any = true);
    any
}

/// Replaces every address in a value by a value.
pub fn map_addrs_value(v: &Value, f: &dyn Fn(Addr) -> Value) -> Value {
    match v {
        Value::Addr(a) => f(*a),
        Value::Refined(p, set) => {
            let p2 = match &**p {
                PreValue::Lam(x, b) => PreValue::Lam(x.clone(), Box::new(map_addrs_expr(b, f))),
                PreValue::Cons(a, b) => PreValue::Cons(map_addrs_value(a, f), map_addrs_value(b, f)),
                PreValue::DepCon(c, x, d) => {
                    PreValue::DepCon(map_addrs_value(c, f), x.clone(), Box::new(map_addrs_expr(d, f)))
                }
                PreValue::Rec(x, ms) => PreValue::Rec(x.clone(), ms.iter().map(|m| map_addrs_value(m, f)).collect()),
                other => other.clone(),
            };
            Value::Refined(Box::new(p2), set.iter().map(|c| map_addrs_value(c, f)).collect())
        }
    }
}

/// Replaces addresses in a mark-free expression.
pub fn map_addrs_expr(e: &Expr, f: &dyn Fn(Addr) -> Value) -> Expr {
    match e {
        Expr::Val(v) => Expr::Val(map_addrs_value(v, f)),
        Expr::Assume(a, c) => Expr::Assume(map_addrs_value(a, f), map_addrs_value(c, f)),
        Expr::Var(_) | Expr::Ref(..) | Expr::Blame(..) | Expr::Rt(..) | Expr::Blur(..) => e.clone(),
        Expr::App(a, b, l) => Expr::App(Box::new(map_addrs_expr(a, f)), Box::new(map_addrs_expr(b, f)), l.clone()),
        Expr::Prim(o, args, l) => Expr::Prim(*o, args.iter().map(|a| map_addrs_expr(a, f)).collect(), l.clone()),
        Expr::If(c, t, e2) => Expr::if_(map_addrs_expr(c, f), map_addrs_expr(t, f), map_addrs_expr(e2, f)),
        Expr::DepCon(c, x, d) => {
            Expr::DepCon(Box::new(map_addrs_expr(c, f)), x.clone(), Box::new(map_addrs_expr(d, f)))
        }
        Expr::Mon(c, ls, b) => Expr::mon(map_addrs_expr(c, f), ls.clone(), map_addrs_expr(b, f)),
    }
}

/// Applies an address renaming to every address in a value.
pub fn rename_value_with(v: &Value, f: &dyn Fn(Addr) -> Addr) -> Value {
    match v {
        Value::Addr(a) => Value::Addr(f(*a)),
        Value::Refined(p, set) => {
            let p2 = match &**p {
                PreValue::Lam(x, b) => PreValue::Lam(x.clone(), Box::new(rename_expr_with(b, f))),
                PreValue::Cons(a, b) => PreValue::Cons(rename_value_with(a, f), rename_value_with(b, f)),
                PreValue::DepCon(c, x, d) => {
                    PreValue::DepCon(rename_value_with(c, f), x.clone(), Box::new(rename_expr_with(d, f)))
                }
                PreValue::Rec(x, ms) => PreValue::Rec(x.clone(), ms.iter().map(|m| rename_value_with(m, f)).collect()),
                other => other.clone(),
            };
            Value::Refined(Box::new(p2), set.iter().map(|c| rename_value_with(c, f)).collect())
        }
    }
}

/// Renames addresses in an expression without summarization marks.
pub fn rename_expr_with(e: &Expr, f: &dyn Fn(Addr) -> Addr) -> Expr {
    match e {
        Expr::Val(v) => Expr::Val(rename_value_with(v, f)),
        Expr::Assume(a, c) => Expr::Assume(rename_value_with(a, f), rename_value_with(c, f)),
        Expr::Var(_) | Expr::Ref(..) | Expr::Blame(..) => e.clone(),
        Expr::App(a, b, l) => Expr::App(Box::new(rename_expr_with(a, f)), Box::new(rename_expr_with(b, f)), l.clone()),
        Expr::Prim(o, args, l) => Expr::Prim(*o, args.iter().map(|a| rename_expr_with(a, f)).collect(), l.clone()),
        Expr::If(c, t, e2) => Expr::if_(rename_expr_with(c, f), rename_expr_with(t, f), rename_expr_with(e2, f)),
        Expr::DepCon(c, x, d) => {
            Expr::DepCon(Box::new(rename_expr_with(c, f)), x.clone(), Box::new(rename_expr_with(d, f)))
        }
        Expr::Mon(c, ls, b) => Expr::mon(rename_expr_with(c, f), ls.clone(), rename_expr_with(b, f)),
        Expr::Rt(m, b) => {
            let heap = Heap::from_entries(m.heap.iter().map(|(a, v)| (f(*a), rename_value_with(v, f))));
            let mark = RtMark { heap, f: rename_value_with(&m.f, f), arg: rename_value_with(&m.arg, f) };
            Expr::Rt(Box::new(mark), Box::new(rename_expr_with(b, f)))
        }
        Expr::Blur(m, b) => {
            let mark = BlurMark {
                ren: m.ren.iter().map(|(o, n)| (f(*o), f(*n))).collect(),
                heap: m.heap.iter().map(|(a, v)| (f(*a), rename_value_with(v, f))).collect(),
                prev: rename_value_with(&m.prev, f),
            };
            Expr::Blur(Box::new(mark), Box::new(rename_expr_with(b, f)))
        }
    }
}

/// Renames a whole state (expression and heap keys) by `f`.
pub fn rename_state(s: &State, f: &dyn Fn(Addr) -> Addr) -> State {
    match s {
        State::Blamed(..) => s.clone(),
        State::Running(e, h) => State::Running(
            rename_expr_with(e, f),
            Heap::from_entries(h.iter().map(|(a, v)| (f(*a), rename_value_with(v, f)))),
        ),
    }
}
