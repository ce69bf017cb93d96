//! Small-step reduction over symbolic states, monitoring, havoc, and
//! exhaustive breadth-first exploration.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use std::collections::hash_map::Entry;

use rustc_hash::FxHashMap as HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::delta::{delta, split, Answer};
use crate::heap::{canonicalize, canonicalize_owned, refine, Heap, State};
use crate::print::show_expr;
use crate::proof::{Oracle, Proof};
use crate::shape::any_contract;
use crate::summarize::{self, BlurReading, Tables};
use crate::syntax::*;

pub type Rule = &'static str;

/// One evaluation-context frame; a context is a list of frames, outermost first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Frame {
    AppL(Expr, Label),
    AppR(Value, Label),
    Prim { op: Op, done: Vec<Value>, rest: Vec<Expr>, l: Label },
    If(Expr, Expr),
    DepDom(Name, Expr),
    MonC(MonLabels, Expr),
    MonE(Value, MonLabels),
    Rt(Box<RtMark>),
    Blur(Box<BlurMark>),
}

fn val_of(e: &Expr) -> Value {
    e.as_value().expect("evaluated position holds a value").clone()
}

/// Splits a non-value expression into its evaluation context and redex.
pub fn decompose(e: &Expr) -> Option<(Vec<Frame>, Expr)> {
    let mut frames = Vec::new();
    let r = find(e, &mut frames)?;
    Some((frames, r))
}

fn find(e: &Expr, fr: &mut Vec<Frame>) -> Option<Expr> {
    match e {
        Expr::Val(v) => (!v.is_reduced()).then(|| e.clone()),
        Expr::Var(_) | Expr::Ref(..) | Expr::Blame(..) | Expr::Assume(..) => Some(e.clone()),
        Expr::App(f, a, l) => {
            if !f.is_value() {
                fr.push(Frame::AppL((**a).clone(), l.clone()));
                find(f, fr)
            } else if !a.is_value() {
                fr.push(Frame::AppR(val_of(f), l.clone()));
                find(a, fr)
            } else {
                Some(e.clone())
            }
        }
        Expr::Prim(op, args, l) => match args.iter().position(|a| !a.is_value()) {
            Some(i) => {
                fr.push(Frame::Prim {
                    op: *op,
                    done: args[..i].iter().map(val_of).collect(),
                    rest: args[i + 1..].to_vec(),
                    l: l.clone(),
                });
                find(&args[i], fr)
            }
            None => Some(e.clone()),
        },
        Expr::If(c, t, f) => {
            if c.is_value() {
                Some(e.clone())
            } else {
                fr.push(Frame::If((**t).clone(), (**f).clone()));
                find(c, fr)
            }
        }
        Expr::DepCon(c, x, d) => {
            if c.is_value() {
                Some(e.clone())
            } else {
                fr.push(Frame::DepDom(x.clone(), (**d).clone()));
                find(c, fr)
            }
        }
        Expr::Mon(c, ls, b) => {
            if !c.is_value() {
                fr.push(Frame::MonC(ls.clone(), (**b).clone()));
                find(c, fr)
            } else if !b.is_value() {
                fr.push(Frame::MonE(val_of(c), ls.clone()));
                find(b, fr)
            } else {
                Some(e.clone())
            }
        }
        Expr::Rt(m, b) => {
            if b.is_value() {
                Some(e.clone())
            } else {
                fr.push(Frame::Rt(m.clone()));
                find(b, fr)
            }
        }
        Expr::Blur(m, b) => {
            if b.is_value() {
                Some(e.clone())
            } else {
                fr.push(Frame::Blur(m.clone()));
                find(b, fr)
            }
        }
    }
}

pub fn plug_frame(f: &Frame, e: Expr) -> Expr {
    match f {
        Frame::AppL(a, l) => Expr::app(e, a.clone(), l.clone()),
        Frame::AppR(v, l) => Expr::app(Expr::Val(v.clone()), e, l.clone()),
        Frame::Prim { op, done, rest, l } => {
            let mut args: Vec<Expr> = done.iter().cloned().map(Expr::Val).collect();
            args.push(e);
            args.extend(rest.iter().cloned());
            Expr::prim(*op, args, l.clone())
        }
        Frame::If(t, f) => Expr::if_(e, t.clone(), f.clone()),
        Frame::DepDom(x, d) => Expr::DepCon(Box::new(e), x.clone(), Box::new(d.clone())),
        Frame::MonC(ls, b) => Expr::mon(e, ls.clone(), b.clone()),
        Frame::MonE(c, ls) => Expr::mon(Expr::Val(c.clone()), ls.clone(), e),
        Frame::Rt(m) => Expr::Rt(m.clone(), Box::new(e)),
        Frame::Blur(m) => Expr::Blur(m.clone(), Box::new(e)),
    }
}

pub fn plug(frames: &[Frame], e: Expr) -> Expr {
    frames.iter().rev().fold(e, |acc, f| plug_frame(f, acc))
}

pub const HAVOC: &str = "havoc";

/// The demonic context: probes its argument by application and projection.
pub fn havoc_value() -> Value {
    let l = || Label::Havoc;
    let x = || Expr::var("x");
    let again = |e: Expr| Expr::app(Expr::Ref(name(HAVOC), l()), e, l());
    let amb = |a: Expr, b: Expr| Expr::if_(Expr::Val(Value::opaque()), a, b);
    Value::lam(
        "x",
        amb(
            again(Expr::app(x(), Expr::Val(Value::opaque()), l())),
            amb(again(Expr::prim(Op::Car, vec![x()], l())), again(Expr::prim(Op::Cdr, vec![x()], l()))),
        ),
    )
}

pub fn havoc_module() -> Module {
    let never = Value::lam("_", Expr::Val(Value::bool(false)));
    Module {
        name: name(HAVOC),
        contract: Expr::DepCon(
            Box::new(Expr::Val(any_contract())),
            name("_"),
            Box::new(Expr::Val(never)),
        ),
        body: Some(Expr::Val(havoc_value())),
    }
}

/// A reduct: the replacement for the redex, or a blame that ends the run.
type Reduct = (Rule, Result<Expr, (Label, Label)>, Heap);

pub struct Machine<'a> {
    pub prog: &'a Program,
    pub oracle: &'a dyn Oracle,
}

impl<'a> Machine<'a> {
    pub fn new(prog: &'a Program, oracle: &'a dyn Oracle) -> Self {
        Machine { prog, oracle }
    }

    /// All successors of a running, non-value state.
    pub fn step(&self, s: &State) -> Vec<(Rule, State)> {
        let State::Running(e, h) = s else { return Vec::new() };
        let (frames, redex) = decompose(e).unwrap_or_else(|| panic!("step on a value: {}", show_expr(e)));
        let mut h = h.clone();
        if let Some(m) = max_addr_in(e) {
            h.reserve(m + 1);
        }
        self.reduce(&redex, &h)
            .into_iter()
            .map(|(rule, r, h2)| (rule, finish(&frames, r, h2)))
            .collect()
    }

    pub fn reduce(&self, redex: &Expr, h: &Heap) -> Vec<Reduct> {
        let or = self.oracle;
        match redex {
            Expr::Val(v) => {
                // Unknown or recursive values get an address.
                let (h2, a) = h.alloc_pure(v.clone());
                vec![("refine-unknown", Ok(Expr::Val(Value::Addr(a))), h2)]
            }
            Expr::Var(x) => panic!("free variable {x} reached evaluation"),
            Expr::Ref(f, l) => vec![self.reference(f, l, h)],
            Expr::Blame(p, s) => vec![("halt-blame", Err((p.clone(), s.clone())), h.clone())],
            Expr::Assume(v, c) => {
                let (h2, v2) = refine(h, v, c);
                vec![("assume", Ok(Expr::Val(v2)), h2)]
            }
            Expr::App(f, a, l) => self.apply(&val_of(f), &val_of(a), l, h),
            Expr::Prim(o, args, l) => {
                let vs: Vec<Value> = args.iter().map(val_of).collect();
                delta(or, h, *o, &vs, l)
                    .into_iter()
                    .map(|(ans, h2)| match ans {
                        Answer::Val(v) => ("apply-primitive", Ok(Expr::Val(v)), h2),
                        Answer::Blame(p, s) => ("apply-primitive", Err((p, s)), h2),
                    })
                    .collect()
            }
            Expr::If(c, t, f) => split(or, h, &val_of(c), Op::FalseP)
                .into_iter()
                .map(|(is_false, h2)| {
                    if is_false {
                        ("if-false", Ok((**f).clone()), h2)
                    } else {
                        ("if-true", Ok((**t).clone()), h2)
                    }
                })
                .collect(),
            Expr::DepCon(c, x, d) => {
                let v = Value::pre(PreValue::DepCon(val_of(c), x.clone(), d.clone()));
                vec![("refine-concrete", Ok(Expr::Val(v)), h.clone())]
            }
            Expr::Mon(c, ls, v) => self.monitor(&val_of(c), ls, &val_of(v), h),
            Expr::Rt(..) | Expr::Blur(..) => panic!("summarization mark outside summarizing evaluation"),
        }
    }

    fn reference(&self, f: &Name, l: &Label, h: &Heap) -> Reduct {
        if &**f == HAVOC {
            return ("module-self-reference", Ok(Expr::Val(havoc_value())), h.clone());
        }
        let m = self.prog.module(f).unwrap_or_else(|| panic!("unbound module {f}"));
        let body = m.body.clone().unwrap_or_else(|| Expr::Val(Value::opaque()));
        if *l == Label::Mod(f.clone()) {
            return ("module-self-reference", Ok(body), h.clone());
        }
        let me = Label::Mod(f.clone());
        let ls = MonLabels::new(me.clone(), l.clone(), me);
        ("module-external-reference", Ok(Expr::mon(m.contract.clone(), ls, body)), h.clone())
    }

    fn apply(&self, f: &Value, a: &Value, l: &Label, h: &Heap) -> Vec<Reduct> {
        let target = h.deref(f);
        match target.pre_value() {
            Some(PreValue::Lam(x, b)) => vec![("apply-function", Ok(subst(a, x, b)), h.clone())],
            Some(PreValue::NegPred(o)) => {
                let e = Expr::prim(Op::FalseP, vec![Expr::prim(*o, vec![Expr::Val(a.clone())], l.clone())], l.clone());
                vec![("apply-function", Ok(e), h.clone())]
            }
            _ => {
                let mut out = Vec::new();
                for (is_proc, h1) in split(self.oracle, h, f, Op::ProcP) {
                    if !is_proc {
                        out.push(("apply-non-function", Err((l.clone(), Label::Lang)), h1));
                        continue;
                    }
                    let (h2, r) = h1.alloc_pure(Value::opaque());
                    out.push(("apply-unknown", Ok(Expr::Val(Value::Addr(r))), h2));
                    let probe = Expr::app(Expr::Val(havoc_value()), Expr::Val(a.clone()), Label::Havoc);
                    out.push(("havoc", Ok(probe), h1));
                }
                out
            }
        }
    }

    fn monitor(&self, c: &Value, ls: &MonLabels, v: &Value, h: &Heap) -> Vec<Reduct> {
        let blame = || Err((ls.pos.clone(), ls.src.clone()));
        let mut out = Vec::new();
        for (is_dep, h1) in split(self.oracle, h, c, Op::DepP) {
            if !is_dep {
                match self.oracle.check(&h1, v, c) {
                    Proof::Proved => out.push(("monitor-proved", Ok(Expr::Val(v.clone())), h1)),
                    Proof::Refuted => out.push(("monitor-refuted", blame(), h1)),
                    Proof::Ambiguous => {
                        let e = Expr::if_(
                            Expr::app(Expr::Val(c.clone()), Expr::Val(v.clone()), ls.src.clone()),
                            Expr::Assume(v.clone(), c.clone()),
                            Expr::Blame(ls.pos.clone(), ls.src.clone()),
                        );
                        out.push(("monitor-flat", Ok(e), h1));
                    }
                }
                continue;
            }
            let Some(PreValue::DepCon(dom, x, rng)) = h1.deref(c).pre_value().cloned() else {
                // A contract known to be dependent without known structure.
                out.push(("monitor-unknown-function-contract", Ok(Expr::Val(v.clone())), h1.clone()));
                out.push(("monitor-unknown-function-contract", blame(), h1));
                continue;
            };
            let rule = if matches!(c, Value::Addr(_)) {
                "monitor-unknown-function-contract"
            } else {
                "monitor-function-contract"
            };
            for (is_proc, h2) in split(self.oracle, &h1, v, Op::ProcP) {
                if !is_proc {
                    out.push(("monitor-non-function", blame(), h2));
                    continue;
                }
                let arg = Expr::mon(Expr::Val(dom.clone()), ls.swapped(), Expr::Var(x.clone()));
                let call = Expr::app(Expr::Val(v.clone()), arg, ls.src.clone());
                let wrapped = Value::lam(&x, Expr::mon((*rng).clone(), ls.clone(), call));
                out.push((rule, Ok(Expr::Val(wrapped)), h2));
            }
        }
        out
    }
}

fn finish(frames: &[Frame], r: Result<Expr, (Label, Label)>, h: Heap) -> State {
    match r {
        Ok(e) => State::Running(plug(frames, e), h),
        Err((p, s)) => State::Blamed(p, s),
    }
}

// ---------------------------------------------------------------------------
// Exploration

#[derive(Clone, Debug)]
pub struct EvalOptions {
    /// Maximum number of state expansions.
    pub budget: usize,
    pub summarize: bool,
    /// Seed the run with havoc applied to every concrete module.
    pub havoc: bool,
    pub jobs: usize,
    pub blur: BlurReading,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { budget: 100_000, summarize: true, havoc: true, jobs: 1, blur: BlurReading::Pairwise }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TraceStep {
    pub rule: String,
    pub expr: String,
}

#[derive(Clone, Debug)]
pub struct ReachResult {
    pub finals: BTreeSet<State>,
    pub blames: BTreeSet<(Label, Label)>,
    pub exhausted: bool,
    pub expansions: usize,
    pub states: usize,
    /// Shortest known trace to each blame.
    pub witnesses: BTreeMap<(Label, Label), Vec<TraceStep>>,
    pub tables: Option<Tables>,
}

const TRACE_LIMIT: usize = 200;

struct Node {
    state: Arc<State>,
    parent: Option<usize>,
    rule: Rule,
}

/// The program's initial expression: optionally havoc every concrete module,
/// then run the top-level expression.
pub fn seed(p: &Program, havoc: bool) -> Expr {
    let mut choices: Vec<Expr> = vec![Expr::Val(Value::bool(true))];
    if havoc {
        for m in p.modules.iter().filter(|m| !m.is_opaque()) {
            choices.push(Expr::app(
                Expr::Ref(name(HAVOC), Label::Havoc),
                Expr::Ref(m.name.clone(), Label::Havoc),
                Label::Havoc,
            ));
        }
    }
    let mut amb = choices.pop().expect("nonempty");
    while let Some(c) = choices.pop() {
        amb = Expr::if_(Expr::Val(Value::opaque()), c, amb);
    }
    Expr::app(Expr::Val(Value::lam("_", p.top.clone())), amb, Label::Top)
}

fn trace_of(nodes: &[Node], mut i: usize) -> Vec<TraceStep> {
    let mut out = Vec::new();
    loop {
        let n = &nodes[i];
        let expr = match &*n.state {
            State::Running(e, _) => show_expr(e),
            State::Blamed(p, s) => format!("(blame {p} {s})"),
        };
        out.push(TraceStep { rule: n.rule.to_string(), expr });
        match n.parent {
            Some(p) => i = p,
            None => break,
        }
    }
    out.reverse();
    if out.len() > TRACE_LIMIT {
        out.truncate(TRACE_LIMIT);
    }
    out
}

pub fn eval(p: &Program, oracle: &dyn Oracle, opts: &EvalOptions) -> ReachResult {
    eval_from(p, oracle, opts, State::Running(seed(p, opts.havoc), Heap::new()))
}

pub fn eval_from(p: &Program, oracle: &dyn Oracle, opts: &EvalOptions, init: State) -> ReachResult {
    let m = Machine::new(p, oracle);
    let mut tables = opts.summarize.then(Tables::default);
    let init = Arc::new(canonicalize(&init));
    let mut nodes = vec![Node { state: init.clone(), parent: None, rule: "seed" }];
    let mut visited: HashMap<Arc<State>, usize> = HashMap::default();
    visited.insert(init, 0);
    let mut frontier: VecDeque<usize> = VecDeque::from([0]);
    let mut res = ReachResult {
        finals: BTreeSet::new(),
        blames: BTreeSet::new(),
        exhausted: false,
        expansions: 0,
        states: 1,
        witnesses: BTreeMap::new(),
        tables: None,
    };
    let pool = (opts.jobs > 1 && !opts.summarize)
        .then(|| rayon::ThreadPoolBuilder::new().num_threads(opts.jobs).build().expect("thread pool"));

    while !frontier.is_empty() {
        if res.expansions >= opts.budget {
            res.exhausted = true;
            break;
        }
        let take = if pool.is_some() { frontier.len().min(opts.budget - res.expansions) } else { 1 };
        let batch: Vec<usize> = frontier.drain(..take).collect();
        let states: Vec<Arc<State>> = batch.iter().map(|i| nodes[*i].state.clone()).collect();
        let succs: Vec<Vec<(Rule, State)>> = match (&pool, &mut tables) {
            (_, Some(t)) => states.iter().map(|s| summarize::step(&m, t, s, opts)).collect(),
            (Some(pool), None) => pool.install(|| {
                states.par_iter().map(|s| canon_all(m.step(s))).collect()
            }),
            (None, None) => states.iter().map(|s| canon_all(m.step(s))).collect(),
        };
        for (parent, out) in batch.into_iter().zip(succs) {
            res.expansions += 1;
            for (rule, s) in out {
                let s = Arc::new(if tables.is_some() { canonicalize_owned(s) } else { s });
                let idx = nodes.len();
                match visited.entry(s.clone()) {
                    Entry::Occupied(_) => continue,
                    Entry::Vacant(slot) => {
                        slot.insert(idx);
                    }
                }
                nodes.push(Node { state: s.clone(), parent: Some(parent), rule });
                res.states += 1;
                if s.is_terminal() {
                    if let State::Blamed(p, src) = &*s {
                        if res.blames.insert((p.clone(), src.clone())) {
                            res.witnesses.insert((p.clone(), src.clone()), trace_of(&nodes, idx));
                        }
                    }
                    res.finals.insert((*s).clone());
                } else {
                    frontier.push_back(idx);
                }
            }
        }
    }
    res.tables = tables;
    res
}

fn canon_all(v: Vec<(Rule, State)>) -> Vec<(Rule, State)> {
    v.into_iter().map(|(r, s)| (r, canonicalize_owned(s))).collect()
}

// ---------------------------------------------------------------------------
// Verdicts

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Verdict {
    Verified,
    Blamed { src: String, trace: Vec<TraceStep> },
    Unknown { reason: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ModuleVerdict {
    pub module: String,
    #[serde(flatten)]
    pub verdict: Verdict,
}

/// Whether a blame says something about a concrete module of `p`.
pub fn blame_counts(p: &Program, pos: &Label) -> bool {
    match pos {
        Label::Mod(f) => p.module(f).is_some_and(|m| !m.is_opaque()),
        _ => false,
    }
}

pub fn verdicts(p: &Program, r: &ReachResult) -> Vec<ModuleVerdict> {
    p.modules
        .iter()
        .filter(|m| !m.is_opaque())
        .map(|m| {
            let me = Label::Mod(m.name.clone());
            let hit = r.blames.iter().find(|(pos, _)| *pos == me);
            let verdict = match hit {
                Some(k) => Verdict::Blamed { src: k.1.to_string(), trace: r.witnesses.get(k).cloned().unwrap_or_default() },
                None if r.exhausted => Verdict::Unknown { reason: "budget exhausted".into() },
                None => Verdict::Verified,
            };
            ModuleVerdict { module: m.name.to_string(), verdict }
        })
        .collect()
}

pub fn verify(p: &Program, oracle: &dyn Oracle, opts: &EvalOptions) -> (Vec<ModuleVerdict>, ReachResult) {
    let r = eval(p, oracle, opts);
    (verdicts(p, &r), r)
}

/// Terminal values of a result, ignoring heaps.
pub fn final_values(r: &ReachResult) -> Vec<&Value> {
    r.finals
        .iter()
        .filter_map(|s| match s {
            State::Running(Expr::Val(v), _) => Some(v),
            _ => None,
        })
        .collect()
}

