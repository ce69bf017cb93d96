//! Translation of integer refinements to solver formulas, and a solver
//! session speaking SMT-LIB over a child process.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver};
use std::sync::Mutex;
use std::time::Duration;

use crate::heap::Heap;
use crate::proof::{basic_atom, check, check_with, int_of, Oracle, Proof};
use crate::shape::{atom_of, facts, pred, Atom};
use crate::syntax::*;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Const(Addr),
    Int(i64),
    Bin(Op, Box<Term>, Box<Term>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    /// `lhs ⋈ rhs` for a comparison operator.
    Cmp(Op, Term, Term),
    Not(Box<Formula>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Sat,
    Unsat,
    Unknown,
}

impl Term {
    fn consts(&self, out: &mut BTreeSet<Addr>) {
        match self {
            Term::Const(a) => {
                out.insert(*a);
            }
            Term::Int(_) => {}
            Term::Bin(_, a, b) => {
                a.consts(out);
                b.consts(out);
            }
        }
    }

    pub fn eval(&self, env: &dyn Fn(Addr) -> i64) -> i64 {
        match self {
            Term::Const(a) => env(*a),
            Term::Int(n) => *n,
            Term::Bin(o, a, b) => o.eval_arith(a.eval(env), b.eval(env)),
        }
    }

    fn smt(&self, s: &mut String) {
        match self {
            Term::Const(a) => write!(s, "L{a}").unwrap(),
            Term::Int(n) if *n < 0 => write!(s, "(- {})", (*n as i128).abs()).unwrap(),
            Term::Int(n) => write!(s, "{n}").unwrap(),
            Term::Bin(o, a, b) => {
                write!(s, "({} ", o.name()).unwrap();
                a.smt(s);
                s.push(' ');
                b.smt(s);
                s.push(')');
            }
        }
    }
}

impl Formula {
    pub fn consts(&self, out: &mut BTreeSet<Addr>) {
        match self {
            Formula::Cmp(_, a, b) => {
                a.consts(out);
                b.consts(out);
            }
            Formula::Not(f) => f.consts(out),
        }
    }

    pub fn eval(&self, env: &dyn Fn(Addr) -> i64) -> bool {
        match self {
            Formula::Cmp(o, a, b) => o.eval_cmp(a.eval(env), b.eval(env)),
            Formula::Not(f) => !f.eval(env),
        }
    }

    pub fn smt(&self) -> String {
        let mut s = String::new();
        self.smt_into(&mut s);
        s
    }

    fn smt_into(&self, s: &mut String) {
        match self {
            Formula::Cmp(o, a, b) => {
                write!(s, "({} ", o.name()).unwrap();
                a.smt(s);
                s.push(' ');
                b.smt(s);
                s.push(')');
            }
            Formula::Not(f) => {
                s.push_str("(not ");
                f.smt_into(s);
                s.push(')');
            }
        }
    }
}

fn term_of(h: &Heap, v: &Value) -> Option<Term> {
    if let Some(n) = int_of(h, v) {
        return Some(Term::Int(n));
    }
    match v {
        Value::Addr(a) => Some(Term::Const(*a)),
        _ => None,
    }
}

/// Formula stating that `subject` satisfies `a`, when the atom is integral.
pub fn translate_atom(h: &Heap, subject: &Term, a: &Atom) -> Option<Formula> {
    match a {
        Atom::Cmp(o, k) => Some(Formula::Cmp(*o, subject.clone(), term_of(h, k)?)),
        Atom::Neq(k) => Some(Formula::Not(Box::new(Formula::Cmp(Op::Eq, subject.clone(), term_of(h, k)?)))),
        Atom::Arith(o, x, y) => Some(Formula::Cmp(
            Op::Eq,
            subject.clone(),
            Term::Bin(*o, Box::new(term_of(h, x)?), Box::new(term_of(h, y)?)),
        )),
        Atom::Pred(_) | Atom::NotPred(_) => None,
    }
}

/// The assertion for "address `l` satisfies contract `c`", if `c` has a
/// supported shape.
pub fn translate_refinement(l: Addr, c: &Value, h: &Heap) -> Option<Formula> {
    translate_atom(h, &Term::Const(l), &atom_of(c)?)
}

/// Conjunction of everything the heap says about integers.
pub fn heap_formulas(h: &Heap) -> Vec<Formula> {
    let mut out = Vec::new();
    for (a, v) in h.iter() {
        let Value::Refined(p, set) = v else { continue };
        if let PreValue::Int(n) = **p {
            out.push(Formula::Cmp(Op::Eq, Term::Const(*a), Term::Int(n)));
        }
        for f in facts(set) {
            if let Some(f) = translate_atom(h, &Term::Const(*a), &f) {
                out.push(f);
            }
        }
    }
    out
}

pub trait Solver: Send {
    /// Satisfiability of the conjunction of `fs` over integer constants.
    fn check_sat(&mut self, fs: &[Formula]) -> Verdict;
}

/// Always answers Unknown.
pub struct NoSolver;

impl Solver for NoSolver {
    fn check_sat(&mut self, _fs: &[Formula]) -> Verdict {
        Verdict::Unknown
    }
}

pub fn smt_query(fs: &[Formula]) -> String {
    let mut consts = BTreeSet::new();
    for f in fs {
        f.consts(&mut consts);
    }
    let mut s = String::new();
    for c in &consts {
        writeln!(s, "(declare-const L{c} Int)").unwrap();
    }
    for f in fs {
        writeln!(s, "(assert {})", f.smt()).unwrap();
    }
    s
}

/// A solver reached through a child process's standard streams.
pub struct ProcessSolver {
    cmd: Vec<String>,
    timeout: Duration,
    proc: Option<(Child, ChildStdin, Receiver<String>)>,
    pub failures: usize,
}

impl ProcessSolver {
    pub fn new(cmd: &str, timeout: Duration) -> ProcessSolver {
        ProcessSolver { cmd: cmd.split_whitespace().map(String::from).collect(), timeout, proc: None, failures: 0 }
    }

    fn start(&mut self) -> std::io::Result<()> {
        let (prog, args) = self
            .cmd
            .split_first()
            .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "empty solver command"))?;
        let mut child =
            Command::new(prog).args(args).stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::null()).spawn()?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        writeln!(stdin, "(set-option :print-success false)")?;
        writeln!(stdin, "(set-option :timeout {})", self.timeout.as_millis())?;
        stdin.flush()?;
        self.proc = Some((child, stdin, rx));
        Ok(())
    }

    fn stop(&mut self) {
        if let Some((mut child, _, _)) = self.proc.take() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }

    fn query(&mut self, text: &str) -> Result<Verdict, String> {
        if self.proc.is_none() {
            self.start().map_err(|e| format!("cannot start solver `{}`: {e}", self.cmd.join(" ")))?;
        }
        let (_, stdin, rx) = self.proc.as_mut().expect("started");
        let send = |stdin: &mut ChildStdin| -> std::io::Result<()> {
            writeln!(stdin, "(push 1)")?;
            stdin.write_all(text.as_bytes())?;
            writeln!(stdin, "(check-sat)")?;
            writeln!(stdin, "(pop 1)")?;
            writeln!(stdin, "(echo \"scv-done\")")?;
            stdin.flush()
        };
        send(stdin).map_err(|e| format!("solver write failed: {e}"))?;
        let mut verdict = None;
        // Allow the solver's own timeout to fire before giving up on it.
        let wait = self.timeout + Duration::from_millis(1000);
        loop {
            let line = rx.recv_timeout(wait).map_err(|_| "solver did not answer in time".to_string())?;
            match line.trim() {
                "sat" => verdict = Some(Verdict::Sat),
                "unsat" => verdict = Some(Verdict::Unsat),
                "unknown" => verdict = Some(Verdict::Unknown),
                "scv-done" => break,
                _ => {}
            }
        }
        verdict.ok_or_else(|| "solver gave no verdict".to_string())
    }
}

impl Solver for ProcessSolver {
    fn check_sat(&mut self, fs: &[Formula]) -> Verdict {
        match self.query(&smt_query(fs)) {
            Ok(v) => v,
            Err(e) => {
                self.failures += 1;
                log::warn!("{e}; treating query as unknown");
                self.stop();
                Verdict::Unknown
            }
        }
    }
}

impl Drop for ProcessSolver {
    fn drop(&mut self) {
        self.stop();
    }
}

struct Session {
    solver: Box<dyn Solver>,
    cache: HashMap<String, Verdict>,
    queries: usize,
}

/// The solver-backed relation: the basic relation, then a solver query for
/// integer atoms it leaves ambiguous.
pub struct Smt {
    session: Mutex<Session>,
    enabled: bool,
}

impl Smt {
    pub fn new(solver: Box<dyn Solver>) -> Smt {
        Smt { session: Mutex::new(Session { solver, cache: HashMap::new(), queries: 0 }), enabled: true }
    }

    pub fn none() -> Smt {
        Smt { enabled: false, ..Smt::new(Box::new(NoSolver)) }
    }

    /// From a command line; `none` disables solving.
    pub fn from_command(cmd: &str) -> Smt {
        if cmd.trim() == "none" {
            Smt::none()
        } else {
            Smt::new(Box::new(ProcessSolver::new(cmd, Duration::from_millis(2000))))
        }
    }

    pub fn queries(&self) -> usize {
        self.session.lock().expect("solver lock").queries
    }

    fn sat(&self, fs: &[Formula]) -> Verdict {
        let key = smt_query(fs);
        let mut s = self.session.lock().expect("solver lock");
        if let Some(v) = s.cache.get(&key) {
            return *v;
        }
        s.queries += 1;
        let v = s.solver.check_sat(fs);
        s.cache.insert(key, v);
        v
    }

    fn solver_atom(&self, h: &Heap, v: &Value, a: &Atom) -> Proof {
        if !matches!(a, Atom::Cmp(..) | Atom::Neq(_) | Atom::Arith(..)) {
            return Proof::Ambiguous;
        }
        if check(h, v, &pred(Op::IntP)) != Proof::Proved {
            return Proof::Ambiguous;
        }
        let operands_int = match a {
            Atom::Cmp(_, k) | Atom::Neq(k) => vec![k],
            Atom::Arith(_, x, y) => vec![x, y],
            _ => vec![],
        }
        .into_iter()
        .all(|k| check(h, k, &pred(Op::IntP)) == Proof::Proved);
        if !operands_int {
            return Proof::Ambiguous;
        }
        let Some(subject) = term_of(h, v) else { return Proof::Ambiguous };
        let Some(goal) = translate_atom(h, &subject, a) else { return Proof::Ambiguous };
        let phi = heap_formulas(h);
        let mut neg = phi.clone();
        neg.push(Formula::Not(Box::new(goal.clone())));
        if self.sat(&neg) == Verdict::Unsat {
            return Proof::Proved;
        }
        let mut pos = phi;
        pos.push(goal);
        if self.sat(&pos) == Verdict::Unsat {
            return Proof::Refuted;
        }
        Proof::Ambiguous
    }
}

impl Oracle for Smt {
    fn check(&self, h: &Heap, v: &Value, c: &Value) -> Proof {
        let basic = check(h, v, c);
        if basic != Proof::Ambiguous || !self.enabled {
            return basic;
        }
        check_with(h, v, c, &mut |h, v, a| match basic_atom(h, v, a, 0) {
            Proof::Ambiguous => self.solver_atom(h, v, a),
            r => r,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shape::atom_contract;

    #[test]
    fn translation_of_supported_shapes() {
        let h = Heap::new();
        let gt = atom_contract(&Atom::Cmp(Op::Gt, Value::int(5)));
        assert_eq!(translate_refinement(1, &gt, &h), Some(Formula::Cmp(Op::Gt, Term::Const(1), Term::Int(5))));
        let sum = atom_contract(&Atom::Arith(Op::Add, Value::Addr(1), Value::Addr(2)));
        assert_eq!(
            translate_refinement(0, &sum, &h),
            Some(Formula::Cmp(
                Op::Eq,
                Term::Const(0),
                Term::Bin(Op::Add, Box::new(Term::Const(1)), Box::new(Term::Const(2)))
            ))
        );
        assert_eq!(translate_refinement(0, &pred(Op::IntP), &h), None);
    }

    #[test]
    fn smt_text() {
        let f = Formula::Not(Box::new(Formula::Cmp(Op::Ge, Term::Const(3), Term::Int(-2))));
        assert_eq!(f.smt(), "(not (>= L3 (- 2)))");
        assert_eq!(smt_query(&[f]), "(declare-const L3 Int)\n(assert (not (>= L3 (- 2))))\n");
    }

    #[test]
    fn disabled_solver_is_basic() {
        let h = Heap::from_entries([(0, Value::opaque_with([pred(Op::IntP)].into()))]);
        let c = atom_contract(&Atom::Cmp(Op::Gt, Value::int(0)));
        assert_eq!(Smt::none().check(&h, &Value::Addr(0), &c), Proof::Ambiguous);
        assert_eq!(Smt::none().check(&Heap::new(), &Value::int(5), &pred(Op::IntP)), Proof::Proved);
    }
}
