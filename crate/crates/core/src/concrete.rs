//! Reference interpreter for programs without unknown values. It shares
//! only the syntax with the symbolic machine, so the two can check each other.

use std::collections::{BTreeMap, BTreeSet};

use crate::eval::ReachResult;
use crate::heap::{Heap, State};
use crate::syntax::*;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Value(Value),
    Blame(Label, Label),
    /// Ran out of fuel.
    Timeout,
}

enum Stop {
    Blame(Label, Label),
    Fuel,
}

/// Primitive operations on concrete values; `None` is a primitive error.
pub fn delta(o: Op, args: &[Value]) -> Option<Value> {
    let int = |v: &Value| v.as_int();
    let p = |v: &Value| v.pre_value().cloned();
    let b = Value::bool;
    Some(match (o, args) {
        (Op::IntP, [v]) => b(matches!(p(v)?, PreValue::Int(_))),
        (Op::FalseP, [v]) => b(matches!(p(v)?, PreValue::Bool(false))),
        (Op::ConsP, [v]) => b(matches!(p(v)?, PreValue::Cons(..))),
        (Op::EmptyP, [v]) => b(matches!(p(v)?, PreValue::Empty)),
        (Op::ProcP, [v]) => b(matches!(p(v)?, PreValue::Lam(..) | PreValue::NegPred(_))),
        (Op::DepP, [v]) => b(matches!(p(v)?, PreValue::DepCon(..))),
        (Op::Cons, [x, y]) => Value::cons(x.clone(), y.clone()),
        (Op::Car, [v]) => match p(v)? {
            PreValue::Cons(x, _) => x,
            _ => return None,
        },
        (Op::Cdr, [v]) => match p(v)? {
            PreValue::Cons(_, y) => y,
            _ => return None,
        },
        (Op::Add1, [v]) => Value::int(int(v)?.wrapping_add(1)),
        (Op::Add, [x, y]) => Value::int(int(x)?.wrapping_add(int(y)?)),
        (Op::Sub, [x, y]) => Value::int(int(x)?.wrapping_sub(int(y)?)),
        (Op::Mul, [x, y]) => Value::int(int(x)?.wrapping_mul(int(y)?)),
        (Op::Eq, [x, y]) => b(int(x)? == int(y)?),
        (Op::Gt, [x, y]) => b(int(x)? > int(y)?),
        (Op::Lt, [x, y]) => b(int(x)? < int(y)?),
        (Op::Ge, [x, y]) => b(int(x)? >= int(y)?),
        (Op::Le, [x, y]) => b(int(x)? <= int(y)?),
        _ => return None,
    })
}

/// Runs the top-level expression of `p` with at most `fuel` reductions.
pub fn run(p: &Program, fuel: usize) -> Outcome {
    let p = p.clone();
    // Deeply recursive programs need more stack than the default thread has.
    std::thread::Builder::new()
        .stack_size(512 << 20)
        .spawn(move || {
            let mut i = Interp { p: &p, fuel };
            match i.eval(&p.top) {
                Ok(v) => Outcome::Value(v),
                Err(Stop::Blame(a, b)) => Outcome::Blame(a, b),
                Err(Stop::Fuel) => Outcome::Timeout,
            }
        })
        .expect("interpreter thread")
        .join()
        .expect("interpreter panicked")
}

/// Like [`run`] but on the calling thread; for short runs.
pub fn run_here(p: &Program, fuel: usize) -> Outcome {
    let mut i = Interp { p, fuel };
    match i.eval(&p.top) {
        Ok(v) => Outcome::Value(v),
        Err(Stop::Blame(a, b)) => Outcome::Blame(a, b),
        Err(Stop::Fuel) => Outcome::Timeout,
    }
}

/// The interpreter's answer in the evaluator's result format: one final
/// state, or none and `exhausted` when fuel runs out.
pub fn interpret(p: &Program, fuel: usize) -> ReachResult {
    let mut r = ReachResult {
        finals: BTreeSet::new(),
        blames: BTreeSet::new(),
        exhausted: false,
        expansions: 0,
        states: 0,
        witnesses: BTreeMap::new(),
        tables: None,
    };
    match run(p, fuel) {
        Outcome::Value(v) => {
            r.finals.insert(State::Running(Expr::Val(v), Heap::new()));
        }
        Outcome::Blame(a, b) => {
            r.blames.insert((a.clone(), b.clone()));
            r.finals.insert(State::Blamed(a, b));
        }
        Outcome::Timeout => r.exhausted = true,
    }
    r
}

struct Interp<'a> {
    p: &'a Program,
    fuel: usize,
}

impl Interp<'_> {
    fn tick(&mut self) -> Result<(), Stop> {
        if self.fuel == 0 {
            return Err(Stop::Fuel);
        }
        self.fuel -= 1;
        Ok(())
    }

    fn eval(&mut self, e: &Expr) -> Result<Value, Stop> {
        self.tick()?;
        match e {
            Expr::Val(v) => {
                assert!(v.is_reduced(), "unknown value in a concrete program");
                Ok(v.clone())
            }
            Expr::Var(x) => panic!("free variable {x}"),
            Expr::Ref(f, l) => {
                let m = self.p.module(f).unwrap_or_else(|| panic!("unbound module {f}"));
                let body = m.body.clone().expect("opaque module in a concrete program");
                if *l == Label::Mod(f.clone()) {
                    return self.eval(&body);
                }
                let me = Label::Mod(f.clone());
                let c = self.eval(&m.contract)?;
                let v = self.eval(&body)?;
                self.monitor(&c, &MonLabels::new(me.clone(), l.clone(), me), v)
            }
            Expr::App(f, a, l) => {
                let fv = self.eval(f)?;
                let av = self.eval(a)?;
                self.apply(&fv, av, l)
            }
            Expr::Prim(o, args, l) => {
                let mut vs = Vec::with_capacity(args.len());
                for a in args {
                    vs.push(self.eval(a)?);
                }
                delta(*o, &vs).ok_or_else(|| Stop::Blame(l.clone(), Label::Lang))
            }
            Expr::If(c, t, f) => {
                if self.eval(c)?.is_false() {
                    self.eval(f)
                } else {
                    self.eval(t)
                }
            }
            Expr::DepCon(c, x, d) => {
                let cv = self.eval(c)?;
                Ok(Value::pre(PreValue::DepCon(cv, x.clone(), d.clone())))
            }
            Expr::Mon(c, ls, b) => {
                let cv = self.eval(c)?;
                let v = self.eval(b)?;
                self.monitor(&cv, ls, v)
            }
            Expr::Blame(p, s) => Err(Stop::Blame(p.clone(), s.clone())),
            Expr::Assume(v, _) => Ok(v.clone()),
            Expr::Rt(..) | Expr::Blur(..) => panic!("summarization mark in a concrete program"),
        }
    }

    fn apply(&mut self, f: &Value, a: Value, l: &Label) -> Result<Value, Stop> {
        match f.pre_value() {
            Some(PreValue::Lam(x, b)) => {
                let body = subst(&a, x, b);
                self.eval(&body)
            }
            Some(PreValue::NegPred(o)) => {
                let r = delta(*o, &[a]).ok_or_else(|| Stop::Blame(l.clone(), Label::Lang))?;
                Ok(Value::bool(r.is_false()))
            }
            _ => Err(Stop::Blame(l.clone(), Label::Lang)),
        }
    }

    fn monitor(&mut self, c: &Value, ls: &MonLabels, v: Value) -> Result<Value, Stop> {
        let blame = || Stop::Blame(ls.pos.clone(), ls.src.clone());
        if let Some(PreValue::DepCon(dom, x, rng)) = c.pre_value() {
            if !matches!(v.pre_value(), Some(PreValue::Lam(..) | PreValue::NegPred(_))) {
                return Err(blame());
            }
            let arg = Expr::mon(Expr::Val(dom.clone()), ls.swapped(), Expr::Var(x.clone()));
            let call = Expr::app(Expr::Val(v), arg, ls.src.clone());
            return Ok(Value::lam(x, Expr::mon((**rng).clone(), ls.clone(), call)));
        }
        let ok = self.apply(c, v.clone(), &ls.src)?;
        if ok.is_false() {
            Err(blame())
        } else {
            Ok(v)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_program;

    fn out(src: &str) -> Outcome {
        run(&parse_program(src).unwrap(), 10_000)
    }

    #[test]
    fn arithmetic_and_lists() {
        assert_eq!(out("(top (+ 2 (car (cons 3 empty))))"), Outcome::Value(Value::int(5)));
        assert_eq!(out("(top (car empty))"), Outcome::Blame(Label::Top, Label::Lang));
    }

    #[test]
    fn contract_blames_the_module() {
        let src = "(module f (-> int? pos?) (lambda (x) 0)) (top (f 3))";
        assert_eq!(out(src), Outcome::Blame(Label::module("f"), Label::module("f")));
        let src = "(module f (-> int? pos?) (lambda (x) 1)) (top (f true))";
        assert_eq!(out(src), Outcome::Blame(Label::Top, Label::module("f")));
    }

    #[test]
    fn recursion_and_fuel() {
        let fact = "(module fact any (lambda (n) (if (= n 0) 1 (* n (fact (- n 1)))))) (top (fact 5))";
        assert_eq!(out(fact), Outcome::Value(Value::int(120)));
        let spin = "(module f any (lambda (n) (f n))) (top (f 1))";
        assert_eq!(out(spin), Outcome::Timeout);
    }
}
