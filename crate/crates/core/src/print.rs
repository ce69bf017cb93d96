//! S-expression printer for core terms.
//!
//! Desugared programs print to text that parses back to the same program.

use std::fmt::{self, Write};

use crate::shape::{atom_contract, atom_of, Atom};
use crate::syntax::*;

pub fn show_expr(e: &Expr) -> String {
    let mut s = String::new();
    expr(&mut s, e).unwrap();
    s
}

pub fn show_value(v: &Value) -> String {
    let mut s = String::new();
    value(&mut s, v).unwrap();
    s
}

pub fn show_program(p: &Program) -> String {
    let mut s = String::new();
    for m in &p.modules {
        let body = match &m.body {
            Some(b) => show_expr(b),
            None => "opaque".to_string(),
        };
        writeln!(s, "(module {} {} {})", m.name, show_expr(&m.contract), body).unwrap();
    }
    writeln!(s, "(top {})", show_expr(&p.top)).unwrap();
    s
}

fn expr(s: &mut String, e: &Expr) -> fmt::Result {
    match e {
        Expr::Val(v) => value(s, v),
        Expr::Var(x) => write!(s, "{x}"),
        Expr::Ref(f, _) => write!(s, "{f}"),
        Expr::App(f, a, _) => {
            s.push('(');
            match &**f {
                // A bare predicate name in head position would read back as a primitive application.
                Expr::Val(v) if matches!(atom_of(v), Some(Atom::Pred(_))) && atom_contract(&atom_of(v).unwrap()) == *v => {
                    write!(s, "(pred {})", show_value(v))?
                }
                _ => expr(s, f)?,
            }
            s.push(' ');
            expr(s, a)?;
            s.push(')');
            Ok(())
        }
        Expr::Prim(o, args, _) => {
            write!(s, "({}", o.name())?;
            for a in args {
                s.push(' ');
                expr(s, a)?;
            }
            s.push(')');
            Ok(())
        }
        Expr::If(c, t, f) => {
            s.push_str("(if ");
            expr(s, c)?;
            s.push(' ');
            expr(s, t)?;
            s.push(' ');
            expr(s, f)?;
            s.push(')');
            Ok(())
        }
        Expr::DepCon(c, x, d) => {
            s.push_str("(->d ");
            expr(s, c)?;
            write!(s, " (lambda ({x}) ")?;
            expr(s, d)?;
            s.push_str("))");
            Ok(())
        }
        Expr::Mon(c, ls, b) => {
            s.push_str("(mon ");
            expr(s, c)?;
            write!(s, " {} {} {} ", ls.pos, ls.neg, ls.src)?;
            expr(s, b)?;
            s.push(')');
            Ok(())
        }
        Expr::Blame(p, src) => write!(s, "(blame {p} {src})"),
        Expr::Assume(v, c) => {
            s.push_str("(assume ");
            value(s, v)?;
            s.push(' ');
            value(s, c)?;
            s.push(')');
            Ok(())
        }
        Expr::Rt(m, b) => {
            s.push_str("(rt ");
            value(s, &m.f)?;
            s.push(' ');
            value(s, &m.arg)?;
            s.push(' ');
            expr(s, b)?;
            s.push(')');
            Ok(())
        }
        Expr::Blur(m, b) => {
            s.push_str("(blur ");
            value(s, &m.prev)?;
            s.push(' ');
            expr(s, b)?;
            s.push(')');
            Ok(())
        }
    }
}

fn value(s: &mut String, v: &Value) -> fmt::Result {
    match v {
        Value::Addr(a) => write!(s, "L{a}"),
        Value::Refined(p, set) => {
            pre(s, v, p)?;
            if !set.is_empty() {
                s.push_str("/{");
                for (i, c) in set.iter().enumerate() {
                    if i > 0 {
                        s.push_str(", ");
                    }
                    value(s, c)?;
                }
                s.push('}');
            }
            Ok(())
        }
    }
}

fn pre(s: &mut String, whole: &Value, p: &PreValue) -> fmt::Result {
    let bare = whole.bare();
    if let Some(a) = atom_of(&bare) {
        if atom_contract(&a) == bare && atom(s, &a)? {
            return Ok(());
        }
    }
    match p {
        PreValue::Lam(x, b) => {
            write!(s, "(lambda ({x}) ")?;
            expr(s, b)?;
            s.push(')');
            Ok(())
        }
        PreValue::Int(n) => write!(s, "{n}"),
        PreValue::Bool(b) => write!(s, "{b}"),
        PreValue::Empty => write!(s, "empty"),
        PreValue::Cons(a, b) => {
            s.push_str("(cons ");
            value(s, a)?;
            s.push(' ');
            value(s, b)?;
            s.push(')');
            Ok(())
        }
        PreValue::DepCon(c, x, d) => {
            s.push_str("(->d ");
            value(s, c)?;
            write!(s, " (lambda ({x}) ")?;
            expr(s, d)?;
            s.push_str("))");
            Ok(())
        }
        PreValue::Opaque => write!(s, "•"),
        PreValue::Rec(x, ms) => {
            write!(s, "(μ {x}")?;
            for m in ms {
                s.push(' ');
                value(s, m)?;
            }
            s.push(')');
            Ok(())
        }
        PreValue::RecRef(x) => write!(s, "!{x}"),
        PreValue::NegPred(o) => write!(s, "(not/c {})", o.name()),
    }
}

/// Prints recognized canonical contracts compactly; returns false when the
/// atom has no short form.
fn atom(s: &mut String, a: &Atom) -> Result<bool, fmt::Error> {
    match a {
        Atom::Pred(o) => {
            write!(s, "{}", o.name())?;
            Ok(true)
        }
        Atom::NotPred(o) => {
            write!(s, "(not/c {})", o.name())?;
            Ok(true)
        }
        Atom::Cmp(o, k) => {
            write!(s, "({}/c ", o.name())?;
            value(s, k)?;
            s.push(')');
            Ok(true)
        }
        Atom::Neq(k) => {
            s.push_str("(!=/c ");
            value(s, k)?;
            s.push(')');
            Ok(true)
        }
        Atom::Arith(o, a, b) => {
            write!(s, "(=/c ({} ", o.name())?;
            value(s, a)?;
            s.push(' ');
            value(s, b)?;
            s.push_str("))");
            Ok(true)
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&show_expr(self))
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&show_value(self))
    }
}
