//! Surface s-expression reader and desugaring into core terms.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::shape::{any_contract, neg_pred, pred};
use crate::syntax::*;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{line}:{col}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Sexp {
    Atom(String, Pos),
    List(Vec<Sexp>, Pos),
}

impl Sexp {
    fn pos(&self) -> Pos {
        match self {
            Sexp::Atom(_, p) | Sexp::List(_, p) => *p,
        }
    }

    fn atom(&self) -> Option<&str> {
        match self {
            Sexp::Atom(s, _) => Some(s),
            _ => None,
        }
    }

    fn list(&self) -> Option<&[Sexp]> {
        match self {
            Sexp::List(v, _) => Some(v),
            _ => None,
        }
    }

    fn atoms(&self, out: &mut BTreeSet<String>) {
        match self {
            Sexp::Atom(s, _) => {
                out.insert(s.clone());
            }
            Sexp::List(v, _) => v.iter().for_each(|s| s.atoms(out)),
        }
    }
}

fn err<T>(p: Pos, msg: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError { line: p.line, col: p.col, msg: msg.into() })
}

/// Reads every s-expression in `text`. `;` starts a line comment and
/// square brackets are interchangeable with parentheses.
pub fn read_all(text: &str) -> Result<Vec<Sexp>, ParseError> {
    let mut stack: Vec<(Vec<Sexp>, Pos, char)> = Vec::new();
    let mut out = Vec::new();
    let (mut line, mut col) = (1, 1);
    let mut chars = text.chars().peekable();
    let mut tok = String::new();
    let mut tok_pos = Pos { line, col };

    fn push(item: Sexp, stack: &mut [(Vec<Sexp>, Pos, char)], out: &mut Vec<Sexp>) {
        match stack.last_mut() {
            Some((v, _, _)) => v.push(item),
            None => out.push(item),
        }
    }
    let flush = |tok: &mut String, p: Pos, stack: &mut Vec<(Vec<Sexp>, Pos, char)>, out: &mut Vec<Sexp>| {
        if !tok.is_empty() {
            push(Sexp::Atom(std::mem::take(tok), p), stack, out);
        }
    };

    while let Some(c) = chars.next() {
        let here = Pos { line, col };
        if c == '\n' {
            line += 1;
            col = 1;
        } else {
            col += 1;
        }
        match c {
            ';' => {
                flush(&mut tok, tok_pos, &mut stack, &mut out);
                while let Some(&d) = chars.peek() {
                    if d == '\n' {
                        break;
                    }
                    chars.next();
                    col += 1;
                }
            }
            '(' | '[' => {
                flush(&mut tok, tok_pos, &mut stack, &mut out);
                stack.push((Vec::new(), here, if c == '(' { ')' } else { ']' }));
            }
            ')' | ']' => {
                flush(&mut tok, tok_pos, &mut stack, &mut out);
                let Some((items, p, close)) = stack.pop() else { return err(here, format!("unexpected `{c}`")) };
                if close != c {
                    return err(here, format!("expected `{close}` to close the list opened at {}:{}", p.line, p.col));
                }
                push(Sexp::List(items, p), &mut stack, &mut out);
            }
            c if c.is_whitespace() => flush(&mut tok, tok_pos, &mut stack, &mut out),
            c => {
                if tok.is_empty() {
                    tok_pos = here;
                }
                tok.push(c);
            }
        }
    }
    flush(&mut tok, tok_pos, &mut stack, &mut out);
    if let Some((_, p, _)) = stack.last() {
        return err(*p, "unclosed list");
    }
    Ok(out)
}

const RESERVED: [&str; 3] = ["havoc", "†", "Λ"];

pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let forms = read_all(text)?;
    let mut names: Vec<(String, Pos)> = Vec::new();
    let mut top: Option<&Sexp> = None;
    for f in &forms {
        let items = f.list().unwrap_or(&[]);
        match items.first().and_then(Sexp::atom) {
            Some("module") if top.is_none() => {
                let Some(n) = items.get(1) else { return err(f.pos(), "module needs a name") };
                let n = match n {
                    Sexp::Atom(s, _) => s.clone(),
                    Sexp::List(v, p) => match v.first().and_then(Sexp::atom) {
                        Some(s) => s.to_string(),
                        None => return err(*p, "module needs a name"),
                    },
                };
                if RESERVED.contains(&n.as_str()) {
                    return err(f.pos(), format!("`{n}` is not a legal module name"));
                }
                if names.iter().any(|(m, _)| *m == n) {
                    return err(f.pos(), format!("duplicate module `{n}`"));
                }
                names.push((n, f.pos()));
            }
            Some("top") if top.is_none() => {
                if items.len() != 2 {
                    return err(f.pos(), "expected (top expr)");
                }
                top = Some(f);
            }
            _ if top.is_some() => return err(f.pos(), "nothing may follow (top ...)"),
            _ => return err(f.pos(), "expected (module ...) or (top ...)"),
        }
    }
    let Some(top) = top else {
        let p = forms.last().map_or(Pos { line: 1, col: 1 }, Sexp::pos);
        return err(p, "missing (top ...)");
    };
    let modules: BTreeSet<String> = names.iter().map(|(n, _)| n.clone()).collect();
    let mut out = Program { modules: Vec::new(), top: Expr::Val(Value::bool(true)) };
    for f in &forms[..forms.len() - 1] {
        out.modules.push(module(f, &modules)?);
    }
    let mut d = Desugar { modules: &modules, label: Label::Top };
    out.top = d.expr(&top.list().unwrap()[1], &mut Vec::new())?;
    Ok(out)
}

fn module(f: &Sexp, modules: &BTreeSet<String>) -> Result<Module, ParseError> {
    let items = f.list().unwrap();
    if items.len() != 4 {
        return err(f.pos(), "expected (module NAME contract body)");
    }
    // (module (f x ...) c body) is (module f c (lambda (x ...) body)).
    let (n, params) = match &items[1] {
        Sexp::Atom(s, _) => (s.clone(), None),
        Sexp::List(v, _) => (v[0].atom().unwrap().to_string(), Some(&v[1..])),
    };
    let mut d = Desugar { modules, label: Label::module(&n) };
    let contract = d.expr(&items[2], &mut Vec::new())?;
    let body_s = &items[3];
    let body = match (params, body_s.atom()) {
        (None, Some("•" | "opaque")) => None,
        (Some(ps), _) => Some(d.lambda(ps, std::slice::from_ref(body_s), f.pos(), &mut Vec::new())?),
        (None, _) => match body_s.list() {
            Some([h, sig, rest @ ..]) if h.atom() == Some("define") => {
                let Some([_, ps @ ..]) = sig.list() else { return err(sig.pos(), "expected (define (NAME x) body)") };
                Some(d.lambda(ps, rest, body_s.pos(), &mut Vec::new())?)
            }
            _ => Some(d.expr(body_s, &mut Vec::new())?),
        },
    };
    Ok(Module { name: name(&n), contract, body })
}

struct Desugar<'a> {
    modules: &'a BTreeSet<String>,
    label: Label,
}

const KEYWORDS: [&str; 26] = [
    "lambda", "λ", "if", "let", "let*", "cond", "and", "or", "begin", "not", "->", "->d", "and/c", "or/c", "not/c",
    ">/c", ">=/c", "</c", "<=/c", "=/c", "!=/c", "pred", "define", "module", "top", "else",
];

/// A variable name not occurring anywhere in `forms`.
fn fresh(forms: &[Sexp], base: &str) -> Name {
    let mut used = BTreeSet::new();
    forms.iter().for_each(|f| f.atoms(&mut used));
    if !used.contains(base) {
        return name(base);
    }
    (1..).map(|i| format!("{base}{i}")).find(|c| !used.contains(c)).map(|c| name(&c)).unwrap()
}

impl Desugar<'_> {
    fn l(&self) -> Label {
        self.label.clone()
    }

    fn shadowed(&self, s: &str, env: &[Name]) -> bool {
        env.iter().any(|x| &**x == s) || self.modules.contains(s)
    }

    fn expr(&mut self, s: &Sexp, env: &mut Vec<Name>) -> Result<Expr, ParseError> {
        match s {
            Sexp::Atom(a, p) => self.atom(a, *p, env),
            Sexp::List(items, p) => {
                let Some(head) = items.first() else { return err(*p, "empty application") };
                if let Some(h) = head.atom() {
                    if !self.shadowed(h, env) {
                        if KEYWORDS.contains(&h) {
                            return self.form(h, &items[1..], *p, env);
                        }
                        if let Some(o) = Op::from_name(h) {
                            if items.len() - 1 != o.arity() {
                                return err(*p, format!("`{h}` takes {} argument(s)", o.arity()));
                            }
                            let args = items[1..].iter().map(|a| self.expr(a, env)).collect::<Result<_, _>>()?;
                            return Ok(Expr::prim(o, args, self.l()));
                        }
                    }
                }
                if items.len() < 2 {
                    return err(*p, "application needs an argument");
                }
                let mut f = self.expr(head, env)?;
                for a in &items[1..] {
                    f = Expr::app(f, self.expr(a, env)?, self.l());
                }
                Ok(f)
            }
        }
    }

    fn atom(&mut self, a: &str, p: Pos, env: &[Name]) -> Result<Expr, ParseError> {
        if let Ok(n) = a.parse::<i64>() {
            return Ok(Expr::int(n));
        }
        if env.iter().any(|x| &**x == a) {
            return Ok(Expr::Var(name(a)));
        }
        if self.modules.contains(a) {
            return Ok(Expr::Ref(name(a), self.l()));
        }
        let cmp0 = |o: Op| self.guarded_cmp(o, Expr::int(0), &[]);
        let v = match a {
            "true" => Value::bool(true),
            "false" => Value::bool(false),
            "empty" => Value::empty(),
            "any" => any_contract(),
            "pos?" => cmp0(Op::Gt),
            "nat?" => cmp0(Op::Ge),
            "neg?" => cmp0(Op::Lt),
            "zero?" => cmp0(Op::Eq),
            "•" | "opaque" => return err(p, "• is only allowed as a module body"),
            _ => match Op::from_name(a) {
                Some(o) if o.is_pred() => pred(o),
                Some(o) if o.arity() == 1 => Value::lam("x", Expr::prim(o, vec![Expr::var("x")], self.l())),
                Some(_) => return err(p, format!("binary operator `{a}` must be applied")),
                None => return err(p, format!("unbound identifier `{a}`")),
            },
        };
        Ok(Expr::Val(v))
    }

    /// `λx.(if (int? x) (⋈ x k) false)`, with `x` fresh for `k`.
    fn guarded_cmp(&self, o: Op, k: Expr, forms: &[Sexp]) -> Value {
        let x = fresh(forms, "x");
        let v = || Expr::Var(x.clone());
        let body = Expr::if_(
            Expr::prim(Op::IntP, vec![v()], self.l()),
            Expr::prim(o, vec![v(), k], self.l()),
            Expr::Val(Value::bool(false)),
        );
        Value::pre(PreValue::Lam(x.clone(), Box::new(body)))
    }

    fn lambda(&mut self, params: &[Sexp], body: &[Sexp], p: Pos, env: &mut Vec<Name>) -> Result<Expr, ParseError> {
        if params.is_empty() {
            return err(p, "lambda needs a parameter");
        }
        let xs: Vec<Name> = params
            .iter()
            .map(|s| s.atom().map(name).ok_or(()))
            .collect::<Result<_, _>>()
            .or_else(|_| err(p, "parameters must be identifiers"))?;
        let n = env.len();
        env.extend(xs.iter().cloned());
        let b = self.sequence(body, p, env);
        env.truncate(n);
        let mut e = b?;
        for x in xs.iter().rev() {
            e = Expr::Val(Value::pre(PreValue::Lam(x.clone(), Box::new(e))));
        }
        Ok(e)
    }

    /// `(begin e1 e2)` is `((λ_.e2) e1)`.
    fn sequence(&mut self, es: &[Sexp], p: Pos, env: &mut Vec<Name>) -> Result<Expr, ParseError> {
        let Some((last, init)) = es.split_last() else { return err(p, "expected an expression") };
        let mut e = self.expr(last, env)?;
        for s in init.iter().rev() {
            let first = self.expr(s, env)?;
            e = Expr::app(Expr::Val(Value::pre(PreValue::Lam(name("_"), Box::new(e)))), first, self.l());
        }
        Ok(e)
    }

    fn form(&mut self, h: &str, args: &[Sexp], p: Pos, env: &mut Vec<Name>) -> Result<Expr, ParseError> {
        let arity = |n: usize| if args.len() == n { Ok(()) } else { err(p, format!("`{h}` takes {n} argument(s)")) };
        match h {
            "lambda" | "λ" => {
                let Some((ps, body)) = args.split_first() else { return err(p, "expected (lambda (x) body)") };
                let Some(ps) = ps.list() else { return err(ps.pos(), "expected a parameter list") };
                self.lambda(ps, body, p, env)
            }
            "if" => {
                arity(3)?;
                Ok(Expr::if_(self.expr(&args[0], env)?, self.expr(&args[1], env)?, self.expr(&args[2], env)?))
            }
            "let" | "let*" => {
                let Some((binds, body)) = args.split_first() else { return err(p, "expected (let (bindings) body)") };
                let Some(binds) = binds.list() else { return err(binds.pos(), "expected a binding list") };
                let mut pairs = Vec::new();
                for b in binds {
                    match b.list() {
                        Some([Sexp::Atom(x, _), e]) => pairs.push((name(x), e)),
                        _ => return err(b.pos(), "expected [x expr]"),
                    }
                }
                if h == "let" {
                    for (i, (_, e)) in pairs.iter().enumerate() {
                        let mut used = BTreeSet::new();
                        e.atoms(&mut used);
                        if pairs[..i].iter().any(|(x, _)| used.contains(&**x) && !self.shadowed(x, env)) {
                            return err(e.pos(), "let binding refers to a sibling; use let*");
                        }
                    }
                }
                self.let_star(&pairs, body, p, env)
            }
            "cond" => self.cond(args, p, env),
            "and" => match args.split_first() {
                None => Ok(Expr::Val(Value::bool(true))),
                Some((a, [])) => self.expr(a, env),
                Some((a, rest)) => {
                    let c = self.expr(a, env)?;
                    let r = self.form("and", rest, p, env)?;
                    Ok(Expr::if_(c, r, Expr::Val(Value::bool(false))))
                }
            },
            "or" => match args.split_first() {
                None => Ok(Expr::Val(Value::bool(false))),
                Some((a, [])) => self.expr(a, env),
                Some((a, rest)) => {
                    let c = self.expr(a, env)?;
                    let r = self.form("or", rest, p, env)?;
                    if matches!(&c, Expr::Prim(o, _, _) if o.is_pred() || o.is_cmp()) {
                        return Ok(Expr::if_(c, Expr::Val(Value::bool(true)), r));
                    }
                    // Keep the first true value, as Scheme does.
                    let t = fresh(args, "t");
                    let v = || Expr::Var(t.clone());
                    let body = Expr::if_(v(), v(), r);
                    Ok(Expr::app(Expr::Val(Value::pre(PreValue::Lam(t.clone(), Box::new(body)))), c, self.l()))
                }
            },
            "begin" => self.sequence(args, p, env),
            "not" => {
                arity(1)?;
                Ok(Expr::prim(Op::FalseP, vec![self.expr(&args[0], env)?], self.l()))
            }
            "->" => {
                if args.len() < 2 {
                    return err(p, "expected (-> domain range)");
                }
                let mut e = self.expr(&args[args.len() - 1], env)?;
                for a in args[..args.len() - 1].iter().rev() {
                    e = Expr::DepCon(Box::new(self.expr(a, env)?), name("_"), Box::new(e));
                }
                Ok(e)
            }
            "->d" => {
                arity(2)?;
                let c = self.expr(&args[0], env)?;
                let Some([kw, ps, body]) = args[1].list() else {
                    return err(args[1].pos(), "expected (lambda (x) range)");
                };
                let x = match (kw.atom(), ps.list()) {
                    (Some("lambda" | "λ"), Some([Sexp::Atom(x, _)])) => name(x),
                    _ => return err(args[1].pos(), "expected (lambda (x) range)"),
                };
                env.push(x.clone());
                let d = self.expr(body, env);
                env.pop();
                Ok(Expr::DepCon(Box::new(c), x, Box::new(d?)))
            }
            "and/c" | "or/c" => {
                if args.is_empty() {
                    return Ok(Expr::Val(if h == "and/c" { any_contract() } else { Value::lam("x", Expr::Val(Value::bool(false))) }));
                }
                let x = fresh(args, "x");
                let mut parts = Vec::new();
                for a in args {
                    let c = self.expr(a, env)?;
                    parts.push(self.applied(c, &x));
                }
                let mut e = parts.pop().unwrap();
                while let Some(c) = parts.pop() {
                    e = if h == "and/c" {
                        Expr::if_(c, e, Expr::Val(Value::bool(false)))
                    } else {
                        Expr::if_(c, Expr::Val(Value::bool(true)), e)
                    };
                }
                Ok(Expr::Val(Value::pre(PreValue::Lam(x, Box::new(e)))))
            }
            "not/c" => {
                arity(1)?;
                if let Some(a) = args[0].atom() {
                    if let Some(o) = Op::from_name(a).filter(|o| o.is_pred() && !self.shadowed(a, env)) {
                        return Ok(Expr::Val(neg_pred(o)));
                    }
                }
                let x = fresh(args, "x");
                let c = self.expr(&args[0], env)?;
                let body = Expr::prim(Op::FalseP, vec![self.applied(c, &x)], self.l());
                Ok(Expr::Val(Value::pre(PreValue::Lam(x, Box::new(body)))))
            }
            ">/c" | ">=/c" | "</c" | "<=/c" | "=/c" | "!=/c" => {
                arity(1)?;
                let k = self.expr(&args[0], env)?;
                let o = Op::from_name(&h[..h.len() - 2]).unwrap_or(Op::Eq);
                let c = self.guarded_cmp(o, k, args);
                if h == "!=/c" {
                    let Some(PreValue::Lam(x, b)) = c.pre_value() else { unreachable!() };
                    let Expr::If(t, cmp, f) = &**b else { unreachable!() };
                    let neg = Expr::prim(Op::FalseP, vec![(**cmp).clone()], self.l());
                    let body = Expr::If(t.clone(), Box::new(neg), f.clone());
                    return Ok(Expr::Val(Value::pre(PreValue::Lam(x.clone(), Box::new(body)))));
                }
                Ok(Expr::Val(c))
            }
            "pred" => {
                arity(1)?;
                match args[0].atom().and_then(Op::from_name) {
                    Some(o) if o.is_pred() => Ok(Expr::Val(pred(o))),
                    _ => err(args[0].pos(), "expected a primitive predicate"),
                }
            }
            _ => err(p, format!("`{h}` is not allowed here")),
        }
    }

    /// The contract `c` applied to variable `x`, beta-reduced when `c` is a lambda.
    fn applied(&self, c: Expr, x: &Name) -> Expr {
        if let Expr::Val(v) = &c {
            if let Some(o) = PREDICATES.iter().copied().find(|o| *v == pred(*o)) {
                return Expr::prim(o, vec![Expr::Var(x.clone())], self.l());
            }
            if let Some(PreValue::Lam(y, b)) = v.pre_value() {
                return rename_var(b, y, x);
            }
        }
        Expr::app(c, Expr::Var(x.clone()), self.l())
    }

    fn let_star(&mut self, binds: &[(Name, &Sexp)], body: &[Sexp], p: Pos, env: &mut Vec<Name>) -> Result<Expr, ParseError> {
        let Some(((x, e), rest)) = binds.split_first() else { return self.sequence(body, p, env) };
        let rhs = self.expr(e, env)?;
        env.push(x.clone());
        let inner = self.let_star(rest, body, p, env);
        env.pop();
        let lam = Value::pre(PreValue::Lam(x.clone(), Box::new(inner?)));
        Ok(Expr::app(Expr::Val(lam), rhs, self.l()))
    }

    fn cond(&mut self, clauses: &[Sexp], p: Pos, env: &mut Vec<Name>) -> Result<Expr, ParseError> {
        let Some((c, rest)) = clauses.split_first() else { return err(p, "cond needs an else clause") };
        let Some([test, body @ ..]) = c.list() else { return err(c.pos(), "expected [test expr]") };
        if body.is_empty() {
            return err(c.pos(), "cond clause needs a body");
        }
        if test.atom() == Some("else") && !self.shadowed("else", env) {
            if !rest.is_empty() {
                return err(rest[0].pos(), "clause after else");
            }
            return self.sequence(body, c.pos(), env);
        }
        let t = self.expr(test, env)?;
        let b = self.sequence(body, c.pos(), env)?;
        let r = self.cond(rest, p, env)?;
        Ok(Expr::if_(t, b, r))
    }
}
