//! Seeded generator of small terminating programs, and shrinking.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::parse::{parse_program, ParseError};
use crate::syntax::Program;

/// Surface syntax tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tree {
    Atom(String),
    List(Vec<Tree>),
}

fn atom(s: impl Into<String>) -> Tree {
    Tree::Atom(s.into())
}

fn list(items: Vec<Tree>) -> Tree {
    Tree::List(items)
}

impl fmt::Display for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tree::Atom(s) => write!(f, "{s}"),
            Tree::List(items) => {
                write!(f, "(")?;
                for (i, t) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    write!(f, "{t}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GenModule {
    pub name: String,
    pub contract: Tree,
    pub body: Tree,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GenProgram {
    pub modules: Vec<GenModule>,
    pub top: Tree,
}

impl GenProgram {
    pub fn source(&self) -> String {
        let mut s = String::new();
        for m in &self.modules {
            s += &format!("(module {} {} {})\n", m.name, m.contract, m.body);
        }
        s += &format!("(top {})\n", self.top);
        s
    }

    pub fn parse(&self) -> Result<Program, ParseError> {
        parse_program(&self.source())
    }

    /// Smaller variants, biggest cuts first: drop a module, then replace a
    /// subexpression by one of its parts or by 0.
    pub fn shrinks(&self) -> Vec<GenProgram> {
        let mut out = Vec::new();
        for i in 0..self.modules.len() {
            let gone = &self.modules[i].name;
            let mut p = self.clone();
            p.modules.remove(i);
            for m in p.modules.iter_mut() {
                m.body = replace_atom(&m.body, gone, "0");
            }
            p.top = replace_atom(&p.top, gone, "0");
            out.push(p);
        }
        for i in 0..=self.modules.len() {
            let t = if i < self.modules.len() { &self.modules[i].body } else { &self.top };
            for cand in subtree_shrinks(t) {
                let mut p = self.clone();
                if i < self.modules.len() {
                    p.modules[i].body = cand;
                } else {
                    p.top = cand;
                }
                out.push(p);
            }
        }
        out
    }
}

fn replace_atom(t: &Tree, from: &str, to: &str) -> Tree {
    match t {
        Tree::Atom(s) if s == from => atom(to),
        Tree::Atom(_) => t.clone(),
        Tree::List(items) => list(items.iter().map(|i| replace_atom(i, from, to)).collect()),
    }
}

fn subtree_shrinks(t: &Tree) -> Vec<Tree> {
    let Tree::List(items) = t else {
        return if *t == atom("0") { vec![] } else { vec![atom("0")] };
    };
    let mut out = vec![atom("0")];
    out.extend(items.iter().skip(1).cloned());
    for (i, child) in items.iter().enumerate() {
        for c in subtree_shrinks(child) {
            let mut v = items.clone();
            v[i] = c;
            out.push(list(v));
        }
    }
    out
}

const MAX_DEPTH: usize = 5;
const MAX_MODULES: usize = 3;

struct Gen<'r, R: Rng> {
    rng: &'r mut R,
    fresh: usize,
}

/// A random closed program: up to three non-recursive modules, each
/// referring only to earlier ones, and a top-level expression.
pub fn generate<R: Rng>(rng: &mut R) -> GenProgram {
    let mut g = Gen { rng, fresh: 0 };
    let n = g.rng.gen_range(0..=MAX_MODULES);
    let mut modules = Vec::new();
    let mut names: Vec<String> = Vec::new();
    for i in 0..n {
        let name = format!("m{i}");
        let (contract, body) = if g.rng.gen_bool(0.8) {
            let x = g.var();
            let body = g.expr(MAX_DEPTH - 1, std::slice::from_ref(&x), &names);
            let c = if g.rng.gen_bool(0.75) { g.fun_contract() } else { atom(*[ "any", "proc?"].choose(g.rng).unwrap()) };
            (c, list(vec![atom("lambda"), list(vec![atom(&x)]), body]))
        } else {
            (g.flat(), g.int())
        };
        modules.push(GenModule { name: name.clone(), contract, body });
        names.push(name);
    }
    let top = g.expr(MAX_DEPTH, &[], &names);
    GenProgram { modules, top }
}

impl<R: Rng> Gen<'_, R> {
    fn var(&mut self) -> String {
        self.fresh += 1;
        format!("v{}", self.fresh)
    }

    fn int(&mut self) -> Tree {
        atom(self.rng.gen_range(-3..=3).to_string())
    }

    fn flat(&mut self) -> Tree {
        match self.rng.gen_range(0..10) {
            0 => atom("any"),
            1 => atom("int?"),
            2 => atom("pos?"),
            3 => atom("nat?"),
            4 => atom("cons?"),
            5 => atom("false?"),
            6 => list(vec![atom(">=/c"), self.int()]),
            7 => list(vec![atom("not/c"), atom("false?")]),
            8 => list(vec![atom("or/c"), atom("int?"), atom("empty?")]),
            _ => list(vec![atom("and/c"), atom("int?"), list(vec![atom("</c"), self.int()])]),
        }
    }

    fn fun_contract(&mut self) -> Tree {
        match self.rng.gen_range(0..6) {
            0 => {
                let y = self.var();
                let rng = list(vec![atom(">=/c"), atom(&y)]);
                list(vec![atom("->d"), atom("int?"), list(vec![atom("lambda"), list(vec![atom(&y)]), rng])])
            }
            1 => {
                let inner = list(vec![atom("->"), self.flat(), self.flat()]);
                list(vec![atom("->"), self.flat(), inner])
            }
            _ => list(vec![atom("->"), self.flat(), self.flat()]),
        }
    }

    fn leaf(&mut self, vars: &[String], mods: &[String]) -> Tree {
        let r = self.rng.gen_range(0..100);
        match r {
            0..=29 => self.int(),
            30..=39 => atom(if self.rng.gen_bool(0.5) { "true" } else { "false" }),
            40..=44 => atom("empty"),
            45..=79 if !vars.is_empty() => atom(vars.choose(self.rng).unwrap()),
            80..=99 if !mods.is_empty() => atom(mods.choose(self.rng).unwrap()),
            _ => self.int(),
        }
    }

    fn expr(&mut self, depth: usize, vars: &[String], mods: &[String]) -> Tree {
        if depth <= 1 || self.rng.gen_bool(0.25) {
            return self.leaf(vars, mods);
        }
        let d = depth - 1;
        let sub = |g: &mut Self| g.expr(d, vars, mods);
        match self.rng.gen_range(0..13) {
            0 | 1 => {
                let o = *["+", "-", "*"].choose(self.rng).unwrap();
                list(vec![atom(o), sub(self), sub(self)])
            }
            2 => {
                let o = *["=", "<"].choose(self.rng).unwrap();
                list(vec![atom(o), sub(self), sub(self)])
            }
            3 => {
                let o = *["int?", "cons?", "empty?", "false?", "add1"].choose(self.rng).unwrap();
                list(vec![atom(o), sub(self)])
            }
            4 => list(vec![atom("cons"), sub(self), sub(self)]),
            5 => {
                let o = *["car", "cdr"].choose(self.rng).unwrap();
                list(vec![atom(o), sub(self)])
            }
            6 | 7 => list(vec![atom("if"), sub(self), sub(self), sub(self)]),
            8 | 9 => list(vec![sub(self), sub(self)]),
            10 => {
                let x = self.var();
                let mut inner = vars.to_vec();
                inner.push(x.clone());
                let body = self.expr(d, &inner, mods);
                list(vec![atom("lambda"), list(vec![atom(&x)]), body])
            }
            _ => {
                let x = self.var();
                let bound = sub(self);
                let mut inner = vars.to_vec();
                inner.push(x.clone());
                let body = self.expr(d, &inner, mods);
                list(vec![atom("let"), list(vec![list(vec![atom(&x), bound])]), body])
            }
        }
    }
}

/// Repeatedly takes the first smaller variant that still fails.
pub fn shrink(p: &GenProgram, fails: &dyn Fn(&GenProgram) -> bool) -> GenProgram {
    let mut cur = p.clone();
    'outer: for _ in 0..200 {
        for c in cur.shrinks() {
            if c.parse().is_ok() && fails(&c) {
                cur = c;
                continue 'outer;
            }
        }
        break;
    }
    cur
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_programs_parse() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..300 {
            let p = generate(&mut rng);
            if let Err(e) = p.parse() {
                panic!("{e}\n{}", p.source());
            }
        }
    }

    #[test]
    fn generation_is_reproducible() {
        let a = generate(&mut ChaCha8Rng::seed_from_u64(3));
        let b = generate(&mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
    }

    #[test]
    fn shrinking_finds_a_small_failure() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = (0..200).map(|_| generate(&mut rng)).find(|p| p.source().contains("car")).unwrap();
        let small = shrink(&p, &|q| q.source().contains("car"));
        assert!(small.source().len() <= p.source().len());
        assert!(small.source().contains("car"));
    }
}
