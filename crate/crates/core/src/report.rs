//! Verification reports: static check counts, verdicts, and rendering.

use std::fmt::Write;

use serde::Serialize;

use crate::eval::{blame_counts, ModuleVerdict, ReachResult, Verdict};
use crate::syntax::*;

/// Static occurrences of dynamic checks in a desugared program.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CheckCounts {
    /// Contract monitors: module references crossing a module boundary, plus explicit monitors.
    pub monitors: usize,
    /// Applications of primitives that can fail on some argument.
    pub partial_primitives: usize,
    pub total: usize,
}

pub fn is_partial(o: Op) -> bool {
    !(o.is_pred() || o == Op::Cons)
}

pub fn check_counts(p: &Program) -> CheckCounts {
    let mut c = CheckCounts::default();
    for m in &p.modules {
        count_expr(&m.contract, &mut c);
        if let Some(b) = &m.body {
            count_expr(b, &mut c);
        }
    }
    count_expr(&p.top, &mut c);
    c.total = c.monitors + c.partial_primitives;
    c
}

fn count_value(v: &Value, c: &mut CheckCounts) {
    if let Some(p) = v.pre_value() {
        match p {
            PreValue::Lam(_, b) => count_expr(b, c),
            PreValue::DepCon(d, _, r) => {
                count_value(d, c);
                count_expr(r, c);
            }
            PreValue::Cons(a, b) => {
                count_value(a, c);
                count_value(b, c);
            }
            _ => {}
        }
    }
}

fn count_expr(e: &Expr, c: &mut CheckCounts) {
    match e {
        Expr::Val(v) => count_value(v, c),
        Expr::Ref(f, l) => {
            if *l != Label::Mod(f.clone()) {
                c.monitors += 1;
            }
        }
        Expr::Var(_) | Expr::Blame(..) | Expr::Assume(..) => {}
        Expr::App(a, b, _) => {
            count_expr(a, c);
            count_expr(b, c);
        }
        Expr::Prim(o, args, _) => {
            if is_partial(*o) {
                c.partial_primitives += 1;
            }
            args.iter().for_each(|a| count_expr(a, c));
        }
        Expr::If(a, b, d) => {
            count_expr(a, c);
            count_expr(b, c);
            count_expr(d, c);
        }
        Expr::DepCon(a, _, b) => {
            count_expr(a, c);
            count_expr(b, c);
        }
        Expr::Mon(a, _, b) => {
            c.monitors += 1;
            count_expr(a, c);
            count_expr(b, c);
        }
        Expr::Rt(_, b) | Expr::Blur(_, b) => count_expr(b, c),
    }
}

/// A blame reached during exploration that says nothing about a concrete module.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Discarded {
    pub pos: String,
    pub src: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub file: String,
    pub modules: Vec<ModuleVerdict>,
    pub checks: CheckCounts,
    pub discarded: Vec<Discarded>,
    pub expansions: usize,
    pub states: usize,
    pub exhausted: bool,
    pub budget: usize,
    pub summarize: bool,
    pub solver: String,
    pub solver_queries: usize,
    /// Wall-clock time; left out of JSON so reports are reproducible.
    #[serde(skip)]
    pub elapsed_ms: u128,
}

impl Report {
    pub fn discarded_of(p: &Program, r: &ReachResult) -> Vec<Discarded> {
        r.blames
            .iter()
            .filter(|(pos, _)| !blame_counts(p, pos))
            .map(|(pos, src)| Discarded { pos: pos.to_string(), src: src.to_string() })
            .collect()
    }

    /// 0 when all modules verify, 1 if any is blamed, 2 if any is unknown.
    pub fn exit_code(&self) -> i32 {
        if self.modules.iter().any(|m| matches!(m.verdict, Verdict::Blamed { .. })) {
            1
        } else if self.modules.iter().any(|m| matches!(m.verdict, Verdict::Unknown { .. })) {
            2
        } else {
            0
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self, full_trace: bool) -> String {
        let mut s = String::new();
        for m in &self.modules {
            match &m.verdict {
                Verdict::Verified => writeln!(s, "{}: VERIFIED", m.module),
                Verdict::Unknown { reason } => writeln!(s, "{}: UNKNOWN ({reason})", m.module),
                Verdict::Blamed { src, trace } => {
                    writeln!(s, "{}: BLAMED (violated contract from {src})", m.module).unwrap();
                    writeln!(s, "  witness, {} steps:", trace.len().saturating_sub(1)).unwrap();
                    for t in trace {
                        if full_trace {
                            writeln!(s, "    {:<32} {}", t.rule, t.expr).unwrap();
                        } else {
                            writeln!(s, "    {}", t.rule).unwrap();
                        }
                    }
                    Ok(())
                }
            }
            .unwrap();
        }
        writeln!(
            s,
            "checks: {} ({} monitors, {} partial primitives)",
            self.checks.total, self.checks.monitors, self.checks.partial_primitives
        )
        .unwrap();
        if !self.discarded.is_empty() {
            let d: Vec<String> = self.discarded.iter().map(|d| format!("{}/{}", d.pos, d.src)).collect();
            writeln!(s, "discarded blames: {}", d.join(", ")).unwrap();
        }
        writeln!(
            s,
            "explored {} states in {} expansions{} ({} ms, {} solver queries)",
            self.states,
            self.expansions,
            if self.exhausted { ", budget exhausted" } else { "" },
            self.elapsed_ms,
            self.solver_queries
        )
        .unwrap();
        s
    }
}
