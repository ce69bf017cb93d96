//! End-to-end acceptance criteria. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion does.

mod common;

use std::io::Write;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use scv::approx::{abstractions, differential_soundness, SoundnessOptions};
use scv::concrete;
use scv::delta::{delta, Answer};
use scv::eval::{eval, verify, EvalOptions, ModuleVerdict, Verdict};
use scv::gen::generate;
use scv::heap::{refine, Heap};
use scv::proof::{self, Oracle, Proof};
use scv::shape::{atom_of, negate_atom, atom_contract, neg_pred};
use scv::smt::Smt;
use scv::syntax::*;

use common::*;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn verdict_of<'a>(vs: &'a [ModuleVerdict], m: &str) -> &'a Verdict {
    &vs.iter().find(|v| v.module == m).unwrap_or_else(|| panic!("no verdict for {m}")).verdict
}

fn within(start: Instant, limit: Duration) -> Result<Duration, String> {
    let t = start.elapsed();
    if t < limit {
        Ok(t)
    } else {
        Err(format!("took {t:?}, limit {limit:?}"))
    }
}

fn z3() -> Smt {
    Smt::from_command("z3 -in")
}

fn c1_e2o() -> Outcome {
    let start = Instant::now();
    let p = program("e2o");
    let opts = EvalOptions { budget: 20_000, ..EvalOptions::default() };
    let (vs, r) = verify(&p, &Smt::none(), &opts);
    let v = verdict_of(&vs, "e2o");
    if *v != Verdict::Verified {
        return Err(format!("e2o: {v:?}"));
    }
    let t = within(start, Duration::from_secs(5))?;
    Ok(format!("e2o verified in {} expansions, {t:.2?}", r.expansions))
}

fn c2_occurrence() -> Outcome {
    let start = Instant::now();
    let p = program("occurrence");
    let (vs, r) = verify(&p, &Smt::none(), &EvalOptions::default());
    if *verdict_of(&vs, "f") != Verdict::Verified {
        return Err(format!("f: {:?}", verdict_of(&vs, "f")));
    }
    if r.blames.iter().any(|(pos, src)| *pos == Label::module("f") && *src == Label::Lang) {
        return Err("Λ blames f".into());
    }
    let t = within(start, Duration::from_secs(10))?;
    Ok(format!("f verified, no Λ blame of f, {t:.2?}"))
}

fn c3_smt() -> Outcome {
    let start = Instant::now();
    let p = program("smt");
    let (with, _) = verify(&p, &z3(), &EvalOptions::default());
    let (without, _) = verify(&p, &Smt::none(), &EvalOptions::default());
    if *verdict_of(&with, "main") != Verdict::Verified {
        return Err(format!("main with solver: {:?}", verdict_of(&with, "main")));
    }
    let degraded = verdict_of(&without, "main");
    if *degraded == Verdict::Verified {
        return Err("main verified without a solver".into());
    }
    let t = within(start, Duration::from_secs(15))?;
    let kind = match degraded {
        Verdict::Blamed { .. } => "blamed",
        _ => "unknown",
    };
    Ok(format!("main verified with z3, {kind} without, {t:.2?}"))
}

fn c4_makelist() -> Outcome {
    let start = Instant::now();
    let p = program("makelist");
    let (vs, r) = verify(&p, &z3(), &EvalOptions::default());
    if r.exhausted || *verdict_of(&vs, "main") != Verdict::Verified {
        return Err(format!("summarizing: main {:?}, exhausted {}", verdict_of(&vs, "main"), r.exhausted));
    }
    let opts = EvalOptions { budget: 50_000, summarize: false, ..EvalOptions::default() };
    let (vs2, r2) = verify(&p, &z3(), &opts);
    if !r2.exhausted || !matches!(verdict_of(&vs2, "main"), Verdict::Unknown { .. }) {
        return Err(format!("plain: main {:?}, exhausted {}", verdict_of(&vs2, "main"), r2.exhausted));
    }
    let t = within(start, Duration::from_secs(30))?;
    Ok(format!("main verified in {} expansions; plain run unknown at 50000, {t:.2?}", r.expansions))
}

fn c5_fact() -> Outcome {
    let p = program("fact");
    let opts = EvalOptions { budget: 50_000, havoc: false, ..EvalOptions::default() };
    let r = eval(&p, &z3(), &opts);
    if r.exhausted {
        return Err("budget exhausted".into());
    }
    let tables = r.tables.as_ref().ok_or("no tables")?;
    let body = match &p.module("fact").and_then(|m| m.body.clone()) {
        Some(Expr::Val(v)) => v.clone(),
        other => return Err(format!("unexpected body {other:?}")),
    };
    for (_, results) in tables.results_for(&body) {
        let one = results.iter().any(|(v, h)| h.deref(v).as_int() == Some(1));
        let abstract_int = results.iter().any(|(v, h)| {
            let v = h.deref(v);
            matches!(v.pre_value(), Some(PreValue::Opaque))
                && v.refinements().is_some_and(|s| s.contains(&scv::shape::pred(Op::IntP)))
        });
        if one && abstract_int {
            return Ok(format!("M holds 1 and an abstract integer; {} expansions", r.expansions));
        }
    }
    Err("no table entry for fact holds both 1 and an abstract integer".into())
}

fn c6_bad() -> Outcome {
    let p = program("bad");
    let (vs, _) = verify(&p, &Smt::none(), &EvalOptions::default());
    match verdict_of(&vs, "f") {
        Verdict::Blamed { trace, .. } if trace.len() - 1 <= 50 => Ok(format!("f blamed, witness of {} steps", trace.len() - 1)),
        v => Err(format!("f: {v:?}")),
    }
}

fn c7_soundness() -> Outcome {
    let start = Instant::now();
    let rep = differential_soundness(0, 1000, &z3(), &SoundnessOptions::default());
    if !rep.violations.is_empty() {
        let v = &rep.violations[0];
        return Err(format!("{} violations; first: {} {}\n{}", rep.violations.len(), v.kind, v.detail, v.program));
    }
    let t = within(start, Duration::from_secs(600))?;
    Ok(format!(
        "{} programs, {} pairs checked, {} skipped, 0 violations, {t:.2?}",
        rep.programs, rep.checked, rep.skipped
    ))
}

/// Integers in [-5, 5], booleans, empty, and pairs of depth at most 2 over
/// a few of those.
fn delta_universe() -> Vec<Value> {
    let mut base: Vec<Value> = (-5..=5).map(Value::int).collect();
    base.extend([Value::bool(true), Value::bool(false), Value::empty()]);
    let small = [Value::int(0), Value::int(1), Value::int(-1), Value::empty()];
    let d1: Vec<Value> = small.iter().flat_map(|a| small.iter().map(|b| Value::cons(a.clone(), b.clone()))).collect();
    let parts: Vec<Value> = small.iter().chain(&d1).cloned().collect();
    let is_pair = |v: &Value| matches!(v.pre_value(), Some(PreValue::Cons(..)));
    let d2: Vec<Value> = parts
        .iter()
        .flat_map(|a| parts.iter().map(move |b| (a, b)))
        .filter(|(a, b)| is_pair(a) || is_pair(b))
        .map(|(a, b)| Value::cons(a.clone(), b.clone()))
        .collect();
    base.into_iter().chain(d1).chain(d2).collect()
}

fn c8_delta() -> Outcome {
    let start = Instant::now();
    let universe = delta_universe();
    let l = Label::module("m");
    let mut cases = 0usize;
    for o in ALL_OPS {
        let tuples: Vec<Vec<Value>> = match o.arity() {
            1 => universe.iter().map(|v| vec![v.clone()]).collect(),
            _ => universe.iter().flat_map(|a| universe.iter().map(move |b| vec![a.clone(), b.clone()])).collect(),
        };
        for args in tuples {
            cases += 1;
            let got = delta(&proof::Basic, &Heap::new(), o, &args, &l);
            let want = concrete::delta(o, &args);
            let ok = match (got.as_slice(), &want) {
                ([(Answer::Val(v), _)], Some(w)) => strip(v) == strip(w),
                ([(Answer::Blame(p, s), _)], None) => *p == l && *s == Label::Lang,
                _ => false,
            };
            if !ok {
                return Err(format!("{} {:?}: symbolic {:?}, concrete {:?}", o.name(), args, got, want));
            }
        }
    }
    let t = within(start, Duration::from_secs(60))?;
    Ok(format!("{cases} applications over {} values agree, {t:.2?}", universe.len()))
}

const BRUTE: i64 = 8;

fn assignments(n: usize) -> Vec<Vec<i64>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out.into_iter().flat_map(|p| (-BRUTE..=BRUTE).map(move |x| [p.clone(), vec![x]].concat())).collect();
    }
    out
}

fn c9_solver() -> Outcome {
    let start = Instant::now();
    let or = z3();
    const N: Addr = 3;
    let strategy = (
        proptest::collection::vec(proptest::collection::vec(int_atom(N), 0..3), N as usize),
        0..N,
        int_atom(N),
    );
    let all = assignments(N as usize);
    let mut runner = TestRunner::new_with_rng(
        Config { cases: 500, failure_persistence: None, ..Config::default() },
        proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha),
    );
    let decided = std::cell::Cell::new(0usize);
    let res = runner.run(&strategy, |(facts, subject, goal)| {
        let h = Heap::from_entries(facts.iter().enumerate().map(|(i, atoms)| {
            let mut set: RefSet = atoms.iter().map(atom_contract).collect();
            set.insert(scv::shape::pred(Op::IntP));
            (i as Addr, Value::opaque_with(set))
        }));
        let answer = or.check(&h, &Value::Addr(subject), &atom_contract(&goal));
        if answer == Proof::Ambiguous {
            return Ok(());
        }
        decided.set(decided.get() + 1);
        for env in &all {
            let val = |v: &Value| match v {
                Value::Addr(a) => env[*a as usize],
                v => v.as_int().expect("integer operand"),
            };
            let consistent =
                facts.iter().enumerate().all(|(i, atoms)| atoms.iter().all(|a| atom_holds(a, env[i], &val)));
            if !consistent {
                continue;
            }
            let holds = atom_holds(&goal, env[subject as usize], &val);
            if holds != (answer == Proof::Proved) {
                return Err(TestCaseError::fail(format!("{answer:?} but assignment {env:?} gives {holds}")));
            }
        }
        Ok(())
    });
    res.map_err(|e| e.to_string())?;
    let t = within(start, Duration::from_secs(120))?;
    Ok(format!("500 heaps, {} decided answers match enumeration over [-8, 8], {t:.2?}", decided.get()))
}

/// The negation of a flat contract, when it has one.
fn negation(c: &Value) -> Option<Value> {
    match c.pre_value()? {
        PreValue::NegPred(o) => Some(scv::shape::pred(*o)),
        _ => {
            let a = atom_of(c)?;
            match a {
                scv::shape::Atom::Pred(o) => Some(neg_pred(o)),
                a => negate_atom(&a).map(|n| atom_contract(&n)),
            }
        }
    }
}

fn c10_proof() -> Outcome {
    let start = Instant::now();
    const N: Addr = 3;
    let strategy = (
        heap(N),
        prop_oneof![(0..N).prop_map(Value::Addr), concrete_value()],
        flat_contract(N),
        flat_contract(N),
    );
    let mut runner = TestRunner::new_with_rng(
        Config { cases: 10_000, max_global_rejects: 100_000, failure_persistence: None, ..Config::default() },
        proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha),
    );
    let res = runner.run(&strategy, |(h, v, c, d)| {
        // An impossible heap may prove anything.
        prop_assume!(feasible(&h));
        let r = proof::check(&h, &v, &c);
        if let Some(not_c) = negation(&c) {
            let rn = proof::check(&h, &v, &not_c);
            prop_assert!(!(r == Proof::Proved && rn == Proof::Proved), "both c and its negation proved");
        }
        // Refining by a refuted contract leaves an infeasible heap, which
        // exploration never reaches.
        if r == Proof::Proved && proof::check(&h, &v, &d) != Proof::Refuted {
            let (h2, v2) = refine(&h, &v, &d);
            prop_assert_eq!(proof::check(&h2, &v2, &c), Proof::Proved, "refining by {:?} lost the proof", d);
        }
        Ok(())
    });
    res.map_err(|e| e.to_string())?;
    let t = within(start, Duration::from_secs(120))?;
    Ok(format!("10000 triples over feasible heaps, {t:.2?}"))
}

/// Straight-line programs: generated programs and their abstractions whose
/// plain exploration is finite, so no application ever re-enters itself.
fn c11_conservativity() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let or = Smt::none();
    let plain = EvalOptions { budget: 5_000, summarize: false, havoc: false, ..EvalOptions::default() };
    let summ = EvalOptions { summarize: true, ..plain.clone() };
    let (mut compared, mut seed) = (0, 0u64);
    while compared < 50 {
        seed += 1;
        let Ok(p) = generate(&mut rng).parse() else { continue };
        for a in abstractions(&p, seed) {
            let r1 = eval(&a, &or, &plain);
            if r1.exhausted || compared == 50 {
                continue;
            }
            let r2 = eval(&a, &or, &summ);
            if r1.finals != r2.finals || r1.blames != r2.blames || r2.exhausted {
                return Err(format!("results differ on\n{}", scv::print::show_program(&a)));
            }
            compared += 1;
        }
    }
    let t = within(start, Duration::from_secs(120))?;
    Ok(format!("{compared} programs give identical results, {t:.2?}"))
}

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 11] = [
        ("e2o verifies without a solver", c1_e2o),
        ("occurrence typing verifies f", c2_occurrence),
        ("solver needed for >/c example", c3_smt),
        ("make-list/reverse with and without summarization", c4_makelist),
        ("fact summary holds 1 and an abstract integer", c5_fact),
        ("negative control is blamed with a short witness", c6_bad),
        ("differential soundness on 1000 programs", c7_soundness),
        ("delta agrees with the concrete interpreter", c8_delta),
        ("solver answers match brute force", c9_solver),
        ("proof trichotomy and monotonicity", c10_proof),
        ("summarization is conservative on straight-line programs", c11_conservativity),
    ];
    let mut failed = Vec::new();
    let mut out = std::io::stdout().lock();
    writeln!(out).unwrap();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        let line = match f() {
            Ok(detail) => format!("criterion {n:>2} PASS  {name}: {detail}"),
            Err(why) => {
                failed.push(n);
                format!("criterion {n:>2} FAIL  {name}: {why}")
            }
        };
        writeln!(out, "{line}").unwrap();
        out.flush().unwrap();
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
