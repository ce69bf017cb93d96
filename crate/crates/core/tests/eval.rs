mod common;

use scv::eval::{eval, verify, EvalOptions, Verdict};
use scv::parse::parse_program;
use scv::proof::Basic;
use scv::syntax::*;

fn blames(src: &str, havoc: bool) -> Vec<(Label, Label)> {
    let p = parse_program(src).unwrap();
    let r = eval(&p, &Basic, &EvalOptions { havoc, ..EvalOptions::default() });
    assert!(!r.exhausted);
    // Blames of opaque modules say nothing about the program.
    let opaque = |l: &Label| p.modules.iter().any(|m| m.is_opaque() && *l == Label::Mod(m.name.clone()));
    r.blames.into_iter().filter(|(pos, _)| !opaque(pos)).collect()
}

fn m(x: &str) -> Label {
    Label::Mod(x.into())
}

#[test]
fn a_bad_argument_blames_the_caller() {
    let b = blames("(module f (-> int? int?) (lambda (x) x)) (top (f true))", false);
    assert_eq!(b, vec![(Label::Top, m("f"))]);
}

#[test]
fn a_bad_result_blames_the_module() {
    let b = blames("(module f (-> int? int?) (lambda (x) true)) (top (f 1))", false);
    assert_eq!(b, vec![(m("f"), m("f"))]);
}

#[test]
fn a_module_calling_another_badly_is_blamed() {
    let src = "(module g (-> int? int?) (lambda (x) x))
               (module f (-> int? int?) (lambda (x) (g false)))
               (top (f 1))";
    assert_eq!(blames(src, false), vec![(m("f"), m("g"))]);
}

#[test]
fn higher_order_arguments_flip_the_parties() {
    // f promises to call its argument with an integer and breaks it.
    let src = "(module f (-> (-> int? int?) int?) (lambda (k) (k empty)))
               (top (f (lambda (y) 7)))";
    assert_eq!(blames(src, false), vec![(m("f"), m("f"))]);
    // The caller hands over a function that breaks its result promise.
    let src = "(module f (-> (-> int? int?) int?) (lambda (k) (k 1)))
               (top (f (lambda (y) true)))";
    assert_eq!(blames(src, false), vec![(Label::Top, m("f"))]);
}

#[test]
fn primitive_failures_blame_the_calling_module() {
    let b = blames("(module f (-> any int?) (lambda (x) (car 1))) (top (f 1))", false);
    assert_eq!(b, vec![(m("f"), Label::Lang)]);
}

#[test]
fn terminating_programs_reach_a_value() {
    let p = parse_program("(module f (-> int? int?) (lambda (x) (+ x 1))) (top (f 41))").unwrap();
    let r = eval(&p, &Basic, &EvalOptions { havoc: false, ..EvalOptions::default() });
    assert!(r.blames.is_empty() && !r.exhausted);
    assert_eq!(r.finals.len(), 1);
}

#[test]
fn unknown_inputs_explore_both_branches() {
    let src = "(module input int? opaque)
               (module f (-> int? int?) (lambda (x) (if (> x 0) x (car x))))
               (top (f input))";
    assert_eq!(blames(src, false), vec![(m("f"), Label::Lang)]);
}

#[test]
fn a_module_whose_contract_holds_is_verified() {
    let p = common::program("e2o");
    let (vs, r) = verify(&p, &Basic, &EvalOptions::default());
    assert!(!r.exhausted);
    assert!(vs.iter().all(|v| v.verdict == Verdict::Verified), "{vs:?}");
}

#[test]
fn exhausting_the_budget_is_unknown_not_verified() {
    let p = common::program("fact");
    let (vs, r) = verify(&p, &Basic, &EvalOptions { budget: 200, summarize: false, ..EvalOptions::default() });
    assert!(r.exhausted);
    let fact = vs.iter().find(|v| v.module == "fact").unwrap();
    assert!(matches!(fact.verdict, Verdict::Unknown { .. }), "{fact:?}");
}
