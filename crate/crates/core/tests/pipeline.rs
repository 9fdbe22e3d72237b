use std::path::PathBuf;

use pocforge::oracle::{Rationale, VerdictClass};
use pocforge::pipeline::{validate_files, RunConfig, Termination, ValidationReport};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn run(contract: &str, report: &str) -> ValidationReport {
    validate_files(&fixture(contract), &fixture(report), &RunConfig::default()).unwrap()
}

fn dump(r: &ValidationReport) {
    for row in &r.results {
        eprintln!(
            "{} gen{} {:<24} ok={} t={} p={} {:?} {:?}",
            row.id.short(),
            row.generation,
            row.origin,
            row.executed_ok,
            row.triggered,
            row.profited,
            row.revert_message,
            row.profit
        );
    }
}

#[test]
fn bank_unchecked_is_exploitable() {
    let r = run("bank_unchecked.msol", "bank.report.json");
    dump(&r);
    assert_eq!(r.verdict.class, VerdictClass::Exploitable);
    assert_eq!(r.termination, Termination::Confirmed);
    assert_eq!(r.verdict.profit["native"], 4.into());
    assert!(r.winning_poc.is_some());
}

#[test]
fn bank_checked_is_not_exploitable() {
    let r = run("bank_checked.msol", "bank.report.json");
    dump(&r);
    assert_eq!(r.verdict.class, VerdictClass::NonExploitable);
    assert_eq!(r.verdict.rationale, Rationale::TriggeredWithoutProfit);
    assert_eq!(r.termination, Termination::Exhausted);
}

#[test]
fn puzzle_needs_reordering() {
    let r = run("puzzle.msol", "puzzle.report.json");
    dump(&r);
    assert_eq!(r.verdict.class, VerdictClass::Exploitable);
    let last = r.results.last().unwrap();
    assert_eq!(last.origin, "primitive_op:change_order");
}

#[test]
fn lottery_is_false_alarm() {
    let r = run("lottery.msol", "lottery.report.json");
    dump(&r);
    assert_eq!(r.verdict.class, VerdictClass::NonExploitable);
    assert!(r.results.iter().all(|row| !row.profited));
}

#[test]
fn open_wallet_and_selfdestruct() {
    let r = run("wallet.msol", "wallet.report.json");
    dump(&r);
    assert_eq!(r.verdict.class, VerdictClass::Exploitable);
    let r = run("killable.msol", "killable.report.json");
    dump(&r);
    assert_eq!(r.verdict.class, VerdictClass::Exploitable);
}

#[test]
fn guarded_wallet_is_not_bypassed() {
    let r = run("guarded_wallet.msol", "guarded_wallet.report.json");
    dump(&r);
    assert_ne!(r.verdict.class, VerdictClass::Exploitable);
    let poc_deployers_ok = r.results.iter().all(|row| !row.origin.is_empty());
    assert!(poc_deployers_ok);
}
