//! Acceptance suite. Each criterion prints one PASS or FAIL line; the test
//! fails if any criterion does.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use primitive_types::U256;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pocforge::analysis::{build_paths, entry_functions, VulnClass, VulnReport};
use pocforge::frontend::{parse, ContractUnit, Enclosing, NodeId, StmtClass};
use pocforge::oracle::{
    check_trigger, classify, evaluate, PoCResult, Rationale, TriggerResult, Valuation, VerdictClass,
};
use pocforge::poc::{Action, ArgValue, PoC, PocId, ATTACKER, DEPLOYER};
use pocforge::refine::{
    block_attributes_read, localize_failure, refine_primitive, select_primitive_ops, synthesize,
    PrimitiveOp, RefineError, RequestMode, Stage, Synthesizer, SynthesizerRequest, TemplateBackend,
};
use pocforge::pipeline::{validate_files, RunConfig, ValidationReport};
use pocforge::vm::{
    execute_poc, execute_poc_with, Address, BlockAttr, BlockEnv, CallStatus, EventKind,
    ExecLimits, ExecOptions, ExecutionOutcome, Phase, TraceEvent, Value, WorldState,
    DEFAULT_BLOCK_NUMBER, DEFAULT_TIMESTAMP, NATIVE,
};

use common::*;

fn report_line(line: &str) {
    // Written straight to the stream so it shows up without --nocapture.
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> String); 9] = [
        ("1 reentrancy split between unchecked and checked bank", c1_bank_split),
        ("2 verdict precedence over every result combination", c2_verdict_table),
        ("3 trigger rules and noise filtering", c3_trigger_rules),
        ("4 entry functions on random contracts", c4_entry_functions),
        ("5 failure localization", c5_localization),
        ("6 primitive operator applicability", c6_operator_matrix),
        ("7 ordering and block-attribute fixtures", c7_order_and_block),
        ("8 value conservation and revert atomicity", c8_conservation),
        ("9 deterministic reports", c9_determinism),
    ];
    let mut failed = Vec::new();
    for (name, f) in criteria {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f));
        let ms = started.elapsed().as_millis();
        match outcome {
            Ok(detail) => report_line(&format!("PASS criterion {name} ({ms} ms): {detail}")),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                report_line(&format!("FAIL criterion {name} ({ms} ms): {msg}"));
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

fn run_fixture(contract: &str, report: &str) -> ValidationReport {
    validate_files(&fixture_path(contract), &fixture_path(report), &RunConfig::default()).unwrap()
}

// ---- 1 ----------------------------------------------------------------

fn c1_bank_split() -> String {
    let started = Instant::now();
    let unchecked = run_fixture("bank_unchecked.msol", "bank.report.json");
    let checked = run_fixture("bank_checked.msol", "bank.report.json");
    assert!(started.elapsed() < Duration::from_secs(10), "took {:?}", started.elapsed());

    assert_eq!(unchecked.verdict.class, VerdictClass::Exploitable);
    assert!(unchecked.verdict.profit[NATIVE] > BigInt::from(0));
    let ev = &unchecked.verdict.evidence;
    assert_eq!(ev.len(), 2);
    assert!(ev[0] < ev[1]);

    // The evidence must name an outer call and a call nested inside it.
    let (unit, _) = load("bank_unchecked.msol", "bank.report.json");
    let poc = unchecked.winning_poc.as_ref().unwrap();
    let out = execute_poc(&unit, poc, ExecLimits::default());
    let find = |seq: u64| out.trace.iter().find(|e| e.seq == seq).unwrap().kind.clone();
    match (find(ev[0]), find(ev[1])) {
        (
            EventKind::CallEnter {
                function: f1,
                depth: d1,
                tx_index: t1,
                ..
            },
            EventKind::CallEnter {
                function: f2,
                depth: d2,
                tx_index: t2,
                ..
            },
        ) => {
            assert_eq!(f1, "Collect");
            assert_eq!(f2, "Collect");
            assert_eq!(t1, t2);
            assert!(d2 > d1);
        }
        other => panic!("evidence is not a pair of calls: {other:?}"),
    }

    assert_eq!(checked.verdict.class, VerdictClass::NonExploitable);
    assert_eq!(checked.verdict.rationale, Rationale::TriggeredWithoutProfit);
    format!(
        "unchecked evidence {:?} profit {}, checked {:?}",
        ev, unchecked.verdict.profit[NATIVE], checked.verdict.rationale
    )
}

// ---- 2 ----------------------------------------------------------------

fn result(i: usize, ok: bool, t: bool, p: bool) -> PoCResult {
    let trigger = TriggerResult {
        triggered: t,
        evidence: if t { vec![i as u64] } else { Vec::new() },
    };
    let mut detail = BTreeMap::new();
    if p {
        detail.insert(NATIVE.to_string(), BigInt::from(i as i64 + 1));
    }
    PoCResult::new(PocId::of_bytes(&[i as u8]), ok, trigger, p, detail)
}

/// Reference verdict: scan once, remember the first row of each kind.
fn reference(rows: &[(bool, bool, bool)]) -> (VerdictClass, Option<usize>, Option<Rationale>) {
    let mut first_both = None;
    let mut first_one = None;
    for (i, &(ok, t, p)) in rows.iter().enumerate() {
        let (t, p) = (ok && t, ok && p);
        if t && p && first_both.is_none() {
            first_both = Some(i);
        }
        if t != p && first_one.is_none() {
            first_one = Some((i, if t { Rationale::TriggeredWithoutProfit } else { Rationale::ProfitWithoutTrigger }));
        }
    }
    match (first_both, first_one) {
        (Some(i), _) => (VerdictClass::Exploitable, Some(i), Some(Rationale::TriggeredAndProfited)),
        (None, Some((i, r))) => (VerdictClass::NonExploitable, Some(i), Some(r)),
        (None, None) => (VerdictClass::ManuallyCheck, None, Some(Rationale::NoEvidence)),
    }
}

fn c2_verdict_table() -> String {
    let started = Instant::now();
    let kinds: Vec<(bool, bool, bool)> = (0..8u8)
        .map(|k| (k & 4 != 0, k & 2 != 0, k & 1 != 0))
        .collect();
    let mut checked = 0;
    for mask in 0u16..256 {
        let subset: Vec<(bool, bool, bool)> =
            (0..8).filter(|k| mask & (1 << k) != 0).map(|k| kinds[k]).collect();
        let mut orders = vec![subset.clone()];
        let mut rev = subset.clone();
        rev.reverse();
        orders.push(rev);
        for rows in orders {
            let results: Vec<PoCResult> = rows
                .iter()
                .enumerate()
                .map(|(i, &(ok, t, p))| result(i, ok, t, p))
                .collect();
            let v = classify(&results);
            let (class, witness, rationale) = reference(&rows);
            assert_eq!(v.class, class, "rows {rows:?}");
            assert_eq!(Some(v.rationale), rationale, "rows {rows:?}");
            assert_eq!(v.witness_poc, witness.map(|i| results[i].poc_id), "rows {rows:?}");
            let expect_evidence = witness.map(|i| results[i].trigger_evidence.clone()).unwrap_or_default();
            assert_eq!(v.evidence, expect_evidence);
            assert_eq!(v.class.exit_code(), match class {
                VerdictClass::Exploitable => 0,
                VerdictClass::NonExploitable => 1,
                VerdictClass::ManuallyCheck => 2,
            });
            checked += 1;
        }
    }
    assert_eq!(checked, 512);
    assert!(started.elapsed() < Duration::from_secs(1), "took {:?}", started.elapsed());
    format!("{checked} orderings")
}

// ---- 3 ----------------------------------------------------------------

fn acct(n: &str) -> Address {
    Address::of_account(n)
}

fn ev(seq: u64, kind: EventKind) -> TraceEvent {
    TraceEvent {
        seq,
        phase: Phase::Exploit,
        from_cheatcode: false,
        kind,
        node_id: None,
    }
}

fn enter(tx: u32, origin: &str, f: &str, depth: u32) -> EventKind {
    EventKind::CallEnter {
        tx_index: tx,
        caller: acct(origin),
        tx_origin: acct(origin),
        target: Address::of_contract("C"),
        function: f.into(),
        value: U256::zero(),
        depth,
    }
}

fn exit() -> EventKind {
    EventKind::CallExit {
        status: CallStatus::Success,
    }
}

fn pay(to: &str, amount: u64) -> EventKind {
    EventKind::ValueTransfer {
        from: Address::of_contract("C"),
        to: acct(to),
        amount: U256::from(amount),
        asset: NATIVE.into(),
    }
}

fn read(slot: &str) -> EventKind {
    EventKind::StorageRead { slot: slot.into() }
}

fn write(slot: &str) -> EventKind {
    EventKind::StorageWrite {
        slot: slot.into(),
        old: Value::Uint(U256::zero()),
        new: Value::Uint(U256::one()),
    }
}

fn numbered(kinds: Vec<EventKind>) -> Vec<TraceEvent> {
    kinds.into_iter().enumerate().map(|(i, k)| ev(i as u64, k)).collect()
}

fn outcome_of(trace: Vec<TraceEvent>) -> ExecutionOutcome {
    ExecutionOutcome {
        executed_ok: true,
        trace,
        revert_info: None,
        balance_deltas: BTreeMap::new(),
        accounts: BTreeMap::new(),
        final_state: WorldState {
            storage: BTreeMap::new(),
            native: BTreeMap::new(),
            assets: BTreeMap::new(),
            block: BlockEnv {
                number: DEFAULT_BLOCK_NUMBER,
                timestamp: DEFAULT_TIMESTAMP,
            },
            deployed: true,
            destroyed: false,
        },
    }
}

/// Hand-built (positive, negative, expected evidence) traces per class.
fn handbuilt() -> Vec<(VulnClass, Vec<TraceEvent>, Vec<TraceEvent>, Vec<u64>)> {
    let me = "attacker";
    vec![
        (
            VulnClass::Uew,
            numbered(vec![enter(0, me, "withdraw", 1), read("x"), pay(me, 5), exit()]),
            numbered(vec![enter(0, me, "withdraw", 1), read("x"), pay("user1", 5), exit()]),
            vec![2],
        ),
        (
            VulnClass::Us,
            numbered(vec![
                enter(0, me, "kill", 1),
                EventKind::Selfdestruct {
                    beneficiary: acct(me),
                },
                exit(),
            ]),
            numbered(vec![enter(0, me, "kill", 1), write("x"), exit()]),
            vec![1],
        ),
        (
            VulnClass::Rca,
            numbered(vec![
                enter(0, me, "draw", 1),
                EventKind::BlockAttrRead {
                    attr: BlockAttr::Timestamp,
                },
                exit(),
            ]),
            numbered(vec![enter(0, me, "draw", 1), read("seed"), exit()]),
            vec![1],
        ),
        (
            VulnClass::Re,
            numbered(vec![
                enter(0, me, "Collect", 1),
                pay(me, 1),
                enter(0, me, "Collect", 2),
                exit(),
                exit(),
            ]),
            numbered(vec![
                enter(0, me, "Collect", 1),
                exit(),
                enter(0, me, "Collect", 1),
                exit(),
            ]),
            vec![0, 2],
        ),
        (
            VulnClass::Tod,
            numbered(vec![
                enter(0, "user1", "set", 1),
                write("price"),
                exit(),
                enter(1, me, "buy", 1),
                read("price"),
                exit(),
            ]),
            numbered(vec![
                enter(0, me, "buy", 1),
                read("price"),
                exit(),
                enter(1, "user1", "set", 1),
                write("price"),
                exit(),
            ]),
            vec![1, 4],
        ),
    ]
}

fn random_event<R: Rng>(rng: &mut R) -> EventKind {
    let who = *["attacker", "user1"].choose(rng).unwrap();
    match rng.gen_range(0..8) {
        0 => enter(rng.gen_range(0..3), who, ["f", "g"].choose(rng).unwrap(), rng.gen_range(1..4)),
        1 => exit(),
        2 => read(["a", "b"].choose(rng).unwrap()),
        3 => write(["a", "b"].choose(rng).unwrap()),
        4 => pay(who, rng.gen_range(1..4)),
        5 => EventKind::BlockAttrRead {
            attr: *[BlockAttr::Number, BlockAttr::Timestamp, BlockAttr::Blockhash]
                .choose(rng)
                .unwrap(),
        },
        6 => EventKind::Selfdestruct {
            beneficiary: acct(who),
        },
        _ => EventKind::Revert {
            message: "x".into(),
        },
    }
}

fn c3_trigger_rules() -> String {
    let id = PocId::of_bytes(b"trace");
    for (class, pos, neg, evidence) in handbuilt() {
        let hit = check_trigger(&pos, class);
        assert!(hit.triggered, "{class} positive");
        assert_eq!(hit.evidence, evidence, "{class} evidence");
        assert!(!check_trigger(&neg, class).triggered, "{class} negative");
        let r = evaluate(id, &outcome_of(pos), class, &Valuation::Unit).unwrap();
        assert!(r.triggered);
        assert_eq!(r.trigger_evidence, evidence);
        let r = evaluate(id, &outcome_of(neg), class, &Valuation::Unit).unwrap();
        assert!(!r.triggered);
    }

    // Set-up and cheatcode events must never change what the rule sees.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let base_cases = handbuilt();
    let mut fired = 0;
    for trial in 0..1000 {
        let class = *VulnClass::ALL.choose(&mut rng).unwrap();
        let base: Vec<TraceEvent> = if rng.gen_bool(0.4) {
            let (_, pos, neg, _) = base_cases.iter().find(|c| c.0 == class).unwrap().clone();
            if rng.gen_bool(0.5) {
                pos
            } else {
                neg
            }
        } else {
            numbered((0..rng.gen_range(0..14)).map(|_| random_event(&mut rng)).collect())
        };
        let expected = check_trigger(&base, class);
        let mut noisy = base.clone();
        for k in 0..rng.gen_range(1..8) {
            let mut e = ev(1_000_000 + k, random_event(&mut rng));
            if rng.gen_bool(0.5) {
                e.phase = Phase::SetUp;
            } else {
                e.from_cheatcode = true;
            }
            let at = rng.gen_range(0..=noisy.len());
            noisy.insert(at, e);
        }
        let r = evaluate(id, &outcome_of(noisy), class, &Valuation::Unit).unwrap();
        assert_eq!(
            (r.triggered, &r.trigger_evidence),
            (expected.triggered, &expected.evidence),
            "trial {trial} class {class}"
        );
        fired += usize::from(expected.triggered);
    }
    format!("10 hand-built traces, 1000 noisy trials ({fired} triggering)")
}

// ---- 4 ----------------------------------------------------------------

fn c4_entry_functions() -> String {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut compared = 0;
    let mut nonempty = 0;
    for i in 0..500 {
        let g = random_contract(&mut rng, 6);
        let unit = parse(&g.source, &format!("gen{i}.msol"))
            .unwrap_or_else(|e| panic!("generated contract {i} does not parse: {e}\n{}", g.source));
        for f in &g.functions {
            let got = entry_functions(&unit, &f.name).unwrap();
            let want = g.entries_oracle(&f.name);
            assert_eq!(got, want, "contract {i}, f_test {}\n{}", f.name, g.source);
            compared += 1;
            nonempty += usize::from(!want.is_empty());
        }
    }
    assert!(compared >= 500);
    assert!(started.elapsed() < Duration::from_secs(30), "took {:?}", started.elapsed());
    format!("500 contracts, {compared} targets, {nonempty} with entries")
}

// ---- 5 ----------------------------------------------------------------

fn primitive_children(unit: &ContractUnit, report: &VulnReport, poc: &PoC) -> Vec<PoC> {
    let mut out = Vec::new();
    for op in PrimitiveOp::ALL {
        let req = SynthesizerRequest {
            mode: RequestMode::RefinePrimitive,
            unit,
            report,
            path: &poc.meta.path,
            prior: Some(poc),
            failure: None,
            op: Some(op),
            stage: Some(Stage::Trigger),
        };
        if let Ok(resp) = TemplateBackend.respond(&req) {
            out.extend(resp.candidates);
        }
    }
    out
}

fn default_args(unit: &ContractUnit, report: &VulnReport, f: &str) -> Vec<ArgValue> {
    if let Some(args) = report.extra.arguments.get(f) {
        return args.clone();
    }
    unit.contract()
        .function(f)
        .map(|d| {
            d.params
                .iter()
                .map(|p| match p.ty {
                    pocforge::frontend::VarType::Bool => ArgValue::Bool(true),
                    pocforge::frontend::VarType::Address => ArgValue::Account(ATTACKER.into()),
                    _ => ArgValue::Uint(U256::one()),
                })
                .collect()
        })
        .unwrap_or_default()
}

fn candidates(unit: &ContractUnit, report: &VulnReport) -> Vec<PoC> {
    let mut out = Vec::new();
    let paths = build_paths(unit, report).unwrap();
    for path in &paths {
        let seed = synthesize(unit, report, path, &TemplateBackend).unwrap();
        let level1 = primitive_children(unit, report, &seed);
        for c in &level1 {
            out.extend(primitive_children(unit, report, c));
        }
        out.push(seed);
        out.extend(level1);
    }
    let base = out[0].clone();
    let (setup, _, _) = base.parts();
    for f in &unit.contract().functions {
        let args = default_args(unit, report, &f.name);
        let value = if f.payable { U256::one() } else { U256::zero() };
        for caller in [ATTACKER, DEPLOYER] {
            let call = Action::call(caller, unit.name(), &f.name, args.clone(), value);
            out.push(PoC::new(setup.clone(), vec![call.clone()], None, base.meta.clone()));
            if !block_attributes_read(unit, &f.name).is_empty() {
                for k in 0..8u64 {
                    let exploit = vec![
                        Action::Warp {
                            timestamp: DEFAULT_TIMESTAMP + k,
                        },
                        Action::Roll {
                            block_number: DEFAULT_BLOCK_NUMBER + k / 2,
                        },
                        call.clone(),
                    ];
                    out.push(PoC::new(setup.clone(), exploit, None, base.meta.clone()));
                }
            }
        }
    }
    out
}

fn check_statements(unit: &ContractUnit) -> Vec<NodeId> {
    unit.node_ids()
        .filter(|id| {
            unit.statement(*id)
                .is_some_and(|s| matches!(s.class(), StmtClass::Check | StmtClass::StateUpdate))
        })
        .collect()
}

fn c5_localization() -> String {
    let mut located = 0;
    let mut in_modifier = 0;
    let mut in_ctor = 0;
    for (file, unit, report) in fixtures() {
        let pocs = candidates(&unit, &report);
        for node in check_statements(&unit) {
            let options = ExecOptions {
                inject_revert_at: Some(node),
            };
            let hit = pocs.iter().find_map(|p| {
                let out = execute_poc_with(&unit, p, ExecLimits::default(), options.clone());
                let info = out.revert_info.as_ref()?;
                (info.message == "injected revert").then(|| (p.clone(), out))
            });
            let (poc, out) = hit.unwrap_or_else(|| {
                panic!("{file}: no candidate reaches `{}`", unit.text_of(node).unwrap())
            });
            let ctx = localize_failure(&out, &unit)
                .unwrap_or_else(|_| panic!("{file}: `{}` not localized", unit.text_of(node).unwrap()));
            let loc = ctx.location.unwrap();
            assert_eq!(loc.node, node, "{file}");
            let info = out.revert_info.as_ref().unwrap();
            let expected = match unit.enclosing_function(node).unwrap() {
                Enclosing::Function(f) => f.name.clone(),
                Enclosing::Constructor(_) => {
                    in_ctor += 1;
                    "constructor".to_string()
                }
                Enclosing::Modifier(_) => {
                    in_modifier += 1;
                    let actions = match info.phase {
                        Phase::SetUp => poc.setup(),
                        Phase::Exploit => poc.exploit(),
                    };
                    match &actions[info.action_index] {
                        Action::Call { function, .. } => function.clone(),
                        other => panic!("{file}: modifier failure in non-call action {other:?}"),
                    }
                }
            };
            assert_eq!(loc.enclosing_function, expected, "{file}: `{}`", loc.source_text);
            located += 1;
        }
    }
    assert!(located > 20, "only {located} statements checked");
    format!("{located} statements, {in_modifier} in modifiers, {in_ctor} in constructors")
}

// ---- 6 ----------------------------------------------------------------

fn c6_operator_matrix() -> String {
    use PrimitiveOp::*;
    use VulnClass::*;
    // (operator, classes in the trigger stage, classes in the profit stage)
    let table: [(PrimitiveOp, &[VulnClass], &[VulnClass]); 5] = [
        (AddUser, &[], &[Rca, Tod, Uew]),
        (ChangeInvoker, &[Re, Uew, Us], &[]),
        (ChangeOrder, &[], &[Tod, Uew]),
        (ModifyBlock, &[Rca], &[]),
        (ChangeArgument, &[Uew, Us, Re, Tod, Rca], &[Uew, Us, Re, Tod, Rca]),
    ];
    let (unit, report) = load("bank_unchecked.msol", "bank.report.json");
    let path = build_paths(&unit, &report).unwrap().remove(0);
    let seed = synthesize(&unit, &report, &path, &TemplateBackend).unwrap();

    let mut cells = 0;
    for (op, ta, pa) in table {
        for stage in [Stage::Trigger, Stage::Profit] {
            let allowed = if stage == Stage::Trigger { ta } else { pa };
            for class in VulnClass::ALL {
                let want = allowed.contains(&class);
                assert_eq!(op.applicable(class, stage), want, "{op} {class} {stage:?}");
                assert_eq!(select_primitive_ops(class, stage).contains(&op), want);
                if !want {
                    let mut poc = seed.clone();
                    poc.meta.path.vuln_class = class;
                    let err = refine_primitive(&unit, &report, &poc, op, stage, &TemplateBackend).unwrap_err();
                    assert!(matches!(err, RefineError::InapplicableOp { .. }), "{op} {class} {stage:?}");
                }
                cells += 1;
            }
        }
    }
    assert_eq!(cells, 50);
    format!("{cells} cells")
}

// ---- 7 ----------------------------------------------------------------

fn c7_order_and_block() -> String {
    let started = Instant::now();
    let puzzle = run_fixture("puzzle.msol", "puzzle.report.json");
    assert_eq!(puzzle.verdict.class, VerdictClass::Exploitable);
    for row in &puzzle.results {
        let wins = row.executed_ok && row.triggered && row.profited;
        assert_eq!(wins, row.origin == "primitive_op:change_order" && wins, "row {}", row.origin);
    }
    let last = puzzle.results.last().unwrap();
    assert_eq!(last.origin, "primitive_op:change_order");
    assert!(last.triggered && last.profited);

    let lottery = run_fixture("lottery.msol", "lottery.report.json");
    assert_eq!(lottery.verdict.class, VerdictClass::NonExploitable);
    assert_eq!(lottery.verdict.rationale, Rationale::TriggeredWithoutProfit);
    assert_eq!(lottery.verdict.evidence.len(), 1);
    for row in &lottery.results {
        assert!(row.profit.is_empty(), "row {} has profit {:?}", row.id, row.profit);
        assert!(!row.profited);
    }
    assert!(started.elapsed() < Duration::from_secs(60), "took {:?}", started.elapsed());
    format!(
        "puzzle won after {} runs, lottery {} runs without profit",
        puzzle.results.len(),
        lottery.results.len()
    )
}

// ---- 8 ----------------------------------------------------------------

/// Returns whether the run burned anything.
fn check_conservation(unit: &ContractUnit, out: &ExecutionOutcome, label: &str) -> bool {
    let contract = Address::of_contract(unit.name());
    let (ledger, burned) = replay_native(out, contract);
    assert_eq!(
        ledger.keys().collect::<BTreeSet<_>>(),
        out.final_state.native.keys().collect::<BTreeSet<_>>(),
        "{label}: accounts differ"
    );
    for (a, v) in &out.final_state.native {
        let v = BigInt::from_bytes_be(num_bigint::Sign::Plus, &v.to_big_endian());
        assert_eq!(ledger[a], v, "{label}: balance of {a:?}");
    }
    let total: BigInt = out
        .balance_deltas
        .values()
        .filter_map(|m| m.get(NATIVE))
        .sum();
    assert_eq!(total, -&burned, "{label}: deltas do not net to the burned amount");
    burned != BigInt::from(0)
}

fn c8_conservation() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut units: Vec<(String, ContractUnit)> =
        fixtures().into_iter().map(|(f, u, _)| (f, u)).collect();
    for i in 0..40 {
        let g = random_contract(&mut rng, 4);
        units.push((format!("random {i}"), parse(&g.source, "r.msol").unwrap()));
    }
    let limits = ExecLimits::default();
    let mut reverted = 0;
    let mut burns = 0;
    for trial in 0..1000 {
        let (name, unit) = units.choose(&mut rng).unwrap();
        let poc = random_poc(&mut rng, unit);
        let out = execute_poc(unit, &poc, limits);
        let label = format!("trial {trial} on {name}");
        match truncate_before_revert(&poc, &out) {
            None => burns += usize::from(check_conservation(unit, &out, &label)),
            Some(prefix) => {
                reverted += 1;
                let before = execute_poc(unit, &prefix, limits);
                assert!(before.executed_ok, "{label}: prefix of a reverted run failed");
                assert_eq!(before.final_state, out.final_state, "{label}: revert was not atomic");
                burns += usize::from(check_conservation(unit, &before, &label));
            }
        }
    }
    assert!(reverted > 50, "only {reverted} reverted runs");
    format!("1000 runs, {reverted} reverted, {burns} with burns")
}

// ---- 9 ----------------------------------------------------------------

fn c9_determinism() -> String {
    for (c, r) in FIXTURES {
        let a = run_fixture(c, r).normalized().to_json_pretty();
        let b = run_fixture(c, r).normalized().to_json_pretty();
        assert_eq!(a, b, "{c}");
    }
    format!("{} fixtures", FIXTURES.len())
}
