use std::fmt::Write as _;

use super::{block_attributes_read, RequestMode, SynthesizerRequest};
use crate::analysis::VulnClass;
use crate::vm::EventKind;

/// What to look for in each vulnerability class. Written for this tool;
/// one paragraph per class.
pub fn feature_text(class: VulnClass) -> &'static str {
    match class {
        VulnClass::Uew => {
            "Funds leave the contract toward whoever started the transaction, and nothing \
             stops an arbitrary account from asking for them. A working exploit has the \
             attacker originate a transaction that ends with ether sent to the attacker."
        }
        VulnClass::Us => {
            "The contract can be destroyed by a caller that should not have that power. \
             A working exploit reaches the selfdestruct statement from the attacker account, \
             ideally naming the attacker as the beneficiary of the remaining balance."
        }
        VulnClass::Re => {
            "The function hands control to the caller before it finishes updating its own \
             bookkeeping. A working exploit re-enters the same function from the attacker's \
             fallback while the outer call is still running, so stale state is reused."
        }
        VulnClass::Tod => {
            "The outcome depends on which transaction lands first. A working exploit shows \
             one transaction writing state that a later transaction reads, with the attacker \
             placed where the ordering pays off."
        }
        VulnClass::Rca => {
            "The function derives a decision from block number, timestamp or block hash, \
             values a miner or a well-timed caller can predict. A working exploit picks block \
             conditions under which the decision favours the attacker."
        }
    }
}

const OUTPUT_RULES: &str = "\
Reply with one JSON object and nothing else:
{\"setup\": [...], \"exploit\": [...], \"attacker_fallback\": [...]}
Each entry is an action object with a \"kind\" field:
  {\"kind\": \"deploy\", \"contract\": NAME, \"args\": [...], \"value\": \"N\"}
  {\"kind\": \"call\", \"caller\": ACCOUNT, \"target\": NAME, \"function\": F, \"args\": [...], \"value\": \"N\"}
  {\"kind\": \"deal\", \"account\": ACCOUNT, \"amount\": \"N\"}
  {\"kind\": \"deal_asset\", \"account\": ACCOUNT, \"asset\": A, \"amount\": \"N\"}
  {\"kind\": \"prank\", \"account\": ACCOUNT}
  {\"kind\": \"warp\", \"timestamp\": N}
  {\"kind\": \"roll\", \"block_number\": N}
Accounts are \"attacker\", \"deployer\" and \"user1\", \"user2\", ... .
Arguments are decimal strings, booleans, or \"@account\" for an address.
Setup deploys the contract exactly once, from the deployer. The attacker never deploys.
attacker_fallback holds the calls the attacker makes whenever it receives ether, and may be omitted.
The exploit must show the attacker ending with more value than it started with.";

/// Renders the request as a chat prompt.
pub fn build_prompt(req: &SynthesizerRequest<'_>) -> String {
    let unit = req.unit;
    let c = unit.contract();
    let path = req.path;
    let mut p = String::new();

    let _ = writeln!(p, "## Contract setup");
    let _ = writeln!(p, "Contract `{}` ({} arithmetic).", unit.name(), unit.mode().keyword());
    let _ = writeln!(p, "Constructor: `{}`", req.constructor_signature());
    let _ = writeln!(p, "```\n{}\n```\n", unit.source().trim_end());

    let _ = writeln!(p, "## Exploit path");
    match &path.entry {
        Some(e) => {
            let sig = c.function(e).map(|f| f.signature()).unwrap_or_else(|| e.clone());
            let _ = writeln!(p, "First call `{sig}` to prepare state.");
        }
        None => {
            let _ = writeln!(p, "Call the target directly.");
        }
    }
    let target_sig = c
        .function(&path.target)
        .map(|f| f.signature())
        .unwrap_or_else(|| path.target.clone());
    let _ = writeln!(p, "Target: `{target_sig}` ({}).", path.vuln_class);
    if !path.shared_state.is_empty() {
        let shared: Vec<String> = path.shared_state.iter().map(|s| s.to_string()).collect();
        let _ = writeln!(p, "Shared state: {}.", shared.join(", "));
    }
    p.push('\n');

    let _ = writeln!(p, "## Vulnerability traits");
    let _ = writeln!(p, "{}\n", feature_text(path.vuln_class));

    let _ = writeln!(p, "## Output requirements");
    let _ = writeln!(p, "{OUTPUT_RULES}\n");

    let _ = writeln!(p, "## Additional context");
    let extra = serde_json::to_string(&req.report.extra).unwrap_or_default();
    if extra != "{}" {
        let _ = writeln!(p, "Report hints: {extra}");
    }
    if let Some(prior) = req.prior {
        let script = serde_json::json!({
            "setup": prior.setup(),
            "exploit": prior.exploit(),
            "attacker_fallback": prior.attacker_fallback(),
        });
        let _ = writeln!(p, "Previous attempt:\n{script:#}");
    }
    match req.mode {
        RequestMode::Synthesize => {}
        RequestMode::RefineFailure => {
            if let Some(f) = req.failure {
                let _ = writeln!(p, "The previous attempt reverted with `{}`.", f.revert_message);
                if let Some(loc) = &f.location {
                    let _ = writeln!(
                        p,
                        "It stopped at line {} in `{}`: `{}`",
                        loc.span.start_line, loc.enclosing_function, loc.source_text
                    );
                }
                let tail: Vec<String> = f.trace_suffix.iter().map(describe_event).collect();
                if !tail.is_empty() {
                    let _ = writeln!(p, "Last events:\n{}", tail.join("\n"));
                }
                let _ = writeln!(p, "Fix the script so it runs to completion.");
            }
        }
        RequestMode::RefinePrimitive => {
            if let Some(op) = req.op {
                let attrs = block_attributes_read(unit, &path.target);
                let attrs = if attrs.is_empty() {
                    "the block timestamp or number".to_string()
                } else {
                    attrs.join(" and ")
                };
                let _ = writeln!(p, "{}", op.instruction(unit.name(), &path.target, &attrs));
            }
        }
    }
    p
}

fn describe_event(e: &crate::vm::TraceEvent) -> String {
    let what = match &e.kind {
        EventKind::CallEnter { function, depth, .. } => format!("enter {function} (depth {depth})"),
        EventKind::CallExit { status } => format!("exit {status:?}"),
        EventKind::StorageRead { slot } => format!("read {slot}"),
        EventKind::StorageWrite { slot, .. } => format!("write {slot}"),
        EventKind::ValueTransfer { amount, asset, .. } => format!("transfer {amount} {asset}"),
        EventKind::BlockAttrRead { attr } => format!("read block {attr:?}"),
        EventKind::Selfdestruct { .. } => "selfdestruct".to_string(),
        EventKind::Revert { message } => format!("revert `{message}`"),
        EventKind::CheatcodeApplied { kind } => format!("cheatcode {kind}"),
    };
    format!("  #{} {what}", e.seq)
}
