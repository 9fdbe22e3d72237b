//! MiniSol frontend: lexer, recursive-descent parser, resolver and printer.
//!
//! A MiniSol file holds one `mode checked;`/`mode unchecked;` directive
//! followed by a single contract. The grammar is documented in
//! `docs/minisol-grammar.md`.

pub mod ast;
mod error;
mod lexer;
mod parser;
mod printer;
mod resolve;
mod span;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

pub use ast::*;
pub use error::{FrontendError, NodeError, ParseError, ResolveError};
pub use parser::NodeKind;
pub use span::{Position, SourceSpan};

use parser::NodeInfo;

/// Identifies a parsed unit. Derived from the file id and source text, so it
/// is stable across runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UnitTag(pub u32);

/// Globally unique AST node handle: unit tag plus per-unit index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId {
    pub unit: UnitTag,
    pub index: NodeIx,
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:08x}:{}", self.unit.0, self.index.0)
    }
}

impl FromStr for NodeId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (unit, index) = s
            .split_once(':')
            .ok_or_else(|| format!("node id `{s}` is not of the form <unit>:<index>"))?;
        let unit = u32::from_str_radix(unit, 16).map_err(|e| format!("node id unit: {e}"))?;
        let index = index.parse().map_err(|e| format!("node id index: {e}"))?;
        Ok(NodeId {
            unit: UnitTag(unit),
            index: NodeIx(index),
        })
    }
}

impl Serialize for NodeId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The innermost declaration that owns a node.
#[derive(Debug, Clone, Copy)]
pub enum Enclosing<'a> {
    Function(&'a FunctionDecl),
    Constructor(&'a FunctionDecl),
    Modifier(&'a ModifierDecl),
}

impl Enclosing<'_> {
    pub fn name(&self) -> &str {
        match self {
            Enclosing::Function(f) | Enclosing::Constructor(f) => &f.name,
            Enclosing::Modifier(m) => &m.name,
        }
    }
}

/// A parsed, resolved MiniSol contract with its span table. Immutable once
/// built.
#[derive(Debug, Clone)]
pub struct ContractUnit {
    tag: UnitTag,
    file: Arc<str>,
    source: Arc<str>,
    contract: Contract,
    nodes: Vec<NodeInfo>,
}

/// Parses and resolves MiniSol source.
pub fn parse(source: &str, file_id: &str) -> Result<ContractUnit, FrontendError> {
    let file: Arc<str> = Arc::from(file_id);
    let parsed = parser::parse_tokens(source, file.clone())?;
    if parsed.mode_directives != 1 {
        return Err(ResolveError::ModeDirective {
            found: parsed.mode_directives,
        }
        .into());
    }
    let mut contract = parsed.contract;
    resolve::Resolver::new(&parsed.nodes).resolve(&mut contract)?;
    if let Some(dup) = contract.functions.iter().find(|f| f.is_constructor) {
        let span = &parsed.nodes[dup.id.0 as usize].span;
        return Err(ResolveError::Duplicate {
            namespace: "constructor",
            name: "constructor".into(),
            line: span.start_line,
            col: span.start_col,
        }
        .into());
    }
    let mut h = Sha256::new();
    h.update(file_id.as_bytes());
    h.update([0u8]);
    h.update(source.as_bytes());
    let digest = h.finalize();
    let tag = UnitTag(u32::from_be_bytes([digest[0], digest[1], digest[2], digest[3]]));
    Ok(ContractUnit {
        tag,
        file,
        source: Arc::from(source),
        contract,
        nodes: parsed.nodes,
    })
}

impl ContractUnit {
    pub fn contract(&self) -> &Contract {
        &self.contract
    }

    pub fn name(&self) -> &str {
        &self.contract.name
    }

    pub fn mode(&self) -> ArithmeticMode {
        self.contract.mode
    }

    pub fn tag(&self) -> UnitTag {
        self.tag
    }

    pub fn file(&self) -> &str {
        &self.file
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn node_id(&self, ix: NodeIx) -> NodeId {
        NodeId {
            unit: self.tag,
            index: ix,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// All node ids of this unit in index order.
    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len() as u32).map(|i| self.node_id(NodeIx(i)))
    }

    fn info(&self, id: NodeId) -> Result<&NodeInfo, NodeError> {
        if id.unit != self.tag {
            return Err(NodeError::UnknownNode(id.to_string()));
        }
        self.nodes
            .get(id.index.0 as usize)
            .ok_or_else(|| NodeError::UnknownNode(id.to_string()))
    }

    pub fn span_of(&self, id: NodeId) -> Result<&SourceSpan, NodeError> {
        self.info(id).map(|n| &n.span)
    }

    pub fn kind_of(&self, id: NodeId) -> Result<NodeKind, NodeError> {
        self.info(id).map(|n| n.kind)
    }

    pub fn parent_of(&self, id: NodeId) -> Result<Option<NodeId>, NodeError> {
        self.info(id).map(|n| n.parent.map(|p| self.node_id(p)))
    }

    /// Source text covered by a node.
    pub fn text_of(&self, id: NodeId) -> Result<&str, NodeError> {
        let span = self.span_of(id)?;
        Ok(&self.source[span.byte_range()])
    }

    /// Innermost function, constructor or modifier containing `id`.
    pub fn enclosing_function(&self, id: NodeId) -> Result<Enclosing<'_>, NodeError> {
        let mut cur = Some(id.index);
        self.info(id)?;
        while let Some(ix) = cur {
            let info = &self.nodes[ix.0 as usize];
            match info.kind {
                NodeKind::Function => {
                    let f = self
                        .contract
                        .functions
                        .iter()
                        .find(|f| f.id == ix)
                        .expect("function node registered");
                    return Ok(Enclosing::Function(f));
                }
                NodeKind::Constructor => {
                    let c = self.contract.constructor.as_ref().expect("constructor node");
                    return Ok(Enclosing::Constructor(c));
                }
                NodeKind::Modifier => {
                    let m = self
                        .contract
                        .modifiers
                        .iter()
                        .find(|m| m.id == ix)
                        .expect("modifier node registered");
                    return Ok(Enclosing::Modifier(m));
                }
                _ => cur = info.parent,
            }
        }
        Err(NodeError::NotInFunction(id.to_string()))
    }

    /// Looks up a statement node anywhere in the contract.
    pub fn statement(&self, id: NodeId) -> Option<&Statement> {
        if id.unit != self.tag {
            return None;
        }
        let mut found = None;
        for body in self.bodies() {
            walk_statements(body, &mut |s| {
                if s.id == id.index {
                    found = Some(s);
                }
            });
            if found.is_some() {
                break;
            }
        }
        found
    }

    /// Every statement body: constructor, functions, then modifiers.
    pub fn bodies(&self) -> impl Iterator<Item = &[Statement]> {
        self.contract
            .constructor
            .iter()
            .chain(self.contract.functions.iter())
            .map(|f| f.body.as_slice())
            .chain(self.contract.modifiers.iter().map(|m| m.body.as_slice()))
    }

    /// Canonical source for this unit; re-parses to the same tree.
    pub fn to_source(&self) -> String {
        self.contract.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BANK: &str = r#"mode unchecked;
contract Bank {
    mapping(address => uint256) balances;
    address owner;

    constructor() {
        owner = msg.sender;
    }

    function deposit() payable {
        require(msg.value > 0, "zero deposit");
        balances[msg.sender] += msg.value;
    }

    function Collect(uint256 _am) {
        require(balances[msg.sender] >= _am, "insufficient balance");
        call(msg.sender, _am);
        balances[msg.sender] -= _am;
    }
}
"#;

    fn bank() -> ContractUnit {
        parse(BANK, "bank.msol").unwrap()
    }

    #[test]
    fn empty_contract() {
        let u = parse("mode checked; contract C {}", "c.msol").unwrap();
        assert_eq!(u.name(), "C");
        assert_eq!(u.mode(), ArithmeticMode::Checked);
        assert!(u.contract().functions.is_empty());
    }

    #[test]
    fn collect_has_call_then_update() {
        let u = bank();
        let collect = u.contract().function("Collect").unwrap();
        let kinds: Vec<_> = collect.body.iter().map(|s| s.class()).collect();
        assert_eq!(
            kinds,
            vec![StmtClass::Check, StmtClass::Other, StmtClass::StateUpdate]
        );
        assert!(matches!(collect.body[1].kind, StmtKind::ExternalCall { reenter: true, .. }));
        assert!(matches!(
            collect.body[2].kind,
            StmtKind::Assign {
                op: AssignOp::Sub,
                ..
            }
        ));
    }

    #[test]
    fn malformed_parameter_list() {
        let err = parse("contract C { function f( {", "bad.msol").unwrap_err();
        match err {
            FrontendError::Parse(ParseError::Syntax {
                line,
                col,
                expected,
                ..
            }) => {
                assert_eq!((line, col), (1, 26));
                assert!(expected.iter().any(|e| e.contains("uint256")));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mode_directive_required_once() {
        assert!(matches!(
            parse("contract C {}", "c"),
            Err(FrontendError::Resolve(ResolveError::ModeDirective { found: 0 }))
        ));
        assert!(matches!(
            parse("mode checked; mode unchecked; contract C {}", "c"),
            Err(FrontendError::Resolve(ResolveError::ModeDirective { found: 2 }))
        ));
    }

    #[test]
    fn resolve_errors() {
        let undeclared = "mode checked; contract C { function f() { x = 1; } }";
        assert!(matches!(
            parse(undeclared, "c"),
            Err(FrontendError::Resolve(ResolveError::Undeclared { .. }))
        ));
        let dup = "mode checked; contract C { uint256 a; bool a; }";
        assert!(matches!(
            parse(dup, "c"),
            Err(FrontendError::Resolve(ResolveError::Duplicate { .. }))
        ));
        let unknown_mod = "mode checked; contract C { function f() onlyOwner { } }";
        assert!(matches!(
            parse(unknown_mod, "c"),
            Err(FrontendError::Resolve(ResolveError::UnknownModifier { .. }))
        ));
        let bad_type = "mode checked; contract C { uint256 a; function f() { a = true; } }";
        assert!(matches!(
            parse(bad_type, "c"),
            Err(FrontendError::Resolve(ResolveError::Type { .. }))
        ));
    }

    #[test]
    fn span_of_require_line() {
        let u = bank();
        let f = u.contract().function("deposit").unwrap();
        let req = u.node_id(f.body[0].id);
        let span = u.span_of(req).unwrap();
        assert_eq!(span.start_line, 11);
        assert_eq!(u.text_of(req).unwrap(), "require(msg.value > 0, \"zero deposit\");");
    }

    #[test]
    fn root_span_covers_contract() {
        let u = bank();
        let root = u.node_id(u.contract().id);
        let span = u.span_of(root).unwrap();
        assert_eq!(span.start_line, 2);
        assert!(u.text_of(root).unwrap().starts_with("contract Bank {"));
        assert!(u.text_of(root).unwrap().ends_with('}'));
    }

    #[test]
    fn stale_node_is_unknown() {
        let u = bank();
        let other = parse("mode checked; contract D { uint256 x; }", "d.msol").unwrap();
        let stale = other.node_id(NodeIx(1));
        assert!(matches!(u.span_of(stale), Err(NodeError::UnknownNode(_))));
        assert!(matches!(
            u.enclosing_function(stale),
            Err(NodeError::UnknownNode(_))
        ));
    }

    #[test]
    fn enclosing_function_lookup() {
        let u = bank();
        let collect = u.contract().function("Collect").unwrap();
        let req = u.node_id(collect.body[0].id);
        assert_eq!(u.enclosing_function(req).unwrap().name(), "Collect");

        let ctor = u.contract().constructor.as_ref().unwrap();
        let assign = u.node_id(ctor.body[0].id);
        assert!(matches!(
            u.enclosing_function(assign).unwrap(),
            Enclosing::Constructor(_)
        ));

        let var = u.node_id(u.contract().state_vars[0].id);
        assert!(matches!(
            u.enclosing_function(var),
            Err(NodeError::NotInFunction(_))
        ));
    }

    #[test]
    fn spans_nest_in_parents() {
        let u = bank();
        for id in u.node_ids() {
            if let Some(p) = u.parent_of(id).unwrap() {
                assert!(
                    u.span_of(p).unwrap().contains(u.span_of(id).unwrap()),
                    "{id} not inside parent {p}"
                );
            }
        }
    }

    #[test]
    fn printer_round_trip() {
        let u = bank();
        let printed = u.to_source();
        let again = parse(&printed, "bank.msol").unwrap();
        assert_eq!(u.contract(), again.contract());
    }

    #[test]
    fn node_id_text_form() {
        let id: NodeId = "0000abcd:12".parse().unwrap();
        assert_eq!(id.to_string(), "0000abcd:12");
        assert!("nope".parse::<NodeId>().is_err());
    }
}
