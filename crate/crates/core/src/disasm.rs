//! Disassembler output parsing: instruction listings and control-flow graphs.
//!
//! Three listing dialects are understood: a canonical one-instruction-per-line
//! format, the default text output of a linear-sweep disassembler (ndisasm),
//! and the `pd` text of a flow-aware disassembler (radare2). CFG dumps come
//! either in a canonical `block`/`edge` text format or as radare2 `agj` JSON.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstructionLine {
    pub address: Option<u64>,
    /// Lowercased.
    pub mnemonic: String,
    pub operand_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dialect {
    Canonical,
    Ndisasm,
    Radare2Text,
}

impl FromStr for Dialect {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "canonical" => Ok(Dialect::Canonical),
            "ndisasm" => Ok(Dialect::Ndisasm),
            "radare2_text" | "radare2" | "r2" => Ok(Dialect::Radare2Text),
            other => Err(Error::UnrecognizedDialect(other.to_string())),
        }
    }
}

/// Guesses the dialect from the first non-blank rows of a listing.
pub fn detect_dialect(text: &str) -> Dialect {
    let mut ndisasm = 0;
    let mut radare = 0;
    let mut other = 0;
    for line in text.lines().map(str::trim_end).filter(|l| !l.trim().is_empty()).take(32) {
        if parse_ndisasm_row(line).is_some() {
            ndisasm += 1;
        } else if parse_radare2_row(line).is_some() {
            radare += 1;
        } else {
            other += 1;
        }
    }
    if ndisasm > 0 && ndisasm >= radare && ndisasm * 2 >= other {
        Dialect::Ndisasm
    } else if radare > 0 && radare * 2 >= other {
        Dialect::Radare2Text
    } else {
        Dialect::Canonical
    }
}

fn split_instruction(text: &str) -> Option<(String, String)> {
    let text = text.trim();
    if text.is_empty() {
        return None;
    }
    let (mnemonic, rest) = match text.find(char::is_whitespace) {
        Some(i) => (&text[..i], text[i..].trim()),
        None => (text, ""),
    };
    Some((mnemonic.to_ascii_lowercase(), rest.to_string()))
}

fn is_hex(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_hexdigit())
}

// `00000000  B801000000        mov eax,0x1`
fn parse_ndisasm_row(line: &str) -> Option<InstructionLine> {
    if line.starts_with(char::is_whitespace) {
        // Continuation rows (`         -00000005  ...`) carry only bytes.
        return None;
    }
    let (addr, rest) = line.split_once(char::is_whitespace)?;
    if addr.len() < 4 || !is_hex(addr) {
        return None;
    }
    let rest = rest.trim_start();
    let (bytes, insn) = rest.split_once(char::is_whitespace)?;
    if !is_hex(bytes) || bytes.len() % 2 != 0 {
        return None;
    }
    let (mnemonic, operand_text) = split_instruction(insn)?;
    Some(InstructionLine { address: u64::from_str_radix(addr, 16).ok(), mnemonic, operand_text })
}

// `│           0x00001139      55             push rbp    ; comment`
fn parse_radare2_row(line: &str) -> Option<InstructionLine> {
    let start = line.find("0x")?;
    if line[..start].chars().any(|c| c.is_alphanumeric() || c == ';' || c == '"') {
        return None;
    }
    let mut fields = line[start..].splitn(2, char::is_whitespace);
    let addr = fields.next()?;
    let addr = u64::from_str_radix(addr.strip_prefix("0x")?, 16).ok()?;
    let rest = fields.next()?.trim_start();
    let (bytes, insn) = rest.split_once(char::is_whitespace)?;
    let raw = bytes.trim_end_matches('.');
    if !is_hex(raw) {
        return None;
    }
    let insn = insn.split(';').next().unwrap_or("");
    let (mnemonic, operand_text) = split_instruction(insn)?;
    Some(InstructionLine { address: Some(addr), mnemonic, operand_text })
}

fn parse_canonical_row(line: &str) -> Option<InstructionLine> {
    let line = line.split('#').next().unwrap_or("").trim();
    let is_label = line.ends_with(':') && !line.contains(char::is_whitespace);
    if line.is_empty() || is_label || line.starts_with('.') || line.starts_with(';') {
        return None;
    }
    let (mnemonic, operand_text) = split_instruction(line)?;
    Some(InstructionLine { address: None, mnemonic, operand_text })
}

pub fn parse_listing(text: &str, dialect: Dialect) -> Result<Vec<InstructionLine>> {
    let row: fn(&str) -> Option<InstructionLine> = match dialect {
        Dialect::Canonical => parse_canonical_row,
        Dialect::Ndisasm => parse_ndisasm_row,
        Dialect::Radare2Text => parse_radare2_row,
    };
    let mut out: Vec<InstructionLine> = Vec::new();
    let mut last: Option<(u64, usize)> = None;
    for (lineno, line) in text.lines().enumerate() {
        let Some(insn) = row(line.trim_end()) else {
            continue;
        };
        if let Some(addr) = insn.address {
            if let Some((prev, prev_line)) = last {
                if addr <= prev {
                    return Err(Error::MalformedListing {
                        line: lineno + 1,
                        reason: format!("address {addr:#x} does not follow {prev:#x} (line {prev_line})"),
                    });
                }
            }
            last = Some((addr, lineno + 1));
        }
        out.push(insn);
    }
    if out.is_empty() {
        return Err(Error::EmptyListing);
    }
    Ok(out)
}

/// Serializes lines in the canonical dialect (`mnemonic SP operands`).
pub fn write_canonical(lines: &[InstructionLine]) -> String {
    let mut out = String::new();
    for l in lines {
        out.push_str(&l.mnemonic);
        if !l.operand_text.is_empty() {
            out.push(' ');
            out.push_str(&l.operand_text);
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Linear,
    Flow,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenStream {
    pub lines: Vec<Vec<String>>,
    pub source_kind: SourceKind,
}

pub const IMM_PLACEHOLDER: &str = "IMM";
const IMM_MIN: u128 = 4096;

fn is_operand_delimiter(c: char) -> bool {
    c.is_whitespace() || matches!(c, ',' | '[' | ']' | '(' | ')' | '+' | '*' | ':' | '-')
}

fn integer_magnitude(tok: &str) -> Option<u128> {
    if let Some(hex) = tok.strip_prefix("0x") {
        if !is_hex(hex) {
            return None;
        }
        // Saturate rather than reject overlong literals.
        return Some(u128::from_str_radix(hex, 16).unwrap_or(u128::MAX));
    }
    if let Some(hex) = tok.strip_suffix('h') {
        if is_hex(hex) && hex.as_bytes()[0].is_ascii_digit() {
            return Some(u128::from_str_radix(hex, 16).unwrap_or(u128::MAX));
        }
        return None;
    }
    if !tok.is_empty() && tok.bytes().all(|b| b.is_ascii_digit()) {
        return Some(tok.parse().unwrap_or(u128::MAX));
    }
    None
}

fn tokenize_line(line: &InstructionLine, normalize_constants: bool) -> Vec<String> {
    let mut tokens = vec![line.mnemonic.to_ascii_lowercase()];
    for raw in line.operand_text.split(is_operand_delimiter).filter(|t| !t.is_empty()) {
        if raw == IMM_PLACEHOLDER {
            tokens.push(raw.to_string());
            continue;
        }
        let tok = raw.to_lowercase();
        if normalize_constants && integer_magnitude(&tok).is_some_and(|m| m >= IMM_MIN) {
            tokens.push(IMM_PLACEHOLDER.to_string());
        } else {
            tokens.push(tok);
        }
    }
    tokens
}

pub fn tokenize(lines: &[InstructionLine], source_kind: SourceKind, normalize_constants: bool) -> TokenStream {
    TokenStream { lines: lines.iter().map(|l| tokenize_line(l, normalize_constants)).collect(), source_kind }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasicBlock {
    pub block_id: String,
    pub mnemonics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Cfg {
    pub blocks: Vec<BasicBlock>,
    pub edges: Vec<(String, String)>,
}

impl Cfg {
    pub fn block(&self, id: &str) -> Option<&BasicBlock> {
        self.blocks.iter().find(|b| b.block_id == id)
    }

    fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for b in &self.blocks {
            if !ids.insert(b.block_id.as_str()) {
                return Err(Error::MalformedCfg(format!("duplicate block id {:?}", b.block_id)));
            }
        }
        for (from, to) in &self.edges {
            for end in [from, to] {
                if !ids.contains(end.as_str()) {
                    return Err(Error::MalformedCfg(format!("edge {from} -> {to} references unknown block {end:?}")));
                }
            }
        }
        Ok(())
    }
}

/// Parses a canonical CFG dump or radare2 `agj` JSON (detected by a leading
/// `[` or `{`).
pub fn parse_cfg(text: &str) -> Result<Cfg> {
    let trimmed = text.trim_start();
    let cfg = if trimmed.starts_with('[') || trimmed.starts_with('{') {
        parse_radare2_graph(trimmed)?
    } else {
        parse_canonical_cfg(text)?
    };
    cfg.validate()?;
    Ok(cfg)
}

fn parse_canonical_cfg(text: &str) -> Result<Cfg> {
    let mut cfg = Cfg::default();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |why: &str| Error::MalformedCfg(format!("line {}: {why}", lineno + 1));
        if let Some(rest) = line.strip_prefix("block ") {
            let (id, body) = rest.split_once(':').ok_or_else(|| bad("expected `block <id>: ...`"))?;
            let id = id.trim();
            if id.is_empty() || id.contains(char::is_whitespace) {
                return Err(bad("bad block id"));
            }
            cfg.blocks.push(BasicBlock {
                block_id: id.to_string(),
                mnemonics: body.split_whitespace().map(str::to_ascii_lowercase).collect(),
            });
        } else if let Some(rest) = line.strip_prefix("edge ") {
            let mut it = rest.split_whitespace();
            match (it.next(), it.next(), it.next()) {
                (Some(a), Some(b), None) => cfg.edges.push((a.to_string(), b.to_string())),
                _ => return Err(bad("expected `edge <from> <to>`")),
            }
        } else {
            return Err(bad("unrecognized row"));
        }
    }
    Ok(cfg)
}

#[derive(Deserialize)]
struct R2Function {
    #[serde(default)]
    blocks: Vec<R2Block>,
}

#[derive(Deserialize)]
struct R2Block {
    offset: u64,
    #[serde(default)]
    jump: Option<u64>,
    #[serde(default)]
    fail: Option<u64>,
    #[serde(default)]
    ops: Vec<R2Op>,
}

#[derive(Deserialize)]
struct R2Op {
    #[serde(default)]
    opcode: Option<String>,
    #[serde(default)]
    disasm: Option<String>,
}

fn parse_radare2_graph(text: &str) -> Result<Cfg> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::MalformedCfg(format!("graph json: {e}")))?;
    let functions: Vec<R2Function> = match value {
        serde_json::Value::Array(_) => serde_json::from_value(value),
        _ => serde_json::from_value(value).map(|f| vec![f]),
    }
    .map_err(|e| Error::MalformedCfg(format!("graph json: {e}")))?;

    let mut cfg = Cfg::default();
    for func in functions {
        let offsets: BTreeSet<u64> = func.blocks.iter().map(|b| b.offset).collect();
        for b in &func.blocks {
            let mnemonics = b
                .ops
                .iter()
                .filter_map(|op| op.opcode.as_deref().or(op.disasm.as_deref()))
                .filter_map(|s| split_instruction(s).map(|(m, _)| m))
                .collect();
            let id = format!("{:#x}", b.offset);
            cfg.blocks.push(BasicBlock { block_id: id.clone(), mnemonics });
            // Jumps leaving the function (tail calls, thunks) are not edges of
            // this graph.
            for target in [b.jump, b.fail].into_iter().flatten() {
                if offsets.contains(&target) {
                    cfg.edges.push((id.clone(), format!("{target:#x}")));
                }
            }
        }
    }
    Ok(cfg)
}

pub fn write_canonical_cfg(cfg: &Cfg) -> String {
    let mut out = String::new();
    for b in &cfg.blocks {
        let _ = writeln!(out, "block {}: {}", b.block_id, b.mnemonics.join(" "));
    }
    for (a, b) in &cfg.edges {
        let _ = writeln!(out, "edge {a} {b}");
    }
    out
}

/// Successor lists keyed by block id.
pub fn successors(cfg: &Cfg) -> BTreeMap<&str, Vec<&str>> {
    let mut map: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (a, b) in &cfg.edges {
        map.entry(a.as_str()).or_default().push(b.as_str());
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(m: &str, ops: &str) -> InstructionLine {
        InstructionLine { address: None, mnemonic: m.into(), operand_text: ops.into() }
    }

    #[test]
    fn canonical_row() {
        let lines = parse_listing("mov eax, 1", Dialect::Canonical).unwrap();
        assert_eq!(lines, vec![line("mov", "eax, 1")]);
    }

    #[test]
    fn canonical_skips_comments_labels_blanks() {
        let text = "# header\n\nmain:\n  push ebp # save\nmov ebp, esp\n.text\nret\n";
        let lines = parse_listing(text, Dialect::Canonical).unwrap();
        let m: Vec<_> = lines.iter().map(|l| l.mnemonic.as_str()).collect();
        assert_eq!(m, ["push", "mov", "ret"]);
    }

    #[test]
    fn ndisasm_row() {
        // Row as emitted by `ndisasm -b 32` for the bytes B8 01 00 00 00.
        let lines = parse_listing("00000000  B801000000        mov eax,0x1\n", Dialect::Ndisasm).unwrap();
        assert_eq!(
            lines,
            vec![InstructionLine { address: Some(0), mnemonic: "mov".into(), operand_text: "eax,0x1".into() }]
        );
    }

    #[test]
    fn ndisasm_continuation_rows_skipped() {
        let text =
            "00000000  C7050000000001000000  mov dword [0x0],0x1\n         -0000\n0000000A  C3                ret\n";
        let lines = parse_listing(text, Dialect::Ndisasm).unwrap();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1].address, Some(10));
        assert_eq!(detect_dialect(text), Dialect::Ndisasm);
    }

    #[test]
    fn radare2_rows() {
        let text = "\
            ;-- main:\n\
┌ 35: int main (int argc, char **argv);\n\
│           0x00001139      55             push rbp\n\
│           0x0000113a      4889e5         mov rbp, rsp   ; some note\n\
│       ┌─< 0x00001141      7505           jne 0x1148\n\
│           0x00001149      c745fc000000.  mov dword [var_4h], 0\n";
        let lines = parse_listing(text, Dialect::Radare2Text).unwrap();
        let got: Vec<_> = lines.iter().map(|l| (l.mnemonic.as_str(), l.operand_text.as_str())).collect();
        assert_eq!(got, [("push", "rbp"), ("mov", "rbp, rsp"), ("jne", "0x1148"), ("mov", "dword [var_4h], 0")]);
        assert_eq!(lines[0].address, Some(0x1139));
        assert_eq!(detect_dialect(text), Dialect::Radare2Text);
    }

    #[test]
    fn three_lines_in_order() {
        let lines = parse_listing("push ebp\nmov ebp, esp\nret\n", Dialect::Canonical).unwrap();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[2].mnemonic, "ret");
    }

    #[test]
    fn listing_errors() {
        assert!(matches!(parse_listing("# nothing\n\n", Dialect::Canonical), Err(Error::EmptyListing)));
        assert!(matches!("nasm".parse::<Dialect>(), Err(Error::UnrecognizedDialect(_))));
        let text = "00000010  90  nop\n00000008  90  nop\n";
        assert!(matches!(parse_listing(text, Dialect::Ndisasm), Err(Error::MalformedListing { line: 2, .. })));
    }

    #[test]
    fn tokenize_rules() {
        let ts = tokenize(&[line("mov", "eax,0x1")], SourceKind::Linear, false);
        assert_eq!(ts.lines, vec![vec!["mov", "eax", "0x1"]]);
        let ts = tokenize(&[line("lea", "ebx,[eax+0x8049f10]")], SourceKind::Linear, true);
        assert_eq!(ts.lines, vec![vec!["lea", "ebx", "eax", "IMM"]]);
        let ts = tokenize(&[line("MOV", "DWORD PTR [EBP-0x4], 4095")], SourceKind::Flow, true);
        assert_eq!(ts.lines, vec![vec!["mov", "dword", "ptr", "ebp", "0x4", "4095"]]);
        let ts = tokenize(&[line("push", "4096"), line("push", "1000h")], SourceKind::Flow, true);
        assert_eq!(ts.lines, vec![vec!["push", "IMM"], vec!["push", "IMM"]]);
    }

    #[test]
    fn ten_line_fixture_tokens_start_with_mnemonic() {
        let text = "push ebp\nmov ebp,esp\nsub esp,0x18\nmov dword [esp],0x8048500\ncall 0x80482f0\n\
                    xor eax,eax\nleave\nret\nnop\nlea esi,[esi+0x0]\n";
        let lines = parse_listing(text, Dialect::Canonical).unwrap();
        let ts = tokenize(&lines, SourceKind::Linear, false);
        assert_eq!(ts.lines.len(), 10);
        for (toks, l) in ts.lines.iter().zip(&lines) {
            assert_eq!(toks[0], l.mnemonic);
        }
    }

    #[test]
    fn cfg_canonical() {
        let cfg = parse_cfg("block A: cmp jne\nblock B: ret\nedge A B\n").unwrap();
        assert_eq!(cfg.blocks.len(), 2);
        assert_eq!(cfg.edges, vec![("A".to_string(), "B".to_string())]);
        assert_eq!(parse_cfg(&write_canonical_cfg(&cfg)).unwrap(), cfg);
    }

    #[test]
    fn cfg_errors() {
        assert!(matches!(parse_cfg("block A: ret\nedge A Z\n"), Err(Error::MalformedCfg(_))));
        assert!(matches!(parse_cfg("block A: ret\nblock A: nop\n"), Err(Error::MalformedCfg(_))));
        assert!(matches!(parse_cfg("blk A\n"), Err(Error::MalformedCfg(_))));
    }

    #[test]
    fn cfg_radare2_if_else() {
        // Shape of `agj` for `int f(int x){ if (x) return 1; return 2; }` at -O0,
        // with `jmp` to the epilogue folded into the branch blocks.
        let json = r#"[{"name":"sym.f","offset":4352,"ninstr":9,"nargs":1,"nlocals":0,"size":32,"stack":0,
          "type":"sym","blocks":[
            {"offset":4352,"size":12,"jump":4368,"fail":4364,"ops":[
               {"offset":4352,"esil":"","refptr":0,"fcn_addr":4352,"fcn_last":4380,"size":1,"opcode":"push rbp","disasm":"push rbp","bytes":"55","family":"cpu","type":"rpush","type_num":12,"type2_num":0},
               {"offset":4353,"opcode":"mov rbp, rsp"},{"offset":4356,"opcode":"cmp dword [rbp - 4], 0"},{"offset":4360,"opcode":"je 0x1110"}]},
            {"offset":4364,"size":4,"ops":[{"offset":4364,"opcode":"mov eax, 1"},{"offset":4367,"opcode":"pop rbp"},{"offset":4368,"opcode":"ret"}]},
            {"offset":4368,"size":4,"jump":99999,"ops":[{"offset":4368,"opcode":"mov eax, 2"},{"offset":4371,"type":"invalid"},{"offset":4372,"disasm":"ret"}]}
          ]}]"#;
        let cfg = parse_cfg(json).unwrap();
        assert_eq!(cfg.blocks.len(), 3);
        assert_eq!(cfg.edges.len(), 2);
        assert_eq!(cfg.blocks[0].mnemonics, ["push", "mov", "cmp", "je"]);
        assert_eq!(cfg.blocks[2].mnemonics, ["mov", "ret"]);
    }

    fn arb_line() -> impl Strategy<Value = InstructionLine> {
        let atom = prop_oneof!["[a-z]{2,4}", "0x[0-9a-f]{1,8}", "[0-9]{1,6}", Just("IMM".to_string()),];
        let sep = prop_oneof![
            Just(","),
            Just(", "),
            Just("+"),
            Just("*"),
            Just(" "),
            Just("["),
            Just("]"),
            Just("-"),
            Just(":")
        ];
        ("[a-z]{2,5}", prop::collection::vec((atom, sep), 0..5)).prop_map(|(m, parts)| {
            let operand_text = parts.into_iter().map(|(a, s)| format!("{a}{s}")).collect::<String>();
            InstructionLine { address: None, mnemonic: m, operand_text }
        })
    }

    proptest! {
        #[test]
        fn tokens_never_empty(lines in prop::collection::vec(arb_line(), 1..10), norm in any::<bool>()) {
            let ts = tokenize(&lines, SourceKind::Linear, norm);
            prop_assert_eq!(ts.lines.len(), lines.len());
            for (toks, l) in ts.lines.iter().zip(&lines) {
                prop_assert!(!toks.is_empty());
                prop_assert_eq!(&toks[0], &l.mnemonic);
                prop_assert!(toks.iter().all(|t| !t.is_empty()));
            }
        }

        #[test]
        fn normalization_idempotent(lines in prop::collection::vec(arb_line(), 1..10)) {
            let once = tokenize(&lines, SourceKind::Linear, true);
            let relines: Vec<InstructionLine> = once.lines.iter()
                .map(|t| InstructionLine { address: None, mnemonic: t[0].clone(), operand_text: t[1..].join(" ") })
                .collect();
            let twice = tokenize(&relines, SourceKind::Linear, true);
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn canonical_left_inverse(lines in prop::collection::vec(arb_line(), 1..10)) {
            let lines: Vec<InstructionLine> = lines.into_iter().map(|mut l| {
                l.operand_text = l.operand_text.trim().to_string();
                l
            }).collect();
            let parsed = parse_listing(&write_canonical(&lines), Dialect::Canonical).unwrap();
            prop_assert_eq!(parsed, lines);
        }
    }
}
