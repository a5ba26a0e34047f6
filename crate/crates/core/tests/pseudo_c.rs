use binstylo::corpus::ArtifactKind;
use binstylo::fuzzyc::{lex_pseudo_c, parse_str, NodeType, TokenKind};
use binstylo::synth::{generate, SynthConfig};

fn fixture() -> String {
    let mut text = include_str!("data/hexrays_idioms.c").to_string();
    for s in generate(&SynthConfig::noisy(4, 3)) {
        text.push('\n');
        text.push_str(&s.texts[&ArtifactKind::PseudoC]);
    }
    text
}

#[test]
fn hexrays_output_lexes_without_unknown_tokens() {
    let text = fixture();
    assert!(text.lines().count() >= 900, "fixture has {} lines", text.lines().count());
    let tokens = lex_pseudo_c(&text);
    let unknown: Vec<_> = tokens.iter().filter(|t| t.kind == TokenKind::Unknown).collect();
    assert!(unknown.is_empty(), "unknown tokens: {unknown:?}");
}

#[test]
fn hexrays_functions_become_definitions() {
    let ast = parse_str(include_str!("data/hexrays_idioms.c"));
    let defs = ast.root.children.iter().filter(|n| n.node_type == NodeType::FunctionDef).count();
    assert_eq!(defs, 4, "{}", ast.to_sexpr());
}

#[test]
fn synthetic_pseudo_c_has_no_unknown_statements() {
    for s in generate(&SynthConfig::noisy(4, 3)) {
        let ast = parse_str(&s.texts[&ArtifactKind::PseudoC]);
        assert!(!ast.contains(NodeType::UnknownStatement), "{}: {}", s.sample_id, ast.to_sexpr());
    }
}
