use crate::fuzzyc::{is_keyword, lex_pseudo_c, TokenKind};

use super::{FeatureCounts, FeatureFamily};

/// Word unigrams and keyword counts from pseudo-C, plus whitespace-separated
/// entries of a symbol/string dump.
pub fn extract_lexical_features(pseudo_c: &str, symbols_strings: &str) -> FeatureCounts {
    let mut counts = FeatureCounts::new();
    for tok in lex_pseudo_c(pseudo_c) {
        match tok.kind {
            TokenKind::Identifier | TokenKind::Number => counts.add(FeatureFamily::LexWordUni, tok.text, 1.0),
            TokenKind::Keyword => {
                if is_keyword(&tok.text) {
                    counts.add(FeatureFamily::CxxKeyword, tok.text.clone(), 1.0);
                }
                counts.add(FeatureFamily::LexWordUni, tok.text, 1.0);
            }
            _ => {}
        }
    }
    for entry in symbols_strings.split_whitespace() {
        counts.add(FeatureFamily::SymString, entry, 1.0);
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_words_and_keywords() {
        let c = extract_lexical_features("int x; int y;", "");
        assert_eq!(c.get(FeatureFamily::LexWordUni, "int"), 2.0);
        assert_eq!(c.get(FeatureFamily::LexWordUni, "x"), 1.0);
        assert_eq!(c.get(FeatureFamily::LexWordUni, "y"), 1.0);
        assert_eq!(c.get(FeatureFamily::CxxKeyword, "int"), 2.0);
        assert_eq!(c.len(), 4);
    }

    #[test]
    fn empty_inputs() {
        assert!(extract_lexical_features("", "").is_empty());
    }

    #[test]
    fn symbol_dump_split() {
        let c = extract_lexical_features("", "printf\n.symtab_main\nHello");
        assert_eq!(c.family(FeatureFamily::SymString).count(), 3);
    }
}
