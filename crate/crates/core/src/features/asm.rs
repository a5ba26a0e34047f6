use crate::disasm::{SourceKind, TokenStream};

use super::{FeatureCounts, FeatureFamily};

pub(crate) fn source_prefix(kind: SourceKind) -> &'static str {
    match kind {
        SourceKind::Linear => "lin:",
        SourceKind::Flow => "flo:",
    }
}

/// Within-line token 1-, 2- and 3-grams plus the 6-grams that straddle each
/// pair of consecutive lines.
pub fn extract_assembly_ngrams(stream: &TokenStream) -> FeatureCounts {
    let prefix = source_prefix(stream.source_kind);
    let mut counts = FeatureCounts::new();
    let gram = |toks: &[String]| format!("{prefix}{}", toks.join(" "));

    for line in &stream.lines {
        for (k, family) in [(1, FeatureFamily::AsmUni), (2, FeatureFamily::AsmBi), (3, FeatureFamily::AsmTri)] {
            for window in line.windows(k) {
                counts.add(family, gram(window), 1.0);
            }
        }
    }

    for pair in stream.lines.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let joined: Vec<String> = a.iter().chain(b).cloned().collect();
        if a.is_empty() || b.is_empty() || joined.len() < 6 {
            continue;
        }
        // Window start s covers [s, s+6); it crosses the line boundary when
        // s < |a| < s + 6.
        let first = a.len().saturating_sub(5);
        let last = (a.len() - 1).min(joined.len() - 6);
        for s in first..=last {
            counts.add(FeatureFamily::Asm6g, gram(&joined[s..s + 6]), 1.0);
        }
    }
    counts
}
