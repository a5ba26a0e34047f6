use std::collections::HashMap;

use crate::disasm::Cfg;

use super::{FeatureCounts, FeatureFamily};

const EMPTY_BLOCK: &str = "<empty>";

fn block_payload(mnemonics: &[String]) -> String {
    if mnemonics.is_empty() {
        EMPTY_BLOCK.to_string()
    } else {
        mnemonics.join(" ")
    }
}

pub fn extract_cfg_features(cfg: &Cfg) -> FeatureCounts {
    let mut counts = FeatureCounts::new();
    let payloads: HashMap<&str, String> =
        cfg.blocks.iter().map(|b| (b.block_id.as_str(), block_payload(&b.mnemonics))).collect();
    for b in &cfg.blocks {
        counts.add(FeatureFamily::CfgBlock, payloads[b.block_id.as_str()].clone(), 1.0);
    }
    for (from, to) in &cfg.edges {
        if let (Some(a), Some(b)) = (payloads.get(from.as_str()), payloads.get(to.as_str())) {
            counts.add(FeatureFamily::CfgBlockPair, format!("{a} -> {b}"), 1.0);
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disasm::parse_cfg;

    #[test]
    fn two_blocks_one_edge() {
        let c = extract_cfg_features(&parse_cfg("block A: cmp jne\nblock B: ret\nedge A B\n").unwrap());
        assert_eq!(c.len(), 3);
        assert_eq!(c.get(FeatureFamily::CfgBlock, "cmp jne"), 1.0);
        assert_eq!(c.get(FeatureFamily::CfgBlock, "ret"), 1.0);
        assert_eq!(c.get(FeatureFamily::CfgBlockPair, "cmp jne -> ret"), 1.0);
    }

    #[test]
    fn no_edges_no_pairs() {
        let c = extract_cfg_features(&parse_cfg("block A: ret\nblock B: nop ret\n").unwrap());
        assert_eq!(c.family(FeatureFamily::CfgBlockPair).count(), 0);
    }

    #[test]
    fn diamond() {
        let text = "block H: cmp jle\nblock T: mov jmp\nblock E: add\nblock J: leave ret\n\
                    edge H T\nedge H E\nedge T J\nedge E J\n";
        let cfg = parse_cfg(text).unwrap();
        let c = extract_cfg_features(&cfg);
        // Enumerated by hand: 4 distinct blocks, 4 distinct edges.
        assert_eq!(c.family(FeatureFamily::CfgBlock).count(), 4);
        let pairs: Vec<_> = c.family(FeatureFamily::CfgBlockPair).map(|(p, _)| p.to_string()).collect();
        assert_eq!(pairs, ["add -> leave ret", "cmp jle -> add", "cmp jle -> mov jmp", "mov jmp -> leave ret"]);
    }

    #[test]
    fn identical_blocks_accumulate() {
        let cfg = parse_cfg("block A: ret\nblock B: ret\nblock C: jmp\nedge C A\nedge C B\n").unwrap();
        let c = extract_cfg_features(&cfg);
        assert_eq!(c.get(FeatureFamily::CfgBlock, "ret"), 2.0);
        assert_eq!(c.get(FeatureFamily::CfgBlockPair, "jmp -> ret"), 2.0);
    }
}
