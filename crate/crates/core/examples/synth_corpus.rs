//! Writes a synthetic corpus with a manifest.
//!
//! ```text
//! cargo run -p binstylo-core --example synth_corpus -- <dir> [authors] [problems] [first-author]
//! ```

use std::path::PathBuf;

use binstylo::synth::{write_corpus, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().ok_or("usage: synth_corpus <dir> [authors] [problems] [first-author]")?);
    let authors = args.next().map(|s| s.parse()).transpose()?.unwrap_or(10);
    let problems = args.next().map(|s| s.parse()).transpose()?.unwrap_or(9);
    let first = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    std::fs::create_dir_all(&dir)?;
    let corpus = write_corpus(&dir, &SynthConfig::noisy(authors, problems).with_authors(first, authors))?;
    println!("{} samples from {} authors in {}", corpus.len(), corpus.authors().len(), dir.display());
    Ok(())
}
