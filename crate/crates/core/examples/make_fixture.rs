//! Writes a synthetic dataset in the on-disk layout the CLI expects.
//!
//! ```text
//! cargo run --example make_fixture -- <dir> [count] [side] [seed]
//! ```

use std::path::PathBuf;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let root = PathBuf::from(args.next().ok_or("usage: make_fixture <dir> [count] [side] [seed]")?);
    let count: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(4);
    let side: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(64);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(2024);
    let stems = lesionseg::dataset::synthetic::write_dataset(&root, count, side, seed)?;
    println!("wrote {} samples to {}", stems.len(), root.display());
    Ok(())
}
