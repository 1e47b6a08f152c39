//! Writes the procedural five-class texture dataset used by the test suite,
//! handy for exercising the CLI without clinical data.
//!
//! Usage: cargo run --release --example synth_dataset -- <dir> [per_class] [size] [seed]

use std::path::Path;

fn main() {
    let mut args = std::env::args().skip(1);
    let Some(dir) = args.next() else {
        eprintln!("usage: synth_dataset <dir> [per_class=20] [size=32] [seed=5]");
        std::process::exit(2);
    };
    let per_class: usize = args.next().map(|v| v.parse().expect("per_class")).unwrap_or(20);
    let size: usize = args.next().map(|v| v.parse().expect("size")).unwrap_or(32);
    let seed: u64 = args.next().map(|v| v.parse().expect("seed")).unwrap_or(5);
    nasnet_vit::dataset::write_texture_dataset(Path::new(&dir), per_class, size, seed).unwrap();
    println!("wrote {} images per class at {size}x{size} under {dir}", per_class);
}
