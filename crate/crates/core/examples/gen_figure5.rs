//! Rewrites `scenarios/figure5.jsonl` from the generator.

fn main() -> std::io::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/figure5.jsonl");
    std::fs::write(path, edgefuse::sim::figure5::generate().to_jsonl())?;
    println!("wrote {path}");
    Ok(())
}
