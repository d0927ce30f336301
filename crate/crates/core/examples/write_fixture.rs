//! Regenerates the reference fixture files.
//!
//! cargo run -p wlingam-core --example write_fixture [-- <dir>]

fn main() -> wlingam::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/guidance").to_string());
    wlingam::fixture::write_all(&dir)?;
    println!("wrote {}", dir);
    Ok(())
}
