use std::path::PathBuf;

#[test]
fn shipped_fixture_matches_generator() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/guidance");
    for (name, expected) in wlingam::fixture::render().unwrap() {
        let path = dir.join(name);
        let on_disk = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(
            on_disk == expected,
            "{name} is stale; run `cargo run -p wlingam-core --example write_fixture`"
        );
    }
}
