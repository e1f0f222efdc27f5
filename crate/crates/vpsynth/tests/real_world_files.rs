use std::path::PathBuf;

use vpsynth::io::read_spec;
use vpsynth_core::fixtures::real_world_specs;

#[test]
fn shipped_spec_files_match_the_fixtures() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../specs/real-world");
    for (i, fixture) in real_world_specs().into_iter().enumerate() {
        let path = dir.join(format!("psi{i}.json"));
        let spec = read_spec(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(spec, fixture.spec, "{}", fixture.name);
    }
}
