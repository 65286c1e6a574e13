//! The checked-in header must match what cbindgen generates from the
//! source. Set `SOFTWORLD_BLESS=1` to rewrite it.

use std::fs;
use std::path::Path;

#[test]
fn header_is_current() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let config = cbindgen::Config::from_file(dir.join("cbindgen.toml")).unwrap();
    let bindings = cbindgen::Builder::new().with_config(config).with_src(dir.join("src/lib.rs")).generate().unwrap();
    let mut generated = Vec::new();
    bindings.write(&mut generated);
    let path = dir.join("include/softworld.h");
    if std::env::var_os("SOFTWORLD_BLESS").is_some() {
        fs::write(&path, &generated).unwrap();
    }
    let current = fs::read(&path).unwrap_or_default();
    assert!(current == generated, "{} is stale; rerun with SOFTWORLD_BLESS=1", path.display());
}
