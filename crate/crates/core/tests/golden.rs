//! Byte-level stability of scene synthesis and the cube format.
//!
//! Regenerate with `PEFD_BLESS=1 cargo test --test golden` after an
//! intentional change.

use std::path::PathBuf;

use pefd::dataio::{decode_cube, encode_cube, synth_scene, SynthConfig};
use pefd::Rng;

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/scene_seed11_16x16x4.msic")
}

#[test]
fn seeded_scene_matches_golden_file() {
    let cfg = SynthConfig {
        count: 1,
        height: 16,
        width: 16,
        channels: 4,
        n_shapes: 3,
        seed: 11,
        ..SynthConfig::default()
    };
    let bytes = encode_cube(&synth_scene(&cfg, &mut Rng::new(11)).unwrap());
    let path = golden_path();
    if std::env::var_os("PEFD_BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, &bytes).unwrap();
    }
    let golden = std::fs::read(&path).expect("golden file present");
    assert_eq!(bytes.len(), golden.len());
    assert!(
        bytes == golden,
        "synthesized scene differs from {}",
        path.display()
    );
    let back = decode_cube(&path, &golden).unwrap();
    assert_eq!(encode_cube(&back), golden);
}
