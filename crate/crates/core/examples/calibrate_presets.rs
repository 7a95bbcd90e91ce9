//! Regenerates the embedded preset profiles.
//!
//! `cargo run --release -p mramsim-core --example calibrate_presets`

use mramsim_core::{calibrate_profile, CalibrationTargets, ModelId};

fn main() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("profiles");
    for model in ModelId::ALL {
        let profile =
            calibrate_profile(&CalibrationTargets::for_model(model)).expect("calibration");
        let path = dir.join(format!("{}.json", model.to_string().to_lowercase()));
        std::fs::write(&path, profile.to_json() + "\n").unwrap();
        println!("{model}: {}", path.display());
    }
}
