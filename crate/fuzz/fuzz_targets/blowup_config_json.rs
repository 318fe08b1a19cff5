#![no_main]

use libfuzzer_sys::fuzz_target;
use pforge_core::blowup::{build_blowup_ball, exact_attaching_points, BlowupConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if text.len() > 4096 {
        return;
    }
    let Ok(config) = BlowupConfig::parse(text) else {
        return;
    };
    let Ok(st) = config.stitching() else { return };
    if let Ok(choice) = exact_attaching_points(&st) {
        let _ = build_blowup_ball(st, choice, 1);
    }
});
