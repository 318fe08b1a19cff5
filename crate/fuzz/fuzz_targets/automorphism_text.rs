#![no_main]

use libfuzzer_sys::fuzz_target;
use pforge_core::parse::{format_automorphism, parse_automorphism};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if text.len() > 4096 {
        return;
    }
    if let Ok(phi) = parse_automorphism(text) {
        // printing and reparsing is the identity on parsed maps
        let again =
            parse_automorphism(&format_automorphism(&phi)).expect("formatted output parses");
        assert_eq!(again.images, phi.images);
        let _ = phi.verify();
    }
});
