#![no_main]

use libfuzzer_sys::fuzz_target;
use pforge_core::automorphism::FreeGroupSystem;
use pforge_core::parse::parse_word;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if text.len() > 4096 {
        return;
    }
    let system = FreeGroupSystem::new(vec![3, 2]).unwrap();
    if let Ok((comp, w)) = parse_word(&system, text) {
        assert!(comp < 2);
        assert_eq!(w.mul(&w.inverse()).len(), 0);
    }
});
