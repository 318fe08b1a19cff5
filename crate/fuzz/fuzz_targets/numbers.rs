#![no_main]

use libfuzzer_sys::fuzz_target;
use pforge_core::pretree::parse_rational;
use pforge_core::quad::Quad;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(x) = text.parse::<Quad>() {
        let again: Quad = x.to_string().parse().expect("printed numbers parse");
        assert_eq!(again, x);
        if let Some(r) = x.recip() {
            assert_eq!(&x * &r, Quad::one());
        }
    }
    let _ = parse_rational(text);
});
