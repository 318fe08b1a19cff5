#![no_main]

use libfuzzer_sys::fuzz_target;
use pforge_core::pretree::{parse_location, parse_pretree};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if text.len() > 4096 {
        return;
    }
    let (tree, loc) = text.split_once("\n--\n").unwrap_or((text, "v0"));
    if let Ok(t) = parse_pretree(tree) {
        let again = parse_pretree(&t.to_text()).expect("printed trees parse");
        assert_eq!(again.num_vertices, t.num_vertices);
        if let Ok(p) = parse_location(&t, loc.trim()) {
            assert!(t.is_valid(&p));
            assert!(t.between(&p, &p, &p));
        }
    }
});
