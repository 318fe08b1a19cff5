#![no_main]

use libfuzzer_sys::fuzz_target;
use pforge_core::index::{index_via_orbit_graphs, parse_rigid_system};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if text.len() > 4096 {
        return;
    }
    if let Ok(sys) = parse_rigid_system(text) {
        let _ = sys.rigidity_violations(2);
        let _ = index_via_orbit_graphs(&sys, 16);
    }
});
