#![no_main]

use libfuzzer_sys::fuzz_target;
use probmatch::scenario::{emit_scenario, parse_scenario};

// Anything that loads must survive emit + reload unchanged.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(first) = parse_scenario(text) else { return };
    let emitted = emit_scenario(&first).expect("loaded scenario must emit");
    let second = parse_scenario(&emitted).expect("emitted scenario must reload");
    assert_eq!(first.instance, second.instance);
    assert_eq!(first.signals, second.signals);
});
