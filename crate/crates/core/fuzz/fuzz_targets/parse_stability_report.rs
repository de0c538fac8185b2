#![no_main]

use libfuzzer_sys::fuzz_target;
use smio_core::stability::{steady_state_bounds, StabilityReport};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(r) = StabilityReport::from_toml(text) {
        let _ = steady_state_bounds(&r);
        let _ = r.to_toml();
    }
});
