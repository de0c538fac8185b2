#![no_main]

use libfuzzer_sys::fuzz_target;
use smio_core::expr::parse;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(e) = parse(src, &["x1", "x2", "d1", "w1"]) {
        // Printed form must parse back to the same tree.
        let again = parse(&e.to_string(), &["x1", "x2", "d1", "w1"]).expect("printed form parses");
        assert_eq!(e, again);
        let _ = e.eval(&[0.5, -1.0, 0.25, 0.0]);
    }
});
