#![no_main]

use libfuzzer_sys::fuzz_target;
use smio_core::model::LearnedInputModel;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(m) = LearnedInputModel::from_table(text) {
        let back = LearnedInputModel::from_table(&m.to_table()).expect("dump parses");
        assert_eq!(back.len(), m.len());
        let probe = vec![0.0; m.input_dim()];
        for j in 0..m.output_dim() {
            let _ = (m.eval_lower(&probe, j), m.eval_upper(&probe, j));
        }
    }
});
