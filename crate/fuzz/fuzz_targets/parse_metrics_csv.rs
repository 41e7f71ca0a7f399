#![no_main]

use libfuzzer_sys::fuzz_target;
use ris_chanest::training::Metrics;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(m) = Metrics::from_csv(text) {
            let csv = m.to_csv();
            assert_eq!(Metrics::from_csv(&csv).expect("written metrics parse").to_csv(), csv);
        }
    }
});
