#![no_main]

use libfuzzer_sys::fuzz_target;
use ris_chanest_cli::parse_run_config;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = parse_run_config(text) {
            assert_eq!(parse_run_config(&cfg.to_json()).expect("resolved config parses"), cfg);
        }
    }
});
