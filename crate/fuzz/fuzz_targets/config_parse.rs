#![no_main]

use libfuzzer_sys::fuzz_target;
use seboost_cli::config::parse_config;
use seboost_cli::experiment::build_cells;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = parse_config(text) {
            assert!(!cfg.seeds.is_empty() && cfg.epochs >= 1);
            let _ = build_cells(&cfg);
        }
    }
});
