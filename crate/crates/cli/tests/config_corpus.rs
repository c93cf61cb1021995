//! Replays the checked-in config fuzz corpus.

use std::path::PathBuf;

use seboost_cli::config::parse_config;
use seboost_cli::experiment::build_cells;

#[test]
fn corpus_seeds_parse_or_fail_cleanly() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus/config_parse");
    let mut valid = 0;
    let mut invalid = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let text = std::fs::read_to_string(entry.unwrap().path()).unwrap();
        match parse_config(&text) {
            Ok(cfg) => {
                valid += 1;
                assert!(!build_cells(&cfg).is_empty());
            }
            Err(e) => {
                invalid += 1;
                assert!(!e.to_string().is_empty());
            }
        }
    }
    assert!(valid >= 4 && invalid >= 3, "{valid} valid, {invalid} invalid");
}
