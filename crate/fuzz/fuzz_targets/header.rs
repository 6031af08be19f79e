#![no_main]

use ginibre_edge_cli::config::{parse_csv_header, CONFIG_PREFIX};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = parse_csv_header(s) {
        // Anything accepted is valid and re-serializes to itself.
        assert!(cfg.validate().is_ok());
        let again = format!("# ginibre-edge {}\n{CONFIG_PREFIX}{}\n", cfg.version, cfg.to_json());
        assert_eq!(parse_csv_header(&again).unwrap(), cfg);
    }
});
