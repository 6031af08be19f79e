#![no_main]

use ginibre_edge_cli::output::parse_json_output;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(doc) = parse_json_output(s) {
        assert!(doc.rows.iter().all(|r| r.len() == doc.columns.len()));
        assert_eq!(parse_json_output(&doc.to_json()).unwrap(), doc);
    }
});
