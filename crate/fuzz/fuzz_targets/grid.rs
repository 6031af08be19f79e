#![no_main]

use ginibre_edge_cli::config::{AlphaList, GridSpec};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(g) = s.parse::<GridSpec>() {
        assert!(g.validate().is_ok());
        assert_eq!(g.to_string().parse::<GridSpec>().unwrap(), g);
        if g.count <= 10_000 {
            let p = g.points();
            assert_eq!(p.len(), g.count);
            assert_eq!(p[0], g.lo);
            assert_eq!(p[g.count - 1], g.hi);
        }
    }
    if let Ok(a) = s.parse::<AlphaList>() {
        assert!(a.0.iter().all(|v| v.is_finite() && *v > 0.0));
    }
});
