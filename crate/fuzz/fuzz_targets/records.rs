#![no_main]

use geostein::experiment::{format_records, parse_records};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(records) = parse_records(text) {
        let again = parse_records(&format_records(&records)).expect("formatted output parses");
        assert_eq!(again.len(), records.len());
    }
});
