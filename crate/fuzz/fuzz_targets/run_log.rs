//! Run logs: parsing and summary derivation must reject bad input cleanly.

#![no_main]

use libfuzzer_sys::fuzz_target;
use poca::orchestrator::{parse_log, write_log};
use poca::report::{summarize_log, trajectory_from_log};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(records) = parse_log(text) else { return };
    assert_eq!(parse_log(&write_log(&records)).expect("written log parses"), records);
    let _ = summarize_log(&records);
    let _ = trajectory_from_log(&records);
});
