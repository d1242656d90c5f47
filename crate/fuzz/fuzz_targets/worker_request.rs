//! Optimizer-to-worker messages, as parsed by workers.

#![no_main]

use libfuzzer_sys::fuzz_target;
use poca::objective::protocol;

fuzz_target!(|data: &[u8]| {
    let Ok(line) = std::str::from_utf8(data) else { return };
    if let Ok(req) = protocol::parse_request(line) {
        let again = protocol::parse_request(&protocol::to_line(&req)).expect("serialized request parses");
        assert_eq!(again, req);
    }
});
