//! Worker-to-optimizer messages, including id recovery from malformed lines.

#![no_main]

use libfuzzer_sys::fuzz_target;
use poca::objective::protocol;

fuzz_target!(|data: &[u8]| {
    let Ok(line) = std::str::from_utf8(data) else { return };
    match protocol::parse_response(line) {
        Ok(resp) => {
            let again = protocol::parse_response(&protocol::to_line(&resp)).expect("serialized response parses");
            assert_eq!(again, resp);
        }
        Err(_) => {
            let _ = protocol::salvage_id(line);
        }
    }
});
