//! Stable-toolchain counterpart of the fuzz targets: the checked-in corpus
//! seeds and random mutations of them go through the same checks.

use std::fs;
use std::path::PathBuf;

use poca::objective::protocol;
use poca::orchestrator::{parse_log, write_log};
use poca::report::{summarize_log, trajectory_from_log};
use poca::rng;
use poca::space::ConfigSpace;
use proptest::prelude::*;

fn seeds(target: &str) -> Vec<String> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<String> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| fs::read_to_string(e.unwrap().path()).unwrap())
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn check_space(text: &str) {
    let Ok(space) = ConfigSpace::from_json_str(text) else {
        return;
    };
    let again =
        ConfigSpace::from_json_str(&serde_json::to_string(&space.to_doc()).unwrap()).unwrap();
    assert_eq!(again, space);
    let cfg = space.sample_uniform(&mut rng::stream(text.len() as u64));
    assert!(space.validate(&cfg).is_empty());
    let decoded = space.decode(&space.encode(&cfg).unwrap()).unwrap();
    assert!(space.validate(&decoded).is_empty());
    assert_eq!(space.from_json_map(&space.to_json_map(&cfg)).unwrap(), cfg);
}

fn check_request(line: &str) {
    if let Ok(req) = protocol::parse_request(line) {
        assert_eq!(
            protocol::parse_request(&protocol::to_line(&req)).unwrap(),
            req
        );
    }
}

fn check_response(line: &str) {
    match protocol::parse_response(line) {
        Ok(resp) => assert_eq!(
            protocol::parse_response(&protocol::to_line(&resp)).unwrap(),
            resp
        ),
        Err(_) => {
            let _ = protocol::salvage_id(line);
        }
    }
}

fn check_log(text: &str) {
    let Ok(records) = parse_log(text) else { return };
    assert_eq!(parse_log(&write_log(&records)).unwrap(), records);
    let _ = summarize_log(&records);
    let _ = trajectory_from_log(&records);
}

/// Applies byte-level edits to `seed`, keeping the result valid UTF-8 by
/// dropping invalid sequences.
fn mutate(seed: &str, edits: &[(usize, u8, u8)]) -> String {
    let mut bytes = seed.as_bytes().to_vec();
    for &(pos, op, byte) in edits {
        if bytes.is_empty() {
            bytes.push(byte);
            continue;
        }
        let i = pos % bytes.len();
        match op % 4 {
            0 => bytes[i] = byte,
            1 => bytes.insert(i, byte),
            2 => {
                bytes.remove(i);
            }
            _ => bytes.truncate(i),
        }
    }
    String::from_utf8_lossy(&bytes).into_owned()
}

#[test]
fn corpus_seeds_are_accepted() {
    let rejected = ["[1,0]", "1e308", "[\"p\",\"p\"]"];
    for s in seeds("space_doc")
        .iter()
        .filter(|s| !rejected.iter().any(|r| s.contains(r)))
    {
        ConfigSpace::from_json_str(s).unwrap();
        check_space(s);
    }
    assert!(ConfigSpace::from_json_str(
        r#"{"params":[{"name":"x","kind":"continuous","bounds":[1,0]}]}"#
    )
    .is_err());
    for s in seeds("worker_request") {
        protocol::parse_request(&s).unwrap();
        check_request(&s);
    }
    for s in seeds("worker_response") {
        check_response(&s);
    }
    for s in seeds("run_log") {
        let records = parse_log(&s).unwrap();
        summarize_log(&records).unwrap();
        check_log(&s);
    }
}

fn edits() -> impl Strategy<Value = Vec<(usize, u8, u8)>> {
    proptest::collection::vec(
        (
            any::<usize>(),
            any::<u8>(),
            prop_oneof![any::<u8>(), Just(b'"'), Just(b'{'), Just(b'1')],
        ),
        1..6,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn mutated_space_documents(pick in any::<usize>(), e in edits()) {
        let s = seeds("space_doc");
        check_space(&mutate(&s[pick % s.len()], &e));
    }

    #[test]
    fn mutated_requests(pick in any::<usize>(), e in edits()) {
        let s = seeds("worker_request");
        check_request(&mutate(&s[pick % s.len()], &e));
    }

    #[test]
    fn mutated_responses(pick in any::<usize>(), e in edits()) {
        let s = seeds("worker_response");
        check_response(&mutate(&s[pick % s.len()], &e));
    }

    #[test]
    fn mutated_logs(pick in any::<usize>(), e in edits()) {
        let s = seeds("run_log");
        check_log(&mutate(&s[pick % s.len()], &e));
    }

    #[test]
    fn arbitrary_text(text in "\\PC{0,200}") {
        check_space(&text);
        check_request(&text);
        check_response(&text);
        check_log(&text);
    }
}
