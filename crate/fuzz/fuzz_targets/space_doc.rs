//! Configuration-space documents: parsing must never panic, and accepted
//! spaces must survive a serialize/parse round trip and support sampling.

#![no_main]

use libfuzzer_sys::fuzz_target;
use poca::rng;
use poca::space::ConfigSpace;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(space) = ConfigSpace::from_json_str(text) else { return };
    let doc = serde_json::to_string(&space.to_doc()).unwrap();
    let again = ConfigSpace::from_json_str(&doc).expect("serialized space parses");
    assert_eq!(again, space);
    let cfg = space.sample_uniform(&mut rng::stream(data.len() as u64));
    assert!(space.validate(&cfg).is_empty());
    let decoded = space.decode(&space.encode(&cfg).unwrap()).unwrap();
    assert!(space.validate(&decoded).is_empty());
    assert_eq!(space.from_json_map(&space.to_json_map(&cfg)).unwrap(), cfg);
});
