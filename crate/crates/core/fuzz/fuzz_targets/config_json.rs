#![no_main]
use libfuzzer_sys::fuzz_target;
use netsync::config::Config;

// Any config that parses must survive a serialize/parse round trip.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = Config::from_json(text) {
        let again = Config::from_json(&cfg.to_json()).expect("serialized config parses");
        assert_eq!(again.to_json(), cfg.to_json());
        let _ = cfg.coupling_matrix();
        let _ = cfg.sim_options();
    }
});
