#![no_main]

use libfuzzer_sys::fuzz_target;
use mvsgd::config::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::from_toml_str(text) {
        // Anything accepted must survive a round trip unchanged.
        let again = cfg.to_toml_string().expect("accepted config serializes");
        let back = ExperimentConfig::from_toml_str(&again).expect("serialized config parses");
        assert_eq!(cfg, back);
    }
});
