#![no_main]

use libfuzzer_sys::fuzz_target;
use mvsgd::csvio::{read_benchmark_csv, write_benchmark_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(curve) = read_benchmark_csv(data) {
        let mut buf = Vec::new();
        write_benchmark_csv(&mut buf, &curve, &[]).expect("parsed curve writes");
        let back = read_benchmark_csv(buf.as_slice()).expect("written curve parses");
        assert_eq!(back.values(), curve.values());
    }
});
