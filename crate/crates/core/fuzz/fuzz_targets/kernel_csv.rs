#![no_main]
use libfuzzer_sys::fuzz_target;
use netsync::delay::{KernelSet, MonodromyOperator};

// Input is p, f and an optional g table separated by NUL bytes.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let mut parts = text.split('\0');
    let (Some(p), Some(f)) = (parts.next(), parts.next()) else { return };
    let g = parts.next();
    if let Ok(ks) = KernelSet::from_csv(p, f, g) {
        if ks.g().is_some() {
            let _ = MonodromyOperator::from_kernels(&ks);
        }
        let again = KernelSet::from_csv(&ks.p_csv(), &ks.f_csv(), ks.g_csv().as_deref()).expect("written kernels parse");
        assert_eq!(again.cells(), ks.cells());
    }
});
