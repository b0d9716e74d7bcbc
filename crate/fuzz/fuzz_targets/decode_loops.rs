#![no_main]

use libfuzzer_sys::fuzz_target;
use loops_spmm::format::{decode_loops, encode_loops, peek_header};
use loops_spmm::{f16, Element, Precision};

fn check<T: Element>(data: &[u8]) {
    if let Ok((m, decision)) = decode_loops::<T>(data) {
        m.bcsr_part().validate().expect("decoded BCSR part is valid");
        m.csr_part().validate().expect("decoded CSR part is valid");
        let (back, d) = decode_loops::<T>(&encode_loops(&m, decision)).expect("re-encoded dump decodes");
        assert_eq!(back, m);
        assert_eq!(d, decision);
    }
}

fuzz_target!(|data: &[u8]| {
    match peek_header(data).map(|h| h.precision) {
        Ok(Precision::Fp64) => check::<f64>(data),
        Ok(Precision::Fp32) => check::<f32>(data),
        Ok(Precision::Fp16) => check::<f16>(data),
        Err(_) => {
            check::<f64>(data);
        }
    }
});
