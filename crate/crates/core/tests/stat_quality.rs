use proptest::prelude::*;
use qrng_distill::extractors::stream_extract;
use qrng_distill::minentropy::evaluate;
use qrng_distill::pipeline::{build_extractor, PipelineConfig};
use qrng_distill::source_sim::{simulate_raw, SimConfig};
use qrng_distill::stat_tests::{
    bit_autocorrelation, block_frequency_test, monobit_test, portmanteau_test, run_core_battery,
    runs_test,
};
use qrng_distill::BitString;

const BITS: usize = 1_000_000;

fn extracted(quantum_seed: u64, classical_seed: u64) -> BitString {
    extracted_bits(BITS, quantum_seed, classical_seed)
}

/// `len` extracted bits from a fresh simulation under the default
/// extraction settings.
fn extracted_bits(len: usize, quantum_seed: u64, classical_seed: u64) -> BitString {
    // about 3220 output bits per 512 samples, with a margin
    let config = PipelineConfig::reference("unused", len / 6 + 10_000);
    let sim = SimConfig {
        quantum_seed,
        classical_seed,
        ..config.simulation
    };
    let raw = simulate_raw(&sim).unwrap();
    let report = evaluate(&raw, &sim.params, sim.power).unwrap();
    let extractor = build_extractor(&config.extraction, report.h_min_rate()).unwrap();
    let mut bits = stream_extract(&raw, &extractor).unwrap().bits;
    assert!(bits.len() >= len);
    bits.truncate(len);
    bits
}

#[test]
fn monobit_pass_rate_over_seeded_runs() {
    let passed = (0..100u64)
        .filter(|&i| monobit_test(&extracted(1000 + 2 * i, 1001 + 2 * i), 0.01).unwrap().verdict.passed())
        .count();
    assert!(passed >= 98, "{passed} of 100 runs passed");
}

#[test]
fn extracted_million_bits_pass_the_battery() {
    let bits = extracted(1, 2);
    for report in run_core_battery(&bits, 0.01).unwrap() {
        assert!(report.verdict.passed(), "{} p = {}", report.name, report.worst_p_value());
    }
    let acf = bit_autocorrelation(&bits, 100).unwrap();
    assert!(portmanteau_test(&acf, 0.01).verdict.passed());
}

#[test]
fn ten_million_bits_autocorrelation_within_four_standard_errors() {
    let acf = bit_autocorrelation(&extracted_bits(10_000_000, 1, 2), 100).unwrap();
    let se_mean = 1.0 / (100.0f64 * 1e7).sqrt();
    assert!(acf.mean_nonzero_lag().abs() < 4.0 * se_mean, "mean {}", acf.mean_nonzero_lag());
    assert!(acf.max_abs_nonzero_lag() < 4.0 * 3e-4, "max {}", acf.max_abs_nonzero_lag());
}

#[test]
#[ignore = "a +-3e-5 band on the mean of 100 lags is about one standard error at 1e7 bits"]
fn ten_million_bits_mean_autocorrelation_within_three_e_minus_five() {
    let acf = bit_autocorrelation(&extracted_bits(10_000_000, 1, 2), 100).unwrap();
    assert!(acf.mean_nonzero_lag().abs() <= 3e-5, "mean {}", acf.mean_nonzero_lag());
}

proptest! {
    #[test]
    fn p_values_lie_in_the_unit_interval(bytes in proptest::collection::vec(any::<u8>(), 13..400), bias in 0u8..4) {
        // OR-ing in extra ones skews some inputs far from uniform
        let skewed: Vec<u8> = bytes.iter().enumerate().map(|(i, b)| if (i as u8) % 4 < bias { b | 0xF0 } else { *b }).collect();
        let bits = BitString::from_bytes(&skewed, skewed.len() * 8);
        let mut p = vec![
            monobit_test(&bits, 0.01).unwrap().p_values[0],
            block_frequency_test(&bits, 20, 0.01).unwrap().p_values[0],
            runs_test(&bits, 0.01).unwrap().p_values[0],
        ];
        if let Ok(acf) = bit_autocorrelation(&bits, 10) {
            p.extend(portmanteau_test(&acf, 0.01).p_values);
        }
        prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)), "{:?}", p);
    }
}
