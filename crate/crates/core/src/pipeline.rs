//! End-to-end orchestration: fit, optimize, simulate, entropy, extract,
//! test.
//!
//! Every stage writes its artifact to `<name>.partial` and renames it once
//! complete, so an interrupted stage leaves only a `.partial` file behind.
//! Artifacts of a run live in `output_dir` under fixed names:
//!
//! | stage    | file                          |
//! |----------|-------------------------------|
//! | fit      | `fit.json` (only with a sweep) |
//! | optimize | `optimal_power.json`          |
//! | simulate | `raw.bin`                     |
//! | entropy  | `entropy.json`                |
//! | extract  | `bits.bin`, `bits.json`       |
//! | test     | `tests.json`                  |
//! | summary  | `summary.json`, `timings.json` |
//!
//! `summary.json` is a pure function of the configuration; wall-clock
//! figures go to `timings.json`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::BitString;
use crate::extractors::{
    self, demo_seed, extract_bits, output_length, trevisan_output_length, Algorithm,
    ExtractionMetadata, Extractor, ExtractorParams, SeedFile, TrevisanParams, DEFAULT_EPSILON,
};
use crate::minentropy::{self, EntropyReport};
use crate::noise_model::{self, NoiseFit, NoiseModelParams, SnrCurvePoint};
use crate::source_sim::{self, RawSampleStream, SimConfig};
use crate::stat_tests::{self, SpectrumResult, TestReport, Verdict};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Software Toeplitz throughput the benchmark is compared against, bit/s.
pub const BASELINE_TOEPLITZ_BPS: f64 = 441e3;

pub const FIT_FILE: &str = "fit.json";
pub const OPTIMUM_FILE: &str = "optimal_power.json";
pub const RAW_FILE: &str = "raw.bin";
pub const ENTROPY_FILE: &str = "entropy.json";
pub const BITS_FILE: &str = "bits.bin";
pub const BITS_META_FILE: &str = "bits.json";
pub const TESTS_FILE: &str = "tests.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TIMINGS_FILE: &str = "timings.json";

const ALL_ARTIFACTS: [&str; 9] = [
    FIT_FILE,
    OPTIMUM_FILE,
    RAW_FILE,
    ENTROPY_FILE,
    BITS_FILE,
    BITS_META_FILE,
    TESTS_FILE,
    SUMMARY_FILE,
    TIMINGS_FILE,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Config,
    Fit,
    Optimize,
    Simulate,
    Entropy,
    Extract,
    Test,
    Report,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = serde_json::to_value(self).unwrap();
        f.write_str(s.as_str().unwrap())
    }
}

#[derive(Debug, Error)]
#[error("{stage} stage: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
}

impl PipelineError {
    fn new(stage: Stage, e: impl std::fmt::Display) -> Self {
        Self {
            stage,
            message: e.to_string(),
        }
    }
}

fn at<E: std::fmt::Display>(stage: Stage) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError::new(stage, e)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractionConfig {
    pub algorithm: Algorithm,
    /// Input block length, bits.
    pub n: usize,
    pub epsilon: f64,
    /// External seed file; takes precedence over `demo_seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_file: Option<PathBuf>,
    /// Seed for a ChaCha20-generated demonstration seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demo_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestConfig {
    pub alpha: f64,
    /// Largest autocorrelation lag of the extracted bits.
    pub max_lag: usize,
    /// Welch segments for the raw-voltage spectrum; skipped when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum_segments: Option<usize>,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            alpha: stat_tests::DEFAULT_ALPHA,
            max_lag: 100,
            spectrum_segments: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub output_dir: PathBuf,
    /// Power sweep to fit; the fitted coefficients then replace
    /// `simulation.params`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_csv: Option<PathBuf>,
    #[serde(default = "default_fit_alpha")]
    pub fit_alpha: f64,
    /// Simulate at the model optimum instead of `simulation.power`.
    #[serde(default)]
    pub use_optimal_power: bool,
    pub simulation: SimConfig,
    pub extraction: ExtractionConfig,
    #[serde(default)]
    pub tests: TestConfig,
}

fn default_fit_alpha() -> f64 {
    0.99
}

impl PipelineConfig {
    /// Reference source at its working point with Toeplitz hashing of
    /// 4096-bit blocks at epsilon = 2^-100 and a demonstration seed.
    pub fn reference(output_dir: impl Into<PathBuf>, n_samples: usize) -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            output_dir: output_dir.into(),
            sweep_csv: None,
            fit_alpha: default_fit_alpha(),
            use_optimal_power: false,
            simulation: SimConfig::operating_point(n_samples, 1, 2),
            extraction: ExtractionConfig {
                algorithm: Algorithm::Toeplitz,
                n: 4096,
                epsilon: DEFAULT_EPSILON,
                seed_file: None,
                demo_seed: Some(3),
            },
            tests: TestConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let config: Self = serde_json::from_str(text).map_err(at(Stage::Config))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        Self::from_json(&fs::read_to_string(path).map_err(at(Stage::Config))?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks that do not depend on data. Simulation parameters are
    /// validated by the simulate stage itself.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let err = |m: String| Err(PipelineError::new(Stage::Config, m));
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return err(format!(
                "unsupported schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.extraction.seed_file.is_none() && self.extraction.demo_seed.is_none() {
            return err("extraction needs a seed_file or an explicit demo_seed".into());
        }
        if self.extraction.n == 0 {
            return err("extraction block length n must be positive".into());
        }
        if !(self.tests.alpha > 0.0 && self.tests.alpha < 1.0) {
            return err(format!("alpha must lie in (0, 1), got {}", self.tests.alpha));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub seconds: f64,
    /// Items processed: sweep points, samples or bits depending on stage.
    pub items: usize,
    pub items_per_second: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSummary {
    pub reports: Vec<TestReport>,
    pub autocorrelation: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_spectral_flatness: Option<f64>,
    pub all_passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub schema_version: u32,
    pub model: NoiseModelParams,
    pub optimum: SnrCurvePoint,
    pub power: f64,
    pub gamma: f64,
    pub raw_samples: usize,
    pub h_min_per_sample: f64,
    pub extraction: ExtractionMetadata,
    pub bits_extracted: usize,
    pub verdicts: Vec<(String, Verdict)>,
    pub all_passed: bool,
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub summary: PipelineSummary,
    pub timings: Vec<StageTiming>,
}

/// Writes `bytes` to `path` through a `.partial` sibling.
pub fn write_artifact(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let partial = partial_path(path);
    fs::write(&partial, bytes)?;
    fs::rename(&partial, path)
}

pub fn partial_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    path.with_file_name(name)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    text.push('\n');
    write_artifact(path, text.as_bytes())
}

/// Builds the extractor for a block of `config.n` bits at the given
/// min-entropy rate (bits of min-entropy per raw bit).
pub fn build_extractor(config: &ExtractionConfig, h_min_rate: f64) -> Result<Extractor, extractors::ExtractError> {
    if let Some(path) = &config.seed_file {
        let file = SeedFile::load(path)?;
        if file.algorithm != config.algorithm || file.n != config.n {
            return Err(extractors::ExtractError::SeedFormat(format!(
                "seed file is for {} with n = {}, configured {} with n = {}",
                file.algorithm, file.n, config.algorithm, config.n
            )));
        }
        let k = (config.n as f64 * h_min_rate).floor() as usize;
        return Extractor::from_seed_file(&file, k);
    }
    let seed = config.demo_seed.ok_or_else(|| {
        extractors::ExtractError::InvalidParams("no seed file and no demo seed given".into())
    })?;
    match config.algorithm {
        Algorithm::Toeplitz => {
            let params = output_length(config.n, h_min_rate, config.epsilon)?;
            Extractor::toeplitz(&params, demo_seed(params.d, seed))
        }
        Algorithm::Trevisan => {
            let params = trevisan_output_length(config.n, h_min_rate, config.epsilon)?;
            Extractor::trevisan(&params, demo_seed(params.base.d, seed))
        }
    }
}

/// Core battery, portmanteau autocorrelation test on the extracted bits,
/// and the optional raw-voltage spectrum.
pub fn run_tests(
    bits: &BitString,
    raw: Option<&RawSampleStream>,
    config: &TestConfig,
) -> Result<TestSummary, stat_tests::StatError> {
    let mut reports = stat_tests::run_core_battery(bits, config.alpha)?;
    let acf = stat_tests::bit_autocorrelation(bits, config.max_lag)?;
    reports.push(stat_tests::portmanteau_test(&acf, config.alpha));
    let raw_spectral_flatness = match (config.spectrum_segments, raw) {
        (Some(segments), Some(raw)) => {
            let s: SpectrumResult = stat_tests::spectral_flatness(&raw.voltages(), segments)?;
            Some(s.flatness)
        }
        _ => None,
    };
    let all_passed = reports.iter().all(|r| r.verdict.passed());
    Ok(TestSummary {
        reports,
        autocorrelation: acf.coefficients,
        raw_spectral_flatness,
        all_passed,
    })
}

struct Clock(Vec<StageTiming>);

impl Clock {
    fn record(&mut self, stage: Stage, start: Instant, items: usize) {
        let seconds = start.elapsed().as_secs_f64();
        self.0.push(StageTiming {
            stage,
            seconds,
            items,
            items_per_second: if seconds > 0.0 { items as f64 / seconds } else { f64::INFINITY },
        });
    }
}

/// Runs every stage in order and writes all artifacts to
/// `config.output_dir`. Artifacts left over from earlier runs are removed
/// first so a failed stage never sits next to stale downstream files.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineRun, PipelineError> {
    config.validate()?;
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(at(Stage::Config))?;
    for name in ALL_ARTIFACTS {
        for path in [dir.join(name), partial_path(&dir.join(name))] {
            if path.exists() {
                fs::remove_file(&path).map_err(at(Stage::Config))?;
            }
        }
    }
    let mut clock = Clock(Vec::new());

    // fit
    let mut sim = config.simulation.clone();
    if let Some(csv) = &config.sweep_csv {
        let t = Instant::now();
        let points = noise_model::load_sweep_csv(csv).map_err(at(Stage::Fit))?;
        let fit: NoiseFit = noise_model::fit_noise_model(&points, config.fit_alpha).map_err(at(Stage::Fit))?;
        write_json(&dir.join(FIT_FILE), &fit).map_err(at(Stage::Fit))?;
        sim.params = fit.params;
        clock.record(Stage::Fit, t, points.len());
    }

    // optimize
    let t = Instant::now();
    let optimum = noise_model::optimal_power(&sim.params).map_err(at(Stage::Optimize))?;
    write_json(&dir.join(OPTIMUM_FILE), &optimum).map_err(at(Stage::Optimize))?;
    if config.use_optimal_power {
        sim.power = optimum.power;
    }
    clock.record(Stage::Optimize, t, 1);

    // simulate
    let t = Instant::now();
    let raw = source_sim::simulate_raw(&sim).map_err(at(Stage::Simulate))?;
    raw.save(&dir.join(RAW_FILE)).map_err(at(Stage::Simulate))?;
    clock.record(Stage::Simulate, t, raw.len());

    // entropy
    let t = Instant::now();
    let entropy: EntropyReport = minentropy::evaluate(&raw, &sim.params, sim.power).map_err(at(Stage::Entropy))?;
    write_json(&dir.join(ENTROPY_FILE), &entropy).map_err(at(Stage::Entropy))?;
    clock.record(Stage::Entropy, t, raw.len());

    // extract
    let t = Instant::now();
    let extractor = build_extractor(&config.extraction, entropy.h_min_rate()).map_err(at(Stage::Extract))?;
    let out = extract_bits(&raw.to_bits(), &extractor).map_err(at(Stage::Extract))?;
    write_artifact(&dir.join(BITS_FILE), &out.bits.to_bytes()).map_err(at(Stage::Extract))?;
    write_json(&dir.join(BITS_META_FILE), &out.metadata).map_err(at(Stage::Extract))?;
    clock.record(Stage::Extract, t, out.bits.len());

    // test
    let t = Instant::now();
    let tests = run_tests(&out.bits, Some(&raw), &config.tests).map_err(at(Stage::Test))?;
    write_json(&dir.join(TESTS_FILE), &tests).map_err(at(Stage::Test))?;
    clock.record(Stage::Test, t, out.bits.len());

    let summary = PipelineSummary {
        schema_version: CONFIG_SCHEMA_VERSION,
        model: sim.params,
        optimum,
        power: sim.power,
        gamma: entropy.gamma,
        raw_samples: raw.len(),
        h_min_per_sample: entropy.h_min_per_sample,
        bits_extracted: out.bits.len(),
        verdicts: tests.reports.iter().map(|r| (r.name.clone(), r.verdict)).collect(),
        all_passed: tests.all_passed,
        extraction: out.metadata,
    };
    write_json(&dir.join(SUMMARY_FILE), &summary).map_err(at(Stage::Report))?;
    write_json(&dir.join(TIMINGS_FILE), &clock.0).map_err(at(Stage::Report))?;
    Ok(PipelineRun {
        summary,
        timings: clock.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub algorithm: Algorithm,
    pub n: usize,
    pub m: usize,
    /// Field width for Trevisan; ignored for Toeplitz.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field_bits: Option<u32>,
    /// Blocks hashed per timed run.
    pub blocks: usize,
    /// Timed runs; at least 5.
    pub runs: usize,
    pub seed: u64,
}

impl BenchConfig {
    pub fn new(algorithm: Algorithm, n: usize, m: usize) -> Self {
        Self {
            algorithm,
            n,
            m,
            field_bits: None,
            blocks: 64,
            runs: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub algorithm: Algorithm,
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub blocks_per_run: usize,
    pub run_seconds: Vec<f64>,
    pub median_seconds: f64,
    /// Output bits per second of a single thread, extraction only.
    pub throughput_bps: f64,
    pub baseline_bps: f64,
    pub speedup_over_baseline: f64,
}

/// Times single-threaded extraction of `blocks` random blocks, excluding
/// seed preparation and input generation; reports the median of the runs.
pub fn bench(config: &BenchConfig) -> Result<BenchReport, extractors::ExtractError> {
    if config.runs < 5 || config.blocks == 0 {
        return Err(extractors::ExtractError::InvalidParams(
            "bench needs at least 5 runs and 1 block".into(),
        ));
    }
    let extractor = match config.algorithm {
        Algorithm::Toeplitz => {
            let params = ExtractorParams::toeplitz(config.n, config.m)?;
            Extractor::toeplitz(&params, demo_seed(params.d, config.seed))?
        }
        Algorithm::Trevisan => {
            let w = config.field_bits.unwrap_or(default_trevisan_width(config.n));
            let params = TrevisanParams::for_sizes(config.n, config.n, config.m, w)?;
            Extractor::trevisan(&params, demo_seed(params.base.d, config.seed))?
        }
    };
    let inputs: Vec<BitString> = (0..config.blocks)
        .map(|b| demo_seed(config.n, config.seed ^ (b as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)))
        .collect();
    let mut run_seconds = Vec::with_capacity(config.runs);
    let mut sink = 0usize;
    for _ in 0..config.runs {
        let t = Instant::now();
        for block in &inputs {
            sink ^= extractor.extract_block(block)?.count_ones();
        }
        run_seconds.push(t.elapsed().as_secs_f64());
    }
    std::hint::black_box(sink);
    let mut sorted = run_seconds.clone();
    sorted.sort_by(f64::total_cmp);
    let median_seconds = sorted[sorted.len() / 2];
    let throughput_bps = (config.blocks * config.m) as f64 / median_seconds;
    Ok(BenchReport {
        algorithm: config.algorithm,
        n: config.n,
        m: config.m,
        d: extractor.params().d,
        blocks_per_run: config.blocks,
        run_seconds,
        median_seconds,
        throughput_bps,
        baseline_bps: BASELINE_TOEPLITZ_BPS,
        speedup_over_baseline: throughput_bps / BASELINE_TOEPLITZ_BPS,
    })
}

/// Smallest supported width whose chunk count keeps the one-bit error
/// floor below 2^-100, falling back to the largest.
fn default_trevisan_width(n: usize) -> u32 {
    extractors::SUPPORTED_WIDTHS
        .iter()
        .map(|&(w, _)| w)
        .find(|&w| extractors::one_bit_error(n, w, f64::INFINITY) <= DEFAULT_EPSILON)
        .unwrap_or(256)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_roundtrip_and_validation() {
        let c = PipelineConfig::reference("/tmp/x", 1000);
        assert_eq!(PipelineConfig::from_json(&c.to_json()).unwrap(), c);
        let mut no_seed = c.clone();
        no_seed.extraction.demo_seed = None;
        let e = PipelineConfig::from_json(&no_seed.to_json()).unwrap_err();
        assert_eq!(e.stage, Stage::Config);
        let mut wrong = c.clone();
        wrong.schema_version = 99;
        assert!(wrong.validate().is_err());
        assert!(PipelineConfig::from_json("{\"schema_version\": 1, \"bogus\": 3}").is_err());
    }

    #[test]
    fn partial_names() {
        assert_eq!(partial_path(Path::new("/a/raw.bin")), PathBuf::from("/a/raw.bin.partial"));
    }

    #[test]
    fn stage_display() {
        assert_eq!(Stage::Simulate.to_string(), "simulate");
        let e = PipelineError::new(Stage::Extract, "boom");
        assert_eq!(e.to_string(), "extract stage: boom");
    }

    #[test]
    fn micro_bench_is_quick() {
        let t = Instant::now();
        let r = bench(&BenchConfig::new(Algorithm::Toeplitz, 64, 32)).unwrap();
        assert!(t.elapsed().as_secs_f64() < 1.0);
        assert_eq!(r.run_seconds.len(), 5);
        assert!(r.throughput_bps > 0.0);
        let mut few = BenchConfig::new(Algorithm::Toeplitz, 64, 32);
        few.runs = 4;
        assert!(bench(&few).is_err());
    }

    #[test]
    fn trevisan_default_width() {
        // at w = 128 the floor 0.5 * sqrt(31 / 2^128) is far above 2^-100;
        // a single 64-bit chunk has no floor at all
        assert_eq!(default_trevisan_width(4096), 256);
        assert_eq!(default_trevisan_width(64), 64);
    }
}
