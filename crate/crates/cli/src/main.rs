use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use qrng_distill::extractors::{self, demo_seed, stream_extract, Algorithm, Extractor, SeedFile};
use qrng_distill::minentropy::{self, EntropyReport};
use qrng_distill::noise_model::{self, NoiseModelParams};
use qrng_distill::pipeline::{self, BenchConfig, PipelineConfig};
use qrng_distill::source_sim::{self, AdcConfig, RawSampleStream, SimConfig, RAW_MAGIC};
use qrng_distill::stat_tests::{self, Verdict};
use qrng_distill::BitString;

#[derive(Parser)]
#[command(name = "qrng", version, about = "Simulate, assess and distill a phase-noise QRNG")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the variance model to a power sweep CSV.
    Fit(FitArgs),
    /// Signal-to-noise ratio at one power or over a power range.
    Snr(SnrArgs),
    /// Power maximizing the signal-to-noise ratio.
    OptimalPower(ModelArgs),
    /// Generate a raw sample file.
    Simulate(SimulateArgs),
    /// Evaluate the quantum min-entropy of a raw sample file.
    Entropy(EntropyArgs),
    /// Hash raw samples into near-uniform bits.
    Extract(ExtractArgs),
    /// Run statistical tests on a bit file or raw sample file.
    Test(TestArgs),
    /// Measure single-threaded extractor throughput.
    Bench(BenchArgs),
    /// Run every stage from a JSON config.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// JSON file with `aq`, `ac`, `f` (for example the output of `fit`).
    #[arg(long, conflicts_with_all = ["aq", "ac", "f"])]
    params: Option<PathBuf>,
    /// Quantum coefficient, mV^2/mW.
    #[arg(long, requires_all = ["ac", "f"])]
    aq: Option<f64>,
    /// Classical coefficient, mV^2/mW^2.
    #[arg(long, requires_all = ["aq", "f"])]
    ac: Option<f64>,
    /// Background, mV^2.
    #[arg(long, requires_all = ["aq", "ac"])]
    f: Option<f64>,
}

#[derive(Args)]
struct FitArgs {
    /// CSV with header `power_mw,variance_mv2`.
    #[arg(long = "in")]
    input: PathBuf,
    /// Confidence level of the coefficient intervals.
    #[arg(long, default_value_t = 0.99)]
    alpha: f64,
    /// Output JSON; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SnrArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Power, mW.
    #[arg(long, required_unless_present = "p_min")]
    power: Option<f64>,
    /// Lower end of a logarithmic power grid, mW.
    #[arg(long, requires = "p_max", conflicts_with = "power")]
    p_min: Option<f64>,
    /// Upper end of the grid, mW.
    #[arg(long, requires = "p_min")]
    p_max: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    points: usize,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Optical power, mW.
    #[arg(long)]
    power: f64,
    #[arg(long)]
    samples: usize,
    #[arg(long, default_value_t = 8)]
    adc_bits: u8,
    /// ADC half-range, mV.
    #[arg(long, default_value_t = 15.0)]
    adc_range: f64,
    #[arg(long)]
    quantum_seed: u64,
    #[arg(long)]
    classical_seed: u64,
    /// Low-pass cutoff as a fraction of the sampling rate, in (0, 0.5].
    #[arg(long)]
    bandwidth_cutoff: Option<f64>,
    /// Common gain on all variance terms.
    #[arg(long, conflicts_with = "total_variance")]
    variance_gain: Option<f64>,
    /// Choose the gain so the total variance at `--power` is this, mV^2.
    #[arg(long)]
    total_variance: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EntropyArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Raw sample file.
    #[arg(long = "in")]
    input: PathBuf,
    /// Power the samples were recorded at, mW.
    #[arg(long)]
    power: f64,
    /// Output JSON; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Toeplitz,
    Trevisan,
}

impl From<AlgoArg> for Algorithm {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Toeplitz => Algorithm::Toeplitz,
            AlgoArg::Trevisan => Algorithm::Trevisan,
        }
    }
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long, value_enum, default_value = "toeplitz")]
    algo: AlgoArg,
    /// Block length, bits.
    #[arg(long, default_value_t = 4096)]
    n: usize,
    #[arg(long, default_value_t = extractors::DEFAULT_EPSILON)]
    epsilon: f64,
    /// Seed file; required unless `--demo-seed` is given.
    #[arg(long, conflicts_with = "demo_seed")]
    seed_file: Option<PathBuf>,
    /// Generate a deterministic, NOT secret, seed from this number.
    #[arg(long)]
    demo_seed: Option<u64>,
    /// Also write the generated demo seed to this seed file.
    #[arg(long, requires = "demo_seed")]
    save_seed: Option<PathBuf>,
    /// Raw sample file.
    #[arg(long = "in")]
    input: PathBuf,
    /// Entropy report of the raw file; sets k = floor(n * h / bits).
    #[arg(long)]
    entropy: PathBuf,
    /// Packed output bits.
    #[arg(long)]
    out: PathBuf,
    /// Metadata JSON; defaults to `<out>.json`.
    #[arg(long)]
    meta: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BatteryArg {
    Core,
}

#[derive(Args)]
struct TestArgs {
    /// Packed bit file, or a raw sample file (detected by its header).
    #[arg(long = "in")]
    input: PathBuf,
    /// Number of bits to use from a packed bit file; defaults to all.
    #[arg(long)]
    bits: Option<usize>,
    #[arg(long, value_enum)]
    battery: Option<BatteryArg>,
    #[arg(long, default_value_t = stat_tests::DEFAULT_ALPHA)]
    alpha: f64,
    /// Split into this many sequences and apply the proportion rule.
    #[arg(long)]
    sequences: Option<usize>,
    #[arg(long, default_value_t = stat_tests::DEFAULT_PROPORTION_THRESHOLD)]
    threshold: f64,
    #[arg(long)]
    autocorr: bool,
    #[arg(long, default_value_t = 100)]
    max_lag: usize,
    #[arg(long)]
    spectrum: bool,
    #[arg(long, default_value_t = 64)]
    segments: usize,
    /// JSON report; stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum, default_value = "toeplitz")]
    algo: AlgoArg,
    #[arg(long, default_value_t = 4096)]
    n: usize,
    #[arg(long, default_value_t = 3230)]
    m: usize,
    /// Trevisan field width.
    #[arg(long)]
    field_bits: Option<u32>,
    #[arg(long, default_value_t = 64)]
    blocks: usize,
    #[arg(long, default_value_t = 5)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct PipelineArgs {
    /// JSON pipeline config.
    #[arg(long, required_unless_present = "write_config")]
    config: Option<PathBuf>,
    /// Write the reference config here and exit.
    #[arg(long)]
    write_config: Option<PathBuf>,
    /// Output directory for `--write-config`.
    #[arg(long, default_value = "qrng-out")]
    output_dir: PathBuf,
    /// Raw samples for `--write-config`.
    #[arg(long, default_value_t = 10_000_000)]
    samples: usize,
}

enum Failure {
    Usage(String),
    Data(anyhow::Error),
    Battery,
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Fit(a) => fit(a),
        Command::Snr(a) => snr(a),
        Command::OptimalPower(a) => optimal_power(a),
        Command::Simulate(a) => simulate(a),
        Command::Entropy(a) => entropy(a),
        Command::Extract(a) => extract(a),
        Command::Test(a) => test(a),
        Command::Bench(a) => bench(a),
        Command::Pipeline(a) => run_pipeline(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Battery) => {
            eprintln!("statistical tests failed");
            ExitCode::from(3)
        }
    }
}

fn emit(value: &impl serde::Serialize, out: Option<&Path>) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(path) => pipeline::write_artifact(path, text.as_bytes())
            .with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_model(args: &ModelArgs) -> anyhow::Result<NoiseModelParams> {
    if let Some(path) = &args.params {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let v: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let get = |k: &str| {
            v.get(k)
                .and_then(Value::as_f64)
                .ok_or_else(|| anyhow!("{} has no numeric `{k}`", path.display()))
        };
        let mut params = NoiseModelParams::new(get("aq")?, get("ac")?, get("f")?)?;
        params.ci_aq = get("ci_aq").unwrap_or(0.0);
        params.ci_ac = get("ci_ac").unwrap_or(0.0);
        params.ci_f = get("ci_f").unwrap_or(0.0);
        params.alpha = get("alpha").unwrap_or(params.alpha);
        return Ok(params);
    }
    match (args.aq, args.ac, args.f) {
        (Some(aq), Some(ac), Some(f)) => Ok(NoiseModelParams::new(aq, ac, f)?),
        _ => Ok(NoiseModelParams::reference()),
    }
}

fn fit(a: FitArgs) -> Outcome {
    let points = noise_model::load_sweep_csv(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let fit = noise_model::fit_noise_model(&points, a.alpha).map_err(anyhow::Error::from)?;
    for w in &fit.warnings {
        eprintln!("warning: {w}");
    }
    emit(&fit, a.out.as_deref())?;
    Ok(())
}

fn snr(a: SnrArgs) -> Outcome {
    let params = load_model(&a.model)?;
    let value = match (a.power, a.p_min, a.p_max) {
        (Some(p), _, _) => json!({ "power": p, "gamma": noise_model::snr(&params, p).map_err(anyhow::Error::from)? }),
        (None, Some(lo), Some(hi)) => {
            serde_json::to_value(noise_model::snr_curve(&params, lo, hi, a.points).map_err(anyhow::Error::from)?)
                .map_err(anyhow::Error::from)?
        }
        _ => return Err(Failure::Usage("give --power or --p-min/--p-max".into())),
    };
    emit(&value, None)?;
    Ok(())
}

fn optimal_power(a: ModelArgs) -> Outcome {
    let params = load_model(&a)?;
    emit(&noise_model::optimal_power(&params).map_err(anyhow::Error::from)?, None)?;
    Ok(())
}

fn simulate(a: SimulateArgs) -> Outcome {
    let params = load_model(&a.model)?;
    let variance_gain = match (a.variance_gain, a.total_variance) {
        (Some(g), _) => g,
        (None, Some(v)) => v / params.total_variance(a.power),
        (None, None) => 1.0,
    };
    let config = SimConfig {
        params,
        power: a.power,
        adc: AdcConfig {
            bits: a.adc_bits,
            range_a: a.adc_range,
        },
        n_samples: a.samples,
        quantum_seed: a.quantum_seed,
        classical_seed: a.classical_seed,
        variance_gain,
        bandwidth_cutoff: a.bandwidth_cutoff,
    };
    let raw = source_sim::simulate_raw(&config).map_err(anyhow::Error::from)?;
    raw.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    eprintln!(
        "{} samples, {} ({})",
        raw.len(),
        a.out.display(),
        source_sim::SIM_RNG_ALGORITHM
    );
    Ok(())
}

fn entropy(a: EntropyArgs) -> Outcome {
    let params = load_model(&a.model)?;
    let raw = RawSampleStream::load(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let report = minentropy::evaluate(&raw, &params, a.power).map_err(anyhow::Error::from)?;
    emit(&report, a.out.as_deref())?;
    Ok(())
}

fn extract(a: ExtractArgs) -> Outcome {
    if a.seed_file.is_none() && a.demo_seed.is_none() {
        return Err(Failure::Usage(
            "extraction needs --seed-file; pass --demo-seed N to use a deterministic demonstration seed".into(),
        ));
    }
    let text = fs::read_to_string(&a.entropy).with_context(|| format!("reading {}", a.entropy.display()))?;
    let report: EntropyReport =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", a.entropy.display()))?;
    let raw = RawSampleStream::load(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    if raw.adc != report.adc {
        return Err(Failure::Data(anyhow!("entropy report was computed for a different ADC")));
    }
    let config = pipeline::ExtractionConfig {
        algorithm: a.algo.into(),
        n: a.n,
        epsilon: a.epsilon,
        seed_file: a.seed_file.clone(),
        demo_seed: a.demo_seed,
    };
    let extractor: Extractor = pipeline::build_extractor(&config, report.h_min_rate()).map_err(anyhow::Error::from)?;
    if let (Some(path), Some(s)) = (&a.save_seed, a.demo_seed) {
        let p = extractor.params();
        SeedFile::new(config.algorithm, p.n, p.m, demo_seed(p.d, s))
            .and_then(|f| f.save(path))
            .map_err(anyhow::Error::from)?;
    }
    let out = stream_extract(&raw, &extractor).map_err(anyhow::Error::from)?;
    pipeline::write_artifact(&a.out, &out.bits.to_bytes()).with_context(|| format!("writing {}", a.out.display()))?;
    let meta = a.meta.unwrap_or_else(|| {
        let mut s = a.out.clone().into_os_string();
        s.push(".json");
        PathBuf::from(s)
    });
    emit(&out.metadata, Some(&meta))?;
    eprintln!(
        "{} blocks -> {} bits (k = {}, m = {}, {} bits discarded)",
        out.metadata.blocks, out.metadata.output_bits, out.metadata.k, out.metadata.m, out.metadata.discarded_bits
    );
    Ok(())
}

fn test(a: TestArgs) -> Outcome {
    let bytes = fs::read(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let raw = if bytes.starts_with(RAW_MAGIC) {
        Some(RawSampleStream::read_from(&bytes[..]).map_err(anyhow::Error::from)?)
    } else {
        None
    };
    let bits = match &raw {
        Some(r) => r.to_bits(),
        None => {
            let total = bytes.len() * 8;
            let len = a.bits.unwrap_or(total);
            if len > total {
                return Err(Failure::Data(anyhow!("file holds only {total} bits")));
            }
            BitString::from_bytes(&bytes, len)
        }
    };
    if a.battery.is_none() && !a.autocorr && !a.spectrum {
        return Err(Failure::Usage("choose at least one of --battery, --autocorr, --spectrum".into()));
    }
    let mut reports: Vec<Value> = Vec::new();
    let mut passed = true;
    if a.battery.is_some() {
        let battery = match a.sequences {
            Some(k) => stat_tests::run_core_battery_multi(&bits, k, a.alpha, a.threshold),
            None => stat_tests::run_core_battery(&bits, a.alpha),
        }
        .map_err(anyhow::Error::from)?;
        for r in battery {
            passed &= r.verdict.passed();
            reports.push(serde_json::to_value(&r).map_err(anyhow::Error::from)?);
        }
    }
    if a.autocorr {
        let acf = match &raw {
            Some(r) => {
                let codes: Vec<f64> = r.samples.iter().map(|&c| c as f64).collect();
                stat_tests::autocorrelation(&codes, a.max_lag)
            }
            None => stat_tests::bit_autocorrelation(&bits, a.max_lag),
        }
        .map_err(anyhow::Error::from)?;
        let report = stat_tests::portmanteau_test(&acf, a.alpha);
        passed &= report.verdict.passed();
        let mut v = serde_json::to_value(&report).map_err(anyhow::Error::from)?;
        v["mean_r"] = json!(acf.mean_nonzero_lag());
        v["max_abs_r"] = json!(acf.max_abs_nonzero_lag());
        v["coefficients"] = json!(acf.coefficients);
        reports.push(v);
    }
    if a.spectrum {
        let series: Vec<f64> = match &raw {
            Some(r) => r.voltages(),
            None => bits.to_signs(),
        };
        let s = stat_tests::spectral_flatness(&series, a.segments).map_err(anyhow::Error::from)?;
        // descriptive only: no pass/fail rule attaches to flatness
        reports.push(json!({
            "name": "spectral_flatness",
            "p_values": [],
            "alpha": a.alpha,
            "verdict": null,
            "flatness": s.flatness,
            "segments": s.segments,
            "segment_len": s.segment_len,
        }));
    }
    for r in &reports {
        let verdict = r["verdict"].as_str().unwrap_or("-");
        eprintln!("{:<18} {:<5} {}", r["name"].as_str().unwrap_or("?"), verdict, r["p_values"]);
    }
    emit(&reports, a.report.as_deref())?;
    if passed {
        Ok(())
    } else {
        Err(Failure::Battery)
    }
}

fn bench(a: BenchArgs) -> Outcome {
    let config = BenchConfig {
        algorithm: a.algo.into(),
        n: a.n,
        m: a.m,
        field_bits: a.field_bits,
        blocks: a.blocks,
        runs: a.runs,
        seed: a.seed,
    };
    if config.runs < 5 {
        return Err(Failure::Usage("--runs must be at least 5".into()));
    }
    let report = pipeline::bench(&config).map_err(anyhow::Error::from)?;
    emit(&report, None)?;
    Ok(())
}

fn run_pipeline(a: PipelineArgs) -> Outcome {
    if let Some(path) = &a.write_config {
        let config = PipelineConfig::reference(&a.output_dir, a.samples);
        pipeline::write_artifact(path, config.to_json().as_bytes())
            .with_context(|| format!("writing {}", path.display()))?;
        return Ok(());
    }
    let path = a.config.expect("clap enforces --config");
    let config = PipelineConfig::load(&path).map_err(|e| match e.stage {
        pipeline::Stage::Config => Failure::Usage(e.to_string()),
        _ => Failure::Data(e.into()),
    })?;
    let run = pipeline::run_pipeline(&config).map_err(anyhow::Error::from)?;
    for t in &run.timings {
        eprintln!("{:<9} {:>9.3} s {:>14.0} items/s", t.stage.to_string(), t.seconds, t.items_per_second);
    }
    for (name, verdict) in &run.summary.verdicts {
        eprintln!("{name:<18} {}", if *verdict == Verdict::Pass { "pass" } else { "fail" });
    }
    emit(&run.summary, None)?;
    if run.summary.all_passed {
        Ok(())
    } else {
        Err(Failure::Battery)
    }
}
