//! `h2b` — drive the heartbeat key-generation pipeline from the shell.
//!
//! Subcommands mirror the pipeline stages: `gen` synthesizes traces,
//! `extract` pulls intervals, `quantize` turns them into key bits,
//! `reconcile`/`pair` run the protocol, and `bench`/`analyze`/`attack`/
//! `nist` drive the evaluation harness. All randomness flows from the
//! `--seed` flags, so every run is reproducible byte for byte.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use h2b_core::analysis::{
    benchmark_reconciliation, bit_table, randomness_suite, simulate_passive_attack,
    simulate_presentation_attack, sparsity_histogram, Method, PipelineConfig,
};
use h2b_core::ipi::{self, SmootherConfig};
use h2b_core::protocol::{
    pair_end_to_end, PairingParams, PairingSession, RespondOutcome, Role, SessionConfig,
};
use h2b_core::quantizer::{self, BitKey};
use h2b_core::reconcile;
use h2b_core::rng::derive_seed;
use h2b_core::signalgen::{self, BodyLocation, HeartModel, SensorConfig};

#[derive(Parser)]
#[command(
    name = "h2b",
    version,
    about = "Heartbeat-based symmetric key generation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic piezo traces with ground-truth annotations.
    Gen(GenArgs),
    /// Extract inter-pulse intervals from a trace file.
    Extract(ExtractArgs),
    /// Quantize an interval sequence into a Gray-coded bit key.
    Quantize(QuantizeArgs),
    /// Run one reconciliation role over files (alice emits, bob consumes).
    Reconcile(ReconcileArgs),
    /// Pair two traces end to end; exit 0 iff both sides verify.
    Pair(PairArgs),
    /// Benchmark reconciliation success rates (CSV per trial).
    Bench(BenchArgs),
    /// Evaluation harness reports.
    Analyze(AnalyzeArgs),
    /// Attack simulations (same as `analyze attack`).
    Attack(AttackArgs),
    /// Randomness test subset (same as `analyze nist`).
    Nist(NistArgs),
}

/// Optional experiment config file; explicit flags override its values.
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentConfig {
    seed: Option<u64>,
    n: Option<usize>,
    m: Option<usize>,
    levels: Option<usize>,
    band: Option<String>,
    rate: Option<u32>,
    mean_ipi: Option<f64>,
    ipi_std: Option<f64>,
    ar: Option<f64>,
    noise_std: Option<f64>,
    jitter_std: Option<f64>,
    trials: Option<usize>,
    threads: Option<usize>,
}

impl ExperimentConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
            }
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Mean interval in milliseconds.
    #[arg(long)]
    mean_ipi: Option<f64>,
    /// Interval standard deviation in milliseconds.
    #[arg(long)]
    ipi_std: Option<f64>,
    /// Lag-1 autocorrelation of the interval process.
    #[arg(long)]
    ar: Option<f64>,
    /// Sampling rate in Hz.
    #[arg(long)]
    rate: Option<u32>,
    /// Comma-separated body locations (chest,neck,wrist,waist,ankle).
    #[arg(long, default_value = "chest,waist")]
    locations: String,
    /// Beats to generate.
    #[arg(long, default_value_t = 360)]
    beats: usize,
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long)]
    jitter_std: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for trace CSVs and their beat sidecars.
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long, value_name = "FILE")]
    trace: PathBuf,
    /// Smoother window length in samples (odd); defaults to ~0.26 s.
    #[arg(long)]
    window: Option<usize>,
    /// Smoother polynomial order.
    #[arg(long, default_value_t = 3)]
    order: usize,
    #[arg(long, default_value_t = ipi::DEFAULT_MIN_SEPARATION_MS)]
    min_separation: f64,
    #[arg(long, default_value_t = ipi::DEFAULT_PROMINENCE_FRACTION)]
    prominence: f64,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct QuantizeArgs {
    #[arg(long, value_name = "FILE")]
    ipis: PathBuf,
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long)]
    levels: Option<usize>,
    /// Kept bit band as LOW:HIGH (bit 1 = LSB).
    #[arg(long)]
    band: Option<String>,
    /// Histogram bin width for the entropy estimate (ms).
    #[arg(long)]
    bin_width: Option<f64>,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ReconcileArgs {
    /// alice emits a message file; bob consumes one and reconciles.
    #[arg(long)]
    role: String,
    #[arg(long, value_name = "FILE")]
    key: PathBuf,
    #[arg(long)]
    matrix_seed: Option<u64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, default_value_t = reconcile::DEFAULT_EPSILON)]
    epsilon: f64,
    /// alice: where to write the exchange message.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// bob: the received exchange message.
    #[arg(long, value_name = "FILE")]
    msg: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct PairArgs {
    #[arg(long, value_name = "FILE")]
    alice: PathBuf,
    #[arg(long, value_name = "FILE")]
    bob: PathBuf,
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    band: Option<String>,
    #[arg(long)]
    matrix_seed: Option<u64>,
    #[arg(long, default_value_t = reconcile::DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// cs or rs.
    #[arg(long)]
    method: String,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    mismatch_rate: f64,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Write the CSV here instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(subcommand)]
    what: AnalyzeCommand,
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Per-bit entropy/mismatch table over pipeline key pairs (CSV).
    BitTable(BitTableArgs),
    /// Sparsity and margin census over pipeline runs (JSON).
    Sparsity(SparsityArgs),
    /// Reconciliation benchmark (CSV per trial).
    Bench(BenchArgs),
    /// Attack simulations (JSON report).
    Attack(AttackArgs),
    /// Randomness test subset (JSON map of p-values).
    Nist(NistArgs),
}

#[derive(Args)]
struct BitTableArgs {
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Number of legitimate key pairs to generate.
    #[arg(long, default_value_t = 50)]
    pairs: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SparsityArgs {
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// passive or presentation.
    #[arg(long)]
    kind: String,
    #[arg(long)]
    trials: Option<usize>,
    /// Distinct users for the passive attack.
    #[arg(long, default_value_t = 5)]
    users: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct NistArgs {
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Bit key JSON to test.
    #[arg(long, value_name = "FILE")]
    key: Option<PathBuf>,
    /// Plain text file of 0/1 characters to test.
    #[arg(long, value_name = "FILE")]
    bits_file: Option<PathBuf>,
    /// Generate at least this many bits from the default pipeline.
    #[arg(long)]
    pipeline_bits: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            1
        }
    };
    std::process::exit(code);
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::Gen(args) => cmd_gen(args),
        Command::Extract(args) => cmd_extract(args),
        Command::Quantize(args) => cmd_quantize(args),
        Command::Reconcile(args) => cmd_reconcile(args),
        Command::Pair(args) => cmd_pair(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Analyze(args) => match args.what {
            AnalyzeCommand::BitTable(a) => cmd_bit_table(a),
            AnalyzeCommand::Sparsity(a) => cmd_sparsity(a),
            AnalyzeCommand::Bench(a) => cmd_bench(a),
            AnalyzeCommand::Attack(a) => cmd_attack(a),
            AnalyzeCommand::Nist(a) => cmd_nist(a),
        },
        Command::Attack(args) => cmd_attack(args),
        Command::Nist(args) => cmd_nist(args),
    }
}

fn parse_band(text: &str) -> Result<(u8, u8)> {
    let (lo, hi) = text
        .split_once(':')
        .ok_or_else(|| anyhow!("band must be LOW:HIGH, e.g. 4:6"))?;
    Ok((lo.trim().parse()?, hi.trim().parse()?))
}

fn emit(out: Option<&Path>, content: &str) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, content).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{content}"),
    }
    Ok(())
}

fn cmd_gen(args: GenArgs) -> Result<i32> {
    let cfg = ExperimentConfig::load(args.config.as_deref())?;
    let heart = HeartModel {
        mean_ipi_ms: args.mean_ipi.or(cfg.mean_ipi).unwrap_or(850.0),
        ipi_std_ms: args.ipi_std.or(cfg.ipi_std).unwrap_or(60.0),
        ar_coefficient: args.ar.or(cfg.ar).unwrap_or(0.3),
        seed: args.seed.or(cfg.seed).unwrap_or(1),
    };
    let rate = args.rate.or(cfg.rate).unwrap_or(120);
    let locations: Vec<BodyLocation> = args
        .locations
        .split(',')
        .map(|s| s.trim().parse().map_err(|e: String| anyhow!(e)))
        .collect::<Result<_>>()?;
    if locations.is_empty() {
        bail!("no locations given");
    }

    let ipis = signalgen::generate_ipi_series(&heart, args.beats)?;
    let sensor_cfgs: Vec<SensorConfig> = locations
        .iter()
        .enumerate()
        .map(|(i, &loc)| {
            let mut sc = SensorConfig::for_location(loc);
            sc.sampling_rate_hz = rate;
            if let Some(ns) = args.noise_std.or(cfg.noise_std) {
                sc.noise_std = ns;
            }
            if let Some(js) = args.jitter_std.or(cfg.jitter_std) {
                sc.jitter_std_ms = js;
            }
            sc.seed = derive_seed(heart.seed, 0x5e00 + i as u64);
            sc
        })
        .collect();

    let traces = if sensor_cfgs.len() == 1 {
        vec![signalgen::render_trace(&ipis, &sensor_cfgs[0])?]
    } else {
        signalgen::render_body(&ipis, &sensor_cfgs)?
    };

    fs::create_dir_all(&args.out_dir)?;
    let mut written = Vec::new();
    for trace in &traces {
        let path = args.out_dir.join(format!("trace_{}.csv", trace.location));
        signalgen::save_trace(trace, &path)?;
        written.push(path.display().to_string());
    }
    if args.json {
        println!("{}", serde_json::to_string_pretty(&written)?);
    } else {
        for w in &written {
            println!("{w}");
        }
    }
    Ok(0)
}

fn cmd_extract(args: ExtractArgs) -> Result<i32> {
    let trace = signalgen::load_trace(&args.trace)?;
    let smoother = match args.window {
        Some(window) => SmootherConfig {
            window_length: window,
            poly_order: args.order,
        },
        None => {
            let mut s = SmootherConfig::for_rate(trace.sampling_rate_hz);
            s.poly_order = args.order;
            s
        }
    };
    let seq = ipi::extract_ipis_with(&trace, &smoother, args.min_separation, args.prominence)?;
    fs::write(&args.out, seq.to_json())?;
    if args.json {
        println!(
            "{}",
            serde_json::json!({
                "intervals": seq.len(),
                "mean_ipi_ms": seq.intervals_ms.iter().sum::<f64>() / seq.len().max(1) as f64,
                "out": args.out.display().to_string(),
            })
        );
    } else {
        println!("{} intervals -> {}", seq.len(), args.out.display());
    }
    Ok(0)
}

fn cmd_quantize(args: QuantizeArgs) -> Result<i32> {
    let cfg = ExperimentConfig::load(args.config.as_deref())?;
    let text = fs::read_to_string(&args.ipis)?;
    let seq = ipi::IpiSequence::from_json(&text)?;
    let levels = args
        .levels
        .or(cfg.levels)
        .unwrap_or(quantizer::DEFAULT_LEVELS);
    let band = match args.band.as_deref().or(cfg.band.as_deref()) {
        Some(b) => parse_band(b)?,
        None => quantizer::DEFAULT_BAND,
    };
    let bin_width = args
        .bin_width
        .unwrap_or_else(|| quantizer::default_bin_width_ms(&seq));
    let entropy = quantizer::estimate_entropy(&seq, bin_width)?;
    let model = quantizer::fit_model(&seq, levels)?;
    let key = quantizer::build_key(&seq, &model, band)?;
    fs::write(&args.out, key.to_json())?;
    if args.json {
        println!(
            "{}",
            serde_json::json!({
                "bits": key.len(),
                "bits_per_ipi": key.bits_per_ipi,
                "entropy_bits": entropy,
                "levels": levels,
                "out": args.out.display().to_string(),
            })
        );
    } else {
        println!(
            "{} bits ({} per interval, histogram entropy {entropy:.2} bits) -> {}",
            key.len(),
            key.bits_per_ipi,
            args.out.display()
        );
    }
    Ok(0)
}

fn load_key(path: &Path) -> Result<BitKey> {
    let text = fs::read_to_string(path)?;
    BitKey::from_json(&text).map_err(|e| anyhow!("parsing {}: {e}", path.display()))
}

fn cmd_reconcile(args: ReconcileArgs) -> Result<i32> {
    let cfg = ExperimentConfig::load(args.config.as_deref())?;
    let key = load_key(&args.key)?;
    let n = key.len();
    let m = args.m.or(cfg.m).unwrap_or(reconcile::DEFAULT_M);
    let matrix_seed = args
        .matrix_seed
        .or(cfg.seed)
        .unwrap_or(SessionConfig::default().matrix_seed);
    let session_cfg = SessionConfig {
        matrix_seed,
        m,
        n,
        epsilon: args.epsilon,
        key_validity: Duration::from_secs(300),
    };

    match args.role.to_ascii_lowercase().as_str() {
        "alice" => {
            let out = args
                .out
                .ok_or_else(|| anyhow!("--out FILE is required for role alice"))?;
            let mut session = PairingSession::new(Role::Initiator, session_cfg);
            let msg = session.initiate(key)?;
            fs::write(&out, msg.to_bytes())?;
            if args.json {
                println!(
                    "{}",
                    serde_json::json!({
                        "role": "alice", "m": m, "n": n,
                        "matrix_seed": matrix_seed,
                        "message": out.display().to_string(),
                    })
                );
            } else {
                println!("exchange message -> {}", out.display());
            }
            Ok(0)
        }
        "bob" => {
            let msg_path = args
                .msg
                .ok_or_else(|| anyhow!("--msg FILE is required for role bob"))?;
            let bytes = fs::read(&msg_path)?;
            let msg = h2b_core::protocol::ReconMessage::parse(&bytes)
                .map_err(|e| anyhow!("parsing message: {e}"))?;
            let mut session = PairingSession::new(Role::Responder, session_cfg);
            session.load_key(key)?;
            match session.respond(&msg)? {
                RespondOutcome::Verified(fk) => {
                    if args.json {
                        println!(
                            "{}",
                            serde_json::json!({"role": "bob", "verified": true, "final_key": fk.hex()})
                        );
                    } else {
                        println!("verified {}", fk.hex());
                    }
                    Ok(0)
                }
                RespondOutcome::Failed(reason) => {
                    if args.json {
                        println!(
                            "{}",
                            serde_json::json!({"role": "bob", "verified": false, "reason": reason.to_string()})
                        );
                    } else {
                        eprintln!("reconciliation failed: {reason}");
                    }
                    Ok(1)
                }
            }
        }
        other => bail!("unknown role '{other}' (expected alice or bob)"),
    }
}

fn pairing_params(
    cfg: &ExperimentConfig,
    m: Option<usize>,
    n: Option<usize>,
    levels: Option<usize>,
    band: Option<&str>,
    matrix_seed: Option<u64>,
    epsilon: f64,
) -> Result<PairingParams> {
    let mut params = PairingParams::default();
    params.session.m = m.or(cfg.m).unwrap_or(reconcile::DEFAULT_M);
    params.session.n = n.or(cfg.n).unwrap_or(reconcile::DEFAULT_N);
    params.session.epsilon = epsilon;
    if let Some(seed) = matrix_seed {
        params.session.matrix_seed = seed;
    }
    params.n_levels = levels.or(cfg.levels).unwrap_or(quantizer::DEFAULT_LEVELS);
    params.kept_band = match band.or(cfg.band.as_deref()) {
        Some(b) => parse_band(b)?,
        None => quantizer::DEFAULT_BAND,
    };
    Ok(params)
}

fn cmd_pair(args: PairArgs) -> Result<i32> {
    let cfg = ExperimentConfig::load(args.config.as_deref())?;
    let params = pairing_params(
        &cfg,
        args.m,
        args.n,
        args.levels,
        args.band.as_deref(),
        args.matrix_seed,
        args.epsilon,
    )?;
    let trace_a = signalgen::load_trace(&args.alice)?;
    let trace_b = signalgen::load_trace(&args.bob)?;
    let report = pair_end_to_end(&trace_a, &trace_b, &params)?;

    if args.json {
        println!(
            "{}",
            serde_json::json!({
                "verified": report.verified,
                "fail_reason": report.fail_reason.map(|r| r.to_string()),
                "final_key_alice": report.final_key_initiator,
                "final_key_bob": report.final_key_responder,
                "mismatch_bits": report.mismatch_bits,
                "mismatch_rate": report.mismatch_rate,
                "aligned_intervals": report.aligned_intervals,
                "p_threshold": report.margin.p_threshold,
                "effective": report.margin.is_effective(),
            })
        );
    } else if report.verified {
        println!(
            "verified (mismatch {}/{} bits)",
            report.mismatch_bits, params.session.n
        );
        println!(
            "alice {}",
            report.final_key_initiator.as_deref().unwrap_or("-")
        );
        println!(
            "bob   {}",
            report.final_key_responder.as_deref().unwrap_or("-")
        );
    } else {
        eprintln!(
            "pairing failed: {} (mismatch {}/{} bits)",
            report
                .fail_reason
                .map(|r| r.to_string())
                .unwrap_or_else(|| "unknown".into()),
            report.mismatch_bits,
            params.session.n
        );
    }
    Ok(if report.verified { 0 } else { 1 })
}

fn cmd_bench(args: BenchArgs) -> Result<i32> {
    let cfg = ExperimentConfig::load(args.config.as_deref())?;
    let method: Method = args.method.parse().map_err(|e: String| anyhow!(e))?;
    let n = args.n.or(cfg.n).unwrap_or(reconcile::DEFAULT_N);
    let m = args.m.or(cfg.m).unwrap_or(reconcile::DEFAULT_M);
    let trials = args.trials.or(cfg.trials).unwrap_or(500);
    let seed = args.seed.or(cfg.seed).unwrap_or(7);
    let threads = args.threads.or(cfg.threads).unwrap_or(1);

    let report = benchmark_reconciliation(method, n, m, args.mismatch_rate, trials, seed, threads)?;

    let mut csv = String::from("trial,method,n,m,mismatch_rate,success\n");
    for (t, ok) in report.per_trial.iter().enumerate() {
        csv.push_str(&format!(
            "{t},{method},{n},{m},{rate},{ok}\n",
            rate = args.mismatch_rate,
            ok = u8::from(*ok)
        ));
    }
    emit(args.out.as_deref(), &csv)?;
    eprintln!(
        "{method}: {}/{} trials succeeded ({:.3})",
        report.successes, report.trials, report.success_fraction
    );
    Ok(0)
}

fn cmd_bit_table(args: BitTableArgs) -> Result<i32> {
    let cfg = ExperimentConfig::load(args.config.as_deref())?;
    let seed = args.seed.or(cfg.seed).unwrap_or(3);
    let mut pipeline = pipeline_config(&cfg)?;
    pipeline.pairing.kept_band = (1, pipeline.pairing.n_levels.trailing_zeros() as u8);

    let mut pairs = Vec::with_capacity(args.pairs);
    for t in 0..args.pairs {
        pairs.push(pipeline.key_pair(derive_seed(seed, t as u64))?);
    }
    let width = pipeline.pairing.kept_band.1;
    let stats = bit_table(&pairs, width)?;

    let mut csv = String::from("bit,entropy,mismatch\n");
    for bit in 1..=width as usize {
        csv.push_str(&format!(
            "{bit},{:.4},{:.4}\n",
            stats.per_bit_entropy[bit - 1],
            stats.per_bit_mismatch[bit - 1]
        ));
    }
    emit(args.out.as_deref(), &csv)?;
    Ok(0)
}

fn pipeline_config(cfg: &ExperimentConfig) -> Result<PipelineConfig> {
    let mut pipeline = PipelineConfig::default();
    if let Some(mean) = cfg.mean_ipi {
        pipeline.heart.mean_ipi_ms = mean;
    }
    if let Some(std) = cfg.ipi_std {
        pipeline.heart.ipi_std_ms = std;
    }
    if let Some(ar) = cfg.ar {
        pipeline.heart.ar_coefficient = ar;
    }
    if let Some(n) = cfg.n {
        pipeline.pairing.session.n = n;
    }
    if let Some(m) = cfg.m {
        pipeline.pairing.session.m = m;
    }
    if let Some(levels) = cfg.levels {
        pipeline.pairing.n_levels = levels;
    }
    if let Some(band) = &cfg.band {
        pipeline.pairing.kept_band = parse_band(band)?;
    }
    Ok(pipeline)
}

fn cmd_sparsity(args: SparsityArgs) -> Result<i32> {
    let cfg = ExperimentConfig::load(args.config.as_deref())?;
    let trials = args.trials.or(cfg.trials).unwrap_or(200);
    let seed = args.seed.or(cfg.seed).unwrap_or(5);
    let pipeline = pipeline_config(&cfg)?;
    let report = sparsity_histogram(trials, &pipeline, seed)?;

    let json = serde_json::json!({
        "trials": report.trials.len(),
        "n": report.n,
        "m": report.m,
        "fraction_p_at_least_m": report.fraction_p_at_least_m,
        "per_trial": report.trials,
    });
    emit(
        args.out.as_deref(),
        &format!("{}\n", serde_json::to_string_pretty(&json)?),
    )?;
    Ok(0)
}

fn cmd_attack(args: AttackArgs) -> Result<i32> {
    let cfg = ExperimentConfig::load(args.config.as_deref())?;
    let trials = args.trials.or(cfg.trials).unwrap_or(200);
    let seed = args.seed.or(cfg.seed).unwrap_or(11);
    let pipeline = pipeline_config(&cfg)?;

    let report = match args.kind.to_ascii_lowercase().as_str() {
        "passive" => {
            let users: Vec<HeartModel> = (0..args.users.max(2))
                .map(|u| HeartModel {
                    seed: derive_seed(seed, 0x0ace + u as u64),
                    ..pipeline.heart
                })
                .collect();
            simulate_passive_attack(&users, trials, &pipeline, seed)?
        }
        "presentation" => simulate_presentation_attack(&pipeline.heart, trials, &pipeline, seed)?,
        other => bail!("unknown attack kind '{other}' (expected passive or presentation)"),
    };

    let (ci_lo, ci_hi) = report.agreement_ci95();
    let json = serde_json::json!({
        "kind": report.kind,
        "trials": report.trials,
        "success_count": report.success_count,
        "mean_agreement": report.mean_agreement(),
        "max_agreement": report.max_agreement(),
        "agreement_ci95": [ci_lo, ci_hi],
        "agreement_rates": report.agreement_rates,
    });
    emit(
        args.out.as_deref(),
        &format!("{}\n", serde_json::to_string_pretty(&json)?),
    )?;
    Ok(0)
}

fn cmd_nist(args: NistArgs) -> Result<i32> {
    let cfg = ExperimentConfig::load(args.config.as_deref())?;
    let seed = args.seed.or(cfg.seed).unwrap_or(13);

    let bits: Vec<u8> = if let Some(key_path) = &args.key {
        load_key(key_path)?.bits
    } else if let Some(bits_path) = &args.bits_file {
        fs::read_to_string(bits_path)?
            .chars()
            .filter(|c| *c == '0' || *c == '1')
            .map(|c| (c == '1') as u8)
            .collect()
    } else if let Some(want) = args.pipeline_bits {
        let pipeline = pipeline_config(&cfg)?;
        let mut bits = Vec::with_capacity(want + 1200);
        let mut session = 0u64;
        while bits.len() < want {
            let (a, _) = pipeline.key_pair(derive_seed(seed, session))?;
            bits.extend_from_slice(&a.bits);
            session += 1;
        }
        bits
    } else {
        bail!("one of --key, --bits-file, or --pipeline-bits is required");
    };

    let results = randomness_suite(&bits)?;
    let all_pass = results.iter().all(|(_, p)| *p >= 0.01);
    let json = serde_json::json!({
        "bits": bits.len(),
        "p_values": results.iter().cloned().collect::<std::collections::BTreeMap<String, f64>>(),
        "all_pass_at_0_01": all_pass,
    });
    emit(
        args.out.as_deref(),
        &format!("{}\n", serde_json::to_string_pretty(&json)?),
    )?;
    Ok(0)
}
