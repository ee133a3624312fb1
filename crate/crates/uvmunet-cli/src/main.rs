//! Command-line front end: parameter and FLOP reports, toy inference,
//! mask evaluation, scan benchmarking, and the reference-integer selftest.

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;
use uvmunet::accounting::{
    mamba_params, model_flops, model_params, pvm_params, ss2d_params, FlopConvention, FlopReport,
    ParamReport,
};
use uvmunet::blocks::{MambaConfig, Ss2dConfig, VmKind};
use uvmunet::io::init::SplitMix64;
use uvmunet::io::{init_weights, load_weights, pnm, RunConfig};
use uvmunet::metrics::{acc, confusion, dsc, se, sp};
use uvmunet::net::net_forward;
use uvmunet::scan::{scan_parallel, scan_sequential};
use uvmunet::tensor::Tensor;

const EXIT_USAGE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_EMPTY: u8 = 3;

const JSON_SCHEMA_HELP: &str = "\
Output formats:
  text  human-readable tables (default)
  json  machine-readable, schema below
  csv   one record per line

JSON schemas (stable keys):
  params:    {\"report\":\"params\",\"label\":str,\"items\":[{\"name\":str,\"count\":int}],
              \"total\":int,\"baseline\":int?,\"reduction_exact\":float?,
              \"reduction_rounded\":float?}
  flops:     {\"report\":\"flops\",\"label\":str,\"convention\":\"macs\"|\"2macs\",
              \"items\":[{\"name\":str,\"macs\":int}],\"total_macs\":int,
              \"total_flops\":int,\"total_gflops\":float}
  eval:      {\"report\":\"eval\",\"pairs\":[{\"file\":str,\"dsc\":float,\"se\":float,
              \"sp\":float,\"acc\":float}],\"mean\":{\"dsc\":float,\"se\":float,
              \"sp\":float,\"acc\":float},\"count\":int}
  scan-bench:{\"report\":\"scan-bench\",\"d\":int,\"n\":int,\"len\":int,\"repeat\":int,
              \"rows\":[{\"chunk\":int,\"median_ms\":float,\"max_rel_dev\":float}]}

Exit codes: 0 success, 1 usage error, 2 shape/config error, 3 empty work.";

#[derive(Parser)]
#[command(
    name = "uvmunet",
    version,
    about = "UltraLight VM-UNet building blocks: exact parameter accounting, toy inference, evaluation and scan benchmarks",
    after_long_help = JSON_SCHEMA_HELP
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum BlockKind {
    Mamba,
    Ss2d,
    Pvm,
}

#[derive(Subcommand)]
enum Command {
    /// Itemized parameter census of a block or of the whole model
    Params(ParamsArgs),
    /// Closed-form FLOP estimate of one forward pass
    Flops(FlopsArgs),
    /// Run the network on one PPM image and write the probability map as PGM
    Infer(InferArgs),
    /// Score predicted masks against ground truth, per file and mean
    Eval(EvalArgs),
    /// Time the parallel scan against the sequential reference
    ScanBench(ScanBenchArgs),
    /// Reproduce the reference parameter integers and print PASS/FAIL lines
    Selftest,
}

#[derive(Args)]
struct ParamsArgs {
    /// JSON run configuration; reports the whole model
    #[arg(long, conflicts_with_all = ["block", "d_model", "p"])]
    config: Option<PathBuf>,
    /// Block to report instead of the whole model
    #[arg(long, value_enum, requires = "d_model")]
    block: Option<BlockKind>,
    /// Input channel count of the block
    #[arg(long)]
    d_model: Option<usize>,
    /// Branch count (pvm block only)
    #[arg(long, default_value_t = 4)]
    p: usize,
    /// Branch kind for the pvm block
    #[arg(long, value_enum, default_value_t = BlockKind::Mamba)]
    kind: BlockKind,
    /// Baseline total; adds exact and rounded reduction percentages
    #[arg(long)]
    baseline: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Args)]
struct FlopsArgs {
    /// JSON run configuration (defaults apply when omitted)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the configured MAC-to-FLOP convention
    #[arg(long)]
    convention: Option<String>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    config: PathBuf,
    /// Weight file; when omitted, weights are generated deterministically
    /// from the config's seed
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Input image (binary PPM, P6)
    #[arg(long)]
    image: PathBuf,
    /// Output probability map (binary PGM, P5)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory of predicted maps (PGM, values in `[0,1]`)
    #[arg(long)]
    pred: PathBuf,
    /// Directory of ground-truth masks (PGM, binarized at 128)
    #[arg(long)]
    truth: PathBuf,
    /// Positive threshold applied to predictions (ties positive)
    #[arg(long, default_value_t = 0.5)]
    threshold: f32,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Args)]
struct ScanBenchArgs {
    /// Inner channels
    #[arg(long, default_value_t = 8)]
    d: usize,
    /// State dimension
    #[arg(long, default_value_t = 16)]
    n: usize,
    /// Sequence length
    #[arg(long, default_value_t = 4096)]
    len: usize,
    /// Comma-separated chunk sizes; "L" stands for the full length
    #[arg(long, default_value = "1,7,64,L")]
    chunks: String,
    /// Timed repetitions per chunk size (median reported)
    #[arg(long, default_value_t = 5)]
    repeat: usize,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn empty(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_EMPTY,
            message: message.into(),
        }
    }
}

impl From<uvmunet::Error> for Failure {
    fn from(e: uvmunet::Error) -> Self {
        Failure {
            code: EXIT_CONFIG,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let first = e
                .to_string()
                .lines()
                .next()
                .unwrap_or("bad usage")
                .to_string();
            eprintln!("{first} (run with --help)");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let result = match cli.command {
        Command::Params(args) => cmd_params(args),
        Command::Flops(args) => cmd_flops(args),
        Command::Infer(args) => cmd_infer(args),
        Command::Eval(args) => cmd_eval(args),
        Command::ScanBench(args) => cmd_scan_bench(args),
        Command::Selftest => cmd_selftest(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message.replace('\n', " "));
            ExitCode::from(f.code)
        }
    }
}

// ---------------------------------------------------------------------------
// params
// ---------------------------------------------------------------------------

fn param_report_json(report: &ParamReport) -> serde_json::Value {
    let items: Vec<serde_json::Value> = report
        .items
        .iter()
        .map(|(name, count)| serde_json::json!({"name": name, "count": count}))
        .collect();
    let mut value = serde_json::json!({
        "report": "params",
        "label": report.label,
        "items": items,
        "total": report.total,
    });
    if let Some(b) = report.baseline {
        let f = report.reduction_fraction().unwrap_or(0.0);
        value["baseline"] = serde_json::json!(b);
        value["reduction_exact"] = serde_json::json!(f);
        value["reduction_rounded"] = serde_json::json!((f * 1000.0).round() / 1000.0);
    }
    value
}

fn cmd_params(args: ParamsArgs) -> Result<(), Failure> {
    let mut report = match (&args.config, args.block) {
        (Some(path), None) => {
            let cfg = RunConfig::from_path(path)?.net_config()?;
            model_params(&cfg)?
        }
        (None, Some(block)) => {
            let d_model = args
                .d_model
                .ok_or_else(|| Failure::usage("--block requires --d-model"))?;
            match block {
                BlockKind::Mamba => mamba_params(&MambaConfig::new(d_model)),
                BlockKind::Ss2d => ss2d_params(&Ss2dConfig::new(d_model)),
                BlockKind::Pvm => {
                    let kind = match args.kind {
                        BlockKind::Mamba => VmKind::Mamba1d,
                        BlockKind::Ss2d => VmKind::Ss2d,
                        BlockKind::Pvm => {
                            return Err(Failure::usage("--kind must be mamba or ss2d"))
                        }
                    };
                    pvm_params(d_model, args.p, kind)?
                }
            }
        }
        (None, None) => {
            return Err(Failure::usage(
                "params needs either --config PATH or --block NAME --d-model N",
            ))
        }
        (Some(_), Some(_)) => unreachable!("clap conflicts_with prevents this"),
    };
    if let Some(b) = args.baseline {
        report = report.with_baseline(b);
    }
    match args.format {
        Format::Text => print!("{}", report.to_text()),
        Format::Json => println!("{}", param_report_json(&report)),
        Format::Csv => print!("{}", report.to_csv()),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// flops
// ---------------------------------------------------------------------------

fn flop_report_json(report: &FlopReport) -> serde_json::Value {
    let items: Vec<serde_json::Value> = report
        .items
        .iter()
        .map(|(name, macs)| serde_json::json!({"name": name, "macs": macs}))
        .collect();
    serde_json::json!({
        "report": "flops",
        "label": report.label,
        "convention": report.convention.name(),
        "items": items,
        "total_macs": report.total_macs,
        "total_flops": report.total_flops(),
        "total_gflops": report.total_gflops(),
    })
}

fn cmd_flops(args: FlopsArgs) -> Result<(), Failure> {
    let run = match &args.config {
        Some(path) => RunConfig::from_path(path)?,
        None => RunConfig::default(),
    };
    let convention = match args.convention.as_deref() {
        None => run.flop_convention,
        Some("macs") => FlopConvention::Macs,
        Some("2macs") => FlopConvention::MacsTimes2,
        Some(other) => {
            return Err(Failure::usage(format!(
                "unknown convention {other}, expected macs or 2macs"
            )))
        }
    };
    let report = model_flops(&run.net_config()?, convention)?;
    match args.format {
        Format::Text => print!("{}", report.to_text()),
        Format::Json => println!("{}", flop_report_json(&report)),
        Format::Csv => print!("{}", report.to_csv()),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// infer
// ---------------------------------------------------------------------------

fn cmd_infer(args: InferArgs) -> Result<(), Failure> {
    let run = RunConfig::from_path(&args.config)?;
    let cfg = run.net_config()?;
    let weights = match &args.weights {
        Some(path) => load_weights(path, &cfg)?,
        None => init_weights(&cfg, run.seed),
    };
    let image = pnm::load_image_ppm(&args.image)?;
    let map = net_forward(&cfg, &weights, &image)?;
    pnm::write_pgm(&args.out, &map)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalRow {
    file: String,
    dsc: f64,
    se: f64,
    sp: f64,
    acc: f64,
}

fn pgm_names(dir: &Path) -> Result<Vec<String>, Failure> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(uvmunet::Error::from)? {
        let entry = entry.map_err(uvmunet::Error::from)?;
        if entry.path().extension().and_then(|e| e.to_str()) == Some("pgm") {
            if let Some(name) = entry.path().file_name().and_then(|n| n.to_str()) {
                names.push(name.to_string());
            }
        }
    }
    names.sort();
    Ok(names)
}

fn cmd_eval(args: EvalArgs) -> Result<(), Failure> {
    let pred_names = pgm_names(&args.pred)?;
    let truth_names = pgm_names(&args.truth)?;
    let mut rows = Vec::new();
    for name in &pred_names {
        if !truth_names.contains(name) {
            eprintln!("warning: {name} has no ground-truth twin, skipping");
            continue;
        }
        let pred = pnm::load_image_pgm(args.pred.join(name))?;
        let truth = pnm::load_mask_pgm(args.truth.join(name))?;
        let c = confusion(&pred, &truth, args.threshold)?;
        rows.push(EvalRow {
            file: name.clone(),
            dsc: dsc(&c),
            se: se(&c),
            sp: sp(&c),
            acc: acc(&c),
        });
    }
    for name in &truth_names {
        if !pred_names.contains(name) {
            eprintln!("warning: {name} has no prediction, skipping");
        }
    }
    if rows.is_empty() {
        return Err(Failure::empty("no prediction/ground-truth pairs found"));
    }
    let n = rows.len() as f64;
    let mean = EvalRow {
        file: "mean".to_string(),
        dsc: rows.iter().map(|r| r.dsc).sum::<f64>() / n,
        se: rows.iter().map(|r| r.se).sum::<f64>() / n,
        sp: rows.iter().map(|r| r.sp).sum::<f64>() / n,
        acc: rows.iter().map(|r| r.acc).sum::<f64>() / n,
    };
    match args.format {
        Format::Text => {
            let width = rows
                .iter()
                .map(|r| r.file.len())
                .chain(std::iter::once(4))
                .max()
                .unwrap();
            println!(
                "{:<width$}  {:>7}  {:>7}  {:>7}  {:>7}",
                "file", "DSC", "SE", "SP", "ACC"
            );
            for r in rows.iter().chain(std::iter::once(&mean)) {
                println!(
                    "{:<width$}  {:>7.4}  {:>7.4}  {:>7.4}  {:>7.4}",
                    r.file, r.dsc, r.se, r.sp, r.acc
                );
            }
        }
        Format::Json => {
            let pairs: Vec<serde_json::Value> = rows
                .iter()
                .map(|r| {
                    serde_json::json!({
                        "file": r.file, "dsc": r.dsc, "se": r.se, "sp": r.sp, "acc": r.acc
                    })
                })
                .collect();
            println!(
                "{}",
                serde_json::json!({
                    "report": "eval",
                    "pairs": pairs,
                    "mean": {"dsc": mean.dsc, "se": mean.se, "sp": mean.sp, "acc": mean.acc},
                    "count": rows.len(),
                })
            );
        }
        Format::Csv => {
            println!("file,dsc,se,sp,acc");
            for r in rows.iter().chain(std::iter::once(&mean)) {
                println!(
                    "{},{:.6},{:.6},{:.6},{:.6}",
                    r.file, r.dsc, r.se, r.sp, r.acc
                );
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// scan-bench
// ---------------------------------------------------------------------------

fn cmd_scan_bench(args: ScanBenchArgs) -> Result<(), Failure> {
    if args.d == 0 || args.n == 0 || args.len == 0 || args.repeat == 0 {
        return Err(Failure::usage("sizes and repeat must be positive"));
    }
    let chunks: Vec<usize> = args
        .chunks
        .split(',')
        .map(|s| {
            let s = s.trim();
            if s.eq_ignore_ascii_case("l") {
                Ok(args.len)
            } else {
                s.parse::<usize>()
                    .map_err(|e| Failure::usage(format!("bad chunk {s}: {e}")))
            }
        })
        .collect::<Result<_, _>>()?;
    if chunks.contains(&0) {
        return Err(Failure::usage("chunk sizes must be >= 1"));
    }

    // fixed-seed inputs with the scan preconditions baked in
    let mut rng = SplitMix64::new(0xBE11C0DE);
    let lanes = args.d * args.n;
    let a_data: Vec<f32> = (0..lanes * args.len)
        .map(|_| rng.next_range(0.0, 1.0) as f32)
        .collect();
    let b_data: Vec<f32> = (0..lanes * args.len)
        .map(|_| rng.next_range(-1.0, 1.0) as f32)
        .collect();
    let a = Tensor::new(&[args.d, args.n, args.len], a_data)?;
    let b = Tensor::new(&[args.d, args.n, args.len], b_data)?;
    let reference = scan_sequential(&a, &b)?;
    let denom = reference.data().iter().fold(0.0f32, |m, v| m.max(v.abs())) as f64 + 1e-12;

    let mut rows = Vec::new();
    for &chunk in &chunks {
        let mut times = Vec::with_capacity(args.repeat);
        let mut max_dev = 0.0f64;
        for _ in 0..args.repeat {
            let t0 = Instant::now();
            let h = scan_parallel(&a, &b, chunk)?;
            times.push(t0.elapsed().as_secs_f64() * 1e3);
            let dev = h
                .data()
                .iter()
                .zip(reference.data())
                .fold(0.0f64, |m, (x, y)| m.max((*x as f64 - *y as f64).abs()));
            max_dev = max_dev.max(dev / denom);
        }
        times.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let median = times[times.len() / 2];
        rows.push((chunk, median, max_dev));
    }

    match args.format {
        Format::Json => {
            let json_rows: Vec<serde_json::Value> = rows
                .iter()
                .map(|(c, t, d)| serde_json::json!({"chunk": c, "median_ms": t, "max_rel_dev": d}))
                .collect();
            println!(
                "{}",
                serde_json::json!({
                    "report": "scan-bench",
                    "d": args.d, "n": args.n, "len": args.len, "repeat": args.repeat,
                    "rows": json_rows,
                })
            );
        }
        _ => {
            println!(
                "scan-bench d={} n={} len={} repeat={}",
                args.d, args.n, args.len, args.repeat
            );
            println!("{:>8}  {:>12}  {:>12}", "chunk", "median ms", "max rel dev");
            for (c, t, d) in &rows {
                println!("{c:>8}  {t:>12.3}  {d:>12.3e}");
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// selftest
// ---------------------------------------------------------------------------

fn check(name: &str, ok: bool, detail: String, failures: &mut usize) {
    if ok {
        println!("PASS  {name}: {detail}");
    } else {
        println!("FAIL  {name}: {detail}");
        *failures += 1;
    }
}

fn cmd_selftest() -> Result<(), Failure> {
    let mut failures = 0usize;

    let m1024 = mamba_params(&MambaConfig::new(1024)).total;
    check(
        "mamba census d_model=1024",
        m1024 == 23_435_264,
        format!("{m1024} (expected 23435264)"),
        &mut failures,
    );
    let m256 = mamba_params(&MambaConfig::new(256)).total;
    check(
        "mamba census d_model=256",
        m256 == 1_484_288,
        format!("{m256} (expected 1484288)"),
        &mut failures,
    );
    let red_m = 1.0 - m256 as f64 / m1024 as f64;
    check(
        "mamba reduction",
        (red_m - 0.937).abs() < 0.0005,
        format!("{:.4}% (expected 93.70% +- 0.05pp)", red_m * 100.0),
        &mut failures,
    );

    let s1024 = ss2d_params(&Ss2dConfig::new(1024)).total;
    check(
        "ss2d census d_model=1024",
        s1024 == 45_504_512,
        format!("{s1024} (expected 45504512)"),
        &mut failures,
    );
    let s256 = ss2d_params(&Ss2dConfig::new(256)).total;
    check(
        "ss2d census d_model=256",
        s256 == 2_921_984,
        format!("{s256} (expected 2921984)"),
        &mut failures,
    );
    let red_s = 1.0 - s256 as f64 / s1024 as f64;
    check(
        "ss2d reduction",
        (red_s - 0.936).abs() < 0.0005,
        format!("{:.4}% (expected 93.60% +- 0.05pp)", red_s * 100.0),
        &mut failures,
    );

    let quad = 4 * m256;
    let ratio = quad as f64 / m1024 as f64;
    check(
        "quadruple-parallel branch ratio",
        (ratio - 0.2534).abs() <= 0.0005,
        format!("{ratio:.4} (expected 0.2534 +- 0.0005, rounds to 0.252)"),
        &mut failures,
    );

    let cfg = uvmunet::net::NetConfig::default();
    let total = model_params(&cfg)?.total;
    check(
        "whole-model census",
        (44_000..=54_000).contains(&total),
        format!("{total} (expected within [44000, 54000], reference 0.049M)"),
        &mut failures,
    );
    let gflops = model_flops(&cfg, FlopConvention::Macs)?.total_gflops();
    check(
        "gflops estimate (macs convention)",
        (0.045..=0.075).contains(&gflops),
        format!("{gflops:.4} (expected within 25% of reference 0.060)"),
        &mut failures,
    );

    if failures == 0 {
        println!("selftest: all checks passed");
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_CONFIG,
            message: format!("selftest: {failures} check(s) failed"),
        })
    }
}
