//! `snaphdr`: simulate ME-CFA captures, train the two networks, reconstruct
//! and evaluate HDR images.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use snaphdr::config::{parse_scales, CheckpointMeta, RunConfig};
use snaphdr::dataset::{crop_to_period, dataset_files, load_dataset};
use snaphdr::hdrio::{read_image, write_hdr, write_pfm, write_pgm16, write_ppm};
use snaphdr::imgcore::parse_pattern;
use snaphdr::metrics::{log_thresholds, EvalReport};
use snaphdr::pipeline::{loss_csv, reconstruct, run_manifest, train_ldr_i_net, train_ln_net, LossDomain};
use snaphdr::scenes::{scene, SceneSpec};
use snaphdr::sim::simulate_mecfa;

const EXIT_RUNTIME: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_SELFTEST: u8 = 3;

#[derive(Parser)]
#[command(name = "snaphdr", version, about = "Snapshot HDR reconstruction from multi-exposure CFA RAW data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an ME-CFA capture of an HDR image.
    Simulate(SimulateArgs),
    /// Write procedural HDR scenes as .hdr files.
    MakeScenes(MakeScenesArgs),
    /// Train the LDR interpolation network.
    TrainLdr(TrainArgs),
    /// Train the luminance-normalized HDR network.
    TrainLn(TrainLnArgs),
    /// Reconstruct an HDR image from a RAW mosaic.
    Reconstruct(ReconstructArgs),
    /// Compare a predicted HDR image with the ground truth.
    Evaluate(EvaluateArgs),
    /// Run gradient checks and identity tests.
    Selftest,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// 16 `<color><exposure>` tokens in row-major order, or `default`.
    #[arg(long, default_value = "default")]
    pattern: String,
    /// Comma-separated exposure scales.
    #[arg(long, default_value = "1,4,16")]
    scales: String,
    #[arg(long, default_value_t = 8)]
    bit_depth: u32,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct MakeScenesArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 24)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory of .hdr files.
    #[arg(long)]
    data: PathBuf,
    /// File listing the training images by name, one per line.
    #[arg(long)]
    list: Option<PathBuf>,
    /// INI file with [sim], [train] and [net] sections.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for the checkpoint, loss trace and manifest.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct TrainLnArgs {
    #[command(flatten)]
    common: TrainArgs,
    /// Checkpoint of the trained LDR interpolation network.
    #[arg(long)]
    ldr: PathBuf,
    /// Train against linear HDR values instead of luminance-normalized ones.
    #[arg(long)]
    linear_loss: bool,
}

#[derive(Args)]
struct ReconstructArgs {
    /// Single-channel RAW mosaic (.pfm or .pgm).
    #[arg(long)]
    raw: PathBuf,
    #[arg(long)]
    ldr: PathBuf,
    #[arg(long)]
    ln: PathBuf,
    /// Output HDR image (.hdr or .pfm).
    #[arg(long)]
    out: PathBuf,
    /// Also write the tentative luminance next to the output.
    #[arg(long)]
    save_luminance: bool,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

fn ensure_writable(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        bail!("{} exists; pass --force to overwrite", path.display());
    }
    Ok(())
}

fn prepare_dir(dir: &Path, outputs: &[&str], force: bool) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for name in outputs {
        ensure_writable(&dir.join(name), force)?;
    }
    Ok(())
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let mut cfg = RunConfig::default().sim;
    cfg.pattern = parse_pattern(&a.pattern)?;
    cfg.exposure_scales = parse_scales(&a.scales)?;
    cfg.bit_depth = a.bit_depth;
    cfg.validate()?;
    let k = cfg.exposure_scales.len();
    let mut outputs = vec!["raw.pfm".to_string(), "raw.pgm".into(), "gt.hdr".into(), "gt.pfm".into()];
    for e in 0..k {
        outputs.push(format!("ldr_{e}.ppm"));
        outputs.push(format!("ldr_{e}.pfm"));
    }
    let names: Vec<&str> = outputs.iter().map(String::as_str).collect();
    prepare_dir(&a.out, &names, a.force)?;

    let img = read_image(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    if img.channels() != 3 {
        bail!("{}: expected an RGB image", a.input.display());
    }
    let sim = simulate_mecfa(&crop_to_period(&img)?, &cfg)?;
    write_pfm(&sim.raw, &a.out.join("raw.pfm"))?;
    write_pgm16(&sim.raw, &a.out.join("raw.pgm"))?;
    for (e, ldr) in sim.ldr.iter().enumerate() {
        write_ppm(ldr, &a.out.join(format!("ldr_{e}.ppm")))?;
        write_pfm(ldr, &a.out.join(format!("ldr_{e}.pfm")))?;
    }
    write_hdr(&sim.hdr_norm, &a.out.join("gt.hdr"))?;
    write_pfm(&sim.hdr_norm, &a.out.join("gt.pfm"))?;
    Ok(())
}

fn make_scenes(a: &MakeScenesArgs) -> Result<()> {
    let names: Vec<String> = (0..a.count as u64).map(|i| format!("scene_{:04}.hdr", a.first_seed + i)).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    prepare_dir(&a.out, &refs, a.force)?;
    let spec = SceneSpec {
        size: a.size,
        ..SceneSpec::default()
    };
    for (i, name) in names.iter().enumerate() {
        write_hdr(&scene(a.first_seed + i as u64, &spec)?, &a.out.join(name))?;
    }
    Ok(())
}

fn load_config(a: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::from_ini(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => RunConfig::default(),
    };
    if let Ok(s) = std::env::var("SNAPHDR_SEED") {
        cfg.train.seed = s.trim().parse().with_context(|| format!("SNAPHDR_SEED={s:?} is not an integer"))?;
    }
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    if let Some(n) = a.iterations {
        cfg.train.iterations = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn progress(stage: &'static str, total: usize) -> impl FnMut(usize, f64) {
    let every = (total / 20).max(1);
    move |it, loss| {
        if (it + 1) % every == 0 || it + 1 == total {
            eprintln!("{stage}: iteration {}/{total} loss {loss:.6}", it + 1);
        }
    }
}

fn write_training_outputs(
    dir: &Path,
    stage: &str,
    cfg: &RunConfig,
    net: &autonet::SnapshotNet,
    losses: &[f64],
) -> Result<()> {
    let echo = cfg.checkpoint_echo(stage);
    autonet::checkpoint::save_net(&dir.join(format!("{stage}.ckpt")), net, &echo)?;
    std::fs::write(dir.join(format!("{stage}_loss.csv")), loss_csv(losses))?;
    let manifest = run_manifest(&format!("{}{echo}", net.config().echo()), cfg.train.seed, losses);
    std::fs::write(dir.join(format!("{stage}_manifest.txt")), manifest)?;
    Ok(())
}

fn stage_outputs(stage: &str) -> [String; 3] {
    [format!("{stage}.ckpt"), format!("{stage}_loss.csv"), format!("{stage}_manifest.txt")]
}

fn train_ldr(a: &TrainArgs) -> Result<()> {
    let cfg = load_config(a)?;
    let outs = stage_outputs("ldr");
    prepare_dir(&a.out, &outs.each_ref().map(String::as_str), a.force)?;
    let data = load_dataset(&dataset_files(&a.data, a.list.as_deref())?, &cfg.sim)?;
    let mut cb = progress("train-ldr", cfg.train.iterations);
    let trained = train_ldr_i_net(&data, &cfg.sim.pattern, &cfg.train, &cfg.net, Some(&mut cb))?;
    write_training_outputs(&a.out, "ldr", &cfg, &trained.net, &trained.losses)
}

fn train_ln(a: &TrainLnArgs) -> Result<()> {
    let cfg = load_config(&a.common)?;
    let (domain, stage) = if a.linear_loss {
        (LossDomain::Linear, "linear")
    } else {
        (LossDomain::LuminanceNormalized, "ln")
    };
    let outs = stage_outputs(stage);
    prepare_dir(&a.common.out, &outs.each_ref().map(String::as_str), a.common.force)?;
    let (ldr_net, echo) = autonet::checkpoint::load_net(&a.ldr).with_context(|| format!("loading {}", a.ldr.display()))?;
    let meta = CheckpointMeta::from_echo(&echo)?;
    if meta.sim != cfg.sim {
        bail!("simulation settings differ from those the LDR network was trained with");
    }
    let data = load_dataset(&dataset_files(&a.common.data, a.common.list.as_deref())?, &cfg.sim)?;
    let spec = cfg.sim.exposure_spec();
    let mut cb = progress("train-ln", cfg.train.iterations);
    let trained = train_ln_net(&data, &ldr_net, &cfg.sim.pattern, &spec, &cfg.train, &cfg.net, domain, Some(&mut cb))?;
    write_training_outputs(&a.common.out, stage, &cfg, &trained.net, &trained.losses)
}

fn reconstruct_cmd(a: &ReconstructArgs) -> Result<()> {
    ensure_writable(&a.out, a.force)?;
    let lum_path = a.out.with_file_name(format!(
        "{}_luminance.pfm",
        a.out.file_stem().and_then(|s| s.to_str()).unwrap_or("out")
    ));
    if a.save_luminance {
        ensure_writable(&lum_path, a.force)?;
    }
    let (ldr_net, ldr_echo) = autonet::checkpoint::load_net(&a.ldr).with_context(|| format!("loading {}", a.ldr.display()))?;
    let (ln_net, ln_echo) = autonet::checkpoint::load_net(&a.ln).with_context(|| format!("loading {}", a.ln.display()))?;
    let ldr_meta = CheckpointMeta::from_echo(&ldr_echo)?;
    let ln_meta = CheckpointMeta::from_echo(&ln_echo)?;
    if ldr_meta.sim != ln_meta.sim {
        bail!("the two checkpoints were trained with different simulation settings");
    }
    let raw = read_image(&a.raw).with_context(|| format!("reading {}", a.raw.display()))?;
    if raw.channels() != 1 {
        bail!("{}: expected a single-channel RAW mosaic", a.raw.display());
    }
    let raw = crop_to_period(&raw)?;
    let spec = ldr_meta.sim.exposure_spec();
    let r = reconstruct(&raw, &ldr_meta.sim.pattern, &spec, &ldr_net, &ln_net, ln_meta.epsilon_l)?;
    snaphdr::hdrio::write_image(&r.hdr, &a.out)?;
    if a.save_luminance {
        write_pfm(&r.luminance.lhat, &lum_path)?;
    }
    Ok(())
}

fn evaluate(a: &EvaluateArgs) -> Result<()> {
    prepare_dir(&a.out, &["report.csv", "curve.csv", "report.txt"], a.force)?;
    let pred = read_image(&a.pred).with_context(|| format!("reading {}", a.pred.display()))?;
    let truth = read_image(&a.truth).with_context(|| format!("reading {}", a.truth.display()))?;
    let report = EvalReport::compute(&pred, &truth, &log_thresholds(1e-8, 1e-1, 29))?;
    std::fs::write(a.out.join("report.csv"), report.to_csv())?;
    std::fs::write(a.out.join("curve.csv"), report.curve_csv())?;
    std::fs::write(a.out.join("report.txt"), report.to_table())?;
    print!("{}", report.to_table());
    Ok(())
}

fn selftest() -> Result<bool> {
    let results = snaphdr::selftest::run()?;
    let mut ok = true;
    for r in &results {
        println!("{} {} ({})", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
        ok &= r.passed;
    }
    Ok(ok)
}

/// One-line JSON string literal.
fn json_string(s: &str) -> String {
    let mut out = String::from("\"");
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn report_error(kind: &str, code: u8, msg: &str) -> ExitCode {
    eprintln!("{{\"error\":{},\"exit\":{code},\"message\":{}}}", json_string(kind), json_string(msg));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("usage error");
            return report_error("usage", EXIT_USAGE, first.trim_start_matches("error: "));
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::MakeScenes(a) => make_scenes(a),
        Command::TrainLdr(a) => train_ldr(a),
        Command::TrainLn(a) => train_ln(a),
        Command::Reconstruct(a) => reconstruct_cmd(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Selftest => match selftest() {
            Ok(true) => Ok(()),
            Ok(false) => return report_error("selftest", EXIT_SELFTEST, "one or more checks failed"),
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report_error("runtime", EXIT_RUNTIME, &format!("{e:#}")),
    }
}
