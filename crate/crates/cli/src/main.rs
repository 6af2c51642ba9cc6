//! `bpcm` command-line tool: code, permutation and interleaver design,
//! capacity tables, GA-DE curves and link simulation.

// Guards like `!(x > 0.0)` are written that way so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use bpcm::channel::{capacity_rows, AwgnSpec, SnrConvention};
use bpcm::construction::{construct_gade, construct_montecarlo, ChannelProfile};
use bpcm::mapping::{
    construct_pbp_code, construct_sbp_codes, design_permutations, greedy_interleaver, info_count,
    make_random_interleaver, BicmSystem, BitPermutationMap, Interleaver, PbpRefinement,
};
use bpcm::polar::DesignMeta;
use bpcm::sim::{constellation_name, run_sweep, snr_at_bler, write_link_csv, Scheme, SimConfig};
use bpcm::{Constellation, Labeling, PolarCode};

use output::{load_artifact, read_provenance, write_csv_with_provenance, write_envelope, CliError, Provenance, Saved};

#[derive(Parser, Debug)]
#[command(name = "bpcm", version, about = "Polar-coded ASK modulation workbench")]
struct Cli {
    /// Cap on worker threads used by simulations.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Select the frozen set of a polar code.
    DesignCode(DesignCodeArgs),
    /// Per-symbol decode-order permutations for BPCM.
    DesignPermutations(DesignPermutationsArgs),
    /// Random or greedy BICM interleaver.
    DesignInterleaver(DesignInterleaverArgs),
    /// Modulation and bit-channel capacities across an SNR range.
    CapacityTable(CapacityTableArgs),
    /// GA-DE block error estimate versus SNR.
    DeCurve(DeCurveArgs),
    /// Monte-Carlo link simulation.
    Simulate(SimulateArgs),
    /// SNR difference between two BLER curves at a target BLER.
    Gain(GainArgs),
    /// Re-run the command recorded in an output file.
    Replay(ReplayArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Modulation {
    Bpsk,
    #[value(name = "4ask")]
    Ask4,
    #[value(name = "8ask")]
    Ask8,
    #[value(name = "16ask")]
    Ask16,
}

impl Modulation {
    fn bits(self) -> usize {
        match self {
            Modulation::Bpsk => 1,
            Modulation::Ask4 => 2,
            Modulation::Ask8 => 3,
            Modulation::Ask16 => 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Convention {
    Ebn0,
    Esn0,
}

impl From<Convention> for SnrConvention {
    fn from(c: Convention) -> Self {
        match c {
            Convention::Ebn0 => SnrConvention::EbN0,
            Convention::Esn0 => SnrConvention::EsN0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum LabelingArg {
    Sp,
    Gray,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SchemeArg {
    Bpcm,
    Bicm,
    Sbp,
    Pbp,
    Bpsk,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Bpcm => Scheme::Bpcm,
            SchemeArg::Bicm => Scheme::Bicm,
            SchemeArg::Sbp => Scheme::Sbp,
            SchemeArg::Pbp => Scheme::Pbp,
            SchemeArg::Bpsk => Scheme::Bpsk,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Method {
    Gade,
    Montecarlo,
    Sbp,
    Pbp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum InterleaverKindArg {
    Random,
    Greedy,
}

#[derive(Args, Debug)]
struct DesignCodeArgs {
    #[arg(long = "N")]
    n: usize,
    #[arg(long)]
    rate: f64,
    #[arg(long, value_enum, default_value = "gade")]
    method: Method,
    #[arg(long, allow_hyphen_values = true)]
    snr_db: f64,
    #[arg(long, value_enum, default_value = "ebn0")]
    convention: Convention,
    /// Only for the modulation-specific methods (sbp, pbp).
    #[arg(long, value_enum, default_value = "bpsk")]
    modulation: Modulation,
    /// Interleaver file for pbp; a random one from --seed otherwise.
    #[arg(long)]
    interleaver: Option<PathBuf>,
    /// Simulated samples for first-order PBP refinement (off when absent).
    #[arg(long)]
    refine_samples: Option<usize>,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DesignPermutationsArgs {
    #[arg(long)]
    code: PathBuf,
    #[arg(long, value_enum)]
    modulation: Modulation,
    #[arg(long, allow_hyphen_values = true)]
    snr_db: f64,
    #[arg(long, value_enum, default_value = "ebn0")]
    convention: Convention,
    #[arg(long, default_value_t = 10)]
    max_iters: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DesignInterleaverArgs {
    #[arg(long)]
    code: PathBuf,
    #[arg(long, value_enum)]
    modulation: Modulation,
    /// Design SNR; required for greedy, optional for random (adds an estimate)
    #[arg(long, allow_hyphen_values = true, required_if_eq("kind", "greedy"))]
    snr_db: Option<f64>,
    #[arg(long, value_enum, default_value = "ebn0")]
    convention: Convention,
    #[arg(long, value_enum, default_value = "greedy")]
    kind: InterleaverKindArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CapacityTableArgs {
    #[arg(long, value_enum)]
    modulation: Modulation,
    #[arg(long, value_enum, default_value = "sp")]
    labeling: LabelingArg,
    /// Es/N0 points: `lo:step:hi`, a comma list, or a single value.
    #[arg(long, allow_hyphen_values = true)]
    snr_db_range: String,
    /// Conditioning order such as `1,0`; marginal capacities when absent.
    #[arg(long)]
    order: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DeCurveArgs {
    #[arg(long)]
    code: PathBuf,
    #[arg(long, value_enum)]
    scheme: SchemeArg,
    #[arg(long, value_enum)]
    modulation: Modulation,
    #[arg(long)]
    pmap: Option<PathBuf>,
    #[arg(long)]
    interleaver: Option<PathBuf>,
    /// Seed of the random interleaver used when --interleaver is absent.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, allow_hyphen_values = true)]
    snr_db_range: String,
    #[arg(long, value_enum, default_value = "ebn0")]
    convention: Convention,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Full simulation config (JSON). Overrides every other input flag.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    code: Option<PathBuf>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    #[arg(long, value_enum)]
    modulation: Option<Modulation>,
    #[arg(long)]
    pmap: Option<PathBuf>,
    #[arg(long)]
    interleaver: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    snr_db_range: Option<String>,
    #[arg(long, value_enum, default_value = "ebn0")]
    convention: Convention,
    #[arg(long, default_value_t = 100_000)]
    max_trials: u64,
    #[arg(long, default_value_t = 50)]
    min_errors: u64,
    /// Stop the sweep once a point's BLER falls below this.
    #[arg(long, default_value_t = 1e-5)]
    floor: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON result envelope.
    #[arg(long)]
    out: PathBuf,
    /// Optional CSV with one row per SNR point.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GainArgs {
    /// Curve of the scheme being compared against (CSV).
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    candidate: PathBuf,
    #[arg(long, default_value_t = 1e-2)]
    target: f64,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    /// Output file of an earlier run.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Fail unless the new output matches the input byte for byte.
    #[arg(long)]
    check: bool,
}

/// Flags that only choose where output goes or how fast it is produced;
/// they are left out of the recorded command.
const UNRECORDED: [&str; 3] = ["--out", "--csv", "--threads"];

fn recorded_args(args: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if UNRECORDED.contains(&a.as_str()) {
            it.next();
        } else if !UNRECORDED.iter().any(|f| a.starts_with(&format!("{f}="))) {
            out.push(a.clone());
        }
    }
    out
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command, recorded_args(&args[1..])) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn run(command: Command, recorded: Vec<String>) -> Result<(), CliError> {
    let prov = Provenance::new(recorded);
    match command {
        Command::DesignCode(a) => design_code(a, prov),
        Command::DesignPermutations(a) => design_perms(a, prov),
        Command::DesignInterleaver(a) => design_interleaver(a, prov),
        Command::CapacityTable(a) => capacity_table(a, prov),
        Command::DeCurve(a) => de_curve(a, prov),
        Command::Simulate(a) => simulate(a, prov),
        Command::Gain(a) => gain(a),
        Command::Replay(a) => replay(a),
    }
}

/// Parses `lo:step:hi`, `a,b,c` or a single value.
fn parse_range(s: &str) -> Result<Vec<f64>, CliError> {
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| usage(format!("bad number {t:?} in {s:?}")));
    let parts: Vec<&str> = s.split(':').collect();
    let grid = match parts.as_slice() {
        [lo, step, hi] => {
            let (lo, step, hi) = (num(lo)?, num(step)?, num(hi)?);
            if !(step > 0.0) || hi < lo {
                return Err(usage(format!("bad range {s:?}")));
            }
            let count = ((hi - lo) / step + 1e-9).floor() as usize;
            // Rounding keeps grid points free of accumulated float noise.
            (0..=count).map(|i| ((lo + i as f64 * step) * 1e9).round() / 1e9).collect()
        }
        [list] => list.split(',').map(num).collect::<Result<Vec<_>, _>>()?,
        _ => return Err(usage(format!("bad range {s:?}"))),
    };
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(usage("SNR points must be strictly increasing"));
    }
    Ok(grid)
}

fn load_code(path: &Path) -> Result<PolarCode, CliError> {
    load_artifact(path)
}

fn channel(snr_db: f64, convention: Convention, rate: f64, bits: usize) -> AwgnSpec {
    AwgnSpec::from_db(snr_db, convention.into(), rate, bits)
}

fn design_code(a: DesignCodeArgs, prov: Provenance) -> Result<(), CliError> {
    let k_info = info_count(a.n, a.rate)?;
    let bits = a.modulation.bits();
    let spec = channel(a.snr_db, a.convention, a.rate, bits);
    if matches!(a.method, Method::Gade | Method::Montecarlo) && bits != 1 {
        return Err(usage("gade and montecarlo design for BPSK; use sbp or pbp for higher orders"));
    }
    let (code, meta, seed) = match a.method {
        Method::Gade => {
            let stages = a.n.trailing_zeros() as usize;
            let code = construct_gade(a.n, k_info, &ChannelProfile::uniform_bpsk(a.n, &spec), stages)?;
            (code, DesignMeta { method: "gade".into(), snr_db: Some(a.snr_db), ..Default::default() }, None)
        }
        Method::Montecarlo => {
            let code = construct_montecarlo(a.n, k_info, &spec, a.trials, a.seed)?;
            let meta = DesignMeta {
                method: "montecarlo".into(),
                snr_db: Some(a.snr_db),
                seed: Some(a.seed),
                trials: Some(a.trials),
            };
            (code, meta, Some(a.seed))
        }
        Method::Sbp => {
            let c = Constellation::ask(bits, Labeling::SetPartition)?;
            let code = construct_sbp_codes(a.n, &c, &spec, a.rate)?;
            (code, DesignMeta { method: "sbp".into(), snr_db: Some(a.snr_db), ..Default::default() }, None)
        }
        Method::Pbp => {
            let c = Constellation::ask(bits, Labeling::Gray)?;
            let il: Interleaver = match &a.interleaver {
                Some(p) => load_artifact(p)?,
                None => make_random_interleaver(a.n, a.seed),
            };
            let refine = a.refine_samples.map(|samples| PbpRefinement { samples, seed: a.seed });
            let code = construct_pbp_code(&c, &spec, a.rate, &il, refine)?;
            let meta = DesignMeta {
                method: "pbp".into(),
                snr_db: Some(a.snr_db),
                seed: Some(a.seed),
                trials: a.refine_samples.map(|s| s as u64),
            };
            (code, meta, Some(a.seed))
        }
    };
    let code = code.with_design(meta);
    println!("designed N={} K={} ({:?})", code.len(), code.k_info(), a.method);
    write_envelope(&a.out, &prov.with_seed(seed), &code, None)
}

fn sp_constellation(m: Modulation) -> Result<Constellation, CliError> {
    Ok(Constellation::ask(m.bits(), Labeling::SetPartition)?)
}

fn design_perms(a: DesignPermutationsArgs, prov: Provenance) -> Result<(), CliError> {
    let code = load_code(&a.code)?;
    let c = sp_constellation(a.modulation)?;
    let spec = channel(a.snr_db, a.convention, code.rate(), c.bits());
    let d = design_permutations(&code, &c, &spec, a.max_iters)?;
    println!("estimate {:e} (all-P1 {:e}) after {} iterations", d.estimate, d.initial_estimate, d.iterations);
    let report = json!({
        "snr_db": a.snr_db,
        "initial_estimate": d.initial_estimate,
        "estimate": d.estimate,
        "iterations": d.iterations,
        "histogram": d.map.histogram(),
    });
    write_envelope(&a.out, &prov, &d.map, Some(report))
}

fn design_interleaver(a: DesignInterleaverArgs, prov: Provenance) -> Result<(), CliError> {
    let code = load_code(&a.code)?;
    let c = Constellation::ask(a.modulation.bits(), Labeling::Gray)?;
    let spec = a.snr_db.map(|db| channel(db, a.convention, code.rate(), c.bits()));
    let (il, report) = match (a.kind, spec) {
        (InterleaverKindArg::Random, spec) => {
            let il = make_random_interleaver(code.len(), a.seed);
            let report = match spec {
                Some(spec) => {
                    let e = BicmSystem::new(code.clone(), c, il.clone())?.estimate(&spec)?;
                    json!({ "snr_db": a.snr_db, "estimate": e })
                }
                None => json!({}),
            };
            (il, report)
        }
        (InterleaverKindArg::Greedy, Some(spec)) => {
            let d = greedy_interleaver(&code, &c, &spec, a.seed)?;
            let r = json!({
                "snr_db": a.snr_db,
                "initial_estimate": d.initial_estimate,
                "estimate": d.estimate,
                "swaps": d.swaps,
            });
            (d.interleaver, r)
        }
        (InterleaverKindArg::Greedy, None) => return Err(CliError::Usage("greedy design needs --snr-db".into())),
    };
    if let Some(e) = report["estimate"].as_f64() {
        println!("estimate {e:e}");
    }
    write_envelope(&a.out, &prov.with_seed(Some(a.seed)), &il, Some(report))
}

fn capacity_table(a: CapacityTableArgs, prov: Provenance) -> Result<(), CliError> {
    let labeling = match a.labeling {
        LabelingArg::Sp => Labeling::SetPartition,
        LabelingArg::Gray => Labeling::Gray,
    };
    let c = Constellation::ask(a.modulation.bits(), labeling)?;
    let order = a
        .order
        .as_deref()
        .map(|s| {
            s.split(',')
                .map(|t| t.trim().parse::<usize>().map_err(|_| usage(format!("bad order {s:?}"))))
                .collect::<Result<Vec<_>, _>>()
        })
        .transpose()?;
    let mut rows = Vec::new();
    for snr in parse_range(&a.snr_db_range)? {
        rows.extend(capacity_rows(&c, snr, &AwgnSpec::from_es_n0_db(snr), order.as_deref())?);
    }
    write_csv_with_provenance(&a.out, &prov, |w| Ok(bpcm::channel::write_capacity_csv(&rows, w)?))
}

fn load_optional<T: serde::de::DeserializeOwned>(p: &Option<PathBuf>) -> Result<Option<T>, CliError> {
    p.as_deref().map(load_artifact).transpose()
}

/// Config with the artifacts a scheme needs attached.
fn scheme_config(
    scheme: Scheme,
    code: PolarCode,
    bits: usize,
    pmap: Option<BitPermutationMap>,
    interleaver: Option<Interleaver>,
    seed: u64,
) -> Result<SimConfig, CliError> {
    let len = code.len();
    let mut cfg = SimConfig::new(scheme, code, bits, Vec::new(), 1, seed);
    match scheme {
        Scheme::Bpcm => {
            cfg.pmap = Some(pmap.ok_or_else(|| usage("bpcm needs --pmap"))?);
        }
        Scheme::Bicm | Scheme::Pbp => {
            cfg.interleaver = Some(interleaver.unwrap_or_else(|| make_random_interleaver(len, seed)));
        }
        Scheme::Sbp | Scheme::Bpsk => {}
    }
    Ok(cfg)
}

#[derive(Serialize)]
struct CurveRow<'a> {
    scheme: String,
    #[serde(rename = "N")]
    n: usize,
    rate: f64,
    constellation: &'a str,
    snr_db: f64,
    bler_estimate: f64,
}

fn de_curve(a: DeCurveArgs, prov: Provenance) -> Result<(), CliError> {
    let code = load_code(&a.code)?;
    let scheme: Scheme = a.scheme.into();
    let bits = a.modulation.bits();
    let mut cfg = scheme_config(scheme, code, bits, load_optional(&a.pmap)?, load_optional(&a.interleaver)?, a.seed)?;
    cfg.snr_convention = a.convention.into();
    let name = constellation_name(bits, scheme.labeling());
    let mut rows = Vec::new();
    for snr in parse_range(&a.snr_db_range)? {
        rows.push(CurveRow {
            scheme: scheme.to_string(),
            n: cfg.code.len(),
            rate: cfg.code.rate(),
            constellation: &name,
            snr_db: snr,
            bler_estimate: cfg.ga_estimate(snr)?,
        });
    }
    write_csv_with_provenance(&a.out, &prov.with_seed(Some(a.seed)), |w| {
        let mut w = csv::Writer::from_writer(w);
        for r in &rows {
            w.serialize(r).map_err(std::io::Error::other)?;
        }
        w.flush()?;
        Ok(())
    })
}

fn simulation_config(a: &SimulateArgs) -> Result<SimConfig, CliError> {
    if let Some(p) = &a.config {
        return load_artifact(p);
    }
    let code = load_code(a.code.as_deref().ok_or_else(|| usage("simulate needs --config or --code"))?)?;
    let scheme: Scheme = a.scheme.ok_or_else(|| usage("simulate needs --scheme"))?.into();
    let bits = a.modulation.ok_or_else(|| usage("simulate needs --modulation"))?.bits();
    let mut cfg = scheme_config(scheme, code, bits, load_optional(&a.pmap)?, load_optional(&a.interleaver)?, a.seed)?;
    cfg.snr_grid = parse_range(a.snr_db_range.as_deref().ok_or_else(|| usage("simulate needs --snr-db-range"))?)?;
    cfg.snr_convention = a.convention.into();
    cfg.max_trials = a.max_trials;
    cfg.min_block_errors = a.min_errors;
    cfg.bler_floor = Some(a.floor);
    Ok(cfg)
}

fn simulate(a: SimulateArgs, prov: Provenance) -> Result<(), CliError> {
    let cfg = simulation_config(&a)?;
    simulate_config(cfg, prov, Some(&a.out), a.csv.as_deref())
}

fn simulate_config(cfg: SimConfig, prov: Provenance, out: Option<&Path>, csv_out: Option<&Path>) -> Result<(), CliError> {
    cfg.validate()?;
    let result = run_sweep::<f64>(&cfg)?;
    for p in &result.points {
        println!(
            "{:>8.3} dB  {:>8} trials  {:>6} errors  BLER {:.3e}{}",
            p.snr_db,
            p.trials,
            p.errors,
            p.bler,
            if p.censored { " (censored)" } else { "" }
        );
    }
    let prov = prov.with_seed(Some(cfg.master_seed));
    if let Some(path) = csv_out {
        write_csv_with_provenance(path, &prov, |w| Ok(write_link_csv(&result, w)?))?;
    }
    if let Some(path) = out {
        write_envelope(path, &prov, &result, None)?;
    }
    Ok(())
}

/// `(snr_db, bler)` pairs of a link or GA-DE curve CSV.
fn read_curve(path: &Path) -> Result<Vec<(f64, f64)>, CliError> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let headers = r.headers().map_err(|e| usage(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let snr = col("snr_db").ok_or_else(|| usage(format!("{}: no snr_db column", path.display())))?;
    let bler = col("bler")
        .or_else(|| col("bler_estimate"))
        .ok_or_else(|| usage(format!("{}: no bler column", path.display())))?;
    let mut pts = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| usage(e.to_string()))?;
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| usage(format!("bad number {:?}", &rec[i])));
        pts.push((num(snr)?, num(bler)?));
    }
    Ok(pts)
}

fn gain(a: GainArgs) -> Result<(), CliError> {
    let find = |p: &Path| {
        snr_at_bler(&read_curve(p)?, a.target).ok_or_else(|| {
            CliError::Core(bpcm::Error::SearchFailed(format!("{} never crosses BLER {}", p.display(), a.target)))
        })
    };
    let (r, c) = (find(&a.reference)?, find(&a.candidate)?);
    println!("reference {r:.4} dB, candidate {c:.4} dB, gain {:.4} dB", r - c);
    Ok(())
}

fn replay(a: ReplayArgs) -> Result<(), CliError> {
    let (prov, saved) = read_provenance(&a.input)?;
    let first = prov.command.first().map(String::as_str);
    if first == Some("replay") || first.is_none() {
        return Err(usage("nothing to replay"));
    }
    let mut argv = vec!["bpcm".to_string()];
    argv.extend(prov.command.iter().cloned());
    argv.push("--out".into());
    argv.push(a.out.display().to_string());
    let cli = Cli::try_parse_from(&argv).map_err(|e| usage(e.to_string()))?;
    match (cli.command, saved) {
        // Simulation results carry their full config; use it directly so
        // the run does not depend on the original config file.
        (Command::Simulate(_), Saved::Link(result)) => {
            simulate_config(result.config.clone(), prov.clone(), Some(&a.out), None)?
        }
        (Command::Simulate(s), Saved::Csv) => {
            simulate_config(simulation_config(&s)?, prov.clone(), None, Some(&a.out))?
        }
        (command, _) => run(command, prov.command.clone())?,
    }
    if a.check {
        let (old, new) = (std::fs::read(&a.input).map_err(bpcm::Error::Io)?, std::fs::read(&a.out).map_err(bpcm::Error::Io)?);
        if old != new {
            return Err(CliError::Mismatch(format!("{} differs from {}", a.out.display(), a.input.display())));
        }
        println!("replay identical");
    }
    Ok(())
}
