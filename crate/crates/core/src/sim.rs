//! Monte-Carlo AWGN link simulation over the BPCM, BICM, SBP, PBP and
//! BPSK transmission schemes, plus the matching GA-DE curves.
//!
//! Trial `t` of every SNR point draws its info bits and noise from the
//! ChaCha8 stream `t` of `master_seed`, so counts never depend on how
//! trials are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{AwgnSpec, SnrConvention};
use crate::constellation::{Constellation, Labeling};
use crate::construction::{estimate_bler, ChannelProfile};
use crate::error::{config, Result};
use crate::mapping::{bpcm_estimate, BicmSystem, BitPermutationMap, BpcmSystem, Interleaver, SymbolLayout};
use crate::polar::PolarCode;
use crate::scalar::Real;

/// Transmission scheme of a link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// SP labeling, per-symbol permutation map, multistage decoding.
    Bpcm,
    /// Gray labeling, interleaver, marginal demapping.
    Bicm,
    /// Modulation-specific SBP code on the BPCM layout with the
    /// conventional order everywhere.
    Sbp,
    /// Modulation-specific PBP code, transmitted like BICM.
    Pbp,
    Bpsk,
}

impl Scheme {
    /// Labeling the scheme transmits with.
    pub fn labeling(self) -> Labeling {
        match self {
            Scheme::Bpcm | Scheme::Sbp => Labeling::SetPartition,
            Scheme::Bicm | Scheme::Pbp | Scheme::Bpsk => Labeling::Gray,
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Bpcm => "bpcm",
            Scheme::Bicm => "bicm",
            Scheme::Sbp => "sbp",
            Scheme::Pbp => "pbp",
            Scheme::Bpsk => "bpsk",
        })
    }
}

impl std::str::FromStr for Scheme {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bpcm" => Ok(Scheme::Bpcm),
            "bicm" => Ok(Scheme::Bicm),
            "sbp" => Ok(Scheme::Sbp),
            "pbp" => Ok(Scheme::Pbp),
            "bpsk" => Ok(Scheme::Bpsk),
            _ => Err(config(format!("unknown scheme {s:?}"))),
        }
    }
}

fn default_min_errors() -> u64 {
    50
}

fn default_floor() -> Option<f64> {
    Some(1e-5)
}

/// Everything a simulation run depends on. Artifacts are embedded so a
/// saved config replays without outside files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub scheme: Scheme,
    pub code: PolarCode,
    /// Bits per symbol.
    pub bits: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pmap: Option<BitPermutationMap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interleaver: Option<Interleaver>,
    pub snr_grid: Vec<f64>,
    #[serde(default)]
    pub snr_convention: SnrConvention,
    pub max_trials: u64,
    #[serde(default = "default_min_errors")]
    pub min_block_errors: u64,
    pub master_seed: u64,
    /// Points above the first one whose BLER falls below this are skipped.
    #[serde(default = "default_floor")]
    pub bler_floor: Option<f64>,
}

impl SimConfig {
    /// Config with the default stopping rule and no artifacts attached.
    pub fn new(scheme: Scheme, code: PolarCode, bits: usize, snr_grid: Vec<f64>, max_trials: u64, master_seed: u64) -> Self {
        Self {
            scheme,
            code,
            bits,
            pmap: None,
            interleaver: None,
            snr_grid,
            snr_convention: SnrConvention::EbN0,
            max_trials,
            min_block_errors: default_min_errors(),
            master_seed,
            bler_floor: default_floor(),
        }
    }

    pub fn with_pmap(mut self, pmap: BitPermutationMap) -> Self {
        self.pmap = Some(pmap);
        self
    }

    pub fn with_interleaver(mut self, interleaver: Interleaver) -> Self {
        self.interleaver = Some(interleaver);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.snr_grid.windows(2).any(|w| !(w[0] < w[1])) || self.snr_grid.iter().any(|v| !v.is_finite()) {
            return Err(config("SNR grid must be finite and strictly increasing"));
        }
        if self.min_block_errors < 20 {
            return Err(config("min_block_errors must be at least 20"));
        }
        if self.max_trials == 0 {
            return Err(config("max_trials must be positive"));
        }
        if let Some(f) = self.bler_floor {
            if !(f > 0.0 && f < 1.0) {
                return Err(config(format!("BLER floor {f} outside (0, 1)")));
            }
        }
        if self.scheme == Scheme::Bpsk && self.bits != 1 {
            return Err(config("the BPSK scheme uses one bit per symbol"));
        }
        Ok(())
    }

    pub fn constellation<T: Real>(&self) -> Result<Constellation<T>> {
        Constellation::ask(self.bits, self.scheme.labeling())
    }

    /// Channel at `snr_db` on the configured axis.
    pub fn channel<T: Real>(&self, snr_db: f64) -> AwgnSpec<T> {
        AwgnSpec::from_db(T::lit(snr_db), self.snr_convention, T::lit(self.code.rate()), self.bits)
    }

    fn pmap_or_default(&self) -> Result<BitPermutationMap> {
        match (&self.pmap, self.scheme) {
            (Some(p), Scheme::Bpcm) => Ok(p.clone()),
            (None, Scheme::Bpcm) => Err(config("BPCM needs a permutation map")),
            _ => {
                let n = SymbolLayout::for_constellation(self.code.len(), self.bits)?.n_symbols();
                BitPermutationMap::uniform(self.bits, n, 0)
            }
        }
    }

    fn interleaver_or_default(&self) -> Result<Interleaver> {
        match (&self.interleaver, self.scheme) {
            (Some(i), Scheme::Bicm | Scheme::Pbp) => Ok(i.clone()),
            (None, Scheme::Bicm | Scheme::Pbp) => Err(config(format!("{} needs an interleaver", self.scheme))),
            _ => Ok(Interleaver::identity(self.code.len())),
        }
    }

    /// Transmitter/receiver pair for this config.
    pub fn link<T: Real>(&self) -> Result<Link<T>> {
        self.validate()?;
        let c = self.constellation::<T>()?;
        Ok(match self.scheme {
            Scheme::Bpcm | Scheme::Sbp => Link::Mlc(Box::new(BpcmSystem::new(self.code.clone(), c, self.pmap_or_default()?)?)),
            Scheme::Bicm | Scheme::Pbp | Scheme::Bpsk => {
                Link::Bicm(Box::new(BicmSystem::new(self.code.clone(), c, self.interleaver_or_default()?)?))
            }
        })
    }

    /// GA-DE block error estimate of the configured link at `snr_db`.
    pub fn ga_estimate(&self, snr_db: f64) -> Result<f64> {
        self.validate()?;
        let spec = self.channel::<f64>(snr_db);
        match self.scheme {
            Scheme::Bpcm | Scheme::Sbp => bpcm_estimate(&self.code, &self.constellation::<f64>()?, &spec, &self.pmap_or_default()?),
            Scheme::Bpsk => {
                let profile = ChannelProfile::uniform_bpsk(self.code.len(), &spec);
                estimate_bler(&self.code, &profile, self.code.stages())
            }
            Scheme::Bicm | Scheme::Pbp => match self.link::<f64>()? {
                Link::Bicm(sys) => sys.estimate(&spec),
                Link::Mlc(_) => unreachable!("interleaved schemes build a BICM link"),
            },
        }
    }
}

/// Ready-to-run link of either receiver family.
#[derive(Debug, Clone)]
pub enum Link<T: Real = f64> {
    Mlc(Box<BpcmSystem<T>>),
    Bicm(Box<BicmSystem<T>>),
}

impl<T: Real> Link<T> {
    pub fn modulate(&self, info: &[u8]) -> Result<Vec<T>> {
        match self {
            Link::Mlc(s) => s.modulate(info),
            Link::Bicm(s) => s.modulate(info),
        }
    }

    pub fn receive(&self, y: &[T], spec: &AwgnSpec<T>) -> Result<Vec<u8>> {
        match self {
            Link::Mlc(s) => s.receive(y, spec),
            Link::Bicm(s) => s.receive(y, spec),
        }
    }

    /// Runs trial `index` of stream family `seed`; true on a block error.
    pub fn trial(&self, k_info: usize, spec: &AwgnSpec<T>, seed: u64, index: u64) -> Result<bool> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let info: Vec<u8> = (0..k_info).map(|_| rng.random_range(0..2u8)).collect();
        let mut y = self.modulate(&info)?;
        for v in &mut y {
            let z: f64 = rng.sample(StandardNormal);
            *v = *v + spec.sigma() * T::lit(z);
        }
        Ok(self.receive(&y, spec)? != info)
    }
}

/// Counts at one SNR point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub snr_db: f64,
    pub trials: u64,
    pub errors: u64,
    pub bler: f64,
    pub seed: u64,
    /// Fewer than `min_block_errors` errors were seen.
    pub censored: bool,
}

/// A sweep together with the config that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkResult {
    pub config: SimConfig,
    pub points: Vec<PointResult>,
}

/// Trials simulated between stopping checks.
const BATCH: u64 = 256;

/// Simulates blocks at `snr_db` until `min_block_errors` errors or
/// `max_trials` trials. The stopping trial is found by scanning batch
/// outcomes in index order, so the result is independent of threading.
pub fn run_point<T: Real>(cfg: &SimConfig, snr_db: f64) -> Result<PointResult> {
    let link = cfg.link::<T>()?;
    run_point_with(cfg, &link, snr_db)
}

fn run_point_with<T: Real>(cfg: &SimConfig, link: &Link<T>, snr_db: f64) -> Result<PointResult> {
    let spec = cfg.channel::<T>(snr_db);
    let k_info = cfg.code.k_info();
    let (mut trials, mut errors) = (0u64, 0u64);
    'outer: while trials < cfg.max_trials {
        let end = (trials + BATCH).min(cfg.max_trials);
        let outcomes = (trials..end)
            .into_par_iter()
            .map(|t| link.trial(k_info, &spec, cfg.master_seed, t))
            .collect::<Result<Vec<bool>>>()?;
        for failed in outcomes {
            trials += 1;
            errors += u64::from(failed);
            if errors >= cfg.min_block_errors {
                break 'outer;
            }
        }
    }
    Ok(PointResult {
        snr_db,
        trials,
        errors,
        bler: errors as f64 / trials as f64,
        seed: cfg.master_seed,
        censored: errors < cfg.min_block_errors,
    })
}

/// Runs every grid point in order, stopping after the first point whose
/// BLER is below the configured floor.
pub fn run_sweep<T: Real>(cfg: &SimConfig) -> Result<LinkResult> {
    let mut points = Vec::with_capacity(cfg.snr_grid.len());
    if !cfg.snr_grid.is_empty() {
        let link = cfg.link::<T>()?;
        for &snr in &cfg.snr_grid {
            let p = run_point_with(cfg, &link, snr)?;
            let done = cfg.bler_floor.is_some_and(|f| p.bler < f);
            points.push(p);
            if done {
                break;
            }
        }
    } else {
        cfg.validate()?;
    }
    Ok(LinkResult {
        config: cfg.clone(),
        points,
    })
}

#[derive(Serialize)]
struct CsvRow<'a> {
    scheme: String,
    #[serde(rename = "N")]
    n: usize,
    rate: f64,
    constellation: &'a str,
    snr_db: f64,
    trials: u64,
    errors: u64,
    bler: f64,
    seed: u64,
}

/// Name of a `bits`-per-symbol ASK constellation under `labeling`.
pub fn constellation_name(bits: usize, labeling: Labeling) -> String {
    format!("{}-ask-{}", 1usize << bits, labeling)
}

/// Writes one CSV row per simulated point.
pub fn write_link_csv<W: std::io::Write>(result: &LinkResult, out: W) -> Result<()> {
    let cfg = &result.config;
    let name = constellation_name(cfg.bits, cfg.scheme.labeling());
    let mut w = csv::Writer::from_writer(out);
    for p in &result.points {
        w.serialize(CsvRow {
            scheme: cfg.scheme.to_string(),
            n: cfg.code.len(),
            rate: cfg.code.rate(),
            constellation: &name,
            snr_db: p.snr_db,
            trials: p.trials,
            errors: p.errors,
            bler: p.bler,
            seed: p.seed,
        })
        .map_err(std::io::Error::other)?;
    }
    w.flush()?;
    Ok(())
}

/// SNR where a curve first crosses `target`, interpolating linearly in
/// `log10(BLER)` between the bracketing points. `None` if it never does.
pub fn snr_at_bler(points: &[(f64, f64)], target: f64) -> Option<f64> {
    points.windows(2).find_map(|w| {
        let ((s0, b0), (s1, b1)) = (w[0], w[1]);
        if b0 >= target && b1 <= target && b1 > 0.0 {
            if b0 == b1 {
                return Some(s0);
            }
            let (l0, l1, lt) = (b0.log10(), b1.log10(), target.log10());
            Some(s0 + (s1 - s0) * (l0 - lt) / (l0 - l1))
        } else if b0 >= target && b1 == 0.0 {
            Some(s1)
        } else {
            None
        }
    })
}

/// Smallest SNR in `[lo, hi]` (to within `tol` dB) at which the
/// non-increasing function `estimate` reaches `target`, by bisection.
pub fn required_snr<F>(target: f64, lo: f64, hi: f64, tol: f64, mut estimate: F) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if estimate(hi)? > target {
        return Err(crate::error::Error::SearchFailed(format!("estimate above {target} at {hi} dB")));
    }
    let (mut lo, mut hi) = (lo, hi);
    if estimate(lo)? <= target {
        return Ok(lo);
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if estimate(mid)? <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
