//! Gaussian-approximation density evolution (GA-DE), BLER estimation
//! and frozen-set construction.
//!
//! Means are propagated from the channel side of a polar stage back to
//! its inputs: in every butterfly the first half sees the check-node
//! combination `φ⁻¹(1 − (1 − φ(a))(1 − φ(b)))` and the second half the
//! variable-node sum `a + b`.

use std::sync::LazyLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::channel::AwgnSpec;
use crate::error::{argument, Error, Result};
use crate::polar::{genie_first_errors, log2_exact, DesignMeta, PolarCode};
use crate::scalar::Real;

// Two-piece approximation of φ(m) = 1 − E[tanh(L/2)], L ~ N(m, 2m).
const EXP_A: f64 = 0.4527;
const EXP_B: f64 = 0.86;
const EXP_C: f64 = 0.0218;
const BREAK: f64 = 10.0;

fn ln_phi_exp(m: f64) -> f64 {
    (EXP_C - EXP_A * m.powf(EXP_B)).min(0.0)
}

fn ln_phi_asym_raw(m: f64) -> f64 {
    let r = 1.0 - 10.0 / (7.0 * m);
    0.5 * (std::f64::consts::PI / m * r * r).ln() - 0.25 * m
}

fn d_ln_phi_asym(m: f64) -> f64 {
    let r = 10.0 / (7.0 * m);
    -0.5 / m - 0.25 + (r / m) / (1.0 - r)
}

/// Offset applied to the asymptotic piece so that φ is continuous (and
/// therefore invertible) at the breakpoint.
fn asym_shift() -> f64 {
    static SHIFT: LazyLock<f64> = LazyLock::new(|| ln_phi_exp(BREAK) - ln_phi_asym_raw(BREAK));
    *SHIFT
}

fn ln_phi_at_break() -> f64 {
    static AT: LazyLock<f64> = LazyLock::new(|| ln_phi_exp(BREAK));
    *AT
}

/// `ln φ(m)` for a mean LLR `m ≥ 0`.
pub fn ln_phi(m: f64) -> f64 {
    if !(m > 0.0) {
        0.0
    } else if m < BREAK {
        ln_phi_exp(m)
    } else {
        ln_phi_asym_raw(m) + asym_shift()
    }
}

pub fn phi(m: f64) -> f64 {
    ln_phi(m).exp()
}

/// Newton solve of the asymptotic piece for `l < ln φ(10)`, started
/// from one fixed-point step of m = −4(l − ½ln(π/m) − ln(1 − 10/7m)).
fn asym_inverse(l: f64) -> f64 {
    let target = l - asym_shift();
    let g = |m: f64| ln_phi_asym_raw(m) - target;
    // g(BREAK) > 0, and g < 0 at the upper end because both log terms
    // are negative there.
    let mut lo = BREAK;
    let mut hi = (-4.0 * target).max(2.0 * BREAK);
    let m0 = (-4.0 * target).max(BREAK);
    let mut m = (-4.0 * (target - ln_phi_asym_raw(m0) - 0.25 * m0)).clamp(lo, hi);
    for _ in 0..100 {
        let v = g(m);
        if v > 0.0 {
            lo = m;
        } else {
            hi = m;
        }
        let step = v / d_ln_phi_asym(m);
        if step.abs() <= 1e-13 * m {
            return m - step;
        }
        let next = m - step;
        m = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
    }
    m
}

/// Tabulated [`asym_inverse`] on a uniform grid in `l`, refined by one
/// Newton step at lookup.
struct InverseTable {
    start: f64,
    step: f64,
    ms: Vec<f64>,
}

impl InverseTable {
    const STEP: f64 = 0.05;
    const MAX_MEAN: f64 = 4000.0;

    fn get() -> &'static Self {
        static TABLE: LazyLock<InverseTable> = LazyLock::new(|| {
            let start = ln_phi_at_break();
            let end = ln_phi(InverseTable::MAX_MEAN);
            let count = ((start - end) / InverseTable::STEP).ceil() as usize + 1;
            let ms = (0..=count).map(|i| asym_inverse(start - i as f64 * InverseTable::STEP)).collect();
            InverseTable {
                start,
                step: InverseTable::STEP,
                ms,
            }
        });
        &TABLE
    }

    fn lookup(&self, l: f64) -> Option<f64> {
        let x = (self.start - l) / self.step;
        let i = x as usize;
        if i + 1 >= self.ms.len() {
            return None;
        }
        let t = x - i as f64;
        let m = self.ms[i] + t * (self.ms[i + 1] - self.ms[i]);
        let target = l - asym_shift();
        Some((m - (ln_phi_asym_raw(m) - target) / d_ln_phi_asym(m)).max(BREAK))
    }
}

/// Inverse of [`ln_phi`]; `l ≥ 0` maps to 0.
pub fn ln_phi_inv(l: f64) -> f64 {
    if l >= 0.0 {
        return 0.0;
    }
    if l == f64::NEG_INFINITY {
        return f64::INFINITY;
    }
    if l >= ln_phi_at_break() {
        return ((EXP_C - l) / EXP_A).powf(EXP_B.recip());
    }
    InverseTable::get().lookup(l).unwrap_or_else(|| asym_inverse(l))
}

pub fn phi_inv(y: f64) -> f64 {
    if y <= 0.0 {
        f64::INFINITY
    } else {
        ln_phi_inv(y.ln())
    }
}

/// `ln(φa + φb − φa·φb)` from `ln φa`, `ln φb`.
#[inline]
fn check_ln(la: f64, lb: f64) -> f64 {
    if la >= 0.0 || lb >= 0.0 {
        return 0.0;
    }
    if la > -700.0 && lb > -700.0 {
        let pa = la.exp();
        return (pa + lb.exp() * (1.0 - pa)).ln();
    }
    let (hi, lo) = if la > lb { (la, lb) } else { (lb, la) };
    let lse = hi + (lo - hi).exp().ln_1p();
    lse + (-(la + lb - lse).exp()).ln_1p()
}

/// Check-node GA update on means.
pub fn check_node(a: f64, b: f64) -> f64 {
    ln_phi_inv(check_ln(ln_phi(a), ln_phi(b)))
}

/// Per-position error probability `Q(√(m/2))` of a Gaussian LLR with
/// mean `m` and variance `2m`.
#[inline]
pub fn bit_error_probability<T: Real>(mean: T) -> T {
    T::lit(0.5) * (mean.max(T::zero()).sqrt() / T::lit(2.0)).erfc()
}

/// Mean LLR of the equivalent BI-AWGN seen by every coded-bit position
/// at the mapped stage.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelProfile<T: Real = f64> {
    means: Vec<T>,
}

impl<T: Real> ChannelProfile<T> {
    pub fn new(means: Vec<T>) -> Result<Self> {
        if let Some(m) = means.iter().find(|m| !(**m >= T::zero())) {
            return Err(argument(format!("profile means must be non-negative, found {m}")));
        }
        Ok(Self { means })
    }

    /// BPSK over AWGN: every position has mean `2/σ²`.
    pub fn uniform_bpsk(len: usize, spec: &AwgnSpec<T>) -> Self {
        Self {
            means: vec![T::lit(2.0) / spec.noise_var(); len],
        }
    }

    pub fn means(&self) -> &[T] {
        &self.means
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }
}

/// Result of one density-evolution pass.
#[derive(Debug, Clone, PartialEq)]
pub struct DeResult<T: Real = f64> {
    /// Mean LLR at every input position `u(0)`.
    pub info_means: Vec<T>,
    /// `Q(√(m/2))` per input position.
    pub per_bit_error: Vec<T>,
    /// `1 − Π (1 − pᵢ)` over the non-frozen positions.
    pub bler_estimate: T,
}

/// Mean cap of [`DeTree::capped`]; the corresponding bit error
/// probability is below 1e-60.
pub const DE_MEAN_CAP: f64 = 600.0;

/// Density-evolution tree supporting cheap leaf updates.
///
/// `level(s)` holds the means at stage-`s` coded bits; the leaves are
/// `level(stages)` and the polar inputs `level(0)`. Changing a leaf only
/// recomputes the butterflies downstream of it; changes can be rolled
/// back, which is what greedy searches over permutations need. Nodes
/// that only feed frozen inputs are never evaluated.
#[derive(Debug, Clone)]
pub struct DeTree {
    cap: f64,
    ln_phi_cap: f64,
    stages: usize,
    frozen: Vec<bool>,
    means: Vec<Vec<f64>>,
    ln_phis: Vec<Vec<f64>>,
    needed: Vec<Vec<bool>>,
    contrib: Vec<f64>,
    stamp: Vec<Vec<u32>>,
    epoch: u32,
    undo: Vec<(usize, usize, f64, f64)>,
    undo_contrib: Vec<(usize, f64)>,
}

impl DeTree {
    pub fn new<T: Real>(code: &PolarCode, leaves: &[T], stages: usize) -> Result<Self> {
        Self::build(code, leaves, stages, f64::INFINITY)
    }

    /// Tree whose means saturate at [`DE_MEAN_CAP`]. Saturated nodes stop
    /// update propagation, which makes repeated probes much cheaper.
    pub fn capped<T: Real>(code: &PolarCode, leaves: &[T], stages: usize) -> Result<Self> {
        Self::build(code, leaves, stages, DE_MEAN_CAP)
    }

    #[inline]
    fn cap(&self, m: f64) -> (f64, f64) {
        if m >= self.cap {
            (self.cap, self.ln_phi_cap)
        } else {
            (m, ln_phi(m))
        }
    }

    fn build<T: Real>(code: &PolarCode, leaves: &[T], stages: usize, cap: f64) -> Result<Self> {
        let len = code.len();
        if leaves.len() != len {
            return Err(argument(format!("profile has {} entries, code length is {len}", leaves.len())));
        }
        if stages > code.stages() {
            return Err(argument(format!("{stages} stages exceed log2 N = {}", code.stages())));
        }
        let mut means = vec![vec![0.0; len]; stages + 1];
        let mut ln_phis = vec![vec![0.0; len]; stages + 1];
        for (i, m) in leaves.iter().enumerate() {
            let m = m.as_f64();
            if !(m >= 0.0) {
                return Err(argument("profile means must be non-negative"));
            }
            (means[stages][i], ln_phis[stages][i]) = if m >= cap { (cap, ln_phi(cap)) } else { (m, ln_phi(m)) };
        }
        let mut needed = vec![code.frozen().iter().map(|f| !f).collect::<Vec<bool>>()];
        for s in 1..=stages {
            let h = 1usize << (s - 1);
            let below = &needed[s - 1];
            let row = (0..len).map(|i| below[i & !h] || below[i | h]).collect();
            needed.push(row);
        }
        let mut tree = Self {
            cap,
            ln_phi_cap: ln_phi(cap),
            stages,
            frozen: code.frozen().to_vec(),
            means,
            ln_phis,
            needed,
            contrib: vec![0.0; len],
            stamp: vec![vec![0; len]; stages + 1],
            epoch: 0,
            undo: Vec::new(),
            undo_contrib: Vec::new(),
        };
        for s in (1..=stages).rev() {
            let h = 1usize << (s - 1);
            for base in (0..len).step_by(2 * h) {
                for i in base..base + h {
                    tree.butterfly(s, i, h, false);
                }
            }
        }
        for i in 0..len {
            tree.contrib[i] = tree.contribution(i);
        }
        Ok(tree)
    }

    pub fn len(&self) -> usize {
        self.frozen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frozen.is_empty()
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn leaf(&self, pos: usize) -> f64 {
        self.means[self.stages][pos]
    }

    /// Means at the polar inputs; entries that only matter for frozen
    /// inputs are left at zero.
    pub fn input_means(&self) -> &[f64] {
        &self.means[0]
    }

    #[inline]
    fn contribution(&self, i: usize) -> f64 {
        if self.frozen[i] {
            0.0
        } else {
            (-bit_error_probability(self.means[0][i])).ln_1p()
        }
    }

    /// Writes a node; returns whether it changed.
    #[inline]
    fn write(&mut self, level: usize, pos: usize, mean: f64, lnp: f64, log: bool) -> bool {
        let (old, old_lnp) = (self.means[level][pos], self.ln_phis[level][pos]);
        if old.to_bits() == mean.to_bits() && old_lnp.to_bits() == lnp.to_bits() {
            return false;
        }
        if log {
            self.undo.push((level, pos, old, old_lnp));
        }
        self.means[level][pos] = mean;
        self.ln_phis[level][pos] = lnp;
        true
    }

    /// Recomputes the needed outputs of the stage-`s` butterfly whose
    /// first input is `i`; returns which outputs changed.
    #[inline]
    fn butterfly(&mut self, s: usize, i: usize, h: usize, log: bool) -> (bool, bool) {
        let j = i + h;
        let mut changed = (false, false);
        if self.needed[s - 1][i] {
            let lc = check_ln(self.ln_phis[s][i], self.ln_phis[s][j]);
            let (m, l) = if lc <= self.ln_phi_cap {
                (self.cap, self.ln_phi_cap)
            } else {
                (ln_phi_inv(lc), lc)
            };
            changed.0 = self.write(s - 1, i, m, l, log);
        }
        if self.needed[s - 1][j] {
            let (m, l) = self.cap(self.means[s][i] + self.means[s][j]);
            changed.1 = self.write(s - 1, j, m, l, log);
        }
        changed
    }

    /// Sets leaf means and propagates; the change stays pending until
    /// [`commit`](Self::commit) or [`rollback`](Self::rollback).
    pub fn update(&mut self, changes: &[(usize, f64)]) {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            for s in &mut self.stamp {
                s.fill(0);
            }
            self.epoch = 1;
        }
        let top = self.stages;
        let mut dirty: Vec<usize> = Vec::with_capacity(2 * changes.len());
        for &(pos, m) in changes {
            let (m, l) = self.cap(m);
            if self.write(top, pos, m, l, true) && self.stamp[top][pos] != self.epoch {
                self.stamp[top][pos] = self.epoch;
                dirty.push(pos);
            }
        }
        let mut next = Vec::new();
        for s in (1..=self.stages).rev() {
            let h = 1usize << (s - 1);
            next.clear();
            for &p in &dirty {
                let i = p & !h;
                if self.stamp[s - 1][i] == self.epoch {
                    continue;
                }
                self.stamp[s - 1][i] = self.epoch;
                let (a, b) = self.butterfly(s, i, h, true);
                if a {
                    next.push(i);
                }
                if b {
                    next.push(i + h);
                }
            }
            std::mem::swap(&mut dirty, &mut next);
        }
        for &i in &dirty {
            self.undo_contrib.push((i, self.contrib[i]));
            self.contrib[i] = self.contribution(i);
        }
    }

    pub fn commit(&mut self) {
        self.undo.clear();
        self.undo_contrib.clear();
    }

    pub fn rollback(&mut self) {
        while let Some((level, pos, m, l)) = self.undo.pop() {
            self.means[level][pos] = m;
            self.ln_phis[level][pos] = l;
        }
        while let Some((i, c)) = self.undo_contrib.pop() {
            self.contrib[i] = c;
        }
    }

    /// Sets leaves, reads the estimate, and undoes the change.
    pub fn probe(&mut self, changes: &[(usize, f64)]) -> f64 {
        self.update(changes);
        let e = self.bler_estimate();
        self.rollback();
        e
    }

    /// `1 − Π (1 − pᵢ)` over the non-frozen inputs.
    pub fn bler_estimate(&self) -> f64 {
        let s: f64 = self.contrib.iter().sum();
        -s.exp_m1()
    }
}

/// Propagates `profile` (means at the stage-`stages` coded bits) back to
/// the inputs.
pub fn de_evolve<T: Real>(code: &PolarCode, profile: &ChannelProfile<T>, stages: usize) -> Result<DeResult<T>> {
    let open = PolarCode::new(vec![false; code.len()])?;
    let tree = DeTree::new(&open, profile.means(), stages)?;
    let sum: f64 = tree
        .input_means()
        .iter()
        .zip(code.frozen())
        .map(|(&m, &f)| if f { 0.0 } else { (-bit_error_probability(m)).ln_1p() })
        .sum();
    Ok(DeResult {
        info_means: tree.input_means().iter().map(|&m| T::lit(m)).collect(),
        per_bit_error: tree.input_means().iter().map(|&m| T::lit(bit_error_probability(m))).collect(),
        bler_estimate: T::lit(-sum.exp_m1()),
    })
}

/// GA-DE block error estimate on the code's own frozen set.
pub fn estimate_bler<T: Real>(code: &PolarCode, profile: &ChannelProfile<T>, stages: usize) -> Result<T> {
    Ok(T::lit(DeTree::new(code, profile.means(), stages)?.bler_estimate()))
}

/// Indices of the `k` largest scores, lower index first among ties.
fn best_positions(scores: &[f64], k: usize, larger_is_better: bool) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        let ord = scores[a].partial_cmp(&scores[b]).unwrap_or(std::cmp::Ordering::Equal);
        let ord = if larger_is_better { ord.reverse() } else { ord };
        ord.then(a.cmp(&b))
    });
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

/// Selects the `k` inputs with the largest GA-DE means.
pub fn construct_gade<T: Real>(n: usize, k: usize, profile: &ChannelProfile<T>, stages: usize) -> Result<PolarCode> {
    log2_exact(n)?;
    if k > n {
        return Err(argument(format!("K = {k} exceeds N = {n}")));
    }
    let open = PolarCode::new(vec![false; n])?;
    let tree = DeTree::new(&open, profile.means(), stages)?;
    PolarCode::from_info_positions(n, &best_positions(tree.input_means(), k, true))
}

/// Genie-aided Monte-Carlo construction for BPSK over AWGN: counts
/// first-error events per input and keeps the `k` least error-prone.
pub fn construct_montecarlo(n: usize, k: usize, spec: &AwgnSpec<f64>, trials: u64, seed: u64) -> Result<PolarCode> {
    log2_exact(n)?;
    if k > n {
        return Err(argument(format!("K = {k} exceeds N = {n}")));
    }
    if trials < 1000 {
        return Err(argument("Monte-Carlo construction needs at least 1000 trials"));
    }
    let counts = montecarlo_error_counts(n, spec, trials, seed)?;
    let scores: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    Ok(PolarCode::from_info_positions(n, &best_positions(&scores, k, false))?.with_design(DesignMeta {
        method: "montecarlo".into(),
        snr_db: None,
        seed: Some(seed),
        trials: Some(trials),
    }))
}

/// Per-input first-error counts of genie-aided SC with BPSK.
pub fn montecarlo_error_counts(n: usize, spec: &AwgnSpec<f64>, trials: u64, seed: u64) -> Result<Vec<u64>> {
    const CHUNK: u64 = 256;
    let sigma = spec.sigma();
    let scale = 2.0 / spec.noise_var();
    let chunks = trials.div_ceil(CHUNK);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut counts = vec![0u64; n];
            let truth = vec![0u8; n];
            let mut llrs = vec![0.0f64; n];
            for t in c * CHUNK..((c + 1) * CHUNK).min(trials) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(t);
                for l in llrs.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *l = scale * (1.0 + sigma * z);
                }
                genie_first_errors(&llrs, &truth, &mut counts).expect("consistent buffers");
            }
            counts
        })
        .reduce(
            || vec![0u64; n],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    Ok(counts)
}

/// SNR grid spacing of [`design_snr_search`].
pub const SNR_RESOLUTION_DB: f64 = 0.05;
const SEARCH_LO_DB: f64 = -10.0;
const SEARCH_HI_DB: f64 = 30.0;

/// Lowest SNR on a 0.05 dB grid over [−10, 30] dB at which the GA-DE
/// design reaches `target_bler`, with the code designed there.
///
/// `profile_fn` maps an SNR in dB to the channel profile at that point.
pub fn design_snr_search<T, F>(n: usize, k: usize, target_bler: f64, stages: usize, mut profile_fn: F) -> Result<(f64, PolarCode)>
where
    T: Real,
    F: FnMut(f64) -> Result<ChannelProfile<T>>,
{
    if !(target_bler > 0.0 && target_bler <= 1.0) {
        return Err(argument(format!("target BLER {target_bler} outside (0, 1]")));
    }
    let steps = ((SEARCH_HI_DB - SEARCH_LO_DB) / SNR_RESOLUTION_DB).round() as i64;
    let snr_at = |i: i64| SEARCH_LO_DB + SNR_RESOLUTION_DB * i as f64;
    let mut eval = |i: i64| -> Result<(f64, PolarCode)> {
        let profile = profile_fn(snr_at(i))?;
        let code = construct_gade(n, k, &profile, stages)?;
        let est = estimate_bler(&code, &profile, stages)?.as_f64();
        Ok((est, code))
    };
    let (top_est, top_code) = eval(steps)?;
    if top_est > target_bler {
        return Err(Error::SearchFailed(format!(
            "BLER target {target_bler:e} not reached at {SEARCH_HI_DB} dB (estimate {top_est:e})"
        )));
    }
    let (bottom_est, bottom_code) = eval(0)?;
    if bottom_est <= target_bler {
        return Ok((snr_at(0), bottom_code));
    }
    let (mut lo, mut hi, mut best) = (0i64, steps, top_code);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        let (est, code) = eval(mid)?;
        if est <= target_bler {
            hi = mid;
            best = code;
        } else {
            lo = mid;
        }
    }
    Ok((snr_at(hi), best))
}
