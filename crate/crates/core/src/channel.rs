//! AWGN channel model, exact LLR demapping and mutual-information
//! calculators for modulation and bit channels.
//!
//! Conventions: `y = x + n` with `n ~ N(0, σ²)` real, `N0 = 2σ²`,
//! `Es/N0 = 1/(2σ²)` for a unit-energy constellation, and
//! `Eb/N0 = Es/N0 − 10·log10(R·k)` in dB.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::constellation::Constellation;
use crate::error::{argument, Error, Result};
use crate::polar::boxplus;
use crate::quadrature::{GaussHermite, CAPACITY_NODES};
use crate::scalar::{log_add, softplus, Real};

/// Which SNR ratio a dB figure refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SnrConvention {
    #[default]
    EbN0,
    EsN0,
}

/// Real AWGN channel parameterized by its noise standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AwgnSpec<T: Real = f64> {
    noise_std: T,
}

impl<T: Real> AwgnSpec<T> {
    pub fn from_sigma(sigma: T) -> Result<Self> {
        if !(sigma > T::zero()) || !sigma.is_finite() {
            return Err(argument(format!("noise std must be positive and finite, got {sigma}")));
        }
        Ok(Self { noise_std: sigma })
    }

    pub fn from_es_n0_db(db: T) -> Self {
        let es_n0 = T::lit(10.0).powf(db / T::lit(10.0));
        Self {
            noise_std: (T::lit(2.0) * es_n0).recip().sqrt(),
        }
    }

    /// `rate` is the overall code rate, `bits` the bits per symbol.
    pub fn from_eb_n0_db(db: T, rate: T, bits: usize) -> Self {
        Self::from_es_n0_db(db + T::lit(10.0) * (rate * T::lit(bits as f64)).log10())
    }

    pub fn from_db(db: T, convention: SnrConvention, rate: T, bits: usize) -> Self {
        match convention {
            SnrConvention::EsN0 => Self::from_es_n0_db(db),
            SnrConvention::EbN0 => Self::from_eb_n0_db(db, rate, bits),
        }
    }

    pub fn sigma(&self) -> T {
        self.noise_std
    }

    pub fn noise_var(&self) -> T {
        self.noise_std * self.noise_std
    }

    pub fn es_n0_db(&self) -> T {
        T::lit(10.0) * (T::lit(2.0) * self.noise_var()).recip().log10()
    }

    pub fn eb_n0_db(&self, rate: T, bits: usize) -> T {
        self.es_n0_db() - T::lit(10.0) * (rate * T::lit(bits as f64)).log10()
    }
}

/// Adds Gaussian noise to one real sample.
pub fn awgn_transmit<T: Real, R: Rng + ?Sized>(x: T, spec: &AwgnSpec<T>, rng: &mut R) -> T {
    let n: f64 = rng.sample(StandardNormal);
    x + spec.sigma() * T::lit(n)
}

/// Values of the label bits selected by `mask`; other levels unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PartialLabel {
    pub mask: usize,
    pub value: usize,
}

impl PartialLabel {
    pub const NONE: PartialLabel = PartialLabel { mask: 0, value: 0 };

    pub fn new(mask: usize, value: usize) -> Self {
        Self {
            mask,
            value: value & mask,
        }
    }

    pub fn with(self, level: usize, bit: u8) -> Self {
        let m = 1 << level;
        Self {
            mask: self.mask | m,
            value: (self.value & !m) | (usize::from(bit & 1) << level),
        }
    }

    pub fn knows(&self, level: usize) -> bool {
        self.mask >> level & 1 == 1
    }
}

/// Exact log-sum-exp bit demapper for one constellation and noise level.
#[derive(Debug, Clone)]
pub struct Demapper<'a, T: Real> {
    c: &'a Constellation<T>,
    inv_two_var: T,
}

impl<'a, T: Real> Demapper<'a, T> {
    pub fn new(c: &'a Constellation<T>, spec: &AwgnSpec<T>) -> Self {
        Self {
            c,
            inv_two_var: (T::lit(2.0) * spec.noise_var()).recip(),
        }
    }

    /// `ln P(y | b_target = 0, known) − ln P(y | b_target = 1, known)`,
    /// marginalizing uniformly over unknown levels. No validation.
    #[inline]
    pub fn llr(&self, y: T, known: PartialLabel, target: usize) -> T {
        let mut num = T::neg_infinity();
        let mut den = T::neg_infinity();
        for label in 0..self.c.size() {
            if label & known.mask != known.value {
                continue;
            }
            let d = y - self.c.point(label);
            let metric = -d * d * self.inv_two_var;
            if label >> target & 1 == 0 {
                num = log_add(num, metric);
            } else {
                den = log_add(den, metric);
            }
        }
        num - den
    }
}

/// Checked form of [`Demapper::llr`].
pub fn conditional_llr<T: Real>(
    c: &Constellation<T>,
    y: T,
    spec: &AwgnSpec<T>,
    known: PartialLabel,
    target: usize,
) -> Result<T> {
    if target >= c.bits() {
        return Err(argument(format!("target level {target} out of range")));
    }
    if known.knows(target) {
        return Err(argument("known bits must not include the target level"));
    }
    if known.mask >> c.bits() != 0 {
        return Err(argument("known bits reference levels beyond k"));
    }
    Ok(Demapper::new(c, spec).llr(y, PartialLabel::new(known.mask, known.value), target))
}

fn gh() -> &'static GaussHermite {
    static RULE: OnceLock<GaussHermite> = OnceLock::new();
    RULE.get_or_init(|| GaussHermite::new(CAPACITY_NODES))
}

/// `I(X; Y)` in bits for uniform inputs, by Gauss–Hermite quadrature.
pub fn modulation_capacity<T: Real>(c: &Constellation<T>, spec: &AwgnSpec<T>) -> T {
    let points = gh().normal_points::<T>();
    let inv = (T::lit(2.0) * spec.noise_var()).recip();
    let m = c.size();
    let mut acc = T::zero();
    for &x in c.amplitudes() {
        for &(z, w) in &points {
            let y = x + spec.sigma() * z;
            let own = -(y - x) * (y - x) * inv;
            let lse = c
                .amplitudes()
                .iter()
                .map(|&a| -(y - a) * (y - a) * inv - own)
                .fold(T::neg_infinity(), log_add);
            acc = acc + w * lse;
        }
    }
    T::lit(m as f64).log2() - acc / (T::lit(m as f64) * T::LN_2())
}

/// `I(B_target; Y | B_known)` in bits, averaging the exact conditional LLR
/// over transmitted points and Gauss–Hermite noise nodes.
pub fn conditional_capacity<T: Real>(
    c: &Constellation<T>,
    spec: &AwgnSpec<T>,
    target: usize,
    known_mask: usize,
) -> Result<T> {
    if target >= c.bits() || known_mask >> target & 1 == 1 || known_mask >> c.bits() != 0 {
        return Err(argument(format!(
            "invalid conditioning: target {target}, known mask {known_mask:#b}"
        )));
    }
    let demap = Demapper::new(c, spec);
    let points = gh().normal_points::<T>();
    let mut loss = T::zero();
    for (idx, &x) in c.amplitudes().iter().enumerate() {
        let label = c.label_of(idx);
        let known = PartialLabel::new(known_mask, label);
        let sign = if label >> target & 1 == 0 { T::one() } else { -T::one() };
        for &(z, w) in &points {
            let llr = demap.llr(x + spec.sigma() * z, known, target);
            loss = loss + w * softplus(-sign * llr);
        }
    }
    Ok(T::one() - loss / (T::lit(c.size() as f64) * T::LN_2()))
}

/// Conditional capacities along an SBP decoding order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BitChannelCapacities<T: Real = f64> {
    /// `I(X; Y)`.
    pub total: T,
    /// `per_level[j] = I(B_order[j]; Y | B_order[0..j])`.
    pub per_level: Vec<T>,
    pub order: Vec<usize>,
}

pub(crate) fn validate_order(order: &[usize], k: usize) -> Result<()> {
    let mut seen = vec![false; k];
    if order.len() != k {
        return Err(argument(format!("order has {} entries, expected {k}", order.len())));
    }
    for &o in order {
        if o >= k || std::mem::replace(&mut seen[o], true) {
            return Err(argument(format!("{order:?} is not a permutation of 0..{k}")));
        }
    }
    Ok(())
}

/// SBP bit-channel capacities for the decoding `order`.
pub fn sbp_bit_capacities<T: Real>(
    c: &Constellation<T>,
    spec: &AwgnSpec<T>,
    order: &[usize],
) -> Result<BitChannelCapacities<T>> {
    validate_order(order, c.bits())?;
    let mut mask = 0;
    let mut per_level = Vec::with_capacity(order.len());
    for &level in order {
        per_level.push(conditional_capacity(c, spec, level, mask)?);
        mask |= 1 << level;
    }
    Ok(BitChannelCapacities {
        total: modulation_capacity(c, spec),
        per_level,
        order: order.to_vec(),
    })
}

/// PBP (marginal) bit-channel capacities `I(B_i; Y)`.
pub fn pbp_bit_capacities<T: Real>(c: &Constellation<T>, spec: &AwgnSpec<T>) -> Vec<T> {
    (0..c.bits())
        .map(|i| conditional_capacity(c, spec, i, 0).expect("valid level"))
        .collect()
}

/// Capacity of the binary-input AWGN channel with inputs `±1`.
pub fn biawgn_capacity<T: Real>(sigma: T) -> T {
    let two_over_var = T::lit(2.0) / (sigma * sigma);
    let loss = gh().expect(|z: T| softplus(-two_over_var * (T::one() + sigma * z)));
    (T::one() - loss / T::LN_2()).max(T::zero())
}

/// Noise std of the BI-AWGN channel whose capacity equals `capacity`.
pub fn equivalent_biawgn_sigma<T: Real>(capacity: T) -> Result<T> {
    if !(capacity > T::zero() && capacity < T::one()) {
        return Err(Error::Domain(format!("capacity {capacity} outside (0, 1)")));
    }
    let (mut lo, mut hi) = (T::lit(1e-3).ln(), T::lit(1e4).ln());
    for _ in 0..200 {
        let mid = T::lit(0.5) * (lo + hi);
        if biawgn_capacity(mid.exp()) > capacity {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < T::lit(1e-13) {
            break;
        }
    }
    Ok((T::lit(0.5) * (lo + hi)).exp())
}

/// Mean LLR `2/σ²` of the BI-AWGN channel with the given capacity;
/// capacities at or beyond the ends of `(0, 1)` are clamped.
pub fn equivalent_mean_llr<T: Real>(capacity: T) -> T {
    if !(capacity > T::lit(1e-12)) {
        return T::zero();
    }
    let cap = capacity.min(T::one() - T::lit(1e-12));
    let sigma = equivalent_biawgn_sigma(cap).expect("clamped into domain");
    T::lit(2.0) / (sigma * sigma)
}

/// One input of a first-order polar combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BitSource {
    /// Marginal (PBP) bit channel of this label level.
    Level(usize),
    /// Noiseless bit channel.
    Perfect,
}

/// Monte-Carlo capacities of one polar step `(a, b) → (W⁻, W⁺)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolarizedPair<T: Real = f64> {
    pub minus: T,
    pub plus: T,
    pub a: T,
    pub b: T,
}

const PERFECT_LLR: f64 = 60.0;

/// First-order polarized capacities of combining PBP bit channels.
///
/// For each pair `(a, b)` the step transmits `u1 ⊕ u2` over `a` and `u2`
/// over `b` (independent symbols), then averages the true-posterior
/// losses of the box-plus (`W⁻`) and the decision-aided sum (`W⁺`).
pub fn pbp_first_order_capacities<T: Real>(
    c: &Constellation<T>,
    spec: &AwgnSpec<T>,
    pairing: &[(BitSource, BitSource)],
    samples: usize,
    seed: u64,
) -> Result<Vec<PolarizedPair<T>>> {
    for &(a, b) in pairing {
        for s in [a, b] {
            if let BitSource::Level(l) = s {
                if l >= c.bits() {
                    return Err(argument(format!("pairing references level {l} of a {}-bit constellation", c.bits())));
                }
            }
        }
    }
    if samples == 0 {
        return Err(argument("at least one sample required"));
    }
    let demap = Demapper::new(c, spec);
    let perfect = T::lit(PERFECT_LLR);
    let mut out = Vec::with_capacity(pairing.len());
    for (idx, &(src_a, src_b)) in pairing.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(idx as u64);
        let observe = |src: BitSource, bit: u8, rng: &mut ChaCha8Rng| -> T {
            match src {
                BitSource::Perfect => {
                    if bit == 0 {
                        perfect
                    } else {
                        -perfect
                    }
                }
                BitSource::Level(l) => {
                    let other: usize = rng.random_range(0..c.size());
                    let label = (other & !(1 << l)) | (usize::from(bit) << l);
                    let y = awgn_transmit(c.point(label), spec, rng);
                    demap.llr(y, PartialLabel::NONE, l)
                }
            }
        };
        let sgn = |b: u8| if b == 0 { T::one() } else { -T::one() };
        let (mut lm, mut lp, mut la, mut lb) = (T::zero(), T::zero(), T::zero(), T::zero());
        for _ in 0..samples {
            let u1: u8 = rng.random_range(0..2);
            let u2: u8 = rng.random_range(0..2);
            let ya = observe(src_a, u1 ^ u2, &mut rng);
            let yb = observe(src_b, u2, &mut rng);
            la = la + softplus(-sgn(u1 ^ u2) * ya);
            lb = lb + softplus(-sgn(u2) * yb);
            lm = lm + softplus(-sgn(u1) * boxplus(ya, yb));
            lp = lp + softplus(-sgn(u2) * (yb + sgn(u1) * ya));
        }
        let norm = T::lit(samples as f64) * T::LN_2();
        out.push(PolarizedPair {
            minus: T::one() - lm / norm,
            plus: T::one() - lp / norm,
            a: T::one() - la / norm,
            b: T::one() - lb / norm,
        });
    }
    Ok(out)
}

/// One row of an exported capacity table.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CapacityRow {
    pub constellation: String,
    pub snr_db: f64,
    pub order: String,
    pub level: String,
    pub capacity: f64,
}

/// Rows for `I(X;Y)` and every conditional level along `order`
/// (`None` exports the marginal PBP capacities instead).
pub fn capacity_rows<T: Real>(
    c: &Constellation<T>,
    snr_db: f64,
    spec: &AwgnSpec<T>,
    order: Option<&[usize]>,
) -> Result<Vec<CapacityRow>> {
    let name = format!("{}-ask-{}", c.size(), c.labeling());
    let (order_tag, total, levels) = match order {
        Some(o) => {
            let caps = sbp_bit_capacities(c, spec, o)?;
            let tag = o.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("-");
            (tag, caps.total, caps.per_level)
        }
        None => ("marginal".to_string(), modulation_capacity(c, spec), pbp_bit_capacities(c, spec)),
    };
    let mut rows = vec![CapacityRow {
        constellation: name.clone(),
        snr_db,
        order: order_tag.clone(),
        level: "total".into(),
        capacity: total.as_f64(),
    }];
    rows.extend(levels.iter().enumerate().map(|(j, v)| CapacityRow {
        constellation: name.clone(),
        snr_db,
        order: order_tag.clone(),
        level: j.to_string(),
        capacity: v.as_f64(),
    }));
    Ok(rows)
}

/// Writes capacity rows as CSV.
pub fn write_capacity_csv<W: std::io::Write>(rows: &[CapacityRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}
