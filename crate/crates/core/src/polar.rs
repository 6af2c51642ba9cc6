//! Polar transform in natural (non-bit-reversed) order, encoding,
//! successive cancellation decoding and the subcode decomposition.
//!
//! Stage `s` combines, inside every block of `2^s` positions, element `i`
//! of the first half with element `i` of the second half:
//! `(a, b) → (a ⊕ b, b)`. After `s` stages each block of `2^s` inputs is
//! an independent polar code, so contiguous input ranges form subcodes.

use serde::{Deserialize, Serialize};

use crate::error::{argument, config, Result};
use crate::scalar::Real;

/// Largest LLR magnitude propagated by the decoder.
pub const LLR_SATURATION: f64 = 40.0;

/// How a code was designed; persisted with the frozen set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DesignMeta {
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
}

/// Binary polar code: length and frozen mask (frozen bits are zero).
#[derive(Debug, Clone, PartialEq)]
pub struct PolarCode {
    frozen: Vec<bool>,
    info: Vec<usize>,
    design: Option<DesignMeta>,
}

impl PolarCode {
    pub fn new(frozen: Vec<bool>) -> Result<Self> {
        log2_exact(frozen.len())?;
        let info = frozen
            .iter()
            .enumerate()
            .filter(|(_, &f)| !f)
            .map(|(i, _)| i)
            .collect();
        Ok(Self {
            frozen,
            info,
            design: None,
        })
    }

    /// Code of length `n` whose information set is `positions`.
    pub fn from_info_positions(n: usize, positions: &[usize]) -> Result<Self> {
        let mut frozen = vec![true; n];
        for &p in positions {
            if p >= n {
                return Err(argument(format!("info position {p} beyond length {n}")));
            }
            frozen[p] = false;
        }
        Self::new(frozen)
    }

    pub fn with_design(mut self, meta: DesignMeta) -> Self {
        self.design = Some(meta);
        self
    }

    pub fn design(&self) -> Option<&DesignMeta> {
        self.design.as_ref()
    }

    /// Block length `N`.
    pub fn len(&self) -> usize {
        self.frozen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frozen.is_empty()
    }

    /// `log2 N`.
    pub fn stages(&self) -> usize {
        self.len().trailing_zeros() as usize
    }

    pub fn k_info(&self) -> usize {
        self.info.len()
    }

    pub fn rate(&self) -> f64 {
        self.k_info() as f64 / self.len() as f64
    }

    pub fn frozen(&self) -> &[bool] {
        &self.frozen
    }

    pub fn info_positions(&self) -> &[usize] {
        &self.info
    }

    /// Places info bits on the non-frozen inputs; frozen inputs are zero.
    pub fn scatter(&self, info_bits: &[u8]) -> Result<Vec<u8>> {
        if info_bits.len() != self.k_info() {
            return Err(argument(format!(
                "expected {} info bits, got {}",
                self.k_info(),
                info_bits.len()
            )));
        }
        let mut u = vec![0u8; self.len()];
        for (&p, &b) in self.info.iter().zip(info_bits) {
            u[p] = b & 1;
        }
        Ok(u)
    }

    /// Encodes through `stages` polar stages (`stages = log2 N` is the
    /// full codeword).
    pub fn encode(&self, info_bits: &[u8], stages: usize) -> Result<Vec<u8>> {
        let mut u = self.scatter(info_bits)?;
        polar_transform(&mut u, stages)?;
        Ok(u)
    }
}

#[derive(Serialize, Deserialize)]
struct PolarCodeFile {
    #[serde(rename = "N")]
    n: usize,
    frozen_indices: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    design_meta: Option<DesignMeta>,
}

impl Serialize for PolarCode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PolarCodeFile {
            n: self.len(),
            frozen_indices: (0..self.len()).filter(|&i| self.frozen[i]).collect(),
            design_meta: self.design.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PolarCode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let f = PolarCodeFile::deserialize(d)?;
        let mut frozen = vec![false; f.n];
        for i in f.frozen_indices {
            *frozen
                .get_mut(i)
                .ok_or_else(|| D::Error::custom(format!("frozen index {i} beyond N")))? = true;
        }
        let mut code = PolarCode::new(frozen).map_err(D::Error::custom)?;
        code.design = f.design_meta;
        Ok(code)
    }
}

pub(crate) fn log2_exact(n: usize) -> Result<usize> {
    if n < 2 || !n.is_power_of_two() {
        return Err(argument(format!("length {n} is not a power of two ≥ 2")));
    }
    Ok(n.trailing_zeros() as usize)
}

/// Applies stages `1..=stages` of the transform in place.
pub fn polar_transform(bits: &mut [u8], stages: usize) -> Result<()> {
    if bits.len() == 1 && stages == 0 {
        return Ok(());
    }
    let n = log2_exact(bits.len())?;
    if stages > n {
        return Err(argument(format!("{stages} stages exceed log2 N = {n}")));
    }
    for s in 1..=stages {
        let h = 1usize << (s - 1);
        for block in bits.chunks_exact_mut(2 * h) {
            let (a, b) = block.split_at_mut(h);
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x ^= *y;
            }
        }
    }
    Ok(())
}

/// A polar code viewed as `k'` independent subcodes over contiguous input
/// ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct SubcodeSet {
    pub parent: PolarCode,
    pub members: Vec<PolarCode>,
}

impl SubcodeSet {
    pub fn count(&self) -> usize {
        self.members.len()
    }

    /// Stage at which the members' codewords appear in the parent.
    pub fn stages(&self) -> usize {
        self.parent.stages() - self.count().trailing_zeros() as usize
    }

    pub fn member_len(&self) -> usize {
        self.parent.len() / self.count()
    }
}

/// Splits `code` into `k_prime ∈ {1, 2, 4}` subcodes; `k_prime = 1` is
/// the code itself.
pub fn make_subcodes(code: &PolarCode, k_prime: usize) -> Result<SubcodeSet> {
    if !matches!(k_prime, 1 | 2 | 4) {
        return Err(config(format!("unsupported subcode count {k_prime}")));
    }
    let len = code.len() / k_prime;
    if len < 1 || !code.len().is_multiple_of(k_prime) {
        return Err(config(format!("{k_prime} subcodes do not divide N = {}", code.len())));
    }
    let members = if len == 1 {
        return Err(config("subcodes of length one are not polar codes"));
    } else {
        code.frozen
            .chunks_exact(len)
            .map(|c| PolarCode::new(c.to_vec()))
            .collect::<Result<Vec<_>>>()?
    };
    Ok(SubcodeSet {
        parent: code.clone(),
        members,
    })
}

/// Exact box-plus `2·atanh(tanh(a/2)·tanh(b/2))` in a form that is stable
/// for large magnitudes.
#[inline]
pub fn boxplus<T: Real>(a: T, b: T) -> T {
    let sign = if (a < T::zero()) ^ (b < T::zero()) {
        -T::one()
    } else {
        T::one()
    };
    sign * a.abs().min(b.abs()) + (-(a + b).abs()).exp().ln_1p() - (-(a - b).abs()).exp().ln_1p()
}

#[inline]
fn saturate<T: Real>(v: T) -> T {
    let lim = T::lit(LLR_SATURATION);
    v.max(-lim).min(lim)
}

/// Output of successive cancellation decoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScOutput {
    /// Decoded bits on the information positions.
    pub info: Vec<u8>,
    /// Re-encoded codeword, used for decision feedback.
    pub coded: Vec<u8>,
}

struct Ctx<'a> {
    frozen: &'a [bool],
    genie: Option<&'a [u8]>,
    first_errors: Option<&'a mut [u64]>,
    trace: Option<&'a mut Vec<usize>>,
}

fn sc_node<T: Real>(llr: &[T], offset: usize, ctx: &mut Ctx<'_>, u: &mut [u8], x: &mut [u8], scratch: &mut [T]) {
    let len = llr.len();
    if len == 1 {
        // Ties resolve to zero.
        let hard = u8::from(llr[0] < T::zero());
        let bit = match ctx.genie {
            Some(truth) => {
                if hard != truth[offset] {
                    if let Some(errs) = ctx.first_errors.as_deref_mut() {
                        errs[offset] += 1;
                    }
                }
                truth[offset]
            }
            None if ctx.frozen[offset] => 0,
            None => hard,
        };
        if let Some(t) = ctx.trace.as_deref_mut() {
            t.push(offset);
        }
        u[0] = bit;
        x[0] = bit;
        return;
    }
    let h = len / 2;
    let (child, rest) = scratch.split_at_mut(h);
    for i in 0..h {
        child[i] = boxplus(llr[i], llr[i + h]);
    }
    {
        let (xl, _) = x.split_at_mut(h);
        sc_node(child, offset, ctx, &mut u[..h], xl, rest);
    }
    for i in 0..h {
        let l = if x[i] == 1 { -llr[i] } else { llr[i] };
        child[i] = saturate(llr[i + h] + l);
    }
    sc_node(child, offset + h, ctx, &mut u[h..], &mut x[h..], rest);
    let (xl, xr) = x.split_at_mut(h);
    for (a, b) in xl.iter_mut().zip(xr.iter()) {
        *a ^= *b;
    }
}

fn run_sc<T: Real>(len: usize, llrs: &[T], ctx: &mut Ctx<'_>) -> Result<(Vec<u8>, Vec<u8>)> {
    if llrs.len() != len {
        return Err(argument(format!("expected {len} LLRs, got {}", llrs.len())));
    }
    let input: Vec<T> = llrs.iter().map(|&l| saturate(l)).collect();
    let mut u = vec![0u8; len];
    let mut x = vec![0u8; len];
    let mut scratch = vec![T::zero(); len];
    sc_node(&input, 0, ctx, &mut u, &mut x, &mut scratch);
    Ok((u, x))
}

/// Successive cancellation decoding; positive LLRs favour bit 0.
pub fn sc_decode<T: Real>(code: &PolarCode, channel_llrs: &[T]) -> Result<ScOutput> {
    let mut ctx = Ctx {
        frozen: &code.frozen,
        genie: None,
        first_errors: None,
        trace: None,
    };
    let (u, coded) = run_sc(code.len(), channel_llrs, &mut ctx)?;
    Ok(ScOutput {
        info: code.info.iter().map(|&p| u[p]).collect(),
        coded,
    })
}

/// [`sc_decode`] that also records the order in which inputs are decided.
pub fn sc_decode_traced<T: Real>(code: &PolarCode, channel_llrs: &[T], trace: &mut Vec<usize>) -> Result<ScOutput> {
    let mut ctx = Ctx {
        frozen: &code.frozen,
        genie: None,
        first_errors: None,
        trace: Some(trace),
    };
    let (u, coded) = run_sc(code.len(), channel_llrs, &mut ctx)?;
    Ok(ScOutput {
        info: code.info.iter().map(|&p| u[p]).collect(),
        coded,
    })
}

/// Genie-aided SC pass: every input is decided from its LLR, compared
/// with `truth` (counting a first error where they differ) and then
/// replaced by the true value.
pub fn genie_first_errors<T: Real>(channel_llrs: &[T], truth: &[u8], counts: &mut [u64]) -> Result<()> {
    let len = channel_llrs.len();
    if truth.len() != len || counts.len() != len {
        return Err(argument("genie decoding buffers differ in length"));
    }
    let frozen = vec![false; len];
    let mut ctx = Ctx {
        frozen: &frozen,
        genie: Some(truth),
        first_errors: Some(counts),
        trace: None,
    };
    run_sc(len, channel_llrs, &mut ctx)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// x = u·F^{⊗n} over GF(2) with F = [[1,0],[1,1]], computed from the
    /// Kronecker-power matrix.
    fn kron_encode(u: &[u8]) -> Vec<u8> {
        let n = u.len();
        let mut g = vec![vec![1u8]];
        while g.len() < n {
            let m = g.len();
            let mut next = vec![vec![0u8; 2 * m]; 2 * m];
            for r in 0..m {
                for c in 0..m {
                    // [[G, 0], [G, G]]
                    next[r][c] = g[r][c];
                    next[r + m][c] = g[r][c];
                    next[r + m][c + m] = g[r][c];
                }
            }
            g = next;
        }
        (0..n)
            .map(|c| (0..n).fold(0u8, |acc, r| acc ^ (u[r] & g[r][c])))
            .collect()
    }

    fn random_code(n: usize, rng: &mut ChaCha8Rng) -> PolarCode {
        PolarCode::new((0..n).map(|_| rng.random_bool(0.5)).collect()).unwrap()
    }

    fn noiseless_llrs(x: &[u8]) -> Vec<f64> {
        x.iter().map(|&b| if b == 0 { 30.0 } else { -30.0 }).collect()
    }

    #[test]
    fn two_point_transform() {
        let mut a = [1u8, 0];
        polar_transform(&mut a, 1).unwrap();
        assert_eq!(a, [1, 0]);
        let mut b = [1u8, 1];
        polar_transform(&mut b, 1).unwrap();
        assert_eq!(b, [0, 1]);
    }

    #[test]
    fn four_point_all_ones() {
        let mut u = [1u8, 1, 1, 1];
        polar_transform(&mut u, 2).unwrap();
        assert_eq!(u, [0, 0, 0, 1]);
        assert_eq!(kron_encode(&[1, 1, 1, 1]), vec![0, 0, 0, 1]);
    }

    #[test]
    fn zero_stages_is_identity_and_errors() {
        let mut u = [1u8, 0, 1, 1];
        polar_transform(&mut u, 0).unwrap();
        assert_eq!(u, [1, 0, 1, 1]);
        assert!(polar_transform(&mut [0u8; 6], 1).is_err());
        assert!(polar_transform(&mut [0u8; 4], 3).is_err());
    }

    #[test]
    fn encode_examples() {
        let code = PolarCode::new(vec![true; 8]).unwrap();
        assert_eq!(code.encode(&[], 3).unwrap(), vec![0; 8]);
        let code = PolarCode::from_info_positions(4, &[2, 3]).unwrap();
        let x = code.encode(&[1, 0], 2).unwrap();
        let mut direct = [0u8, 0, 1, 0];
        polar_transform(&mut direct, 2).unwrap();
        assert_eq!(x, direct);
        assert!(code.encode(&[1], 2).is_err());
    }

    #[test]
    fn subcode_ranges() {
        let code = PolarCode::new((0..1024).map(|i| i % 3 == 0).collect()).unwrap();
        let s = make_subcodes(&code, 4).unwrap();
        assert_eq!(s.members.len(), 4);
        assert!(s.members.iter().all(|m| m.len() == 256));
        assert_eq!(s.stages(), 8);
        let s2 = make_subcodes(&code, 2).unwrap();
        assert_eq!(s2.members[0].frozen(), &code.frozen()[..512]);
        let total: usize = s2.members.iter().map(|m| m.k_info()).sum();
        assert_eq!(total, code.k_info());
        assert!(make_subcodes(&code, 3).is_err());
    }

    #[test]
    fn subcode_concatenation_matches_parent_encoding() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for kp in [2usize, 4] {
            for _ in 0..50 {
                let code = random_code(16, &mut rng);
                let info: Vec<u8> = (0..code.k_info()).map(|_| rng.random_range(0..2)).collect();
                let s = make_subcodes(&code, kp).unwrap();
                let parent = code.encode(&info, s.stages()).unwrap();
                let mut cat = Vec::new();
                let mut at = 0;
                for m in &s.members {
                    let mine = &info[at..at + m.k_info()];
                    at += m.k_info();
                    cat.extend(m.encode(mine, m.stages()).unwrap());
                }
                assert_eq!(parent, cat);
                // finishing the remaining stages gives the full codeword
                let full = code.encode(&info, code.stages()).unwrap();
                assert_eq!(full, kron_encode(&code.scatter(&info).unwrap()));
            }
        }
    }

    #[test]
    fn boxplus_matches_atanh_form() {
        for (a, b) in [(1.0f64, 2.0f64), (-0.3, 4.0), (7.0, -7.5), (0.0, 3.0)] {
            let direct = 2.0 * ((a / 2.0).tanh() * (b / 2.0).tanh()).atanh();
            assert!((boxplus(a, b) - direct).abs() < 1e-12, "{a} {b}");
        }
        assert!((boxplus(500.0f64, -35.0) + 35.0).abs() < 1e-9);
    }

    #[test]
    fn all_frozen_decodes_to_zero() {
        let code = PolarCode::new(vec![true; 8]).unwrap();
        let out = sc_decode(&code, &[-3.0f64, 1.0, -2.0, 0.5, -1.0, 2.0, -4.0, 1.0]).unwrap();
        assert!(out.info.is_empty());
        assert_eq!(out.coded, vec![0; 8]);
    }

    #[test]
    fn high_snr_bpsk_has_no_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let code = PolarCode::from_info_positions(8, &[3, 5, 6, 7]).unwrap();
        let sigma: f64 = 0.2;
        for _ in 0..1000 {
            let info: Vec<u8> = (0..4).map(|_| rng.random_range(0..2)).collect();
            let x = code.encode(&info, 3).unwrap();
            let llrs: Vec<f64> = x
                .iter()
                .map(|&b| {
                    let s = if b == 0 { 1.0 } else { -1.0 };
                    let n: f64 = rng.sample(rand_distr::StandardNormal);
                    2.0 * (s + sigma * n) / (sigma * sigma)
                })
                .collect();
            assert_eq!(sc_decode(&code, &llrs).unwrap().info, info);
        }
    }

    #[test]
    fn subcode_traces_concatenate_to_parent_trace() {
        let code = PolarCode::new((0..32).map(|i| i % 5 == 0).collect()).unwrap();
        let llrs = vec![1.0f64; 32];
        let mut parent = Vec::new();
        sc_decode_traced(&code, &llrs, &mut parent).unwrap();
        assert_eq!(parent, (0..32).collect::<Vec<_>>());
        for kp in [2, 4] {
            let set = make_subcodes(&code, kp).unwrap();
            let mut joined = Vec::new();
            for (j, m) in set.members.iter().enumerate() {
                let mut t = Vec::new();
                sc_decode_traced(m, &llrs[..m.len()], &mut t).unwrap();
                joined.extend(t.into_iter().map(|i| i + j * m.len()));
            }
            assert_eq!(joined, parent);
        }
    }

    #[test]
    fn genie_counts_first_errors() {
        let llrs = [-5.0f64, 5.0, 5.0, 5.0];
        let mut counts = vec![0u64; 4];
        genie_first_errors(&llrs, &[0, 0, 0, 0], &mut counts).unwrap();
        // u0 sees boxplus of everything (negative), the rest are positive
        assert_eq!(counts[0], 1);
        assert_eq!(counts[1..].iter().sum::<u64>(), 0);
    }

    #[test]
    fn json_format() {
        let code = PolarCode::from_info_positions(4, &[3]).unwrap().with_design(DesignMeta {
            method: "gade".into(),
            snr_db: Some(1.5),
            seed: None,
            trials: None,
        });
        let s = serde_json::to_string(&code).unwrap();
        assert_eq!(s, r#"{"N":4,"frozen_indices":[0,1,2],"design_meta":{"method":"gade","snr_db":1.5}}"#);
        let back: PolarCode = serde_json::from_str(&s).unwrap();
        assert_eq!(back, code);
        assert!(serde_json::from_str::<PolarCode>(r#"{"N":4,"frozen_indices":[9]}"#).is_err());
    }

    proptest! {
        #[test]
        fn transform_is_an_involution(bits in prop::collection::vec(0u8..2, 64), stages in 0usize..=6) {
            let mut v = bits.clone();
            polar_transform(&mut v, stages).unwrap();
            polar_transform(&mut v, stages).unwrap();
            prop_assert_eq!(v, bits);
        }

        #[test]
        fn noiseless_sc_recovers_info(seed in any::<u64>(), log_n in 1usize..=6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let code = random_code(1 << log_n, &mut rng);
            let info: Vec<u8> = (0..code.k_info()).map(|_| rng.random_range(0..2)).collect();
            let x = code.encode(&info, code.stages()).unwrap();
            let out = sc_decode(&code, &noiseless_llrs(&x)).unwrap();
            prop_assert_eq!(out.info, info);
            prop_assert_eq!(out.coded, x);
        }
    }
}
