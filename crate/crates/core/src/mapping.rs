//! Mapping polar codewords onto ASK symbols: BPCM with per-symbol
//! decode-order permutations, the four-subcode 8-ASK layout, BICM
//! interleaving, and the SBP/PBP baseline constructions.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{
    conditional_capacity, equivalent_mean_llr, pbp_first_order_capacities, AwgnSpec, BitSource, Demapper,
    PartialLabel,
};
use crate::constellation::{Constellation, Labeling};
use crate::construction::{check_node, construct_gade, ChannelProfile, DeTree};
use crate::error::{argument, config, Result};
use crate::polar::{boxplus, log2_exact, make_subcodes, sc_decode, PolarCode, SubcodeSet};
use crate::scalar::Real;

/// Every decode-order permutation of `levels` bit levels in
/// lexicographic order; entry 0 is the identity.
pub fn bpcm_catalog(levels: usize) -> Result<Vec<Vec<usize>>> {
    if !(1..=4).contains(&levels) {
        return Err(config(format!("no permutation catalog for {levels} levels")));
    }
    let mut p: Vec<usize> = (0..levels).collect();
    let mut out = vec![p.clone()];
    // Standard next-permutation step.
    loop {
        let Some(i) = (1..levels).rev().find(|&i| p[i - 1] < p[i]) else {
            return Ok(out);
        };
        let j = (i..levels).rev().find(|&j| p[j] > p[i - 1]).expect("pivot exists");
        p.swap(i - 1, j);
        p[i..].reverse();
        out.push(p.clone());
    }
}

fn factorial(k: usize) -> usize {
    (1..=k).product()
}

/// Per-symbol choice of catalog permutation.
///
/// For a symbol with permutation `p`, the bit decoded at position `j` of
/// the symbol's schedule is carried on SP label level `p[j]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitPermutationMap {
    catalog: Vec<Vec<usize>>,
    perm_ids: Vec<usize>,
}

impl BitPermutationMap {
    pub fn new(levels: usize, perm_ids: Vec<usize>) -> Result<Self> {
        let catalog = bpcm_catalog(levels)?;
        if let Some(id) = perm_ids.iter().find(|&&id| id >= catalog.len()) {
            return Err(config(format!("permutation id {id} outside catalog of {}", catalog.len())));
        }
        Ok(Self { catalog, perm_ids })
    }

    /// Every symbol uses catalog entry `id` (0 is the conventional order).
    pub fn uniform(levels: usize, n_symbols: usize, id: usize) -> Result<Self> {
        Self::new(levels, vec![id; n_symbols])
    }

    pub fn n_symbols(&self) -> usize {
        self.perm_ids.len()
    }

    pub fn catalog_size(&self) -> usize {
        self.catalog.len()
    }

    pub fn levels(&self) -> usize {
        self.catalog[0].len()
    }

    pub fn catalog(&self) -> &[Vec<usize>] {
        &self.catalog
    }

    pub fn perm_ids(&self) -> &[usize] {
        &self.perm_ids
    }

    pub fn perm(&self, symbol: usize) -> &[usize] {
        &self.catalog[self.perm_ids[symbol]]
    }

    /// Number of symbols using each catalog entry.
    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.catalog.len()];
        for &id in &self.perm_ids {
            h[id] += 1;
        }
        h
    }
}

#[derive(Serialize, Deserialize)]
struct PermMapFile {
    n_symbols: usize,
    catalog_size: usize,
    perm_ids: Vec<usize>,
}

impl Serialize for BitPermutationMap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PermMapFile {
            n_symbols: self.n_symbols(),
            catalog_size: self.catalog_size(),
            perm_ids: self.perm_ids.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for BitPermutationMap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let f = PermMapFile::deserialize(d)?;
        let levels = (1..=4)
            .find(|&k| factorial(k) == f.catalog_size)
            .ok_or_else(|| D::Error::custom(format!("unsupported catalog size {}", f.catalog_size)))?;
        if f.perm_ids.len() != f.n_symbols {
            return Err(D::Error::custom("n_symbols does not match perm_ids"));
        }
        Self::new(levels, f.perm_ids).map_err(D::Error::custom)
    }
}

/// What one bit level of one symbol carries. Positions index the
/// subcode codewords laid end to end (`subcode · member_len + index`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Bit(usize),
    /// `x[head] ⊕ x[tail]` of a selective-polarization pair.
    PairHead { head: usize, tail: usize },
    /// `x[tail]` of a selective-polarization pair.
    PairTail { head: usize, tail: usize },
    /// Known zero.
    Filler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Pair {
    head: usize,
    tail: usize,
    a: (usize, usize),
    b: (usize, usize),
}

/// Assignment of subcode bits to the bit levels of every symbol.
///
/// Level `v` of a symbol is its `v`-th slot in decoding order; a
/// permutation map then places it on a physical label level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolLayout {
    len: usize,
    subcodes: usize,
    levels: usize,
    symbols: Vec<Vec<Slot>>,
    pairs: Vec<Pair>,
}

impl SymbolLayout {
    fn from_symbols(len: usize, subcodes: usize, levels: usize, symbols: Vec<Vec<Slot>>) -> Result<Self> {
        let mut pairs = Vec::new();
        let mut heads = std::collections::HashMap::new();
        for (s, slots) in symbols.iter().enumerate() {
            for (v, slot) in slots.iter().enumerate() {
                match *slot {
                    Slot::PairHead { head, tail } => {
                        heads.insert((head, tail), (s, v));
                    }
                    Slot::PairTail { head, tail } => pairs.push(Pair {
                        head,
                        tail,
                        a: (0, 0),
                        b: (s, v),
                    }),
                    _ => {}
                }
            }
        }
        for p in &mut pairs {
            p.a = heads
                .remove(&(p.head, p.tail))
                .ok_or_else(|| config("selective-polarization pair without its first member"))?;
        }
        if !heads.is_empty() {
            return Err(config("selective-polarization pair without its second member"));
        }
        pairs.sort_by_key(|p| p.head);
        let layout = Self {
            len,
            subcodes,
            levels,
            symbols,
            pairs,
        };
        layout.check()?;
        Ok(layout)
    }

    /// `levels` subcodes, symbol `i` carrying bit `i` of each in order.
    pub fn direct(len: usize, levels: usize) -> Result<Self> {
        let sub = make_subcodes(&PolarCode::new(vec![true; len])?, levels)?;
        let l = sub.member_len();
        let symbols = (0..l).map(|i| (0..levels).map(|j| Slot::Bit(j * l + i)).collect()).collect();
        Self::from_symbols(len, levels, levels, symbols)
    }

    /// Layout used for a `bits`-per-symbol constellation.
    pub fn for_constellation(len: usize, bits: usize) -> Result<Self> {
        match bits {
            3 => build_8ask_layout(len),
            1 | 2 | 4 => Self::direct(len, bits),
            _ => Err(config(format!("no layout for {bits} bits per symbol"))),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn subcodes(&self) -> usize {
        self.subcodes
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn n_symbols(&self) -> usize {
        self.symbols.len()
    }

    pub fn member_len(&self) -> usize {
        self.len / self.subcodes
    }

    pub fn slot(&self, symbol: usize, level: usize) -> Slot {
        self.symbols[symbol][level]
    }

    pub fn symbols(&self) -> &[Vec<Slot>] {
        &self.symbols
    }

    /// Subcode whose decoding needs this slot's LLR.
    pub fn llr_step(&self, slot: Slot) -> Option<usize> {
        match slot {
            Slot::Bit(p) | Slot::PairHead { head: p, .. } | Slot::PairTail { head: p, .. } => Some(p / self.member_len()),
            Slot::Filler => None,
        }
    }

    /// Subcode after whose decoding the slot's bit value is known.
    pub fn resolve_step(&self, slot: Slot) -> Option<usize> {
        match slot {
            Slot::Bit(p) | Slot::PairHead { tail: p, .. } | Slot::PairTail { tail: p, .. } => Some(p / self.member_len()),
            Slot::Filler => None,
        }
    }

    /// Levels of `symbol` whose values are known when level `level`'s
    /// LLR is computed (fillers included).
    pub fn known_levels(&self, symbol: usize, level: usize) -> usize {
        let step = self.llr_step(self.symbols[symbol][level]);
        let mut mask = 0;
        for (v, &slot) in self.symbols[symbol].iter().enumerate() {
            let known = match (self.resolve_step(slot), step) {
                (None, _) => true,
                (Some(r), Some(s)) => r < s,
                (Some(_), None) => false,
            };
            if known && v != level {
                mask |= 1 << v;
            }
        }
        mask
    }

    /// Checks coverage, pairing rules and the decoding schedule.
    pub fn check(&self) -> Result<()> {
        let mut seen = vec![0u8; self.len];
        let mut mark = |p: usize| -> Result<()> {
            if p >= self.len {
                return Err(config(format!("slot position {p} outside length {}", self.len)));
            }
            seen[p] += 1;
            Ok(())
        };
        for slots in &self.symbols {
            if slots.len() != self.levels {
                return Err(config("symbol with wrong number of levels"));
            }
            for slot in slots {
                match *slot {
                    Slot::Bit(p) => mark(p)?,
                    Slot::PairHead { head, .. } => mark(head)?,
                    Slot::PairTail { tail, .. } => mark(tail)?,
                    Slot::Filler => {}
                }
            }
        }
        if let Some(p) = seen.iter().position(|&c| c != 1) {
            return Err(config(format!("position {p} covered {} times", seen[p])));
        }
        let l = self.member_len();
        for p in &self.pairs {
            if p.a.1 != p.b.1 || p.head % l != p.tail % l || p.a.0 == p.b.0 {
                return Err(config("pair members must share a level and a subcode index"));
            }
            if p.head / l >= p.tail / l {
                return Err(config("pair head must be decoded before its tail"));
            }
        }
        // Within a symbol, a level's LLR may only depend on levels resolved
        // earlier, so LLR steps must not decrease along the levels.
        for slots in &self.symbols {
            let steps: Vec<usize> = slots.iter().filter_map(|&s| self.llr_step(s)).collect();
            if steps.windows(2).any(|w| w[0] > w[1]) {
                return Err(config("symbol levels out of decoding order"));
            }
        }
        Ok(())
    }

    fn slot_value(slot: Slot, bits: &[u8]) -> u8 {
        match slot {
            Slot::Bit(p) => bits[p],
            Slot::PairHead { head, tail } => bits[head] ^ bits[tail],
            Slot::PairTail { tail, .. } => bits[tail],
            Slot::Filler => 0,
        }
    }
}

/// Uniform spread of `count` marks over `len` indices.
fn spread(count: usize, len: usize) -> Vec<bool> {
    (0..len).map(|i| (i + 1) * count / len > i * count / len).collect()
}

/// Four-subcode layout for 8-ASK.
///
/// Subcode 1 fills the lowest level and subcode 2 is split between the
/// lowest and middle levels; where subcode 2 sits on the lowest level it
/// is joined to the same-index bit of subcode 1 by a 2×2 kernel. Subcode
/// 3 is split between the middle and high levels, pairing with subcode 4
/// on the high level. Known zeros fill the high level of the last
/// symbols when 3 ∤ N.
pub fn build_8ask_layout(len: usize) -> Result<SymbolLayout> {
    if !len.is_multiple_of(4) || len < 8 {
        return Err(config(format!("8-ASK layout needs N divisible by 4 and at least 8, got {len}")));
    }
    let l = len / 4;
    let n_sym = len.div_ceil(3);
    let t2 = n_sym - l;
    let fillers = 3 * n_sym - len;
    let pos = |sub: usize, i: usize| sub * l + i;
    let s2_low = spread(t2, l);
    let s3_mid = spread(2 * t2, l);

    let mut symbols = Vec::with_capacity(n_sym);
    let mids: Vec<usize> = (0..l).filter(|&i| s3_mid[i]).collect();
    for (r, i) in (0..l).filter(|&i| s2_low[i]).enumerate() {
        let (head, tail) = (pos(0, i), pos(1, i));
        for (e, first) in [Slot::PairHead { head, tail }, Slot::PairTail { head, tail }].into_iter().enumerate() {
            let m = mids[2 * r + e];
            symbols.push(vec![first, Slot::Bit(pos(2, m)), Slot::Bit(pos(3, m))]);
        }
    }
    let mut highs: Vec<Slot> = (0..l)
        .filter(|&i| !s3_mid[i])
        .flat_map(|i| {
            let (head, tail) = (pos(2, i), pos(3, i));
            [Slot::PairHead { head, tail }, Slot::PairTail { head, tail }]
        })
        .collect();
    highs.extend(std::iter::repeat_n(Slot::Filler, fillers));
    for (i, high) in (0..l).filter(|&i| !s2_low[i]).zip(highs) {
        symbols.push(vec![Slot::Bit(pos(0, i)), Slot::Bit(pos(1, i)), high]);
    }
    SymbolLayout::from_symbols(len, 4, 3, symbols)
}

#[derive(Serialize)]
struct SlotEntry {
    role: &'static str,
    subcode: usize,
    index: usize,
}

#[derive(Serialize)]
struct PairEntry {
    level: usize,
    first: (usize, usize),
    second: (usize, usize),
    symbols: (usize, usize),
}

impl Serialize for SymbolLayout {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let l = self.member_len();
        let entry = |role, p: usize| Some(SlotEntry {
            role,
            subcode: p / l,
            index: p % l,
        });
        let slots: Vec<Vec<Option<SlotEntry>>> = self
            .symbols
            .iter()
            .map(|syms| {
                syms.iter()
                    .map(|slot| match *slot {
                        Slot::Bit(p) => entry("bit", p),
                        Slot::PairHead { head, .. } => entry("pair_xor", head),
                        Slot::PairTail { tail, .. } => entry("pair", tail),
                        Slot::Filler => None,
                    })
                    .collect()
            })
            .collect();
        let pairs: Vec<PairEntry> = self
            .pairs
            .iter()
            .map(|p| PairEntry {
                level: p.a.1,
                first: (p.head / l, p.head % l),
                second: (p.tail / l, p.tail % l),
                symbols: (p.a.0, p.b.0),
            })
            .collect();
        let fillers: Vec<(usize, usize)> = self
            .symbols
            .iter()
            .enumerate()
            .flat_map(|(i, syms)| {
                syms.iter()
                    .enumerate()
                    .filter(|(_, s)| **s == Slot::Filler)
                    .map(move |(v, _)| (i, v))
            })
            .collect();
        let mut st = s.serialize_struct("SymbolLayout", 6)?;
        st.serialize_field("N", &self.len)?;
        st.serialize_field("n_symbols", &self.n_symbols())?;
        st.serialize_field("subcodes", &self.subcodes)?;
        st.serialize_field("slot_assignment", &slots)?;
        st.serialize_field("polar_pairs", &pairs)?;
        st.serialize_field("filler_positions", &fillers)?;
        st.end()
    }
}

/// Equivalent BI-AWGN mean LLR of every `(target, known levels)`
/// conditional bit channel of a constellation.
#[derive(Debug, Clone)]
pub struct CapacityTable {
    bits: usize,
    means: Vec<f64>,
    caps: Vec<f64>,
}

impl CapacityTable {
    pub fn new<T: Real>(c: &Constellation<T>, spec: &AwgnSpec<T>) -> Result<Self> {
        let k = c.bits();
        let mut means = vec![0.0; k << k];
        let mut caps = vec![0.0; k << k];
        for t in 0..k {
            for mask in 0..1usize << k {
                if mask >> t & 1 == 0 {
                    let cap = conditional_capacity(c, spec, t, mask)?.as_f64();
                    caps[(t << k) | mask] = cap;
                    means[(t << k) | mask] = equivalent_mean_llr(cap);
                }
            }
        }
        Ok(Self { bits: k, means, caps })
    }

    pub fn mean(&self, target: usize, known_mask: usize) -> f64 {
        self.means[(target << self.bits) | known_mask]
    }

    pub fn capacity(&self, target: usize, known_mask: usize) -> f64 {
        self.caps[(target << self.bits) | known_mask]
    }
}

fn physical_mask(perm: &[usize], virtual_mask: usize) -> usize {
    perm.iter()
        .enumerate()
        .filter(|(v, _)| virtual_mask >> v & 1 == 1)
        .fold(0, |m, (_, &p)| m | 1 << p)
}

fn require_sp<T: Real>(c: &Constellation<T>) -> Result<()> {
    if c.bits() > 1 && c.labeling() != Labeling::SetPartition {
        return Err(config("bit-permuted mapping requires set-partition labeling"));
    }
    Ok(())
}

/// Maps subcode codewords to symbols.
pub fn bpcm_map<T: Real>(
    subcode_bits: &[Vec<u8>],
    pmap: &BitPermutationMap,
    c: &Constellation<T>,
    layout: &SymbolLayout,
) -> Result<Vec<T>> {
    if subcode_bits.len() != layout.subcodes() || subcode_bits.iter().any(|s| s.len() != layout.member_len()) {
        return Err(argument(format!(
            "expected {} subcodes of {} bits",
            layout.subcodes(),
            layout.member_len()
        )));
    }
    check_shapes(pmap, c, layout)?;
    let bits: Vec<u8> = subcode_bits.concat();
    Ok(map_concatenated(&bits, pmap, c, layout))
}

fn check_shapes<T: Real>(pmap: &BitPermutationMap, c: &Constellation<T>, layout: &SymbolLayout) -> Result<()> {
    if pmap.n_symbols() != layout.n_symbols() || pmap.levels() != layout.levels() || c.bits() != layout.levels() {
        return Err(config(format!(
            "permutation map ({} symbols, {} levels) does not fit layout ({} symbols, {} levels) and {}-bit constellation",
            pmap.n_symbols(),
            pmap.levels(),
            layout.n_symbols(),
            layout.levels(),
            c.bits()
        )));
    }
    Ok(())
}

fn map_concatenated<T: Real>(bits: &[u8], pmap: &BitPermutationMap, c: &Constellation<T>, layout: &SymbolLayout) -> Vec<T> {
    layout
        .symbols
        .iter()
        .enumerate()
        .map(|(s, slots)| {
            let perm = pmap.perm(s);
            let label = slots
                .iter()
                .enumerate()
                .fold(0, |acc, (v, &slot)| acc | usize::from(SymbolLayout::slot_value(slot, bits)) << perm[v]);
            c.point(label)
        })
        .collect()
}

#[derive(Debug, Clone, Default)]
struct Step {
    llr_slots: Vec<(usize, usize)>,
    resolve_slots: Vec<(usize, usize)>,
    head_pairs: Vec<usize>,
    tail_pairs: Vec<usize>,
}

/// A polar code mapped by BPCM, with its multistage receiver.
#[derive(Debug, Clone)]
pub struct BpcmSystem<T: Real = f64> {
    code: PolarCode,
    subcodes: SubcodeSet,
    layout: SymbolLayout,
    pmap: BitPermutationMap,
    constellation: Constellation<T>,
    steps: Vec<Step>,
    filler_masks: Vec<usize>,
}

impl<T: Real> BpcmSystem<T> {
    pub fn new(code: PolarCode, constellation: Constellation<T>, pmap: BitPermutationMap) -> Result<Self> {
        require_sp(&constellation)?;
        let layout = SymbolLayout::for_constellation(code.len(), constellation.bits())?;
        check_shapes(&pmap, &constellation, &layout)?;
        let subcodes = make_subcodes(&code, layout.subcodes())?;
        let mut steps = vec![Step::default(); layout.subcodes()];
        let mut filler_masks = vec![0; layout.n_symbols()];
        for (s, slots) in layout.symbols.iter().enumerate() {
            for (v, &slot) in slots.iter().enumerate() {
                match (layout.llr_step(slot), layout.resolve_step(slot)) {
                    (Some(a), Some(b)) => {
                        steps[a].llr_slots.push((s, v));
                        steps[b].resolve_slots.push((s, v));
                    }
                    _ => filler_masks[s] |= 1 << v,
                }
            }
        }
        let l = layout.member_len();
        for (i, p) in layout.pairs.iter().enumerate() {
            steps[p.head / l].head_pairs.push(i);
            steps[p.tail / l].tail_pairs.push(i);
        }
        Ok(Self {
            code,
            subcodes,
            layout,
            pmap,
            constellation,
            steps,
            filler_masks,
        })
    }

    pub fn code(&self) -> &PolarCode {
        &self.code
    }

    pub fn layout(&self) -> &SymbolLayout {
        &self.layout
    }

    pub fn pmap(&self) -> &BitPermutationMap {
        &self.pmap
    }

    pub fn constellation(&self) -> &Constellation<T> {
        &self.constellation
    }

    pub fn n_symbols(&self) -> usize {
        self.layout.n_symbols()
    }

    /// Number of polar stages applied before mapping.
    pub fn stages(&self) -> usize {
        self.subcodes.stages()
    }

    /// Subcode codewords laid end to end.
    pub fn subcode_codewords(&self, info: &[u8]) -> Result<Vec<u8>> {
        self.code.encode(info, self.stages())
    }

    pub fn modulate(&self, info: &[u8]) -> Result<Vec<T>> {
        let bits = self.subcode_codewords(info)?;
        Ok(map_concatenated(&bits, &self.pmap, &self.constellation, &self.layout))
    }

    /// Multistage decoding with decision feedback.
    pub fn receive(&self, y: &[T], spec: &AwgnSpec<T>) -> Result<Vec<u8>> {
        self.decode(y, spec, None)
    }

    /// Multistage decoding fed back with the transmitted subcode
    /// codewords instead of the decisions.
    pub fn receive_genie(&self, y: &[T], spec: &AwgnSpec<T>, truth: &[u8]) -> Result<Vec<u8>> {
        if truth.len() != self.code.len() {
            return Err(argument("genie codeword has the wrong length"));
        }
        self.decode(y, spec, Some(truth))
    }

    fn decode(&self, y: &[T], spec: &AwgnSpec<T>, genie: Option<&[u8]>) -> Result<Vec<u8>> {
        if y.len() != self.n_symbols() {
            return Err(argument(format!("expected {} symbols, got {}", self.n_symbols(), y.len())));
        }
        let demap = Demapper::new(&self.constellation, spec);
        let levels = self.layout.levels();
        let l = self.layout.member_len();
        let mut known: Vec<PartialLabel> = self
            .filler_masks
            .iter()
            .enumerate()
            .map(|(s, &m)| PartialLabel::new(physical_mask(self.pmap.perm(s), m), 0))
            .collect();
        let mut bits = vec![0u8; self.code.len()];
        let mut slot_llr = vec![T::zero(); self.n_symbols() * levels];
        let mut info = Vec::with_capacity(self.code.k_info());
        let mut llrs = vec![T::zero(); l];
        for (j, step) in self.steps.iter().enumerate() {
            let base = j * l;
            for &(s, v) in &step.llr_slots {
                let llr = demap.llr(y[s], known[s], self.pmap.perm(s)[v]);
                slot_llr[s * levels + v] = llr;
                if let Slot::Bit(p) = self.layout.symbols[s][v] {
                    llrs[p - base] = llr;
                }
            }
            for &i in &step.head_pairs {
                let p = &self.layout.pairs[i];
                llrs[p.head - base] = boxplus(slot_llr[p.a.0 * levels + p.a.1], slot_llr[p.b.0 * levels + p.b.1]);
            }
            for &i in &step.tail_pairs {
                let p = &self.layout.pairs[i];
                let la = slot_llr[p.a.0 * levels + p.a.1];
                let lb = slot_llr[p.b.0 * levels + p.b.1];
                llrs[p.tail - base] = lb + if bits[p.head] == 1 { -la } else { la };
            }
            let out = sc_decode(&self.subcodes.members[j], &llrs)?;
            info.extend_from_slice(&out.info);
            let fed = genie.map_or(&out.coded[..], |t| &t[base..base + l]);
            bits[base..base + l].copy_from_slice(fed);
            for &(s, v) in &step.resolve_slots {
                let b = SymbolLayout::slot_value(self.layout.symbols[s][v], &bits);
                known[s] = known[s].with(self.pmap.perm(s)[v], b);
            }
        }
        Ok(info)
    }
}

/// Multistage receiver for a BPCM-mapped code.
pub fn mlc_receive<T: Real>(
    y: &[T],
    pmap: &BitPermutationMap,
    code: &PolarCode,
    c: &Constellation<T>,
    spec: &AwgnSpec<T>,
) -> Result<Vec<u8>> {
    BpcmSystem::new(code.clone(), c.clone(), pmap.clone())?.receive(y, spec)
}

/// GA-DE leaf means of a BPCM mapping, kept per symbol so that single
/// symbols can be re-permuted.
struct BpcmProfile<'a> {
    layout: &'a SymbolLayout,
    table: &'a CapacityTable,
    catalog: Vec<Vec<usize>>,
    virtual_known: Vec<usize>,
    slot_means: Vec<f64>,
    /// Pair index per slot, if any.
    pair_of: Vec<Option<usize>>,
}

impl<'a> BpcmProfile<'a> {
    fn new(layout: &'a SymbolLayout, table: &'a CapacityTable, pmap: &BitPermutationMap) -> Self {
        let levels = layout.levels();
        let mut virtual_known = Vec::with_capacity(layout.n_symbols() * levels);
        for s in 0..layout.n_symbols() {
            for v in 0..levels {
                virtual_known.push(layout.known_levels(s, v));
            }
        }
        let mut pair_of = vec![None; layout.n_symbols() * levels];
        for (i, p) in layout.pairs.iter().enumerate() {
            pair_of[p.a.0 * levels + p.a.1] = Some(i);
            pair_of[p.b.0 * levels + p.b.1] = Some(i);
        }
        let mut me = Self {
            layout,
            table,
            catalog: pmap.catalog().to_vec(),
            virtual_known,
            slot_means: vec![0.0; layout.n_symbols() * levels],
            pair_of,
        };
        for s in 0..layout.n_symbols() {
            let means = me.symbol_means(s, pmap.perm_ids()[s]);
            me.slot_means[s * levels..(s + 1) * levels].copy_from_slice(&means);
        }
        me
    }

    fn symbol_means(&self, s: usize, id: usize) -> Vec<f64> {
        let levels = self.layout.levels();
        let perm = &self.catalog[id];
        (0..levels)
            .map(|v| match self.layout.symbols[s][v] {
                Slot::Filler => 0.0,
                _ => self.table.mean(perm[v], physical_mask(perm, self.virtual_known[s * levels + v])),
            })
            .collect()
    }

    fn pair_leaves(p: &Pair, ma: f64, mb: f64) -> [(usize, f64); 2] {
        [(p.head, check_node(ma, mb)), (p.tail, ma + mb)]
    }

    fn leaves(&self) -> Vec<f64> {
        let levels = self.layout.levels();
        let mut out = vec![0.0; self.layout.len()];
        for (s, slots) in self.layout.symbols.iter().enumerate() {
            for (v, slot) in slots.iter().enumerate() {
                if let Slot::Bit(p) = *slot {
                    out[p] = self.slot_means[s * levels + v];
                }
            }
        }
        for p in &self.layout.pairs {
            let ma = self.slot_means[p.a.0 * levels + p.a.1];
            let mb = self.slot_means[p.b.0 * levels + p.b.1];
            for (pos, m) in Self::pair_leaves(p, ma, mb) {
                out[pos] = m;
            }
        }
        out
    }

    /// Leaf changes if symbol `s` switched to catalog entry `id`.
    fn changes(&self, s: usize, id: usize) -> (Vec<f64>, Vec<(usize, f64)>) {
        let levels = self.layout.levels();
        let means = self.symbol_means(s, id);
        let mut out = Vec::with_capacity(2 * levels);
        for (v, &m) in means.iter().enumerate() {
            match self.layout.symbols[s][v] {
                Slot::Bit(p) => out.push((p, m)),
                Slot::Filler => {}
                Slot::PairHead { .. } | Slot::PairTail { .. } => {
                    let p = &self.layout.pairs[self.pair_of[s * levels + v].expect("pair slot indexed")];
                    let (ma, mb) = if p.a == (s, v) {
                        (m, self.slot_means[p.b.0 * levels + p.b.1])
                    } else {
                        (self.slot_means[p.a.0 * levels + p.a.1], m)
                    };
                    out.extend(Self::pair_leaves(p, ma, mb));
                }
            }
        }
        (means, out)
    }
}

/// GA-DE channel profile of a BPCM mapping at the subcode stage.
pub fn bpcm_profile<T: Real>(
    len: usize,
    c: &Constellation<T>,
    spec: &AwgnSpec<T>,
    pmap: &BitPermutationMap,
) -> Result<ChannelProfile<f64>> {
    require_sp(c)?;
    let layout = SymbolLayout::for_constellation(len, c.bits())?;
    check_shapes(pmap, c, &layout)?;
    let table = CapacityTable::new(c, spec)?;
    ChannelProfile::new(BpcmProfile::new(&layout, &table, pmap).leaves())
}

/// Polar stages applied before a `bits`-per-symbol BPCM mapping.
pub fn bpcm_stages(len: usize, bits: usize) -> Result<usize> {
    let n = log2_exact(len)?;
    let sub = SymbolLayout::for_constellation(len, bits)?.subcodes();
    Ok(n - sub.trailing_zeros() as usize)
}

/// GA-DE BLER estimate of `code` under a BPCM mapping.
pub fn bpcm_estimate<T: Real>(
    code: &PolarCode,
    c: &Constellation<T>,
    spec: &AwgnSpec<T>,
    pmap: &BitPermutationMap,
) -> Result<f64> {
    let profile = bpcm_profile(code.len(), c, spec, pmap)?;
    Ok(DeTree::new(code, profile.means(), bpcm_stages(code.len(), c.bits())?)?.bler_estimate())
}

/// Outcome of the permutation search.
#[derive(Debug, Clone, PartialEq)]
pub struct PermutationDesign {
    pub map: BitPermutationMap,
    /// BLER estimate with every symbol on the conventional order.
    pub initial_estimate: f64,
    pub estimate: f64,
    /// Estimate after each symbol visit.
    pub trace: Vec<f64>,
    pub iterations: usize,
}

/// Greedy per-symbol permutation search on a fixed frozen set.
///
/// Starts from the conventional order everywhere; each pass visits the
/// symbols in index order and moves each to the catalog entry with the
/// lowest GA-DE estimate (lowest index among equals). Stops after a pass
/// without changes or after `max_iters` passes.
pub fn design_permutations<T: Real>(
    code: &PolarCode,
    c: &Constellation<T>,
    spec: &AwgnSpec<T>,
    max_iters: usize,
) -> Result<PermutationDesign> {
    require_sp(c)?;
    let layout = SymbolLayout::for_constellation(code.len(), c.bits())?;
    let mut map = BitPermutationMap::uniform(c.bits(), layout.n_symbols(), 0)?;
    let table = CapacityTable::new(c, spec)?;
    let mut profile = BpcmProfile::new(&layout, &table, &map);
    let mut tree = DeTree::capped(code, &profile.leaves(), bpcm_stages(code.len(), c.bits())?)?;
    let initial = tree.bler_estimate();
    let mut estimate = initial;
    let mut trace = vec![initial];
    let levels = layout.levels();
    let mut iterations = 0;
    for _ in 0..max_iters {
        iterations += 1;
        let mut changed = false;
        for s in 0..layout.n_symbols() {
            let mut best: Option<(usize, f64)> = None;
            for id in 0..map.catalog_size() {
                let e = if id == map.perm_ids[s] {
                    estimate
                } else {
                    tree.probe(&profile.changes(s, id).1)
                };
                if best.is_none_or(|(_, b)| e < b) {
                    best = Some((id, e));
                }
            }
            let (id, e) = best.expect("catalog is not empty");
            if id != map.perm_ids[s] {
                let (means, changes) = profile.changes(s, id);
                tree.update(&changes);
                tree.commit();
                profile.slot_means[s * levels..(s + 1) * levels].copy_from_slice(&means);
                map.perm_ids[s] = id;
                estimate = e;
                changed = true;
            }
            trace.push(estimate);
        }
        if !changed {
            break;
        }
    }
    Ok(PermutationDesign {
        map,
        initial_estimate: initial,
        estimate,
        trace,
        iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterleaverKind {
    Identity,
    Random,
    Greedy,
}

/// Slot `s` (symbol `s / k`, label level `s % k`) carries codeword bit
/// `permutation[s]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "InterleaverFile", into = "InterleaverFile")]
pub struct Interleaver {
    permutation: Vec<usize>,
    kind: InterleaverKind,
    seed: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct InterleaverFile {
    #[serde(rename = "N")]
    n: usize,
    permutation: Vec<usize>,
    kind: InterleaverKind,
    seed: Option<u64>,
}

impl TryFrom<InterleaverFile> for Interleaver {
    type Error = crate::error::Error;

    fn try_from(f: InterleaverFile) -> Result<Self> {
        if f.permutation.len() != f.n {
            return Err(config("interleaver length does not match N"));
        }
        Self::new(f.permutation, f.kind, f.seed)
    }
}

impl From<Interleaver> for InterleaverFile {
    fn from(i: Interleaver) -> Self {
        Self {
            n: i.permutation.len(),
            permutation: i.permutation,
            kind: i.kind,
            seed: i.seed,
        }
    }
}

impl Interleaver {
    pub fn new(permutation: Vec<usize>, kind: InterleaverKind, seed: Option<u64>) -> Result<Self> {
        let mut seen = vec![false; permutation.len()];
        for &p in &permutation {
            if p >= seen.len() || std::mem::replace(&mut seen[p], true) {
                return Err(config("interleaver is not a permutation"));
            }
        }
        Ok(Self { permutation, kind, seed })
    }

    pub fn identity(len: usize) -> Self {
        Self {
            permutation: (0..len).collect(),
            kind: InterleaverKind::Identity,
            seed: None,
        }
    }

    pub fn len(&self) -> usize {
        self.permutation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.permutation.is_empty()
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn kind(&self) -> InterleaverKind {
        self.kind
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }
}

/// Uniformly random interleaver.
pub fn make_random_interleaver(len: usize, seed: u64) -> Interleaver {
    let mut permutation: Vec<usize> = (0..len).collect();
    permutation.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Interleaver {
        permutation,
        kind: InterleaverKind::Random,
        seed: Some(seed),
    }
}

/// A polar code with bit interleaving and marginal demapping.
///
/// When `k ∤ N` the trailing slots of the last symbol carry known zeros.
#[derive(Debug, Clone)]
pub struct BicmSystem<T: Real = f64> {
    code: PolarCode,
    interleaver: Interleaver,
    constellation: Constellation<T>,
}

impl<T: Real> BicmSystem<T> {
    pub fn new(code: PolarCode, constellation: Constellation<T>, interleaver: Interleaver) -> Result<Self> {
        if interleaver.len() != code.len() {
            return Err(config(format!(
                "interleaver of length {} does not fit N = {}",
                interleaver.len(),
                code.len()
            )));
        }
        Ok(Self {
            code,
            interleaver,
            constellation,
        })
    }

    pub fn code(&self) -> &PolarCode {
        &self.code
    }

    pub fn interleaver(&self) -> &Interleaver {
        &self.interleaver
    }

    pub fn constellation(&self) -> &Constellation<T> {
        &self.constellation
    }

    pub fn n_symbols(&self) -> usize {
        self.code.len().div_ceil(self.constellation.bits())
    }

    fn filler_mask(&self, symbol: usize) -> usize {
        let k = self.constellation.bits();
        let used = self.code.len().saturating_sub(symbol * k).min(k);
        ((1 << k) - 1) & !((1 << used) - 1)
    }

    pub fn modulate(&self, info: &[u8]) -> Result<Vec<T>> {
        let cw = self.code.encode(info, self.code.stages())?;
        let k = self.constellation.bits();
        let mut labels = vec![0usize; self.n_symbols()];
        for (s, &p) in self.interleaver.permutation.iter().enumerate() {
            labels[s / k] |= usize::from(cw[p]) << (s % k);
        }
        Ok(labels.into_iter().map(|l| self.constellation.point(l)).collect())
    }

    /// Marginal demapping followed by one SC pass.
    pub fn receive(&self, y: &[T], spec: &AwgnSpec<T>) -> Result<Vec<u8>> {
        if y.len() != self.n_symbols() {
            return Err(argument(format!("expected {} symbols, got {}", self.n_symbols(), y.len())));
        }
        let demap = Demapper::new(&self.constellation, spec);
        let k = self.constellation.bits();
        let mut llrs = vec![T::zero(); self.code.len()];
        for (s, &p) in self.interleaver.permutation.iter().enumerate() {
            let sym = s / k;
            llrs[p] = demap.llr(y[sym], PartialLabel::new(self.filler_mask(sym), 0), s % k);
        }
        Ok(sc_decode(&self.code, &llrs)?.info)
    }

    fn slot_means(&self, table: &CapacityTable) -> Vec<f64> {
        let k = self.constellation.bits();
        (0..self.code.len()).map(|s| table.mean(s % k, self.filler_mask(s / k))).collect()
    }

    /// GA-DE profile over the full codeword.
    pub fn profile(&self, spec: &AwgnSpec<T>) -> Result<ChannelProfile<f64>> {
        let table = CapacityTable::new(&self.constellation, spec)?;
        let slots = self.slot_means(&table);
        let mut leaves = vec![0.0; self.code.len()];
        for (s, &p) in self.interleaver.permutation.iter().enumerate() {
            leaves[p] = slots[s];
        }
        ChannelProfile::new(leaves)
    }

    pub fn estimate(&self, spec: &AwgnSpec<T>) -> Result<f64> {
        let profile = self.profile(spec)?;
        Ok(DeTree::new(&self.code, profile.means(), self.code.stages())?.bler_estimate())
    }
}

/// Outcome of the greedy interleaver sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct InterleaverDesign {
    pub interleaver: Interleaver,
    pub initial_estimate: f64,
    pub estimate: f64,
    /// Estimate after each accepted swap.
    pub trace: Vec<f64>,
    pub swaps: usize,
}

/// Greedy interleaver: starting from a random interleaver, visits every
/// ordered slot pair once and swaps the pair whenever that strictly
/// lowers the GA-DE estimate.
pub fn greedy_interleaver<T: Real>(
    code: &PolarCode,
    c: &Constellation<T>,
    spec: &AwgnSpec<T>,
    seed: u64,
) -> Result<InterleaverDesign> {
    let start = make_random_interleaver(code.len(), seed);
    let system = BicmSystem::new(code.clone(), c.clone(), start)?;
    let table = CapacityTable::new(c, spec)?;
    let slots = system.slot_means(&table);
    let mut perm = system.interleaver.permutation.clone();
    let mut leaves = vec![0.0; code.len()];
    for (s, &p) in perm.iter().enumerate() {
        leaves[p] = slots[s];
    }
    let mut tree = DeTree::capped(code, &leaves, code.stages())?;
    let initial = tree.bler_estimate();
    let mut estimate = initial;
    let mut trace = vec![initial];
    let len = code.len();
    for a in 0..len {
        for b in 0..len {
            if a == b || slots[a] == slots[b] {
                continue;
            }
            let changes = [(perm[a], slots[b]), (perm[b], slots[a])];
            tree.update(&changes);
            let e = tree.bler_estimate();
            if e < estimate {
                tree.commit();
                perm.swap(a, b);
                estimate = e;
                trace.push(e);
            } else {
                tree.rollback();
            }
        }
    }
    Ok(InterleaverDesign {
        interleaver: Interleaver {
            permutation: perm,
            kind: InterleaverKind::Greedy,
            seed: Some(seed),
        },
        initial_estimate: initial,
        estimate,
        swaps: trace.len() - 1,
        trace,
    })
}

/// Number of information bits for a rate on `len` positions.
pub fn info_count(len: usize, rate: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(argument(format!("rate {rate} outside [0, 1]")));
    }
    Ok((rate * len as f64).round() as usize)
}

/// Modulation-specific SBP code: every level carries its own component
/// code (the subcodes of the returned code), designed jointly by GA-DE on
/// the SP chain in its natural order.
pub fn construct_sbp_codes<T: Real>(len: usize, c: &Constellation<T>, spec: &AwgnSpec<T>, total_rate: f64) -> Result<PolarCode> {
    let k_info = info_count(len, total_rate)?;
    let layout = SymbolLayout::for_constellation(len, c.bits())?;
    let pmap = BitPermutationMap::uniform(c.bits(), layout.n_symbols(), 0)?;
    let profile = bpcm_profile(len, c, spec, &pmap)?;
    construct_gade(len, k_info, &profile, bpcm_stages(len, c.bits())?)
}

/// Monte-Carlo settings for the first-order PBP refinement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PbpRefinement {
    pub samples: usize,
    pub seed: u64,
}

/// Modulation-specific PBP code for a bit-interleaved mapping.
///
/// Without refinement the GA-DE starts from the marginal bit channels;
/// with it, the last polar stage is replaced by simulated capacities of
/// each combined pair of bit channels.
pub fn construct_pbp_code<T: Real>(
    c: &Constellation<T>,
    spec: &AwgnSpec<T>,
    total_rate: f64,
    interleaver: &Interleaver,
    refine: Option<PbpRefinement>,
) -> Result<PolarCode> {
    let len = interleaver.len();
    let n = log2_exact(len)?;
    let k_info = info_count(len, total_rate)?;
    let system = BicmSystem::new(PolarCode::new(vec![false; len])?, c.clone(), interleaver.clone())?;
    let Some(r) = refine else {
        return construct_gade(len, k_info, &system.profile(spec)?, n);
    };
    let k = c.bits();
    let mut level_of = vec![0usize; len];
    for (s, &p) in interleaver.permutation.iter().enumerate() {
        level_of[p] = s % k;
    }
    let pairing: Vec<(BitSource, BitSource)> = (0..k)
        .flat_map(|a| (0..k).map(move |b| (BitSource::Level(a), BitSource::Level(b))))
        .collect();
    let pairs = pbp_first_order_capacities(c, spec, &pairing, r.samples, r.seed)?;
    let h = len / 2;
    let mut means = vec![0.0; len];
    for i in 0..h {
        let pp = &pairs[level_of[i] * k + level_of[i + h]];
        means[i] = equivalent_mean_llr(pp.minus.as_f64());
        means[i + h] = equivalent_mean_llr(pp.plus.as_f64());
    }
    construct_gade(len, k_info, &ChannelProfile::new(means)?, n - 1)
}
