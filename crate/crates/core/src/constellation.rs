//! Real ASK constellations and their bit labelings.
//!
//! Labels are packed into an integer with bit level `i` at bit position
//! `i`, so `b_0` is the least significant bit and the first level of an
//! SBP decoding chain.

use serde::{Deserialize, Serialize};

use crate::error::{argument, config, Error, Result};
use crate::scalar::Real;

/// Labeling rule mapping `k`-bit tuples to amplitude indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Labeling {
    /// Binary-reflected Gray code over amplitude indices.
    Gray,
    /// Natural binary index (set partitioning for ASK).
    SetPartition,
}

impl std::str::FromStr for Labeling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gray" => Ok(Labeling::Gray),
            "sp" | "set_partition" | "set-partition" => Ok(Labeling::SetPartition),
            other => Err(argument(format!("unknown labeling `{other}`"))),
        }
    }
}

impl std::fmt::Display for Labeling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Labeling::Gray => "gray",
            Labeling::SetPartition => "set_partition",
        })
    }
}

/// A `2^k`-ary ASK constellation with unit average energy.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation<T: Real = f64> {
    bits: usize,
    labeling: Labeling,
    /// Amplitudes, most negative first.
    amplitudes: Vec<T>,
    /// `label_of[index]`: packed label carried by amplitude `index`.
    label_of: Vec<usize>,
    /// `index_of[label]`: amplitude index for a packed label.
    index_of: Vec<usize>,
}

impl<T: Real> Constellation<T> {
    /// Equally spaced odd-integer levels `±1, ±3, …` normalized to unit
    /// energy, labeled with `labeling`. Supports `k ∈ {1, 2, 3, 4}`.
    pub fn ask(bits: usize, labeling: Labeling) -> Result<Self> {
        if !(1..=4).contains(&bits) {
            return Err(config(format!("unsupported ASK order: {bits} bits/symbol")));
        }
        let m = 1usize << bits;
        // E[x²] for levels ±1, ±3, …, ±(M−1) is (M² − 1)/3.
        let scale = (((m * m - 1) as f64) / 3.0).sqrt().recip();
        let amplitudes = (0..m)
            .map(|i| T::lit((2.0 * i as f64 - (m as f64 - 1.0)) * scale))
            .collect();
        let label_of: Vec<usize> = (0..m)
            .map(|i| match labeling {
                Labeling::SetPartition => i,
                Labeling::Gray => i ^ (i >> 1),
            })
            .collect();
        let mut index_of = vec![0; m];
        for (i, &l) in label_of.iter().enumerate() {
            index_of[l] = i;
        }
        Ok(Self {
            bits,
            labeling,
            amplitudes,
            label_of,
            index_of,
        })
    }

    /// Bits per symbol `k`.
    pub fn bits(&self) -> usize {
        self.bits
    }

    /// Number of points `2^k`.
    pub fn size(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn labeling(&self) -> Labeling {
        self.labeling
    }

    pub fn amplitudes(&self) -> &[T] {
        &self.amplitudes
    }

    /// Packed label of amplitude `index`.
    pub fn label_of(&self, index: usize) -> usize {
        self.label_of[index]
    }

    /// Labels per amplitude index, most negative amplitude first.
    pub fn label_table(&self) -> &[usize] {
        &self.label_of
    }

    /// Amplitude carrying a packed label.
    #[inline]
    pub fn point(&self, label: usize) -> T {
        self.amplitudes[self.index_of[label]]
    }

    /// Maps a `k`-bit tuple (`bits[i]` is level `i`) to its amplitude.
    pub fn map_bits(&self, bits: &[u8]) -> Result<T> {
        if bits.len() != self.bits {
            return Err(argument(format!(
                "expected {} bits, got {}",
                self.bits,
                bits.len()
            )));
        }
        Ok(self.point(pack(bits)))
    }

    /// Hard decision: bits of the amplitude nearest to `y`.
    pub fn demap_point(&self, y: T) -> Vec<u8> {
        let mut best = 0;
        let mut best_d = T::infinity();
        for (i, &a) in self.amplitudes.iter().enumerate() {
            let d = (y - a).abs();
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        unpack(self.label_of[best], self.bits)
    }

    /// Average energy `E[x²]` over uniform inputs.
    pub fn average_energy(&self) -> T {
        let n = T::lit(self.size() as f64);
        self.amplitudes.iter().map(|&a| a * a).sum::<T>() / n
    }
}

/// Packs a bit tuple with `bits[i]` at position `i`.
pub fn pack(bits: &[u8]) -> usize {
    bits.iter()
        .enumerate()
        .fold(0, |acc, (i, &b)| acc | (usize::from(b & 1) << i))
}

/// Inverse of [`pack`].
pub fn unpack(label: usize, bits: usize) -> Vec<u8> {
    (0..bits).map(|i| ((label >> i) & 1) as u8).collect()
}

#[derive(Serialize, Deserialize)]
struct ConstellationFile {
    k: usize,
    labeling_kind: Labeling,
    amplitudes: Vec<f64>,
    label_table: Vec<usize>,
}

impl<T: Real> Serialize for Constellation<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ConstellationFile {
            k: self.bits,
            labeling_kind: self.labeling,
            amplitudes: self.amplitudes.iter().map(|a| a.as_f64()).collect(),
            label_table: self.label_of.clone(),
        }
        .serialize(s)
    }
}

impl<'de, T: Real> Deserialize<'de> for Constellation<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let file = ConstellationFile::deserialize(d)?;
        let c = Constellation::<T>::ask(file.k, file.labeling_kind).map_err(D::Error::custom)?;
        if file.label_table != c.label_of {
            return Err(D::Error::custom("label table does not match labeling kind"));
        }
        let consistent = file.amplitudes.len() == c.size()
            && file
                .amplitudes
                .iter()
                .zip(&c.amplitudes)
                .all(|(a, b)| (a - b.as_f64()).abs() < 1e-9);
        if !consistent {
            return Err(D::Error::custom("amplitudes are not the unit-energy ASK levels"));
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all(bits: usize) -> impl Iterator<Item = Vec<u8>> {
        (0..1usize << bits).map(move |l| unpack(l, bits))
    }

    #[test]
    fn bpsk_levels() {
        let c = Constellation::<f64>::ask(1, Labeling::Gray).unwrap();
        assert_eq!(c.amplitudes(), &[-1.0, 1.0]);
        assert_eq!(c.map_bits(&[0]).unwrap(), -1.0);
        assert_eq!(c.map_bits(&[1]).unwrap(), 1.0);
    }

    #[test]
    fn four_ask_levels_and_sp_labels() {
        let c = Constellation::<f64>::ask(2, Labeling::SetPartition).unwrap();
        let s5 = 5f64.sqrt();
        for (a, e) in c.amplitudes().iter().zip([-3.0, -1.0, 1.0, 3.0]) {
            assert!((a - e / s5).abs() < 1e-15);
        }
        assert!((c.map_bits(&[0, 0]).unwrap() + 3.0 / s5).abs() < 1e-15);
        assert!((c.map_bits(&[1, 1]).unwrap() - 3.0 / s5).abs() < 1e-15);
    }

    #[test]
    fn eight_ask_energy_by_direct_sum() {
        let c = Constellation::<f64>::ask(3, Labeling::Gray).unwrap();
        let direct: f64 = [-7.0f64, -5.0, -3.0, -1.0, 1.0, 3.0, 5.0, 7.0]
            .iter()
            .map(|v| v * v / 21.0)
            .sum::<f64>()
            / 8.0;
        assert!((direct - 1.0).abs() < 1e-15);
        assert!((c.amplitudes()[7] - 7.0 / 21f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn unit_energy_and_bijection_everywhere() {
        for bits in 1..=4 {
            for lab in [Labeling::Gray, Labeling::SetPartition] {
                let c = Constellation::<f64>::ask(bits, lab).unwrap();
                assert!((c.average_energy() - 1.0).abs() < 1e-12);
                let mut seen = vec![false; c.size()];
                for b in all(bits) {
                    let x = c.map_bits(&b).unwrap();
                    let idx = c.amplitudes().iter().position(|&a| a == x).unwrap();
                    assert!(!seen[idx]);
                    seen[idx] = true;
                    assert_eq!(c.demap_point(x), b);
                }
                assert!(seen.iter().all(|&s| s));
            }
        }
    }

    #[test]
    fn gray_neighbours_differ_in_one_bit() {
        for bits in 1..=4 {
            let c = Constellation::<f64>::ask(bits, Labeling::Gray).unwrap();
            for i in 1..c.size() {
                assert_eq!((c.label_of(i) ^ c.label_of(i - 1)).count_ones(), 1);
            }
        }
    }

    #[test]
    fn sp_subsets_double_distance() {
        for bits in 2..=4 {
            let c = Constellation::<f64>::ask(bits, Labeling::SetPartition).unwrap();
            let min_dist = |mask: usize, value: usize| {
                let pts: Vec<f64> = (0..c.size())
                    .filter(|&i| c.label_of(i) & mask == value)
                    .map(|i| c.amplitudes()[i])
                    .collect();
                pts.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
            };
            let base = min_dist(0, 0);
            for fixed in 1..bits {
                let mask = (1 << fixed) - 1;
                for value in 0..=mask {
                    let d = min_dist(mask, value);
                    assert!((d - base * (1 << fixed) as f64).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            Constellation::<f64>::ask(5, Labeling::Gray),
            Err(Error::Config(_))
        ));
        let c = Constellation::<f64>::ask(2, Labeling::Gray).unwrap();
        assert!(matches!(c.map_bits(&[0]), Err(Error::Argument(_))));
    }

    #[test]
    fn json_round_trip() {
        let c = Constellation::<f64>::ask(3, Labeling::SetPartition).unwrap();
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.contains("\"labeling_kind\":\"set_partition\""));
        let back: Constellation<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn single_precision_constellation() {
        let c = Constellation::<f32>::ask(4, Labeling::Gray).unwrap();
        assert!((c.average_energy() - 1.0).abs() < 1e-6);
    }
}
