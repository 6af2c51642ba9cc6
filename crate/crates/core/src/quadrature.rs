//! Gauss–Hermite quadrature for expectations over a standard normal.

use crate::scalar::Real;

/// Nodes and weights for `∫ exp(-t²) f(t) dt ≈ Σ wᵢ f(tᵢ)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Builds an `n`-point rule by Newton iteration on the orthonormal
    /// Hermite recurrence, using the usual asymptotic starting guesses.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "at least one node");
        let pim4 = std::f64::consts::PI.powf(-0.25);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        let nf = n as f64;
        let mut z = 0.0f64;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = 2.0 / (pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `(z, p)` pairs such that `E[f(Z)] ≈ Σ p·f(z)` for `Z ~ N(0, 1)`.
    pub fn normal_points<T: Real>(&self) -> Vec<(T, T)> {
        let scale = std::f64::consts::PI.sqrt().recip();
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| (T::lit(t * std::f64::consts::SQRT_2), T::lit(w * scale)))
            .collect()
    }

    /// Expectation of `f(Z)` for a standard normal `Z`.
    pub fn expect<T: Real>(&self, mut f: impl FnMut(T) -> T) -> T {
        self.normal_points::<T>()
            .into_iter()
            .map(|(z, p)| p * f(z))
            .sum()
    }
}

/// Node count used by the capacity calculators.
pub const CAPACITY_NODES: usize = 96;
