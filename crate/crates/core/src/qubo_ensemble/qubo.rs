use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::WeakLearnerPool;
use crate::{Error, Result};

/// Unsigned fixed-point code per weight: `w = w_min + Δ·Σ_b 2^b q_b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeightEncoding {
    pub bits: usize,
    pub w_min: f64,
    pub w_max: f64,
}

impl Default for WeightEncoding {
    fn default() -> Self {
        WeightEncoding {
            bits: 4,
            w_min: -1.0,
            w_max: 1.0,
        }
    }
}

impl WeightEncoding {
    pub fn validate(&self) -> Result<()> {
        if self.bits == 0 || self.bits > 30 {
            return Err(Error::config(format!(
                "bits per weight must be in 1..=30, got {}",
                self.bits
            )));
        }
        if !(self.w_min.is_finite() && self.w_max.is_finite() && self.w_max > self.w_min) {
            return Err(Error::config(format!(
                "weight range must satisfy w_min < w_max, got [{}, {}]",
                self.w_min, self.w_max
            )));
        }
        Ok(())
    }

    pub fn levels(&self) -> u64 {
        1u64 << self.bits
    }

    pub fn step(&self) -> f64 {
        (self.w_max - self.w_min) / (self.levels() - 1) as f64
    }

    pub fn decode_one(&self, bits: &[u8]) -> f64 {
        let code: u64 = bits
            .iter()
            .enumerate()
            .map(|(b, &q)| u64::from(q) << b)
            .sum();
        self.w_min + self.step() * code as f64
    }

    /// Bits of the grid value nearest `clamp(w)`.
    pub fn encode_one(&self, w: f64) -> Vec<u8> {
        let w = w.clamp(self.w_min, self.w_max);
        let code = ((w - self.w_min) / self.step()).round() as u64;
        let code = code.min(self.levels() - 1);
        (0..self.bits).map(|b| ((code >> b) & 1) as u8).collect()
    }
}

/// Weight vector from a bitstring laid out learner-major (`i·B + b`).
pub fn decode(q: &[u8], enc: &WeightEncoding) -> Vec<f64> {
    q.chunks(enc.bits).map(|c| enc.decode_one(c)).collect()
}

pub fn encode(weights: &[f64], enc: &WeightEncoding) -> Vec<u8> {
    weights.iter().flat_map(|&w| enc.encode_one(w)).collect()
}

/// `E(q) = Σ_i U_ii q_i + Σ_{i<j} U_ij q_i q_j + offset` with `U` stored as a
/// packed upper triangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuboProblem {
    pub n: usize,
    upper: Vec<f64>,
    pub offset: f64,
}

impl QuboProblem {
    pub fn zeros(n: usize) -> Self {
        QuboProblem {
            n,
            upper: vec![0.0; n * (n + 1) / 2],
            offset: 0.0,
        }
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        i * self.n - i * (i + 1) / 2 + j
    }

    /// Upper-triangle coefficient; symmetric in `(i, j)`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.upper[self.slot(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.upper[s] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.upper[s] += v;
    }

    /// Energy including the constant offset.
    pub fn energy(&self, q: &[u8]) -> f64 {
        debug_assert_eq!(q.len(), self.n);
        let mut e = self.offset;
        for i in 0..self.n {
            if q[i] == 0 {
                continue;
            }
            let row = self.slot(i, i);
            e += self.upper[row];
            for j in i + 1..self.n {
                if q[j] != 0 {
                    e += self.upper[row + (j - i)];
                }
            }
        }
        e
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.upper.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Symmetric dense coupling matrix (zero diagonal) and the diagonal.
    pub(crate) fn dense(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let mut j = vec![0.0; n * n];
        let mut diag = vec![0.0; n];
        for a in 0..n {
            diag[a] = self.get(a, a);
            for b in a + 1..n {
                let v = self.get(a, b);
                j[a * n + b] = v;
                j[b * n + a] = v;
            }
        }
        (j, diag)
    }

    /// Plain text: `# n <n> offset <c>` then one `row col value` line per
    /// non-zero upper-triangle entry.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::io("<qubo text>", e);
        writeln!(w, "# n {} offset {}", self.n, self.offset).map_err(io)?;
        for i in 0..self.n {
            for j in i..self.n {
                let v = self.get(i, j);
                if v != 0.0 {
                    writeln!(w, "{i} {j} {v}").map_err(io)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let bad = |m: String| Error::Format(format!("qubo text: {m}"));
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| bad("empty".into()))?
            .map_err(|e| Error::io("<qubo text>", e))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        let (n, offset) = match parts.as_slice() {
            ["#", "n", n, "offset", c] => (
                n.parse::<usize>().map_err(|e| bad(e.to_string()))?,
                c.parse::<f64>().map_err(|e| bad(e.to_string()))?,
            ),
            _ => return Err(bad(format!("bad header \"{header}\""))),
        };
        let mut p = QuboProblem::zeros(n);
        p.offset = offset;
        for line in lines {
            let line = line.map_err(|e| Error::io("<qubo text>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            let [i, j, v] = f.as_slice() else {
                return Err(bad(format!("bad line \"{line}\"")));
            };
            let i: usize = i.parse().map_err(|_| bad(line.clone()))?;
            let j: usize = j.parse().map_err(|_| bad(line.clone()))?;
            let v: f64 = v.parse().map_err(|_| bad(line.clone()))?;
            if i > j || j >= n {
                return Err(bad(format!("entry ({i}, {j}) outside the upper triangle")));
            }
            p.set(i, j, v);
        }
        Ok(p)
    }
}

/// Exact expansion of `Σ_n (y_n − Σ_i w_i(q) h_i(x_n))² + λ·Σ q` into a QUBO.
///
/// `outputs[i][n]` is learner i on sample n.
pub fn build_qubo_from_outputs(
    outputs: &[Vec<f64>],
    y: &[f64],
    enc: &WeightEncoding,
    lambda: f64,
) -> Result<QuboProblem> {
    enc.validate()?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidValue {
            what: "lambda".into(),
            value: lambda,
        });
    }
    let k = outputs.len();
    if k == 0 {
        return Err(Error::config("qubo needs at least one learner"));
    }
    if outputs.iter().any(|h| h.len() != y.len()) {
        return Err(Error::LengthMismatch("learner outputs vs targets".into()));
    }
    let bits = enc.bits;
    let delta = enc.step();

    let mut gram = vec![0.0; k * k];
    for i in 0..k {
        for j in i..k {
            let g: f64 = outputs[i].iter().zip(&outputs[j]).map(|(a, b)| a * b).sum();
            gram[i * k + j] = g;
            gram[j * k + i] = g;
        }
    }
    let b: Vec<f64> = outputs
        .iter()
        .map(|h| h.iter().zip(y).map(|(hn, yn)| hn * yn).sum())
        .collect();
    // Residual after the all-w_min ensemble: r_n = y_n − w_min Σ_i h_i(x_n).
    let beta: Vec<f64> = (0..k)
        .map(|i| b[i] - enc.w_min * gram[i * k..(i + 1) * k].iter().sum::<f64>())
        .collect();
    let offset: f64 = (0..y.len())
        .map(|n| {
            let hsum: f64 = outputs.iter().map(|h| h[n]).sum();
            (y[n] - enc.w_min * hsum).powi(2)
        })
        .sum();

    let coef: Vec<f64> = (0..bits).map(|b| (1u64 << b) as f64).collect();
    let mut p = QuboProblem::zeros(k * bits);
    p.offset = offset;
    for i in 0..k {
        for bi in 0..bits {
            let u = i * bits + bi;
            let cu = coef[bi];
            let diag =
                delta * delta * cu * cu * gram[i * k + i] - 2.0 * delta * cu * beta[i] + lambda;
            p.set(u, u, diag);
            for j in i..k {
                let start = if j == i { bi + 1 } else { 0 };
                for bj in start..bits {
                    let v = j * bits + bj;
                    p.set(u, v, 2.0 * delta * delta * cu * coef[bj] * gram[i * k + j]);
                }
            }
        }
    }
    Ok(p)
}

/// QUBO for choosing the pool's weights on the rows `x` with targets `y`.
pub fn build_qubo(
    pool: &WeakLearnerPool,
    x: &[Vec<f64>],
    y: &[f64],
    enc: &WeightEncoding,
    lambda: f64,
) -> Result<QuboProblem> {
    build_qubo_from_outputs(&pool.output_matrix(x), y, enc, lambda)
}

/// Direct evaluation of the weight-selection loss (reference for tests and
/// reports).
pub fn ensemble_loss(
    outputs: &[Vec<f64>],
    y: &[f64],
    q: &[u8],
    enc: &WeightEncoding,
    lambda: f64,
) -> f64 {
    let w = decode(q, enc);
    let sq: f64 = (0..y.len())
        .map(|n| {
            let pred: f64 = w.iter().zip(outputs).map(|(wi, h)| wi * h[n]).sum();
            (y[n] - pred).powi(2)
        })
        .sum();
    sq + lambda * q.iter().map(|&b| f64::from(b)).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decode_extremes() {
        let enc = WeightEncoding {
            bits: 4,
            w_min: 0.0,
            w_max: 1.0,
        };
        assert_eq!(enc.decode_one(&[1, 1, 1, 1]), 1.0);
        assert_eq!(enc.decode_one(&[0, 0, 0, 0]), 0.0);
        assert_eq!(WeightEncoding::default().decode_one(&[0, 0, 0, 0]), -1.0);
    }

    #[test]
    fn invalid_encodings() {
        assert!(WeightEncoding {
            bits: 0,
            w_min: 0.0,
            w_max: 1.0
        }
        .validate()
        .is_err());
        assert!(WeightEncoding {
            bits: 3,
            w_min: 1.0,
            w_max: 1.0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn tiny_instance_matches_loss_everywhere() {
        let outputs = vec![
            vec![0.3, -1.2, 0.8, 2.0, 0.1],
            vec![1.1, 0.4, -0.6, 0.9, -0.3],
        ];
        let y = vec![0.5, -0.7, 0.2, 2.4, 0.0];
        let enc = WeightEncoding {
            bits: 2,
            w_min: -1.0,
            w_max: 1.0,
        };
        for lambda in [0.0, 0.37] {
            let p = build_qubo_from_outputs(&outputs, &y, &enc, lambda).unwrap();
            for m in 0u32..16 {
                let q: Vec<u8> = (0..4).map(|b| ((m >> b) & 1) as u8).collect();
                let l = ensemble_loss(&outputs, &y, &q, &enc, lambda);
                assert!((p.energy(&q) - l).abs() <= 1e-9 * l.abs().max(1.0));
            }
        }
    }

    #[test]
    fn text_round_trip() {
        let mut p = QuboProblem::zeros(3);
        p.set(0, 0, -2.5);
        p.set(0, 2, 1.0 / 3.0);
        p.set(1, 2, 4.0);
        p.offset = 0.125;
        let mut buf = Vec::new();
        p.write_text(&mut buf).unwrap();
        let back = QuboProblem::read_text(buf.as_slice()).unwrap();
        assert_eq!(back, p);
        assert_eq!(p.get(2, 0), p.get(0, 2));
        assert!(QuboProblem::read_text("garbage".as_bytes()).is_err());
        assert!(QuboProblem::read_text("# n 2 offset 0\n1 0 3\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn encode_decode_within_half_step(
            w in -3.0f64..3.0, bits in 1usize..8, lo in -2.0f64..0.0, span in 0.1f64..4.0,
        ) {
            let enc = WeightEncoding { bits, w_min: lo, w_max: lo + span };
            let got = enc.decode_one(&enc.encode_one(w));
            let clamped = w.clamp(enc.w_min, enc.w_max);
            prop_assert!((got - clamped).abs() <= enc.step() / 2.0 + 1e-12);
            prop_assert!(got >= enc.w_min - 1e-12 && got <= enc.w_max + 1e-12);
        }
    }
}
