use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::QuboProblem;
use crate::{Error, Result};

/// Geometric single-flip annealing schedule.
///
/// Temperatures are relative to the problem's largest absolute coefficient,
/// so the same schedule behaves alike on QUBOs of any scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnealSchedule {
    pub sweeps: usize,
    pub t_init: f64,
    pub t_final: f64,
    pub restarts: usize,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        AnnealSchedule {
            sweeps: 2000,
            t_init: 5.0,
            t_final: 0.01,
            restarts: 10,
        }
    }
}

impl AnnealSchedule {
    fn validate(&self) -> Result<()> {
        if self.sweeps == 0 || self.restarts == 0 {
            return Err(Error::config(
                "annealing needs at least one sweep and one restart",
            ));
        }
        if !(self.t_final > 0.0 && self.t_init > self.t_final && self.t_init.is_finite()) {
            return Err(Error::config(format!(
                "annealing temperatures must satisfy t_init > t_final > 0, got {} and {}",
                self.t_init, self.t_final
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub bits: Vec<u8>,
    /// Energy including the offset.
    pub energy: f64,
    /// Best energy seen after each restart, in restart order.
    pub best_by_restart: Vec<f64>,
}

/// Best of `restarts` independent anneals. Restart `r` draws from stream `r`
/// of a generator seeded with `seed`; ties go to the lowest restart index.
pub fn solve_sa(p: &QuboProblem, schedule: AnnealSchedule, seed: u64) -> Result<Solution> {
    schedule.validate()?;
    if p.n == 0 {
        return Ok(Solution {
            bits: vec![],
            energy: p.offset,
            best_by_restart: vec![p.offset; schedule.restarts],
        });
    }
    let (coupling, diag) = p.dense();
    let scale = match p.max_abs_coefficient() {
        s if s > 0.0 => s,
        _ => 1.0,
    };
    let runs: Vec<(Vec<u8>, f64)> = (0..schedule.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let bits = anneal_once(p.n, &coupling, &diag, schedule, scale, &mut rng);
            let e = p.energy(&bits);
            (bits, e)
        })
        .collect();

    let mut best_idx = 0;
    let mut best_by_restart = Vec::with_capacity(runs.len());
    for (r, (_, e)) in runs.iter().enumerate() {
        if *e < runs[best_idx].1 {
            best_idx = r;
        }
        best_by_restart.push(runs[best_idx].1);
    }
    let (bits, energy) = runs[best_idx].clone();
    Ok(Solution {
        bits,
        energy,
        best_by_restart,
    })
}

fn anneal_once(
    n: usize,
    coupling: &[f64],
    diag: &[f64],
    s: AnnealSchedule,
    scale: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<u8> {
    let mut q: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1u8)).collect();
    // field[i] = Σ_{j≠i} U_ij q_j
    let mut field = vec![0.0; n];
    for i in 0..n {
        if q[i] == 1 {
            for j in 0..n {
                field[j] += coupling[i * n + j];
            }
        }
    }
    let mut energy = 0.0;
    for i in 0..n {
        if q[i] == 1 {
            energy += diag[i] + 0.5 * field[i];
        }
    }
    let mut best = q.clone();
    let mut best_energy = energy;

    let ratio = if s.sweeps > 1 {
        (s.t_final / s.t_init).powf(1.0 / (s.sweeps - 1) as f64)
    } else {
        1.0
    };
    let mut t = s.t_init * scale;
    for _ in 0..s.sweeps {
        for i in 0..n {
            let sign = if q[i] == 0 { 1.0 } else { -1.0 };
            let de = sign * (diag[i] + field[i]);
            if de <= 0.0 || rng.gen::<f64>() < (-de / t).exp() {
                q[i] ^= 1;
                energy += de;
                let row = &coupling[i * n..(i + 1) * n];
                for (f, c) in field.iter_mut().zip(row) {
                    *f += sign * c;
                }
                if energy < best_energy {
                    best_energy = energy;
                    best.copy_from_slice(&q);
                }
            }
        }
        t *= ratio;
    }
    best
}

pub const MAX_EXACT_VARIABLES: usize = 24;

/// Exhaustive minimum; ties go to the lexicographically smallest bitstring
/// (bit 0 most significant).
pub fn solve_exact(p: &QuboProblem) -> Result<Solution> {
    let n = p.n;
    if n > MAX_EXACT_VARIABLES {
        return Err(Error::TooLarge(format!(
            "exact QUBO solve supports at most {MAX_EXACT_VARIABLES} variables, got {n}"
        )));
    }
    if n == 0 {
        return Ok(Solution {
            bits: vec![],
            energy: p.offset,
            best_by_restart: vec![p.offset],
        });
    }
    let (coupling, diag) = p.dense();
    // Variable i lives at mask bit n-1-i so numeric order is lexicographic.
    let var_of_bit = |b: u32| n - 1 - b as usize;
    let tol = 1e-9 * p.max_abs_coefficient().max(1e-300) * n as f64;

    let mut q = vec![0u8; n];
    let mut field = vec![0.0; n];
    let mut energy = 0.0;
    let mut mask: u32 = 0;
    let mut best_mask = 0u32;
    let mut best_energy = 0.0;
    for step in 1u64..(1u64 << n) {
        let b = step.trailing_zeros();
        let i = var_of_bit(b);
        let sign = if q[i] == 0 { 1.0 } else { -1.0 };
        energy += sign * (diag[i] + field[i]);
        q[i] ^= 1;
        mask ^= 1 << b;
        let row = &coupling[i * n..(i + 1) * n];
        for (f, c) in field.iter_mut().zip(row) {
            *f += sign * c;
        }
        if energy < best_energy - tol {
            best_energy = energy;
            best_mask = mask;
        } else if energy <= best_energy + tol {
            // Near tie: settle on exact energies.
            let cand = mask_bits(mask, n);
            let best = mask_bits(best_mask, n);
            let (ec, eb) = (p.energy(&cand), p.energy(&best));
            if ec < eb || (ec == eb && mask < best_mask) {
                best_mask = mask;
            }
            best_energy = best_energy.min(energy);
        }
    }
    let bits = mask_bits(best_mask, n);
    let energy = p.energy(&bits);
    Ok(Solution {
        bits,
        energy,
        best_by_restart: vec![energy],
    })
}

fn mask_bits(mask: u32, n: usize) -> Vec<u8> {
    (0..n).map(|i| ((mask >> (n - 1 - i)) & 1) as u8).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(p: &QuboProblem) -> (Vec<u8>, f64) {
        let n = p.n;
        let mut best = (vec![0; n], f64::INFINITY);
        // Lexicographic enumeration: bit 0 most significant.
        for m in 0u32..(1 << n) {
            let q = mask_bits(m, n);
            let e = p.energy(&q);
            if e < best.1 {
                best = (q, e);
            }
        }
        best
    }

    fn random_problem(n: usize, seed: u64) -> QuboProblem {
        let mut rng = crate::seeded_rng(seed);
        let mut p = QuboProblem::zeros(n);
        for i in 0..n {
            for j in i..n {
                p.set(i, j, rng.gen_range(-1.0..1.0));
            }
        }
        p.offset = 3.0;
        p
    }

    #[test]
    fn exact_small_examples() {
        let mut p = QuboProblem::zeros(1);
        p.set(0, 0, -2.0);
        p.offset = 0.5;
        let s = solve_exact(&p).unwrap();
        assert_eq!(s.bits, vec![1]);
        assert_eq!(s.energy, -1.5);

        let mut p = QuboProblem::zeros(2);
        p.set(0, 0, 1.0);
        p.set(1, 1, 1.0);
        p.set(0, 1, -3.0);
        let s = solve_exact(&p).unwrap();
        assert_eq!(s.bits, vec![1, 1]);
        assert_eq!(s.energy, -1.0);

        let mut p = QuboProblem::zeros(5);
        for i in 0..5 {
            p.set(i, i, 1.0);
        }
        assert_eq!(solve_exact(&p).unwrap().bits, vec![0; 5]);
    }

    #[test]
    fn exact_ties_are_lexicographic() {
        let p = QuboProblem::zeros(6);
        let s = solve_exact(&p).unwrap();
        assert_eq!(s.bits, vec![0; 6]);
        // Two optima: 01 and 10 -> 01 wins.
        let mut p = QuboProblem::zeros(2);
        p.set(0, 0, -1.0);
        p.set(1, 1, -1.0);
        p.set(0, 1, 5.0);
        assert_eq!(solve_exact(&p).unwrap().bits, vec![0, 1]);
    }

    #[test]
    fn exact_matches_enumeration() {
        for seed in 0..10 {
            let p = random_problem(10, seed);
            let (bits, e) = brute(&p);
            let s = solve_exact(&p).unwrap();
            assert_eq!(s.bits, bits);
            assert_eq!(s.energy, e);
        }
    }

    #[test]
    fn exact_rejects_large() {
        assert!(matches!(
            solve_exact(&QuboProblem::zeros(25)),
            Err(Error::TooLarge(_))
        ));
    }

    #[test]
    fn flat_landscape_energy_is_offset() {
        let mut p = QuboProblem::zeros(8);
        p.offset = 2.5;
        let s = solve_sa(
            &p,
            AnnealSchedule {
                sweeps: 10,
                ..Default::default()
            },
            1,
        )
        .unwrap();
        assert_eq!(s.energy, 2.5);
    }

    #[test]
    fn annealing_is_deterministic_and_monotone() {
        let p = random_problem(40, 3);
        let sched = AnnealSchedule {
            sweeps: 200,
            ..Default::default()
        };
        let a = solve_sa(&p, sched, 17).unwrap();
        let b = solve_sa(&p, sched, 17).unwrap();
        assert_eq!(a, b);
        assert!(a.best_by_restart.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(*a.best_by_restart.last().unwrap(), a.energy);
    }

    #[test]
    fn annealing_finds_small_optima() {
        for seed in 0..5 {
            let p = random_problem(14, seed);
            let exact = solve_exact(&p).unwrap();
            let hits = (0..50)
                .filter(|&s| {
                    solve_sa(&p, AnnealSchedule::default(), s).unwrap().energy
                        <= exact.energy + 1e-12
                })
                .count();
            assert!(hits >= 45, "seed {seed}: {hits}/50");
        }
    }

    #[test]
    fn schedule_validation() {
        let p = QuboProblem::zeros(2);
        let bad = AnnealSchedule {
            t_init: 0.01,
            t_final: 1.0,
            ..Default::default()
        };
        assert!(solve_sa(&p, bad, 0).is_err());
        let bad = AnnealSchedule {
            restarts: 0,
            ..Default::default()
        };
        assert!(solve_sa(&p, bad, 0).is_err());
    }
}
