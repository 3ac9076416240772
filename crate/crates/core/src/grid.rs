//! Regular lattice discretization of the belief simplex.
//!
//! Grid points are the beliefs whose entries are multiples of `1/m`, stored as
//! integer count vectors summing to `m` and ordered lexicographically.

use serde::{Deserialize, Serialize};

use crate::belief::Belief;
use crate::error::{CirlError, Result};

const REMAINDER_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefGrid {
    dims: usize,
    resolution: u32,
    points: Vec<Vec<u32>>,
    /// `compositions[p][r]`: number of ways to write `r` as an ordered sum of `p` non-negative parts.
    compositions: Vec<Vec<usize>>,
}

impl BeliefGrid {
    pub fn new(dims: usize, resolution: u32) -> Result<Self> {
        if dims == 0 || resolution == 0 {
            return Err(CirlError::Usage(format!(
                "grid needs dims >= 1 and resolution >= 1 (got {dims}, {resolution})"
            )));
        }
        let m = resolution as usize;
        let mut compositions = vec![vec![0usize; m + 1]; dims + 1];
        compositions[0][0] = 1;
        for p in 1..=dims {
            for r in 0..=m {
                compositions[p][r] = (0..=r).map(|v| compositions[p - 1][r - v]).sum();
            }
        }
        let mut points = Vec::with_capacity(compositions[dims][m]);
        let mut current = vec![0u32; dims];
        enumerate(&mut current, 0, resolution, &mut points);
        Ok(BeliefGrid { dims, resolution, points, compositions })
    }

    /// Default resolution: 20 for two objectives, 10 otherwise.
    pub fn default_resolution(dims: usize) -> u32 {
        if dims <= 2 {
            20
        } else {
            10
        }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn counts(&self, g: usize) -> &[u32] {
        &self.points[g]
    }

    pub fn point(&self, g: usize) -> Belief {
        Belief::new(self.weights(g)).expect("lattice points are beliefs")
    }

    pub fn weights(&self, g: usize) -> Vec<f64> {
        let m = self.resolution as f64;
        self.points[g].iter().map(|&k| k as f64 / m).collect()
    }

    /// Index of a count vector, or `None` if it is not on the lattice.
    pub fn index_of(&self, counts: &[u32]) -> Option<usize> {
        if counts.len() != self.dims || counts.iter().map(|&k| k as u64).sum::<u64>() != self.resolution as u64 {
            return None;
        }
        let mut rank = 0;
        let mut remaining = self.resolution as usize;
        for (i, &k) in counts.iter().enumerate().take(self.dims - 1) {
            let parts_left = self.dims - i - 1;
            for v in 0..k as usize {
                rank += self.compositions[parts_left][remaining - v];
            }
            remaining -= k as usize;
        }
        Some(rank)
    }

    /// Nearest lattice point in L1 distance.
    ///
    /// Floors the scaled belief and hands the leftover units to the largest
    /// remainders. On equal remainders the later coordinate is rounded up,
    /// which selects the lexicographically smallest (lowest-index) minimizer.
    pub fn project(&self, b: &[f64]) -> usize {
        debug_assert_eq!(b.len(), self.dims);
        let m = self.resolution as f64;
        let mut counts = [0u32; 16];
        let mut rems = [0f64; 16];
        let counts = if self.dims <= 16 { &mut counts[..self.dims] } else { return self.project_slow(b) };
        let rems = &mut rems[..self.dims];
        let mut used = 0u32;
        for i in 0..self.dims {
            let x = (b[i] * m).max(0.0);
            let f = x.floor();
            counts[i] = f as u32;
            rems[i] = x - f;
            used += counts[i];
        }
        while used > self.resolution {
            // only reachable through rounding noise on unnormalized input
            let i = (0..self.dims).filter(|&i| counts[i] > 0).min_by(|&a, &c| rems[a].total_cmp(&rems[c])).unwrap();
            counts[i] -= 1;
            used -= 1;
        }
        for _ in used..self.resolution {
            let mut best = usize::MAX;
            for i in 0..self.dims {
                if rems[i] < -0.5 {
                    continue;
                }
                if best == usize::MAX || rems[i] >= rems[best] - REMAINDER_TOL {
                    best = i;
                }
            }
            counts[best] += 1;
            rems[best] = -1.0;
        }
        self.index_of(counts).expect("projection lands on the lattice")
    }

    fn project_slow(&self, b: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for g in 0..self.len() {
            let d = self.l1_distance(g, b);
            if d < best_d - REMAINDER_TOL {
                best = g;
                best_d = d;
            }
        }
        best
    }

    pub fn l1_distance(&self, g: usize, b: &[f64]) -> f64 {
        let m = self.resolution as f64;
        self.points[g].iter().zip(b).map(|(&k, &x)| (k as f64 / m - x).abs()).sum()
    }

    /// Index of the vertex putting all mass on objective `i`.
    pub fn vertex(&self, i: usize) -> usize {
        let mut c = vec![0u32; self.dims];
        c[i] = self.resolution;
        self.index_of(&c).expect("vertices are lattice points")
    }
}

fn enumerate(current: &mut Vec<u32>, i: usize, remaining: u32, out: &mut Vec<Vec<u32>>) {
    if i == current.len() - 1 {
        current[i] = remaining;
        out.push(current.clone());
        return;
    }
    for v in 0..=remaining {
        current[i] = v;
        enumerate(current, i + 1, remaining - v, out);
    }
}
