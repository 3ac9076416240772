//! Seeded micro games and a brute-force fixed-point oracle that shares no
//! code with the solver beyond the game and grid types.

#![allow(dead_code)]

use cirl_core::game::{GameSpec, Outcome, TurnStructure, GAME_FORMAT_VERSION};
use cirl_core::{BeliefGrid, RationalityModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MICRO_SEEDS: std::ops::Range<u64> = 0..20;
pub const MICRO_RESOLUTION: u32 = 4;

/// Two states, two actions per player, two objectives, horizon two.
pub fn micro_game(seed: u64) -> (GameSpec, RationalityModel) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ns, nh, nr, nt) = (2, 2, 2, 2);
    let mut transition = vec![vec![vec![Vec::new(); nr]; nh]; ns];
    let mut reward = vec![vec![vec![vec![0.0; nt]; nr]; nh]; ns];
    for s in 0..ns {
        for a_h in 0..nh {
            for a_r in 0..nr {
                let p: f64 = rng.gen_range(0.05..0.95);
                transition[s][a_h][a_r] = vec![Outcome { to: 0, p }, Outcome { to: 1, p: 1.0 - p }];
                for v in reward[s][a_h][a_r].iter_mut() {
                    *v = rng.gen_range(0.0..1.0);
                }
            }
        }
    }
    let p0: f64 = rng.gen_range(0.1..0.9);
    let spec = GameSpec {
        format_version: GAME_FORMAT_VERSION,
        name: format!("micro-{seed}"),
        states: vec!["s0".into(), "s1".into()],
        human_actions: vec!["h0".into(), "h1".into()],
        robot_actions: vec!["r0".into(), "r1".into()],
        objectives: vec!["t0".into(), "t1".into()],
        transition,
        reward,
        prior: vec![vec![p0, 1.0 - p0], vec![0.0, 0.0]],
        discount: rng.gen_range(0.5..1.0),
        horizon: 2,
        legal_human: None,
        legal_robot: None,
        turn_structure: TurnStructure::RobotRevealsFirst,
    };
    let beta = [0.5, 2.0, 8.0][(seed % 3) as usize];
    (spec, RationalityModel::boltzmann(beta))
}

fn softmax(beta: f64, q: &[f64]) -> Vec<f64> {
    let m = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = q.iter().map(|v| (beta * (v - m)).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

fn nearest(grid: &BeliefGrid, b: &[f64]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for g in 0..grid.len() {
        let d: f64 = grid.weights(g).iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
        if d < best.0 - 1e-12 {
            best = (d, g);
        }
    }
    best.1
}

/// Every exact fixed point of one (cell, robot action) block as
/// (belief-weighted value, `[a_h][theta]` values). Found by enumerating each
/// assignment of successor grid points to human actions and keeping the
/// self-consistent ones.
pub fn block_fixed_points(
    spec: &GameSpec,
    grid: &BeliefGrid,
    beta: f64,
    next_v: Option<&[f64]>,
    s: usize,
    g: usize,
    a_r: usize,
) -> Vec<(f64, Vec<f64>)> {
    let (nh, nt, ng) = (2usize, 2usize, grid.len());
    let b = grid.weights(g);
    let q_for = |a_h: usize, gn: usize, theta: usize| -> f64 {
        let cont: f64 = match next_v {
            None => 0.0,
            Some(v) => spec.transition[s][a_h][a_r].iter().map(|o| o.p * v[(o.to * ng + gn) * nt + theta]).sum(),
        };
        spec.reward[s][a_h][a_r][theta] + spec.discount * cont
    };
    let mut found = Vec::new();
    for assign in 0..ng * ng {
        let gn = [assign / ng, assign % ng];
        let q: Vec<Vec<f64>> = (0..nt).map(|th| (0..nh).map(|a_h| q_for(a_h, gn[a_h], th)).collect()).collect();
        let pol: Vec<Vec<f64>> = q.iter().map(|row| softmax(beta, row)).collect();
        let consistent = (0..nh).all(|a_h| {
            let joint: Vec<f64> = (0..nt).map(|th| b[th] * pol[th][a_h]).collect();
            let z: f64 = joint.iter().sum();
            let post: Vec<f64> = joint.iter().map(|x| x / z).collect();
            nearest(grid, &post) == gn[a_h]
        });
        if !consistent {
            continue;
        }
        let score: f64 = (0..nt).map(|th| b[th] * (0..nh).map(|a_h| pol[th][a_h] * q[th][a_h]).sum::<f64>()).sum();
        let mut flat = vec![0.0; nh * nt];
        for a_h in 0..nh {
            for th in 0..nt {
                flat[a_h * nt + th] = q[th][a_h];
            }
        }
        if !found.iter().any(|(_, f): &(f64, Vec<f64>)| f.iter().zip(&flat).all(|(x, y)| (x - y).abs() < 1e-12)) {
            found.push((score, flat));
        }
    }
    found
}

/// Oracle values `[s][g][theta]` of a solved turn table: the robot best
/// responds to the human's softmax policy read from the table itself.
pub fn turn_values(grid: &BeliefGrid, beta: f64, table: &[f64]) -> Vec<f64> {
    let (ns, nh, nr, nt, ng) = (2usize, 2usize, 2usize, 2usize, grid.len());
    let cell = nh * nr * nt;
    let mut v = vec![0.0; ns * ng * nt];
    for s in 0..ns {
        for g in 0..ng {
            let b = grid.weights(g);
            let c = &table[(s * ng + g) * cell..(s * ng + g + 1) * cell];
            let per = |a_r: usize| -> Vec<f64> {
                (0..nt)
                    .map(|th| {
                        let row: Vec<f64> = (0..nh).map(|a_h| c[(a_h * nr + a_r) * nt + th]).collect();
                        softmax(beta, &row).iter().zip(&row).map(|(p, q)| p * q).sum()
                    })
                    .collect()
            };
            let mut pick = (f64::NEG_INFINITY, 0);
            for a_r in 0..nr {
                let score: f64 = per(a_r).iter().zip(&b).map(|(x, w)| x * w).sum();
                if score > pick.0 {
                    pick = (score, a_r);
                }
            }
            v[(s * ng + g) * nt..(s * ng + g + 1) * nt].copy_from_slice(&per(pick.1));
        }
    }
    v
}

#[derive(Debug, Default, Clone, Copy)]
pub struct OracleComparison {
    /// Largest distance from a solver block to its nearest exact fixed point.
    pub gap: f64,
    pub blocks: usize,
    /// Blocks where the solver found the highest-valued fixed point.
    pub best_selected: usize,
    pub non_converged: usize,
}

/// Checks every (turn, state, grid point, robot action) block of the solver
/// against the oracle's exact fixed points, with the continuation built from
/// the solver's own next-turn table.
pub fn compare_micro(seed: u64) -> OracleComparison {
    let (spec, model) = micro_game(seed);
    let RationalityModel::Boltzmann { beta } = model else { unreachable!() };
    let grid = BeliefGrid::new(2, MICRO_RESOLUTION).unwrap();
    let (q, report) = cirl_core::solver::solve_cirl(&spec, &grid, model, Default::default()).unwrap();
    let (nh, nr, nt, ng) = (2usize, 2usize, 2usize, grid.len());
    let cell = nh * nr * nt;
    let mut out = OracleComparison { non_converged: report.non_converged_total, ..Default::default() };
    for t in 0..spec.horizon {
        let next = (t + 1 < spec.horizon).then(|| turn_values(&grid, beta, &q.tables[t + 1]));
        for s in 0..2 {
            for g in 0..ng {
                for a_r in 0..nr {
                    let solver: Vec<f64> = (0..nh)
                        .flat_map(|a_h| (0..nt).map(move |th| (a_h, th)))
                        .map(|(a_h, th)| q.tables[t][(s * ng + g) * cell + (a_h * nr + a_r) * nt + th])
                        .collect();
                    let fps = block_fixed_points(&spec, &grid, beta, next.as_deref(), s, g, a_r);
                    let dist = |f: &[f64]| f.iter().zip(&solver).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                    let (near, nearest_score) = fps
                        .iter()
                        .map(|(sc, f)| (dist(f), *sc))
                        .fold((f64::INFINITY, f64::NAN), |acc, x| if x.0 < acc.0 { x } else { acc });
                    let top = fps.iter().map(|f| f.0).fold(f64::NEG_INFINITY, f64::max);
                    out.blocks += 1;
                    out.gap = out.gap.max(near);
                    if nearest_score >= top - 1e-9 {
                        out.best_selected += 1;
                    }
                }
            }
        }
    }
    out
}
