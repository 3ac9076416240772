use super::*;
use crate::belief::Belief;
use crate::chefworld::{build_chefworld, salad, soup, standard_ingredients, two_recipe_domain, ChefWorld};
use crate::game::{Outcome, TurnStructure, GAME_FORMAT_VERSION};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_game(seed: u64, ns: usize, nh: usize, nr: usize, nt: usize, horizon: usize) -> GameSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut transition = vec![vec![vec![Vec::new(); nr]; nh]; ns];
    let mut reward = vec![vec![vec![vec![0.0; nt]; nr]; nh]; ns];
    for s in 0..ns {
        for a_h in 0..nh {
            for a_r in 0..nr {
                let to = rng.gen_range(0..ns);
                transition[s][a_h][a_r] = vec![Outcome { to, p: 1.0 }];
                for v in reward[s][a_h][a_r].iter_mut() {
                    *v = rng.gen_range(0.0..1.0);
                }
            }
        }
    }
    let mut prior = vec![vec![0.0; nt]; ns];
    for v in prior[0].iter_mut() {
        *v = 1.0 / nt as f64;
    }
    GameSpec {
        format_version: GAME_FORMAT_VERSION,
        name: format!("random-{seed}"),
        states: (0..ns).map(|i| format!("s{i}")).collect(),
        human_actions: (0..nh).map(|i| format!("h{i}")).collect(),
        robot_actions: (0..nr).map(|i| format!("r{i}")).collect(),
        objectives: (0..nt).map(|i| format!("t{i}")).collect(),
        transition,
        reward,
        prior,
        discount: 0.9,
        horizon,
        legal_human: None,
        legal_robot: None,
        turn_structure: TurnStructure::RobotRevealsFirst,
    }
}

fn fig1() -> (ChefWorld, BeliefGrid) {
    let w = ChefWorld::build(two_recipe_domain()).unwrap();
    let grid = BeliefGrid::new(2, 10).unwrap();
    (w, grid)
}

fn reward_of(spec: &GameSpec, s: usize, a_h: usize, a_r: usize, theta: usize) -> f64 {
    spec.rewards(s, a_h, a_r)[theta]
}

#[test]
fn last_turn_is_the_immediate_reward() {
    let spec = random_game(3, 3, 2, 2, 2, 3);
    let grid = BeliefGrid::new(2, 4).unwrap();
    let (q, _) = solve_cirl(&spec, &grid, RationalityModel::boltzmann(2.0), SolverSettings::default()).unwrap();
    let t = spec.horizon - 1;
    for s in 0..3 {
        for g in 0..grid.len() {
            for a_h in 0..2 {
                for a_r in 0..2 {
                    for th in 0..2 {
                        assert_eq!(q.get(t, s, g, a_h, a_r, th), reward_of(&spec, s, a_h, a_r, th));
                    }
                }
            }
        }
    }
}

#[test]
fn null_game_has_zero_q() {
    let mut spec = random_game(4, 3, 2, 2, 2, 3);
    for v in spec.reward.iter_mut().flatten().flatten().flatten() {
        *v = 0.0;
    }
    let grid = BeliefGrid::new(2, 4).unwrap();
    let (q, report) = solve_cirl(&spec, &grid, RationalityModel::boltzmann(1.0), SolverSettings::default()).unwrap();
    assert!(q.tables.iter().flatten().all(|&v| v == 0.0));
    assert!(report.converged());
}

#[test]
fn zero_discount_gives_reward_everywhere() {
    let mut spec = random_game(5, 3, 2, 3, 2, 3);
    spec.discount = 0.0;
    let grid = BeliefGrid::new(2, 5).unwrap();
    let (q, _) = solve_cirl(&spec, &grid, RationalityModel::boltzmann(3.0), SolverSettings::default()).unwrap();
    for t in 0..3 {
        for s in 0..3 {
            for g in 0..grid.len() {
                for a_h in 0..2 {
                    for a_r in 0..3 {
                        for th in 0..2 {
                            assert_eq!(q.get(t, s, g, a_h, a_r, th), reward_of(&spec, s, a_h, a_r, th));
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn single_objective_matches_full_information() {
    let spec = build_chefworld(standard_ingredients(), vec![soup()], 4, 1.0).unwrap();
    let grid = BeliefGrid::new(1, 1).unwrap();
    for model in [RationalityModel::boltzmann(2.0), RationalityModel::rational()] {
        let (q, _) = solve_cirl(&spec, &grid, model, SolverSettings::default()).unwrap();
        let full = solve_full_info(&spec, 0, model).unwrap();
        for t in 0..spec.horizon {
            for s in 0..spec.num_states() {
                let legal = (spec.legal_actions(s, Actor::Human), spec.legal_actions(s, Actor::Robot));
                for &a_h in &legal.0 {
                    for &a_r in &legal.1 {
                        let (a, b) = (q.get(t, s, 0, a_h, a_r, 0), full.get(t, s, a_h, a_r));
                        assert!((a - b).abs() < 1e-12, "t{t} s{s} {a} vs {b}");
                    }
                }
            }
        }
    }
}

#[test]
fn full_information_horizon_one_is_reward() {
    let spec = random_game(6, 2, 2, 2, 3, 1);
    for theta in 0..3 {
        let full = solve_full_info(&spec, theta, RationalityModel::boltzmann(1.0)).unwrap();
        for s in 0..2 {
            for a_h in 0..2 {
                for a_r in 0..2 {
                    assert_eq!(full.get(0, s, a_h, a_r), reward_of(&spec, s, a_h, a_r, theta));
                }
            }
        }
    }
}

#[test]
fn rational_expert_completes_any_single_recipe() {
    let spec = build_chefworld(standard_ingredients(), vec![soup(), salad()], 4, 1.0).unwrap();
    let full = FullInfoSet::solve(&spec, RationalityModel::rational()).unwrap();
    let s0 = 0;
    for theta in 0..2 {
        let v = full.value(&spec, s0, theta).unwrap();
        assert!((v - 1.0).abs() < 1e-6, "objective {theta}: {v}");
    }
}

#[test]
fn out_of_range_objective_is_rejected() {
    let spec = random_game(7, 2, 2, 2, 2, 2);
    assert!(matches!(solve_full_info(&spec, 2, RationalityModel::boltzmann(1.0)), Err(CirlError::Usage(_))));
}

#[test]
fn best_response_single_legal_action() {
    let values = [0.3, 0.9];
    let cell = CellView {
        values: &values,
        policy: &values,
        num_robot_actions: 2,
        num_objectives: 1,
        legal_human: &[0],
        legal_robot: &[1],
    };
    assert_eq!(robot_best_response(&cell, &[1.0], &RationalityModel::boltzmann(1.0)).unwrap(), 1);
}

#[test]
fn best_response_takes_a_dominant_action() {
    // [a_h][a_r][theta], a_r = 2 beats the others for every human action and objective
    let mut values = vec![0.0; 2 * 3 * 2];
    for a_h in 0..2 {
        for th in 0..2 {
            values[(a_h * 3) * 2 + th] = 0.2;
            values[(a_h * 3 + 1) * 2 + th] = 0.1 * (th as f64);
            values[(a_h * 3 + 2) * 2 + th] = 0.5;
        }
    }
    let cell = CellView {
        values: &values,
        policy: &values,
        num_robot_actions: 3,
        num_objectives: 2,
        legal_human: &[0, 1],
        legal_robot: &[0, 1, 2],
    };
    for b in [[1.0, 0.0], [0.5, 0.5], [0.1, 0.9]] {
        assert_eq!(robot_best_response(&cell, &b, &RationalityModel::boltzmann(4.0)).unwrap(), 2);
    }
}

#[test]
fn best_response_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let model = RationalityModel::boltzmann(1.5);
    for _ in 0..200 {
        let values: Vec<f64> = (0..8).map(|_| rng.gen_range(0.0..1.0)).collect();
        let p: f64 = rng.gen_range(0.0..1.0);
        let b = [p, 1.0 - p];
        let cell = CellView {
            values: &values,
            policy: &values,
            num_robot_actions: 2,
            num_objectives: 2,
            legal_human: &[0, 1],
            legal_robot: &[0, 1],
        };
        let score = |a_r: usize| -> f64 {
            (0..2)
                .map(|th| {
                    let q: Vec<f64> = (0..2).map(|a_h| values[(a_h * 2 + a_r) * 2 + th]).collect();
                    let e: Vec<f64> = q.iter().map(|v| (1.5 * v).exp()).collect();
                    let z: f64 = e.iter().sum();
                    b[th] * (e[0] * q[0] + e[1] * q[1]) / z
                })
                .sum()
        };
        let expect = if score(1) > score(0) { 1 } else { 0 };
        assert_eq!(robot_best_response(&cell, &b, &model).unwrap(), expect);
    }
}

#[test]
fn chefworld_values_are_probabilities() {
    let (w, grid) = fig1();
    for model in [RationalityModel::boltzmann(1.0), RationalityModel::rational()] {
        let (q, _) = solve_cirl(&w.spec, &grid, model, SolverSettings::default()).unwrap();
        assert!(q.tables.iter().flatten().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v)));
    }
}

/// Rebuilds the backup context of turn `t` from a solved table.
fn context_at<'a>(
    spec: &'a GameSpec,
    grid: &'a BeliefGrid,
    q: &QFunction,
    t: usize,
    settings: SolverSettings,
) -> (Option<Vec<f64>>, BackupContext<'a>) {
    let next = (t + 1 < spec.horizon).then(|| {
        turn_values(spec, grid, &q.model, |s, g| {
            let c = q.cell(t + 1, s, g);
            (c, c)
        })
        .unwrap()
    });
    let ctx = BackupContext { spec, grid, model: q.model, settings, next_values: None, expert: None };
    (next, ctx)
}

#[test]
fn converged_cells_are_fixed_points() {
    let (w, grid) = fig1();
    let spec = &w.spec;
    let settings = SolverSettings::default();
    let (q, report) = solve_cirl(spec, &grid, RationalityModel::boltzmann(2.5), settings).unwrap();
    assert!(report.converged());
    for t in 0..spec.horizon {
        let (next, ctx) = context_at(spec, &grid, &q, t, settings);
        let ctx = BackupContext { next_values: next.as_deref(), ..ctx };
        let mut scratch = Scratch::new(spec.num_human_actions(), 2);
        for s in 0..spec.num_states() {
            let (lh, lr) = ctx.legal(s);
            for g in 0..grid.len() {
                let cell = q.cell(t, s, g);
                let mut image = vec![0.0; cell.len()];
                ctx.apply(s, &grid.weights(g), &lh, &lr, cell, &mut scratch, &mut image).unwrap();
                let moved = max_abs_diff(&image, cell);
                assert!(moved < 2.0 * settings.tol, "t{t} s{s} g{g} moved {moved}");
            }
        }
    }
}

#[test]
fn equilibrium_is_self_consistent() {
    // The belief transition at a solved cell uses the Boltzmann policy of
    // that same cell, and the values follow from the projected posteriors.
    let (w, grid) = fig1();
    let spec = &w.spec;
    let model = RationalityModel::boltzmann(5.0);
    let (q, _) = solve_cirl(spec, &grid, model, SolverSettings::default()).unwrap();
    let t = 0;
    let (next, _) = context_at(spec, &grid, &q, t, SolverSettings::default());
    let next = next.unwrap();
    let s = w.initial_state();
    let legal = (spec.legal_actions(s, Actor::Human), spec.legal_actions(s, Actor::Robot));
    for g in 0..grid.len() {
        let b = grid.weights(g);
        let view = q.view(&legal, t, s, g);
        for &a_r in &legal.1 {
            let lik: Vec<Vec<f64>> = (0..2).map(|th| view.human_policy(a_r, th, &model).unwrap()).collect();
            for (j, &a_h) in legal.0.iter().enumerate() {
                let post =
                    crate::belief::bayes_update(&Belief::new(b.clone()).unwrap(), &[lik[0][j], lik[1][j]]).unwrap();
                let g2 = grid.project(post.as_slice());
                for th in 0..2 {
                    let cont: f64 = spec
                        .successors(s, a_h, a_r)
                        .iter()
                        .map(|o| o.p * next[(o.to * grid.len() + g2) * 2 + th])
                        .sum();
                    let expect = reward_of(spec, s, a_h, a_r, th) + spec.discount * cont;
                    assert!((q.get(t, s, g, a_h, a_r, th) - expect).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn parallel_and_single_threaded_solves_agree() {
    let (w, grid) = fig1();
    let model = RationalityModel::boltzmann(2.5);
    let (par, _) = solve_cirl(&w.spec, &grid, model, SolverSettings::default()).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let (seq, _) = pool.install(|| solve_cirl(&w.spec, &grid, model, SolverSettings::default())).unwrap();
    assert_eq!(par, seq);
}

#[test]
fn every_warm_start_solves() {
    let (w, grid) = fig1();
    for warm_start in
        [WarmStart::PreviousTurn, WarmStart::Reward, WarmStart::Uninformed, WarmStart::Expert, WarmStart::Best]
    {
        let settings = SolverSettings { warm_start, ..Default::default() };
        let (q, _) = solve_cirl(&w.spec, &grid, RationalityModel::boltzmann(2.5), settings).unwrap();
        assert!(q.is_finite());
    }
}

#[test]
fn iteration_cap_is_reported() {
    let (w, grid) = fig1();
    let settings = SolverSettings { max_iter: 1, warm_start: WarmStart::Reward, ..Default::default() };
    let (_, report) = solve_cirl(&w.spec, &grid, RationalityModel::boltzmann(5.0), settings).unwrap();
    assert!(report.non_converged_total > 0);
    assert!(!report.non_converged_cells.is_empty());
    assert!(report.max_residual() >= settings.tol);
}

#[test]
fn bad_inputs_are_rejected() {
    let (w, grid) = fig1();
    let model = RationalityModel::boltzmann(1.0);
    let bad = SolverSettings { damping: 0.0, ..Default::default() };
    assert!(matches!(solve_cirl(&w.spec, &grid, model, bad), Err(CirlError::Usage(_))));
    let wrong_grid = BeliefGrid::new(3, 4).unwrap();
    assert!(matches!(solve_cirl(&w.spec, &wrong_grid, model, SolverSettings::default()), Err(CirlError::Usage(_))));
    let mut broken = w.spec.clone();
    broken.discount = 2.0;
    assert!(matches!(solve_cirl(&broken, &grid, model, SolverSettings::default()), Err(CirlError::InvalidGame(_))));
}

#[test]
fn literal_single_objective_matches_full_information() {
    let spec = build_chefworld(standard_ingredients(), vec![salad()], 4, 1.0).unwrap();
    let grid = BeliefGrid::new(1, 1).unwrap();
    let model = RationalityModel::boltzmann(2.0);
    let full = FullInfoSet::solve(&spec, model).unwrap();
    let lit = literal_robot_policy(&spec, &grid, &full, model).unwrap();
    let s0 = 0;
    let (_, v) = lit.value_at(&spec, &grid, 0, s0, 0).unwrap();
    assert!((v[0] - full.value(&spec, s0, 0).unwrap()).abs() < 1e-12);
}

#[test]
fn literal_likelihood_ignores_the_belief() {
    let (w, grid) = fig1();
    let model = RationalityModel::boltzmann(2.5);
    let full = FullInfoSet::solve(&w.spec, model).unwrap();
    let lit = literal_robot_policy(&w.spec, &grid, &full, model).unwrap();
    let s = w.initial_state();
    let legal = (w.spec.legal_actions(s, Actor::Human), w.spec.legal_actions(s, Actor::Robot));
    let first = lit.view(&legal, 0, s, 0).human_policy(0, 0, &model).unwrap();
    for g in 1..grid.len() {
        assert_eq!(lit.view(&legal, 0, s, g).human_policy(0, 0, &model).unwrap(), first);
    }
}

#[test]
fn literal_rejects_mismatched_expert_model() {
    let (w, grid) = fig1();
    let full = FullInfoSet::solve(&w.spec, RationalityModel::boltzmann(1.0)).unwrap();
    let r = literal_robot_policy(&w.spec, &grid, &full, RationalityModel::boltzmann(2.0));
    assert!(matches!(r, Err(CirlError::Usage(_))));
}
