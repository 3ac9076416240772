use cirl_core::chefworld::{build_chefworld, soup, standard_ingredients, two_recipe_domain, ChefWorld};
use cirl_core::evaluator::*;
use cirl_core::game::{Actor, Outcome};
use cirl_core::solver::{literal_robot_policy, solve_cirl, FullInfoSet, SolverSettings};
use cirl_core::{BeliefGrid, CirlError, GameSpec, RationalityModel};

fn solved(spec: &GameSpec, model: RationalityModel, m: u32) -> Solutions {
    let grid = BeliefGrid::new(spec.num_objectives(), m).unwrap();
    let (q, _) = solve_cirl(spec, &grid, model, SolverSettings::default()).unwrap();
    let full = FullInfoSet::solve(spec, model).unwrap();
    let literal = literal_robot_policy(spec, &grid, &full, model).unwrap();
    Solutions { grid, cirl: Some(q), literal: Some(literal) }
}

fn kitchen() -> ChefWorld {
    ChefWorld::build(two_recipe_domain()).unwrap()
}

#[test]
fn same_seed_same_trace() {
    let w = kitchen();
    let model = RationalityModel::boltzmann(1.0);
    let sol = solved(&w.spec, model, 10);
    for condition in [Condition::cirl(model, "k"), Condition::irl(model, "k")] {
        let a = simulate_episode(&condition, &sol, &w.spec, 0, 42).unwrap();
        let b = simulate_episode(&condition, &sol, &w.spec, 0, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_jsonl(&w.spec, "h"), b.to_jsonl(&w.spec, "h"));
    }
    let traces: Vec<_> =
        (0..20).map(|seed| simulate_episode(&Condition::cirl(model, "k"), &sol, &w.spec, 0, seed).unwrap()).collect();
    assert!(traces.iter().any(|t| t.turns != traces[0].turns), "seeds should matter at beta = 1");
}

#[test]
fn enumeration_accounts_for_all_mass() {
    let w = kitchen();
    for model in [RationalityModel::boltzmann(1.0), RationalityModel::boltzmann(5.0), RationalityModel::rational()] {
        let sol = solved(&w.spec, model, 10);
        for condition in [Condition::cirl(model, "k"), Condition::irl(model, "k")] {
            let exact = expected_value_exact(&condition, &sol, &w.spec).unwrap();
            assert!((exact.leaf_mass + exact.pruned_mass - 1.0).abs() < 1e-9, "{exact:?}");
            assert!(exact.pruned_mass < 1e-6);
            assert!((0.0..=1.0 + 1e-12).contains(&exact.total));
        }
    }
}

#[test]
fn monte_carlo_agrees_with_enumeration() {
    let w = kitchen();
    let model = RationalityModel::boltzmann(2.5);
    let sol = solved(&w.spec, model, 10);
    for condition in [Condition::cirl(model, "k"), Condition::irl(model, "k")] {
        let exact = expected_value_exact(&condition, &sol, &w.spec).unwrap();
        let mc = expected_value_monte_carlo(&condition, &sol, &w.spec, 20_000, 7).unwrap();
        assert!(
            (mc.mean - exact.total).abs() <= 3.0 * mc.std_error,
            "{}: mc {} +- {} exact {}",
            condition.label(),
            mc.mean,
            mc.std_error,
            exact.total
        );
    }
}

#[test]
fn successful_traces_end_on_the_true_recipe() {
    let w = kitchen();
    let model = RationalityModel::boltzmann(2.5);
    let sol = solved(&w.spec, model, 10);
    let mut seen = 0;
    for seed in 0..100 {
        for theta in 0..2 {
            let trace = simulate_episode(&Condition::cirl(model, "k"), &sol, &w.spec, theta, seed).unwrap();
            if !trace.success {
                continue;
            }
            seen += 1;
            let last = trace.turns.last().unwrap();
            assert_eq!(trace.final_state, w.served_state());
            assert_eq!(last.rewards[theta], 1.0);
            // replay the joint action by hand on the factored state
            let before = w.decode(last.state);
            let mut levels = before.levels.clone();
            for name in [&w.spec.human_actions[last.human_action], &w.spec.robot_actions[last.robot_action]] {
                if name == "wait" {
                    continue;
                }
                let (verb, ingredient) = name.split_once(' ').unwrap();
                let i = w.domain.ingredients.iter().position(|g| g.name == ingredient).unwrap();
                let step = w.domain.ingredients[i].steps.iter().position(|s| s.verb == verb).unwrap();
                levels[i] = levels[i].max(step + 1);
            }
            assert!(w.matches(theta, &levels), "{levels:?}");
        }
    }
    assert!(seen > 50);
}

#[test]
fn rational_play_never_hits_an_inconsistent_observation() {
    let w = kitchen();
    let model = RationalityModel::rational();
    let sol = solved(&w.spec, model, 10);
    for seed in 0..200 {
        for condition in [Condition::cirl(model, "k"), Condition::irl(model, "k")] {
            simulate_episode(&condition, &sol, &w.spec, (seed % 2) as usize, seed).unwrap();
        }
    }
}

#[test]
fn unreachable_recipe_is_worth_nothing() {
    let spec = build_chefworld(standard_ingredients(), vec![soup()], 2, 1.0).unwrap();
    let model = RationalityModel::rational();
    let sol = solved(&spec, model, 1);
    let v = expected_value_exact(&Condition::cirl(model, "k"), &sol, &spec).unwrap();
    assert_eq!(v.total, 0.0);
}

#[test]
fn scripted_human_is_followed_and_checked() {
    let w = kitchen();
    let model = RationalityModel::boltzmann(5.0);
    let sol = solved(&w.spec, model, 10);
    let wait = w.spec.action_index(Actor::Human, "wait").unwrap();
    let trace =
        run_episode(&Condition::irl(model, "k"), &sol, &w.spec, 0, 1, &HumanDriver::Scripted(vec![wait; 4])).unwrap();
    assert!(trace.turns.iter().all(|r| r.human_action == wait));

    // slicing twice is illegal once the bread is sliced
    let slice = w.spec.action_index(Actor::Human, "slice bread").unwrap();
    let r = run_episode(&Condition::irl(model, "k"), &sol, &w.spec, 0, 1, &HumanDriver::Scripted(vec![slice, slice]));
    assert!(matches!(r, Err(CirlError::Usage(_))), "{r:?}");
}

#[test]
fn missing_tables_are_reported() {
    let w = kitchen();
    let model = RationalityModel::boltzmann(1.0);
    let mut sol = solved(&w.spec, model, 10);
    sol.literal = None;
    let r = simulate_episode(&Condition::irl(model, "k"), &sol, &w.spec, 0, 0);
    assert!(matches!(r, Err(CirlError::MissingSolution(_))));
    let r = simulate_episode(&Condition::cirl(RationalityModel::boltzmann(2.0), "k"), &sol, &w.spec, 0, 0);
    assert!(matches!(r, Err(CirlError::MissingSolution(_))));
}

#[test]
fn exact_value_needs_deterministic_dynamics() {
    let w = kitchen();
    let model = RationalityModel::boltzmann(1.0);
    let sol = solved(&w.spec, model, 4);
    let mut spec = w.spec.clone();
    let s = w.initial_state();
    spec.transition[s][0][0] = vec![Outcome { to: s, p: 0.5 }, Outcome { to: w.served_state(), p: 0.5 }];
    let r = expected_value_exact(&Condition::cirl(model, "k"), &sol, &spec);
    assert!(matches!(r, Err(CirlError::StochasticTransition)));
}

#[test]
fn trace_file_has_header_turns_and_summary() {
    let w = kitchen();
    let model = RationalityModel::boltzmann(2.5);
    let sol = solved(&w.spec, model, 10);
    let trace = simulate_episode(&Condition::cirl(model, "k"), &sol, &w.spec, 1, 3).unwrap();
    let text = trace.to_jsonl(&w.spec, "abc");
    let lines: Vec<TraceLine> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), trace.turns.len() + 2);
    assert!(matches!(lines[0], TraceLine::Header { .. }));
    assert!(matches!(lines.last(), Some(TraceLine::Summary { .. })));
}

#[test]
fn pairwise_sum_matches_naive_sum() {
    let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
    assert!((pairwise_sum(&xs) - xs.iter().sum::<f64>()).abs() < 1e-10);
    assert_eq!(pairwise_sum(&[]), 0.0);
}
