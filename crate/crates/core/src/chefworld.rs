//! ChefWorld: a household cooking domain where the human has a recipe in mind
//! and the robot has to work out which one.
//!
//! Ingredients move forward through ordered preparation states; each step is
//! permitted to the human, the robot, or both. A recipe is a joint target
//! state. As soon as the kitchen matches any recipe the meal is served: the
//! game moves to an absorbing `served` state and the reward is 1 for every
//! objective whose recipe was matched, 0 for the others.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{CirlError, Result};
use crate::game::{Actor, GameSpec, Outcome, TurnStructure, GAME_FORMAT_VERSION};

pub const DOMAIN_FORMAT_VERSION: u32 = 1;
pub const WAIT: &str = "wait";
pub const SERVED: &str = "served";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Permission {
    Human,
    Robot,
    Both,
}

impl Permission {
    pub fn allows(self, actor: Actor) -> bool {
        matches!(
            (self, actor),
            (Permission::Both, _) | (Permission::Human, Actor::Human) | (Permission::Robot, Actor::Robot)
        )
    }
}

/// One preparation step, moving an ingredient from state `i` to `i + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrepStep {
    pub verb: String,
    pub actors: Permission,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ingredient {
    pub name: String,
    pub states: Vec<String>,
    /// `steps[i]` moves the ingredient from `states[i]` to `states[i + 1]`.
    pub steps: Vec<PrepStep>,
}

impl Ingredient {
    pub fn new(name: &str, states: &[&str], steps: &[(&str, Permission)]) -> Self {
        Ingredient {
            name: name.into(),
            states: states.iter().map(|s| s.to_string()).collect(),
            steps: steps.iter().map(|(verb, actors)| PrepStep { verb: verb.to_string(), actors: *actors }).collect(),
        }
    }

    fn state_index(&self, state: &str) -> Option<usize> {
        self.states.iter().position(|s| s == state)
    }
}

/// Target preparation state per ingredient. Ingredients left out are unconstrained.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recipe {
    pub name: String,
    pub targets: BTreeMap<String, String>,
}

impl Recipe {
    pub fn new(name: &str, targets: &[(&str, &str)]) -> Self {
        Recipe { name: name.into(), targets: targets.iter().map(|(i, s)| (i.to_string(), s.to_string())).collect() }
    }
}

/// Factored domain file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChefWorldDomain {
    pub format_version: u32,
    #[serde(default)]
    pub name: String,
    pub ingredients: Vec<Ingredient>,
    pub recipes: Vec<Recipe>,
    pub horizon: usize,
    pub discount: f64,
    /// Starting preparation state per ingredient; defaults to each ingredient's first state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<BTreeMap<String, String>>,
    /// Prior weight per recipe; defaults to uniform.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<BTreeMap<String, f64>>,
}

impl ChefWorldDomain {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CirlError::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("domain serializes")
    }
}

/// Decoded ChefWorld state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KitchenState {
    /// Preparation-state index per ingredient.
    pub levels: Vec<usize>,
    pub served: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Effect {
    ingredient: usize,
    from: usize,
}

/// A compiled ChefWorld instance: the flat game plus the factored bookkeeping
/// needed to decode states and actions.
#[derive(Debug, Clone)]
pub struct ChefWorld {
    pub domain: ChefWorldDomain,
    pub spec: GameSpec,
    radices: Vec<usize>,
    human_effects: Vec<Option<Effect>>,
    robot_effects: Vec<Option<Effect>>,
    /// Required level per ingredient for each recipe (`None` = any).
    targets: Vec<Vec<Option<usize>>>,
}

/// The three ingredients with their actor restrictions.
pub fn standard_ingredients() -> Vec<Ingredient> {
    use Permission::*;
    vec![
        Ingredient::new("spinach", &["absent", "chopped"], &[("chop", Both)]),
        Ingredient::new("tomatoes", &["absent", "chopped", "pureed"], &[("chop", Both), ("puree", Robot)]),
        Ingredient::new("bread", &["absent", "sliced", "toasted"], &[("slice", Both), ("toast", Robot)]),
    ]
}

pub fn soup() -> Recipe {
    Recipe::new("soup", &[("spinach", "absent"), ("tomatoes", "pureed"), ("bread", "toasted")])
}

pub fn salad() -> Recipe {
    Recipe::new("salad", &[("spinach", "chopped"), ("tomatoes", "chopped"), ("bread", "toasted")])
}

pub fn toast_plate() -> Recipe {
    Recipe::new("toast-plate", &[("spinach", "absent"), ("tomatoes", "absent"), ("bread", "toasted")])
}

pub fn tomato_salad() -> Recipe {
    Recipe::new("tomato-salad", &[("spinach", "chopped"), ("tomatoes", "pureed"), ("bread", "sliced")])
}

/// Soup-versus-salad scenario: the human wants soup but the robot starts out
/// leaning towards salad.
pub fn two_recipe_domain() -> ChefWorldDomain {
    ChefWorldDomain {
        format_version: DOMAIN_FORMAT_VERSION,
        name: "chefworld-2".into(),
        ingredients: standard_ingredients(),
        recipes: vec![soup(), salad()],
        horizon: 4,
        discount: 1.0,
        initial: None,
        prior: Some(BTreeMap::from([("soup".into(), 0.3), ("salad".into(), 0.7)])),
    }
}

/// Four-recipe benchmark with a uniform prior.
pub fn four_recipe_domain() -> ChefWorldDomain {
    ChefWorldDomain {
        format_version: DOMAIN_FORMAT_VERSION,
        name: "chefworld-4".into(),
        ingredients: standard_ingredients(),
        recipes: vec![soup(), salad(), toast_plate(), tomato_salad()],
        horizon: 10,
        discount: 1.0,
        initial: None,
        prior: None,
    }
}

/// Compiles ingredients and recipes into a flat game with an all-first-state
/// start and a uniform recipe prior.
pub fn build_chefworld(
    ingredients: Vec<Ingredient>,
    recipes: Vec<Recipe>,
    horizon: usize,
    discount: f64,
) -> Result<GameSpec> {
    let domain = ChefWorldDomain {
        format_version: DOMAIN_FORMAT_VERSION,
        name: "chefworld".into(),
        ingredients,
        recipes,
        horizon,
        discount,
        initial: None,
        prior: None,
    };
    Ok(ChefWorld::build(domain)?.spec)
}

impl ChefWorld {
    pub fn build(domain: ChefWorldDomain) -> Result<Self> {
        let err = |m: String| Err(CirlError::Build(m));
        if domain.format_version != DOMAIN_FORMAT_VERSION {
            return err(format!("unsupported domain format_version {}", domain.format_version));
        }
        if domain.ingredients.is_empty() {
            return err("no ingredients".into());
        }
        if domain.recipes.is_empty() {
            return err("no recipes".into());
        }
        for ing in &domain.ingredients {
            if ing.states.len() < 2 {
                return err(format!("ingredient {} needs at least 2 states", ing.name));
            }
            if ing.steps.len() != ing.states.len() - 1 {
                return err(format!(
                    "ingredient {} has {} states but {} steps",
                    ing.name,
                    ing.states.len(),
                    ing.steps.len()
                ));
            }
        }
        let find_ingredient = |name: &str| domain.ingredients.iter().position(|i| i.name == name);

        let mut targets = Vec::new();
        for recipe in &domain.recipes {
            let mut t = vec![None; domain.ingredients.len()];
            for (ing_name, state) in &recipe.targets {
                let Some(i) = find_ingredient(ing_name) else {
                    return err(format!("recipe {} references unknown ingredient {ing_name}", recipe.name));
                };
                let Some(level) = domain.ingredients[i].state_index(state) else {
                    return err(format!("recipe {} references unknown state {ing_name}={state}", recipe.name));
                };
                t[i] = Some(level);
            }
            targets.push(t);
        }

        let mut initial = vec![0usize; domain.ingredients.len()];
        if let Some(init) = &domain.initial {
            for (ing_name, state) in init {
                let i = find_ingredient(ing_name)
                    .ok_or_else(|| CirlError::Build(format!("initial state names unknown ingredient {ing_name}")))?;
                initial[i] = domain.ingredients[i]
                    .state_index(state)
                    .ok_or_else(|| CirlError::Build(format!("unknown initial state {ing_name}={state}")))?;
            }
        }

        let prior_weights: Vec<f64> = match &domain.prior {
            None => vec![1.0 / domain.recipes.len() as f64; domain.recipes.len()],
            Some(p) => {
                for name in p.keys() {
                    if !domain.recipes.iter().any(|r| &r.name == name) {
                        return err(format!("prior names unknown recipe {name}"));
                    }
                }
                let w: Vec<f64> = domain.recipes.iter().map(|r| p.get(&r.name).copied().unwrap_or(0.0)).collect();
                let z: f64 = w.iter().sum();
                if !(z > 0.0) || w.iter().any(|x| *x < 0.0 || !x.is_finite()) {
                    return err("prior weights must be non-negative with positive sum".into());
                }
                w.into_iter().map(|x| x / z).collect()
            }
        };

        let radices: Vec<usize> = domain.ingredients.iter().map(|i| i.states.len()).collect();
        let mut human_actions = Vec::new();
        let mut robot_actions = Vec::new();
        let mut human_effects = Vec::new();
        let mut robot_effects = Vec::new();
        for (i, ing) in domain.ingredients.iter().enumerate() {
            for (from, step) in ing.steps.iter().enumerate() {
                let name = format!("{} {}", step.verb, ing.name);
                let effect = Some(Effect { ingredient: i, from });
                if step.actors.allows(Actor::Human) {
                    human_actions.push(name.clone());
                    human_effects.push(effect);
                }
                if step.actors.allows(Actor::Robot) {
                    robot_actions.push(name);
                    robot_effects.push(effect);
                }
            }
        }
        human_actions.push(WAIT.into());
        human_effects.push(None);
        robot_actions.push(WAIT.into());
        robot_effects.push(None);

        let mut world = ChefWorld {
            domain,
            spec: GameSpec {
                format_version: GAME_FORMAT_VERSION,
                name: String::new(),
                states: Vec::new(),
                human_actions,
                robot_actions,
                objectives: Vec::new(),
                transition: Vec::new(),
                reward: Vec::new(),
                prior: Vec::new(),
                discount: 0.0,
                horizon: 0,
                legal_human: None,
                legal_robot: None,
                turn_structure: TurnStructure::RobotRevealsFirst,
            },
            radices,
            human_effects,
            robot_effects,
            targets,
        };
        world.compile(&initial, &prior_weights);
        Ok(world)
    }

    fn compile(&mut self, initial: &[usize], prior_weights: &[f64]) {
        let kitchen_count: usize = self.radices.iter().product();
        let served = kitchen_count;
        let n_states = kitchen_count + 1;
        let (nh, nr, nt) = (self.human_effects.len(), self.robot_effects.len(), self.targets.len());

        let mut states = Vec::with_capacity(n_states);
        let mut transition = Vec::with_capacity(n_states);
        let mut reward = Vec::with_capacity(n_states);
        let mut legal_human = Vec::with_capacity(n_states);
        let mut legal_robot = Vec::with_capacity(n_states);
        for s in 0..kitchen_count {
            let levels = self.decode_levels(s);
            states.push(self.describe_levels(&levels));
            let lh: Vec<usize> = (0..nh).filter(|&a| applies(self.human_effects[a], &levels)).collect();
            let lr: Vec<usize> = (0..nr).filter(|&a| applies(self.robot_effects[a], &levels)).collect();
            let mut t_rows = vec![vec![Vec::new(); nr]; nh];
            let mut r_rows = vec![vec![vec![0.0; nt]; nr]; nh];
            for a_h in 0..nh {
                for a_r in 0..nr {
                    let legal = lh.contains(&a_h) && lr.contains(&a_r);
                    if !legal {
                        t_rows[a_h][a_r] = vec![Outcome { to: s, p: 1.0 }];
                        continue;
                    }
                    let mut next = levels.clone();
                    // a shared effect lands once
                    for e in [self.human_effects[a_h], self.robot_effects[a_r]].into_iter().flatten() {
                        if next[e.ingredient] == e.from {
                            next[e.ingredient] = e.from + 1;
                        }
                    }
                    let matched: Vec<bool> = (0..nt).map(|theta| self.matches(theta, &next)).collect();
                    let to = if matched.iter().any(|&m| m) { served } else { self.encode_levels(&next) };
                    t_rows[a_h][a_r] = vec![Outcome { to, p: 1.0 }];
                    for theta in 0..nt {
                        r_rows[a_h][a_r][theta] = if matched[theta] { 1.0 } else { 0.0 };
                    }
                }
            }
            transition.push(t_rows);
            reward.push(r_rows);
            legal_human.push(lh);
            legal_robot.push(lr);
        }
        states.push(SERVED.into());
        transition.push(vec![vec![vec![Outcome { to: served, p: 1.0 }]; nr]; nh]);
        reward.push(vec![vec![vec![0.0; nt]; nr]; nh]);
        legal_human.push(vec![nh - 1]);
        legal_robot.push(vec![nr - 1]);

        let mut prior = vec![vec![0.0; nt]; n_states];
        prior[self.encode_levels(initial)] = prior_weights.to_vec();

        let spec = &mut self.spec;
        spec.name = self.domain.name.clone();
        spec.states = states;
        spec.objectives = self.domain.recipes.iter().map(|r| r.name.clone()).collect();
        spec.transition = transition;
        spec.reward = reward;
        spec.prior = prior;
        spec.discount = self.domain.discount;
        spec.horizon = self.domain.horizon;
        spec.legal_human = Some(legal_human);
        spec.legal_robot = Some(legal_robot);
    }

    pub fn served_state(&self) -> usize {
        self.spec.num_states() - 1
    }

    pub fn initial_state(&self) -> usize {
        self.spec.prior.iter().position(|row| row.iter().sum::<f64>() > 0.0).expect("prior has an initial state")
    }

    pub fn encode(&self, k: &KitchenState) -> usize {
        if k.served {
            self.served_state()
        } else {
            self.encode_levels(&k.levels)
        }
    }

    pub fn decode(&self, s: usize) -> KitchenState {
        if s == self.served_state() {
            KitchenState { levels: Vec::new(), served: true }
        } else {
            KitchenState { levels: self.decode_levels(s), served: false }
        }
    }

    /// Whether a kitchen configuration satisfies recipe `theta`.
    pub fn matches(&self, theta: usize, levels: &[usize]) -> bool {
        self.targets[theta].iter().zip(levels).all(|(t, &l)| t.is_none_or(|t| t == l))
    }

    fn encode_levels(&self, levels: &[usize]) -> usize {
        levels.iter().zip(&self.radices).fold(0, |acc, (&l, &r)| acc * r + l)
    }

    fn decode_levels(&self, mut s: usize) -> Vec<usize> {
        let mut levels = vec![0; self.radices.len()];
        for (i, &r) in self.radices.iter().enumerate().rev() {
            levels[i] = s % r;
            s /= r;
        }
        levels
    }

    fn describe_levels(&self, levels: &[usize]) -> String {
        self.domain
            .ingredients
            .iter()
            .zip(levels)
            .map(|(ing, &l)| format!("{}={}", ing.name, ing.states[l]))
            .collect::<Vec<_>>()
            .join(",")
    }
}

fn applies(effect: Option<Effect>, levels: &[usize]) -> bool {
    effect.is_none_or(|e| levels[e.ingredient] == e.from)
}

/// Actions whose preconditions hold in `s` (always including wait).
pub fn legal_actions(spec: &GameSpec, s: usize, actor: Actor) -> Vec<usize> {
    spec.legal_actions(s, actor)
}
