//! Built-in scenarios served by the CLI and the play service.

use serde::{Deserialize, Serialize};

use crate::belief::RationalityModel;
use crate::chefworld::{four_recipe_domain, two_recipe_domain, ChefWorldDomain};

/// Human actions of the two-recipe walk-through: the human wants soup,
/// slices the bread, then waits where a salad-minded teacher would add spinach.
pub const WALKTHROUGH_SCRIPT: [&str; 4] = ["slice bread", "wait", "wait", "wait"];
pub const WALKTHROUGH_BETA: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub title: String,
    pub domain: ChefWorldDomain,
    pub default_model: RationalityModel,
    /// A human action sequence worth replaying, if the scenario has one.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub script: Vec<String>,
}

pub fn builtin_scenarios() -> Vec<Scenario> {
    let two = two_recipe_domain();
    let four = four_recipe_domain();
    vec![
        Scenario {
            id: two.name.clone(),
            title: "Soup or salad; the robot starts out expecting salad".into(),
            domain: two,
            default_model: RationalityModel::boltzmann(WALKTHROUGH_BETA),
            script: WALKTHROUGH_SCRIPT.iter().map(|s| s.to_string()).collect(),
        },
        Scenario {
            id: four.name.clone(),
            title: "Four recipes, uniform prior".into(),
            domain: four,
            default_model: RationalityModel::boltzmann(5.0),
            script: Vec::new(),
        },
    ]
}

pub fn find_scenario(id: &str) -> Option<Scenario> {
    builtin_scenarios().into_iter().find(|s| s.id == id)
}
