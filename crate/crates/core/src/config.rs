//! Run configuration, domain loading and the provenance hash.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::belief::RationalityModel;
use crate::chefworld::{ChefWorld, ChefWorldDomain};
use crate::error::{CirlError, Result};
use crate::game::{validate_game, GameSpec};
use crate::grid::BeliefGrid;
use crate::solver::SolverSettings;

/// Which robot is solved for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Cirl,
    Irl,
}

impl std::str::FromStr for Mode {
    type Err = CirlError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cirl" => Ok(Mode::Cirl),
            "irl" => Ok(Mode::Irl),
            other => Err(CirlError::Usage(format!("unknown mode {other:?} (expected cirl or irl)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: PathBuf,
    #[serde(default)]
    pub mode: Mode,
    pub model: RationalityModel,
    /// Simplex grid resolution; the dimension-based default when absent.
    #[serde(default)]
    pub grid_resolution: Option<u32>,
    #[serde(default)]
    pub horizon: Option<usize>,
    #[serde(default)]
    pub discount: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub solver: SolverSettings,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CirlError::Parse(format!("run config: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 over the config (without its output directory) and the domain
    /// file's bytes, hex encoded.
    pub fn hash(&self, domain_bytes: &[u8]) -> String {
        let mut echo = self.clone();
        echo.output_dir = None;
        provenance_hash(&echo.to_json(), domain_bytes)
    }
}

/// SHA-256 over a config document and the domain bytes it ran on, hex encoded.
pub fn provenance_hash(config_json: &str, domain_bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(config_json.as_bytes());
    h.update([0u8]);
    h.update(domain_bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// A parsed domain file: either a factored ChefWorld domain or a flat game.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum LoadedDomain {
    ChefWorld(Box<ChefWorld>),
    Game(GameSpec),
}

impl LoadedDomain {
    pub fn spec(&self) -> &GameSpec {
        match self {
            LoadedDomain::ChefWorld(w) => &w.spec,
            LoadedDomain::Game(g) => g,
        }
    }

    pub fn into_spec(self) -> GameSpec {
        match self {
            LoadedDomain::ChefWorld(w) => w.spec,
            LoadedDomain::Game(g) => g,
        }
    }
}

/// Parses a domain document, applying horizon and discount overrides, and
/// validates the compiled game.
pub fn parse_domain(text: &str, horizon: Option<usize>, discount: Option<f64>) -> Result<LoadedDomain> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| CirlError::Parse(e.to_string()))?;
    let loaded = if value.get("ingredients").is_some() {
        let mut domain: ChefWorldDomain =
            serde_json::from_value(value).map_err(|e| CirlError::Parse(format!("chefworld domain: {e}")))?;
        if let Some(h) = horizon {
            domain.horizon = h;
        }
        if let Some(d) = discount {
            domain.discount = d;
        }
        LoadedDomain::ChefWorld(Box::new(ChefWorld::build(domain)?))
    } else {
        let mut spec: GameSpec =
            serde_json::from_value(value).map_err(|e| CirlError::Parse(format!("game spec: {e}")))?;
        if let Some(h) = horizon {
            spec.horizon = h;
        }
        if let Some(d) = discount {
            spec.discount = d;
        }
        LoadedDomain::Game(spec)
    };
    let violations = validate_game(loaded.spec());
    if !violations.is_empty() {
        return Err(CirlError::InvalidGame(violations));
    }
    Ok(loaded)
}

pub fn load_domain(path: &Path, horizon: Option<usize>, discount: Option<f64>) -> Result<(LoadedDomain, Vec<u8>)> {
    let bytes = std::fs::read(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| CirlError::Parse(format!("{}: {e}", path.display())))?;
    Ok((parse_domain(text, horizon, discount)?, bytes))
}

/// The grid a config asks for on a given game.
pub fn grid_for(spec: &GameSpec, resolution: Option<u32>) -> Result<BeliefGrid> {
    let dims = spec.num_objectives();
    BeliefGrid::new(dims, resolution.unwrap_or_else(|| BeliefGrid::default_resolution(dims)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chefworld::two_recipe_domain;

    fn config() -> RunConfig {
        RunConfig {
            domain: "k.json".into(),
            mode: Mode::Cirl,
            model: RationalityModel::boltzmann(5.0),
            grid_resolution: None,
            horizon: None,
            discount: None,
            seed: 0,
            output_dir: None,
            solver: SolverSettings::default(),
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&config().to_json()).unwrap();
        v["colour"] = "red".into();
        assert!(matches!(RunConfig::from_json(&v.to_string()), Err(CirlError::Parse(_))));
        let mut v: serde_json::Value = serde_json::from_str(&config().to_json()).unwrap();
        v["solver"]["toll"] = 1.0.into();
        assert!(RunConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let c = RunConfig::from_json(r#"{"domain":"d.json","model":{"kind":"rational","floor":1e-9}}"#).unwrap();
        assert_eq!(c.mode, Mode::Cirl);
        assert_eq!(c.solver, SolverSettings::default());
        assert_eq!(c.seed, 0);
    }

    #[test]
    fn hash_tracks_config_and_domain_but_not_output_dir() {
        let a = config();
        let mut b = a.clone();
        b.output_dir = Some("elsewhere".into());
        assert_eq!(a.hash(b"x"), b.hash(b"x"));
        assert_ne!(a.hash(b"x"), a.hash(b"y"));
        b.seed = 1;
        assert_ne!(a.hash(b"x"), b.hash(b"x"));
        assert_eq!(a.hash(b"x").len(), 64);
    }

    #[test]
    fn domain_overrides_apply() {
        let text = two_recipe_domain().to_json();
        let d = parse_domain(&text, Some(7), Some(0.9)).unwrap();
        assert!(matches!(d, LoadedDomain::ChefWorld(_)));
        assert_eq!(d.spec().horizon, 7);
        assert_eq!(d.spec().discount, 0.9);
        let flat = parse_domain(&d.spec().to_json(), None, None).unwrap();
        assert!(matches!(flat, LoadedDomain::Game(_)));
    }

    #[test]
    fn invalid_games_list_violations() {
        let text = two_recipe_domain().to_json();
        let mut spec = parse_domain(&text, None, None).unwrap().into_spec();
        spec.discount = 3.0;
        assert!(matches!(parse_domain(&spec.to_json(), None, None), Err(CirlError::InvalidGame(v)) if !v.is_empty()));
        assert!(matches!(parse_domain("{", None, None), Err(CirlError::Parse(_))));
    }
}
