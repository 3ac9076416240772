//! Binary solution archives.
//!
//! Numeric tables go through bincode as plain vectors. The game, the config
//! echo, the rationality model and the solve report travel as JSON text,
//! since their serde shapes (tagged enums, optional fields) are not
//! self-describing enough for bincode.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::belief::RationalityModel;
use crate::config::Mode;
use crate::error::{CirlError, Result};
use crate::evaluator::Solutions;
use crate::game::GameSpec;
use crate::grid::BeliefGrid;
use crate::solver::{FullInfoQ, FullInfoSet, LiteralSolution, QFunction, SolveReport};

pub const ARCHIVE_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"CIRLSOL\n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Payload {
    format_version: u32,
    config_hash: String,
    config_json: String,
    spec_json: String,
    model_json: String,
    mode: Mode,
    grid_resolution: u32,
    report_json: Option<String>,
    cirl: Option<Vec<Vec<f64>>>,
    literal: Option<Vec<Vec<f64>>>,
    /// `[theta][t]` full-information tables.
    full_info: Option<Vec<Vec<Vec<f64>>>>,
}

/// Everything `simulate`, `play` and the service need from a solve.
#[derive(Debug, Clone)]
pub struct SolutionArchive {
    pub config_hash: String,
    /// The run config exactly as it was given.
    pub config_json: String,
    pub spec: GameSpec,
    pub model: RationalityModel,
    pub mode: Mode,
    pub solutions: Solutions,
    pub report: Option<SolveReport>,
}

fn archive_err(e: impl std::fmt::Display) -> CirlError {
    CirlError::Archive(e.to_string())
}

impl SolutionArchive {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let payload = Payload {
            format_version: ARCHIVE_FORMAT_VERSION,
            config_hash: self.config_hash.clone(),
            config_json: self.config_json.clone(),
            spec_json: serde_json::to_string(&self.spec).map_err(archive_err)?,
            model_json: serde_json::to_string(&self.model).map_err(archive_err)?,
            mode: self.mode,
            grid_resolution: self.solutions.grid.resolution(),
            report_json: self.report.as_ref().map(serde_json::to_string).transpose().map_err(archive_err)?,
            cirl: self.solutions.cirl.as_ref().map(|q| q.tables.clone()),
            literal: self.solutions.literal.as_ref().map(|l| l.values.tables.clone()),
            full_info: self
                .solutions
                .literal
                .as_ref()
                .map(|l| l.full.per_objective.iter().map(|q| q.tables.clone()).collect()),
        };
        let mut out = MAGIC.to_vec();
        bincode::serialize_into(&mut out, &payload).map_err(archive_err)?;
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let body = bytes.strip_prefix(MAGIC.as_slice()).ok_or_else(|| archive_err("not a solution archive"))?;
        let p: Payload = bincode::deserialize(body).map_err(archive_err)?;
        if p.format_version != ARCHIVE_FORMAT_VERSION {
            return Err(archive_err(format!(
                "archive format {} is not supported (expected {ARCHIVE_FORMAT_VERSION})",
                p.format_version
            )));
        }
        let spec: GameSpec = serde_json::from_str(&p.spec_json).map_err(archive_err)?;
        let model: RationalityModel = serde_json::from_str(&p.model_json).map_err(archive_err)?;
        let grid = BeliefGrid::new(spec.num_objectives(), p.grid_resolution)?;
        let table = |tables: Vec<Vec<f64>>| -> Result<QFunction> {
            let mut q = QFunction::zeros(&spec, &grid, model);
            q.tables = tables;
            q.check_shape(&spec, &grid)?;
            let expect = spec.num_states() * grid.len() * q.cell_len();
            if q.tables.iter().any(|t| t.len() != expect) {
                return Err(archive_err("table length does not match the game"));
            }
            Ok(q)
        };
        let cirl = p.cirl.map(table).transpose()?;
        let literal = match (p.literal, p.full_info) {
            (Some(values), Some(full)) => {
                let (ns, nh, nr) = (spec.num_states(), spec.num_human_actions(), spec.num_robot_actions());
                if full.len() != spec.num_objectives()
                    || full.iter().any(|per| per.len() != spec.horizon || per.iter().any(|t| t.len() != ns * nh * nr))
                {
                    return Err(archive_err("full-information tables do not match the game"));
                }
                let per_objective = full
                    .into_iter()
                    .enumerate()
                    .map(|(objective, tables)| FullInfoQ {
                        objective,
                        horizon: spec.horizon,
                        num_states: ns,
                        num_human_actions: nh,
                        num_robot_actions: nr,
                        model,
                        tables,
                    })
                    .collect();
                Some(LiteralSolution { values: table(values)?, full: FullInfoSet::from_parts(per_objective) })
            }
            (None, None) => None,
            _ => return Err(archive_err("literal solution is incomplete")),
        };
        let report = p.report_json.map(|r| serde_json::from_str(&r)).transpose().map_err(archive_err)?;
        Ok(SolutionArchive {
            config_hash: p.config_hash,
            config_json: p.config_json,
            spec,
            model,
            mode: p.mode,
            solutions: Solutions { grid, cirl, literal },
            report,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
