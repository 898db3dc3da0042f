use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::dataset::{with_workers, Offline};
use crate::error::{Error, Result};
use crate::macrofem::{
    compliance, cooks_membrane_scaled, solve_macro_guarded, write_displacement_csv, ConstitutiveProvider, Fe2Provider,
    MacroProblem, MacroRecord, MacroSolution, SurrogateProvider, TRAINING_STRETCH_BOUND,
};
use crate::surrogate::SurrogateModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Fe2,
    Surrogate,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TwoScaleTimings {
    /// Cell morphing for FE2, nothing for the surrogate.
    pub setup_s: f64,
    pub online_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwoScaleReport {
    pub mode: Mode,
    pub nx: usize,
    pub ny: usize,
    pub n_points: usize,
    pub compliance: f64,
    pub max_displacement: f64,
    pub max_stretch_deviation: f64,
    pub record: MacroRecord,
    pub timings: TwoScaleTimings,
}

pub struct TwoScaleRun {
    pub problem: MacroProblem,
    pub solution: MacroSolution,
    pub report: TwoScaleReport,
}

/// Solves Cook's membrane with nested cell solves or a trained surrogate.
pub fn run_twoscale(config: &RunConfig, mode: Mode, model: Option<Arc<SurrogateModel>>) -> Result<TwoScaleRun> {
    let tc = &config.twoscale;
    let problem = cooks_membrane_scaled(tc.nx, tc.ny, tc.traction, tc.scale)?;
    let t = Instant::now();
    let provider: Box<dyn ConstitutiveProvider> = match mode {
        Mode::Fe2 => {
            let offline = Offline::new(config)?;
            let phases = config.phases()?;
            Box::new(with_workers(config.workers, || {
                Fe2Provider::new(&problem.points, &offline.operator, phases, config.solver)
            })??)
        }
        Mode::Surrogate => Box::new(SurrogateProvider {
            model: model.ok_or_else(|| Error::InvalidArgument("surrogate mode needs a trained model".into()))?,
            lambda: Vec::new(),
        }),
    };
    let setup_s = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let solution = with_workers(config.workers, || {
        solve_macro_guarded(&problem, provider.as_ref(), &tc.macro_solver, TRAINING_STRETCH_BOUND)
    })??;
    let online_s = t.elapsed().as_secs_f64();
    let max_displacement = solution
        .u
        .chunks_exact(2)
        .map(|c| c[0].hypot(c[1]))
        .fold(0.0, f64::max);
    let report = TwoScaleReport {
        mode,
        nx: tc.nx,
        ny: tc.ny,
        n_points: problem.points.len(),
        compliance: compliance(&problem, &solution),
        max_displacement,
        max_stretch_deviation: solution.max_stretch_deviation,
        record: solution.record.clone(),
        timings: TwoScaleTimings { setup_s, online_s },
    };
    Ok(TwoScaleRun {
        problem,
        solution,
        report,
    })
}

impl TwoScaleRun {
    /// Writes `<mode>_displacement.csv` and `<mode>_report.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let tag = match self.report.mode {
            Mode::Fe2 => "fe2",
            Mode::Surrogate => "surrogate",
        };
        write_displacement_csv(&dir.join(format!("{tag}_displacement.csv")), &self.problem, &self.solution.u, None)?;
        std::fs::write(dir.join(format!("{tag}_report.json")), serde_json::to_vec_pretty(&self.report)?)?;
        Ok(())
    }
}
