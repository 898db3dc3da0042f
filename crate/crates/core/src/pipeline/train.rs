use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::dataset::{with_workers, Dataset};
use super::sampling;
use crate::error::{Error, Result};
use crate::morph::{self, GeometryParam};
use crate::regress::{self, Gpr, GprOptions};
use crate::rom::{self, PodBasis};
use crate::surrogate::{Provenance, RecoveryPack, SurrogateModel};

/// Geometries used to build the reduced auxiliary model.
pub const AUX_TRAINING_SIZE: usize = 32;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainingTimings {
    pub pod_s: f64,
    pub gpr_s: f64,
    pub auxiliary_s: f64,
}

/// Sobol geometries for the reduced auxiliary model. Dataset geometries
/// are not used since small designs can be degenerate (all corners share
/// axis-aligned ellipses).
pub fn auxiliary_geometries(config: &RunConfig) -> Result<Vec<GeometryParam>> {
    sampling::sobol(&config.geometry_ranges(), AUX_TRAINING_SIZE)?
        .iter()
        .map(|g| GeometryParam::from_slice(config.family, g))
        .collect()
}

/// Fits one regressor per POD coefficient.
pub fn fit_coefficients(ranges: &[[f64; 2]], inputs: &[Vec<f64>], basis: &PodBasis, opts: &GprOptions) -> Result<Vec<Gpr>> {
    basis
        .coefficients
        .par_iter()
        .enumerate()
        .map(|(n, alpha)| {
            let o = GprOptions {
                seed: opts.seed.wrapping_add(n as u64),
                ..*opts
            };
            regress::fit(ranges, inputs, alpha, &o).map_err(|e| Error::Regression(format!("coefficient {n}: {e}")))
        })
        .collect()
}

/// POD, per-coefficient regression, effective basis and the reduced
/// auxiliary model.
pub fn train(dataset: &Dataset, config: &RunConfig) -> Result<(SurrogateModel, TrainingTimings)> {
    if dataset.manifest.family != config.family {
        return Err(Error::InvalidArgument("dataset family differs from the configuration".into()));
    }
    let mut timings = TrainingTimings::default();
    let t = Instant::now();
    let cache = dataset.mesh.quadrature()?;
    let full = rom::pod(&dataset.stress, &cache, None)?;
    if config.n_modes > full.n_modes() {
        return Err(Error::InvalidArgument(format!(
            "requested {} modes but the snapshots have rank {}",
            config.n_modes,
            full.n_modes()
        )));
    }
    let basis = full.truncated(config.n_modes);
    timings.pod_s = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let ranges = config.input_ranges();
    let inputs = dataset.inputs();
    let gprs = with_workers(config.workers, || fit_coefficients(&ranges, &inputs, &basis, &config.gpr))??;
    timings.gpr_s = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let operator = Arc::new(morph::assemble_auxiliary(Arc::new(dataset.mesh.clone()), config.parent(), config.xi)?);
    let reduced = morph::reduce_auxiliary(&operator, &auxiliary_geometries(config)?, config.aux_tol)?;
    timings.auxiliary_s = t.elapsed().as_secs_f64();
    let model = SurrogateModel::new(
        config.family,
        0,
        ranges,
        rom::effective_basis(&basis),
        gprs,
        Some(RecoveryPack {
            basis,
            operator,
            reduced,
        }),
        Provenance {
            dataset_hash: dataset.hash()?,
            seed: config.seed,
        },
    )?;
    Ok((model, timings))
}

/// Trains and writes the model, returning its hash.
pub fn train_to_dir(dataset: &Dataset, config: &RunConfig, dir: &Path) -> Result<(SurrogateModel, String, TrainingTimings)> {
    let (model, timings) = train(dataset, config)?;
    let hash = model.save(dir)?;
    Ok((model, hash, timings))
}
