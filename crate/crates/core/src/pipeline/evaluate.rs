//! Error measures of a trained model against test snapshots.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::dataset::{stretch, with_workers, Dataset};
use super::train::train;
use crate::error::{Error, Result};
use crate::morph::{GeometryParam, TransformationMap};
use crate::rom;
use crate::surrogate::SurrogateModel;
use crate::tensor::Tensor2;

/// Relative Frobenius error of an effective stress.
pub fn effective_stress_error(predicted: &Tensor2, truth: &Tensor2) -> f64 {
    (predicted - truth).norm() / truth.norm().max(f64::MIN_POSITIVE)
}

/// Relative `L2` error of a stress field over a domain with point weights.
pub fn field_error(predicted: &[Tensor2], truth: &[Tensor2], weights: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for ((p, t), w) in predicted.iter().zip(truth).zip(weights) {
        num += w * (p - t).norm_squared();
        den += w * t.norm_squared();
    }
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleError {
    pub id: usize,
    pub input: Vec<f64>,
    /// Errors with the leading `1..=N` modes.
    pub e_pbar: Vec<f64>,
    pub e_p: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n_modes: usize,
    pub n_test: usize,
    pub mean_e_pbar: f64,
    pub mean_e_p: f64,
    /// `(n, mean E_Pbar, mean E_P)` for `n = 1..=N`.
    pub error_vs_modes: Vec<(usize, f64, f64)>,
    pub samples: Vec<SampleError>,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn sample_errors(model: &SurrogateModel, test: &Dataset, row: usize, with_field: bool) -> Result<SampleError> {
    let input = test.inputs()[row].clone();
    let mu = GeometryParam::from_slice(test.manifest.family, &input[3..])?;
    let u = stretch(&input);
    let x = model.input(&u, &[], &mu)?;
    let alpha = model.coefficients(&x);
    let truth_pbar = test.pbar[row];
    let mut e_pbar = Vec::with_capacity(alpha.len());
    let mut pbar = Tensor2::zeros();
    for (a, b) in alpha.iter().zip(&model.effective_basis) {
        pbar += b * *a;
        e_pbar.push(effective_stress_error(&pbar, &truth_pbar));
    }
    let mut e_p = Vec::new();
    if with_field {
        let pack = model
            .recovery
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("model has no field-recovery data".into()))?;
        let cache = &pack.operator.cache;
        let truth_map = TransformationMap::from_displacement(&test.mesh, cache, test.displacement[row].clone(), Some(mu));
        let truth = rom::unweight(&test.stress[row], &truth_map)?;
        let weights: Vec<f64> = cache.weights.iter().zip(&truth_map.det).map(|(w, d)| w * d).collect();
        let map = pack.reduced.solve(&pack.operator, &mu)?;
        let mut s = vec![0.0; pack.basis.weights.len()];
        for (a, m) in alpha.iter().zip(&pack.basis.modes) {
            for (o, v) in s.iter_mut().zip(m) {
                *o += a * v;
            }
            e_p.push(field_error(&rom::unweight(&s, &map)?, &truth, &weights));
        }
    }
    Ok(SampleError {
        id: test.manifest.accepted().nth(row).map_or(row, |s| s.id),
        input,
        e_pbar,
        e_p,
    })
}

/// Per-sample and mean errors, with field errors when `with_field`.
pub fn evaluate(model: &SurrogateModel, test: &Dataset, with_field: bool, workers: Option<usize>) -> Result<EvaluationReport> {
    if test.manifest.family != model.family {
        return Err(Error::InvalidArgument("test set family differs from the model".into()));
    }
    let samples = with_workers(workers, || {
        (0..test.len())
            .into_par_iter()
            .map(|r| sample_errors(model, test, r, with_field))
            .collect::<Result<Vec<_>>>()
    })??;
    let n = model.n_modes();
    let error_vs_modes = (0..n)
        .map(|k| {
            (
                k + 1,
                mean(samples.iter().map(|s| s.e_pbar[k])),
                mean(samples.iter().filter_map(|s| s.e_p.get(k).copied())),
            )
        })
        .collect::<Vec<_>>();
    let (mean_e_pbar, mean_e_p) = error_vs_modes.last().map_or((f64::NAN, f64::NAN), |e| (e.1, e.2));
    Ok(EvaluationReport {
        n_modes: n,
        n_test: samples.len(),
        mean_e_pbar,
        mean_e_p,
        error_vs_modes,
        samples,
    })
}

/// Mean errors after retraining on the first `n` snapshots for each size.
pub fn error_vs_samples(train_set: &Dataset, test: &Dataset, config: &RunConfig, sizes: &[usize]) -> Result<Vec<(usize, f64, f64)>> {
    sizes
        .iter()
        .map(|&n| {
            let sub = train_set.truncated(n);
            let cfg = RunConfig {
                n_modes: config.n_modes.min(sub.len()),
                ..config.clone()
            };
            let (model, _) = train(&sub, &cfg)?;
            let rep = evaluate(&model, test, true, config.workers)?;
            Ok((sub.len(), rep.mean_e_pbar, rep.mean_e_p))
        })
        .collect()
}

impl EvaluationReport {
    /// Writes `summary.json`, `errors.csv` and `error_vs_modes.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("summary.json"), serde_json::to_vec_pretty(self)?)?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("errors.csv"))?);
        let width = self.samples.first().map_or(0, |s| s.input.len());
        write!(f, "id")?;
        for k in 0..width {
            write!(f, ",x{k}")?;
        }
        writeln!(f, ",e_pbar,e_p")?;
        for s in &self.samples {
            write!(f, "{}", s.id)?;
            for v in &s.input {
                write!(f, ",{v}")?;
            }
            writeln!(
                f,
                ",{},{}",
                s.e_pbar.last().copied().unwrap_or(f64::NAN),
                s.e_p.last().copied().unwrap_or(f64::NAN)
            )?;
        }
        f.flush()?;
        write_triples(&dir.join("error_vs_modes.csv"), "n_modes,mean_e_pbar,mean_e_p", &self.error_vs_modes)
    }
}

pub fn write_triples(path: &Path, header: &str, rows: &[(usize, f64, f64)]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{header}")?;
    for (n, a, b) in rows {
        writeln!(f, "{n},{a},{b}")?;
    }
    f.flush()?;
    Ok(())
}

/// Writes `index,eigenvalue,relative` rows.
pub fn write_spectrum(path: &Path, eigenvalues: &[f64]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "index,eigenvalue,relative")?;
    let first = eigenvalues.first().copied().unwrap_or(1.0);
    for (i, e) in eigenvalues.iter().enumerate() {
        writeln!(f, "{},{e},{}", i + 1, e / first)?;
    }
    f.flush()?;
    Ok(())
}
