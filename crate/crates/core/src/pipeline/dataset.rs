//! Snapshot datasets: generation, storage and validation.
//!
//! A dataset directory holds `manifest.json`, the parent mesh and stacked
//! arrays with one row per accepted sample.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{RunConfig, Sampler};
use super::rba::Array;
use super::sampling;
use crate::error::{Error, Result};
use crate::mesh::{self, Mesh};
use crate::microfem::{MicroSolution, Rve, RveTopology};
use crate::morph::{self, AuxiliaryOperator, Family, GeometryParam, TransformationMap};
use crate::rom;
use crate::tensor::{flatten, Tensor2};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MESH_FILE: &str = "parent.mesh";
pub const STRESS_FILE: &str = "weighted_stress.rba";
pub const DISPLACEMENT_FILE: &str = "transformation.rba";
pub const PBAR_FILE: &str = "effective_stress.rba";
/// Fraction of failed samples that aborts generation.
pub const MAX_FAILURE_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub id: usize,
    /// `[U_xx, U_yy, U_xy, mu..]`.
    pub input: Vec<f64>,
    /// Row in the stacked arrays, absent for skipped samples.
    pub row: Option<usize>,
    pub skipped: Option<String>,
    pub iterations: usize,
    pub load_steps: usize,
    pub final_residual: f64,
    pub min_map_det: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayRef {
    pub file: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub split: Split,
    pub family: Family,
    pub config_hash: String,
    pub seed: u64,
    pub xi: f64,
    pub refinement: usize,
    pub n_requested: usize,
    pub n_accepted: usize,
    pub mesh_file: String,
    pub mesh_hash: String,
    pub weighted_stress: ArrayRef,
    pub transformation: ArrayRef,
    pub effective_stress: ArrayRef,
    pub samples: Vec<SampleRecord>,
}

impl DatasetManifest {
    pub fn accepted(&self) -> impl Iterator<Item = &SampleRecord> {
        self.samples.iter().filter(|s| s.row.is_some())
    }

    fn check(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported dataset format {}", self.format_version)));
        }
        let width = 3 + self.family.dim();
        let mut rows: Vec<usize> = Vec::new();
        for s in &self.samples {
            if s.input.len() != width {
                return Err(Error::Format(format!("sample {} has {} inputs, expected {width}", s.id, s.input.len())));
            }
            if s.row.is_some() == s.skipped.is_some() {
                return Err(Error::Format(format!("sample {} must be either stored or skipped", s.id)));
            }
            rows.extend(s.row);
        }
        if rows.iter().enumerate().any(|(i, r)| *r != i) || rows.len() != self.n_accepted {
            return Err(Error::Format("stored rows are not consecutive".into()));
        }
        for a in [&self.weighted_stress, &self.transformation, &self.effective_stress] {
            if a.shape.len() != 2 || a.shape[0] != self.n_accepted {
                return Err(Error::Format(format!("array {} has shape {:?}", a.file, a.shape)));
            }
            if a.file.contains(['/', '\\']) || a.file.starts_with('.') {
                return Err(Error::Format(format!("array path {} leaves the dataset", a.file)));
            }
        }
        if self.effective_stress.shape[1] != 4 {
            return Err(Error::Format("effective stress rows must have 4 entries".into()));
        }
        Ok(())
    }
}

/// Parses and checks a dataset manifest.
pub fn parse_manifest(bytes: &[u8]) -> Result<DatasetManifest> {
    let m: DatasetManifest = serde_json::from_slice(bytes)?;
    m.check()?;
    Ok(m)
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: DatasetManifest,
    pub mesh: Mesh,
    /// Weighted stress per accepted sample.
    pub stress: Vec<Vec<f64>>,
    /// Transformation displacement per accepted sample.
    pub displacement: Vec<Vec<f64>>,
    pub pbar: Vec<Tensor2>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.stress.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stress.is_empty()
    }

    /// Regression inputs of accepted samples.
    pub fn inputs(&self) -> Vec<Vec<f64>> {
        self.manifest.accepted().map(|s| s.input.clone()).collect()
    }

    pub fn geometry(&self, row: usize) -> Result<GeometryParam> {
        let input = &self.inputs()[row];
        GeometryParam::from_slice(self.manifest.family, &input[3..])
    }

    /// SHA-256 of the manifest file.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(std::fs::read(self.dir.join(MANIFEST_FILE))?)))
    }

    /// Keeps the first `n` accepted samples, in memory only.
    pub fn truncated(&self, n: usize) -> Dataset {
        let mut d = self.clone();
        let n = n.min(self.len());
        d.stress.truncate(n);
        d.displacement.truncate(n);
        d.pbar.truncate(n);
        let mut kept = 0;
        d.manifest.samples.retain(|s| {
            if s.row.is_some() {
                kept += 1;
                kept <= n
            } else {
                true
            }
        });
        d.manifest.n_accepted = n;
        d
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = parse_manifest(&std::fs::read(dir.join(MANIFEST_FILE))?)?;
        let mesh_text = std::fs::read_to_string(dir.join(&manifest.mesh_file))?;
        if hex::encode(Sha256::digest(mesh_text.as_bytes())) != manifest.mesh_hash {
            return Err(Error::Format("parent mesh does not match the manifest hash".into()));
        }
        let mesh = mesh::parse_mesh(&mesh_text)?;
        let read = |a: &ArrayRef| -> Result<Vec<Vec<f64>>> {
            let arr = Array::read(&dir.join(&a.file))?;
            if arr.dims != a.shape {
                return Err(Error::Format(format!(
                    "{} has shape {:?}, manifest declares {:?}",
                    a.file, arr.dims, a.shape
                )));
            }
            arr.rows()
        };
        let stress = read(&manifest.weighted_stress)?;
        let displacement = read(&manifest.transformation)?;
        let pbar = read(&manifest.effective_stress)?
            .iter()
            .map(|r| Tensor2::new(r[0], r[1], r[2], r[3]))
            .collect();
        let nq = mesh.n_elements() * mesh.quadrature()?.qp_per_element;
        if manifest.weighted_stress.shape[1] != 4 * nq || manifest.transformation.shape[1] != 2 * mesh.n_nodes() {
            return Err(Error::Format("array widths do not match the parent mesh".into()));
        }
        Ok(Dataset {
            dir: dir.to_path_buf(),
            manifest,
            mesh,
            stress,
            displacement,
            pbar,
        })
    }
}

/// Training inputs for a configuration.
pub fn sample_parameters(config: &RunConfig) -> Result<Vec<Vec<f64>>> {
    let ranges = config.input_ranges();
    match config.sampler {
        Sampler::SobolCorners => sampling::sobol_with_corners(&ranges, config.n_samples),
        Sampler::Sobol => sampling::sobol(&ranges, config.n_samples),
        Sampler::Uniform => Ok(sampling::uniform(&ranges, config.n_samples, config.seed)),
    }
}

/// Uniform test inputs, drawn from a stream separate from training.
pub fn sample_test_parameters(config: &RunConfig) -> Vec<Vec<f64>> {
    sampling::uniform(&config.input_ranges(), config.n_test, config.seed ^ 0x7465_7374)
}

/// Parent mesh for a configuration.
pub fn parent_mesh(config: &RunConfig) -> Result<Mesh> {
    match config.family {
        Family::Ellipse => mesh::build_parent_disk_mesh(config.radius, config.refinement),
        Family::Spline => mesh::build_parent_spline_mesh(config.refinement),
    }
}

/// Parent mesh, auxiliary operator and shared cell topology.
pub struct Offline {
    pub operator: Arc<AuxiliaryOperator>,
    pub topology: Arc<RveTopology>,
}

impl Offline {
    pub fn new(config: &RunConfig) -> Result<Self> {
        let mesh = Arc::new(parent_mesh(config)?);
        let topology = Arc::new(RveTopology::new(&mesh)?);
        let operator = Arc::new(morph::assemble_auxiliary(mesh, config.parent(), config.xi)?);
        Ok(Offline { operator, topology })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.operator.mesh
    }
}

/// One cell solve with its transformation map.
pub struct Snapshot {
    pub map: TransformationMap,
    pub rve: Rve,
    pub solution: MicroSolution,
    pub weighted: Vec<f64>,
}

pub fn stretch(input: &[f64]) -> Tensor2 {
    Tensor2::new(input[0], input[2], input[2], input[1])
}

/// Morphs the parent cell for the geometry part of `input` and solves it.
pub fn solve_sample(offline: &Offline, config: &RunConfig, input: &[f64]) -> Result<Snapshot> {
    let mu = GeometryParam::from_slice(config.family, &input[3..])?;
    let map = offline.operator.solve_transformation(&mu)?;
    let rve = Rve::with_topology(offline.operator.morph_mesh(&map), config.phases()?, offline.topology.clone())?;
    let solution = rve.solve(&stretch(input), &config.solver)?;
    let weighted = rom::weighted_stress(&solution, &map)?;
    Ok(Snapshot {
        map,
        rve,
        solution,
        weighted,
    })
}

/// Runs `f` on a pool with the configured number of workers.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GenerationTimings {
    pub setup_s: f64,
    pub snapshots_s: f64,
    pub write_s: f64,
}

/// Solves every input and writes a dataset to `dir`.
pub fn generate_from_inputs(config: &RunConfig, inputs: &[Vec<f64>], split: Split, dir: &Path) -> Result<(Dataset, GenerationTimings)> {
    config.validate()?;
    let t0 = Instant::now();
    let offline = Offline::new(config)?;
    let mut timings = GenerationTimings {
        setup_s: t0.elapsed().as_secs_f64(),
        ..Default::default()
    };
    let t1 = Instant::now();
    let results: Vec<Result<Snapshot>> = with_workers(config.workers, || {
        inputs.par_iter().map(|x| solve_sample(&offline, config, x)).collect()
    })?;
    timings.snapshots_s = t1.elapsed().as_secs_f64();
    let t2 = Instant::now();
    let failures = results.iter().filter(|r| r.is_err()).count();
    if failures as f64 > MAX_FAILURE_FRACTION * inputs.len() as f64 {
        let reasons: Vec<String> = results
            .iter()
            .filter_map(|r| r.as_ref().err().map(|e| e.to_string()))
            .take(5)
            .collect();
        return Err(Error::InvalidArgument(format!(
            "{failures} of {} samples failed; first reasons: {reasons:?}",
            inputs.len()
        )));
    }
    let mut samples = Vec::with_capacity(inputs.len());
    let (mut stress, mut displacement, mut pbar) = (Vec::new(), Vec::new(), Vec::new());
    for (id, (input, res)) in inputs.iter().zip(results).enumerate() {
        match res {
            Ok(s) => {
                samples.push(SampleRecord {
                    id,
                    input: input.clone(),
                    row: Some(stress.len()),
                    skipped: None,
                    iterations: s.solution.record.iterations,
                    load_steps: s.solution.record.load_steps,
                    final_residual: s.solution.record.final_residual,
                    min_map_det: s.map.min_det().1,
                });
                stress.push(s.weighted);
                displacement.push(s.map.d);
                pbar.push(s.solution.pbar);
            }
            Err(e) => {
                log::warn!("sample {id} skipped: {e}");
                samples.push(SampleRecord {
                    id,
                    input: input.clone(),
                    row: None,
                    skipped: Some(e.to_string()),
                    iterations: 0,
                    load_steps: 0,
                    final_residual: f64::NAN,
                    min_map_det: f64::NAN,
                });
            }
        }
    }
    std::fs::create_dir_all(dir)?;
    let mesh_text = mesh::render_mesh(offline.mesh());
    std::fs::write(dir.join(MESH_FILE), &mesh_text)?;
    let stress_arr = Array::from_rows(&stress)?;
    let disp_arr = Array::from_rows(&displacement)?;
    let pbar_rows: Vec<Vec<f64>> = pbar.iter().map(|p| flatten(p).to_vec()).collect();
    let pbar_arr = Array::from_rows(&pbar_rows)?;
    stress_arr.write(&dir.join(STRESS_FILE))?;
    disp_arr.write(&dir.join(DISPLACEMENT_FILE))?;
    pbar_arr.write(&dir.join(PBAR_FILE))?;
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        split,
        family: config.family,
        config_hash: config.hash(),
        seed: config.seed,
        xi: config.xi,
        refinement: config.refinement,
        n_requested: inputs.len(),
        n_accepted: stress.len(),
        mesh_file: MESH_FILE.into(),
        mesh_hash: hex::encode(Sha256::digest(mesh_text.as_bytes())),
        weighted_stress: ArrayRef {
            file: STRESS_FILE.into(),
            shape: stress_arr.dims.clone(),
        },
        transformation: ArrayRef {
            file: DISPLACEMENT_FILE.into(),
            shape: disp_arr.dims.clone(),
        },
        effective_stress: ArrayRef {
            file: PBAR_FILE.into(),
            shape: pbar_arr.dims.clone(),
        },
        samples,
    };
    std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest)?)?;
    timings.write_s = t2.elapsed().as_secs_f64();
    Ok((
        Dataset {
            dir: dir.to_path_buf(),
            manifest,
            mesh: offline.mesh().clone(),
            stress,
            displacement,
            pbar,
        },
        timings,
    ))
}

/// Training snapshots for a configuration.
pub fn generate_snapshots(config: &RunConfig, dir: &Path) -> Result<(Dataset, GenerationTimings)> {
    generate_from_inputs(config, &sample_parameters(config)?, Split::Train, dir)
}

/// Test snapshots for a configuration.
pub fn generate_test_set(config: &RunConfig, dir: &Path) -> Result<(Dataset, GenerationTimings)> {
    generate_from_inputs(config, &sample_test_parameters(config), Split::Test, dir)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checked: Vec<usize>,
    /// Largest `|<F> - U|` over re-solved samples.
    pub max_average_error: f64,
    /// Largest relative mismatch of stored and re-solved `Pbar`.
    pub max_pbar_mismatch: f64,
    /// Largest relative mismatch of stored and recomputed weighted stress.
    pub max_stress_mismatch: f64,
}

/// Re-solves a random subset of samples and compares with stored data.
pub fn validate(dataset: &Dataset, config: &RunConfig, fraction: f64) -> Result<ValidationReport> {
    if dataset.manifest.config_hash != config.hash() {
        return Err(Error::Format("dataset was generated with a different configuration".into()));
    }
    let n = dataset.len();
    if n == 0 {
        return Ok(ValidationReport::default());
    }
    let k = ((fraction * n as f64).ceil() as usize).clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7661_6c69);
    let mut rows = sample(&mut rng, n, k).into_vec();
    rows.sort_unstable();
    let offline = Offline::new(config)?;
    let inputs = dataset.inputs();
    let checks = with_workers(config.workers, || {
        rows.par_iter()
            .map(|&r| {
                let s = solve_sample(&offline, config, &inputs[r])?;
                let avg = s.rve.average(&s.solution.f);
                let avg_err = (avg - stretch(&inputs[r])).abs().max();
                let pbar_err = (s.solution.pbar - dataset.pbar[r]).norm() / dataset.pbar[r].norm().max(1e-300);
                let num: f64 = s.weighted.iter().zip(&dataset.stress[r]).map(|(a, b)| (a - b).powi(2)).sum();
                let den: f64 = dataset.stress[r].iter().map(|b| b * b).sum();
                Ok((avg_err, pbar_err, (num / den.max(1e-300)).sqrt()))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let mut rep = ValidationReport {
        checked: rows,
        ..Default::default()
    };
    for (a, p, s) in checks {
        rep.max_average_error = rep.max_average_error.max(a);
        rep.max_pbar_mismatch = rep.max_pbar_mismatch.max(p);
        rep.max_stress_mismatch = rep.max_stress_mismatch.max(s);
    }
    Ok(rep)
}
