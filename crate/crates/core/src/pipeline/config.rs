use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::macrofem::MacroOptions;
use crate::material::NeoHookean;
use crate::microfem::{Phases, SolverOptions};
use crate::morph::{Family, ParentGeometry};
use crate::regress::GprOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    SobolCorners,
    Sobol,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoScaleConfig {
    pub nx: usize,
    pub ny: usize,
    pub traction: f64,
    /// Multiplies the panel coordinates.
    pub scale: f64,
    pub macro_solver: MacroOptions,
}

impl Default for TwoScaleConfig {
    fn default() -> Self {
        TwoScaleConfig {
            nx: 20,
            ny: 10,
            traction: 0.05,
            scale: 1.0,
            macro_solver: MacroOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub family: Family,
    /// Ranges of `U_xx, U_yy, U_xy`.
    pub loading_ranges: [[f64; 2]; 3],
    /// Geometry ranges; the family defaults when absent.
    pub geometry_ranges: Option<Vec<[f64; 2]>>,
    /// Parent fiber radius for the ellipse family.
    pub radius: f64,
    /// Poisson ratio of the auxiliary problem.
    pub xi: f64,
    pub refinement: usize,
    /// `[C1, D1]` of the matrix.
    pub matrix: [f64; 2],
    /// `[C1, D1]` of the fiber.
    pub fiber: [f64; 2],
    pub n_samples: usize,
    pub sampler: Sampler,
    pub n_test: usize,
    pub n_modes: usize,
    /// Relative eigenvalue cutoff of the reduced auxiliary problem.
    pub aux_tol: f64,
    pub gpr: GprOptions,
    pub solver: SolverOptions,
    pub twoscale: TwoScaleConfig,
    pub seed: u64,
    /// Worker threads; all available when absent.
    pub workers: Option<usize>,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            family: Family::Ellipse,
            loading_ranges: [[0.85, 1.15], [0.85, 1.15], [-0.15, 0.15]],
            geometry_ranges: None,
            radius: 0.225,
            xi: 0.3,
            refinement: 14,
            matrix: [1.0, 1.0],
            fiber: [100.0, 100.0],
            n_samples: 300,
            sampler: Sampler::SobolCorners,
            n_test: 50,
            n_modes: 10,
            aux_tol: 1e-10,
            gpr: GprOptions::default(),
            solver: SolverOptions::default(),
            twoscale: TwoScaleConfig::default(),
            seed: 0,
            workers: None,
            output: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: RunConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        RunConfig::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        for r in self.input_ranges() {
            if !(r[0].is_finite() && r[1].is_finite() && r[1] > r[0]) {
                return bad(format!("empty or non-finite range {r:?}"));
            }
        }
        if self.geometry_ranges().len() != self.family.dim() {
            return bad(format!("{:?} needs {} geometry ranges", self.family, self.family.dim()));
        }
        if self.loading_ranges[0][0] <= 0.0 || self.loading_ranges[1][0] <= 0.0 {
            return bad("diagonal stretch ranges must be positive".into());
        }
        if self.n_modes == 0 || self.n_modes > self.n_samples {
            return bad(format!("need 1 <= N <= N_s, got N = {} and N_s = {}", self.n_modes, self.n_samples));
        }
        if !(self.xi > -1.0 && self.xi < 0.5) {
            return bad(format!("auxiliary Poisson ratio {} outside (-1, 0.5)", self.xi));
        }
        if self.family == Family::Ellipse && !(self.radius > 0.0 && self.radius < 0.5) {
            return bad(format!("radius {} outside (0, 0.5)", self.radius));
        }
        if self.workers == Some(0) {
            return bad("workers must be positive".into());
        }
        NeoHookean::new(self.matrix[0], self.matrix[1])?;
        NeoHookean::new(self.fiber[0], self.fiber[1])?;
        Ok(())
    }

    pub fn geometry_ranges(&self) -> Vec<[f64; 2]> {
        self.geometry_ranges.clone().unwrap_or_else(|| self.family.default_ranges())
    }

    /// Ranges of the regression inputs `[U_xx, U_yy, U_xy, mu..]`.
    pub fn input_ranges(&self) -> Vec<[f64; 2]> {
        let mut r = self.loading_ranges.to_vec();
        r.extend(self.geometry_ranges());
        r
    }

    pub fn phases(&self) -> Result<Phases> {
        Ok(Phases {
            matrix: NeoHookean::new(self.matrix[0], self.matrix[1])?,
            fiber: NeoHookean::new(self.fiber[0], self.fiber[1])?,
        })
    }

    pub fn parent(&self) -> ParentGeometry {
        ParentGeometry::for_family(self.family, self.radius)
    }

    /// SHA-256 of the configuration with run-location fields cleared.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.workers = None;
        c.output = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let back = RunConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn partial_json_uses_defaults() {
        let c = RunConfig::from_json(r#"{"family": "spline", "n_samples": 200, "seed": 4}"#).unwrap();
        assert_eq!(c.family, Family::Spline);
        assert_eq!(c.input_ranges().len(), 7);
        assert_eq!(c.n_modes, 10);
    }

    #[test]
    fn hash_ignores_location() {
        let a = RunConfig::default();
        let b = RunConfig {
            workers: Some(3),
            output: "elsewhere".into(),
            ..a.clone()
        };
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig { seed: 1, ..a.clone() };
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn rejects_inconsistent() {
        assert!(RunConfig::from_json(r#"{"n_modes": 0}"#).is_err());
        assert!(RunConfig::from_json(r#"{"n_modes": 20, "n_samples": 10}"#).is_err());
        assert!(RunConfig::from_json(r#"{"xi": 0.5}"#).is_err());
        assert!(RunConfig::from_json(r#"{"geometry_ranges": [[0.1, 0.3]]}"#).is_err());
        assert!(RunConfig::from_json(r#"{"unknown": 1}"#).is_err());
    }
}
