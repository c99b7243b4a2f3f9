//! Run configuration, parsed from JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use shearwave::fields::KernelModeSet;
use shearwave::profiles::{DynamicCondition, LatticeSpec, ShearProfile, WaveParams};
use shearwave::residuals::DEFAULT_EPS;
use shearwave::vertical::{VerticalGrid, VerticalKind};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProfileSpec {
    /// `U(x3) = sum coeffs[n] x3^n` on `[-depth, 0]`.
    Polynomial { coeffs: Vec<f64>, depth: f64 },
    Constant { value: f64, depth: f64 },
    /// Cubic-spline interpolation of samples; the last node must be 0.
    Sampled { x3: Vec<f64>, u: Vec<f64> },
}

impl ProfileSpec {
    pub fn build(&self) -> Result<ShearProfile, CliError> {
        Ok(match self {
            Self::Polynomial { coeffs, depth } => ShearProfile::polynomial(coeffs.clone(), *depth)?,
            Self::Constant { value, depth } => ShearProfile::constant(*value, *depth)?,
            Self::Sampled { x3, u } => ShearProfile::sampled(x3.clone(), u.clone())?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaSpec {
    Value(f64),
    /// Calibrate so that the lattice index becomes resonant.
    Calibrate { calibrate: [i64; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ConditionSpec {
    CapillaryGravity,
    /// `D(s) = sum coeffs[n] s^n` with `s = |k|^2`.
    Polynomial { coeffs: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    pub g: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<SigmaSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamic_condition: Option<ConditionSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeBlock {
    pub lambda1: f64,
    pub lambda2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    #[serde(default = "default_vertical")]
    pub vertical: VerticalChoice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerticalChoice {
    Chebyshev,
    Uniform,
}

fn default_vertical() -> VerticalChoice {
    VerticalChoice::Chebyshev
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n1: 16,
            n2: 16,
            n3: 33,
            vertical: VerticalChoice::Chebyshev,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_riccati")]
    pub riccati: f64,
    #[serde(default = "default_membership")]
    pub membership: f64,
}

fn default_riccati() -> f64 {
    shearwave::obstruction::FIELD_TOL
}

fn default_membership() -> f64 {
    shearwave::dispersion::DEFAULT_MEMBERSHIP_TOL
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            riccati: default_riccati(),
            membership: default_membership(),
        }
    }
}

/// Trivial-state modulation `U(x3) (1 + amplitude cos(j kappa2 x2))` used by `verify`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Modulation {
    pub amplitude: f64,
    pub j: u32,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    /// Kernel amplitude added to the trivial state; 0 checks the trivial state alone.
    #[serde(default)]
    pub eps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulation: Option<Modulation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    #[serde(default = "default_eps")]
    pub eps: Vec<f64>,
}

fn default_eps() -> Vec<f64> {
    DEFAULT_EPS.to_vec()
}

impl Default for ProbeSpec {
    fn default() -> Self {
        Self { eps: default_eps() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    /// Scan radius in `|k|`; defaults to the kernel cutoff radius.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub profile: ProfileSpec,
    pub params: ParamsSpec,
    pub lattice: LatticeBlock,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub amplitudes: KernelModeSet,
    #[serde(default)]
    pub verify: VerifySpec,
    #[serde(default)]
    pub probe: ProbeSpec,
    #[serde(default)]
    pub scan: ScanSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| CliError::Config {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |path: &str, message: String| {
            Err(CliError::Config {
                path: path.to_string(),
                message,
            })
        };
        for (path, v) in [
            ("tolerances.riccati", self.tolerances.riccati),
            ("tolerances.membership", self.tolerances.membership),
        ] {
            if !(v > 0.0) {
                return bad(path, format!("tolerance must be positive, got {v}"));
            }
        }
        let g = self.grid;
        if g.n1 == 0 || g.n2 == 0 || g.n1 % 2 == 1 || g.n2 % 2 == 1 {
            return bad("grid", format!("n1, n2 must be even and positive, got {}x{}", g.n1, g.n2));
        }
        if g.n3 < 4 {
            return bad("grid.n3", format!("need at least 4 vertical nodes, got {}", g.n3));
        }
        if self.probe.eps.iter().any(|&e| !(e > 0.0)) {
            return bad("probe.eps", "amplitudes must be positive".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical (compact, fixed field order) serialization.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn lattice(&self) -> Result<LatticeSpec, CliError> {
        Ok(LatticeSpec::new(self.lattice.lambda1, self.lattice.lambda2)?)
    }

    pub fn vgrid(&self, depth: f64) -> VerticalGrid {
        match self.grid.vertical {
            VerticalChoice::Chebyshev => VerticalGrid::chebyshev(self.grid.n3, depth),
            VerticalChoice::Uniform => VerticalGrid::uniform(self.grid.n3, depth),
        }
    }

    pub fn vertical_kind(&self) -> VerticalKind {
        match self.grid.vertical {
            VerticalChoice::Chebyshev => VerticalKind::Chebyshev,
            VerticalChoice::Uniform => VerticalKind::Uniform,
        }
    }

    /// Parses `N1xN2xN3`.
    pub fn override_grid(&mut self, spec: &str) -> Result<(), CliError> {
        let parts: Vec<usize> = spec
            .split('x')
            .map(|p| p.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Config {
                path: "--grid".into(),
                message: e.to_string(),
            })?;
        let [n1, n2, n3] = parts[..] else {
            return Err(CliError::Config {
                path: "--grid".into(),
                message: format!("expected N1xN2xN3, got {spec}"),
            });
        };
        self.grid.n1 = n1;
        self.grid.n2 = n2;
        self.grid.n3 = n3;
        self.validate()
    }

    pub fn override_tol(&mut self, tol: f64) -> Result<(), CliError> {
        self.tolerances.riccati = tol;
        self.validate()
    }
}

impl ParamsSpec {
    /// Wave parameters with `sigma` resolved; calibration needs the profile and lattice.
    pub fn build(
        &self,
        calibrate: impl FnOnce([i64; 2]) -> Result<f64, CliError>,
    ) -> Result<(WaveParams, Option<[i64; 2]>), CliError> {
        match &self.dynamic_condition {
            Some(ConditionSpec::Polynomial { coeffs }) => Ok((
                WaveParams::with_condition(self.g, DynamicCondition::Polynomial(coeffs.clone()))?,
                None,
            )),
            Some(ConditionSpec::CapillaryGravity) | None => match &self.sigma {
                Some(SigmaSpec::Value(s)) => Ok((WaveParams::capillary_gravity(self.g, *s)?, None)),
                Some(SigmaSpec::Calibrate { calibrate: target }) => {
                    let s = calibrate(*target)?;
                    Ok((WaveParams::capillary_gravity(self.g, s)?, Some(*target)))
                }
                None => Err(CliError::Config {
                    path: "params.sigma".into(),
                    message: "capillary-gravity law needs sigma".into(),
                }),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"{
        "profile": {"kind": "polynomial", "coeffs": [2.0, 1.0], "depth": 1.0},
        "params": {"g": 1.0, "sigma": {"calibrate": [1, 1]}},
        "lattice": {"lambda1": 6.283185307179586, "lambda2": 4.0},
        "amplitudes": {"modes": [{"k": [1, 1], "a": 1.0}]}
    }"#;

    #[test]
    fn round_trip() {
        let cfg = RunConfig::from_json(EXAMPLE).unwrap();
        let again = RunConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
        assert_eq!(cfg.grid, GridSpec::default());
    }

    #[test]
    fn schema_errors_carry_paths() {
        let bad = EXAMPLE.replace("\"g\": 1.0", "\"g\": \"heavy\"");
        match RunConfig::from_json(&bad) {
            Err(CliError::Config { path, .. }) => assert_eq!(path, "params.g"),
            other => panic!("{other:?}"),
        }
        let bad = EXAMPLE.replace("\"depth\": 1.0", "\"depth\": 1.0, \"colour\": 3");
        assert!(matches!(RunConfig::from_json(&bad), Err(CliError::Config { .. })));
    }

    #[test]
    fn grid_override() {
        let mut cfg = RunConfig::from_json(EXAMPLE).unwrap();
        cfg.override_grid("8x12x17").unwrap();
        assert_eq!((cfg.grid.n1, cfg.grid.n2, cfg.grid.n3), (8, 12, 17));
        assert!(cfg.override_grid("7x8x9").is_err());
        assert!(cfg.override_grid("8x8").is_err());
        assert!(cfg.override_tol(-1.0).is_err());
    }
}
