//! Run configuration: a TOML file of flat `key = value` pairs under section headers.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use manhattan_core::manhattan::EstimatorOptions;
use manhattan_core::reps::{FenchelNielsen, MarkedRepresentation};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    GenusTwo,
    FreeRank2,
}

/// One hyperbolic structure: Fenchel–Nielsen coordinates in genus 2, or the
/// traces of `a`, `b`, `ab` in the rank-2 free group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lengths: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub twists: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub traces: Option<[f64; 3]>,
}

impl SurfaceConfig {
    pub fn fenchel_nielsen(lengths: [f64; 3], twists: [f64; 3]) -> Self {
        SurfaceConfig {
            lengths: Some(lengths),
            twists: Some(twists),
            traces: None,
        }
    }

    pub fn free_pair(traces: [f64; 3]) -> Self {
        SurfaceConfig {
            lengths: None,
            twists: None,
            traces: Some(traces),
        }
    }

    pub fn build(&self, mode: Mode) -> Result<MarkedRepresentation> {
        match mode {
            Mode::GenusTwo => {
                let lengths = self.lengths.context("genus-two surface needs `lengths`")?;
                if self.traces.is_some() {
                    bail!("`traces` only applies to mode free-rank2");
                }
                let fn_ = FenchelNielsen::new(lengths, self.twists.unwrap_or([0.0; 3]));
                MarkedRepresentation::from_fenchel_nielsen(&fn_).context("reps")
            }
            Mode::FreeRank2 => {
                let [a, b, ab] = self.traces.context("free-rank2 surface needs `traces`")?;
                if self.lengths.is_some() || self.twists.is_some() {
                    bail!("`lengths`/`twists` only apply to mode genus-two");
                }
                MarkedRepresentation::from_free_pair(a, b, ab).context("reps")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub mode: Mode,
    /// Cutoff `T` of the `(1, 1)` pair spectrum.
    pub cutoff: f64,
    pub seed: u64,
    pub out: PathBuf,
    /// Count primitive classes only.
    pub primitive_only: bool,
    /// Also enumerate `(1, 0)` and `(0, 1)` spectra at `cutoff / 2` for the curve.
    pub side_spectra: bool,
    /// Radius of the orbit ball for the orbit-frame estimate (0 disables it).
    pub orbit_radius: f64,
    pub max_nodes: usize,
    pub max_classes: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            mode: Mode::GenusTwo,
            cutoff: 24.0,
            seed: 1,
            out: PathBuf::from("out"),
            primitive_only: false,
            side_spectra: true,
            orbit_radius: 0.0,
            max_nodes: 2_000_000_000,
            max_classes: 5_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    /// Curve directions; empty means the default grid.
    pub thetas: Vec<f64>,
    /// Slope-grid size between the dilation bounds; the outermost points are often too sparse to estimate.
    pub lambda_points: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            thetas: Vec::new(),
            lambda_points: 11,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    /// Largest power `n` of twist or pseudo-Anosov families.
    pub steps: usize,
    /// Pants curve index (0 = `a`, 1 = `c`, 2 = `abAB`) in genus 2;
    /// generator index (0 = `a`, 1 = `b`) in the free group.
    pub curve: usize,
    /// Class population each member of a family is enumerated to.
    pub population: usize,
    /// Largest cutoff an adaptive enumeration may reach.
    pub max_cutoff: f64,
    /// Random pairs of the ads-verify battery.
    pub pairs: usize,
    /// Samples per period of the fn-path grid.
    pub period_samples: usize,
    /// Number of periods of the fn-path grid.
    pub periods: usize,
    /// Twist amplitude of the fn-path (1 = full period grid, 0 = constant path).
    pub amplitude: f64,
    /// Twist parameters of the isolation-continuity path.
    pub path: Vec<f64>,
    /// Word length through which the exact Dehn-twist layer checks classes.
    pub exact_word_length: usize,
    pub exact_power: usize,
    /// Absolute tolerance of the exact layers.
    pub exact_tol: f64,
    /// Required drop of `delta` from `n = 0` to `n = steps` (dehn-twist).
    pub min_drop: f64,
    /// Required drop of `delta` over the pseudo-anosov family.
    pub pa_min_drop: f64,
    /// Lower bound for the shrink family (liminf > 0 at desk scale).
    pub min_exponent: f64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            steps: 3,
            curve: 0,
            population: 400,
            max_cutoff: 160.0,
            pairs: 10_000,
            period_samples: 4,
            periods: 2,
            amplitude: 1.0,
            path: vec![0.05, 0.1, 0.2, 0.3, 0.4],
            exact_word_length: 6,
            exact_power: 5,
            exact_tol: 1e-8,
            min_drop: 0.02,
            pa_min_drop: 0.05,
            min_exponent: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub run: RunSection,
    pub surface1: SurfaceConfig,
    pub surface2: SurfaceConfig,
    #[serde(default)]
    pub estimator: EstimatorOptions,
    #[serde(default)]
    pub grids: GridSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let s = SurfaceConfig::fenchel_nielsen([2.0; 3], [0.0; 3]);
        RunConfig {
            run: RunSection::default(),
            surface1: s.clone(),
            surface2: s,
            estimator: EstimatorOptions::default(),
            grids: GridSection::default(),
            experiment: ExperimentSection::default(),
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub cutoff: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).context("config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("config: reading {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn with_overrides(mut self, o: &Overrides) -> Result<Self> {
        if let Some(t) = o.cutoff {
            self.run.cutoff = t;
        }
        if let Some(s) = o.seed {
            self.run.seed = s;
        }
        if let Some(p) = &o.out {
            self.run.out = p.clone();
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| -> Result<()> {
            if !(v > 0.0 && v.is_finite()) {
                bail!("config: {name} must be positive, got {v}");
            }
            Ok(())
        };
        positive("run.cutoff", self.run.cutoff)?;
        positive("experiment.max_cutoff", self.experiment.max_cutoff)?;
        if self.run.orbit_radius < 0.0 {
            bail!("config: run.orbit_radius must be non-negative");
        }
        let e = &self.estimator;
        if !(e.tail_fraction > 0.0 && e.tail_fraction < 1.0) {
            bail!("config: estimator.tail_fraction must lie in (0, 1)");
        }
        if e.samples < 8 {
            bail!("config: estimator.samples must be at least 8");
        }
        if self.experiment.curve > 2 {
            bail!("config: experiment.curve must be 0, 1 or 2");
        }
        Ok(())
    }

    /// Canonical TOML echo of the effective configuration.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of [`RunConfig::echo`], hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.echo().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn representations(&self) -> Result<(MarkedRepresentation, MarkedRepresentation)> {
        Ok((
            self.surface1.build(self.run.mode).context("surface1")?,
            self.surface2.build(self.run.mode).context("surface2")?,
        ))
    }

    pub fn estimator(&self) -> &EstimatorOptions {
        &self.estimator
    }
}
