//! Seeded finite scenario sets: random coefficient, load and obstacle
//! fields realized as clipped truncated sine expansions.
//!
//! A field is `clip(base + sum_m xi_m * amp_m * sin(pi k1 s1) sin(pi k2 s2))`
//! with `xi_m ~ Uniform[-1, 1]` drawn independently per scenario. Draws come
//! from a counter-based ChaCha stream addressed by `(seed, scenario, field,
//! mode)`, so any scenario can be regenerated on its own.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Upper bound on modes per field; fixes the counter layout of the draws.
pub const MAX_MODES: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Mode {
    #[cfg_attr(feature = "serde", serde(rename = "amp"))]
    pub amplitude: f64,
    #[cfg_attr(feature = "serde", serde(rename = "k"))]
    pub wavenumbers: (u32, u32),
}

impl Mode {
    pub fn new(amplitude: f64, k1: u32, k2: u32) -> Self {
        Self {
            amplitude,
            wavenumbers: (k1, k2),
        }
    }

    fn shape(&self, s1: f64, s2: f64) -> f64 {
        let (k1, k2) = self.wavenumbers;
        libm::sin(PI * k1 as f64 * s1) * libm::sin(PI * k2 as f64 * s2)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FieldSpec {
    pub base: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub modes: Vec<Mode>,
    /// Optional clip interval `(lo, hi)`; mandatory for diffusion coefficients.
    #[cfg_attr(feature = "serde", serde(default))]
    pub clip: Option<(f64, f64)>,
    /// Spectral decay exponent: mode amplitudes are scaled by
    /// `(k1^2 + k2^2)^(-decay/2)`. Zero keeps the amplitudes as given.
    #[cfg_attr(feature = "serde", serde(default))]
    pub decay: f64,
    /// Nodal baseline replacing `base`: one value per grid node for loads,
    /// obstacles and targets, per lattice point for coefficients.
    #[cfg_attr(
        feature = "serde",
        serde(default, skip_serializing_if = "Option::is_none")
    )]
    pub nodal: Option<Vec<f64>>,
}

impl FieldSpec {
    pub fn constant(base: f64) -> Self {
        Self {
            base,
            modes: Vec::new(),
            clip: None,
            decay: 0.0,
            nodal: None,
        }
    }

    /// A field whose baseline is given per node.
    pub fn nodal(values: Vec<f64>) -> Self {
        Self {
            nodal: Some(values),
            ..Self::constant(0.0)
        }
    }

    pub fn with_modes(mut self, modes: Vec<Mode>) -> Self {
        self.modes = modes;
        self
    }

    pub fn with_clip(mut self, lo: f64, hi: f64) -> Self {
        self.clip = Some((lo, hi));
        self
    }

    fn effective_amplitude(&self, m: &Mode) -> f64 {
        if self.decay == 0.0 {
            return m.amplitude;
        }
        let (k1, k2) = m.wavenumbers;
        let k2sum = (k1 as f64) * (k1 as f64) + (k2 as f64) * (k2 as f64);
        m.amplitude * libm::pow(k2sum, -0.5 * self.decay)
    }

    /// Field value at `(s1, s2)` for mode coefficients `xi`, ignoring any
    /// nodal baseline.
    pub fn evaluate(&self, xi: &[f64], s1: f64, s2: f64) -> f64 {
        self.evaluate_from(self.base, xi, s1, s2)
    }

    /// Field value at sample point `idx` of a grid (node or lattice index,
    /// matching the length of the nodal baseline).
    pub fn evaluate_at(&self, idx: usize, xi: &[f64], s1: f64, s2: f64) -> f64 {
        let base = match &self.nodal {
            Some(v) => v[idx],
            None => self.base,
        };
        self.evaluate_from(base, xi, s1, s2)
    }

    /// Checks that a nodal baseline, if any, has `len` finite values.
    pub fn check_nodal(&self, name: &str, len: usize) -> Result<()> {
        match &self.nodal {
            Some(v) if v.len() != len => Err(Error::Dimension(format!(
                "{name}: nodal baseline has {} values, expected {len}",
                v.len()
            ))),
            Some(v) if v.iter().any(|x| !x.is_finite()) => Err(Error::InvalidInput(format!(
                "{name}: nodal baseline has non-finite entries"
            ))),
            _ => Ok(()),
        }
    }

    fn evaluate_from(&self, base: f64, xi: &[f64], s1: f64, s2: f64) -> f64 {
        let mut v = base;
        for (m, x) in self.modes.iter().zip(xi) {
            v += x * self.effective_amplitude(m) * m.shape(s1, s2);
        }
        match self.clip {
            Some((lo, hi)) => v.max(lo).min(hi),
            None => v,
        }
    }

    /// Deterministic evaluation with every mode coefficient equal to one.
    pub fn evaluate_deterministic(&self, idx: usize, s1: f64, s2: f64) -> f64 {
        let ones = alloc::vec![1.0; self.modes.len()];
        self.evaluate_at(idx, &ones, s1, s2)
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if !self.base.is_finite() || self.modes.iter().any(|m| !m.amplitude.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "{name}: non-finite field parameter"
            )));
        }
        if self.modes.len() > MAX_MODES {
            return Err(Error::InvalidInput(format!(
                "{name}: more than {MAX_MODES} modes"
            )));
        }
        if self
            .modes
            .iter()
            .any(|m| m.wavenumbers.0 == 0 || m.wavenumbers.1 == 0)
        {
            return Err(Error::InvalidInput(format!(
                "{name}: wavenumbers must be positive"
            )));
        }
        if !(self.decay >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "{name}: decay exponent must be nonnegative"
            )));
        }
        if let Some((lo, hi)) = self.clip {
            if !(lo <= hi) {
                return Err(Error::InvalidInput(format!(
                    "{name}: clip interval [{lo}, {hi}] is empty"
                )));
            }
        }
        Ok(())
    }

    /// Validation for a diffusion coefficient: clip bounds are required and
    /// must satisfy `0 < a_min <= a_max`.
    pub fn validate_coefficient(&self) -> Result<()> {
        self.validate("coefficient")?;
        match self.clip {
            Some((lo, _)) if lo > 0.0 => Ok(()),
            Some((lo, _)) => Err(Error::InvalidInput(format!(
                "uniform ellipticity violated: coefficient lower bound a_min = {lo} must be > 0"
            ))),
            None => Err(Error::InvalidInput(
                "uniform ellipticity requires clip bounds (a_min, a_max) on the coefficient".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FieldTag {
    Coefficient = 0,
    Load = 1,
    Obstacle = 2,
}

/// Mode coefficients of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioDraw {
    pub coefficient: Vec<f64>,
    pub load: Vec<f64>,
    pub obstacle: Vec<f64>,
}

/// Nodal realization of one scenario on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizedScenario {
    /// Coefficient on the `(n1d+2)^2` lattice, boundary included.
    pub coefficient_lattice: Vec<f64>,
    pub coefficient: Vec<f64>,
    pub load: Vec<f64>,
    pub obstacle: Vec<f64>,
}

/// A finite probability space of `S` scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    coefficient: FieldSpec,
    load: FieldSpec,
    obstacle: FieldSpec,
    seed: u64,
    probabilities: Vec<f64>,
    draws: Vec<ScenarioDraw>,
}

fn uniform_pm1(bits: u64) -> f64 {
    // 53 random mantissa bits mapped to [-1, 1)
    let u = (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    2.0 * u - 1.0
}

fn draw(seed: u64, scenario: usize, tag: FieldTag, count: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(scenario as u64);
    (0..count)
        .map(|m| {
            // each draw consumes two 32-bit words of the keystream
            rng.set_word_pos(2 * (tag as u128 * MAX_MODES as u128 + m as u128));
            uniform_pm1(rng.next_u64())
        })
        .collect()
}

impl ScenarioSet {
    /// Draws `count` scenarios. `probabilities` defaults to uniform; a
    /// supplied vector must be positive and sum to one within `1e-12`.
    pub fn sample(
        coefficient: FieldSpec,
        load: FieldSpec,
        obstacle: FieldSpec,
        count: usize,
        seed: u64,
        probabilities: Option<Vec<f64>>,
    ) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidInput(
                "scenario count must be at least 1".into(),
            ));
        }
        coefficient.validate_coefficient()?;
        load.validate("load")?;
        obstacle.validate("obstacle")?;
        let probabilities = match probabilities {
            None => alloc::vec![1.0 / count as f64; count],
            Some(p) => {
                if p.len() != count {
                    return Err(Error::InvalidInput(format!(
                        "{} probabilities given for {count} scenarios",
                        p.len()
                    )));
                }
                if p.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                    return Err(Error::InvalidInput(
                        "scenario probabilities must be positive".into(),
                    ));
                }
                let total: f64 = p.iter().sum();
                if libm::fabs(total - 1.0) > 1e-12 {
                    return Err(Error::InvalidInput(format!(
                        "scenario probabilities sum to {total}, not 1"
                    )));
                }
                p.iter().map(|v| v / total).collect()
            }
        };
        let draws = (0..count)
            .map(|k| ScenarioDraw {
                coefficient: draw(seed, k, FieldTag::Coefficient, coefficient.modes.len()),
                load: draw(seed, k, FieldTag::Load, load.modes.len()),
                obstacle: draw(seed, k, FieldTag::Obstacle, obstacle.modes.len()),
            })
            .collect();
        Ok(Self {
            coefficient,
            load,
            obstacle,
            seed,
            probabilities,
            draws,
        })
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn draws(&self) -> &[ScenarioDraw] {
        &self.draws
    }

    pub fn coefficient_spec(&self) -> &FieldSpec {
        &self.coefficient
    }

    pub fn load_spec(&self) -> &FieldSpec {
        &self.load
    }

    pub fn obstacle_spec(&self) -> &FieldSpec {
        &self.obstacle
    }

    /// Same draws with a different (validated) probability vector.
    pub fn with_probabilities(&self, probabilities: Vec<f64>) -> Result<Self> {
        let mut out = Self::sample(
            self.coefficient.clone(),
            self.load.clone(),
            self.obstacle.clone(),
            self.len(),
            self.seed,
            Some(probabilities),
        )?;
        out.draws = self.draws.clone();
        Ok(out)
    }

    pub fn realize_one(&self, k: usize, grid: &Grid) -> RealizedScenario {
        let d = &self.draws[k];
        let coefficient_lattice = grid.sample_lattice_indexed(|i, s1, s2| {
            self.coefficient.evaluate_at(i, &d.coefficient, s1, s2)
        });
        RealizedScenario {
            coefficient: grid.interior_of(&coefficient_lattice),
            coefficient_lattice,
            load: grid.sample_nodes_indexed(|i, s1, s2| self.load.evaluate_at(i, &d.load, s1, s2)),
            obstacle: grid.sample_nodes_indexed(|i, s1, s2| {
                self.obstacle.evaluate_at(i, &d.obstacle, s1, s2)
            }),
        }
    }

    pub fn realize(&self, grid: &Grid) -> Vec<RealizedScenario> {
        (0..self.len()).map(|k| self.realize_one(k, grid)).collect()
    }
}

/// `(min, max)` of the coefficient over all scenarios and lattice points.
pub fn ellipticity_report(realized: &[RealizedScenario]) -> (f64, f64) {
    realized
        .iter()
        .flat_map(|r| r.coefficient_lattice.iter().copied())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        })
}
