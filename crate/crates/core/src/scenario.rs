//! Scenario files: initial data, resolution, stages and tolerances.
//!
//! A scenario is a single JSON object. Every tolerance has a default, and
//! unknown fields are rejected so that typos surface as errors.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::compare::{shift_profile, HighfreqConfig};
use crate::error::{Error, Result};
use crate::field::{SpectralGrid, StateField};
use crate::flow::{DEFAULT_DT, DEFAULT_POINT_COUNT};
use crate::normalization::NormalizationOptions;
use crate::spectral::SpectrumOptions;

/// One Fourier mode `û(n) = re + i·im`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub n: i64,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// Named initial data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Zero,
    Constant {
        a: f64,
    },
    PlaneWave {
        n: i64,
        a: f64,
    },
    ModeList {
        modes: Vec<ModeSpec>,
    },
    /// `profile` moved to base mode `level` and rescaled to `‖·‖_{H^s} = norm`
    /// (the profile's own `H^s` norm when absent).
    Highfreq {
        profile: Box<Profile>,
        level: usize,
        #[serde(default = "default_highfreq_s")]
        s: f64,
        #[serde(default)]
        norm: Option<f64>,
    },
}

fn default_highfreq_s() -> f64 {
    2.0
}

impl Profile {
    /// Samples the profile on `grid`.
    pub fn build(&self, grid: SpectralGrid) -> Result<StateField> {
        match self {
            Profile::Zero => Ok(StateField::zeros(grid)),
            Profile::Constant { a } => Ok(StateField::constant(grid, Complex64::new(*a, 0.0))),
            Profile::PlaneWave { n, a } => Self::ModeList {
                modes: vec![ModeSpec {
                    n: *n,
                    re: *a,
                    im: 0.0,
                }],
            }
            .build(grid),
            Profile::ModeList { modes } => {
                let mut seen = BTreeSet::new();
                let mut coeffs = vec![Complex64::new(0.0, 0.0); grid.point_count()];
                for m in modes {
                    if !seen.insert(m.n) {
                        return Err(Error::Config(format!("mode {} listed twice", m.n)));
                    }
                    if !(m.re.is_finite() && m.im.is_finite()) {
                        return Err(Error::Config(format!(
                            "mode {} has a non-finite amplitude",
                            m.n
                        )));
                    }
                    let slot = grid
                        .slot(m.n)
                        .filter(|_| m.n != grid.min_mode())
                        .ok_or_else(|| {
                            Error::Config(format!(
                                "mode {} does not fit on {} points",
                                m.n,
                                grid.point_count()
                            ))
                        })?;
                    coeffs[slot] = Complex64::new(m.re, m.im);
                }
                StateField::from_modes(grid, coeffs)
            }
            Profile::Highfreq {
                profile,
                level,
                s,
                norm,
            } => {
                let base = profile.build(grid)?;
                let target = match norm {
                    Some(m) => *m,
                    None => base.sobolev_norm(*s)?,
                };
                shift_profile(&base, *level, *s, target)
            }
        }
    }
}

/// Bounds used by the acceptance checks. Pinned constants are measured
/// values of the bundled scenarios with a safety margin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Discriminant against its closed form.
    pub discriminant: f64,
    /// Periodic eigenvalues of the zero potential against `nπ`.
    pub eigenvalue: f64,
    /// Frequencies of the zero potential against `4π²n²`.
    pub zero_frequency: f64,
    /// Gap lengths of the constant potential.
    pub gap_length: f64,
    /// `ω_0 = 2a²` for constant data.
    pub constant_frequency: f64,
    /// Trajectory against an exact solution, `H⁰`.
    pub exact_solution: f64,
    /// Extracted frequencies against exact ones, relative.
    pub extracted_relative: f64,
    /// Spectral frequencies against extracted ones, relative.
    pub pipeline_relative: f64,
    /// Modes below this amplitude are not extracted.
    pub amplitude_floor: f64,
    pub l2_drift: f64,
    /// Expected ratio of Hamiltonian drifts at `dt` and `dt/2`.
    pub hamiltonian_ratio: f64,
    /// Relative band around `hamiltonian_ratio`.
    pub hamiltonian_ratio_band: f64,
    /// Forward-backward round trip, `H⁰`.
    pub round_trip: f64,
    pub normalization_residual: f64,
    pub trace_identity: f64,
    /// Change of a normalization integral under a radius change.
    pub contour_change: f64,
    /// Alternative radius scale for the contour check.
    pub contour_alt_scale: f64,
    /// Largest admissible log-log slope of `|ρ_n|`.
    pub rho_slope: f64,
    /// Range of `|n|` for the `ρ_n` slope and the half-range sum.
    pub asymptotic_range: (i64, i64),
    /// Pinned bound on `max (1+|n|)|ρ_n|`.
    pub weighted_rho: Option<f64>,
    /// Allowed relative change of the weighted bound when the grid doubles.
    pub resolution_change: f64,
    /// Radius of the `H²` ball the data must lie in.
    pub h2_radius: f64,
    /// Pinned bound on `|n|·|Σ - ∫φ1φ2|`.
    pub half_range_sum: Option<f64>,
    /// Slope criterion of the boundedness verdict.
    pub bounded_fraction: f64,
    /// Pinned `C` in `‖u - w‖ ≤ C(1 + t)`.
    pub linear_growth: Option<f64>,
    /// Start of the non-increasing running maximum.
    pub running_max_after: f64,
    /// Residual bound for the zero scenario.
    pub zero_residual: f64,
    /// Wall-clock budgets in seconds, keyed by criterion number.
    pub runtime: Vec<(u32, f64)>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            discriminant: 1e-8,
            eigenvalue: 1e-10,
            zero_frequency: 1e-9,
            gap_length: 1e-8,
            constant_frequency: 1e-6,
            exact_solution: 1e-9,
            extracted_relative: 1e-4,
            pipeline_relative: 1e-3,
            amplitude_floor: 0.05,
            l2_drift: 1e-10,
            hamiltonian_ratio: 4.0,
            hamiltonian_ratio_band: 0.2,
            round_trip: 1e-8,
            normalization_residual: 1e-8,
            trace_identity: 1e-6,
            contour_change: 1e-9,
            contour_alt_scale: 0.8,
            rho_slope: -0.8,
            asymptotic_range: (4, 24),
            weighted_rho: None,
            resolution_change: 0.1,
            h2_radius: 1.0,
            half_range_sum: None,
            bounded_fraction: 0.05,
            linear_growth: None,
            running_max_after: 5.0,
            zero_residual: 1e-9,
            runtime: vec![(1, 5.0), (2, 30.0), (3, 120.0), (6, 600.0)],
        }
    }
}

impl Tolerances {
    pub fn runtime_budget(&self, criterion: u32) -> Option<f64> {
        self.runtime
            .iter()
            .find(|(c, _)| *c == criterion)
            .map(|(_, b)| *b)
    }
}

/// Pipeline stages in execution order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Simulate,
    Spectrum,
    Sigma,
    Frequencies,
    Compare,
    Extract,
    Highfreq,
    Checks,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Simulate,
        Stage::Spectrum,
        Stage::Sigma,
        Stage::Frequencies,
        Stage::Compare,
        Stage::Extract,
        Stage::Highfreq,
        Stage::Checks,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Spectrum => "spectrum",
            Stage::Sigma => "sigma",
            Stage::Frequencies => "frequencies",
            Stage::Compare => "compare",
            Stage::Extract => "extract",
            Stage::Highfreq => "highfreq",
            Stage::Checks => "checks",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub profile: Profile,
    #[serde(default = "default_point_count")]
    pub point_count: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub t_end: f64,
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// Spectral index range `[-K, K]`.
    #[serde(rename = "K", default = "default_k")]
    pub k: usize,
    /// Frequencies are computed for `|n| ≤ frequency_range` (default `K`).
    #[serde(default)]
    pub frequency_range: Option<usize>,
    /// Sobolev indices of the `u - v` and `u - w` curves.
    #[serde(default = "default_s_values")]
    pub s_values: Vec<f64>,
    /// `N` of the `H^N` statements; difference curves use `N + 1`.
    #[serde(default = "default_sobolev_index")]
    pub sobolev_index: f64,
    /// Fractional index of the norm-boundedness check.
    #[serde(default = "default_fractional_index")]
    pub fractional_index: f64,
    #[serde(default)]
    pub spectrum: SpectrumOptions,
    #[serde(default)]
    pub normalization: NormalizationOptions,
    #[serde(default)]
    pub highfreq: Option<HighfreqConfig>,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Seed for randomized property runs; the pipeline itself is deterministic.
    #[serde(default)]
    pub seed: u64,
    /// Acceptance criteria (1 to 11) evaluated on this scenario.
    #[serde(default)]
    pub criteria: Vec<u32>,
    /// Stages to run; all by default.
    #[serde(default)]
    pub stages: Option<Vec<Stage>>,
    /// Also write the full trajectory CSV.
    #[serde(default)]
    pub write_trajectory: bool,
}

fn default_point_count() -> usize {
    DEFAULT_POINT_COUNT
}
fn default_dt() -> f64 {
    DEFAULT_DT
}
fn default_stride() -> usize {
    100
}
fn default_k() -> usize {
    16
}
fn default_s_values() -> Vec<f64> {
    vec![3.0]
}
fn default_sobolev_index() -> f64 {
    2.0
}
fn default_fractional_index() -> f64 {
    2.5
}

pub const CRITERIA: std::ops::RangeInclusive<u32> = 1..=11;

impl Scenario {
    /// Parses and validates a scenario; `origin` names the source in messages.
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let scn: Scenario = serde_json::from_str(text).map_err(|e| {
            Error::Config(format!(
                "{origin}: line {}, column {}: {e}",
                e.line(),
                e.column()
            ))
        })?;
        scn.validate()
            .map_err(|e| Error::Config(format!("{origin}: {e}")))?;
        Ok(scn)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "field `{name}` must be positive, got {v}"
                )))
            }
        };
        SpectralGrid::new(self.point_count)?;
        positive("dt", self.dt)?;
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!(
                "field `t_end` must be non-negative, got {}",
                self.t_end
            )));
        }
        if self.stride == 0 {
            return Err(Error::Config("field `stride` must be at least 1".into()));
        }
        if self.k < 4 {
            return Err(Error::Config(format!(
                "field `K` must be at least 4, got {}",
                self.k
            )));
        }
        if let Some(r) = self.frequency_range {
            if r > self.k {
                return Err(Error::Config(format!(
                    "field `frequency_range` ({r}) exceeds `K` ({})",
                    self.k
                )));
            }
        }
        for &s in &self.s_values {
            if !(s >= 0.0) {
                return Err(Error::Config(format!(
                    "field `s_values` holds negative index {s}"
                )));
            }
        }
        if !(self.sobolev_index >= 0.0 && self.fractional_index >= 0.0) {
            return Err(Error::Config("Sobolev indices must be non-negative".into()));
        }
        if let Profile::Constant { a } | Profile::PlaneWave { a, .. } = self.profile {
            if !a.is_finite() {
                return Err(Error::Config("profile amplitude must be finite".into()));
            }
        }
        if let Some(c) = self.criteria.iter().find(|c| !CRITERIA.contains(c)) {
            return Err(Error::Config(format!("unknown criterion {c}")));
        }
        let t = &self.tolerances;
        positive("tolerances.amplitude_floor", t.amplitude_floor)?;
        positive("tolerances.contour_alt_scale", t.contour_alt_scale)?;
        if t.asymptotic_range.0 < 1 || t.asymptotic_range.0 >= t.asymptotic_range.1 {
            return Err(Error::Config(
                "tolerances.asymptotic_range must satisfy 1 ≤ a < b".into(),
            ));
        }
        self.initial_state()?;
        Ok(())
    }

    pub fn grid(&self) -> SpectralGrid {
        SpectralGrid::new(self.point_count).expect("validated point count")
    }

    pub fn initial_state(&self) -> Result<StateField> {
        self.profile.build(SpectralGrid::new(self.point_count)?)
    }

    pub fn frequency_indices(&self) -> Vec<i64> {
        let r = self.frequency_range.unwrap_or(self.k) as i64;
        (-r..=r).collect()
    }

    pub fn runs(&self, stage: Stage) -> bool {
        self.stages.as_ref().is_none_or(|s| s.contains(&stage))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_scenario_uses_defaults() {
        let s =
            Scenario::from_json(r#"{"name": "z", "profile": {"kind": "zero"}}"#, "inline").unwrap();
        assert_eq!(s.point_count, DEFAULT_POINT_COUNT);
        assert_eq!(s.k, 16);
        assert_eq!(s.tolerances, Tolerances::default());
        assert!(s.runs(Stage::Checks));
    }

    #[test]
    fn unknown_field_reports_position() {
        let text = "{\n  \"name\": \"z\",\n  \"profile\": {\"kind\": \"zero\"},\n  \"dtt\": 1\n}";
        let err = Scenario::from_json(text, "bad.json")
            .unwrap_err()
            .to_string();
        assert!(
            err.contains("bad.json") && err.contains("line 4") && err.contains("dtt"),
            "{err}"
        );
    }

    #[test]
    fn invalid_values_are_rejected() {
        let bad = [
            r#"{"name": "x", "profile": {"kind": "zero"}, "dt": -1}"#,
            r#"{"name": "x", "profile": {"kind": "zero"}, "K": 2}"#,
            r#"{"name": "x", "profile": {"kind": "zero"}, "point_count": 7}"#,
            r#"{"name": "x", "profile": {"kind": "zero"}, "criteria": [12]}"#,
            r#"{"name": "x", "profile": {"kind": "mode_list", "modes": [{"n": 1, "re": 1}, {"n": 1, "re": 2}]}}"#,
            r#"{"name": "x", "profile": {"kind": "plane_wave", "n": 500, "a": 1}, "point_count": 16}"#,
        ];
        for text in bad {
            assert!(Scenario::from_json(text, "inline").is_err(), "{text}");
        }
    }

    #[test]
    fn profiles_build_expected_modes() {
        let g = SpectralGrid::new(32).unwrap();
        let pw = Profile::PlaneWave { n: 2, a: 0.3 }.build(g).unwrap();
        assert!((pw.coefficient(2).re - 0.3).abs() < 1e-15);
        assert!((pw.mass() - 0.09).abs() < 1e-15);
        let c = Profile::Constant { a: 0.5 }.build(g).unwrap();
        assert!((c.coefficient(0).re - 0.5).abs() < 1e-15);
        let hf = Profile::Highfreq {
            profile: Box::new(Profile::ModeList {
                modes: vec![
                    ModeSpec {
                        n: 1,
                        re: 0.5,
                        im: 0.0,
                    },
                    ModeSpec {
                        n: -2,
                        re: 0.2,
                        im: 0.0,
                    },
                ],
            }),
            level: 4,
            s: 2.0,
            norm: Some(1.0),
        }
        .build(g)
        .unwrap();
        assert!(hf.coefficient(4).norm() > 0.0 && hf.coefficient(-5).norm() > 0.0);
        assert!((hf.sobolev_norm(2.0).unwrap() - 1.0).abs() < 1e-12);
    }
}
