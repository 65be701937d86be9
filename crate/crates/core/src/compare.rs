//! Nearly linear flows and their distance to the true NLS flow.
//!
//! `v(t) = Σ û₀(n) e^{-iω_n t} e^{2πinx}` rotates every mode with its NLS
//! frequency; `w(t) = e^{-ict} Σ û₀(n) e^{-4iπ²n²t} e^{2πinx}` with
//! `c = 4∫|u₀|²` is the free flow with a global phase.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Potential, StateField};
use crate::flow::{evolve, Trajectory};
use crate::frequencies::{compute_frequencies, linear_fit, FrequencyTable};
use crate::normalization::NormalizationOptions;
use crate::output::num;
use crate::spectral::{periodic_spectrum_with, SpectrumOptions};

/// Coefficients below this are never reported as missing a frequency.
const COVERAGE_FLOOR: f64 = 1e-12;

/// Which approximation `u(t)` is compared against.
#[derive(Clone, Copy, Debug)]
pub enum Reference<'a> {
    /// `v(t)` with the given frequencies.
    NearlyLinear(&'a FrequencyTable),
    /// `w(t)`.
    ModifiedFree,
}

impl Reference<'_> {
    pub fn label(&self) -> &'static str {
        match self {
            Reference::NearlyLinear(_) => "u-v",
            Reference::ModifiedFree => "u-w",
        }
    }
}

/// A Sobolev norm sampled along a trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub s: f64,
    pub label: String,
}

impl NormSeries {
    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0, |a, &v| a.max(v))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# {} in H^{}", self.label, self.s)?;
        writeln!(out, "t,norm")?;
        for (t, v) in self.times.iter().zip(&self.values) {
            writeln!(out, "{},{}", num(*t), num(*v))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `4π²n² + 4∫|u₀|²`, the frequency used for modes a table does not cover.
pub fn fallback_frequency(u0: &StateField, n: i64) -> f64 {
    4.0 * PI * PI * (n * n) as f64 + 4.0 * u0.mass()
}

/// Per-slot frequencies of `v`; missing modes carrying energy are logged.
fn v_frequencies(u0: &StateField, omegas: &FrequencyTable) -> Vec<f64> {
    let grid = u0.grid();
    let mut missing = Vec::new();
    let freqs = grid
        .wavenumbers()
        .zip(u0.modes())
        .map(|(n, c)| match omegas.omega(n) {
            Some(w) => w,
            None => {
                if c.norm() > COVERAGE_FLOOR {
                    missing.push(n);
                }
                fallback_frequency(u0, n)
            }
        })
        .collect();
    if !missing.is_empty() {
        log::warn!("no spectral frequency for modes {missing:?}; using 4π²n² + 4∫|u0|²");
    }
    freqs
}

fn w_frequencies(u0: &StateField) -> Vec<f64> {
    u0.grid()
        .wavenumbers()
        .map(|n| fallback_frequency(u0, n))
        .collect()
}

fn rotate(u0: &StateField, freqs: &[f64], t: f64) -> StateField {
    let modes = u0
        .modes()
        .iter()
        .zip(freqs)
        .map(|(c, w)| c * Complex64::from_polar(1.0, -w * t))
        .collect();
    StateField::from_modes(u0.grid(), modes).expect("same grid")
}

/// `v(t)`.
pub fn build_v(u0: &StateField, omegas: &FrequencyTable, t: f64) -> StateField {
    rotate(u0, &v_frequencies(u0, omegas), t)
}

/// `w(t)`.
pub fn build_w(u0: &StateField, t: f64) -> StateField {
    rotate(u0, &w_frequencies(u0), t)
}

fn bracket_weights(u0: &StateField, s: f64) -> Vec<f64> {
    u0.grid()
        .wavenumbers()
        .map(|n| (n.unsigned_abs().max(1) as f64).powf(2.0 * s))
        .collect()
}

/// `‖u(t) - ref(t)‖_{H^s}` at every sample of `traj`.
pub fn difference_series(
    traj: &Trajectory,
    reference: Reference<'_>,
    s: f64,
) -> Result<NormSeries> {
    if !(s >= 0.0) {
        return Err(Error::Domain(format!(
            "Sobolev index must be non-negative, got {s}"
        )));
    }
    let u0 = traj.initial();
    let freqs = match reference {
        Reference::NearlyLinear(table) => v_frequencies(u0, table),
        Reference::ModifiedFree => w_frequencies(u0),
    };
    let weights = bracket_weights(u0, s);
    let values = traj
        .times
        .par_iter()
        .zip(&traj.states)
        .map(|(&t, u)| {
            u.modes()
                .iter()
                .zip(u0.modes())
                .zip(freqs.iter().zip(&weights))
                .map(|((a, b), (w, wt))| {
                    wt * (a - b * Complex64::from_polar(1.0, -w * t)).norm_sqr()
                })
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    Ok(NormSeries {
        times: traj.times.clone(),
        values,
        s,
        label: reference.label().into(),
    })
}

/// `‖u(t)‖_{H^s}` along the trajectory.
pub fn norm_series(traj: &Trajectory, s: f64) -> Result<NormSeries> {
    let values = traj
        .states
        .par_iter()
        .map(|u| u.sobolev_norm(s))
        .collect::<Result<_>>()?;
    Ok(NormSeries {
        times: traj.times.clone(),
        values,
        s,
        label: "u".into(),
    })
}

/// Outcome of the linear-trend test on a [`NormSeries`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub sup: f64,
    pub slope: f64,
    /// Length of the sampled time interval.
    pub span: f64,
    pub bounded: bool,
}

/// Series whose sup is below this are treated as identically zero.
pub const ZERO_SERIES_FLOOR: f64 = 1e-12;

/// Least-squares slope of the series; "bounded" when `|slope|·span < fraction·sup`.
pub fn boundedness_verdict(series: &NormSeries, fraction: f64) -> Verdict {
    let pts: Vec<(f64, f64)> = series
        .times
        .iter()
        .copied()
        .zip(series.values.iter().copied())
        .collect();
    let (_, slope) = linear_fit(&pts);
    let sup = series.sup();
    let span = match (series.times.first(), series.times.last()) {
        (Some(a), Some(b)) => (b - a).abs(),
        _ => 0.0,
    };
    let bounded = sup < ZERO_SERIES_FLOOR || slope * span < fraction * sup;
    Verdict {
        sup,
        slope,
        span,
        bounded,
    }
}

/// Empirical frequencies `-d/dt arg û(n, t)` for modes with `|û₀(n)| ≥ floor`.
pub fn extract_frequencies(traj: &Trajectory, amplitude_floor: f64) -> Result<BTreeMap<i64, f64>> {
    if traj.len() < 3 {
        return Err(Error::Config(
            "frequency extraction needs at least three samples".into(),
        ));
    }
    let u0 = traj.initial();
    let mass = u0.mass();
    let sample_dt = traj
        .times
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .fold(0.0, f64::max);
    let carried: Vec<(usize, i64)> = u0
        .grid()
        .wavenumbers()
        .enumerate()
        .filter(|(j, _)| u0.modes()[*j].norm() >= amplitude_floor)
        .collect();
    let mut out = BTreeMap::new();
    for (j, n) in carried {
        let advance = (4.0 * PI * PI * (n * n) as f64 + 4.0 * mass) * sample_dt;
        if advance >= PI {
            return Err(Error::Config(format!(
                "sampling interval {sample_dt:.3e} too coarse for mode {n} (phase advance {advance:.2} ≥ π)"
            )));
        }
        let series: Vec<Complex64> = traj.states.iter().map(|u| u.modes()[j]).collect();
        if series.iter().any(|z| z.norm() < amplitude_floor) {
            log::warn!("mode {n} dropped below the amplitude floor; skipped");
            continue;
        }
        let mut phase = series[0].arg();
        let mut pts = Vec::with_capacity(series.len());
        pts.push((traj.times[0], phase));
        for (k, w) in series.windows(2).enumerate() {
            phase += (w[1] / w[0]).arg();
            pts.push((traj.times[k + 1], phase));
        }
        out.insert(n, -linear_fit(&pts).1);
    }
    Ok(out)
}

/// Moves mode `n ≠ 0` to `sign(n)(|n| + L - 1)` and rescales to `‖·‖_{H^s} = target`.
pub fn shift_profile(profile: &StateField, base: usize, s: f64, target: f64) -> Result<StateField> {
    if base == 0 {
        return Err(Error::Config("base mode L must be at least 1".into()));
    }
    if profile.coefficient(0).norm() > 0.0 {
        return Err(Error::Config(
            "cannot shift a profile with a mean (mode 0)".into(),
        ));
    }
    let grid = profile.grid();
    let shift = base as i64 - 1;
    let mut modes = vec![Complex64::new(0.0, 0.0); grid.point_count()];
    for (n, c) in profile.modes_ascending() {
        if c.norm() == 0.0 {
            continue;
        }
        let m = n.signum() * (n.abs() + shift);
        let slot = grid
            .slot(m)
            .filter(|_| m != grid.min_mode())
            .ok_or_else(|| {
                Error::Config(format!(
                    "shifted mode {m} does not fit on {} points",
                    grid.point_count()
                ))
            })?;
        modes[slot] = c;
    }
    let shifted = StateField::from_modes(grid, modes)?;
    let norm = shifted.sobolev_norm(s)?;
    if norm == 0.0 {
        return Err(Error::Config("profile is identically zero".into()));
    }
    let scale = target / norm;
    StateField::from_modes(grid, shifted.modes().iter().map(|c| c * scale).collect())
}

/// Settings of the high-frequency experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HighfreqConfig {
    /// Base modes `L` to try.
    pub levels: Vec<usize>,
    /// Target accuracy `ε`.
    pub epsilon: f64,
    /// `H^N` norm of the shifted data; `None` keeps the profile's own norm.
    pub norm_target: Option<f64>,
    /// Sobolev index `N`.
    pub sobolev_index: f64,
    /// Half-length `T` of the time interval `[-T, T]`.
    pub horizon: f64,
    pub dt: f64,
    pub stride: usize,
    pub spectrum: SpectrumOptions,
    pub normalization: NormalizationOptions,
}

impl Default for HighfreqConfig {
    fn default() -> Self {
        Self {
            levels: vec![4, 8, 16],
            epsilon: 1e-6,
            norm_target: None,
            sobolev_index: 2.0,
            horizon: 5.0,
            dt: 1e-4,
            stride: 100,
            spectrum: SpectrumOptions::default(),
            normalization: NormalizationOptions::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HighfreqRow {
    pub level: usize,
    pub sup_u_minus_v: f64,
    pub sup_u_minus_w: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HighfreqReport {
    pub rows: Vec<HighfreqRow>,
    /// Smallest `L` with `sup_t ‖u - v‖_{H^N} ≤ ε`.
    pub smallest_level_v: Option<usize>,
    /// Smallest `L` with `sup_{|t|≤T} ‖u - w‖_{H^N} ≤ ε`.
    pub smallest_level_w: Option<usize>,
}

impl HighfreqReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "L,sup_u_minus_v,sup_u_minus_w")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{}",
                r.level,
                num(r.sup_u_minus_v),
                num(r.sup_u_minus_w)
            )?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Runs `u`, `v`, `w` on `[-T, T]` for one base mode.
pub fn highfreq_level(
    profile: &StateField,
    level: usize,
    cfg: &HighfreqConfig,
) -> Result<HighfreqRow> {
    let target = match cfg.norm_target {
        Some(m) => m,
        None => profile.sobolev_norm(cfg.sobolev_index)?,
    };
    let u0 = shift_profile(profile, level, cfg.sobolev_index, target)?;
    let carried: Vec<i64> = u0
        .modes_ascending()
        .filter(|(_, c)| c.norm() > COVERAGE_FLOOR)
        .map(|(n, _)| n)
        .collect();
    let k = carried
        .iter()
        .map(|n| n.unsigned_abs() as usize)
        .max()
        .unwrap_or(0)
        + 4;
    let phi = Potential::from_state(&u0);
    let gaps = periodic_spectrum_with(&phi, k.max(4), &cfg.spectrum)
        .map_err(|e| e.in_stage("spectrum"))?;
    let (_, table) = compute_frequencies(&gaps, &carried, &phi, &cfg.normalization)
        .map_err(|e| e.in_stage("frequencies"))?;
    let mut sup_v: f64 = 0.0;
    let mut sup_w: f64 = 0.0;
    for sign in [1.0, -1.0] {
        let traj = evolve(&u0, sign * cfg.horizon, cfg.dt, cfg.stride)
            .map_err(|e| e.in_stage("simulate"))?;
        sup_v = sup_v.max(
            difference_series(&traj, Reference::NearlyLinear(&table), cfg.sobolev_index)?.sup(),
        );
        sup_w =
            sup_w.max(difference_series(&traj, Reference::ModifiedFree, cfg.sobolev_index)?.sup());
    }
    Ok(HighfreqRow {
        level,
        sup_u_minus_v: sup_v,
        sup_u_minus_w: sup_w,
    })
}

/// Shifts `profile` to each base mode in `cfg.levels` and compares flows.
pub fn highfreq_experiment(profile: &StateField, cfg: &HighfreqConfig) -> Result<HighfreqReport> {
    let rows = cfg
        .levels
        .par_iter()
        .map(|&l| highfreq_level(profile, l, cfg))
        .collect::<Result<Vec<_>>>()?;
    let first = |f: &dyn Fn(&HighfreqRow) -> f64| {
        let mut hits: Vec<usize> = rows
            .iter()
            .filter(|r| f(r) <= cfg.epsilon)
            .map(|r| r.level)
            .collect();
        hits.sort_unstable();
        hits.first().copied()
    };
    Ok(HighfreqReport {
        smallest_level_v: first(&|r| r.sup_u_minus_v),
        smallest_level_w: first(&|r| r.sup_u_minus_w),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::SpectralGrid;
    use crate::frequencies::FrequencyRow;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn table(entries: &[(i64, f64)]) -> FrequencyTable {
        FrequencyTable {
            rows: entries
                .iter()
                .map(|&(n, w)| {
                    (
                        n,
                        FrequencyRow {
                            n,
                            omega_nls: w,
                            omega_renorm: 0.0,
                            rho: 0.0,
                            weighted_rho: 0.0,
                        },
                    )
                })
                .collect(),
            pairing: 0.0,
            tail_bound: 0.0,
        }
    }

    fn series(times: Vec<f64>, f: impl Fn(f64) -> f64) -> NormSeries {
        NormSeries {
            values: times.iter().map(|&t| f(t)).collect(),
            times,
            s: 0.0,
            label: "test".into(),
        }
    }

    #[test]
    fn v_and_w_at_time_zero() {
        let g = SpectralGrid::new(16).unwrap();
        let u0 = StateField::from_mode_fn(g, |n| if n == 2 { c(0.3, 0.1) } else { c(0.0, 0.0) });
        assert_eq!(build_v(&u0, &table(&[(2, 5.0)]), 0.0).modes(), u0.modes());
        assert_eq!(build_w(&u0, 0.0).modes(), u0.modes());
    }

    #[test]
    fn constant_data_closed_forms() {
        let g = SpectralGrid::new(16).unwrap();
        let a = 0.3;
        let u0 = StateField::constant(g, c(a, 0.0));
        let t = 7.0;
        let v = build_v(&u0, &table(&[(0, 2.0 * a * a)]), t);
        assert!((v.coefficient(0) - Complex64::from_polar(a, -2.0 * a * a * t)).norm() < 1e-15);
        let w = build_w(&u0, t);
        assert!((w.coefficient(0) - Complex64::from_polar(a, -4.0 * a * a * t)).norm() < 1e-15);
        // Exact solution against w: 2|a||sin(a²t)|.
        let u = StateField::constant(g, Complex64::from_polar(a, -2.0 * a * a * t));
        let d = u.sub(&w).unwrap().sobolev_norm(3.0).unwrap();
        assert!((d - 2.0 * a * (a * a * t).sin().abs()).abs() < 1e-15);
    }

    #[test]
    fn unitarity_of_reference_flows() {
        let g = SpectralGrid::new(32).unwrap();
        let u0 = StateField::from_mode_fn(g, |n| match n {
            1 => c(0.5, 0.0),
            -2 => c(0.2, 0.0),
            5 => c(0.01, 0.02),
            _ => c(0.0, 0.0),
        });
        let tab = table(&[(1, 40.0), (-2, 158.7)]);
        for t in [0.3, 5.0, -11.0] {
            for s in [0.0, 1.0, 2.5] {
                let v = build_v(&u0, &tab, t);
                let n0 = u0.sobolev_norm(s).unwrap();
                assert!((v.sobolev_norm(s).unwrap() - n0).abs() < 1e-12 * n0);
            }
            assert!((build_w(&u0, t).mass() - u0.mass()).abs() < 1e-12);
        }
    }

    #[test]
    fn verdicts() {
        let times: Vec<f64> = (0..=1000).map(|k| k as f64 * 0.5).collect();
        let a = 0.3;
        // Exact |u - w| for constant data over many periods.
        let osc = series(times.clone(), |t| 2.0 * a * (a * a * t).sin().abs());
        let v = boundedness_verdict(&osc, 0.05);
        assert!(v.bounded);
        assert!((v.sup - 2.0 * a).abs() < 1e-3);
        let zero = series(times.clone(), |_| 0.0);
        assert!(boundedness_verdict(&zero, 0.05).bounded);
        let ramp = series(times, |t| 0.01 * t);
        let v = boundedness_verdict(&ramp, 0.05);
        assert!(!v.bounded);
        assert!((v.slope - 0.01).abs() < 1e-12);
    }

    #[test]
    fn extraction_from_synthetic_rotation() {
        let g = SpectralGrid::new(16).unwrap();
        let w = 4.0 * PI * PI + 0.18;
        let times: Vec<f64> = (0..200).map(|k| k as f64 * 0.05).collect();
        let states = times
            .iter()
            .map(|&t| {
                StateField::from_mode_fn(g, |n| {
                    if n == 1 {
                        Complex64::from_polar(0.3, -w * t)
                    } else {
                        c(0.0, 0.0)
                    }
                })
            })
            .collect();
        let traj = Trajectory {
            times,
            states,
            dt: 0.05,
            stride: 1,
        };
        let f = extract_frequencies(&traj, 0.05).unwrap();
        assert_eq!(f.len(), 1);
        assert!((f[&1] / w - 1.0).abs() < 1e-12);
        let coarse = Trajectory {
            times: traj.times.iter().map(|t| 2.0 * t).collect(),
            ..traj
        };
        assert!(extract_frequencies(&coarse, 0.05).is_err());
    }

    #[test]
    fn shifting_profiles() {
        let g = SpectralGrid::new(64).unwrap();
        let p = StateField::from_mode_fn(g, |n| match n {
            1 => c(0.5, 0.0),
            -2 => c(0.2, 0.0),
            _ => c(0.0, 0.0),
        });
        let target = p.sobolev_norm(2.0).unwrap();
        let s = shift_profile(&p, 8, 2.0, target).unwrap();
        assert!((s.sobolev_norm(2.0).unwrap() - target).abs() < 1e-14);
        assert!(s.coefficient(8).norm() > 0.0 && s.coefficient(-9).norm() > 0.0);
        let ratio = s.coefficient(8) / s.coefficient(-9);
        assert!((ratio - c(2.5, 0.0)).norm() < 1e-14);
        assert!(shift_profile(&p, 40, 2.0, 1.0).is_err());
        let k = StateField::constant(g, c(0.1, 0.0));
        assert!(shift_profile(&k, 4, 2.0, 1.0).is_err());
    }
}
