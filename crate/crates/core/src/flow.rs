//! Strang split-step integration of `i u_t = -u_xx + 2|u|^2 u`.
//!
//! The nonlinear sub-flow `u ↦ exp(-2i|u|^2 t) u` is solved exactly since
//! `|u|` is invariant under it; the linear sub-flow is diagonal in Fourier
//! space. Both are unitary on L², so mass drift is round-off only.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::Fft;

use crate::error::{Error, Result};
use crate::field::{forward_plan, inverse_plan, SpectralGrid, StateField};
use crate::output::num;

pub const DEFAULT_DT: f64 = 1e-4;
pub const DEFAULT_POINT_COUNT: usize = 256;

#[inline]
fn nonlinear(samples: &mut [Complex64], tau: f64) {
    for u in samples.iter_mut() {
        *u *= Complex64::from_polar(1.0, -2.0 * u.norm_sqr() * tau);
    }
}

/// Reusable propagator for a fixed grid and step.
pub struct StrangStepper {
    grid: SpectralGrid,
    dt: f64,
    linear: Vec<Complex64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl StrangStepper {
    pub fn new(grid: SpectralGrid, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        let linear = grid
            .wavenumbers()
            .map(|n| Complex64::from_polar(1.0, -4.0 * PI * PI * (n * n) as f64 * dt))
            .collect();
        let len = grid.point_count();
        Ok(Self {
            grid,
            dt,
            linear,
            fwd: forward_plan(len),
            inv: inverse_plan(len),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Linear step on grid samples; the Nyquist mode is dropped first.
    fn linear_step(&self, samples: &mut [Complex64]) {
        self.fwd.process(samples);
        let scale = 1.0 / self.grid.point_count() as f64;
        samples[self.grid.nyquist_slot()] = Complex64::new(0.0, 0.0);
        for (c, p) in samples.iter_mut().zip(&self.linear) {
            *c *= p * scale;
        }
        self.inv.process(samples);
    }

    /// One full Strang step applied to grid samples.
    pub fn step_samples(&self, samples: &mut [Complex64]) {
        nonlinear(samples, 0.5 * self.dt);
        self.linear_step(samples);
        nonlinear(samples, 0.5 * self.dt);
    }

    /// `steps` Strang steps with adjacent nonlinear half-steps fused.
    pub fn advance_samples(&self, samples: &mut [Complex64], steps: usize) {
        if steps == 0 {
            return;
        }
        nonlinear(samples, 0.5 * self.dt);
        for k in 0..steps {
            self.linear_step(samples);
            let tau = if k + 1 == steps {
                0.5 * self.dt
            } else {
                self.dt
            };
            nonlinear(samples, tau);
        }
    }

    fn to_state(&self, samples: &[Complex64]) -> Result<StateField> {
        let u = StateField::from_samples(self.grid, samples.to_vec())?;
        Ok(u.without_nyquist())
    }
}

/// One Strang step of size `dt`.
pub fn step_strang(state: &StateField, dt: f64) -> Result<StateField> {
    let stepper = StrangStepper::new(state.grid(), dt)?;
    let mut samples = state.samples().to_vec();
    stepper.step_samples(&mut samples);
    stepper.to_state(&samples)
}

/// Sampled solution of the initial value problem.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateField>,
    /// Step size actually used (`|t_end|` divided by the step count).
    pub dt: f64,
    pub stride: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn initial(&self) -> &StateField {
        &self.states[0]
    }

    pub fn last(&self) -> &StateField {
        self.states.last().expect("trajectory is never empty")
    }

    /// Writes `t, n, re(û), im(û)` rows for every sample and mode.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,n,re,im")?;
        for (t, u) in self.times.iter().zip(&self.states) {
            for (n, c) in u.modes_ascending() {
                writeln!(out, "{},{n},{},{}", num(*t), num(c.re), num(c.im))?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Evolves `u0` to `t_end`, recording every `stride`-th step.
///
/// The step count is `ceil(|t_end| / dt)` and the step is shrunk so it
/// lands on `t_end` exactly. The final state is always recorded, so the
/// last interval may be shorter than `stride` steps. Negative `t_end`
/// runs the conjugated data forward and conjugates back.
pub fn evolve(u0: &StateField, t_end: f64, dt: f64, stride: usize) -> Result<Trajectory> {
    if stride == 0 {
        return Err(Error::Config("stride must be at least 1".into()));
    }
    if !(dt > 0.0 && dt.is_finite()) || !t_end.is_finite() {
        return Err(Error::Config(format!(
            "need finite t_end and positive dt, got t_end = {t_end}, dt = {dt}"
        )));
    }
    let backward = t_end < 0.0;
    let span = t_end.abs();
    let steps = if span == 0.0 {
        0
    } else {
        ((span / dt) * (1.0 - 1e-12)).ceil() as usize
    };
    let step = if steps == 0 { dt } else { span / steps as f64 };
    let stepper = StrangStepper::new(u0.grid(), step)?;
    let sign = if backward { -1.0 } else { 1.0 };

    let start = if backward { u0.conj() } else { u0.clone() };
    let mut samples = start.samples().to_vec();
    let mut times = vec![0.0];
    let mut states = vec![u0.clone()];
    let mut done = 0;
    while done < steps {
        let chunk = stride.min(steps - done);
        stepper.advance_samples(&mut samples, chunk);
        done += chunk;
        let t = sign * done as f64 * step;
        if samples
            .iter()
            .any(|c| !c.re.is_finite() || !c.im.is_finite())
        {
            return Err(Error::BlowUp {
                t,
                detail: "non-finite field values".into(),
            });
        }
        // Re-synchronize samples with the stored (Nyquist-free) state.
        let state = stepper.to_state(&samples)?;
        samples.copy_from_slice(state.samples());
        times.push(t);
        states.push(if backward { state.conj() } else { state });
    }
    Ok(Trajectory {
        times,
        states,
        dt: step,
        stride,
    })
}

/// Final state only, without storing intermediate samples.
pub fn evolve_to(u0: &StateField, t_end: f64, dt: f64) -> Result<StateField> {
    let stride = ((t_end.abs() / dt).ceil() as usize).max(1);
    Ok(evolve(u0, t_end, dt, stride)?.last().clone())
}

/// Conserved quantities at one sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConservedRow {
    pub t: f64,
    pub l2: f64,
    pub hamiltonian: f64,
    pub momentum: f64,
}

#[derive(Clone, Debug)]
pub struct ConservedReport {
    pub rows: Vec<ConservedRow>,
    /// `max |‖u(t)‖ - ‖u0‖| / ‖u0‖` (absolute when `u0 = 0`).
    pub l2_drift: f64,
    /// `max |H(t) - H(0)|`, relative to `max(1, |H(0)|)`.
    pub hamiltonian_drift: f64,
    pub momentum_drift: f64,
}

/// Mass, Hamiltonian (quartic term on a doubled grid) and momentum per sample.
pub fn conserved_report(traj: &Trajectory) -> ConservedReport {
    use rayon::prelude::*;
    let rows: Vec<ConservedRow> = traj
        .times
        .par_iter()
        .zip(&traj.states)
        .map(|(&t, u)| ConservedRow {
            t,
            l2: u.mass().sqrt(),
            hamiltonian: u.hamiltonian_padded(),
            momentum: u.momentum(),
        })
        .collect();
    let first = rows[0];
    let rel = |x: f64, x0: f64| if x0.abs() > 0.0 { x / x0.abs() } else { x };
    let fold = |f: &dyn Fn(&ConservedRow) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    let l2_drift = fold(&|r| rel((r.l2 - first.l2).abs(), first.l2));
    let h_scale = first.hamiltonian.abs().max(1.0);
    let hamiltonian_drift = fold(&|r| (r.hamiltonian - first.hamiltonian).abs() / h_scale);
    let p_scale = first.momentum.abs().max(1.0);
    let momentum_drift = fold(&|r| (r.momentum - first.momentum).abs() / p_scale);
    ConservedReport {
        rows,
        l2_drift,
        hamiltonian_drift,
        momentum_drift,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn grid(n: usize) -> SpectralGrid {
        SpectralGrid::new(n).unwrap()
    }

    fn max_diff(a: &StateField, b: &StateField) -> f64 {
        a.samples()
            .iter()
            .zip(b.samples())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn constant_step_is_exact() {
        let g = grid(16);
        let a = 0.7;
        let dt = 0.013;
        let u = StateField::constant(g, c(a, 0.0));
        let next = step_strang(&u, dt).unwrap();
        let exact = StateField::constant(g, Complex64::from_polar(a, -2.0 * a * a * dt));
        assert!(max_diff(&next, &exact) < 1e-15);
    }

    #[test]
    fn plane_wave_step_is_exact() {
        let g = grid(32);
        let (a, n, dt) = (0.4, 3i64, 0.002);
        let u = StateField::from_fn(g, |x| Complex64::from_polar(a, 2.0 * PI * n as f64 * x));
        let next = step_strang(&u, dt).unwrap();
        let w = 4.0 * PI * PI * (n * n) as f64 + 2.0 * a * a;
        let exact = StateField::from_fn(g, |x| {
            Complex64::from_polar(a, 2.0 * PI * n as f64 * x - w * dt)
        });
        assert!(max_diff(&next, &exact) < 1e-14);
    }

    #[test]
    fn zero_stays_zero() {
        let g = grid(16);
        let u = StateField::zeros(g);
        let traj = evolve(&u, 0.5, 1e-3, 10).unwrap();
        assert!(traj.last().samples().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn constant_evolves_to_closed_form() {
        let g = grid(16);
        let a = 0.3;
        let u = StateField::constant(g, c(a, 0.0));
        let end = evolve_to(&u, 1.0, 1e-4).unwrap();
        let exact = Complex64::from_polar(a, -2.0 * a * a);
        assert!((end.coefficient(0) - exact).norm() < 1e-12);
    }

    #[test]
    fn two_state_trajectory() {
        let g = grid(16);
        let u = StateField::constant(g, c(0.1, 0.0));
        let traj = evolve(&u, 1e-4, 1e-4, 1).unwrap();
        assert_eq!(traj.len(), 2);
        assert_relative_eq!(traj.times[1], 1e-4);
    }

    #[test]
    fn times_follow_stride() {
        let g = grid(16);
        let u = StateField::constant(g, c(0.1, 0.0));
        let traj = evolve(&u, 0.1, 1e-3, 20).unwrap();
        assert_eq!(traj.len(), 6);
        for (k, t) in traj.times.iter().enumerate() {
            assert!((t - k as f64 * 0.02).abs() < 1e-14);
        }
        assert!(evolve(&u, 0.1, 1e-3, 0).is_err());
    }

    #[test]
    fn backward_run_inverts_forward_run() {
        let g = grid(64);
        let u0 = StateField::from_mode_fn(g, |n| match n {
            1 => c(0.5, 0.0),
            -2 => c(0.2, 0.0),
            _ => c(0.0, 0.0),
        });
        let fwd = evolve_to(&u0, 1.0, 1e-3).unwrap();
        let back = evolve_to(&fwd, -1.0, 1e-3).unwrap();
        let err = back.sub(&u0).unwrap().mass().sqrt();
        assert!(err < 1e-10, "round trip error {err}");
        let traj = evolve(&u0, -0.01, 1e-3, 5).unwrap();
        assert!(traj.times.iter().all(|t| *t <= 0.0));
    }

    #[test]
    fn plane_wave_mass_and_energy_conserved() {
        let g = grid(32);
        let u0 = StateField::from_fn(g, |x| Complex64::from_polar(0.5, 2.0 * PI * x));
        let traj = evolve(&u0, 10.0, 1e-3, 1000).unwrap();
        let report = conserved_report(&traj);
        assert!(report.l2_drift < 1e-12);
        assert!(report.hamiltonian_drift < 1e-12);
        assert_eq!(report.rows.len(), traj.len());
    }
}
