//! Periodic grids on the unit circle, Fourier coefficients and Sobolev norms.
//!
//! Conventions: `u(x) = Σ û(n) e^{2πinx}` with `û(n) = ∫₀¹ u(x) e^{-2πinx} dx`,
//! discretized on `x_j = j / N`. The represented band is `n ∈ [-N/2, N/2)`;
//! coefficients are stored in FFT order (`n = 0, 1, …, N/2-1, -N/2, …, -1`).

use std::cell::RefCell;
use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn forward_plan(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(len))
}

pub(crate) fn inverse_plan(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(len))
}

/// Uniform grid `x_j = j / point_count` on the unit circle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct SpectralGrid {
    point_count: usize,
}

impl SpectralGrid {
    pub const MIN_POINTS: usize = 8;

    pub fn new(point_count: usize) -> Result<Self> {
        if point_count < Self::MIN_POINTS || !point_count.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "point_count must be even and at least {}, got {point_count}",
                Self::MIN_POINTS
            )));
        }
        Ok(Self { point_count })
    }

    #[inline]
    pub fn point_count(&self) -> usize {
        self.point_count
    }

    #[inline]
    pub fn x(&self, j: usize) -> f64 {
        j as f64 / self.point_count as f64
    }

    /// Lowest represented wavenumber, `-N/2`.
    #[inline]
    pub fn min_mode(&self) -> i64 {
        -(self.point_count as i64 / 2)
    }

    /// Highest represented wavenumber, `N/2 - 1`.
    #[inline]
    pub fn max_mode(&self) -> i64 {
        self.point_count as i64 / 2 - 1
    }

    /// FFT-order slot of wavenumber `n`, if represented.
    #[inline]
    pub fn slot(&self, n: i64) -> Option<usize> {
        if n < self.min_mode() || n > self.max_mode() {
            None
        } else if n >= 0 {
            Some(n as usize)
        } else {
            Some((n + self.point_count as i64) as usize)
        }
    }

    /// Wavenumber stored in FFT-order slot `j`.
    #[inline]
    pub fn wavenumber(&self, j: usize) -> i64 {
        let half = self.point_count / 2;
        if j < half {
            j as i64
        } else {
            j as i64 - self.point_count as i64
        }
    }

    /// Wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.point_count).map(move |j| self.wavenumber(j))
    }

    pub fn nyquist_slot(&self) -> usize {
        self.point_count / 2
    }
}

impl TryFrom<usize> for SpectralGrid {
    type Error = Error;
    fn try_from(value: usize) -> Result<Self> {
        SpectralGrid::new(value)
    }
}

impl From<SpectralGrid> for usize {
    fn from(g: SpectralGrid) -> usize {
        g.point_count
    }
}

/// Normalized discrete Fourier coefficients (FFT order) of grid samples.
pub fn forward_transform(grid: SpectralGrid, samples: &[Complex64]) -> Result<Vec<Complex64>> {
    check_len(grid, samples.len())?;
    let mut buf = samples.to_vec();
    forward_plan(buf.len()).process(&mut buf);
    let scale = 1.0 / grid.point_count() as f64;
    buf.iter_mut().for_each(|c| *c *= scale);
    Ok(buf)
}

/// Grid samples of the trigonometric polynomial with FFT-order coefficients `modes`.
pub fn inverse_transform(grid: SpectralGrid, modes: &[Complex64]) -> Result<Vec<Complex64>> {
    check_len(grid, modes.len())?;
    let mut buf = modes.to_vec();
    inverse_plan(buf.len()).process(&mut buf);
    Ok(buf)
}

fn check_len(grid: SpectralGrid, len: usize) -> Result<()> {
    if len != grid.point_count() {
        return Err(Error::Config(format!(
            "array length {len} does not match grid point_count {}",
            grid.point_count()
        )));
    }
    Ok(())
}

#[inline]
fn bracket(n: i64) -> f64 {
    n.unsigned_abs().max(1) as f64
}

/// A periodic complex field with synchronized samples and Fourier coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct StateField {
    grid: SpectralGrid,
    samples: Vec<Complex64>,
    modes: Vec<Complex64>,
}

impl StateField {
    pub fn zeros(grid: SpectralGrid) -> Self {
        let n = grid.point_count();
        Self {
            grid,
            samples: vec![Complex64::new(0.0, 0.0); n],
            modes: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn from_samples(grid: SpectralGrid, samples: Vec<Complex64>) -> Result<Self> {
        let modes = forward_transform(grid, &samples)?;
        Ok(Self {
            grid,
            samples,
            modes,
        })
    }

    /// Builds a field from FFT-order coefficients.
    pub fn from_modes(grid: SpectralGrid, modes: Vec<Complex64>) -> Result<Self> {
        let samples = inverse_transform(grid, &modes)?;
        Ok(Self {
            grid,
            samples,
            modes,
        })
    }

    /// Builds a field whose coefficient at wavenumber `n` is `coeff(n)`.
    pub fn from_mode_fn(grid: SpectralGrid, coeff: impl Fn(i64) -> Complex64) -> Self {
        let modes: Vec<_> = grid.wavenumbers().map(coeff).collect();
        Self::from_modes(grid, modes).expect("length matches grid by construction")
    }

    /// Builds a field by sampling `f` at the grid points.
    pub fn from_fn(grid: SpectralGrid, f: impl Fn(f64) -> Complex64) -> Self {
        let samples: Vec<_> = (0..grid.point_count()).map(|j| f(grid.x(j))).collect();
        Self::from_samples(grid, samples).expect("length matches grid by construction")
    }

    pub fn constant(grid: SpectralGrid, value: Complex64) -> Self {
        Self::from_mode_fn(grid, |n| {
            if n == 0 {
                value
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    #[inline]
    pub fn grid(&self) -> SpectralGrid {
        self.grid
    }

    #[inline]
    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    /// Coefficients in FFT order.
    #[inline]
    pub fn modes(&self) -> &[Complex64] {
        &self.modes
    }

    /// `û(n)`, zero outside the represented band.
    pub fn coefficient(&self, n: i64) -> Complex64 {
        self.grid
            .slot(n)
            .map(|j| self.modes[j])
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    /// `(n, û(n))` pairs in increasing `n`.
    pub fn modes_ascending(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        (self.grid.min_mode()..=self.grid.max_mode()).map(move |n| (n, self.coefficient(n)))
    }

    pub fn conj(&self) -> Self {
        let samples = self.samples.iter().map(|c| c.conj()).collect();
        // conj(u) has coefficients conj(û(-n)).
        let modes = self
            .grid
            .wavenumbers()
            .map(|n| {
                let m = if n == self.grid.min_mode() { n } else { -n };
                self.coefficient(m).conj()
            })
            .collect();
        Self {
            grid: self.grid,
            samples,
            modes,
        }
    }

    pub fn sub(&self, other: &StateField) -> Result<StateField> {
        if self.grid != other.grid {
            return Err(Error::Config("grid mismatch in field difference".into()));
        }
        let samples = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| a - b)
            .collect();
        let modes = self
            .modes
            .iter()
            .zip(&other.modes)
            .map(|(a, b)| a - b)
            .collect();
        Ok(StateField {
            grid: self.grid,
            samples,
            modes,
        })
    }

    /// Drops the unpaired `-N/2` coefficient.
    pub fn without_nyquist(&self) -> StateField {
        let mut modes = self.modes.clone();
        modes[self.grid.nyquist_slot()] = Complex64::new(0.0, 0.0);
        StateField::from_modes(self.grid, modes).expect("same grid")
    }

    pub fn is_finite(&self) -> bool {
        self.samples
            .iter()
            .chain(&self.modes)
            .all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// L² norm from the samples (grid average of `|u|²`).
    pub fn l2_norm_from_samples(&self) -> f64 {
        let n = self.grid.point_count() as f64;
        (self.samples.iter().map(|c| c.norm_sqr()).sum::<f64>() / n).sqrt()
    }

    /// `Σ |û(n)|²`, which equals `∫₀¹ |u|² dx` for represented fields.
    pub fn mass(&self) -> f64 {
        self.modes.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn sobolev_norm(&self, s: f64) -> Result<f64> {
        sobolev_norm(self, s)
    }

    /// `Σ 2πn |û(n)|²`.
    pub fn momentum(&self) -> f64 {
        self.grid
            .wavenumbers()
            .zip(&self.modes)
            .map(|(n, c)| 2.0 * PI * n as f64 * c.norm_sqr())
            .sum()
    }

    fn kinetic(&self) -> f64 {
        self.grid
            .wavenumbers()
            .zip(&self.modes)
            .map(|(n, c)| 4.0 * PI * PI * (n * n) as f64 * c.norm_sqr())
            .sum()
    }

    /// Hamiltonian with the quartic term evaluated on a grid twice as fine,
    /// which is exact for every represented field.
    pub fn hamiltonian_padded(&self) -> f64 {
        let fine = self.evaluate_on_grid(2 * self.grid.point_count(), 0.0);
        let quartic = fine.iter().map(|c| c.norm_sqr().powi(2)).sum::<f64>() / fine.len() as f64;
        self.kinetic() + quartic
    }

    /// Evaluates the trigonometric interpolant at `x_j = (j + offset) / m`.
    /// The Nyquist coefficient is split evenly between `±N/2`.
    pub fn evaluate_on_grid(&self, m: usize, offset: f64) -> Vec<Complex64> {
        assert!(
            m >= self.grid.point_count(),
            "target grid must not be coarser"
        );
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        let shift = |n: i64| Complex64::from_polar(1.0, 2.0 * PI * n as f64 * offset / m as f64);
        let slot = |n: i64| n.rem_euclid(m as i64) as usize;
        for (j, &c) in self.modes.iter().enumerate() {
            let n = self.grid.wavenumber(j);
            if j == self.grid.nyquist_slot() {
                let half = 0.5 * c;
                buf[slot(n)] += half * shift(n);
                buf[slot(-n)] += half * shift(-n);
            } else {
                buf[slot(n)] += c * shift(n);
            }
        }
        inverse_plan(m).process(&mut buf);
        buf
    }

    /// Writes the coefficients as CSV (`n, re(û), im(û)`), increasing `n`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# u(x) = sum_n u_hat(n) exp(2 pi i n x), u_hat(n) = int_0^1 u(x) exp(-2 pi i n x) dx"
        )?;
        writeln!(out, "n,re(u_hat),im(u_hat)")?;
        for (n, c) in self.modes_ascending() {
            writeln!(
                out,
                "{n},{},{}",
                crate::output::num(c.re),
                crate::output::num(c.im)
            )?;
        }
        Ok(())
    }
}

/// `(Σ ⟨n⟩^{2s} |û(n)|²)^{1/2}` over the represented band, `⟨n⟩ = max(1, |n|)`.
pub fn sobolev_norm(field: &StateField, s: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::Domain(format!(
            "Sobolev index must be non-negative, got {s}"
        )));
    }
    let sum: f64 = field
        .grid
        .wavenumbers()
        .zip(&field.modes)
        .map(|(n, c)| bracket(n).powf(2.0 * s) * c.norm_sqr())
        .sum();
    Ok(sum.sqrt())
}

/// `∫₀¹ (|∂ₓu|² + |u|⁴) dx` with a spectral derivative and grid quadrature
/// for the quartic term.
pub fn hamiltonian(field: &StateField) -> f64 {
    let n = field.grid.point_count() as f64;
    let quartic = field
        .samples
        .iter()
        .map(|c| c.norm_sqr().powi(2))
        .sum::<f64>()
        / n;
    field.kinetic() + quartic
}

/// The pair `(φ1, φ2)` entering the Zakharov–Shabat operator.
#[derive(Clone, Debug)]
pub struct Potential {
    phi1: StateField,
    phi2: StateField,
    real_type: bool,
}

impl Potential {
    const REAL_TYPE_TOL: f64 = 1e-12;

    pub fn new(phi1: StateField, phi2: StateField) -> Result<Self> {
        if phi1.grid() != phi2.grid() {
            return Err(Error::Config(
                "potential components on different grids".into(),
            ));
        }
        let scale = phi1
            .samples()
            .iter()
            .map(|c| c.norm())
            .fold(1.0_f64, f64::max);
        let real_type = phi1
            .samples()
            .iter()
            .zip(phi2.samples())
            .all(|(a, b)| (a.conj() - b).norm() <= Self::REAL_TYPE_TOL * scale);
        Ok(Self {
            phi1,
            phi2,
            real_type,
        })
    }

    /// The real-type potential `(ū, u)` attached to a state `u`.
    ///
    /// With this ordering the gap at spectral index `n` belongs to the
    /// Fourier mode `e^{2πinx}` of `u`: a plane wave `a e^{2πinx}` opens
    /// exactly the gap at `n`.
    pub fn from_state(u: &StateField) -> Self {
        Self {
            phi1: u.conj(),
            phi2: u.clone(),
            real_type: true,
        }
    }

    /// `φ1 = φ2 = a` on the given grid.
    pub fn constant(grid: SpectralGrid, a: f64) -> Self {
        let f = StateField::constant(grid, Complex64::new(a, 0.0));
        Self {
            phi1: f.clone(),
            phi2: f,
            real_type: true,
        }
    }

    pub fn zero(grid: SpectralGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn grid(&self) -> SpectralGrid {
        self.phi1.grid()
    }

    pub fn phi1(&self) -> &StateField {
        &self.phi1
    }

    pub fn phi2(&self) -> &StateField {
        &self.phi2
    }

    pub fn is_real_type(&self) -> bool {
        self.real_type
    }

    /// `∫₀¹ φ1 φ2 dx = Σ φ̂1(n) φ̂2(-n)`; equals `∫|u|²` for real-type data.
    pub fn pairing(&self) -> Complex64 {
        let grid = self.grid();
        grid.wavenumbers()
            .map(|n| {
                let m = if n == grid.min_mode() { n } else { -n };
                self.phi1.coefficient(n) * self.phi2.coefficient(m)
            })
            .sum()
    }
}
