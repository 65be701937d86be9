//! Canonical root of `Δ² - 4`, contour normalization of `ψ_n` and the
//! Newton solve for its zeros `σ_k^n`.
//!
//! Both `ψ_n` and the canonical root are products over gaps. Closed gaps
//! contribute `(τ_k - λ)` to both, so the integrand
//! `ψ_n / √(Δ²-4)` only involves open gaps and the index `n` itself:
//!
//! `ψ_n/√ = (c π_n / 2i) · 1/w_n(λ) · Π_{k open, k≠n} (σ_k - λ)/w_k(λ)`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::output::num;
use crate::spectral::{GapEntry, GapTable};

type C64 = Complex64;

const I: C64 = C64::new(0.0, 1.0);

pub const DEFAULT_NODES: usize = 64;

/// `π_n = nπ` for `n ≠ 0` and `π_0 = 1`.
pub fn pi_n(n: i64) -> f64 {
    if n == 0 {
        1.0
    } else {
        n as f64 * PI
    }
}

/// `w_k(λ) = (τ_k - λ) · sqrt(1 - ((γ_k/2)/(τ_k - λ))²)` with the principal
/// square root; the cut is the gap interval itself.
pub fn standard_root(gap: &GapEntry, lambda: C64) -> Result<C64> {
    let d = gap.tau - lambda;
    if !gap.open {
        return Ok(d);
    }
    let half = 0.5 * gap.gamma;
    let on_cut = lambda.im.abs() <= 1e-14 * (1.0 + gap.tau.abs())
        && lambda.re >= gap.lambda_minus
        && lambda.re <= gap.lambda_plus;
    if on_cut || d.norm() == 0.0 {
        return Err(Error::Branch(format!(
            "λ = {lambda} lies on the gap interval of n = {}",
            gap.n
        )));
    }
    let q = half / d;
    Ok(d * (1.0 - q * q).sqrt())
}

/// `Π_{k=1..K} (1 - z/(k²π²))`.
fn finite_sine_product(z: C64, k: usize) -> C64 {
    (1..=k).fold(C64::new(1.0, 0.0), |acc, j| {
        acc * (1.0 - z / ((j as f64 * PI).powi(2)))
    })
}

/// `sin(√z)/√z`, entire in `z`.
fn sinc_sqrt(z: C64) -> C64 {
    if z.norm() < 1e-4 {
        1.0 - z / 6.0 + z * z / 120.0
    } else {
        let r = z.sqrt();
        r.sin() / r
    }
}

/// Canonical root `2i Π_k w_k(λ)/π_k` of `Δ² - 4`.
///
/// Indices `|k| > K` use the factors of the constant potential with the
/// same `∫φ1φ2 = E`, whose full product is known in closed form:
/// `Π_{k≠0}(τ_k - λ)/π_k = sin(√(λ²-E))/√(λ²-E)`.
pub fn canonical_root(gaps: &GapTable, lambda: C64) -> Result<C64> {
    let mut prod = C64::new(2.0, 0.0) * I;
    for g in gaps.entries() {
        prod *= standard_root(g, lambda)? / pi_n(g.n);
    }
    let z = lambda * lambda - gaps.pairing();
    let tail = sinc_sqrt(z) / finite_sine_product(z, gaps.k());
    Ok(prod * tail)
}

/// Circle `center + radius·e^{iθ}` sampled at `θ_j = 2π(j + 1/2)/nodes`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Contour {
    pub center: f64,
    pub radius: f64,
    pub nodes: usize,
}

impl Contour {
    pub fn point(&self, j: usize) -> C64 {
        let theta = 2.0 * PI * (j as f64 + 0.5) / self.nodes as f64;
        self.center + C64::from_polar(self.radius, theta)
    }

    /// `(1/2π) ∮ f(λ) dλ` by the trapezoid rule, counterclockwise.
    pub fn integrate(&self, f: impl Fn(C64) -> Result<C64>) -> Result<C64> {
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..self.nodes {
            let z = self.point(j);
            acc += f(z)? * I * (z - self.center);
        }
        Ok(acc / self.nodes as f64)
    }
}

/// Contour around `[λ_m⁻, λ_m⁺]` of radius
/// `scale · max(γ_m, 0.05 · distance to the nearest neighbouring τ)`.
pub fn contour_for(gaps: &GapTable, m: i64, nodes: usize, radius_scale: f64) -> Result<Contour> {
    let g = gaps.get(m).ok_or_else(|| Error::Geometry {
        m,
        detail: "index outside the gap table".into(),
    })?;
    let left = g.tau - gaps.tau_or_asymptotic(m - 1);
    let right = gaps.tau_or_asymptotic(m + 1) - g.tau;
    let radius = radius_scale * g.gamma.max(0.05 * left.min(right));
    if !(radius > 0.55 * g.gamma) {
        return Err(Error::Geometry {
            m,
            detail: format!(
                "radius {radius:.3e} does not enclose the gap of length {:.3e}",
                g.gamma
            ),
        });
    }
    for (k, dist) in [(m - 1, left), (m + 1, right)] {
        let half = gaps.get(k).map_or(0.0, |e| 0.5 * e.gamma);
        if !(radius < 0.9 * (dist - half)) {
            return Err(Error::Geometry {
                m,
                detail: format!("contour of radius {radius:.3e} reaches the gap of n = {k}"),
            });
        }
    }
    if nodes < 8 {
        return Err(Error::Config(format!(
            "at least 8 contour nodes needed, got {nodes}"
        )));
    }
    Ok(Contour {
        center: g.tau,
        radius,
        nodes,
    })
}

/// Zeros `σ_k^n` of `ψ_n` on the open gaps `k ≠ n`, plus its prefactor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaSet {
    pub n: i64,
    pub sigma: BTreeMap<i64, f64>,
    pub multiplier: f64,
    pub iterations: usize,
    /// Normalization residual per equation index.
    pub residuals: BTreeMap<i64, f64>,
    pub converged: bool,
}

impl SigmaSet {
    /// `σ_k^n` for stored `k`, `τ_k` otherwise.
    pub fn sigma_or_tau(&self, gaps: &GapTable, k: i64) -> f64 {
        self.sigma
            .get(&k)
            .copied()
            .unwrap_or_else(|| gaps.tau_or_asymptotic(k))
    }

    /// `α_k^n = σ_k^n - τ_k`; zero on closed gaps.
    pub fn alpha(&self, gaps: &GapTable, k: i64) -> f64 {
        match (self.sigma.get(&k), gaps.get(k)) {
            (Some(s), Some(g)) => s - g.tau,
            _ => 0.0,
        }
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.values().fold(0.0, |a, r| a.max(r.abs()))
    }

    /// Writes `k, tau_k, sigma_k_n, alpha_k_n, residual` for every open `k ≠ n`.
    pub fn write_csv<W: Write>(&self, gaps: &GapTable, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# n = {}, multiplier = {}, iterations = {}, residual_n = {}",
            self.n,
            num(self.multiplier),
            self.iterations,
            num(self.residuals.get(&self.n).copied().unwrap_or(0.0))
        )?;
        writeln!(out, "k,tau_k,sigma_k_n,alpha_k_n,residual")?;
        for (&k, &s) in &self.sigma {
            let tau = gaps.get(k).map_or(f64::NAN, |g| g.tau);
            let r = self.residuals.get(&k).copied().unwrap_or(0.0);
            writeln!(
                out,
                "{k},{},{},{},{}",
                num(tau),
                num(s),
                num(s - tau),
                num(r)
            )?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalizationOptions {
    pub nodes: usize,
    pub radius_scale: f64,
    pub max_iterations: usize,
    /// Newton stops once every residual is below this.
    pub tolerance: f64,
    /// Step of the forward-difference Jacobian (relative for the multiplier).
    pub fd_step: f64,
}

impl Default for NormalizationOptions {
    fn default() -> Self {
        Self {
            nodes: DEFAULT_NODES,
            radius_scale: 1.0,
            max_iterations: 50,
            tolerance: 1e-12,
            fd_step: 1e-4,
        }
    }
}

/// `ψ_n / √(Δ²-4)` at `λ` for the zeros `sigma` (open `k ≠ n`) and prefactor `multiplier`.
fn integrand(
    gaps: &GapTable,
    n: i64,
    sigma: &BTreeMap<i64, f64>,
    multiplier: f64,
    lambda: C64,
) -> Result<C64> {
    let gn = gaps
        .get(n)
        .ok_or_else(|| Error::Config(format!("n = {n} outside gap table")))?;
    let mut acc = C64::new(multiplier * pi_n(n), 0.0) / (2.0 * I) / standard_root(gn, lambda)?;
    for (&k, &s) in sigma {
        let g = gaps.get(k).expect("sigma keys are table indices");
        acc *= (s - lambda) / standard_root(g, lambda)?;
    }
    Ok(acc)
}

fn check_sigma_keys(gaps: &GapTable, sig: &SigmaSet) -> Result<()> {
    for &k in sig.sigma.keys() {
        match gaps.get(k) {
            Some(g) if g.open && k != sig.n => {}
            _ => {
                return Err(Error::Config(format!(
                    "σ_{k} given for n = {}, but k is not an open gap index ≠ n",
                    sig.n
                )))
            }
        }
    }
    Ok(())
}

/// `(1/2π) ∮_{Γ_m} ψ_n/√(Δ²-4) dλ` (real part).
pub fn normalization_integral(
    gaps: &GapTable,
    sig: &SigmaSet,
    m: i64,
    opts: &NormalizationOptions,
) -> Result<f64> {
    check_sigma_keys(gaps, sig)?;
    let contour = contour_for(gaps, m, opts.nodes, opts.radius_scale)?;
    let v = contour.integrate(|z| integrand(gaps, sig.n, &sig.sigma, sig.multiplier, z))?;
    Ok(v.re)
}

/// Normalization integral over `Γ_m` minus `δ_nm`, default quadrature.
pub fn normalization_residual(gaps: &GapTable, sig: &SigmaSet, m: i64) -> Result<f64> {
    let v = normalization_integral(gaps, sig, m, &NormalizationOptions::default())?;
    Ok(v - if m == sig.n { 1.0 } else { 0.0 })
}

/// Precomputed contour data for one Newton solve.
struct System<'a> {
    gaps: &'a GapTable,
    n: i64,
    unknowns: Vec<i64>,
    equations: Vec<i64>,
    contours: Vec<Contour>,
}

impl System<'_> {
    fn residuals(&self, x: &[f64]) -> Result<Vec<f64>> {
        let sigma: BTreeMap<i64, f64> = self
            .unknowns
            .iter()
            .copied()
            .zip(x.iter().copied())
            .collect();
        let multiplier = *x.last().expect("multiplier is always an unknown");
        self.equations
            .iter()
            .zip(&self.contours)
            .map(|(&m, c)| {
                let v = c.integrate(|z| integrand(self.gaps, self.n, &sigma, multiplier, z))?;
                Ok(v.re - if m == self.n { 1.0 } else { 0.0 })
            })
            .collect()
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Solves the normalization conditions for `ψ_n` with default options.
pub fn solve_sigma(gaps: &GapTable, n: i64) -> Result<SigmaSet> {
    solve_sigma_with(gaps, n, &NormalizationOptions::default())
}

pub fn solve_sigma_with(gaps: &GapTable, n: i64, opts: &NormalizationOptions) -> Result<SigmaSet> {
    if gaps.get(n).is_none() {
        return Err(Error::Config(format!("n = {n} outside the gap table")));
    }
    let unknowns: Vec<i64> = gaps
        .open_indices()
        .into_iter()
        .filter(|&k| k != n)
        .collect();
    let mut equations = unknowns.clone();
    equations.push(n);
    let contours = equations
        .iter()
        .map(|&m| contour_for(gaps, m, opts.nodes, opts.radius_scale))
        .collect::<Result<Vec<_>>>()?;
    let sys = System {
        gaps,
        n,
        unknowns: unknowns.clone(),
        equations: equations.clone(),
        contours,
    };
    let bounds: Vec<(f64, f64)> = unknowns
        .iter()
        .map(|&k| {
            let g = gaps.get(k).expect("open index");
            (g.lambda_minus, g.lambda_plus)
        })
        .collect();
    let inside = |x: &[f64]| {
        x.iter()
            .zip(&bounds)
            .all(|(v, (lo, hi))| v >= lo && v <= hi)
    };

    let mut x: Vec<f64> = unknowns.iter().map(|&k| gaps.get(k).unwrap().tau).collect();
    x.push(-2.0 / pi_n(n));
    let mut f = sys.residuals(&x)?;
    let mut iterations = 0;
    let dim = x.len();
    while max_abs(&f) > opts.tolerance {
        if iterations == opts.max_iterations {
            return Err(Error::Solver {
                n,
                iterations,
                max_residual: max_abs(&f),
            });
        }
        iterations += 1;
        // The system is affine in each unknown separately, so forward
        // differences are exact up to round-off.
        let mut jac = DMatrix::<f64>::zeros(dim, dim);
        let columns: Vec<Vec<f64>> = (0..dim)
            .into_par_iter()
            .map(|j| {
                let h = if j + 1 == dim {
                    opts.fd_step * x[j].abs().max(1e-3)
                } else {
                    opts.fd_step
                };
                let mut xp = x.clone();
                xp[j] += h;
                sys.residuals(&xp)
                    .map(|fp| fp.iter().zip(&f).map(|(a, b)| (a - b) / h).collect())
            })
            .collect::<Result<_>>()?;
        for (j, col) in columns.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                jac[(i, j)] = *v;
            }
        }
        let rhs = DVector::from_iterator(dim, f.iter().map(|v| -v));
        let step = jac.lu().solve(&rhs).ok_or(Error::Solver {
            n,
            iterations,
            max_residual: max_abs(&f),
        })?;
        let current = max_abs(&f);
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-6 {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a + t * d).collect();
            if inside(&trial[..dim - 1]) {
                let ft = sys.residuals(&trial)?;
                if max_abs(&ft) < current {
                    accepted = Some((trial, ft));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((xn, fn_)) => {
                x = xn;
                f = fn_;
            }
            None => {
                // Project the full step back into the gap intervals.
                let mut trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a + d).collect();
                for (v, (lo, hi)) in trial.iter_mut().zip(&bounds) {
                    *v = v.clamp(*lo, *hi);
                }
                let ft = sys.residuals(&trial)?;
                if max_abs(&ft) < current {
                    log::warn!("n = {n}: Newton step projected back into the gap intervals");
                    x = trial;
                    f = ft;
                } else {
                    return Err(Error::Solver {
                        n,
                        iterations,
                        max_residual: current,
                    });
                }
            }
        }
    }
    let multiplier = *x.last().unwrap();
    let sigma: BTreeMap<i64, f64> = unknowns.iter().copied().zip(x.iter().copied()).collect();
    let residuals = equations.iter().copied().zip(f.iter().copied()).collect();
    Ok(SigmaSet {
        n,
        sigma,
        multiplier,
        iterations,
        residuals,
        converged: true,
    })
}

/// Solves for several `n` in parallel.
pub fn solve_sigmas(
    gaps: &GapTable,
    ns: &[i64],
    opts: &NormalizationOptions,
) -> Result<Vec<SigmaSet>> {
    ns.par_iter()
        .map(|&n| solve_sigma_with(gaps, n, opts))
        .collect()
}

/// `|Σ_{k open, k≠n} (σ_k^n - τ_k) - (τ_n - nπ)|`.
pub fn trace_identity_check(gaps: &GapTable, sig: &SigmaSet) -> Result<f64> {
    let g = gaps
        .get(sig.n)
        .ok_or_else(|| Error::Config(format!("n = {} outside gap table", sig.n)))?;
    let sum: f64 = sig.sigma.keys().map(|&k| sig.alpha(gaps, k)).sum();
    Ok((sum - (g.tau - sig.n as f64 * PI)).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Potential, SpectralGrid, StateField};
    use crate::spectral::{periodic_spectrum, CellPotential};

    fn grid(n: usize) -> SpectralGrid {
        SpectralGrid::new(n).unwrap()
    }

    fn constant_gaps(a: f64, k: usize) -> GapTable {
        periodic_spectrum(&Potential::constant(grid(16), a), k).unwrap()
    }

    #[test]
    fn pi_zero_is_one() {
        assert_eq!(pi_n(0), 1.0);
        assert_eq!(pi_n(-2), -2.0 * PI);
    }

    #[test]
    fn zero_potential_root_squares_to_discriminant() {
        let gaps = periodic_spectrum(&Potential::zero(grid(16)), 8).unwrap();
        for j in 0..40 {
            let z = C64::new(1.3, 0.0) + C64::from_polar(0.8, 2.0 * PI * j as f64 / 40.0);
            let r = canonical_root(&gaps, z).unwrap();
            let d = 4.0 * z.cos() * z.cos() - 4.0;
            assert!((r * r - d).norm() < 1e-8);
        }
    }

    #[test]
    fn root_matches_discriminant_for_constant_potential() {
        let a = 0.3;
        let gaps = constant_gaps(a, 8);
        let cp = CellPotential::new(&Potential::constant(grid(16), a), 64).unwrap();
        let c = contour_for(&gaps, 0, 64, 1.0).unwrap();
        for j in 0..c.nodes {
            let z = c.point(j);
            let r = canonical_root(&gaps, z).unwrap();
            let d = cp.disc_squared_minus_four(z).unwrap();
            assert!((r * r / d - 1.0).norm() < 1e-9);
        }
    }

    #[test]
    fn branch_tracking_from_imaginary_axis() {
        // Far up the imaginary axis the root is 2 sinh(sqrt(Y² + a²)) > 0;
        // following ±sqrt(Δ²-4) by continuity down to Γ_0 must agree with
        // the product formula everywhere on the way.
        let a = 0.3;
        let gaps = constant_gaps(a, 8);
        let cp = CellPotential::new(&Potential::constant(grid(16), a), 64).unwrap();
        let top = C64::new(0.0, 6.0);
        let r0 = canonical_root(&gaps, top).unwrap();
        let exact = 2.0 * (36.0f64 + a * a).sqrt().sinh();
        assert!((r0 - exact).norm() < 1e-9 * exact);
        let c = contour_for(&gaps, 0, 64, 1.0).unwrap();
        let target = c.point(16);
        let steps = 400;
        let mut branch = r0;
        for s in 1..=steps {
            let z = top + (target - top) * (s as f64 / steps as f64);
            let root = cp.disc_squared_minus_four(z).unwrap().sqrt();
            branch = if (root - branch).norm() < (root + branch).norm() {
                root
            } else {
                -root
            };
            let r = canonical_root(&gaps, z).unwrap();
            assert!((r - branch).norm() < 1e-8 * (1.0 + r.norm()), "step {s}");
        }
        for j in 16..16 + c.nodes {
            let z = c.point(j % c.nodes);
            let root = cp.disc_squared_minus_four(z).unwrap().sqrt();
            branch = if (root - branch).norm() < (root + branch).norm() {
                root
            } else {
                -root
            };
            let r = canonical_root(&gaps, z).unwrap();
            assert!((r - branch).norm() < 1e-8 * (1.0 + r.norm()));
        }
    }

    #[test]
    fn root_rejects_points_on_the_cut() {
        let gaps = constant_gaps(0.3, 6);
        assert!(matches!(
            canonical_root(&gaps, C64::new(0.1, 0.0)),
            Err(Error::Branch(_))
        ));
        assert!(canonical_root(&gaps, C64::new(0.1, 1e-3)).is_ok());
    }

    #[test]
    fn zero_potential_normalization_is_trivial() {
        let gaps = periodic_spectrum(&Potential::zero(grid(16)), 6).unwrap();
        for n in -3..=3 {
            let sig = solve_sigma(&gaps, n).unwrap();
            assert!(sig.sigma.is_empty());
            assert_eq!(sig.iterations, 0);
            assert!((sig.multiplier + 2.0 / pi_n(n)).abs() < 1e-15);
            for m in -3..=3 {
                assert!(normalization_residual(&gaps, &sig, m).unwrap().abs() < 1e-12);
            }
            assert!(trace_identity_check(&gaps, &sig).unwrap() < 1e-15);
        }
    }

    #[test]
    fn constant_potential_residual_brackets_sigma() {
        let a = 0.3;
        let gaps = constant_gaps(a, 6);
        let n = 2;
        let residual_at = |s: f64| {
            let sig = SigmaSet {
                n,
                sigma: BTreeMap::from([(0, s)]),
                multiplier: -2.0 / pi_n(n),
                iterations: 0,
                residuals: BTreeMap::new(),
                converged: false,
            };
            normalization_residual(&gaps, &sig, 0).unwrap()
        };
        let (lo, hi) = (residual_at(-a), residual_at(a));
        assert!(lo * hi < 0.0, "no sign change: {lo} {hi}");
    }

    #[test]
    fn constant_potential_one_gap_solve() {
        let a = 0.3;
        let gaps = constant_gaps(a, 8);
        for n in [-3, -1, 1, 2, 5] {
            let sig = solve_sigma(&gaps, n).unwrap();
            assert!(sig.iterations <= 10);
            let s0 = sig.sigma[&0];
            assert!((-a..=a).contains(&s0));
            assert!(sig.max_residual() < 1e-8);
            for m in [0, n] {
                assert!(normalization_residual(&gaps, &sig, m).unwrap().abs() < 1e-8);
            }
            // One open gap: the trace identity pins σ_0^n = τ_n - nπ.
            let tau_n = (n as f64).signum() * ((n as f64 * PI).powi(2) + a * a).sqrt();
            assert!((s0 - (tau_n - n as f64 * PI)).abs() < 1e-9, "n = {n}");
            assert!(trace_identity_check(&gaps, &sig).unwrap() < 1e-9);
        }
    }

    #[test]
    fn quadrature_and_contour_independence() {
        let g = grid(64);
        let u = StateField::from_mode_fn(g, |n| match n {
            1 => C64::new(0.5, 0.0),
            -2 => C64::new(0.2, 0.0),
            _ => C64::new(0.0, 0.0),
        });
        let gaps = periodic_spectrum(&Potential::from_state(&u), 8).unwrap();
        let sig = solve_sigma(&gaps, 3).unwrap();
        for m in gaps.open_indices().into_iter().chain([3]) {
            let base =
                normalization_integral(&gaps, &sig, m, &NormalizationOptions::default()).unwrap();
            let doubled = NormalizationOptions {
                nodes: 128,
                ..Default::default()
            };
            let wide = NormalizationOptions {
                radius_scale: 1.5,
                ..Default::default()
            };
            let d1 = (normalization_integral(&gaps, &sig, m, &doubled).unwrap() - base).abs();
            let d2 = (normalization_integral(&gaps, &sig, m, &wide).unwrap() - base).abs();
            assert!(d1 < 1e-10, "m = {m}: {d1}");
            assert!(d2 < 1e-9, "m = {m}: {d2}");
        }
    }

    #[test]
    fn geometry_error_when_contour_reaches_neighbour() {
        let gaps = constant_gaps(0.3, 6);
        assert!(matches!(
            contour_for(&gaps, 1, 64, 30.0),
            Err(Error::Geometry { .. })
        ));
        assert!(matches!(
            contour_for(&gaps, 9, 64, 1.0),
            Err(Error::Geometry { .. })
        ));
    }
}
