//! Zakharov–Shabat monodromy, discriminant and periodic spectrum.
//!
//! The fundamental matrix solves `F' = -iσ₃(λ - Q(x)) F`, `F(0) = I`, with
//! `Q = [[0, φ1], [φ2, 0]]`. The potential is frozen at cell midpoints and
//! each cell contributes the exact exponential of a trace-free 2×2 matrix.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Potential;
use crate::output::num;

type C64 = Complex64;

const I: C64 = C64::new(0.0, 1.0);
const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Cells per grid point used when no cell count is given.
pub const DEFAULT_CELL_FACTOR: usize = 4;

/// Largest `|Im λ|` for which monodromy entries stay finite.
pub const MAX_IMAG_LAMBDA: f64 = 300.0;

const SERIES_TERMS: usize = 12;

struct SeriesCoeffs {
    c: [f64; SERIES_TERMS],
    s: [f64; SERIES_TERMS],
    g: [f64; SERIES_TERMS],
}

/// Taylor coefficients in `z = μ²h²` of `cosh(μh)`, `sinh(μh)/(μh)` and
/// `(μh cosh(μh) - sinh(μh)) / (μh)³`.
const fn series_coeffs() -> SeriesCoeffs {
    let mut c = [0.0; SERIES_TERMS];
    let mut s = [0.0; SERIES_TERMS];
    let mut g = [0.0; SERIES_TERMS];
    let mut fact = 1.0; // (2k)!
    let mut k = 0;
    while k < SERIES_TERMS {
        if k > 0 {
            fact *= (2 * k - 1) as f64 * (2 * k) as f64;
        }
        c[k] = 1.0 / fact;
        s[k] = 1.0 / (fact * (2 * k + 1) as f64);
        // g_k = 2(k+1) / (2k+3)!
        let f3 = fact * ((2 * k + 1) * (2 * k + 2) * (2 * k + 3)) as f64;
        g[k] = (2 * (k + 1)) as f64 / f3;
        k += 1;
    }
    SeriesCoeffs { c, s, g }
}

const SERIES: SeriesCoeffs = series_coeffs();

#[inline]
fn horner(coeffs: &[f64; SERIES_TERMS], z: C64) -> C64 {
    let mut acc = ZERO;
    for &a in coeffs.iter().rev() {
        acc = acc * z + a;
    }
    acc
}

/// `(cosh μh, sinh(μh)/μ, (h cosh μh - sinh(μh)/μ)/μ²)` from `μ²`.
#[inline]
fn cell_functions(mu2: C64, h: f64) -> (C64, C64, C64) {
    let z = mu2 * (h * h);
    if z.norm_sqr() < 1.0 {
        (
            horner(&SERIES.c, z),
            horner(&SERIES.s, z) * h,
            horner(&SERIES.g, z) * (h * h * h),
        )
    } else {
        let mu = mu2.sqrt();
        let c = (mu * h).cosh();
        let s = (mu * h).sinh() / mu;
        (c, s, (c * h - s) / mu2)
    }
}

/// Potential values frozen at the midpoints of `cells` uniform cells.
#[derive(Clone, Debug)]
pub struct CellPotential {
    q1: Vec<C64>,
    q2: Vec<C64>,
    products: Vec<C64>,
    h: f64,
    real_type: bool,
    pairing: f64,
}

impl CellPotential {
    pub fn new(phi: &Potential, cells: usize) -> Result<Self> {
        let n = phi.grid().point_count();
        if cells < n {
            return Err(Error::Config(format!(
                "cells ({cells}) must be at least the grid point_count ({n})"
            )));
        }
        let q1 = phi.phi1().evaluate_on_grid(cells, 0.5);
        let q2 = phi.phi2().evaluate_on_grid(cells, 0.5);
        let products = q1.iter().zip(&q2).map(|(a, b)| a * b).collect();
        Ok(Self {
            q1,
            q2,
            products,
            h: 1.0 / cells as f64,
            real_type: phi.is_real_type(),
            pairing: phi.pairing().re,
        })
    }

    pub fn with_default_cells(phi: &Potential) -> Result<Self> {
        Self::new(phi, DEFAULT_CELL_FACTOR * phi.grid().point_count())
    }

    pub fn cells(&self) -> usize {
        self.q1.len()
    }

    pub fn is_real_type(&self) -> bool {
        self.real_type
    }

    /// `∫ φ1 φ2` (real part) of the underlying potential.
    pub fn pairing(&self) -> f64 {
        self.pairing
    }

    fn check_lambda(&self, lambda: C64) -> Result<()> {
        if !(lambda.re.is_finite() && lambda.im.is_finite()) || lambda.im.abs() > MAX_IMAG_LAMBDA {
            return Err(Error::Domain(format!(
                "spectral parameter {lambda} outside |Im λ| ≤ {MAX_IMAG_LAMBDA}"
            )));
        }
        Ok(())
    }

    pub fn monodromy(&self, lambda: C64) -> Result<MonodromyMatrix> {
        self.check_lambda(lambda)?;
        let l2 = lambda * lambda;
        let il = I * lambda;
        let (mut a, mut b, mut c, mut d) = (ONE, ZERO, ZERO, ONE);
        for j in 0..self.q1.len() {
            let (ch, s, _) = cell_functions(self.products[j] - l2, self.h);
            let e11 = ch - il * s;
            let e22 = ch + il * s;
            let e12 = I * self.q1[j] * s;
            let e21 = -I * self.q2[j] * s;
            let (na, nb) = (e11 * a + e12 * c, e11 * b + e12 * d);
            let (nc, nd) = (e21 * a + e22 * c, e21 * b + e22 * d);
            a = na;
            b = nb;
            c = nc;
            d = nd;
        }
        Ok(MonodromyMatrix {
            lambda,
            m11: a,
            m12: b,
            m21: c,
            m22: d,
        })
    }

    /// Monodromy together with its λ-derivative.
    pub fn monodromy_with_derivative(&self, lambda: C64) -> Result<(MonodromyMatrix, [C64; 4])> {
        self.check_lambda(lambda)?;
        let l2 = lambda * lambda;
        let il = I * lambda;
        let mut f = [ONE, ZERO, ZERO, ONE];
        let mut df = [ZERO; 4];
        for j in 0..self.q1.len() {
            let (ch, s, g) = cell_functions(self.products[j] - l2, self.h);
            let e = [
                ch - il * s,
                I * self.q1[j] * s,
                -I * self.q2[j] * s,
                ch + il * s,
            ];
            let dc = -lambda * self.h * s;
            let ds = -lambda * g;
            let de = [
                dc - il * ds - I * s,
                I * self.q1[j] * ds,
                -I * self.q2[j] * ds,
                dc + il * ds + I * s,
            ];
            let mul = |x: &[C64; 4], y: &[C64; 4]| {
                [
                    x[0] * y[0] + x[1] * y[2],
                    x[0] * y[1] + x[1] * y[3],
                    x[2] * y[0] + x[3] * y[2],
                    x[2] * y[1] + x[3] * y[3],
                ]
            };
            let a = mul(&de, &f);
            let b = mul(&e, &df);
            df = [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]];
            f = mul(&e, &f);
        }
        Ok((
            MonodromyMatrix {
                lambda,
                m11: f[0],
                m12: f[1],
                m21: f[2],
                m22: f[3],
            },
            df,
        ))
    }

    pub fn discriminant(&self, lambda: C64) -> Result<C64> {
        Ok(self.monodromy(lambda)?.trace())
    }

    /// `Δ²(λ) - 4` in cancellation-free form.
    pub fn disc_squared_minus_four(&self, lambda: C64) -> Result<C64> {
        Ok(self.monodromy(lambda)?.stable_disc())
    }

    /// `(Δ²-4)(λ)` for real `λ` (real-valued for real-type data).
    fn disc_real(&self, lambda: f64) -> Result<f64> {
        let m = self.monodromy(C64::new(lambda, 0.0))?;
        Ok(if self.real_type {
            4.0 * (m.m12.norm_sqr() - m.m11.im * m.m11.im)
        } else {
            m.stable_disc().re
        })
    }

    fn ddelta_real(&self, lambda: f64) -> Result<f64> {
        let (_, d) = self.monodromy_with_derivative(C64::new(lambda, 0.0))?;
        Ok((d[0] + d[3]).re)
    }
}

/// Fundamental matrix at `x = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonodromyMatrix {
    pub lambda: C64,
    pub m11: C64,
    pub m12: C64,
    pub m21: C64,
    pub m22: C64,
}

impl MonodromyMatrix {
    pub fn trace(&self) -> C64 {
        self.m11 + self.m22
    }

    pub fn det(&self) -> C64 {
        self.m11 * self.m22 - self.m12 * self.m21
    }

    /// `(m11 - m22)² + 4 m12 m21`, equal to `Δ² - 4` when `det = 1`.
    pub fn stable_disc(&self) -> C64 {
        let d = self.m11 - self.m22;
        d * d + 4.0 * self.m12 * self.m21
    }
}

/// Monodromy with the potential frozen on `cells` cells.
pub fn monodromy(phi: &Potential, lambda: C64, cells: usize) -> Result<MonodromyMatrix> {
    CellPotential::new(phi, cells)?.monodromy(lambda)
}

/// `Δ(λ)` at the default cell count.
pub fn discriminant(phi: &Potential, lambda: C64) -> Result<C64> {
    CellPotential::with_default_cells(phi)?.discriminant(lambda)
}

/// Options of the periodic spectrum search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumOptions {
    /// Cell count; `None` means `4 × point_count`.
    pub cells: Option<usize>,
    /// Points of the Δ' sign scan per window.
    pub scan_points: usize,
    /// Combine runs at `cells` and `2·cells` to cancel the O(h²) error.
    pub richardson: bool,
    /// Gaps with `γ_n ≤ gap_tol_scale · max(1, |n|)` count as closed.
    pub gap_tol_scale: f64,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self {
            cells: None,
            scan_points: 33,
            richardson: true,
            gap_tol_scale: 1e-9,
        }
    }
}

/// One row of a [`GapTable`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapEntry {
    pub n: i64,
    pub lambda_minus: f64,
    pub lambda_plus: f64,
    pub tau: f64,
    pub gamma: f64,
    pub open: bool,
}

impl GapEntry {
    fn from_pair(n: i64, lo: f64, hi: f64, gap_tol: f64) -> Self {
        let tau = 0.5 * (lo + hi);
        let gamma = hi - lo;
        if gamma > gap_tol {
            Self {
                n,
                lambda_minus: lo,
                lambda_plus: hi,
                tau,
                gamma,
                open: true,
            }
        } else {
            Self {
                n,
                lambda_minus: tau,
                lambda_plus: tau,
                tau,
                gamma: 0.0,
                open: false,
            }
        }
    }
}

/// Periodic eigenvalue pairs `λ_n^±` for `n ∈ [-K, K]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapTable {
    k: usize,
    entries: Vec<GapEntry>,
    pairing: f64,
    gap_tol_scale: f64,
}

impl GapTable {
    /// Assembles a table from raw eigenvalue pairs `(λ⁻, λ⁺)` ordered by `n = -K..=K`.
    pub fn from_pairs(pairs: &[(f64, f64)], pairing: f64, gap_tol_scale: f64) -> Result<Self> {
        if pairs.len().is_multiple_of(2) {
            return Err(Error::Config("gap table needs 2K+1 entries".into()));
        }
        let k = pairs.len() / 2;
        let entries: Vec<GapEntry> = pairs
            .iter()
            .enumerate()
            .map(|(j, &(lo, hi))| {
                let n = j as i64 - k as i64;
                GapEntry::from_pair(
                    n,
                    lo.min(hi),
                    lo.max(hi),
                    gap_tol_scale * (n.abs().max(1) as f64),
                )
            })
            .collect();
        for w in entries.windows(2) {
            if !(w[0].lambda_plus < w[1].lambda_minus) {
                return Err(Error::Internal(format!(
                    "gap ordering violated between n = {} and n = {}",
                    w[0].n, w[1].n
                )));
            }
        }
        Ok(Self {
            k,
            entries,
            pairing,
            gap_tol_scale,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn entries(&self) -> &[GapEntry] {
        &self.entries
    }

    pub fn get(&self, n: i64) -> Option<&GapEntry> {
        if n.unsigned_abs() as usize > self.k {
            None
        } else {
            Some(&self.entries[(n + self.k as i64) as usize])
        }
    }

    pub fn open_indices(&self) -> Vec<i64> {
        self.entries
            .iter()
            .filter(|e| e.open)
            .map(|e| e.n)
            .collect()
    }

    /// `∫ φ1 φ2` of the potential the table was computed from.
    pub fn pairing(&self) -> f64 {
        self.pairing
    }

    pub fn gap_tol(&self, n: i64) -> f64 {
        self.gap_tol_scale * n.abs().max(1) as f64
    }

    /// `τ_n` from the table, or the constant-potential value
    /// `sign(n)·sqrt(n²π² + ∫φ1φ2)` outside it.
    pub fn tau_or_asymptotic(&self, n: i64) -> f64 {
        match self.get(n) {
            Some(e) => e.tau,
            None => (n as f64).signum() * ((n as f64 * PI).powi(2) + self.pairing).sqrt(),
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "n,lambda_minus,lambda_plus,tau,gamma,open")?;
        for e in &self.entries {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                e.n,
                num(e.lambda_minus),
                num(e.lambda_plus),
                num(e.tau),
                num(e.gamma),
                e.open
            )?;
        }
        out.flush()?;
        Ok(())
    }
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    let f_lo = f(lo)?;
    let lo_negative = f_lo < 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid)?;
        if v == 0.0 {
            return Ok(mid);
        }
        if (v < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Number of zeros of `Δ² - 4` inside the rectangle
/// `[re_lo, re_hi] × [-height, height]`, by the argument principle.
pub fn count_zeros_in_rectangle(
    cp: &CellPotential,
    re_lo: f64,
    re_hi: f64,
    height: f64,
) -> Result<i64> {
    let corners = [
        C64::new(re_lo, -height),
        C64::new(re_hi, -height),
        C64::new(re_hi, height),
        C64::new(re_lo, height),
    ];
    let f = |z: C64| cp.disc_squared_minus_four(z);
    let mut total = 0.0;
    for e in 0..4 {
        let (za, zb) = (corners[e], corners[(e + 1) % 4]);
        const SEGMENTS: usize = 64;
        let vals: Vec<C64> = (0..=SEGMENTS)
            .map(|j| f(za + (zb - za) * (j as f64 / SEGMENTS as f64)))
            .collect::<Result<_>>()?;
        let mut stack: Vec<(f64, f64, C64, C64)> = (0..SEGMENTS)
            .rev()
            .map(|j| {
                let t = |j: usize| j as f64 / SEGMENTS as f64;
                (t(j), t(j + 1), vals[j], vals[j + 1])
            })
            .collect();
        while let Some((ta, tb, fa, fb)) = stack.pop() {
            if fa.norm() == 0.0 || fb.norm() == 0.0 {
                return Err(Error::Internal("zero on argument-principle contour".into()));
            }
            let dphi = (fb / fa).arg();
            if dphi.abs() < 0.5 || tb - ta < 1e-9 {
                total += dphi;
            } else {
                let tm = 0.5 * (ta + tb);
                let fm = f(za + (zb - za) * tm)?;
                stack.push((tm, tb, fm, fb));
                stack.push((ta, tm, fa, fm));
            }
        }
    }
    Ok((total / (2.0 * PI)).round() as i64)
}

/// Unthresholded eigenvalue pair in the window around `nπ`.
fn window_pair(cp: &CellPotential, n: i64, scan_points: usize) -> Result<(f64, f64)> {
    let center = n as f64 * PI;
    let (a, b) = (center - 0.5 * PI, center + 0.5 * PI);
    let resolution = |detail: String| Error::Resolution { n, detail };
    if cp.disc_real(a)? >= 0.0 || cp.disc_real(b)? >= 0.0 {
        return Err(resolution(
            "window edge is not inside a spectral band; potential too large for the window".into(),
        ));
    }
    let scan = scan_points.max(5);
    let xs: Vec<f64> = (0..scan)
        .map(|j| a + (b - a) * j as f64 / (scan - 1) as f64)
        .collect();
    let dd: Vec<f64> = xs
        .iter()
        .map(|&x| cp.ddelta_real(x))
        .collect::<Result<_>>()?;
    let changes: Vec<usize> = (0..scan - 1)
        .filter(|&j| (dd[j] < 0.0) != (dd[j + 1] < 0.0))
        .collect();
    let star = if changes.len() == 1 {
        let j = changes[0];
        bisect(xs[j], xs[j + 1], |x| cp.ddelta_real(x))?
    } else {
        let count = count_zeros_in_rectangle(cp, a, b, 0.25 * PI)?;
        if count != 2 {
            return Err(resolution(format!(
                "{count} roots of Δ²-4 in the window (expected 2)"
            )));
        }
        let ds: Vec<f64> = xs.iter().map(|&x| cp.disc_real(x)).collect::<Result<_>>()?;
        let (j, _) = ds
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.total_cmp(y.1))
            .expect("scan is non-empty");
        golden_max(xs[j.saturating_sub(1)], xs[(j + 1).min(scan - 1)], |x| {
            cp.disc_real(x)
        })?
    };
    let peak = cp.disc_real(star)?;
    if peak <= 0.0 {
        if peak < -1e-8 {
            return Err(Error::Internal(format!(
                "Δ²-4 stays negative at the window extremum (n = {n}, value {peak:.3e}); non-real eigenvalues"
            )));
        }
        return Ok((star, star));
    }
    let lo = bisect(a, star, |x| cp.disc_real(x))?;
    let hi = bisect(star, b, |x| cp.disc_real(x))?;
    Ok((lo, hi))
}

fn golden_max(mut a: f64, mut b: f64, f: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    for _ in 0..120 {
        if b - a < 1e-14 * (1.0 + a.abs()) {
            break;
        }
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2)?;
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1)?;
        }
    }
    Ok(0.5 * (a + b))
}

fn raw_pairs(cp: &CellPotential, k: usize, scan_points: usize) -> Result<Vec<(f64, f64)>> {
    let k = k as i64;
    (-k..=k)
        .into_par_iter()
        .map(|n| window_pair(cp, n, scan_points))
        .collect()
}

/// Periodic spectrum for `n ∈ [-K, K]` with default options.
pub fn periodic_spectrum(phi: &Potential, k: usize) -> Result<GapTable> {
    periodic_spectrum_with(phi, k, &SpectrumOptions::default())
}

pub fn periodic_spectrum_with(
    phi: &Potential,
    k: usize,
    opts: &SpectrumOptions,
) -> Result<GapTable> {
    if k < 4 {
        return Err(Error::Config(format!("K must be at least 4, got {k}")));
    }
    if !phi.is_real_type() {
        return Err(Error::Domain(
            "periodic spectrum search requires a real-type potential".into(),
        ));
    }
    let cells = opts
        .cells
        .unwrap_or(DEFAULT_CELL_FACTOR * phi.grid().point_count());
    let coarse = CellPotential::new(phi, cells)?;
    let pairs = if opts.richardson {
        let fine = CellPotential::new(phi, 2 * cells)?;
        let pc = raw_pairs(&coarse, k, opts.scan_points)?;
        let pf = raw_pairs(&fine, k, opts.scan_points)?;
        pc.iter()
            .zip(&pf)
            .map(|(&(c0, c1), &(f0, f1))| {
                let lo = (4.0 * f0 - c0) / 3.0;
                let hi = (4.0 * f1 - c1) / 3.0;
                if hi < lo {
                    let mid = 0.5 * (lo + hi);
                    (mid, mid)
                } else {
                    (lo, hi)
                }
            })
            .collect()
    } else {
        raw_pairs(&coarse, k, opts.scan_points)?
    };
    GapTable::from_pairs(&pairs, coarse.pairing(), opts.gap_tol_scale)
}

/// `k²·|τ_k - kπ - ∫φ1φ2 / (2πk)|` for `1 ≤ |k| ≤ K`.
pub fn tau_asymptotics_check(gaps: &GapTable, phi: &Potential) -> Vec<(i64, f64)> {
    let e = phi.pairing().re;
    gaps.entries()
        .iter()
        .filter(|g| g.n != 0)
        .map(|g| {
            let k = g.n as f64;
            (g.n, k * k * (g.tau - k * PI - e / (2.0 * PI * k)).abs())
        })
        .collect()
}
