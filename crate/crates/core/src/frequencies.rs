//! NLS frequencies from spectral data and their asymptotic residuals.
//!
//! `ω_n = 2τ_n² + 2n²π² + 2Σ_{k≠n} (τ_k - σ_k^n)(τ_k + σ_k^n) + ½Σ_k γ_k²`.
//! Closed gaps contribute nothing to either sum.
//!
//! The cross term carries `τ_k - σ_k^n`, matching [`lemma210_check`]. The other
//! sign misses the first-order normal form `4π²n² + 4Σ_k I_k - 2I_n`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Potential;
use crate::normalization::{solve_sigmas, NormalizationOptions, SigmaSet};
use crate::output::num;
use crate::spectral::GapTable;

/// One row of a [`FrequencyTable`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyRow {
    pub n: i64,
    pub omega_nls: f64,
    /// `ω_n^NLS - 4π²n²`.
    pub omega_renorm: f64,
    /// `ω_n^NLS - 4π²n² - 4∫φ1φ2`.
    pub rho: f64,
    /// `(1 + |n|) ρ_n`.
    pub weighted_rho: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTable {
    pub rows: BTreeMap<i64, FrequencyRow>,
    /// `∫ φ1 φ2`.
    pub pairing: f64,
    /// Estimate of `½ Σ_{|k|>K} γ_k²`, the truncation error of every `ω_n`.
    pub tail_bound: f64,
}

impl FrequencyTable {
    pub fn omega(&self, n: i64) -> Option<f64> {
        self.rows.get(&n).map(|r| r.omega_nls)
    }

    /// Largest `(1 + |n|)|ρ_n|` over `n_min ≤ |n| ≤ n_max`.
    pub fn max_weighted_rho(&self, n_min: i64, n_max: i64) -> f64 {
        self.rows
            .values()
            .filter(|r| (n_min..=n_max).contains(&r.n.abs()))
            .fold(0.0, |a, r| a.max(r.weighted_rho.abs()))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "n,omega_nls,omega_renorm,rho,weighted_rho")?;
        for r in self.rows.values() {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.n,
                num(r.omega_nls),
                num(r.omega_renorm),
                num(r.rho),
                num(r.weighted_rho)
            )?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `ω_n^NLS` from a converged [`SigmaSet`].
pub fn frequency(gaps: &GapTable, sig: &SigmaSet, n: i64) -> Result<f64> {
    if !sig.converged || sig.n != n {
        return Err(Error::Config(format!(
            "frequency for n = {n} needs a converged sigma set for the same index (got n = {}, converged = {})",
            sig.n, sig.converged
        )));
    }
    let g = gaps
        .get(n)
        .ok_or_else(|| Error::Config(format!("n = {n} outside gap table")))?;
    let nn = n as f64 * PI;
    let cross: f64 = sig
        .sigma
        .iter()
        .map(|(&k, &s)| {
            let tau = gaps.get(k).map_or(s, |e| e.tau);
            (tau - s) * (tau + s)
        })
        .sum();
    let gamma2: f64 = gaps
        .entries()
        .iter()
        .filter(|e| e.open)
        .map(|e| e.gamma * e.gamma)
        .sum();
    Ok(2.0 * g.tau * g.tau + 2.0 * nn * nn + 2.0 * cross + 0.5 * gamma2)
}

/// Fills a [`FrequencyTable`] from solved sigma sets.
pub fn frequency_residuals(
    gaps: &GapTable,
    sigmas: &[SigmaSet],
    phi: &Potential,
) -> Result<FrequencyTable> {
    let e = phi.pairing().re;
    let mut rows = BTreeMap::new();
    for sig in sigmas {
        let n = sig.n;
        let omega_nls = frequency(gaps, sig, n)?;
        let omega_renorm = omega_nls - 4.0 * PI * PI * (n * n) as f64;
        let rho = omega_renorm - 4.0 * e;
        rows.insert(
            n,
            FrequencyRow {
                n,
                omega_nls,
                omega_renorm,
                rho,
                weighted_rho: (1.0 + n.abs() as f64) * rho,
            },
        );
    }
    Ok(FrequencyTable {
        rows,
        pairing: e,
        tail_bound: 0.5 * gamma_tail_bound(gaps),
    })
}

/// Solves for every `n` in `ns` and assembles the frequency table.
pub fn compute_frequencies(
    gaps: &GapTable,
    ns: &[i64],
    phi: &Potential,
    opts: &NormalizationOptions,
) -> Result<(Vec<SigmaSet>, FrequencyTable)> {
    let sigmas = solve_sigmas(gaps, ns, opts)?;
    let table = frequency_residuals(gaps, &sigmas, phi)?;
    Ok((sigmas, table))
}

/// `|n| · |Σ_{|k|≤|n|/2} ((τ_k - σ_k^n)(τ_k + σ_k^n) + (γ_k/2)²) - ∫φ1φ2|`.
pub fn lemma210_check(gaps: &GapTable, sig: &SigmaSet, n: i64, phi: &Potential) -> Result<f64> {
    if sig.n != n {
        return Err(Error::Config(format!(
            "sigma set is for n = {}, not {n}",
            sig.n
        )));
    }
    let half = n.abs() / 2;
    let sum: f64 = gaps
        .entries()
        .iter()
        .filter(|e| e.open && e.n.abs() <= half)
        .map(|e| {
            let s = sig.sigma.get(&e.n).copied().unwrap_or(e.tau);
            (e.tau - s) * (e.tau + s) + 0.25 * e.gamma * e.gamma
        })
        .sum();
    Ok(n.abs() as f64 * (sum - phi.pairing().re).abs())
}

/// `max_n |ω_n^NLS - 4π²n²|`.
pub fn omega_sup_check(table: &FrequencyTable) -> f64 {
    table
        .rows
        .values()
        .fold(0.0, |a, r| a.max(r.omega_renorm.abs()))
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Domain(
            "log-log fit needs two positive points".into(),
        ));
    }
    Ok(linear_fit(&pts).1)
}

/// `(intercept, slope)` of the least-squares line through `pts`.
pub fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - slope * mx, slope)
}

/// Estimate of `Σ_{|k|>K} γ_k²` from a power-law fit of the open gaps in
/// the last decade `K/10 < |k| ≤ K`. Zero when fewer than two gaps there are open;
/// infinite when the fitted decay is too slow to sum.
pub fn gamma_tail_bound(gaps: &GapTable) -> f64 {
    let k = gaps.k() as i64;
    let pts: Vec<(f64, f64)> = gaps
        .entries()
        .iter()
        .filter(|e| e.open && e.n.abs() * 10 > k)
        .map(|e| ((e.n.abs() as f64).ln(), (e.gamma * e.gamma).ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let (a, slope) = linear_fit(&pts);
    let p = -slope;
    if p <= 1.0 {
        return f64::INFINITY;
    }
    // Two sides of ∫_K^∞ e^a x^{-p} dx.
    2.0 * a.exp() * (k as f64).powf(1.0 - p) / (p - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::SpectralGrid;
    use crate::normalization::solve_sigma;
    use crate::spectral::periodic_spectrum;

    fn grid() -> SpectralGrid {
        SpectralGrid::new(16).unwrap()
    }

    #[test]
    fn zero_potential_frequencies() {
        let phi = Potential::zero(grid());
        let gaps = periodic_spectrum(&phi, 8).unwrap();
        let ns: Vec<i64> = (-8..=8).collect();
        let (_, table) = compute_frequencies(&gaps, &ns, &phi, &Default::default()).unwrap();
        for r in table.rows.values() {
            assert!((r.omega_nls - 4.0 * PI * PI * (r.n * r.n) as f64).abs() < 1e-9);
            assert!(r.rho.abs() < 1e-9);
        }
        assert!(omega_sup_check(&table) < 1e-9);
        assert_eq!(table.tail_bound, 0.0);
    }

    #[test]
    fn constant_potential_frequencies() {
        let a = 0.3;
        let phi = Potential::constant(grid(), a);
        let gaps = periodic_spectrum(&phi, 8).unwrap();
        let ns: Vec<i64> = (-6..=6).collect();
        let (sigmas, table) = compute_frequencies(&gaps, &ns, &phi, &Default::default()).unwrap();
        let r0 = table.rows[&0];
        assert!((r0.omega_nls - 2.0 * a * a).abs() < 1e-10);
        assert!((r0.rho + 2.0 * a * a).abs() < 1e-10);
        for sig in sigmas.iter().filter(|s| s.n != 0) {
            let n = sig.n;
            let tau_n = (n as f64).signum() * ((n as f64 * PI).powi(2) + a * a).sqrt();
            let s0 = tau_n - n as f64 * PI;
            let expected = 4.0 * PI * PI * (n * n) as f64 + 4.0 * a * a - 2.0 * s0 * s0;
            assert!(
                (table.rows[&n].omega_nls - expected).abs() < 1e-8,
                "n = {n}"
            );
            // Half-range sum: (γ_0/2)² - σ_0² against a².
            let l = lemma210_check(&gaps, sig, n, &phi).unwrap();
            if n.abs() >= 2 {
                assert!((l - n.abs() as f64 * s0 * s0).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn unconverged_sigma_is_rejected() {
        let phi = Potential::constant(grid(), 0.3);
        let gaps = periodic_spectrum(&phi, 6).unwrap();
        let mut sig = solve_sigma(&gaps, 2).unwrap();
        sig.converged = false;
        assert!(frequency(&gaps, &sig, 2).is_err());
        sig.converged = true;
        assert!(frequency(&gaps, &sig, 3).is_err());
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = (4..=24)
            .map(|n| (n as f64, 3.0 / (n as f64).powi(2)))
            .collect();
        assert!((loglog_slope(&pts).unwrap() + 2.0).abs() < 1e-12);
        assert!(loglog_slope(&[(1.0, 1.0)]).is_err());
    }

    #[test]
    fn tail_bound_of_synthetic_power_law() {
        let k = 20usize;
        let pairs: Vec<(f64, f64)> = (-(k as i64)..=k as i64)
            .map(|n| {
                let g = 0.1 / (n.abs().max(1) as f64).powi(2);
                (n as f64 * PI - g / 2.0, n as f64 * PI + g / 2.0)
            })
            .collect();
        let gaps = GapTable::from_pairs(&pairs, 0.0, 1e-12).unwrap();
        // γ² = 0.01 k^{-4}; two-sided tail ≈ 2·0.01·K^{-3}/3.
        let expected = 2.0 * 0.01 * (k as f64).powi(-3) / 3.0;
        let got = gamma_tail_bound(&gaps);
        assert!((got / expected - 1.0).abs() < 1e-6, "{got} vs {expected}");
    }
}
