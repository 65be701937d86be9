//! Acceptance criteria evaluated on a scenario [`Context`].
//!
//! Each criterion bundles several numeric checks. A criterion passes when
//! every check passes; errors raised while computing a check fail it and
//! are recorded in `note`.

use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::compare::{boundedness_verdict, norm_series, Verdict};
use crate::error::{Error, Result};
use crate::field::{Potential, SpectralGrid};
use crate::flow::{conserved_report, evolve, evolve_to};
use crate::frequencies::{frequency_residuals, lemma210_check, loglog_slope};
use crate::harness::Context;
use crate::normalization::{
    normalization_integral, solve_sigmas, trace_identity_check, NormalizationOptions,
};
use crate::scenario::Profile;
use crate::spectral::{discriminant, periodic_spectrum_with};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

impl Status {
    pub fn label(self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skipped => "SKIP",
        }
    }
}

/// One numeric comparison `value <relation> bound`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub relation: String,
    pub passed: bool,
}

impl CheckOutcome {
    fn below(name: &str, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
            relation: "<".into(),
            passed: value < bound,
        }
    }

    fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
            relation: "<=".into(),
            passed: value <= bound,
        }
    }

    fn at_least(name: &str, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
            relation: ">=".into(),
            passed: value >= bound,
        }
    }

    fn holds(name: &str, ok: bool) -> Self {
        Self {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            bound: 1.0,
            relation: "==".into(),
            passed: ok,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: u32,
    pub title: String,
    pub status: Status,
    pub checks: Vec<CheckOutcome>,
    pub seconds: f64,
    pub note: Option<String>,
}

impl CriterionReport {
    pub fn skipped(id: u32) -> Self {
        Self {
            id,
            title: title(id).into(),
            status: Status::Skipped,
            checks: Vec::new(),
            seconds: 0.0,
            note: None,
        }
    }

    /// One line: status, id, title, then the failing check or all values.
    pub fn line(&self) -> String {
        let detail = match (&self.note, self.checks.iter().find(|c| !c.passed)) {
            (Some(n), _) => n.clone(),
            (None, Some(c)) => {
                format!("{}: {:.3e} {} {:.3e}", c.name, c.value, c.relation, c.bound)
            }
            (None, None) => self
                .checks
                .iter()
                .map(|c| format!("{}={:.3e}", c.name, c.value))
                .collect::<Vec<_>>()
                .join(" "),
        };
        format!(
            "[{}] criterion {:2} {} ({:.1} s) {}",
            self.status.label(),
            self.id,
            self.title,
            self.seconds,
            detail
        )
    }
}

pub fn title(id: u32) -> &'static str {
    match id {
        1 => "zero-potential exactness",
        2 => "constant-potential closed forms",
        3 => "plane-wave dynamics",
        4 => "solver structure",
        5 => "normalization certificate",
        6 => "frequency asymptotics",
        7 => "u - v boundedness",
        8 => "u - w linear bound",
        9 => "fractional norm boundedness",
        10 => "high-frequency approximation",
        11 => "half-range sum identity",
        _ => "unknown",
    }
}

/// Runs criterion `id` on `ctx`.
pub fn evaluate(ctx: &Context<'_>, id: u32) -> CriterionReport {
    let start = Instant::now();
    let mut checks = Vec::new();
    let result = match id {
        1 => zero_potential(ctx, &mut checks),
        2 => constant_potential(ctx, &mut checks),
        3 => plane_wave(ctx, &mut checks),
        4 => solver_structure(ctx, &mut checks),
        5 => normalization_certificate(ctx, &mut checks),
        6 => asymptotics(ctx, &mut checks),
        7 => nearly_linear(ctx, &mut checks),
        8 => modified_free(ctx, &mut checks),
        9 => fractional_norm(ctx, &mut checks),
        10 => high_frequency(ctx, &mut checks),
        11 => half_range_sum(ctx, &mut checks),
        _ => Err(Error::Config(format!("unknown criterion {id}"))),
    };
    let seconds = start.elapsed().as_secs_f64();
    if let Some(budget) = ctx.scenario.tolerances.runtime_budget(id) {
        checks.push(CheckOutcome::below("runtime_seconds", seconds, budget));
    }
    let note = result.err().map(|e| e.to_string());
    let passed = note.is_none() && checks.iter().all(|c| c.passed);
    CriterionReport {
        id,
        title: title(id).into(),
        status: if passed { Status::Pass } else { Status::Fail },
        checks,
        seconds,
        note,
    }
}

fn max_of(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(0.0, f64::max)
}

/// 200 points covering the windows `|n| ≤ K`.
fn lambda_grid(k: usize) -> Vec<f64> {
    let half = (k as f64 + 0.5) * PI;
    (0..200)
        .map(|j| -half + 2.0 * half * j as f64 / 199.0)
        .collect()
}

fn zero_potential(ctx: &Context<'_>, out: &mut Vec<CheckOutcome>) -> Result<()> {
    if !matches!(ctx.scenario.profile, Profile::Zero) {
        return Err(Error::Config("criterion 1 needs the zero profile".into()));
    }
    let t = &ctx.scenario.tolerances;
    let mut err: f64 = 0.0;
    for l in lambda_grid(ctx.scenario.k) {
        let d = discriminant(&ctx.potential, Complex64::new(l, 0.0))?;
        err = err.max((d - 2.0 * l.cos()).norm());
    }
    out.push(CheckOutcome::below(
        "discriminant_error",
        err,
        t.discriminant,
    ));
    let gaps = ctx.gaps()?;
    let eig = max_of(gaps.entries().iter().map(|g| {
        let npi = g.n as f64 * PI;
        (g.lambda_minus - npi)
            .abs()
            .max((g.lambda_plus - npi).abs())
    }));
    out.push(CheckOutcome::below("eigenvalue_error", eig, t.eigenvalue));
    let table = ctx.frequencies()?;
    let w = max_of(
        table
            .rows
            .values()
            .map(|r| (r.omega_nls - 4.0 * PI * PI * (r.n * r.n) as f64).abs()),
    );
    out.push(CheckOutcome::below("frequency_error", w, t.zero_frequency));
    let res = max_of(ctx.sigmas()?.iter().map(|s| s.max_residual()));
    out.push(CheckOutcome::at_most(
        "normalization_residual",
        res,
        t.zero_residual,
    ));
    Ok(())
}

fn constant_potential(ctx: &Context<'_>, out: &mut Vec<CheckOutcome>) -> Result<()> {
    let Profile::Constant { a } = ctx.scenario.profile else {
        return Err(Error::Config("criterion 2 needs a constant profile".into()));
    };
    let t = &ctx.scenario.tolerances;
    let mut err: f64 = 0.0;
    for l in lambda_grid(ctx.scenario.k) {
        let d = discriminant(&ctx.potential, Complex64::new(l, 0.0))?;
        let exact = 2.0 * Complex64::new(l * l - a * a, 0.0).sqrt().cos();
        err = err.max((d - exact).norm());
    }
    out.push(CheckOutcome::below(
        "discriminant_error",
        err,
        t.discriminant,
    ));
    let gaps = ctx.gaps()?;
    let g0 = gaps.get(0).map_or(0.0, |g| g.gamma);
    out.push(CheckOutcome::below(
        "gamma0_error",
        (g0 - 2.0 * a.abs()).abs(),
        t.gap_length,
    ));
    let others = max_of(gaps.entries().iter().filter(|g| g.n != 0).map(|g| g.gamma));
    out.push(CheckOutcome::below("other_gaps", others, t.gap_length));
    let w0 = ctx
        .frequencies()?
        .omega(0)
        .ok_or_else(|| Error::Config("frequency table lacks n = 0".into()))?;
    out.push(CheckOutcome::below(
        "omega0_error",
        (w0 - 2.0 * a * a).abs(),
        t.constant_frequency,
    ));
    let traj = ctx.trajectory()?;
    let mut sol: f64 = 0.0;
    for (&time, u) in traj.times.iter().zip(&traj.states) {
        let exact = Complex64::new(a, 0.0) * Complex64::from_polar(1.0, -2.0 * a * a * time);
        let diff = u
            .modes_ascending()
            .map(|(n, c)| {
                if n == 0 {
                    (c - exact).norm_sqr()
                } else {
                    c.norm_sqr()
                }
            })
            .sum::<f64>()
            .sqrt();
        sol = sol.max(diff);
    }
    out.push(CheckOutcome::below(
        "exact_solution_error",
        sol,
        t.exact_solution,
    ));
    let w_hat = ctx
        .extracted()?
        .get(&0)
        .copied()
        .ok_or_else(|| Error::Config("mode 0 was not extracted".into()))?;
    out.push(CheckOutcome::below(
        "extracted_omega0_relative",
        ((w_hat - 2.0 * a * a) / (2.0 * a * a)).abs(),
        t.extracted_relative,
    ));
    Ok(())
}

fn plane_wave(ctx: &Context<'_>, out: &mut Vec<CheckOutcome>) -> Result<()> {
    let Profile::PlaneWave { n, a } = ctx.scenario.profile else {
        return Err(Error::Config(
            "criterion 3 needs a plane-wave profile".into(),
        ));
    };
    let t = &ctx.scenario.tolerances;
    let exact = 4.0 * PI * PI * (n * n) as f64 + 2.0 * a * a;
    let w_hat = ctx
        .extracted()?
        .get(&n)
        .copied()
        .ok_or_else(|| Error::Config(format!("mode {n} was not extracted")))?;
    out.push(CheckOutcome::below(
        "extracted_relative",
        ((w_hat - exact) / exact).abs(),
        t.extracted_relative,
    ));
    let w = ctx
        .frequencies()?
        .omega(n)
        .ok_or_else(|| Error::Config(format!("frequency table lacks n = {n}")))?;
    out.push(CheckOutcome::below(
        "pipeline_relative",
        ((w - w_hat) / w_hat).abs(),
        t.pipeline_relative,
    ));
    Ok(())
}

fn solver_structure(ctx: &Context<'_>, out: &mut Vec<CheckOutcome>) -> Result<()> {
    let scn = ctx.scenario;
    let t = &scn.tolerances;
    let traj = ctx.trajectory()?;
    let report = conserved_report(traj);
    out.push(CheckOutcome::below("l2_drift", report.l2_drift, t.l2_drift));
    // Same sample times at dt and dt/2.
    let coarse = report.hamiltonian_drift;
    let fine_traj = evolve(&ctx.u0, scn.t_end, 0.5 * scn.dt, 2 * scn.stride)?;
    let fine = conserved_report(&fine_traj).hamiltonian_drift;
    let ratio = coarse / fine;
    let lo = t.hamiltonian_ratio * (1.0 - t.hamiltonian_ratio_band);
    let hi = t.hamiltonian_ratio * (1.0 + t.hamiltonian_ratio_band);
    out.push(CheckOutcome::at_least("hamiltonian_ratio_low", ratio, lo));
    out.push(CheckOutcome::at_most("hamiltonian_ratio_high", ratio, hi));
    let back = evolve_to(traj.last(), -scn.t_end, scn.dt)?;
    let err = back.sub(&ctx.u0)?.sobolev_norm(0.0)?;
    out.push(CheckOutcome::below("round_trip_h0", err, t.round_trip));
    Ok(())
}

fn normalization_certificate(ctx: &Context<'_>, out: &mut Vec<CheckOutcome>) -> Result<()> {
    let t = &ctx.scenario.tolerances;
    let gaps = ctx.gaps()?;
    let sigmas = ctx.sigmas()?;
    let open = gaps.open_indices();
    out.push(CheckOutcome::at_least("open_gaps", open.len() as f64, 2.0));
    out.push(CheckOutcome::holds(
        "all_converged",
        sigmas.iter().all(|s| s.converged),
    ));
    let res = max_of(sigmas.iter().map(|s| s.max_residual()));
    out.push(CheckOutcome::below(
        "normalization_residual",
        res,
        t.normalization_residual,
    ));
    let mut trace: f64 = 0.0;
    for s in sigmas {
        trace = trace.max(trace_identity_check(gaps, s)?);
    }
    out.push(CheckOutcome::below(
        "trace_identity",
        trace,
        t.trace_identity,
    ));
    let base = &ctx.scenario.normalization;
    let alt = NormalizationOptions {
        radius_scale: base.radius_scale * t.contour_alt_scale,
        ..base.clone()
    };
    let mut change: f64 = 0.0;
    for s in sigmas {
        for &m in &open {
            let a = normalization_integral(gaps, s, m, base)?;
            let b = normalization_integral(gaps, s, m, &alt)?;
            change = change.max((a - b).abs());
        }
    }
    out.push(CheckOutcome::below(
        "contour_radius_change",
        change,
        t.contour_change,
    ));
    Ok(())
}

fn pinned(value: Option<f64>, name: &str) -> Result<f64> {
    value.ok_or_else(|| Error::Config(format!("tolerances.{name} is not pinned in this scenario")))
}

fn asymptotics(ctx: &Context<'_>, out: &mut Vec<CheckOutcome>) -> Result<()> {
    let scn = ctx.scenario;
    let t = &scn.tolerances;
    out.push(CheckOutcome::at_most(
        "h2_norm",
        ctx.u0.sobolev_norm(2.0)?,
        t.h2_radius,
    ));
    let table = ctx.frequencies()?;
    let (lo, hi) = t.asymptotic_range;
    for (name, sign) in [("rho_slope_positive", 1), ("rho_slope_negative", -1)] {
        let pts: Vec<(f64, f64)> = (lo..=hi)
            .filter_map(|n| table.rows.get(&(sign * n)).map(|r| (n as f64, r.rho.abs())))
            .collect();
        if pts.len() < (hi - lo + 1) as usize {
            return Err(Error::Config(format!(
                "frequencies missing for |n| in [{lo}, {hi}]"
            )));
        }
        out.push(CheckOutcome::at_most(
            name,
            loglog_slope(&pts)?,
            t.rho_slope,
        ));
    }
    let bound = pinned(t.weighted_rho, "weighted_rho")?;
    let k_max = scn.frequency_indices().last().copied().unwrap_or(0);
    let coarse = table.max_weighted_rho(0, k_max);
    out.push(CheckOutcome::at_most("max_weighted_rho", coarse, bound));
    // Same data on a doubled grid.
    let grid = SpectralGrid::new(2 * scn.point_count)?;
    let phi = Potential::from_state(&scn.profile.build(grid)?);
    let gaps = periodic_spectrum_with(&phi, scn.k, &scn.spectrum)?;
    let sigmas = solve_sigmas(&gaps, &scn.frequency_indices(), &scn.normalization)?;
    let fine = frequency_residuals(&gaps, &sigmas, &phi)?.max_weighted_rho(0, k_max);
    out.push(CheckOutcome::below(
        "resolution_change",
        ((fine - coarse) / coarse).abs(),
        t.resolution_change,
    ));
    Ok(())
}

fn verdict_checks(prefix: &str, v: &Verdict, fraction: f64, out: &mut Vec<CheckOutcome>) {
    out.push(CheckOutcome::holds(
        &format!("{prefix}_sup_finite"),
        v.sup.is_finite(),
    ));
    out.push(CheckOutcome::below(
        &format!("{prefix}_slope_times_span"),
        v.slope * v.span,
        fraction * v.sup,
    ));
    out.push(CheckOutcome::holds(&format!("{prefix}_bounded"), v.bounded));
}

fn nearly_linear(ctx: &Context<'_>, out: &mut Vec<CheckOutcome>) -> Result<()> {
    let t = &ctx.scenario.tolerances;
    let series = ctx.difference(true, ctx.scenario.sobolev_index + 1.0)?;
    let v = boundedness_verdict(&series, t.bounded_fraction);
    out.push(CheckOutcome::at_least("sup", v.sup, 0.0));
    verdict_checks("u_minus_v", &v, t.bounded_fraction, out);
    Ok(())
}

fn modified_free(ctx: &Context<'_>, out: &mut Vec<CheckOutcome>) -> Result<()> {
    let t = &ctx.scenario.tolerances;
    let series = ctx.difference(false, ctx.scenario.sobolev_index + 1.0)?;
    let c = pinned(t.linear_growth, "linear_growth")?;
    let ratios: Vec<(f64, f64)> = series
        .times
        .iter()
        .zip(&series.values)
        .map(|(&time, &v)| (time, v / (1.0 + time.abs())))
        .collect();
    out.push(CheckOutcome::at_most(
        "max_ratio",
        max_of(ratios.iter().map(|r| r.1)),
        c,
    ));
    let before = max_of(
        ratios
            .iter()
            .filter(|r| r.0 <= t.running_max_after)
            .map(|r| r.1),
    );
    let after = max_of(
        ratios
            .iter()
            .filter(|r| r.0 > t.running_max_after)
            .map(|r| r.1),
    );
    out.push(CheckOutcome::at_most("running_max_after", after, before));
    Ok(())
}

fn fractional_norm(ctx: &Context<'_>, out: &mut Vec<CheckOutcome>) -> Result<()> {
    let t = &ctx.scenario.tolerances;
    let series = norm_series(ctx.trajectory()?, ctx.scenario.fractional_index)?;
    let v = boundedness_verdict(&series, t.bounded_fraction);
    verdict_checks("norm", &v, t.bounded_fraction, out);
    Ok(())
}

fn high_frequency(ctx: &Context<'_>, out: &mut Vec<CheckOutcome>) -> Result<()> {
    let report = ctx.highfreq()?;
    let mut rows = report.rows.clone();
    rows.sort_by_key(|r| r.level);
    if rows.len() < 2 {
        return Err(Error::Config(
            "high-frequency experiment needs at least two levels".into(),
        ));
    }
    for w in rows.windows(2) {
        out.push(CheckOutcome::below(
            &format!("sup_u_minus_v_L{}_over_L{}", w[1].level, w[0].level),
            w[1].sup_u_minus_v / w[0].sup_u_minus_v,
            1.0,
        ));
    }
    Ok(())
}

fn half_range_sum(ctx: &Context<'_>, out: &mut Vec<CheckOutcome>) -> Result<()> {
    let t = &ctx.scenario.tolerances;
    let bound = pinned(t.half_range_sum, "half_range_sum")?;
    let gaps = ctx.gaps()?;
    let (lo, hi) = t.asymptotic_range;
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for s in ctx
        .sigmas()?
        .iter()
        .filter(|s| (lo..=hi).contains(&s.n.abs()))
    {
        worst = worst.max(lemma210_check(gaps, s, s.n, &ctx.potential)?);
        count += 1;
    }
    if count == 0 {
        return Err(Error::Config(format!(
            "no sigma sets with |n| in [{lo}, {hi}]"
        )));
    }
    out.push(CheckOutcome::at_most("max_weighted_residual", worst, bound));
    Ok(())
}
