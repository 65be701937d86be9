//! Scenario runner and the bundled check suite.

use std::cell::OnceCell;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::checks::{evaluate, CriterionReport, Status};
use crate::compare::{
    difference_series, extract_frequencies, highfreq_experiment, norm_series, HighfreqReport,
    NormSeries, Reference,
};
use crate::error::{Error, Result};
use crate::field::{Potential, StateField};
use crate::flow::{conserved_report, evolve, Trajectory};
use crate::frequencies::{frequency_residuals, FrequencyTable};
use crate::normalization::{solve_sigmas, SigmaSet};
use crate::output::{create, num};
use crate::scenario::{Scenario, Stage, CRITERIA};
use crate::spectral::{periodic_spectrum_with, GapTable};

fn cached<T>(cell: &OnceCell<T>, f: impl FnOnce() -> Result<T>) -> Result<&T> {
    if let Some(v) = cell.get() {
        return Ok(v);
    }
    let v = f()?;
    Ok(cell.get_or_init(|| v))
}

/// Lazily computed artifacts of one scenario.
pub struct Context<'s> {
    pub scenario: &'s Scenario,
    pub u0: StateField,
    pub potential: Potential,
    trajectory: OnceCell<Trajectory>,
    gaps: OnceCell<GapTable>,
    sigmas: OnceCell<Vec<SigmaSet>>,
    table: OnceCell<FrequencyTable>,
    extracted: OnceCell<BTreeMap<i64, f64>>,
    highfreq: OnceCell<HighfreqReport>,
}

impl<'s> Context<'s> {
    pub fn new(scenario: &'s Scenario) -> Result<Self> {
        let u0 = scenario
            .initial_state()
            .map_err(|e| e.in_stage("initial data"))?;
        let potential = Potential::from_state(&u0);
        Ok(Self {
            scenario,
            u0,
            potential,
            trajectory: OnceCell::new(),
            gaps: OnceCell::new(),
            sigmas: OnceCell::new(),
            table: OnceCell::new(),
            extracted: OnceCell::new(),
            highfreq: OnceCell::new(),
        })
    }

    pub fn trajectory(&self) -> Result<&Trajectory> {
        cached(&self.trajectory, || {
            let s = self.scenario;
            if s.t_end <= 0.0 {
                return Err(Error::Config(
                    "scenario has no time interval (t_end = 0)".into(),
                ));
            }
            evolve(&self.u0, s.t_end, s.dt, s.stride).map_err(|e| e.in_stage("simulate"))
        })
    }

    pub fn gaps(&self) -> Result<&GapTable> {
        cached(&self.gaps, || {
            periodic_spectrum_with(&self.potential, self.scenario.k, &self.scenario.spectrum)
                .map_err(|e| e.in_stage("spectrum"))
        })
    }

    pub fn sigmas(&self) -> Result<&[SigmaSet]> {
        let gaps = self.gaps()?;
        cached(&self.sigmas, || {
            solve_sigmas(
                gaps,
                &self.scenario.frequency_indices(),
                &self.scenario.normalization,
            )
            .map_err(|e| e.in_stage("sigma"))
        })
        .map(Vec::as_slice)
    }

    pub fn frequencies(&self) -> Result<&FrequencyTable> {
        let gaps = self.gaps()?;
        let sigmas = self.sigmas()?;
        cached(&self.table, || {
            frequency_residuals(gaps, sigmas, &self.potential)
                .map_err(|e| e.in_stage("frequencies"))
        })
    }

    pub fn extracted(&self) -> Result<&BTreeMap<i64, f64>> {
        let traj = self.trajectory()?;
        cached(&self.extracted, || {
            extract_frequencies(traj, self.scenario.tolerances.amplitude_floor)
                .map_err(|e| e.in_stage("extract"))
        })
    }

    pub fn highfreq(&self) -> Result<&HighfreqReport> {
        cached(&self.highfreq, || {
            let cfg = self
                .scenario
                .highfreq
                .as_ref()
                .ok_or_else(|| Error::Config("scenario has no `highfreq` block".into()))?;
            highfreq_experiment(&self.u0, cfg).map_err(|e| e.in_stage("highfreq"))
        })
    }

    /// `u - v` or `u - w` in `H^s` along the trajectory.
    pub fn difference(&self, v: bool, s: f64) -> Result<NormSeries> {
        let traj = self.trajectory()?;
        let r = if v {
            Reference::NearlyLinear(self.frequencies()?)
        } else {
            Reference::ModifiedFree
        };
        difference_series(traj, r, s).map_err(|e| e.in_stage("compare"))
    }
}

/// Machine-readable result of one scenario run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub passed: bool,
    pub criteria: Vec<CriterionReport>,
    /// Wall-clock seconds per executed stage.
    pub stage_seconds: BTreeMap<String, f64>,
}

impl Summary {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            1
        }
    }
}

fn s_tag(s: f64) -> String {
    format!("{s}").replace('.', "p")
}

fn run_stage(stage: Stage, ctx: &Context<'_>, out: &Path) -> Result<()> {
    let scn = ctx.scenario;
    match stage {
        Stage::Simulate => {
            if scn.t_end <= 0.0 {
                return Ok(());
            }
            let traj = ctx.trajectory()?;
            let rep = conserved_report(traj);
            let mut w = create(&out.join("conserved.csv"))?;
            writeln!(w, "t,l2,hamiltonian,momentum")?;
            for r in &rep.rows {
                writeln!(
                    w,
                    "{},{},{},{}",
                    num(r.t),
                    num(r.l2),
                    num(r.hamiltonian),
                    num(r.momentum)
                )?;
            }
            w.flush()?;
            if scn.write_trajectory {
                traj.write_csv(create(&out.join("trajectory.csv"))?)?;
            }
        }
        Stage::Spectrum => ctx.gaps()?.write_csv(create(&out.join("spectrum.csv"))?)?,
        Stage::Sigma => {
            let gaps = ctx.gaps()?;
            for sig in ctx.sigmas()? {
                sig.write_csv(
                    gaps,
                    create(&out.join("sigma").join(format!("sigma_n{}.csv", sig.n)))?,
                )?;
            }
        }
        Stage::Frequencies => ctx
            .frequencies()?
            .write_csv(create(&out.join("frequencies.csv"))?)?,
        Stage::Compare => {
            if scn.t_end <= 0.0 {
                return Ok(());
            }
            for &s in &scn.s_values {
                for v in [true, false] {
                    let series = ctx.difference(v, s)?;
                    let name = format!(
                        "compare_{}_s{}.csv",
                        series.label.replace('-', "_"),
                        s_tag(s)
                    );
                    series.write_csv(create(&out.join(name))?)?;
                }
            }
            let norms = norm_series(ctx.trajectory()?, scn.fractional_index)?;
            norms.write_csv(create(
                &out.join(format!("norm_s{}.csv", s_tag(scn.fractional_index))),
            )?)?;
        }
        Stage::Extract => {
            if scn.t_end <= 0.0 {
                return Ok(());
            }
            let table = ctx.frequencies()?;
            write_extracted(
                ctx.extracted()?,
                Some(table),
                create(&out.join("extract.csv"))?,
            )?;
        }
        Stage::Highfreq => {
            if scn.highfreq.is_some() {
                ctx.highfreq()?
                    .write_csv(create(&out.join("highfreq.csv"))?)?;
            }
        }
        Stage::Checks => {}
    }
    Ok(())
}

/// Writes `n, omega_hat, omega_nls, relative_difference`.
pub fn write_extracted<W: Write>(
    extracted: &BTreeMap<i64, f64>,
    table: Option<&FrequencyTable>,
    mut out: W,
) -> Result<()> {
    writeln!(out, "n,omega_hat,omega_nls,relative_difference")?;
    for (&n, &w) in extracted {
        let (o, r) = match table.and_then(|t| t.omega(n)) {
            Some(o) => (num(o), num(((w - o) / w).abs())),
            None => (String::new(), String::new()),
        };
        writeln!(out, "{n},{},{o},{r}", num(w))?;
    }
    out.flush()?;
    Ok(())
}

/// Evaluates the scenario's criteria; the others are reported as skipped.
pub fn evaluate_criteria(ctx: &Context<'_>, only: Option<&[u32]>) -> Vec<CriterionReport> {
    CRITERIA
        .map(|id| {
            let selected =
                ctx.scenario.criteria.contains(&id) && only.is_none_or(|o| o.contains(&id));
            if selected {
                evaluate(ctx, id)
            } else {
                CriterionReport::skipped(id)
            }
        })
        .collect()
}

/// Runs every requested stage, writes CSVs and `summary.json` into `out`.
pub fn run_scenario(scn: &Scenario, out: &Path) -> Result<Summary> {
    std::fs::create_dir_all(out)?;
    let ctx = Context::new(scn)?;
    let mut stage_seconds = BTreeMap::new();
    let mut criteria: Vec<CriterionReport> = CRITERIA.map(CriterionReport::skipped).collect();
    for stage in Stage::ALL {
        if !scn.runs(stage) {
            continue;
        }
        let start = Instant::now();
        if stage == Stage::Checks {
            criteria = evaluate_criteria(&ctx, None);
        } else {
            run_stage(stage, &ctx, out).map_err(|e| match e {
                Error::Stage { .. } => e,
                other => other.in_stage(stage.name()),
            })?;
        }
        stage_seconds.insert(stage.name().to_string(), start.elapsed().as_secs_f64());
    }
    let summary = Summary {
        scenario: scn.name.clone(),
        passed: criteria.iter().all(|c| c.status != Status::Fail),
        criteria,
        stage_seconds,
    };
    let mut w = create(&out.join("summary.json"))?;
    serde_json::to_writer_pretty(&mut w, &summary)?;
    writeln!(w)?;
    w.flush()?;
    Ok(summary)
}

/// Loads `path` and runs it; see [`run_scenario`].
pub fn run_scenario_file(path: &Path, out: &Path) -> Result<Summary> {
    run_scenario(&Scenario::load(path)?, out)
}

/// Scenario files shipped with the crate, as `(file name, JSON text)`.
pub const BUNDLED: [(&str, &str); 5] = [
    ("zero.json", include_str!("../scenarios/zero.json")),
    ("constant.json", include_str!("../scenarios/constant.json")),
    (
        "plane_wave.json",
        include_str!("../scenarios/plane_wave.json"),
    ),
    ("two_mode.json", include_str!("../scenarios/two_mode.json")),
    ("highfreq.json", include_str!("../scenarios/highfreq.json")),
];

pub fn bundled_scenarios() -> Result<Vec<Scenario>> {
    BUNDLED
        .iter()
        .map(|(name, text)| Scenario::from_json(text, name))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteLevel {
    /// Spectral criteria and the exact-solution oracles.
    Quick,
    /// Every criterion, including the long simulations.
    Full,
}

impl SuiteLevel {
    pub fn criteria(self) -> &'static [u32] {
        match self {
            SuiteLevel::Quick => &[1, 2, 3, 5, 11],
            SuiteLevel::Full => &[1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11],
        }
    }
}

impl std::str::FromStr for SuiteLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quick" => Ok(SuiteLevel::Quick),
            "full" => Ok(SuiteLevel::Full),
            other => Err(Error::Config(format!(
                "unknown suite level `{other}` (quick | full)"
            ))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuiteReport {
    pub level: SuiteLevel,
    pub summaries: Vec<Summary>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.summaries.iter().all(|s| s.passed)
    }

    pub fn write_json<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut out, self)?;
        writeln!(out)?;
        out.flush()?;
        Ok(())
    }

    /// The evaluated report of each criterion across all scenarios.
    pub fn by_criterion(&self) -> Vec<(String, &CriterionReport)> {
        let mut rows: Vec<(String, &CriterionReport)> = self
            .summaries
            .iter()
            .flat_map(|s| {
                s.criteria
                    .iter()
                    .filter(|c| c.status != Status::Skipped)
                    .map(move |c| (s.scenario.clone(), c))
            })
            .collect();
        rows.sort_by_key(|(_, c)| c.id);
        rows
    }
}

/// Evaluates the bundled scenarios at the given level. Only the criteria
/// are computed; no CSVs are written.
pub fn check_suite(level: SuiteLevel) -> Result<SuiteReport> {
    let mut summaries = Vec::new();
    for scn in bundled_scenarios()? {
        let start = Instant::now();
        let ctx = Context::new(&scn)?;
        let criteria = evaluate_criteria(&ctx, Some(level.criteria()));
        log::info!("{}: {:.1} s", scn.name, start.elapsed().as_secs_f64());
        summaries.push(Summary {
            scenario: scn.name.clone(),
            passed: criteria.iter().all(|c| c.status != Status::Fail),
            criteria,
            stage_seconds: BTreeMap::from([("checks".to_string(), start.elapsed().as_secs_f64())]),
        });
    }
    Ok(SuiteReport { level, summaries })
}
