use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context as _, Result};
use clap::{Parser, Subcommand, ValueEnum};

use nlslab::compare::{
    boundedness_verdict, difference_series, extract_frequencies, highfreq_experiment,
    HighfreqConfig, Reference,
};
use nlslab::flow::{conserved_report, evolve};
use nlslab::frequencies::compute_frequencies;
use nlslab::harness::{check_suite, run_scenario, write_extracted, SuiteLevel};
use nlslab::normalization::solve_sigma_with;
use nlslab::output::create;
use nlslab::scenario::{ModeSpec, Profile, Scenario};
use nlslab::spectral::periodic_spectrum_with;
use nlslab::Potential;

/// Spectral and dynamical experiments for the periodic defocusing NLS equation.
#[derive(Parser, Debug)]
#[command(name = "nlslab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum RefKind {
    V,
    W,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Level {
    Quick,
    Full,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evolve the initial data and write the trajectory (t, n, re, im).
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Final time; overrides `t_end`.
        #[arg(long = "T")]
        t: Option<f64>,
    },
    /// Periodic spectrum for |n| ≤ K.
    Spectrum {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "K")]
        k: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Zeros σ_k^n of ψ_n for one n.
    Sigma {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        n: i64,
        #[arg(long = "K")]
        k: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// NLS frequencies and their residuals for |n| ≤ K.
    Frequencies {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "K")]
        k: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// ‖u(t) - v(t)‖ or ‖u(t) - w(t)‖ in H^s along the trajectory.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "ref", value_enum)]
        reference: RefKind,
        #[arg(long)]
        s: f64,
        #[arg(long = "T")]
        t: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Frequencies measured from the phase rotation of each mode.
    Extract {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "T")]
        t: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Shift the profile to base modes L and compare u, v, w on [-T, T].
    Highfreq {
        /// Scenario supplying the profile and settings; the two-mode profile otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "L", value_delimiter = ',', required = true)]
        levels: Vec<usize>,
        #[arg(long)]
        eps: f64,
        #[arg(long = "T")]
        t: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a scenario end to end, or the bundled suite with --level.
    Checks {
        #[arg(long, conflicts_with = "level")]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        level: Option<Level>,
        /// Output directory (scenario) or JSON report file (suite).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(path: &Path, k: Option<usize>, t: Option<f64>) -> Result<Scenario> {
    let mut scn = Scenario::load(path)?;
    if let Some(k) = k {
        scn.k = k;
        scn.frequency_range = scn.frequency_range.map(|r| r.min(k));
    }
    if let Some(t) = t {
        scn.t_end = t;
    }
    scn.validate()?;
    Ok(scn)
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("NLSLAB_THREADS") {
        let n: usize = v
            .parse()
            .with_context(|| format!("NLSLAB_THREADS must be a positive integer, got `{v}`"))?;
        if n == 0 {
            bail!("NLSLAB_THREADS must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    Ok(())
}

fn require_time(scn: &Scenario) -> Result<()> {
    if scn.t_end <= 0.0 {
        bail!("scenario `{}` has t_end = 0; pass --T", scn.name);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Simulate { config, out, t } => {
            let scn = load(&config, None, t)?;
            require_time(&scn)?;
            let traj = evolve(&scn.initial_state()?, scn.t_end, scn.dt, scn.stride)?;
            let rep = conserved_report(&traj);
            log::info!(
                "L2 drift {:.3e}, Hamiltonian drift {:.3e}, momentum drift {:.3e}",
                rep.l2_drift,
                rep.hamiltonian_drift,
                rep.momentum_drift
            );
            traj.write_csv(create(&out)?)?;
        }
        Command::Spectrum { config, k, out } => {
            let scn = load(&config, k, None)?;
            let phi = Potential::from_state(&scn.initial_state()?);
            periodic_spectrum_with(&phi, scn.k, &scn.spectrum)?.write_csv(create(&out)?)?;
        }
        Command::Sigma { config, n, k, out } => {
            let scn = load(&config, k, None)?;
            let phi = Potential::from_state(&scn.initial_state()?);
            let gaps = periodic_spectrum_with(&phi, scn.k, &scn.spectrum)?;
            let sig = solve_sigma_with(&gaps, n, &scn.normalization)?;
            sig.write_csv(&gaps, create(&out)?)?;
        }
        Command::Frequencies { config, k, out } => {
            let scn = load(&config, k, None)?;
            let phi = Potential::from_state(&scn.initial_state()?);
            let gaps = periodic_spectrum_with(&phi, scn.k, &scn.spectrum)?;
            let (_, table) =
                compute_frequencies(&gaps, &scn.frequency_indices(), &phi, &scn.normalization)?;
            log::info!("tail bound on every frequency: {:.3e}", table.tail_bound);
            table.write_csv(create(&out)?)?;
        }
        Command::Compare {
            config,
            reference,
            s,
            t,
            out,
        } => {
            let scn = load(&config, None, t)?;
            require_time(&scn)?;
            let u0 = scn.initial_state()?;
            let traj = evolve(&u0, scn.t_end, scn.dt, scn.stride)?;
            let table;
            let r = match reference {
                RefKind::V => {
                    let phi = Potential::from_state(&u0);
                    let gaps = periodic_spectrum_with(&phi, scn.k, &scn.spectrum)?;
                    table = compute_frequencies(
                        &gaps,
                        &scn.frequency_indices(),
                        &phi,
                        &scn.normalization,
                    )?
                    .1;
                    Reference::NearlyLinear(&table)
                }
                RefKind::W => Reference::ModifiedFree,
            };
            let series = difference_series(&traj, r, s)?;
            let v = boundedness_verdict(&series, scn.tolerances.bounded_fraction);
            log::info!(
                "sup {:.6e}, slope {:.3e}, bounded: {}",
                v.sup,
                v.slope,
                v.bounded
            );
            series.write_csv(create(&out)?)?;
        }
        Command::Extract { config, t, out } => {
            let scn = load(&config, None, t)?;
            require_time(&scn)?;
            let traj = evolve(&scn.initial_state()?, scn.t_end, scn.dt, scn.stride)?;
            let ex = extract_frequencies(&traj, scn.tolerances.amplitude_floor)?;
            write_extracted(&ex, None, create(&out)?)?;
        }
        Command::Highfreq {
            config,
            levels,
            eps,
            t,
            out,
        } => {
            let (u0, mut cfg) = match config {
                Some(path) => {
                    let scn = load(&path, None, None)?;
                    (
                        scn.initial_state()?,
                        scn.highfreq.clone().unwrap_or_default(),
                    )
                }
                None => {
                    let profile = Profile::ModeList {
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
                    };
                    (
                        profile.build(nlslab::SpectralGrid::new(256)?)?,
                        HighfreqConfig::default(),
                    )
                }
            };
            cfg.levels = levels;
            cfg.epsilon = eps;
            cfg.horizon = t;
            let report = highfreq_experiment(&u0, &cfg)?;
            log::info!(
                "smallest L with ‖u-v‖ ≤ ε: {:?}; with ‖u-w‖ ≤ ε on [-T, T]: {:?}",
                report.smallest_level_v,
                report.smallest_level_w
            );
            report.write_csv(create(&out)?)?;
        }
        Command::Checks { config, level, out } => {
            if let Some(path) = config {
                let scn = load(&path, None, None)?;
                let dir = out.unwrap_or_else(|| PathBuf::from("out").join(&scn.name));
                let summary = run_scenario(&scn, &dir)?;
                for c in &summary.criteria {
                    println!("{}", c.line());
                }
                return Ok(summary.exit_code() as u8);
            }
            let level = match level {
                Some(Level::Full) => SuiteLevel::Full,
                Some(Level::Quick) | None => SuiteLevel::Quick,
            };
            let report = check_suite(level)?;
            for (scenario, c) in report.by_criterion() {
                println!("{} [{scenario}]", c.line());
            }
            if let Some(path) = out {
                report.write_json(create(&path)?)?;
            }
            return Ok(if report.passed() { 0 } else { 1 });
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| run(cli));
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
