//! The `covdim` command line: configuration, data ingestion and reports.
//!
//! ```text
//! covdim test     --data DIR|FILE --d0 D [--alpha A] [--center] --out STEM
//! covdim seq      --data DIR|FILE [--d-max D] [--alpha A] [--center] --out STEM
//! covdim simulate --scenario a|b --p P --q Q --reps R --w-grid 0,0.5,1 --out STEM
//! covdim power    --scenario a|b --p P --q Q --w-grid 0,0.5,1 --out STEM
//! covdim kron     --data FILE --ranks 1,3 --splits S --out STEM
//! ```
//!
//! For `test` and `seq`, `--data` is either a directory of `group_<id>.csv`
//! files or a long-format matrix file as used by `kron`, whose columns are
//! then taken as the groups.
//!
//! Every command also accepts `--config FILE`, a UTF-8 JSON object whose keys
//! are the field names of [`RunConfig`]. Flags override file values and
//! unknown keys are rejected. Results go to `STEM.json` and `STEM.csv`.
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
//! error.

mod config;
mod io;
mod report;

use std::ffi::OsString;

pub use config::{parse_config, Command, RunConfig, ScenarioChoice};
pub use io::{groups_from_matrix_observations, load_groups, load_matrix_observations};
pub use report::{emit_report, PowerCurve, PowerPoint, Report};

use crate::dimtest::{default_d_max, dim_test, sequential_dim};
use crate::error::{Error, Result};
use crate::estimators::GroupSample;
use crate::kron::rss_experiment_with;
use crate::simulate::{derive_seed, run_mc, scenario_a, scenario_b, Scenario};

/// Parses `argv`, runs the command and writes the report. Returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    match config::parse_or_help(&argv) {
        Ok(config::Parsed::Help(text)) => {
            print!("{text}");
            0
        }
        Ok(config::Parsed::Run(cfg)) => match execute(&cfg) {
            Ok(stem) => {
                println!("wrote {stem}.json and {stem}.csv");
                0
            }
            Err(e) => {
                eprintln!("covdim: {e}");
                e.exit_code()
            }
        },
        Err(e) => {
            eprintln!("covdim: {e}");
            e.exit_code()
        }
    }
}

/// Runs a resolved configuration and writes `<out>.json` / `<out>.csv`.
/// Returns the output stem.
pub fn execute(cfg: &RunConfig) -> Result<String> {
    let report = compute(cfg)?;
    emit_report(&report, cfg, &cfg.out_path)?;
    Ok(cfg.out_path.clone())
}

/// Runs a resolved configuration without writing anything.
pub fn compute(cfg: &RunConfig) -> Result<Report> {
    match cfg.command {
        Command::Test => {
            let groups = groups_for(cfg)?;
            let d0 = cfg.d0.ok_or_else(|| Error::config("d0", "required for `test`"))?;
            Ok(Report::Test(dim_test(&groups, d0, cfg.alpha)?))
        }
        Command::Seq => {
            let groups = groups_for(cfg)?;
            let d_max = cfg.d_max.unwrap_or_else(|| default_d_max(groups.len()));
            if d_max == 0 {
                return Err(Error::config(
                    "d_max",
                    format!("{} groups leave no dimension to test", groups.len()),
                ));
            }
            Ok(Report::Seq(sequential_dim(&groups, cfg.alpha, d_max)?))
        }
        Command::Simulate => {
            let (p, q, bounds) = scenario_dims(cfg)?;
            let (choice, noise) = (cfg.scenario, cfg.noise);
            let d0 = cfg.d0.unwrap_or(choice.d0_true());
            let factory = move |w: f64, seed: u64| -> Result<Scenario> {
                Ok(build_scenario(choice, p, q, w, seed, bounds)?.with_noise(noise))
            };
            let result = run_mc(factory, &cfg.w_grid, cfg.reps, cfg.alpha, d0, cfg.seed)?;
            Ok(Report::Simulate(result))
        }
        Command::Power => {
            let (p, q, bounds) = scenario_dims(cfg)?;
            let mut points = Vec::with_capacity(cfg.w_grid.len());
            for &w in &cfg.w_grid {
                let (mut gamma, mut power) = (0.0, 0.0);
                for r in 0..cfg.reps {
                    // the same scenario seeds at every w, so only w varies
                    let seed = derive_seed(cfg.seed, 0, r as u64);
                    let s = build_scenario(cfg.scenario, p, q, w, seed, bounds)?;
                    let g = crate::power::gamma_from_gram(s.population_gram(), 1, &s.c_list())?;
                    gamma += g;
                    power += crate::power::power_from_gamma(g, cfg.alpha);
                }
                let reps = cfg.reps as f64;
                points.push(PowerPoint {
                    w,
                    gamma: gamma / reps,
                    power: power / reps,
                });
            }
            Ok(Report::Power(PowerCurve {
                alpha: cfg.alpha,
                scenarios_per_point: cfg.reps,
                points,
            }))
        }
        Command::Kron => {
            let path = cfg
                .data_path
                .as_ref()
                .ok_or_else(|| Error::config("data_path", "required for `kron`"))?;
            let obs = load_matrix_observations(path)?;
            let summary = rss_experiment_with(&obs, &cfg.ranks, cfg.splits, cfg.seed, cfg.center)?;
            Ok(Report::Kron(summary))
        }
    }
}

fn groups_for(cfg: &RunConfig) -> Result<Vec<GroupSample>> {
    let dir = cfg
        .data_path
        .as_ref()
        .ok_or_else(|| Error::config("data_path", "required for this command"))?;
    // A directory holds group_<id>.csv files; a single file holds matrix
    // observations whose columns are the groups.
    let groups = if dir.is_dir() {
        load_groups(dir)?
    } else {
        groups_from_matrix_observations(&load_matrix_observations(dir)?)?
    };
    Ok(if cfg.center {
        groups.iter().map(GroupSample::centered).collect()
    } else {
        groups
    })
}

fn scenario_dims(cfg: &RunConfig) -> Result<(usize, usize, (usize, usize))> {
    let p = cfg.p.ok_or_else(|| Error::config("p", "required for this command"))?;
    let q = cfg.q.ok_or_else(|| Error::config("q", "required for this command"))?;
    Ok((p, q, cfg.n_bounds))
}

fn build_scenario(
    choice: ScenarioChoice,
    p: usize,
    q: usize,
    w: f64,
    seed: u64,
    bounds: (usize, usize),
) -> Result<Scenario> {
    match choice {
        ScenarioChoice::A => scenario_a(p, q, w, seed, bounds),
        ScenarioChoice::B => scenario_b(p, q, w, seed, bounds),
    }
}
