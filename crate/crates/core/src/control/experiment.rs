use std::io::{Read, Write};

use super::episode::{run_episode, EpisodeLog};
use super::{Mode, TimingParams};
use crate::error::{Error, Result};
use crate::intent::{GateConfig, MlpParams};
use crate::rng;
use crate::scene::SceneConfig;
use crate::simuser::{apply_user_model, episode_demonstrations, ReachOptions, UserKind, UserModel};

/// Grid of virtual users × modes × episodes.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub users: Vec<UserKind>,
    pub modes: Vec<Mode>,
    pub episodes: usize,
    pub seed: u64,
    pub noise_sigma: f64,
    pub bias_sigma: f64,
    pub rate: f64,
    pub reach: ReachOptions,
    pub gate: GateConfig,
    pub timing: TimingParams,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            users: UserKind::ALL.to_vec(),
            modes: Mode::ALL.to_vec(),
            episodes: 12,
            seed: 0,
            noise_sigma: 0.01,
            bias_sigma: 0.02,
            rate: 180.0,
            reach: ReachOptions { duration_range: (3.5, 5.0), ..ReachOptions::default() },
            gate: GateConfig::default(),
            timing: TimingParams::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.users.is_empty() || self.modes.is_empty() || self.episodes == 0 {
            return Err(Error::invalid("experiment needs at least one user, one mode and one episode"));
        }
        if !(self.rate > 0.0) || !(self.noise_sigma >= 0.0) || !(self.bias_sigma >= 0.0) {
            return Err(Error::invalid("experiment rate must be positive and sigmas non-negative"));
        }
        if self.gate.consecutive_required == 0 {
            return Err(Error::invalid("gate consecutive_required must be >= 1"));
        }
        self.reach.validate()?;
        self.timing.validate()
    }
}

/// Mean and sample standard deviation per (user, mode) cell.
/// Episode log tagged with the user model that produced it.
pub type UserLog = (UserKind, EpisodeLog);

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub user: UserKind,
    pub mode: Mode,
    pub episodes: usize,
    pub time_until_execution: (f64, f64),
    pub episode_duration: (f64, f64),
    pub object_accuracy: (f64, f64),
    pub direction_accuracy: (f64, f64),
    pub fallback_commits: usize,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    (mean, std)
}

fn summarize(user: UserKind, mode: Mode, logs: &[EpisodeLog]) -> SummaryRow {
    let col = |f: &dyn Fn(&EpisodeLog) -> f64| mean_std(&logs.iter().map(f).collect::<Vec<_>>());
    SummaryRow {
        user,
        mode,
        episodes: logs.len(),
        time_until_execution: col(&|l| l.total_time_until_execution()),
        episode_duration: col(&|l| l.episode_duration),
        object_accuracy: col(&|l| l.object_accuracy()),
        direction_accuracy: col(&|l| l.direction_accuracy()),
        fallback_commits: logs.iter().flat_map(|l| &l.grasps).filter(|g| g.fallback).count(),
    }
}

/// Runs the grid. Episode `e` uses the same clean demonstrations for every
/// user and mode; each user perturbs them with its own derived seed.
/// Returns the summary rows (user-major, following `spec.users` and
/// `spec.modes`) and every log.
pub fn run_experiment(spec: &ExperimentSpec, scene: &SceneConfig, params: &MlpParams) -> Result<(Vec<SummaryRow>, Vec<UserLog>)> {
    spec.validate()?;
    let clean = (0..spec.episodes)
        .map(|e| episode_demonstrations(scene, spec.rate, &spec.reach, rng::derive_seed(spec.seed, "episode", e as u64)))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut all = Vec::new();
    for &user in &spec.users {
        let demos = clean
            .iter()
            .enumerate()
            .map(|(e, demos)| {
                let model = UserModel {
                    kind: user,
                    noise_sigma: spec.noise_sigma,
                    bias_sigma: spec.bias_sigma,
                    seed: rng::derive_seed(spec.seed, "user", e as u64),
                };
                demos.iter().map(|d| apply_user_model(d, &model)).collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        for &mode in &spec.modes {
            let logs = demos
                .iter()
                .map(|d| run_episode(mode, scene, d, params, &spec.gate, &spec.timing))
                .collect::<Result<Vec<_>>>()?;
            rows.push(summarize(user, mode, &logs));
            all.extend(logs.into_iter().map(|l| (user, l)));
        }
    }
    Ok((rows, all))
}

const SUMMARY_HEADER: [&str; 12] = [
    "user",
    "mode",
    "episodes",
    "time_until_execution_mean",
    "time_until_execution_std",
    "episode_duration_mean",
    "episode_duration_std",
    "object_accuracy_mean",
    "object_accuracy_std",
    "direction_accuracy_mean",
    "direction_accuracy_std",
    "fallback_commits",
];

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| Error::invalid(format!("csv write failed: {e}"));
    w.write_record(SUMMARY_HEADER).map_err(err)?;
    for r in rows {
        let f = |v: f64| format!("{v}");
        w.write_record([
            r.user.as_str().to_string(),
            r.mode.as_str().to_string(),
            r.episodes.to_string(),
            f(r.time_until_execution.0),
            f(r.time_until_execution.1),
            f(r.episode_duration.0),
            f(r.episode_duration.1),
            f(r.object_accuracy.0),
            f(r.object_accuracy.1),
            f(r.direction_accuracy.0),
            f(r.direction_accuracy.1),
            r.fallback_commits.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::invalid(format!("csv flush failed: {e}")))
}

pub fn read_summary_csv<R: Read>(reader: R) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let location = format!("row {}", i + 2);
        let perr = |m: String| Error::Parse { location: location.clone(), message: m };
        let rec = rec.map_err(|e| perr(e.to_string()))?;
        if rec.len() != SUMMARY_HEADER.len() {
            return Err(perr(format!("expected {} columns", SUMMARY_HEADER.len())));
        }
        let num = |k: usize| rec[k].parse::<f64>().map_err(|_| perr(format!("bad number in column {}", SUMMARY_HEADER[k])));
        let int = |k: usize| rec[k].parse::<usize>().map_err(|_| perr(format!("bad integer in column {}", SUMMARY_HEADER[k])));
        out.push(SummaryRow {
            user: UserKind::parse(&rec[0]).ok_or_else(|| perr(format!("unknown user '{}'", &rec[0])))?,
            mode: Mode::parse(&rec[1]).ok_or_else(|| perr(format!("unknown mode '{}'", &rec[1])))?,
            episodes: int(2)?,
            time_until_execution: (num(3)?, num(4)?),
            episode_duration: (num(5)?, num(6)?),
            object_accuracy: (num(7)?, num(8)?),
            direction_accuracy: (num(9)?, num(10)?),
            fallback_commits: int(11)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_values() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn summary_csv_round_trip() {
        let row = SummaryRow {
            user: UserKind::Noisy,
            mode: Mode::Late,
            episodes: 12,
            time_until_execution: (14.5, 0.1 + 0.2),
            episode_duration: (38.6, 1.0 / 3.0),
            object_accuracy: (0.94, 0.05),
            direction_accuracy: (1.0, 0.0),
            fallback_commits: 2,
        };
        let mut buf = Vec::new();
        write_summary_csv(std::slice::from_ref(&row), &mut buf).unwrap();
        assert_eq!(read_summary_csv(buf.as_slice()).unwrap(), vec![row]);
        assert!(read_summary_csv("user,mode\nx,y\n".as_bytes()).is_err());
    }

    #[test]
    fn invalid_spec() {
        assert!(ExperimentSpec { episodes: 0, ..ExperimentSpec::default() }.validate().is_err());
        assert!(ExperimentSpec { users: vec![], ..ExperimentSpec::default() }.validate().is_err());
    }
}
