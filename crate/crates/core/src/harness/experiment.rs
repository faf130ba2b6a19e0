//! Fan-out of (method, schedule, γ, instance, seed) runs, grid search and
//! aggregation.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Method, ProblemSpec};
use crate::error::{Error, Result};
use crate::metrics::{dist_sq_to_saddle_set_2pl, lyapunov_v, lyapunov_v_2pl};
use crate::operator::{AffineFiniteSum, FiniteSum, PartitionedPoint, Point};
use crate::optimizers::{run_agda, run_gda, run_ppm, RunConfig, Trajectory};
use crate::problems::{
    bilinear_lower_bound_instance, generate_quadratic_game, unbounded_2pl_instance, QuadraticGame,
    Unbounded2pl,
};
use crate::rng::{derive_seed, SeedStream};
use crate::shuffling::ScheduleKind;

/// Environment variable holding the worker count (unset or 0: one per core).
pub const WORKERS_ENV: &str = "WOR_MINIMAX_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Run,
    Multi,
}

enum Problem {
    Game(Box<QuadraticGame>),
    Affine(AffineFiniteSum),
    Unbounded(Unbounded2pl),
}

/// One problem instance together with its initial point.
pub struct Instance {
    pub index: usize,
    pub seed: u64,
    pub init: Point,
    problem: Problem,
    init_sq_dist: f64,
}

impl Instance {
    /// Instance `index` of `spec`. Instance seeds are
    /// `derive_seed(master, index)`, where the master is the generator seed
    /// (or the stored seed of a game file, or 0).
    pub fn build(spec: &ProblemSpec, index: usize, init_scale: f64) -> Result<Self> {
        let (problem, seed) = match spec {
            ProblemSpec::Quadratic(g) => {
                let seed = derive_seed(g.seed, index as u64);
                let mut g = g.clone();
                g.seed = seed;
                (Problem::Game(Box::new(generate_quadratic_game(&g)?)), seed)
            }
            ProblemSpec::GameFile(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    Error::Config(format!("cannot read game file {}: {e}", path.display()))
                })?;
                let game = QuadraticGame::from_json(&text)?;
                let seed = derive_seed(game.seed().unwrap_or(0), index as u64);
                (Problem::Game(Box::new(game)), seed)
            }
            ProblemSpec::Bilinear { mu, ell } => (
                Problem::Affine(bilinear_lower_bound_instance(*mu, *ell)?),
                derive_seed(0, index as u64),
            ),
            ProblemSpec::Unbounded2pl => (
                Problem::Unbounded(unbounded_2pl_instance()),
                derive_seed(0, index as u64),
            ),
        };
        let op: &dyn FiniteSum = match &problem {
            Problem::Game(g) => g.operator(),
            Problem::Affine(a) => a,
            Problem::Unbounded(u) => &u.operator,
        };
        let reference = op
            .constants()
            .known_root
            .clone()
            .unwrap_or_else(|| Point::zeros(op.dim()));
        let mut rng = SeedStream::new(derive_seed(seed, 1));
        let init = Point::new(
            reference
                .as_slice()
                .iter()
                .map(|r| r + init_scale * rng.normal())
                .collect(),
        )?;
        let mut inst = Instance {
            index,
            seed,
            init,
            problem,
            init_sq_dist: 0.0,
        };
        inst.init_sq_dist = inst.sq_dist(&inst.init.clone())?;
        if inst.init_sq_dist <= 0.0 {
            return Err(Error::Numerical(
                "initial point lies on the solution set".into(),
            ));
        }
        Ok(inst)
    }

    pub fn operator(&self) -> &dyn FiniteSum {
        match &self.problem {
            Problem::Game(g) => g.operator(),
            Problem::Affine(a) => a,
            Problem::Unbounded(u) => &u.operator,
        }
    }

    pub fn game(&self) -> Option<&QuadraticGame> {
        match &self.problem {
            Problem::Game(g) => Some(g),
            _ => None,
        }
    }

    /// Squared distance to the solution set.
    fn sq_dist(&self, z: &Point) -> Result<f64> {
        match &self.problem {
            Problem::Unbounded(_) => dist_sq_to_saddle_set_2pl(&PartitionedPoint::split(z, 2)?),
            _ => Ok(z.dist_sq(self.operator().constants().require_root()?)),
        }
    }

    pub fn rel_sq_dist(&self, z: &Point) -> Result<f64> {
        Ok(self.sq_dist(z)? / self.init_sq_dist)
    }

    /// `V_λ` where the problem defines a best response.
    pub fn v_lambda(&self, z: &Point, lambda: f64) -> Result<Option<f64>> {
        match &self.problem {
            Problem::Game(g) => Ok(Some(lyapunov_v(
                g,
                &PartitionedPoint::split(z, g.dims().0)?,
                lambda,
            )?)),
            Problem::Unbounded(u) => Ok(Some(lyapunov_v_2pl(
                u,
                &PartitionedPoint::split(z, 2)?,
                lambda,
            )?)),
            Problem::Affine(_) => Ok(None),
        }
    }
}

/// One recorded epoch of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub instance: usize,
    pub method: Method,
    pub schedule: ScheduleKind,
    pub gamma: f64,
    pub seed: u64,
    pub epoch: usize,
    /// `None` on the single row written for a diverged run.
    pub rel_sq_dist: Option<f64>,
    pub v_lambda: Option<f64>,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Timing {
    pub instance: usize,
    pub method: Method,
    pub schedule: ScheduleKind,
    pub gamma: f64,
    pub seed: u64,
    pub wall_millis: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub schedule: ScheduleKind,
    pub gamma: f64,
    pub epoch: usize,
    pub runs: usize,
    pub mean: f64,
    pub std: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub v_lambda_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotScore {
    pub gamma: f64,
    /// Mean final relative squared distance; `None` when disqualified.
    pub score: Option<f64>,
    pub diverged: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rejected: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub method: Method,
    pub schedule: ScheduleKind,
    pub gamma: Option<f64>,
    pub step_size: Option<f64>,
    pub runs: usize,
    pub diverged: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub omitted: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub pilot: Vec<PilotScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceInfo {
    pub index: usize,
    pub seed: u64,
    pub dim: usize,
    pub n: usize,
}

pub const MANIFEST_FORMAT: &str = "wor-minimax-manifest";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub mode: Mode,
    pub config: ExperimentConfig,
    /// Seeds actually run on every instance.
    pub seeds: Vec<u64>,
    pub pilot_seeds: Vec<u64>,
    pub instances: Vec<InstanceInfo>,
    pub cells: Vec<CellReport>,
    pub files: Vec<String>,
}

pub struct ExperimentOutput {
    pub manifest: Manifest,
    pub rows: Vec<RunRow>,
    pub summary: Vec<SummaryRow>,
    pub timings: Vec<Timing>,
}

enum Outcome {
    Completed(Vec<(usize, f64, Option<f64>)>),
    Diverged(usize),
    Rejected(String),
}

fn worker_pool() -> Result<rayon::ThreadPool> {
    let workers = match std::env::var(WORKERS_ENV) {
        Ok(v) => v.trim().parse::<usize>().map_err(|_| {
            Error::Config(format!(
                "{WORKERS_ENV} must be a non-negative integer, got {v:?}"
            ))
        })?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

fn solve(method: Method, op: &dyn FiniteSum, rc: &RunConfig) -> Result<Trajectory> {
    match method {
        Method::Gda => run_gda(op, rc),
        Method::Ppm => run_ppm(op, rc),
        Method::Agda => run_agda(op, rc, None),
    }
}

/// One run. `full` keeps every `record_every`-th epoch with metrics;
/// otherwise only the final relative distance is computed.
fn execute(
    inst: &Instance,
    cfg: &ExperimentConfig,
    method: Method,
    schedule: ScheduleKind,
    gamma: f64,
    seed: u64,
    full: bool,
) -> Result<(Outcome, f64)> {
    let started = Instant::now();
    let op = inst.operator();
    let mut rc = RunConfig::new(
        inst.init.clone(),
        cfg.epochs,
        gamma / op.n() as f64,
        schedule,
        derive_seed(seed, inst.seed),
    );
    rc.second_step_factor = cfg.agda_eta;
    rc.keep_points = full;
    rc.record_every = if full { cfg.record_every } else { cfg.epochs };
    let outcome = match solve(method, op, &rc) {
        Ok(traj) if full => {
            let mut rows = Vec::with_capacity(traj.records.len());
            let mut diverged = None;
            for r in &traj.records {
                let z = r.point.as_ref().expect("points kept");
                let rel = inst.rel_sq_dist(z)?;
                if !rel.is_finite() {
                    diverged = Some(r.epoch);
                    break;
                }
                rows.push((r.epoch, rel, inst.v_lambda(z, cfg.lambda)?));
            }
            match diverged {
                Some(k) => Outcome::Diverged(k),
                None => Outcome::Completed(rows),
            }
        }
        Ok(traj) => {
            let rel = inst.rel_sq_dist(&traj.final_point)?;
            if rel.is_finite() {
                Outcome::Completed(vec![(cfg.epochs, rel, None)])
            } else {
                Outcome::Diverged(cfg.epochs)
            }
        }
        Err(Error::Divergence { epoch }) => Outcome::Diverged(epoch),
        Err(Error::Config(m)) | Err(Error::Numerical(m)) => Outcome::Rejected(m),
        Err(e) => return Err(e),
    };
    Ok((outcome, started.elapsed().as_secs_f64() * 1e3))
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let r = values.len() as f64;
    let mean = values.iter().sum::<f64>() / r;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (mean, (ss / (r - 1.0)).sqrt())
}

/// Mean, sample standard deviation and the normal-approximation 95% interval
/// `mean ± 1.96·std/√R`.
pub fn confidence_interval(values: &[f64]) -> Option<(f64, f64, f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let (mean, std) = mean_std(values);
    let half = 1.96 * std / (values.len() as f64).sqrt();
    Some((mean, std, mean - half, mean + half))
}

/// Picks the γ with the smallest pilot score; ties go to the smaller γ.
fn pick_gamma(scores: &[PilotScore]) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for s in scores {
        if let Some(v) = s.score {
            let better = match best {
                None => true,
                Some((g, b)) => v < b || (v == b && s.gamma < g),
            };
            if better {
                best = Some((s.gamma, v));
            }
        }
    }
    best.map(|(g, _)| g)
}

/// Single-instance protocol: every seed on instance 0.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let mut single = cfg.clone();
    single.instance_count = 1;
    single.seeds_per_instance = None;
    experiment(&single, Mode::Run)
}

/// Multi-instance protocol: `instance_count` games from derived seeds with
/// `seeds_per_instance` runs each.
pub fn multi_instance_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    experiment(cfg, Mode::Multi)
}

/// Runs the experiment described by `cfg` in the given mode.
pub fn experiment(cfg: &ExperimentConfig, mode: Mode) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let all_seeds = cfg.seeds.expand();
    let seeds: Vec<u64> = match (mode, cfg.seeds_per_instance) {
        (Mode::Multi, Some(s)) => all_seeds[..s].to_vec(),
        _ => all_seeds,
    };
    let instance_count = match mode {
        Mode::Run => 1,
        Mode::Multi => cfg.instance_count,
    };
    let pool = worker_pool()?;
    pool.install(|| run_protocol(cfg, mode, seeds, instance_count))
}

fn run_protocol(
    cfg: &ExperimentConfig,
    mode: Mode,
    seeds: Vec<u64>,
    instance_count: usize,
) -> Result<ExperimentOutput> {
    let instances: Vec<Instance> = (0..instance_count)
        .into_par_iter()
        .map(|j| Instance::build(&cfg.problem, j, cfg.init_scale))
        .collect::<Result<_>>()?;
    let cells: Vec<(Method, ScheduleKind)> = cfg
        .methods
        .iter()
        .flat_map(|&m| cfg.schedules.iter().map(move |&s| (m, s)))
        .collect();
    let pilot_seeds: Vec<u64> = seeds.iter().copied().take(cfg.pilot_seeds).collect();

    // Grid search on instance 0 when there is more than one candidate.
    let mut reports: Vec<CellReport> = cells
        .iter()
        .map(|&(method, schedule)| CellReport {
            method,
            schedule,
            gamma: None,
            step_size: None,
            runs: 0,
            diverged: 0,
            omitted: None,
            pilot: Vec::new(),
        })
        .collect();
    if cfg.gamma_grid.len() == 1 {
        for r in &mut reports {
            r.gamma = Some(cfg.gamma_grid[0]);
        }
    } else {
        let tasks: Vec<(usize, usize, u64)> = (0..cells.len())
            .flat_map(|c| {
                let pilot = &pilot_seeds;
                (0..cfg.gamma_grid.len()).flat_map(move |g| pilot.iter().map(move |&s| (c, g, s)))
            })
            .collect();
        let outcomes: Vec<Outcome> = tasks
            .par_iter()
            .map(|&(c, g, s)| {
                let (m, sch) = cells[c];
                execute(&instances[0], cfg, m, sch, cfg.gamma_grid[g], s, false).map(|(o, _)| o)
            })
            .collect::<Result<_>>()?;
        let per_cell = cfg.gamma_grid.len() * pilot_seeds.len();
        for (c, report) in reports.iter_mut().enumerate() {
            for (g, &gamma) in cfg.gamma_grid.iter().enumerate() {
                let start = c * per_cell + g * pilot_seeds.len();
                let chunk = &outcomes[start..start + pilot_seeds.len()];
                let mut finals = Vec::new();
                let mut diverged = 0;
                let mut rejected = None;
                for o in chunk {
                    match o {
                        Outcome::Completed(rows) => finals.push(rows.last().expect("final row").1),
                        Outcome::Diverged(_) => diverged += 1,
                        Outcome::Rejected(m) => rejected = Some(m.clone()),
                    }
                }
                let score = (diverged == 0 && rejected.is_none())
                    .then(|| finals.iter().sum::<f64>() / finals.len() as f64);
                report.pilot.push(PilotScore {
                    gamma,
                    score,
                    diverged,
                    rejected,
                });
            }
            report.gamma = pick_gamma(&report.pilot);
            if report.gamma.is_none() {
                report.omitted =
                    Some("every candidate step size diverged or was rejected in the pilot".into());
            }
        }
    }

    // Final runs at the chosen γ, canonical order: cell, instance, seed.
    let tasks: Vec<(usize, usize, u64)> = reports
        .iter()
        .enumerate()
        .filter(|(_, r)| r.gamma.is_some())
        .flat_map(|(c, _)| {
            let seeds = &seeds;
            (0..instances.len()).flat_map(move |j| seeds.iter().map(move |&s| (c, j, s)))
        })
        .collect();
    let outcomes: Vec<(Outcome, f64)> = tasks
        .par_iter()
        .map(|&(c, j, s)| {
            let r = &reports[c];
            execute(
                &instances[j],
                cfg,
                r.method,
                r.schedule,
                r.gamma.expect("filtered"),
                s,
                true,
            )
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut timings = Vec::new();
    let mut summary = Vec::new();
    let mut t = 0;
    for (c, report) in reports.iter_mut().enumerate() {
        let Some(gamma) = report.gamma else { continue };
        report.step_size = Some(gamma / instances[0].operator().n() as f64);
        let mut completed: Vec<&[(usize, f64, Option<f64>)]> = Vec::new();
        let mut rejected = None;
        while t < tasks.len() && tasks[t].0 == c {
            let (_, j, seed) = tasks[t];
            let (outcome, millis) = &outcomes[t];
            timings.push(Timing {
                instance: j,
                method: report.method,
                schedule: report.schedule,
                gamma,
                seed,
                wall_millis: *millis,
            });
            let base = RunRow {
                instance: j,
                method: report.method,
                schedule: report.schedule,
                gamma,
                seed,
                epoch: 0,
                rel_sq_dist: None,
                v_lambda: None,
                diverged: false,
            };
            match outcome {
                Outcome::Completed(recs) => {
                    report.runs += 1;
                    completed.push(recs);
                    rows.extend(recs.iter().map(|&(epoch, rel, v)| RunRow {
                        epoch,
                        rel_sq_dist: Some(rel),
                        v_lambda: v,
                        ..base.clone()
                    }));
                }
                Outcome::Diverged(epoch) => {
                    report.diverged += 1;
                    rows.push(RunRow {
                        epoch: *epoch,
                        diverged: true,
                        ..base
                    });
                }
                Outcome::Rejected(m) => rejected = Some(m.clone()),
            }
            t += 1;
        }
        if let Some(m) = rejected {
            report.omitted = Some(format!("step size rejected: {m}"));
            continue;
        }
        if completed.is_empty() {
            report.omitted = Some("every run diverged".into());
            continue;
        }
        for (e, &(epoch, _, _)) in completed[0].iter().enumerate() {
            let vals: Vec<f64> = completed.iter().map(|r| r[e].1).collect();
            let (mean, std, ci_low, ci_high) = confidence_interval(&vals).expect("non-empty");
            let vs: Option<Vec<f64>> = completed.iter().map(|r| r[e].2).collect();
            summary.push(SummaryRow {
                method: report.method,
                schedule: report.schedule,
                gamma,
                epoch,
                runs: vals.len(),
                mean,
                std,
                ci_low,
                ci_high,
                v_lambda_mean: vs.map(|v| v.iter().sum::<f64>() / v.len() as f64),
            });
        }
    }

    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        version: 1,
        mode,
        config: cfg.clone(),
        seeds,
        pilot_seeds: if cfg.gamma_grid.len() > 1 {
            pilot_seeds
        } else {
            Vec::new()
        },
        instances: instances
            .iter()
            .map(|i| InstanceInfo {
                index: i.index,
                seed: i.seed,
                dim: i.operator().dim(),
                n: i.operator().n(),
            })
            .collect(),
        cells: reports,
        files: super::output::FILES.iter().map(|s| s.to_string()).collect(),
    };
    Ok(ExperimentOutput {
        manifest,
        rows,
        summary,
        timings,
    })
}
