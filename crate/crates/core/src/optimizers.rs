//! Epoch-structured solvers: simultaneous GDA, the implicit proximal point
//! method (PPM) and two-timescale alternating GDA (AGDA), each driven by a
//! [`Schedule`], plus the step-size rules that come with their guarantees.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{Lu, Matrix};
use crate::operator::{dist_sq, norm_sq, FiniteSum, Point};
use crate::rng::derive_seed;
use crate::shuffling::{AdversaryContext, Schedule, ScheduleKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PpmMode {
    /// `(I + αA)⁻¹(z_prev − αb)` for components registered as affine.
    ClosedFormAffine,
    /// Picard iteration on `ζ(z) = z_prev − α ω(z)`.
    FixedPoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointOptions {
    /// Absolute residual tolerance; `None` means `1e-12 · max(1, ‖z_prev‖)`.
    pub tol: Option<f64>,
    pub max_iter: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            tol: None,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub epochs: usize,
    pub step_size: f64,
    /// AGDA only: `β = η α`.
    pub second_step_factor: f64,
    pub init: Point,
    pub schedule: ScheduleKind,
    /// Schedule seed; AGDA derives separate streams for its two passes.
    pub seed: u64,
    pub record_every: usize,
    /// Keep full points in every record (the final point is always kept).
    pub keep_points: bool,
    /// PPM solve mode; `None` picks closed form whenever every component is affine.
    pub ppm_mode: Option<PpmMode>,
    pub fixed_point: FixedPointOptions,
}

impl RunConfig {
    pub fn new(
        init: Point,
        epochs: usize,
        step_size: f64,
        schedule: ScheduleKind,
        seed: u64,
    ) -> Self {
        Self {
            epochs,
            step_size,
            second_step_factor: 1.0,
            init,
            schedule,
            seed,
            record_every: 1,
            keep_points: true,
            ppm_mode: None,
            fixed_point: FixedPointOptions::default(),
        }
    }

    fn validate(&self, op: &dyn FiniteSum) -> Result<()> {
        check_dim(op.dim(), self.init.dim())?;
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be positive".into()));
        }
        if !(self.step_size >= 0.0 && self.step_size.is_finite()) {
            return Err(Error::Config(format!(
                "step size {} is not a nonnegative number",
                self.step_size
            )));
        }
        if !(self.second_step_factor > 0.0 && self.second_step_factor.is_finite()) {
            return Err(Error::Config("second step factor must be positive".into()));
        }
        if matches!(self.schedule, ScheduleKind::Adversarial(_))
            && op.constants().known_root.is_none()
        {
            return Err(Error::Config(
                "adversarial schedules need an operator with a known root".into(),
            ));
        }
        Ok(())
    }
}

/// State after epoch `epoch`, i.e. the epoch iterate `z^{epoch+1}_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub point: Option<Point>,
    /// `‖z − z*‖²` when the operator has a known root.
    pub dist_sq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub records: Vec<EpochRecord>,
    pub final_point: Point,
    pub grad_evals: usize,
}

/// Which half-pass of an AGDA epoch a step belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pass {
    X,
    Y,
}

/// One inner AGDA step, reported after the update.
#[derive(Debug, Clone, Copy)]
pub struct StepEvent<'a> {
    pub epoch: usize,
    pub pass: Pass,
    pub index: usize,
    pub x: &'a [f64],
    pub y: &'a [f64],
}

struct Recorder<'a> {
    keep_points: bool,
    every: usize,
    epochs: usize,
    root: Option<&'a Point>,
    records: Vec<EpochRecord>,
}

impl<'a> Recorder<'a> {
    fn new(cfg: &RunConfig, op: &'a dyn FiniteSum) -> Self {
        Self {
            keep_points: cfg.keep_points,
            every: cfg.record_every,
            epochs: cfg.epochs,
            root: op.constants().known_root.as_ref(),
            records: Vec::new(),
        }
    }

    fn epoch_done(&mut self, epoch: usize, z: &[f64]) -> Result<()> {
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { epoch });
        }
        if epoch % self.every == 0 || epoch == self.epochs {
            self.records.push(EpochRecord {
                epoch,
                point: self
                    .keep_points
                    .then(|| Point::new(z.to_vec()))
                    .transpose()?,
                dist_sq: self.root.map(|r| dist_sq(z, r.as_slice())),
            });
        }
        Ok(())
    }

    fn finish(self, z: Vec<f64>, grad_evals: usize) -> Result<Trajectory> {
        Ok(Trajectory {
            records: self.records,
            final_point: Point::new(z)?,
            grad_evals,
        })
    }
}

fn adversary_ctx<'a>(
    op: &'a dyn FiniteSum,
    epoch: usize,
    z: &'a [f64],
    step: f64,
) -> Option<AdversaryContext<'a>> {
    op.constants()
        .known_root
        .as_ref()
        .map(|root| AdversaryContext {
            epoch,
            start: z,
            op,
            root: root.as_slice(),
            step_size: step,
        })
}

/// Simultaneous GDA: `z ← z − α ω_{τ_k(i)}(z)` for each slot of each epoch.
pub fn run_gda(op: &dyn FiniteSum, cfg: &RunConfig) -> Result<Trajectory> {
    cfg.validate(op)?;
    let n = op.n();
    let alpha = cfg.step_size;
    let mut schedule = Schedule::new(cfg.schedule, derive_seed(cfg.seed, 0));
    let mut rec = Recorder::new(cfg, op);
    let mut z = cfg.init.as_slice().to_vec();
    let mut g = vec![0.0; z.len()];
    for k in 1..=cfg.epochs {
        let order = schedule.epoch_order(k, n, adversary_ctx(op, k, &z, alpha).as_ref())?;
        for &i in &order {
            op.component_into(i, &z, &mut g);
            for (zj, gj) in z.iter_mut().zip(&g) {
                *zj -= alpha * gj;
            }
        }
        rec.epoch_done(k, &z)?;
    }
    rec.finish(z, n * cfg.epochs)
}

fn default_tol(z_prev: &[f64]) -> f64 {
    1e-12 * norm_sq(z_prev).sqrt().max(1.0)
}

fn fixed_point_solve(
    op: &dyn FiniteSum,
    i: usize,
    z_prev: &[f64],
    alpha: f64,
    opts: FixedPointOptions,
    out: &mut [f64],
) -> Result<()> {
    let tol = opts.tol.unwrap_or_else(|| default_tol(z_prev));
    let mut g = vec![0.0; z_prev.len()];
    out.copy_from_slice(z_prev);
    let mut residual = f64::INFINITY;
    for _ in 0..opts.max_iter {
        op.component_into(i, out, &mut g);
        // ζ(z) = z_prev − α ω(z); residual = ‖z − ζ(z)‖
        let mut r2 = 0.0;
        for ((o, zp), gj) in out.iter().zip(z_prev).zip(&g) {
            let d = o - (zp - alpha * gj);
            r2 += d * d;
        }
        residual = r2.sqrt();
        if residual <= tol {
            return Ok(());
        }
        for ((o, zp), gj) in out.iter_mut().zip(z_prev).zip(&g) {
            *o = zp - alpha * gj;
        }
        if !residual.is_finite() {
            break;
        }
    }
    Err(Error::Numerical(format!(
        "implicit step did not converge in {} iterations (residual {residual:e}, tol {tol:e})",
        opts.max_iter
    )))
}

fn shifted_identity(m: &Matrix, alpha: f64) -> Matrix {
    let mut a = m.scale(alpha);
    for j in 0..a.rows() {
        a[(j, j)] += 1.0;
    }
    a
}

/// Solves `z = z_prev − α ω_i(z)` for component `i` of `op`.
pub fn ppm_implicit_step(
    op: &dyn FiniteSum,
    i: usize,
    z_prev: &Point,
    alpha: f64,
    mode: PpmMode,
    opts: FixedPointOptions,
) -> Result<Point> {
    check_dim(op.dim(), z_prev.dim())?;
    if i >= op.n() {
        return Err(Error::InvalidInput(format!("component {i} out of range")));
    }
    let zp = z_prev.as_slice();
    let mut out = vec![0.0; zp.len()];
    match mode {
        PpmMode::ClosedFormAffine => {
            let comp = op.affine_component(i).ok_or_else(|| {
                Error::Config(format!("component {i} is not registered as affine"))
            })?;
            let lu = Lu::new(&shifted_identity(comp.matrix, alpha))?;
            let rhs: Vec<f64> = zp
                .iter()
                .zip(comp.offset)
                .map(|(z, b)| z - alpha * b)
                .collect();
            lu.solve_into(&rhs, &mut out);
        }
        PpmMode::FixedPoint => {
            if let Some(l) = op.constants().lipschitz {
                if alpha * l >= 1.0 {
                    return Err(Error::Config(format!(
                        "fixed-point PPM needs α·l < 1 (α = {alpha}, l = {l})"
                    )));
                }
            }
            fixed_point_solve(op, i, zp, alpha, opts, &mut out)?;
        }
    }
    Point::new(out)
}

enum ImplicitSolver {
    Factored(Vec<(Lu, Vec<f64>)>),
    FixedPoint(FixedPointOptions),
}

impl ImplicitSolver {
    fn new(op: &dyn FiniteSum, alpha: f64, mode: PpmMode, opts: FixedPointOptions) -> Result<Self> {
        match mode {
            PpmMode::ClosedFormAffine => {
                let mut factors = Vec::with_capacity(op.n());
                for i in 0..op.n() {
                    let comp = op.affine_component(i).ok_or_else(|| {
                        Error::Config(format!("component {i} is not registered as affine"))
                    })?;
                    let lu = Lu::new(&shifted_identity(comp.matrix, alpha))?;
                    let shift = comp.offset.iter().map(|b| alpha * b).collect();
                    factors.push((lu, shift));
                }
                Ok(Self::Factored(factors))
            }
            PpmMode::FixedPoint => Ok(Self::FixedPoint(opts)),
        }
    }

    fn step(
        &self,
        op: &dyn FiniteSum,
        i: usize,
        alpha: f64,
        z_prev: &[f64],
        rhs: &mut [f64],
        out: &mut [f64],
    ) -> Result<()> {
        match self {
            Self::Factored(factors) => {
                let (lu, shift) = &factors[i];
                for ((r, z), s) in rhs.iter_mut().zip(z_prev).zip(shift) {
                    *r = z - s;
                }
                lu.solve_into(rhs, out);
                Ok(())
            }
            Self::FixedPoint(opts) => fixed_point_solve(op, i, z_prev, alpha, *opts, out),
        }
    }
}

/// Proximal point method: each inner step solves `z = z_prev − α ω_{τ_k(i)}(z)`.
pub fn run_ppm(op: &dyn FiniteSum, cfg: &RunConfig) -> Result<Trajectory> {
    cfg.validate(op)?;
    let alpha = cfg.step_size;
    if let Some(l) = op.constants().lipschitz {
        if alpha * l >= 1.0 {
            return Err(Error::Config(format!(
                "PPM needs α·l < 1 (α = {alpha}, l = {l})"
            )));
        }
    }
    let mode = cfg.ppm_mode.unwrap_or(if op.is_affine() {
        PpmMode::ClosedFormAffine
    } else {
        PpmMode::FixedPoint
    });
    let solver = ImplicitSolver::new(op, alpha, mode, cfg.fixed_point)?;
    let n = op.n();
    let mut schedule = Schedule::new(cfg.schedule, derive_seed(cfg.seed, 0));
    let mut rec = Recorder::new(cfg, op);
    let mut z = cfg.init.as_slice().to_vec();
    let mut next = vec![0.0; z.len()];
    let mut rhs = vec![0.0; z.len()];
    for k in 1..=cfg.epochs {
        let order = schedule.epoch_order(k, n, adversary_ctx(op, k, &z, alpha).as_ref())?;
        for &i in &order {
            solver.step(op, i, alpha, &z, &mut rhs, &mut next)?;
            std::mem::swap(&mut z, &mut next);
        }
        rec.epoch_done(k, &z)?;
    }
    rec.finish(z, n * cfg.epochs)
}

/// Two-timescale alternating GDA.
///
/// Each epoch runs an x-pass `x ← x − α ∇_x f_{τ_k(i)}(x, y^k_0)` followed by a
/// y-pass `y ← y + β ∇_y f_{π_k(i)}(x^k_n, y)` with `β = η α`. Since
/// `ω = [∇_x f, −∇_y f]`, both passes read blocks of the same operator.
/// `schedule_y` defaults to `cfg.schedule`; the two passes draw from
/// independent streams.
pub fn run_agda(
    op: &dyn FiniteSum,
    cfg: &RunConfig,
    schedule_y: Option<ScheduleKind>,
) -> Result<Trajectory> {
    run_agda_observed(op, cfg, schedule_y, &mut |_| {})
}

/// [`run_agda`] with a hook called after every inner step.
pub fn run_agda_observed(
    op: &dyn FiniteSum,
    cfg: &RunConfig,
    schedule_y: Option<ScheduleKind>,
    observer: &mut dyn FnMut(StepEvent<'_>),
) -> Result<Trajectory> {
    cfg.validate(op)?;
    let (dx, _) = op.dims();
    let n = op.n();
    let alpha = cfg.step_size;
    let beta = cfg.second_step_factor * alpha;
    let mut sched_x = Schedule::new(cfg.schedule, derive_seed(cfg.seed, 0));
    let mut sched_y = Schedule::new(schedule_y.unwrap_or(cfg.schedule), derive_seed(cfg.seed, 1));
    let mut rec = Recorder::new(cfg, op);
    let mut z = cfg.init.as_slice().to_vec();
    let mut g = vec![0.0; z.len()];
    for k in 1..=cfg.epochs {
        let tau = sched_x.epoch_order(k, n, adversary_ctx(op, k, &z, alpha).as_ref())?;
        for &i in &tau {
            op.component_into(i, &z, &mut g);
            for (zj, gj) in z[..dx].iter_mut().zip(&g[..dx]) {
                *zj -= alpha * gj;
            }
            let (x, y) = z.split_at(dx);
            observer(StepEvent {
                epoch: k,
                pass: Pass::X,
                index: i,
                x,
                y,
            });
        }
        let pi = sched_y.epoch_order(k, n, adversary_ctx(op, k, &z, beta).as_ref())?;
        for &i in &pi {
            op.component_into(i, &z, &mut g);
            for (zj, gj) in z[dx..].iter_mut().zip(&g[dx..]) {
                *zj -= beta * gj;
            }
            let (x, y) = z.split_at(dx);
            observer(StepEvent {
                epoch: k,
                pass: Pass::Y,
                index: i,
                x,
                y,
            });
        }
        rec.epoch_done(k, &z)?;
    }
    rec.finish(z, 2 * n * cfg.epochs)
}

/// Which guarantee a step-size rule targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shuffling {
    /// Random reshuffling or shuffle-once (in expectation).
    Random,
    /// Worst case over all permutation sequences.
    Adversarial,
}

fn require_positive(pairs: &[(&str, f64)]) -> Result<()> {
    for (name, v) in pairs {
        if !(*v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "{name} must be positive, got {v}"
            )));
        }
    }
    Ok(())
}

/// `ln(max(e, x))`.
fn clamped_ln(x: f64) -> f64 {
    x.max(std::f64::consts::E).ln()
}

/// `min{μ/(5nl²), 2 ln(‖ν(z₀)‖√n K/μ)/(μnK)}`; the adversarial variant drops `√n`.
pub fn theoretical_step_size_gda(
    mu: f64,
    l: f64,
    n: usize,
    epochs: usize,
    grad_norm_z0: f64,
    kind: Shuffling,
) -> Result<f64> {
    require_positive(&[
        ("mu", mu),
        ("l", l),
        ("n", n as f64),
        ("K", epochs as f64),
        ("‖ν(z₀)‖", grad_norm_z0),
    ])?;
    let (nf, kf) = (n as f64, epochs as f64);
    let arg = match kind {
        Shuffling::Random => grad_norm_z0 * nf.sqrt() * kf / mu,
        Shuffling::Adversarial => grad_norm_z0 * kf / mu,
    };
    let cap = mu / (5.0 * nf * l * l);
    Ok(cap.min(2.0 * clamped_ln(arg) / (mu * nf * kf)))
}

/// AGDA timescale ratio `η = 73 l² / (2 μ₂²)`.
pub fn agda_eta(l: f64, mu2: f64) -> f64 {
    73.0 * l * l / (2.0 * mu2 * mu2)
}

/// Returns `(α, β)` with `α = min{1/(5ηnl), 4 ln(V₀√n K)/(μ₁nK)}` and `β = ηα`;
/// the adversarial variant drops `√n`.
pub fn theoretical_step_size_agda(
    mu1: f64,
    mu2: f64,
    l: f64,
    n: usize,
    epochs: usize,
    v0: f64,
    kind: Shuffling,
) -> Result<(f64, f64)> {
    require_positive(&[
        ("mu1", mu1),
        ("mu2", mu2),
        ("l", l),
        ("n", n as f64),
        ("K", epochs as f64),
        ("V₀", v0),
    ])?;
    let (nf, kf) = (n as f64, epochs as f64);
    let eta = agda_eta(l, mu2);
    let arg = match kind {
        Shuffling::Random => v0 * nf.sqrt() * kf,
        Shuffling::Adversarial => v0 * kf,
    };
    let alpha = (1.0 / (5.0 * eta * nf * l)).min(4.0 * clamped_ln(arg) / (mu1 * nf * kf));
    Ok((alpha, eta * alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{aggregate, AffineFiniteSum, Constants, FnFiniteSum};
    use crate::problems::bilinear_lower_bound_instance;
    use crate::shuffling::AdversaryStrategy;

    fn pt(v: &[f64]) -> Point {
        Point::new(v.to_vec()).unwrap()
    }

    #[test]
    fn single_component_gda_is_full_batch() {
        let op = bilinear_lower_bound_instance(1.0, 3.0).unwrap();
        let cfg = RunConfig::new(pt(&[0.7, -1.3]), 25, 0.1, ScheduleKind::Rr, 9);
        let traj = run_gda(&op, &cfg).unwrap();
        let mut z = cfg.init.clone();
        for rec in &traj.records {
            let nu = aggregate(&op, &z).unwrap();
            z = Point::new(
                z.as_slice()
                    .iter()
                    .zip(nu.as_slice())
                    .map(|(a, b)| a - 0.1 * b)
                    .collect(),
            )
            .unwrap();
            assert_eq!(rec.point.as_ref().unwrap(), &z);
        }
        assert_eq!(traj.grad_evals, 25);
    }

    #[test]
    fn bilinear_one_epoch_factor() {
        let op = bilinear_lower_bound_instance(1.0, 2.0).unwrap();
        let cfg = RunConfig::new(pt(&[1.0, 0.0]), 1, 0.5, ScheduleKind::Ig, 0);
        let traj = run_gda(&op, &cfg).unwrap();
        assert!((traj.final_point.norm_sq() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_step_keeps_init() {
        let op = bilinear_lower_bound_instance(1.0, 2.0).unwrap();
        let cfg = RunConfig::new(pt(&[1.0, 2.0]), 5, 0.0, ScheduleKind::Rr, 0);
        for traj in [run_gda(&op, &cfg).unwrap(), run_ppm(&op, &cfg).unwrap()] {
            assert!(traj
                .records
                .iter()
                .all(|r| r.point.as_ref() == Some(&cfg.init)));
        }
    }

    #[test]
    fn divergence_reports_epoch() {
        let op = bilinear_lower_bound_instance(1.0, 2.0).unwrap();
        let cfg = RunConfig::new(pt(&[1.0, 0.0]), 5000, 10.0, ScheduleKind::Ig, 0);
        match run_gda(&op, &cfg) {
            Err(Error::Divergence { epoch }) => assert!(epoch > 1 && epoch < 5000),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn scalar_implicit_step() {
        let op = FnFiniteSum::new(1, (1, 1), |_, z, out| out.copy_from_slice(z)).unwrap();
        let z = ppm_implicit_step(
            &op,
            0,
            &pt(&[3.0, 0.0]),
            0.5,
            PpmMode::FixedPoint,
            Default::default(),
        )
        .unwrap();
        assert!((z[0] - 2.0).abs() < 1e-11);
        let aff =
            AffineFiniteSum::new((1, 1), vec![Matrix::identity(2)], vec![vec![0.0; 2]]).unwrap();
        let z = ppm_implicit_step(
            &aff,
            0,
            &pt(&[3.0, 0.0]),
            0.5,
            PpmMode::ClosedFormAffine,
            Default::default(),
        )
        .unwrap();
        assert_eq!(z[0], 2.0);
    }

    #[test]
    fn implicit_modes_agree_on_bilinear() {
        let op = bilinear_lower_bound_instance(1.0, 2.0).unwrap();
        let zp = pt(&[1.0, 1.0]);
        let a = ppm_implicit_step(
            &op,
            0,
            &zp,
            0.1,
            PpmMode::ClosedFormAffine,
            Default::default(),
        )
        .unwrap();
        let b =
            ppm_implicit_step(&op, 0, &zp, 0.1, PpmMode::FixedPoint, Default::default()).unwrap();
        assert!(a.dist_sq(&b).sqrt() < 1e-10);
    }

    #[test]
    fn zero_operator_step_is_identity() {
        let op = FnFiniteSum::new(2, (1, 1), |_, _, out| out.fill(0.0)).unwrap();
        let zp = pt(&[0.4, -2.0]);
        let z =
            ppm_implicit_step(&op, 1, &zp, 0.3, PpmMode::FixedPoint, Default::default()).unwrap();
        assert_eq!(z, zp);
    }

    #[test]
    fn closed_form_needs_affine_registration() {
        let op = FnFiniteSum::new(1, (1, 1), |_, z, out| out.copy_from_slice(z)).unwrap();
        let r = ppm_implicit_step(
            &op,
            0,
            &pt(&[1.0, 1.0]),
            0.1,
            PpmMode::ClosedFormAffine,
            Default::default(),
        );
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn fixed_point_reports_nonconvergence() {
        // α·l ≥ 1 with no declared constant: the Picard iteration blows up.
        let op = FnFiniteSum::new(1, (1, 1), |_, z, out| {
            out[0] = 3.0 * z[0];
            out[1] = 3.0 * z[1];
        })
        .unwrap();
        let r = ppm_implicit_step(
            &op,
            0,
            &pt(&[1.0, 1.0]),
            0.5,
            PpmMode::FixedPoint,
            Default::default(),
        );
        assert!(matches!(r, Err(Error::Numerical(_))));
    }

    #[test]
    fn singular_shift_is_reported() {
        let aff = AffineFiniteSum::new(
            (1, 1),
            vec![Matrix::identity(2).scale(-2.0)],
            vec![vec![0.0; 2]],
        )
        .unwrap();
        let r = ppm_implicit_step(
            &aff,
            0,
            &pt(&[1.0, 1.0]),
            0.5,
            PpmMode::ClosedFormAffine,
            Default::default(),
        );
        assert!(matches!(r, Err(Error::Numerical(_))));
    }

    #[test]
    fn ppm_respects_lipschitz_guard() {
        let op = bilinear_lower_bound_instance(1.0, 2.0).unwrap();
        let cfg = RunConfig::new(pt(&[1.0, 0.0]), 2, 0.6, ScheduleKind::Rr, 0);
        assert!(matches!(run_ppm(&op, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn full_batch_ppm_contracts() {
        let op = bilinear_lower_bound_instance(1.0, 2.0).unwrap();
        let alpha = 0.3;
        let cfg = RunConfig::new(pt(&[1.0, -0.5]), 30, alpha, ScheduleKind::Rr, 0);
        let traj = run_ppm(&op, &cfg).unwrap();
        let mut prev = cfg.init.norm();
        for r in &traj.records {
            let cur = r.point.as_ref().unwrap().norm();
            assert!(cur <= prev / (1.0 + alpha) + 1e-12);
            prev = cur;
        }
    }

    fn decoupled(n: usize) -> FnFiniteSum {
        // f_i(x, y) = ½ a_i x² − ½ c_i y², so ω_i = (a_i x, c_i y).
        FnFiniteSum::new(n, (1, 1), |i, z, out| {
            out[0] = (1.0 + i as f64) * z[0];
            out[1] = (2.0 + i as f64) * z[1];
        })
        .unwrap()
    }

    #[test]
    fn agda_decoupled_matches_independent_descent() {
        let op = decoupled(1);
        let mut cfg = RunConfig::new(pt(&[1.0, -2.0]), 10, 0.1, ScheduleKind::Rr, 4);
        cfg.second_step_factor = 1.0;
        let traj = run_agda(&op, &cfg, None).unwrap();
        let (mut x, mut y) = (1.0f64, -2.0f64);
        for r in &traj.records {
            x -= 0.1 * x;
            y -= 0.1 * (2.0 * y);
            let p = r.point.as_ref().unwrap();
            assert_eq!((p[0], p[1]), (x, y));
        }
        assert_eq!(traj.grad_evals, 20);
    }

    #[test]
    fn agda_blocks_are_frozen_during_the_other_pass() {
        let op = bilinear_lower_bound_instance(1.0, 2.0).unwrap();
        let cfg = RunConfig::new(pt(&[1.0, 1.0]), 4, 0.05, ScheduleKind::Rr, 1);
        let mut last: Option<(usize, Pass, f64, f64)> = None;
        let mut ok = true;
        run_agda_observed(&op, &cfg, None, &mut |ev| {
            if let Some((k, pass, x, y)) = last {
                if k == ev.epoch && pass == ev.pass {
                    match ev.pass {
                        Pass::X => ok &= y == ev.y[0],
                        Pass::Y => ok &= x == ev.x[0],
                    }
                }
            }
            last = Some((ev.epoch, ev.pass, ev.x[0], ev.y[0]));
        })
        .unwrap();
        assert!(ok);
    }

    #[test]
    fn agda_identity_adversary_matches_incremental() {
        let op = bilinear_lower_bound_instance(1.0, 2.0).unwrap();
        let ig = RunConfig::new(pt(&[1.0, 1.0]), 6, 0.05, ScheduleKind::Ig, 3);
        let mut adv = ig.clone();
        adv.schedule = ScheduleKind::Adversarial(AdversaryStrategy::Identity);
        assert_eq!(
            run_agda(&op, &ig, None).unwrap(),
            run_agda(&op, &adv, None).unwrap()
        );
        assert_eq!(
            run_agda(&op, &adv, None).unwrap(),
            run_agda(&op, &adv, None).unwrap()
        );
    }

    #[test]
    fn adversarial_without_root_is_config_error() {
        let op = decoupled(3);
        let cfg = RunConfig::new(
            pt(&[1.0, 1.0]),
            2,
            0.1,
            ScheduleKind::Adversarial(AdversaryStrategy::GreedyMaxDist),
            0,
        );
        assert!(matches!(run_gda(&op, &cfg), Err(Error::Config(_))));
        let with_root = decoupled(3).with_constants(Constants {
            known_root: Some(Point::zeros(2)),
            ..Constants::default()
        });
        assert!(run_gda(&with_root, &cfg).is_ok());
    }

    #[test]
    fn record_stride_keeps_final_epoch() {
        let op = bilinear_lower_bound_instance(1.0, 2.0).unwrap();
        let mut cfg = RunConfig::new(pt(&[1.0, 1.0]), 10, 0.05, ScheduleKind::Rr, 3);
        cfg.record_every = 4;
        cfg.keep_points = false;
        let traj = run_gda(&op, &cfg).unwrap();
        let epochs: Vec<usize> = traj.records.iter().map(|r| r.epoch).collect();
        assert_eq!(epochs, vec![4, 8, 10]);
        assert!(traj
            .records
            .iter()
            .all(|r| r.point.is_none() && r.dist_sq.is_some()));
    }

    #[test]
    fn gda_step_size_rule() {
        // Huge K: the log branch is far below the cap.
        let a = theoretical_step_size_gda(1.0, 2.0, 10, 1_000_000, 1.0, Shuffling::Random).unwrap();
        assert!(a <= 0.005);
        // Small K: the cap 1/200 binds.
        let a = theoretical_step_size_gda(1.0, 2.0, 10, 1, 1.0, Shuffling::Random).unwrap();
        assert_eq!(a, 0.005);
        let a = theoretical_step_size_gda(2.0, 2.0, 1, 1, 1.0, Shuffling::Random).unwrap();
        assert!((a - 0.1).abs() < 1e-15);
        let big = theoretical_step_size_gda(1.0, 1.0, 1, 1_000, 1.0, Shuffling::Random).unwrap();
        let bigger =
            theoretical_step_size_gda(1.0, 1.0, 1, 1_000_000, 1.0, Shuffling::Random).unwrap();
        assert!(bigger < big);
        assert!(theoretical_step_size_gda(0.0, 1.0, 1, 1, 1.0, Shuffling::Random).is_err());
        assert!(theoretical_step_size_gda(1.0, 1.0, 1, 1, 0.0, Shuffling::Random).is_err());
    }

    #[test]
    fn agda_step_size_rule() {
        assert_eq!(agda_eta(1.0, 1.0), 36.5);
        let (a, b) =
            theoretical_step_size_agda(1.0, 1.0, 1.0, 10, 1, 1.0, Shuffling::Random).unwrap();
        assert!((a - 1.0 / (5.0 * 36.5 * 10.0)).abs() < 1e-15);
        assert!((a - 5.479e-4).abs() < 1e-7);
        assert!((b - 36.5 * a).abs() < 1e-15);
        assert!(theoretical_step_size_agda(1.0, 1.0, 1.0, 10, 1, 0.0, Shuffling::Random).is_err());
        assert!(
            theoretical_step_size_agda(1.0, 1.0, 1.0, 10, 1, -1.0, Shuffling::Adversarial).is_err()
        );
    }
}
