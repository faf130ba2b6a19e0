//! Oracle suite behind `wor-minimax verify`.

use std::fmt::Write as _;
use std::time::Instant;

use crate::error::Result;
use crate::linalg::symmetric_eigen;
use crate::metrics::{dist_sq_to_saddle_set_2pl, dist_to_lyapunov_constant, lyapunov_v_2pl};
use crate::operator::{component_grad, FiniteSum, PartitionedPoint, Point};
use crate::optimizers::{
    ppm_implicit_step, run_agda, run_gda, theoretical_step_size_agda, FixedPointOptions, PpmMode,
    RunConfig, Shuffling,
};
use crate::oracles::{affine_operator_constants, full_batch_gda_factor, wor_moments_enumerate};
use crate::problems::{
    bilinear_lower_bound_instance, generate_quadratic_game, quadratic_best_response,
    unbounded_2pl_instance, GameGenConfig,
};
use crate::rng::SeedStream;
use crate::shuffling::{AdversaryStrategy, Schedule, ScheduleKind};

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub millis: f64,
}

fn gaussian_points(rng: &mut SeedStream, count: usize, dim: usize) -> Result<Vec<Point>> {
    (0..count)
        .map(|_| Point::new((0..dim).map(|_| rng.normal()).collect()))
        .collect()
}

fn check_moments() -> Result<(bool, String)> {
    let mut rng = SeedStream::new(11);
    let (mut var_err, mut mean_err) = (0.0f64, 0.0f64);
    for dim in [1, 3] {
        let v = gaussian_points(&mut rng, 5, dim)?;
        for i in 1..=5 {
            let r = wor_moments_enumerate(&v, i)?;
            var_err = var_err.max((r.enumerated_variance - r.formula_variance).abs());
            mean_err = mean_err.max(r.enumerated_mean.dist_sq(&r.full_mean).sqrt());
        }
    }
    Ok((
        var_err <= 1e-10 && mean_err <= 1e-12,
        format!("max |var − formula| = {var_err:.2e}, max mean error = {mean_err:.2e}"),
    ))
}

fn check_generator() -> Result<(bool, String)> {
    let game = generate_quadratic_game(&GameGenConfig::benchmark(0))?;
    let (eig, _) = symmetric_eigen(game.a_bar())?;
    let mut sampled = game.sampled_m_a().to_vec();
    sampled.sort_by(f64::total_cmp);
    let spec_err = eig
        .iter()
        .zip(&sampled)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let lin = game
        .u_bar()
        .iter()
        .chain(game.v_bar())
        .map(|x| x.abs())
        .fold(0.0, f64::max);
    let (m, _) = game.operator().aggregate_affine();
    let (_, mu) = affine_operator_constants(&m)?;
    Ok((
        spec_err <= 1e-8 && lin <= 1e-10 && mu >= 0.5 - 1e-8,
        format!("spectrum error {spec_err:.2e}, linear terms {lin:.2e}, μ = {mu:.4}"),
    ))
}

fn check_full_batch() -> Result<(bool, String)> {
    let op = bilinear_lower_bound_instance(1.0, 2.0)?;
    let z0 = Point::new(vec![0.3, -1.1])?;
    let traj = run_gda(
        &op,
        &RunConfig::new(z0.clone(), 1, 0.5, ScheduleKind::Rr, 0),
    )?;
    let ratio = traj.final_point.norm_sq() / z0.norm_sq();
    let expected = full_batch_gda_factor(1.0, 2.0, 0.5)?;
    Ok((
        (ratio - expected).abs() <= 1e-12,
        format!("‖z₁‖²/‖z₀‖² = {ratio:.15}"),
    ))
}

fn check_ppm_contraction() -> Result<(bool, String)> {
    let op = bilinear_lower_bound_instance(1.0, 2.0)?;
    let alpha = 0.3;
    let mut z = Point::new(vec![2.0, -0.5])?;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..50 {
        let next = ppm_implicit_step(
            &op,
            0,
            &z,
            alpha,
            PpmMode::ClosedFormAffine,
            FixedPointOptions::default(),
        )?;
        worst = worst.max(next.norm() - z.norm() / (1.0 + alpha * 1.0));
        z = next;
    }
    Ok((
        worst <= 1e-12,
        format!("max excess over (1+αμ)⁻¹ contraction = {worst:.2e}"),
    ))
}

fn check_implicit_residual() -> Result<(bool, String)> {
    let game = generate_quadratic_game(&GameGenConfig {
        n: 12,
        dx: 4,
        dy: 3,
        mu_a: 1.0,
        mu_b: 0.5,
        mu_c: 1.0,
        mu_delta: 0.5,
        nonconvex_count: 3,
        seed: 5,
    })?;
    let op = game.operator();
    let l = op.constants().require_lipschitz()?;
    let mut rng = SeedStream::new(2);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let i = rng.below(op.n());
        let z = Point::new((0..op.dim()).map(|_| 3.0 * rng.normal()).collect())?;
        let alpha = rng.uniform_in(0.01, 0.9) / l;
        for mode in [PpmMode::ClosedFormAffine, PpmMode::FixedPoint] {
            let out = ppm_implicit_step(op, i, &z, alpha, mode, FixedPointOptions::default())?;
            let g = component_grad(op, i, &out)?;
            let r: f64 = out
                .as_slice()
                .iter()
                .zip(z.as_slice())
                .zip(g.as_slice())
                .map(|((o, p), gi)| (o - p + alpha * gi).powi(2))
                .sum::<f64>()
                .sqrt();
            worst = worst.max(r / z.norm().max(1.0));
        }
    }
    Ok((worst <= 1e-10, format!("max scaled residual = {worst:.2e}")))
}

fn check_finite_differences() -> Result<(bool, String)> {
    let game = generate_quadratic_game(&GameGenConfig {
        n: 6,
        dx: 3,
        dy: 2,
        mu_a: 1.0,
        mu_b: 1.0,
        mu_c: 1.0,
        mu_delta: 1.0,
        nonconvex_count: 2,
        seed: 8,
    })?;
    let (dx, dy) = game.dims();
    let mut rng = SeedStream::new(4);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let z = Point::new((0..dx + dy).map(|_| rng.normal()).collect())?;
        let i = rng.below(game.n());
        let g = component_grad(game.operator(), i, &z)?;
        let mut fd = vec![0.0; dx + dy];
        for (j, slot) in fd.iter_mut().enumerate() {
            let mut p = z.as_slice().to_vec();
            let mut m = p.clone();
            p[j] += h;
            m[j] -= h;
            let d = (game.component_objective(i, &p[..dx], &p[dx..])
                - game.component_objective(i, &m[..dx], &m[dx..]))
                / (2.0 * h);
            // ω carries −∇_y f in the y block.
            *slot = if j < dx { d } else { -d };
        }
        let err = fd
            .iter()
            .zip(g.as_slice())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        worst = worst.max(err / g.norm().max(1.0));
    }
    Ok((worst <= 1e-6, format!("max relative error = {worst:.2e}")))
}

fn check_best_response() -> Result<(bool, String)> {
    let game = generate_quadratic_game(&GameGenConfig {
        n: 8,
        dx: 3,
        dy: 3,
        mu_a: 1.0,
        mu_b: 1.0,
        mu_c: 1.0,
        mu_delta: 1.0,
        nonconvex_count: 2,
        seed: 21,
    })?;
    let mut rng = SeedStream::new(6);
    let mut margin = f64::INFINITY;
    for _ in 0..10 {
        let x = Point::new((0..3).map(|_| rng.normal()).collect())?;
        let (_, phi) = quadratic_best_response(&game, &x)?;
        for _ in 0..100 {
            let y: Vec<f64> = (0..3).map(|_| 2.0 * rng.normal()).collect();
            margin = margin.min(phi - game.objective(x.as_slice(), &y));
        }
    }
    Ok((
        margin >= -1e-9,
        format!("min Φ(x) − F(x, y) = {margin:.2e}"),
    ))
}

fn check_reductions() -> Result<(bool, String)> {
    let game = generate_quadratic_game(&GameGenConfig {
        n: 10,
        dx: 3,
        dy: 3,
        mu_a: 1.0,
        mu_b: 0.5,
        mu_c: 1.0,
        mu_delta: 0.5,
        nonconvex_count: 2,
        seed: 13,
    })?;
    let op = game.operator();
    let z0 = Point::new(vec![1.0, -0.5, 0.2, 0.7, 0.0, -1.2])?;
    let ig = run_gda(
        op,
        &RunConfig::new(z0.clone(), 20, 0.01, ScheduleKind::Ig, 1),
    )?;
    let as_id = run_gda(
        op,
        &RunConfig::new(
            z0.clone(),
            20,
            0.01,
            ScheduleKind::Adversarial(AdversaryStrategy::Identity),
            1,
        ),
    )?;
    let same_ig = ig == as_id;

    let mut so = Schedule::new(ScheduleKind::So, 77);
    let first = so.epoch_order(1, 10, None)?;
    let mut so_fixed = true;
    for k in 2..=30 {
        so_fixed &= so.epoch_order(k, 10, None)? == first;
    }

    let bil = bilinear_lower_bound_instance(1.0, 3.0)?;
    let zb = Point::new(vec![0.4, 0.9])?;
    let rr = run_gda(
        &bil,
        &RunConfig::new(zb.clone(), 30, 0.1, ScheduleKind::Rr, 3),
    )?;
    let mut z = zb.into_vec();
    let mut g = vec![0.0; 2];
    for _ in 0..30 {
        bil.component_into(0, &z, &mut g);
        for (zj, gj) in z.iter_mut().zip(&g) {
            *zj -= 0.1 * gj;
        }
    }
    let n1 = rr.final_point.as_slice() == z.as_slice();
    Ok((
        same_ig && so_fixed && n1,
        format!("AS:IDENTITY ≡ IG: {same_ig}, SO fixed: {so_fixed}, n=1 RR ≡ full batch: {n1}"),
    ))
}

fn check_dist_lyapunov() -> Result<(bool, String)> {
    let inst = unbounded_2pl_instance();
    let lambda = 0.1;
    let c = dist_to_lyapunov_constant(2.0, 2.0, 2.0, lambda);
    let mut rng = SeedStream::new(31);
    let mut worst = f64::NEG_INFINITY;
    for seed in 0..10 {
        let z0 = Point::new((0..4).map(|_| 3.0 * rng.normal()).collect())?;
        let v0 = lyapunov_v_2pl(&inst, &PartitionedPoint::split(&z0, 2)?, lambda)?;
        let (alpha, beta) =
            theoretical_step_size_agda(2.0, 2.0, 2.0, 1, 50, v0.max(1e-12), Shuffling::Random)?;
        let mut cfg = RunConfig::new(z0, 50, alpha, ScheduleKind::Rr, seed);
        cfg.second_step_factor = beta / alpha;
        let traj = run_agda(&inst.operator, &cfg, None)?;
        for r in &traj.records {
            let p = PartitionedPoint::split(r.point.as_ref().expect("kept"), 2)?;
            let d = dist_sq_to_saddle_set_2pl(&p)?;
            let v = lyapunov_v_2pl(&inst, &p, lambda)?;
            worst = worst.max(d - c * v);
        }
    }
    Ok((
        worst <= 1e-12,
        format!("C = {c}, max dist² − C·V = {worst:.2e}"),
    ))
}

type Check = (&'static str, fn() -> Result<(bool, String)>);

const CHECKS: [Check; 9] = [
    ("without-replacement moments", check_moments),
    ("generator algebra", check_generator),
    ("full-batch GDA identity", check_full_batch),
    ("PPM contraction", check_ppm_contraction),
    ("implicit-step residual", check_implicit_residual),
    (
        "component gradients vs finite differences",
        check_finite_differences,
    ),
    ("best response maximizes F", check_best_response),
    ("schedule reductions", check_reductions),
    ("distance bounded by Lyapunov", check_dist_lyapunov),
];

/// Runs every check; errors count as failures.
pub fn run_verify_suite() -> Vec<CheckResult> {
    CHECKS
        .iter()
        .map(|(name, f)| {
            let started = Instant::now();
            let (passed, detail) = match f() {
                Ok(r) => r,
                Err(e) => (false, format!("error: {e}")),
            };
            CheckResult {
                name,
                passed,
                detail,
                millis: started.elapsed().as_secs_f64() * 1e3,
            }
        })
        .collect()
}

pub fn format_table(results: &[CheckResult]) -> String {
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut out = String::new();
    for r in results {
        let _ = writeln!(
            out,
            "{:<width$}  {}  {:>8.1} ms  {}",
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.millis,
            r.detail
        );
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    let _ = writeln!(out, "{} checks, {} failed", results.len(), failed);
    out
}
