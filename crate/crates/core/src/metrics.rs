//! Convergence measures and evaluators for the theoretical rate bounds.

use crate::error::{check_dim, Error, Result};
use crate::operator::{FiniteSum, PartitionedPoint, Point};
use crate::problems::{quadratic_best_response, QuadraticGame, Unbounded2pl};

/// `‖z − z*‖² / ‖z₀ − z*‖²`.
pub fn relative_sq_distance(z: &Point, z0: &Point, z_star: &Point) -> Result<f64> {
    check_dim(z_star.dim(), z.dim())?;
    check_dim(z_star.dim(), z0.dim())?;
    let denom = z0.dist_sq(z_star);
    if denom == 0.0 {
        return Err(Error::InvalidInput(
            "initial point coincides with the solution".into(),
        ));
    }
    Ok(z.dist_sq(z_star) / denom)
}

/// `V_λ(x, y) = [Φ(x) − Φ*] + λ[Φ(x) − F(x, y)]` for a quadratic game,
/// with `Φ* = Φ(x*)` taken at the game's known root.
pub fn lyapunov_v(game: &QuadraticGame, z: &PartitionedPoint, lambda: f64) -> Result<f64> {
    let (dx, dy) = game.dims();
    check_dim(dx, z.x.dim())?;
    check_dim(dy, z.y.dim())?;
    let (_, phi) = quadratic_best_response(game, &z.x)?;
    let root = game.constants().require_root()?;
    let x_star = Point::new(root.as_slice()[..dx].to_vec())?;
    let (_, phi_star) = quadratic_best_response(game, &x_star)?;
    let f = game.objective(z.x.as_slice(), z.y.as_slice());
    Ok((phi - phi_star) + lambda * (phi - f))
}

/// `V_λ` for the unbounded-saddle instance, where `Φ(x) = (x₁+x₂)²/2` and `Φ* = 0`.
pub fn lyapunov_v_2pl(inst: &Unbounded2pl, z: &PartitionedPoint, lambda: f64) -> Result<f64> {
    check_dim(2, z.x.dim())?;
    check_dim(2, z.y.dim())?;
    let s = z.x[0] + z.x[1];
    let phi = 0.5 * s * s;
    let f = inst.objective(z.x.as_slice(), z.y.as_slice());
    Ok(phi + lambda * (phi - f))
}

/// Squared distance to `{x₁+x₂ = 0, y₁+y₂ = 0}`.
pub fn dist_sq_to_saddle_set_2pl(z: &PartitionedPoint) -> Result<f64> {
    check_dim(2, z.x.dim())?;
    check_dim(2, z.y.dim())?;
    let s = z.x[0] + z.x[1];
    let t = z.y[0] + z.y[1];
    Ok(0.5 * s * s + 0.5 * t * t)
}

/// Constant `C` in `dist(z, Z*)² ≤ C · V_λ(z)` under two-sided PŁ.
pub fn dist_to_lyapunov_constant(l: f64, mu1: f64, mu2: f64, lambda: f64) -> f64 {
    let a = 2.0 / mu1 * (l * l / (2.0 * mu2 * mu2) + 1.0);
    let b = 4.0 / (lambda * mu2);
    a.max(b)
}

/// A bound split into its exponential burn-in and its noise term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound {
    pub burn_in: f64,
    pub noise: f64,
}

impl Bound {
    pub fn total(&self) -> f64 {
        self.burn_in + self.noise
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdaBoundParams {
    pub mu: f64,
    pub l: f64,
    pub n: usize,
    /// `σ*²`.
    pub sigma_sq: f64,
    /// `‖z₀ − z*‖²`.
    pub init_dist_sq: f64,
    /// `‖ν(z₀)‖`.
    pub grad_norm_z0: f64,
}

impl GdaBoundParams {
    pub fn kappa(&self) -> f64 {
        self.l / self.mu
    }

    fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.l >= self.mu && self.n > 0) {
            return Err(Error::InvalidInput(format!(
                "need l >= mu > 0 and n > 0 (mu={}, l={}, n={})",
                self.mu, self.l, self.n
            )));
        }
        if self.sigma_sq < 0.0 || self.init_dist_sq < 0.0 || self.grad_norm_z0 < 0.0 {
            return Err(Error::InvalidInput(
                "variance, distance and gradient norm must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgdaBoundParams {
    pub mu1: f64,
    pub mu2: f64,
    pub l: f64,
    pub n: usize,
    /// Uniform variance bound `σ²`.
    pub sigma_sq: f64,
    /// `V_λ(z₀)`.
    pub v0: f64,
}

impl AgdaBoundParams {
    pub fn kappa(&self) -> f64 {
        (self.l / self.mu1).max(self.l / self.mu2)
    }

    fn validate(&self) -> Result<()> {
        if !(self.mu1 > 0.0 && self.mu2 > 0.0 && self.n > 0) || self.kappa() < 1.0 {
            return Err(Error::InvalidInput(
                "need positive PŁ constants, n > 0 and κ >= 1".into(),
            ));
        }
        if self.sigma_sq < 0.0 || self.v0 < 0.0 {
            return Err(Error::InvalidInput(
                "variance and V₀ must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// `ln(max(e, x))`, so that every logarithm in a bound is at least one.
fn clamped_ln(x: f64) -> f64 {
    x.max(std::f64::consts::E).ln()
}

fn check_epochs(k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidInput("K must be at least 1".into()));
    }
    Ok(k as f64)
}

/// Expected-distance bound for GDA/PPM with random reshuffling or shuffle-once:
/// `2e^{−K/5κ²}‖z₀−z*‖² + (2μ² + 8κ²σ*² ln³(‖ν(z₀)‖√n K/μ)) / (μ²nK²)`.
pub fn bound_gda_wor(k: usize, p: &GdaBoundParams) -> Result<Bound> {
    p.validate()?;
    let kf = check_epochs(k)?;
    let (mu, kappa, nf) = (p.mu, p.kappa(), p.n as f64);
    let lg = clamped_ln(p.grad_norm_z0 * nf.sqrt() * kf / mu);
    Ok(Bound {
        burn_in: 2.0 * (-kf / (5.0 * kappa * kappa)).exp() * p.init_dist_sq,
        noise: (2.0 * mu * mu + 8.0 * kappa * kappa * p.sigma_sq * lg.powi(3))
            / (mu * mu * nf * kf * kf),
    })
}

/// Worst-case bound under adversarial shuffling: as [`bound_gda_wor`] with
/// constant 24, `√n` dropped from the log and no `1/n` factor.
pub fn bound_gda_as(k: usize, p: &GdaBoundParams) -> Result<Bound> {
    p.validate()?;
    let kf = check_epochs(k)?;
    let (mu, kappa) = (p.mu, p.kappa());
    let lg = clamped_ln(p.grad_norm_z0 * kf / mu);
    Ok(Bound {
        burn_in: 2.0 * (-kf / (5.0 * kappa * kappa)).exp() * p.init_dist_sq,
        noise: (2.0 * mu * mu + 24.0 * kappa * kappa * p.sigma_sq * lg.powi(3))
            / (mu * mu * kf * kf),
    })
}

/// AGDA-RR: `e^{−K/365κ³}V₀ + (μ₁ + cκ⁸σ² ln²(V₀√n K)) / (μ₁nK²)`.
///
/// `c` has no published value; curves drawn with it are shape references only.
pub fn bound_agda_rr(k: usize, p: &AgdaBoundParams, c: f64) -> Result<Bound> {
    p.validate()?;
    let kf = check_epochs(k)?;
    if c <= 0.0 {
        return Err(Error::InvalidInput("c must be positive".into()));
    }
    let (kappa, nf) = (p.kappa(), p.n as f64);
    let lg = clamped_ln(p.v0 * nf.sqrt() * kf);
    Ok(Bound {
        burn_in: (-kf / (365.0 * kappa.powi(3))).exp() * p.v0,
        noise: (p.mu1 + c * kappa.powi(8) * p.sigma_sq * lg * lg) / (p.mu1 * nf * kf * kf),
    })
}

/// AGDA-AS: `e^{−K/365κ³}V₀ + (μ₁ + ĉκ⁸σ² ln²(V₀K)) / (μ₁K²)`.
pub fn bound_agda_as(k: usize, p: &AgdaBoundParams, c_hat: f64) -> Result<Bound> {
    p.validate()?;
    let kf = check_epochs(k)?;
    if c_hat <= 0.0 {
        return Err(Error::InvalidInput("c_hat must be positive".into()));
    }
    let kappa = p.kappa();
    let lg = clamped_ln(p.v0 * kf);
    Ok(Bound {
        burn_in: (-kf / (365.0 * kappa.powi(3))).exp() * p.v0,
        noise: (p.mu1 + c_hat * kappa.powi(8) * p.sigma_sq * lg * lg) / (p.mu1 * kf * kf),
    })
}

/// Least-squares slope of `ln(error)` against `ln(K)`.
pub fn fit_rate_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some(&(k, e)) = points.iter().find(|&&(k, e)| !(k > 0.0 && e > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "K and error must be positive (K={k}, error={e})"
        )));
    }
    let m = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|&(k, e)| (k.ln(), e.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("all K values coincide".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

/// Convenience: `‖ν(z)‖` for step-size rules.
pub fn grad_norm(op: &dyn FiniteSum, z: &Point) -> Result<f64> {
    Ok(crate::operator::aggregate(op, z)?.norm())
}
