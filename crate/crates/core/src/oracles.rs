//! Independent checks: exhaustive and Monte Carlo moments of without-replacement
//! sample means, operator constants of affine maps, and the full-batch GDA
//! contraction factor on the bilinear instance.

use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, symmetric_eigen, Matrix};
use crate::operator::{dist_sq, Point};
use crate::rng::SeedStream;

/// Largest `n` accepted by the exhaustive enumeration (8! = 40320 orderings).
pub const MAX_ENUMERATION_N: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub prefix_len: usize,
    pub samples: usize,
    /// Average of the length-`i` prefix means.
    pub enumerated_mean: Point,
    pub full_mean: Point,
    /// Average of `‖m̂ − m‖²` over the sampled orderings.
    pub enumerated_variance: f64,
    /// `(n − i)/(n − 1) · σ²/i`.
    pub formula_variance: f64,
    /// `σ² = (1/n) Σ ‖v_j − m‖²`.
    pub population_variance: f64,
    /// Standard error of `enumerated_variance` (Monte Carlo only).
    pub std_error: Option<f64>,
}

struct Population {
    n: usize,
    d: usize,
    data: Vec<Vec<f64>>,
    mean: Vec<f64>,
    sigma_sq: f64,
}

fn population(vectors: &[Point], i: usize) -> Result<Population> {
    let n = vectors.len();
    if n == 0 {
        return Err(Error::InvalidInput("need at least one vector".into()));
    }
    if i == 0 || i > n {
        return Err(Error::InvalidInput(format!(
            "prefix length {i} outside 1..={n}"
        )));
    }
    let d = vectors[0].dim();
    if let Some(v) = vectors.iter().find(|v| v.dim() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: v.dim(),
        });
    }
    let data: Vec<Vec<f64>> = vectors.iter().map(|v| v.as_slice().to_vec()).collect();
    let mut mean = vec![0.0; d];
    for v in &data {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x / n as f64;
        }
    }
    let sigma_sq = data.iter().map(|v| dist_sq(v, &mean)).sum::<f64>() / n as f64;
    Ok(Population {
        n,
        d,
        data,
        mean,
        sigma_sq,
    })
}

fn formula(n: usize, i: usize, sigma_sq: f64) -> f64 {
    if n == 1 {
        return 0.0;
    }
    (n - i) as f64 / (n - 1) as f64 * sigma_sq / i as f64
}

struct Accumulator {
    prefix: Vec<f64>,
    mean_sum: Vec<f64>,
    dev_sum: f64,
    dev_sq_sum: f64,
    count: usize,
}

impl Accumulator {
    fn new(d: usize) -> Self {
        Self {
            prefix: vec![0.0; d],
            mean_sum: vec![0.0; d],
            dev_sum: 0.0,
            dev_sq_sum: 0.0,
            count: 0,
        }
    }

    fn add(&mut self, pop: &Population, order: &[usize], i: usize) {
        self.prefix.fill(0.0);
        for &j in &order[..i] {
            for (p, x) in self.prefix.iter_mut().zip(&pop.data[j]) {
                *p += x;
            }
        }
        for p in &mut self.prefix {
            *p /= i as f64;
        }
        for (s, p) in self.mean_sum.iter_mut().zip(&self.prefix) {
            *s += p;
        }
        let dev = dist_sq(&self.prefix, &pop.mean);
        self.dev_sum += dev;
        self.dev_sq_sum += dev * dev;
        self.count += 1;
    }

    fn report(self, pop: &Population, i: usize, with_error: bool) -> Result<MomentReport> {
        let c = self.count as f64;
        let var = self.dev_sum / c;
        let std_error = with_error.then(|| {
            let second = self.dev_sq_sum / c - var * var;
            (second.max(0.0) / (c - 1.0).max(1.0)).sqrt()
        });
        Ok(MomentReport {
            prefix_len: i,
            samples: self.count,
            enumerated_mean: Point::new(self.mean_sum.iter().map(|s| s / c).collect())?,
            full_mean: Point::new(pop.mean.clone())?,
            enumerated_variance: var,
            formula_variance: formula(pop.n, i, pop.sigma_sq),
            population_variance: pop.sigma_sq,
            std_error,
        })
    }
}

/// Exact moments of the length-`i` prefix mean over all `n!` orderings.
pub fn wor_moments_enumerate(vectors: &[Point], i: usize) -> Result<MomentReport> {
    let pop = population(vectors, i)?;
    if pop.n > MAX_ENUMERATION_N {
        return Err(Error::InvalidInput(format!(
            "exhaustive enumeration is limited to n <= {MAX_ENUMERATION_N} (got {})",
            pop.n
        )));
    }
    let mut acc = Accumulator::new(pop.d);
    // Heap's algorithm, iterative form.
    let n = pop.n;
    let mut order: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    acc.add(&pop, &order, i);
    let mut k = 1;
    while k < n {
        if c[k] < k {
            if k % 2 == 0 {
                order.swap(0, k);
            } else {
                order.swap(c[k], k);
            }
            acc.add(&pop, &order, i);
            c[k] += 1;
            k = 1;
        } else {
            c[k] = 0;
            k += 1;
        }
    }
    acc.report(&pop, i, false)
}

/// Monte Carlo moments from `samples` uniformly random orderings.
pub fn wor_moments_monte_carlo(
    vectors: &[Point],
    i: usize,
    samples: usize,
    seed: u64,
) -> Result<MomentReport> {
    let pop = population(vectors, i)?;
    if samples < 2 {
        return Err(Error::InvalidInput("need at least two samples".into()));
    }
    let mut rng = SeedStream::new(seed);
    let mut acc = Accumulator::new(pop.d);
    let mut order: Vec<usize> = (0..pop.n).collect();
    for _ in 0..samples {
        rng.shuffle(&mut order);
        acc.add(&pop, &order, i);
    }
    acc.report(&pop, i, true)
}

/// Exact enumeration when `n` is small enough, Monte Carlo otherwise.
pub fn wor_moments(vectors: &[Point], i: usize, samples: usize, seed: u64) -> Result<MomentReport> {
    if vectors.len() <= MAX_ENUMERATION_N {
        wor_moments_enumerate(vectors, i)
    } else {
        log::warn!(
            "n = {} exceeds the enumeration cap of {MAX_ENUMERATION_N}; using {samples} Monte Carlo orderings",
            vectors.len()
        );
        wor_moments_monte_carlo(vectors, i, samples, seed)
    }
}

/// For `ν(z) = A z + b`: `l = σ_max(A)` and `μ = λ_min((A + Aᵀ)/2)`.
pub fn affine_operator_constants(a: &Matrix) -> Result<(f64, f64)> {
    if !a.is_square() {
        return Err(Error::InvalidInput("operator matrix must be square".into()));
    }
    let l = spectral_norm(a)?;
    let (vals, _) = symmetric_eigen(&a.symmetric_part())?;
    Ok((l, vals[0]))
}

/// Per-step factor `‖z_{k+1}‖²/‖z_k‖² = 1 − 2αμ + α²(μ² + (l−μ)²)` of full-batch
/// GDA on the bilinear lower-bound instance.
pub fn full_batch_gda_factor(mu: f64, l: f64, alpha: f64) -> Result<f64> {
    if !(mu > 0.0 && l > mu && alpha >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "need l > mu > 0 and alpha >= 0 (mu={mu}, l={l}, alpha={alpha})"
        )));
    }
    Ok(1.0 - 2.0 * alpha * mu + alpha * alpha * (mu * mu + (l - mu) * (l - mu)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalars(v: &[f64]) -> Vec<Point> {
        v.iter().map(|&x| Point::new(vec![x]).unwrap()).collect()
    }

    #[test]
    fn enumeration_visits_every_ordering() {
        let r = wor_moments_enumerate(&scalars(&[1.0, 2.0, 3.0, 4.0, 5.0]), 2).unwrap();
        assert_eq!(r.samples, 120);
    }

    #[test]
    fn three_scalars_prefix_one() {
        let r = wor_moments_enumerate(&scalars(&[1.0, 2.0, 3.0]), 1).unwrap();
        assert!((r.population_variance - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.enumerated_variance - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.formula_variance - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.enumerated_mean[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn three_scalars_prefix_two() {
        let r = wor_moments_enumerate(&scalars(&[1.0, 2.0, 3.0]), 2).unwrap();
        assert!((r.formula_variance - 1.0 / 6.0).abs() < 1e-15);
        assert!((r.enumerated_variance - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn full_prefix_has_no_variance() {
        let r = wor_moments_enumerate(&scalars(&[0.5, -2.0, 7.0, 1.0]), 4).unwrap();
        assert!(r.enumerated_variance < 1e-28);
        assert_eq!(r.formula_variance, 0.0);
    }

    #[test]
    fn enumeration_refuses_large_n() {
        let v = scalars(&[1.0; 9]);
        assert!(wor_moments_enumerate(&v, 1).is_err());
        let r = wor_moments(&v, 1, 100, 0).unwrap();
        assert!(r.std_error.is_some());
    }

    #[test]
    fn prefix_length_is_validated() {
        let v = scalars(&[1.0, 2.0]);
        assert!(wor_moments_enumerate(&v, 0).is_err());
        assert!(wor_moments_enumerate(&v, 3).is_err());
    }

    #[test]
    fn bilinear_constants() {
        let m = Matrix::from_rows(&[vec![1.0, 1.0], vec![-1.0, 1.0]]).unwrap();
        let (l, mu) = affine_operator_constants(&m).unwrap();
        assert!((l - 2f64.sqrt()).abs() < 1e-14);
        assert!((mu - 1.0).abs() < 1e-14);
        let (l, mu) = affine_operator_constants(&Matrix::identity(4)).unwrap();
        assert_eq!((l, mu), (1.0, 1.0));
    }

    #[test]
    fn gda_factor_examples() {
        assert_eq!(full_batch_gda_factor(1.0, 2.0, 0.5).unwrap(), 0.5);
        assert_eq!(full_batch_gda_factor(1.0, 2.0, 0.0).unwrap(), 1.0);
        // Vertex of the quadratic in α.
        let (mu, l) = (1.0, 2.0);
        let a_star = mu / (mu * mu + (l - mu) * (l - mu));
        let f = full_batch_gda_factor(mu, l, a_star).unwrap();
        assert!((f - (1.0 - mu * mu / (mu * mu + (l - mu) * (l - mu)))).abs() < 1e-15);
        assert!((f - 0.5).abs() < 1e-15);
        assert!(full_batch_gda_factor(1.0, 1.0, 0.1).is_err());
    }
}
