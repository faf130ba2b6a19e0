//! Problem instances: randomized finite-sum quadratic games, the 2-D bilinear
//! lower-bound instance and an objective with an unbounded saddle set.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{qr, spectral_norm, symmetric_eigen, Lu, Matrix};
use crate::operator::{gradient_variance, AffineFiniteSum, Constants, FiniteSum, Point};
use crate::rng::SeedStream;

/// Recipe parameters for [`generate_quadratic_game`].
///
/// Every sampled spectrum lives in `[floor, 2·floor]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameGenConfig {
    pub n: usize,
    pub dx: usize,
    pub dy: usize,
    pub mu_a: f64,
    pub mu_b: f64,
    pub mu_c: f64,
    pub mu_delta: f64,
    pub nonconvex_count: usize,
    pub seed: u64,
}

impl GameGenConfig {
    /// The setup used for the main benchmark figures.
    pub fn benchmark(seed: u64) -> Self {
        Self {
            n: 100,
            dx: 25,
            dy: 25,
            mu_a: 0.5,
            mu_b: 5.0,
            mu_c: 0.5,
            mu_delta: 50.0,
            nonconvex_count: 20,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.dx == 0 || self.dy == 0 {
            return Err(Error::InvalidInput("n, dx and dy must be positive".into()));
        }
        for (name, v) in [
            ("mu_a", self.mu_a),
            ("mu_b", self.mu_b),
            ("mu_c", self.mu_c),
            ("mu_delta", self.mu_delta),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.nonconvex_count >= self.n {
            return Err(Error::InvalidInput(format!(
                "nonconvex_count {} must be below n = {}",
                self.nonconvex_count, self.n
            )));
        }
        Ok(())
    }
}

/// A finite-sum quadratic game with components
/// `f_i(x, y) = ½xᵀA_i x + xᵀB_i y − ½yᵀC_i y − u_iᵀx − v_iᵀy`.
#[derive(Debug, Clone)]
pub struct QuadraticGame {
    dx: usize,
    dy: usize,
    seed: Option<u64>,
    a: Vec<Matrix>,
    b: Vec<Matrix>,
    c: Vec<Matrix>,
    u: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    a_bar: Matrix,
    b_bar: Matrix,
    c_bar: Matrix,
    u_bar: Vec<f64>,
    v_bar: Vec<f64>,
    c_bar_lu: Lu,
    nonconvex: Vec<usize>,
    sampled_m_a: Vec<f64>,
    operator: AffineFiniteSum,
}

impl QuadraticGame {
    /// Builds a game from explicit components. The root is found by a dense
    /// solve of the aggregate system.
    pub fn from_components(
        a: Vec<Matrix>,
        b: Vec<Matrix>,
        c: Vec<Matrix>,
        u: Vec<Vec<f64>>,
        v: Vec<Vec<f64>>,
    ) -> Result<Self> {
        Self::assemble(a, b, c, u, v, None, None, Vec::new(), Vec::new())
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        a: Vec<Matrix>,
        b: Vec<Matrix>,
        c: Vec<Matrix>,
        u: Vec<Vec<f64>>,
        v: Vec<Vec<f64>>,
        root: Option<Point>,
        seed: Option<u64>,
        nonconvex: Vec<usize>,
        sampled_m_a: Vec<f64>,
    ) -> Result<Self> {
        let n = a.len();
        if n == 0 || b.len() != n || c.len() != n || u.len() != n || v.len() != n {
            return Err(Error::InvalidInput(
                "component lists must be nonempty and of equal length".into(),
            ));
        }
        let dx = a[0].rows();
        let dy = c[0].rows();
        for i in 0..n {
            check_dim(dx, a[i].rows())?;
            check_dim(dx, a[i].cols())?;
            check_dim(dx, b[i].rows())?;
            check_dim(dy, b[i].cols())?;
            check_dim(dy, c[i].rows())?;
            check_dim(dy, c[i].cols())?;
            check_dim(dx, u[i].len())?;
            check_dim(dy, v[i].len())?;
        }
        let avg = |ms: &[Matrix]| -> Matrix {
            let mut s = Matrix::zeros(ms[0].rows(), ms[0].cols());
            for m in ms {
                s = s.add(m).expect("checked shapes");
            }
            s.scale(1.0 / n as f64)
        };
        let avg_vec = |vs: &[Vec<f64>]| -> Vec<f64> {
            let mut s = vec![0.0; vs[0].len()];
            for w in vs {
                for (acc, x) in s.iter_mut().zip(w) {
                    *acc += x;
                }
            }
            s.into_iter().map(|x| x / n as f64).collect()
        };
        let a_bar = avg(&a);
        let b_bar = avg(&b);
        let c_bar = avg(&c);
        let u_bar = avg_vec(&u);
        let v_bar = avg_vec(&v);
        let c_bar_lu = Lu::new(&c_bar)?;

        let mut matrices = Vec::with_capacity(n);
        let mut offsets = Vec::with_capacity(n);
        for i in 0..n {
            let neg_bt = b[i].transpose().scale(-1.0);
            matrices.push(Matrix::block2x2(&a[i], &b[i], &neg_bt, &c[i])?);
            let mut off: Vec<f64> = u[i].iter().map(|x| -x).collect();
            off.extend_from_slice(&v[i]);
            offsets.push(off);
        }
        let op = AffineFiniteSum::new((dx, dy), matrices, offsets)?;
        let (m_bar, off_bar) = op.aggregate_affine();
        let root = match root {
            Some(r) => r,
            None => {
                let rhs: Vec<f64> = off_bar.iter().map(|x| -x).collect();
                Point::new(Lu::new(&m_bar)?.solve(&rhs))?
            }
        };
        let strong_monotonicity = symmetric_eigen(&m_bar.symmetric_part())?.0[0];
        let mut lipschitz = 0.0f64;
        for m in op.matrices() {
            lipschitz = lipschitz.max(spectral_norm(m)?);
        }
        let b_cinv_bt = {
            let mut cinv_bt = Matrix::zeros(dy, dx);
            let bt = b_bar.transpose();
            let mut col = vec![0.0; dy];
            let mut sol = vec![0.0; dy];
            for j in 0..dx {
                for r in 0..dy {
                    col[r] = bt[(r, j)];
                }
                c_bar_lu.solve_into(&col, &mut sol);
                for r in 0..dy {
                    cinv_bt[(r, j)] = sol[r];
                }
            }
            b_bar.matmul(&cinv_bt)?
        };
        let pl1 = symmetric_eigen(&a_bar.add(&b_cinv_bt)?)?.0[0];
        let pl2 = symmetric_eigen(&c_bar)?.0[0];
        let grad_var_at_root = gradient_variance(&op, &root)?;
        let operator = op.with_constants(Constants {
            lipschitz: Some(lipschitz),
            strong_monotonicity: Some(strong_monotonicity),
            pl1: Some(pl1),
            pl2: Some(pl2),
            known_root: Some(root),
            grad_var_at_root: Some(grad_var_at_root),
        })?;
        Ok(Self {
            dx,
            dy,
            seed,
            a,
            b,
            c,
            u,
            v,
            a_bar,
            b_bar,
            c_bar,
            u_bar,
            v_bar,
            c_bar_lu,
            nonconvex,
            sampled_m_a,
            operator,
        })
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.dx, self.dy)
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn operator(&self) -> &AffineFiniteSum {
        &self.operator
    }

    pub fn constants(&self) -> &Constants {
        self.operator.constants()
    }

    pub fn a(&self) -> &[Matrix] {
        &self.a
    }

    pub fn b(&self) -> &[Matrix] {
        &self.b
    }

    pub fn c(&self) -> &[Matrix] {
        &self.c
    }

    pub fn u(&self) -> &[Vec<f64>] {
        &self.u
    }

    pub fn v(&self) -> &[Vec<f64>] {
        &self.v
    }

    pub fn a_bar(&self) -> &Matrix {
        &self.a_bar
    }

    pub fn b_bar(&self) -> &Matrix {
        &self.b_bar
    }

    pub fn c_bar(&self) -> &Matrix {
        &self.c_bar
    }

    pub fn u_bar(&self) -> &[f64] {
        &self.u_bar
    }

    pub fn v_bar(&self) -> &[f64] {
        &self.v_bar
    }

    /// Indices that received the negative-curvature pattern.
    pub fn nonconvex_indices(&self) -> &[usize] {
        &self.nonconvex
    }

    /// The spectrum `m_A` drawn for the aggregate `Ā` (empty for hand-built games).
    pub fn sampled_m_a(&self) -> &[f64] {
        &self.sampled_m_a
    }

    /// Aggregate objective `F(x, y)`.
    pub fn objective(&self, x: &[f64], y: &[f64]) -> f64 {
        quad_objective(
            &self.a_bar,
            &self.b_bar,
            &self.c_bar,
            &self.u_bar,
            &self.v_bar,
            x,
            y,
        )
    }

    /// Component objective `f_i(x, y)`.
    pub fn component_objective(&self, i: usize, x: &[f64], y: &[f64]) -> f64 {
        quad_objective(
            &self.a[i], &self.b[i], &self.c[i], &self.u[i], &self.v[i], x, y,
        )
    }
}

fn quad_objective(
    a: &Matrix,
    b: &Matrix,
    c: &Matrix,
    u: &[f64],
    v: &[f64],
    x: &[f64],
    y: &[f64],
) -> f64 {
    let dot = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(s, t)| s * t).sum::<f64>();
    0.5 * dot(x, &a.matvec(x)) + dot(x, &b.matvec(y))
        - 0.5 * dot(y, &c.matvec(y))
        - dot(u, x)
        - dot(v, y)
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// columns of `Q` flipped to make `diag(R)` positive.
pub fn haar_orthogonal(d: usize, rng: &mut SeedStream) -> Result<Matrix> {
    let g = Matrix::from_row_major(d, d, (0..d * d).map(|_| rng.normal()).collect())?;
    let (mut q, r) = qr(&g)?;
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            for i in 0..d {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    Ok(q)
}

/// `O_left diag(s) O_rightᵀ` with `s` placed on the leading diagonal.
fn compose(left: &Matrix, s: &[f64], right: &Matrix) -> Matrix {
    let (r, c) = (left.rows(), right.rows());
    let mut out = Matrix::zeros(r, c);
    for i in 0..r {
        for j in 0..c {
            out[(i, j)] = s
                .iter()
                .enumerate()
                .map(|(k, sk)| left[(i, k)] * sk * right[(j, k)])
                .sum();
        }
    }
    out
}

fn uniform_vec(rng: &mut SeedStream, len: usize, lo: f64) -> Vec<f64> {
    (0..len).map(|_| rng.uniform_in(lo, 2.0 * lo)).collect()
}

/// Per-component spectra: `-δ` on the nonconvex indices and
/// `(n·m + c·δ)/(n − c)` elsewhere, so that the average is exactly `m`.
fn component_spectra(n: usize, nonconvex: &[bool], m: &[f64], delta: &[f64]) -> Vec<Vec<f64>> {
    let c = nonconvex.iter().filter(|&&b| b).count() as f64;
    let nf = n as f64;
    let neg: Vec<f64> = delta.iter().map(|d| -d).collect();
    let pos: Vec<f64> = m
        .iter()
        .zip(delta)
        .map(|(mi, di)| (nf * mi + c * di) / (nf - c))
        .collect();
    nonconvex
        .iter()
        .map(|&nc| if nc { neg.clone() } else { pos.clone() })
        .collect()
}

/// Samples a random finite-sum quadratic game.
///
/// Draw order from the seeded stream: nonconvex index set; `O_A`, `m_A`, `δ_A`;
/// `O_B`, `O_B'`, `m_B`, `δ_B`; `O_C`, `m_C`, `δ_C`; `δ_u`; `δ_v`.
pub fn generate_quadratic_game(cfg: &GameGenConfig) -> Result<QuadraticGame> {
    cfg.validate()?;
    let (n, dx, dy) = (cfg.n, cfg.dx, cfg.dy);
    let mut rng = SeedStream::new(cfg.seed);
    let chosen = rng.choose_distinct(n, cfg.nonconvex_count);
    let mut is_nc = vec![false; n];
    for &i in &chosen {
        is_nc[i] = true;
    }

    let o_a = haar_orthogonal(dx, &mut rng)?;
    let m_a = uniform_vec(&mut rng, dx, cfg.mu_a);
    let delta_a = uniform_vec(&mut rng, dx, cfg.mu_delta);

    let rank = dx.min(dy);
    let o_b = haar_orthogonal(dx, &mut rng)?;
    let o_b2 = haar_orthogonal(dy, &mut rng)?;
    let m_b = uniform_vec(&mut rng, rank, cfg.mu_b);
    let delta_b = uniform_vec(&mut rng, rank, cfg.mu_delta);

    let o_c = haar_orthogonal(dy, &mut rng)?;
    let m_c = uniform_vec(&mut rng, dy, cfg.mu_c);
    let delta_c = uniform_vec(&mut rng, dy, cfg.mu_delta);

    let delta_u = uniform_vec(&mut rng, dx, cfg.mu_delta);
    let delta_v = uniform_vec(&mut rng, dy, cfg.mu_delta);

    let spec_a = component_spectra(n, &is_nc, &m_a, &delta_a);
    let spec_b = component_spectra(n, &is_nc, &m_b, &delta_b);
    let spec_c = component_spectra(n, &is_nc, &m_c, &delta_c);

    let c_count = cfg.nonconvex_count as f64;
    let pos_weight = c_count / (n as f64 - c_count);
    let linear = |delta: &[f64], nc: bool| -> Vec<f64> {
        if nc {
            delta.iter().map(|d| -d).collect()
        } else {
            delta.iter().map(|d| d * pos_weight).collect()
        }
    };

    let a: Vec<Matrix> = spec_a.iter().map(|s| compose(&o_a, s, &o_a)).collect();
    let b: Vec<Matrix> = spec_b.iter().map(|s| compose(&o_b, s, &o_b2)).collect();
    let c: Vec<Matrix> = spec_c.iter().map(|s| compose(&o_c, s, &o_c)).collect();
    let u: Vec<Vec<f64>> = is_nc.iter().map(|&nc| linear(&delta_u, nc)).collect();
    let v: Vec<Vec<f64>> = is_nc.iter().map(|&nc| linear(&delta_v, nc)).collect();

    let game = build_generated(a, b, c, u, v, cfg.seed, chosen, m_a)?;
    Ok(game)
}

#[allow(clippy::too_many_arguments)]
fn build_generated(
    a: Vec<Matrix>,
    b: Vec<Matrix>,
    c: Vec<Matrix>,
    u: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    seed: u64,
    nonconvex: Vec<usize>,
    m_a: Vec<f64>,
) -> Result<QuadraticGame> {
    let n = a.len() as f64;
    let dx = a[0].rows();
    let dy = c[0].rows();
    // Positive definiteness of the aggregates is checked before assembly so the
    // error names the block rather than surfacing as a singular solve.
    for (block, ms) in [("A", &a), ("C", &c)] {
        let mut s = Matrix::zeros(ms[0].rows(), ms[0].cols());
        for m in ms.iter() {
            s = s.add(m)?;
        }
        let min_eig = symmetric_eigen(&s.scale(1.0 / n))?.0[0];
        if min_eig <= 0.0 {
            return Err(Error::Generation { block, min_eig });
        }
    }
    QuadraticGame::assemble(
        a,
        b,
        c,
        u,
        v,
        Some(Point::zeros(dx + dy)),
        Some(seed),
        nonconvex,
        m_a,
    )
}

/// Best response `y*(x) = argmax_y F(x, y)` and `Φ(x) = F(x, y*(x))`.
pub fn quadratic_best_response(game: &QuadraticGame, x: &Point) -> Result<(Point, f64)> {
    check_dim(game.dx, x.dim())?;
    // ∇_y F = B̄ᵀx − C̄y − v̄ = 0
    let mut rhs = game.b_bar.transpose().matvec(x.as_slice());
    for (r, v) in rhs.iter_mut().zip(&game.v_bar) {
        *r -= v;
    }
    let y = game.c_bar_lu.solve(&rhs);
    let phi = game.objective(x.as_slice(), &y);
    if !phi.is_finite() {
        return Err(Error::Numerical("best response is not finite".into()));
    }
    Ok((Point::new(y)?, phi))
}

/// Single-component bilinear instance `ν(z) = M z`,
/// `M = [[μ, l−μ], [μ−l, μ]]`, with root at the origin.
pub fn bilinear_lower_bound_instance(mu: f64, ell: f64) -> Result<AffineFiniteSum> {
    if !(mu > 0.0 && ell > mu && ell.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "need ell > mu > 0, got mu={mu}, ell={ell}"
        )));
    }
    let m = Matrix::from_rows(&[vec![mu, ell - mu], vec![mu - ell, mu]])?;
    AffineFiniteSum::new((1, 1), vec![m], vec![vec![0.0, 0.0]])?.with_constants(Constants {
        lipschitz: Some(ell),
        strong_monotonicity: Some(mu),
        known_root: Some(Point::zeros(2)),
        grad_var_at_root: Some(0.0),
        ..Constants::default()
    })
}

/// Saddle set given as `{⟨a, x⟩ = 0, ⟨b, y⟩ = 0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperplaneSaddleSet {
    pub x_normal: Vec<f64>,
    pub y_normal: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Unbounded2pl {
    pub operator: AffineFiniteSum,
    pub saddle_set: HyperplaneSaddleSet,
}

/// `f(x, y) = (x₁+x₂)²/2 − (y₁+y₂)²/2`: two-sided PŁ with constants 2 and 2
/// and a saddle set that is a pair of hyperplanes.
pub fn unbounded_2pl_instance() -> Unbounded2pl {
    let m = Matrix::from_rows(&[
        vec![1.0, 1.0, 0.0, 0.0],
        vec![1.0, 1.0, 0.0, 0.0],
        vec![0.0, 0.0, 1.0, 1.0],
        vec![0.0, 0.0, 1.0, 1.0],
    ])
    .expect("static shape");
    let operator = AffineFiniteSum::new((2, 2), vec![m], vec![vec![0.0; 4]])
        .and_then(|op| {
            op.with_constants(Constants {
                lipschitz: Some(2.0),
                pl1: Some(2.0),
                pl2: Some(2.0),
                known_root: Some(Point::zeros(4)),
                grad_var_at_root: Some(0.0),
                ..Constants::default()
            })
        })
        .expect("static instance");
    Unbounded2pl {
        operator,
        saddle_set: HyperplaneSaddleSet {
            x_normal: vec![1.0, 1.0],
            y_normal: vec![1.0, 1.0],
        },
    }
}

impl Unbounded2pl {
    pub fn objective(&self, x: &[f64], y: &[f64]) -> f64 {
        let s = x[0] + x[1];
        let t = y[0] + y[1];
        0.5 * s * s - 0.5 * t * t
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct GameDocument {
    n: usize,
    dx: usize,
    dy: usize,
    seed: Option<u64>,
    encoding: String,
    a: Vec<Vec<String>>,
    b: Vec<Vec<String>>,
    c: Vec<Vec<String>>,
    u: Vec<Vec<String>>,
    v: Vec<Vec<String>>,
}

const BITS_ENCODING: &str = "f64-bits-hex";

fn encode(vals: &[f64]) -> Vec<String> {
    vals.iter()
        .map(|v| format!("{:016x}", v.to_bits()))
        .collect()
}

fn decode(vals: &[String]) -> Result<Vec<f64>> {
    vals.iter()
        .map(|s| {
            u64::from_str_radix(s, 16)
                .map(f64::from_bits)
                .map_err(|e| Error::Parse(format!("bad f64 bit pattern {s:?}: {e}")))
        })
        .collect()
}

impl QuadraticGame {
    /// Serializes every component as raw IEEE-754 bit patterns (hex), row-major.
    pub fn to_json(&self) -> Result<String> {
        let mats = |ms: &[Matrix]| ms.iter().map(|m| encode(m.as_slice())).collect();
        let vecs = |vs: &[Vec<f64>]| vs.iter().map(|v| encode(v)).collect();
        let doc = GameDocument {
            n: self.n(),
            dx: self.dx,
            dy: self.dy,
            seed: self.seed,
            encoding: BITS_ENCODING.into(),
            a: mats(&self.a),
            b: mats(&self.b),
            c: mats(&self.c),
            u: vecs(&self.u),
            v: vecs(&self.v),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: GameDocument = serde_json::from_str(text)?;
        if doc.encoding != BITS_ENCODING {
            return Err(Error::Parse(format!(
                "unsupported encoding {:?}",
                doc.encoding
            )));
        }
        let mats = |raw: &[Vec<String>], r: usize, c: usize| -> Result<Vec<Matrix>> {
            raw.iter()
                .map(|m| Matrix::from_row_major(r, c, decode(m)?))
                .collect()
        };
        let vecs = |raw: &[Vec<String>]| -> Result<Vec<Vec<f64>>> {
            raw.iter().map(|v| decode(v)).collect()
        };
        let a = mats(&doc.a, doc.dx, doc.dx)?;
        let b = mats(&doc.b, doc.dx, doc.dy)?;
        let c = mats(&doc.c, doc.dy, doc.dy)?;
        let u = vecs(&doc.u)?;
        let v = vecs(&doc.v)?;
        check_dim(doc.n, a.len())?;
        let mut game = Self::from_components(a, b, c, u, v)?;
        game.seed = doc.seed;
        Ok(game)
    }
}
