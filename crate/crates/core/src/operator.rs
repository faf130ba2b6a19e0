//! Points, permutations and finite-sum gradient operators.
//!
//! A finite-sum operator is a collection of `n` component fields `ω_i`
//! on `R^d`, `d = d_x + d_y`, whose average `ν = (1/n) Σ ω_i` is the operator
//! whose root is sought. For minimax problems `ω_i = [∇_x f_i, -∇_y f_i]`.

use crate::error::{check_dim, Error, Result};
use crate::linalg::Matrix;

/// A dense vector with finite coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidInput(
                "a point needs at least one coordinate".into(),
            ));
        }
        if let Some(i) = coords.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("coordinate {i} is not finite")));
        }
        Ok(Self(coords))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm_sq(&self) -> f64 {
        norm_sq(&self.0)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dist_sq(&self, other: &Point) -> f64 {
        dist_sq(&self.0, &other.0)
    }

    pub fn scaled(&self, s: f64) -> Result<Point> {
        Point::new(self.0.iter().map(|v| v * s).collect())
    }
}

impl std::ops::Index<usize> for Point {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// A point split into its minimization block `x` and maximization block `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedPoint {
    pub x: Point,
    pub y: Point,
}

impl PartitionedPoint {
    pub fn new(x: Point, y: Point) -> Self {
        Self { x, y }
    }

    pub fn split(z: &Point, dx: usize) -> Result<Self> {
        if dx == 0 || dx >= z.dim() {
            return Err(Error::InvalidInput(format!(
                "cannot split a {}-dimensional point at {dx}",
                z.dim()
            )));
        }
        let (x, y) = z.as_slice().split_at(dx);
        Ok(Self {
            x: Point(x.to_vec()),
            y: Point(y.to_vec()),
        })
    }

    pub fn concat(&self) -> Point {
        let mut v = self.x.0.clone();
        v.extend_from_slice(&self.y.0);
        Point(v)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.x.dim(), self.y.dim())
    }

    pub fn norm_sq(&self) -> f64 {
        self.x.norm_sq() + self.y.norm_sq()
    }
}

/// A bijection on `{0, …, n-1}`; entry `j` is the index used at slot `j`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(mapping: Vec<usize>) -> Result<Self> {
        let n = mapping.len();
        let mut seen = vec![false; n];
        for &i in &mapping {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidInput(format!(
                    "{mapping:?} is not a permutation of 0..{n}"
                )));
            }
        }
        Ok(Self(mapping))
    }

    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }

    pub fn apply(&self, j: usize) -> usize {
        self.0[j]
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (j, &i) in self.0.iter().enumerate() {
            inv[i] = j;
        }
        Self(inv)
    }
}

/// Problem constants that are known in closed form. Each entry is optional.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Constants {
    /// Component Lipschitz constant `l`.
    pub lipschitz: Option<f64>,
    /// Strong monotonicity `μ` of the aggregate.
    pub strong_monotonicity: Option<f64>,
    /// PŁ constant of `F(·, y)`.
    pub pl1: Option<f64>,
    /// PŁ constant of `-F(x, ·)`.
    pub pl2: Option<f64>,
    pub known_root: Option<Point>,
    /// `σ*² = (1/n) Σ ‖ω_i(z*)‖²`.
    pub grad_var_at_root: Option<f64>,
}

impl Constants {
    pub fn require_lipschitz(&self) -> Result<f64> {
        self.lipschitz
            .ok_or_else(|| Error::Config("operator has no known Lipschitz constant".into()))
    }

    pub fn require_strong_monotonicity(&self) -> Result<f64> {
        self.strong_monotonicity
            .ok_or_else(|| Error::Config("operator has no known strong monotonicity".into()))
    }

    pub fn require_root(&self) -> Result<&Point> {
        self.known_root
            .as_ref()
            .ok_or_else(|| Error::Config("operator has no known root".into()))
    }
}

/// View of a component registered as affine, `ω(z) = M z + b`.
#[derive(Debug, Clone, Copy)]
pub struct AffineComponent<'a> {
    pub matrix: &'a Matrix,
    pub offset: &'a [f64],
}

/// A finite-sum operator. Evaluation is read-only and thread-safe.
pub trait FiniteSum: Send + Sync {
    fn n(&self) -> usize;

    /// Block dimensions `(d_x, d_y)`.
    fn dims(&self) -> (usize, usize);

    fn dim(&self) -> usize {
        let (dx, dy) = self.dims();
        dx + dy
    }

    /// Writes `ω_i(z)` into `out`. Both slices have length `dim()`.
    fn component_into(&self, i: usize, z: &[f64], out: &mut [f64]);

    fn constants(&self) -> &Constants;

    fn affine_component(&self, _i: usize) -> Option<AffineComponent<'_>> {
        None
    }

    fn is_affine(&self) -> bool {
        (0..self.n()).all(|i| self.affine_component(i).is_some())
    }
}

/// `ω_i(z)` with dimension checking.
pub fn component_grad(op: &dyn FiniteSum, i: usize, z: &Point) -> Result<Point> {
    check_dim(op.dim(), z.dim())?;
    if i >= op.n() {
        return Err(Error::InvalidInput(format!(
            "component {i} out of range 0..{}",
            op.n()
        )));
    }
    let mut out = vec![0.0; op.dim()];
    op.component_into(i, z.as_slice(), &mut out);
    Ok(Point(out))
}

/// `ν(z) = (1/n) Σ ω_i(z)`, summed in ascending index order.
pub fn aggregate(op: &dyn FiniteSum, z: &Point) -> Result<Point> {
    check_dim(op.dim(), z.dim())?;
    let d = op.dim();
    let mut sum = vec![0.0; d];
    let mut buf = vec![0.0; d];
    for i in 0..op.n() {
        op.component_into(i, z.as_slice(), &mut buf);
        for (s, b) in sum.iter_mut().zip(&buf) {
            *s += b;
        }
    }
    let inv_n = 1.0 / op.n() as f64;
    Ok(Point(sum.into_iter().map(|s| s * inv_n).collect()))
}

/// `(1/n) Σ ‖ω_i(z) - ν(z)‖²`.
pub fn gradient_variance(op: &dyn FiniteSum, z: &Point) -> Result<f64> {
    let mean = aggregate(op, z)?;
    let mut buf = vec![0.0; op.dim()];
    let mut total = 0.0;
    for i in 0..op.n() {
        op.component_into(i, z.as_slice(), &mut buf);
        total += dist_sq(&buf, mean.as_slice());
    }
    Ok(total / op.n() as f64)
}

/// Operator with affine components `ω_i(z) = M_i z + b_i`.
#[derive(Debug, Clone)]
pub struct AffineFiniteSum {
    dims: (usize, usize),
    matrices: Vec<Matrix>,
    offsets: Vec<Vec<f64>>,
    constants: Constants,
}

impl AffineFiniteSum {
    pub fn new(
        dims: (usize, usize),
        matrices: Vec<Matrix>,
        offsets: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let d = dims.0 + dims.1;
        if dims.0 == 0 || dims.1 == 0 {
            return Err(Error::InvalidInput(
                "both blocks need positive dimension".into(),
            ));
        }
        if matrices.is_empty() || matrices.len() != offsets.len() {
            return Err(Error::InvalidInput(format!(
                "need a matching nonempty set of matrices and offsets (got {} and {})",
                matrices.len(),
                offsets.len()
            )));
        }
        for (m, b) in matrices.iter().zip(&offsets) {
            check_dim(d, m.rows())?;
            check_dim(d, m.cols())?;
            check_dim(d, b.len())?;
        }
        Ok(Self {
            dims,
            matrices,
            offsets,
            constants: Constants::default(),
        })
    }

    /// Attaches known constants, validating that a supplied root really is one.
    pub fn with_constants(mut self, constants: Constants) -> Result<Self> {
        if let Some(root) = &constants.known_root {
            let nu = aggregate(&self, root)?;
            let tol = 1e-9 * root.norm().max(1.0);
            if nu.norm() > tol {
                return Err(Error::InvalidInput(format!(
                    "declared root has residual {:e} > {tol:e}",
                    nu.norm()
                )));
            }
        }
        self.constants = constants;
        Ok(self)
    }

    pub fn matrices(&self) -> &[Matrix] {
        &self.matrices
    }

    pub fn offsets(&self) -> &[Vec<f64>] {
        &self.offsets
    }

    /// Aggregate matrix `(1/n) Σ M_i` and offset `(1/n) Σ b_i`.
    pub fn aggregate_affine(&self) -> (Matrix, Vec<f64>) {
        let d = self.dim();
        let n = self.matrices.len() as f64;
        let mut m = Matrix::zeros(d, d);
        let mut b = vec![0.0; d];
        for (mi, bi) in self.matrices.iter().zip(&self.offsets) {
            m = m.add(mi).expect("validated shapes");
            for (s, v) in b.iter_mut().zip(bi) {
                *s += v;
            }
        }
        (m.scale(1.0 / n), b.into_iter().map(|v| v / n).collect())
    }
}

impl FiniteSum for AffineFiniteSum {
    fn n(&self) -> usize {
        self.matrices.len()
    }

    fn dims(&self) -> (usize, usize) {
        self.dims
    }

    #[inline]
    fn component_into(&self, i: usize, z: &[f64], out: &mut [f64]) {
        self.matrices[i].matvec_into(z, out);
        for (o, b) in out.iter_mut().zip(&self.offsets[i]) {
            *o += b;
        }
    }

    fn constants(&self) -> &Constants {
        &self.constants
    }

    fn affine_component(&self, i: usize) -> Option<AffineComponent<'_>> {
        Some(AffineComponent {
            matrix: &self.matrices[i],
            offset: &self.offsets[i],
        })
    }
}

type ComponentFn = dyn Fn(usize, &[f64], &mut [f64]) + Send + Sync;

/// Operator whose components are given by a closure.
pub struct FnFiniteSum {
    n: usize,
    dims: (usize, usize),
    f: Box<ComponentFn>,
    constants: Constants,
}

impl FnFiniteSum {
    pub fn new(
        n: usize,
        dims: (usize, usize),
        f: impl Fn(usize, &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Result<Self> {
        if n == 0 || dims.0 == 0 || dims.1 == 0 {
            return Err(Error::InvalidInput(
                "component count and block dims must be positive".into(),
            ));
        }
        Ok(Self {
            n,
            dims,
            f: Box::new(f),
            constants: Constants::default(),
        })
    }

    pub fn with_constants(mut self, constants: Constants) -> Self {
        self.constants = constants;
        self
    }
}

impl std::fmt::Debug for FnFiniteSum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FnFiniteSum")
            .field("n", &self.n)
            .field("dims", &self.dims)
            .finish_non_exhaustive()
    }
}

impl FiniteSum for FnFiniteSum {
    fn n(&self) -> usize {
        self.n
    }

    fn dims(&self) -> (usize, usize) {
        self.dims
    }

    fn component_into(&self, i: usize, z: &[f64], out: &mut [f64]) {
        (self.f)(i, z, out)
    }

    fn constants(&self) -> &Constants {
        &self.constants
    }
}

#[inline]
pub(crate) fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

#[inline]
pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
