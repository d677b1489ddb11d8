//! Cubic radial basis function interpolant with a linear polynomial tail.
//!
//! `f(x) = Σ_j ω_j ‖x − c_j‖³ + βᵀx + α`, trained by solving the augmented
//! system `[Φ P; Pᵀ 0] [ω; β; α] = [f; 0]` with `P = [C | 1]`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RbfError {
    #[error("need at least {needed} distinct points for dimension {dim}, got {got}")]
    TooFewPoints { needed: usize, got: usize, dim: usize },
    #[error("interpolation system is singular")]
    SingularSystem,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
}

/// Relative residual accepted from the linear solve.
const SOLVE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct RbfModel {
    dim: usize,
    /// Centers, row-major, shifted by `origin`.
    centers: Vec<f64>,
    /// The same centers, dimension-major (`columns[d * k + j]`).
    columns: Vec<f64>,
    origin: Vec<f64>,
    weights: Vec<f64>,
    beta: Vec<f64>,
    /// Constant term in shifted coordinates.
    alpha_shifted: f64,
    ridge: f64,
}

#[inline]
fn cubic(r2: f64) -> f64 {
    r2 * r2.sqrt()
}

/// Dot product with four running sums.
#[inline(always)]
fn dot4(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Merges exact duplicates: first occurrence keeps its position, values are averaged.
fn dedup(points: &[Vec<f64>], values: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut pts: Vec<Vec<f64>> = Vec::new();
    let mut sums: Vec<(f64, usize)> = Vec::new();
    for (p, &v) in points.iter().zip(values) {
        let key: Vec<u64> = p.iter().map(|x| (x + 0.0).to_bits()).collect();
        match index.get(&key) {
            Some(&k) => {
                sums[k].0 += v;
                sums[k].1 += 1;
            }
            None => {
                index.insert(key, pts.len());
                pts.push(p.clone());
                sums.push((v, 1));
            }
        }
    }
    let vals = sums.into_iter().map(|(s, c)| s / c as f64).collect();
    (pts, vals)
}

/// Fits the interpolant. Requires at least `n + 2` distinct points in `n` dimensions.
pub fn train_rbf(points: &[Vec<f64>], values: &[f64]) -> Result<RbfModel, RbfError> {
    if points.len() != values.len() {
        return Err(RbfError::DimensionMismatch {
            expected: points.len(),
            actual: values.len(),
        });
    }
    let dim = points.first().map_or(0, Vec::len);
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(RbfError::DimensionMismatch {
            expected: dim,
            actual: p.len(),
        });
    }
    let (points, values) = dedup(points, values);
    let k = points.len();
    if dim == 0 || k < dim + 2 {
        return Err(RbfError::TooFewPoints {
            needed: dim + 2,
            got: k,
            dim,
        });
    }

    let mut origin = vec![0.0; dim];
    for p in &points {
        for (o, x) in origin.iter_mut().zip(p) {
            *o += x;
        }
    }
    origin.iter_mut().for_each(|o| *o /= k as f64);
    let centers: Vec<f64> = points
        .iter()
        .flat_map(|p| p.iter().zip(&origin).map(|(x, o)| x - o))
        .collect();

    if affine_rank(&centers, k, dim) < dim {
        return Err(RbfError::SingularSystem);
    }

    let size = k + dim + 1;
    let mut a = DMatrix::<f64>::zeros(size, size);
    let mut scale = 0.0;
    for i in 0..k {
        let ci = &centers[i * dim..(i + 1) * dim];
        for j in 0..i {
            let cj = &centers[j * dim..(j + 1) * dim];
            let r2: f64 = ci.iter().zip(cj).map(|(x, y)| (x - y) * (x - y)).sum();
            let phi = cubic(r2);
            a[(i, j)] = phi;
            a[(j, i)] = phi;
            scale += 2.0 * phi;
        }
        for d in 0..dim {
            a[(i, k + d)] = ci[d];
            a[(k + d, i)] = ci[d];
        }
        a[(i, k + dim)] = 1.0;
        a[(k + dim, i)] = 1.0;
    }
    scale /= (k * k) as f64;
    if scale == 0.0 {
        scale = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(size);
    for (i, &v) in values.iter().enumerate() {
        rhs[i] = v;
    }

    let mut ridge = 0.0;
    let mut factor = 1e-10;
    loop {
        let mut m = a.clone();
        for i in 0..k {
            m[(i, i)] += ridge;
        }
        if let Some(sol) = solve_checked(&m, &rhs) {
            let weights = sol.rows(0, k).iter().copied().collect();
            let beta = sol.rows(k, dim).iter().copied().collect();
            let alpha_shifted = sol[k + dim];
            let mut columns = vec![0.0; k * dim];
            for (j, c) in centers.chunks_exact(dim).enumerate() {
                for (d, &v) in c.iter().enumerate() {
                    columns[d * k + j] = v;
                }
            }
            return Ok(RbfModel {
                dim,
                centers,
                columns,
                origin,
                weights,
                beta,
                alpha_shifted,
                ridge,
            });
        }
        if factor > 1e-4 {
            return Err(RbfError::SingularSystem);
        }
        ridge = factor * scale;
        factor *= 10.0;
    }
}

/// Rank of the centered point cloud; below `dim` means the points lie in a
/// proper affine subspace and the linear tail is not identifiable.
fn affine_rank(centers: &[f64], k: usize, dim: usize) -> usize {
    let m = DMatrix::from_row_slice(k, dim, centers);
    let sv = m.singular_values();
    let top = sv.max();
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > top * 1e-10).count()
}

fn solve_checked(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let sol = m.clone().lu().solve(rhs)?;
    if !sol.iter().all(|v| v.is_finite()) {
        return None;
    }
    let residual = (m * &sol - rhs).amax();
    let reference = rhs.amax() + (m.amax() * sol.amax()) * f64::EPSILON * m.nrows() as f64;
    (residual <= SOLVE_TOLERANCE * (reference + 1.0)).then_some(sol)
}

/// Refits an interpolant as points are appended, updating the inverse of the
/// system by bordering instead of factoring it again. Any other change to the
/// data falls back to [`train_rbf`].
#[derive(Debug, Clone, Default)]
pub struct IncrementalRbf {
    state: Option<Bordered>,
}

#[derive(Debug, Clone)]
struct Bordered {
    dim: usize,
    origin: Vec<f64>,
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
    /// Shifted centers, row-major.
    centers: Vec<f64>,
    /// System ordered as `[tail; centers]`: the first `dim + 1` rows are `Pᵀ`.
    matrix: DMatrix<f64>,
    inverse: DMatrix<f64>,
}

impl IncrementalRbf {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fit(&mut self, points: &[Vec<f64>], values: &[f64]) -> Result<RbfModel, RbfError> {
        if let Some(state) = self.state.as_mut() {
            if state.extends(points, values) {
                if let Some(model) = state.append(&points[points.len() - 1], values[values.len() - 1]) {
                    return Ok(model);
                }
            }
        }
        self.state = None;
        let model = train_rbf(points, values)?;
        if model.ridge == 0.0 && model.center_count() == points.len() {
            self.state = Bordered::from_model(&model, points, values);
        }
        Ok(model)
    }
}

impl Bordered {
    fn from_model(model: &RbfModel, points: &[Vec<f64>], values: &[f64]) -> Option<Self> {
        let (dim, k) = (model.dim, model.center_count());
        let tail = dim + 1;
        let mut matrix = DMatrix::<f64>::zeros(tail + k, tail + k);
        for i in 0..k {
            let ci = &model.centers[i * dim..(i + 1) * dim];
            for j in 0..i {
                let cj = &model.centers[j * dim..(j + 1) * dim];
                let phi = cubic(ci.iter().zip(cj).map(|(x, y)| (x - y) * (x - y)).sum());
                matrix[(tail + i, tail + j)] = phi;
                matrix[(tail + j, tail + i)] = phi;
            }
            for d in 0..dim {
                matrix[(d, tail + i)] = ci[d];
                matrix[(tail + i, d)] = ci[d];
            }
            matrix[(dim, tail + i)] = 1.0;
            matrix[(tail + i, dim)] = 1.0;
        }
        let inverse = matrix.clone().try_inverse()?;
        Some(Bordered {
            dim,
            origin: model.origin.clone(),
            points: points.to_vec(),
            values: values.to_vec(),
            centers: model.centers.clone(),
            matrix,
            inverse,
        })
    }

    fn extends(&self, points: &[Vec<f64>], values: &[f64]) -> bool {
        let k = self.points.len();
        points.len() == k + 1
            && values.len() == k + 1
            && points[k].len() == self.dim
            && points[..k] == self.points[..]
            && values[..k] == self.values[..]
    }

    fn append(&mut self, point: &[f64], value: f64) -> Option<RbfModel> {
        if self.points.iter().any(|p| p == point) {
            return None;
        }
        let (dim, tail) = (self.dim, self.dim + 1);
        let s = self.matrix.nrows();
        let x: Vec<f64> = point.iter().zip(&self.origin).map(|(a, o)| a - o).collect();
        let mut b = DVector::<f64>::zeros(s);
        b.rows_mut(0, dim).copy_from_slice(&x);
        b[dim] = 1.0;
        for (j, c) in self.centers.chunks_exact(dim).enumerate() {
            b[tail + j] = cubic(c.iter().zip(&x).map(|(a, y)| (a - y) * (a - y)).sum());
        }
        let u = &self.inverse * &b;
        let sigma = -b.dot(&u);
        if !sigma.is_finite() || sigma == 0.0 {
            return None;
        }

        let mut matrix = self.matrix.clone().resize(s + 1, s + 1, 0.0);
        matrix.view_mut((0, s), (s, 1)).copy_from(&b);
        matrix.view_mut((s, 0), (1, s)).copy_from(&b.transpose());
        let mut inverse = self.inverse.clone().resize(s + 1, s + 1, 0.0);
        inverse.view_mut((0, 0), (s, s)).ger(1.0 / sigma, &u, &u, 1.0);
        let edge = &u * (-1.0 / sigma);
        inverse.view_mut((0, s), (s, 1)).copy_from(&edge);
        inverse.view_mut((s, 0), (1, s)).copy_from(&edge.transpose());
        inverse[(s, s)] = 1.0 / sigma;

        let mut rhs = DVector::<f64>::zeros(s + 1);
        for (i, &v) in self.values.iter().chain(std::iter::once(&value)).enumerate() {
            rhs[tail + i] = v;
        }
        let sol = &inverse * &rhs;
        if !sol.iter().all(|v| v.is_finite()) {
            return None;
        }
        let residual = (&matrix * &sol - &rhs).amax();
        let reference = rhs.amax() + (matrix.amax() * sol.amax()) * f64::EPSILON * (s + 1) as f64;
        if residual > SOLVE_TOLERANCE * (reference + 1.0) {
            return None;
        }

        self.points.push(point.to_vec());
        self.values.push(value);
        self.centers.extend_from_slice(&x);
        self.matrix = matrix;
        self.inverse = inverse;
        let k = self.points.len();
        let mut columns = vec![0.0; k * dim];
        for (j, c) in self.centers.chunks_exact(dim).enumerate() {
            for (d, &v) in c.iter().enumerate() {
                columns[d * k + j] = v;
            }
        }
        Some(RbfModel {
            dim,
            centers: self.centers.clone(),
            columns,
            origin: self.origin.clone(),
            weights: sol.rows(tail, k).iter().copied().collect(),
            beta: sol.rows(0, dim).iter().copied().collect(),
            alpha_shifted: sol[dim],
            ridge: 0.0,
        })
    }
}

impl RbfModel {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn center_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// Constant term of the tail in the caller's coordinates.
    pub fn alpha(&self) -> f64 {
        self.alpha_shifted - self.beta.iter().zip(&self.origin).map(|(b, o)| b * o).sum::<f64>()
    }

    /// Center `j` in the caller's coordinates.
    pub fn center(&self, j: usize) -> Vec<f64> {
        self.centers[j * self.dim..(j + 1) * self.dim]
            .iter()
            .zip(&self.origin)
            .map(|(c, o)| c + o)
            .collect()
    }

    /// Ridge added to the kernel diagonal during training (0 when none was needed).
    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64, RbfError> {
        if x.len() != self.dim {
            return Err(RbfError::DimensionMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        Ok(self.value(x))
    }

    /// Predictions for many points at once; every point must have length `dim()`.
    /// Distances come from one matrix product, `‖c‖² + ‖x‖² − 2 cᵀx`.
    pub fn values(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.dim * xs.len());
        for x in xs {
            assert_eq!(x.len(), self.dim);
            flat.extend_from_slice(x);
        }
        self.values_columns(&DMatrix::from_vec(self.dim, xs.len(), flat))
    }

    /// [`RbfModel::values`] with one point per matrix column.
    pub fn values_columns(&self, xs: &DMatrix<f64>) -> Vec<f64> {
        assert_eq!(xs.nrows(), self.dim);
        #[cfg(target_arch = "x86_64")]
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: AVX2 support was just checked.
            return unsafe { self.values_avx2(xs) };
        }
        self.values_portable(xs)
    }

    /// Same arithmetic in the same order, compiled with wider vectors.
    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    fn values_avx2(&self, xs: &DMatrix<f64>) -> Vec<f64> {
        self.values_portable(xs)
    }

    #[inline(always)]
    fn values_portable(&self, xs: &DMatrix<f64>) -> Vec<f64> {
        let (dim, k) = (self.dim, self.weights.len());
        let mut shifted = xs.clone();
        for col in shifted.as_mut_slice().chunks_exact_mut(dim.max(1)) {
            for (s, o) in col.iter_mut().zip(&self.origin) {
                *s -= o;
            }
        }
        let centers = DMatrix::from_column_slice(k, dim, &self.columns);
        let cross = centers * &shifted;
        let norms: Vec<f64> = self.centers.chunks_exact(dim).map(|c| c.iter().map(|v| v * v).sum()).collect();
        let mut r2 = vec![0.0; k];
        shifted
            .as_slice()
            .chunks_exact(dim.max(1))
            .zip(cross.as_slice().chunks_exact(k.max(1)))
            .map(|(x, dots)| {
                let xx: f64 = x.iter().map(|v| v * v).sum();
                let mut total = self.alpha_shifted;
                for (b, v) in self.beta.iter().zip(x) {
                    total += b * v;
                }
                for ((r, cc), dot) in r2.iter_mut().zip(&norms).zip(dots) {
                    *r = cubic((cc + xx - 2.0 * dot).max(0.0));
                }
                total + dot4(&self.weights, &r2)
            })
            .collect()
    }

    /// Unchecked prediction; `x` must have length `dim()`.
    pub fn value(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let mut shifted = [0.0f64; 64];
        let local: Vec<f64>;
        let xs: &[f64] = if self.dim <= shifted.len() {
            for (s, (a, o)) in shifted.iter_mut().zip(x.iter().zip(&self.origin)) {
                *s = a - o;
            }
            &shifted[..self.dim]
        } else {
            local = x.iter().zip(&self.origin).map(|(a, o)| a - o).collect();
            &local
        };
        let mut total = self.alpha_shifted;
        for (b, v) in self.beta.iter().zip(xs) {
            total += b * v;
        }
        // blocks of centers, accumulated one dimension at a time so the inner
        // loop runs across centers
        const BLOCK: usize = 64;
        let k = self.weights.len();
        let mut r2 = [0.0f64; BLOCK];
        for start in (0..k).step_by(BLOCK) {
            let len = BLOCK.min(k - start);
            let r2 = &mut r2[..len];
            r2.fill(0.0);
            for (d, &xd) in xs.iter().enumerate() {
                let col = &self.columns[d * k + start..d * k + start + len];
                for (acc, &c) in r2.iter_mut().zip(col) {
                    let diff = c - xd;
                    *acc += diff * diff;
                }
            }
            for (w, &r) in self.weights[start..start + len].iter().zip(r2.iter()) {
                total += w * cubic(r);
            }
        }
        total
    }
}
