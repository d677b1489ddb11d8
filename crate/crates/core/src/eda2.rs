//! Gaussian estimation-of-distribution search with an archive of past
//! selections.
//!
//! Each generation the mean is the average of the truncation-selected set
//! `S^t`, while the covariance is estimated over the archive
//! `H^t = S^t ∪ … ∪ S^{t−l}` with deviations taken from the *new* mean. The
//! best point seen so far is carried into every selection pool.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum Eda2Error {
    #[error("selection is empty")]
    EmptySelection,
    #[error("archive needs at least two points, got {0}")]
    EmptyArchive(usize),
    #[error("covariance could not be regularized to positive definite")]
    CovarianceDegenerate,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eda2Config {
    pub population_size: usize,
    /// Number of past selected sets kept besides the current one.
    pub archive_length: usize,
    pub max_iterations: usize,
    /// Fraction of the pool kept by truncation selection.
    pub truncation: f64,
}

impl Default for Eda2Config {
    fn default() -> Self {
        Eda2Config {
            population_size: 200,
            archive_length: 10,
            max_iterations: 100,
            truncation: 0.3,
        }
    }
}

impl Eda2Config {
    pub fn selection_size(&self, pool: usize) -> usize {
        ((self.truncation * pool as f64).ceil() as usize).clamp(1, pool.max(1))
    }

    pub fn validate(&self) -> Result<(), Eda2Error> {
        if !(self.truncation > 0.0 && self.truncation <= 1.0) {
            return Err(Eda2Error::InvalidConfig(format!(
                "truncation ratio {} outside (0, 1]",
                self.truncation
            )));
        }
        if self.selection_size(self.population_size) < 2 {
            return Err(Eda2Error::InvalidConfig(format!(
                "population {} with truncation {} selects fewer than 2 points",
                self.population_size, self.truncation
            )));
        }
        Ok(())
    }
}

/// Axis-aligned search box.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn uniform(dim: usize, lower: f64, upper: f64) -> Self {
        Bounds {
            lower: vec![lower; dim],
            upper: vec![upper; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        self.fill_uniform(&mut x, rng);
        x
    }

    pub fn fill_uniform<R: Rng + ?Sized>(&self, x: &mut [f64], rng: &mut R) {
        for ((v, &lo), &hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        }
    }
}

/// Indices of the `⌈τ·N⌉` lowest-fitness members; ties keep insertion order.
pub fn select(fitness: &[f64], truncation: f64) -> Vec<usize> {
    let keep = ((truncation * fitness.len() as f64).ceil() as usize).min(fitness.len());
    let mut order: Vec<usize> = (0..fitness.len()).collect();
    let cmp = |a: &usize, b: &usize| fitness[*a].total_cmp(&fitness[*b]).then(a.cmp(b));
    if keep == 0 {
        return Vec::new();
    }
    if keep < order.len() {
        order.select_nth_unstable_by(keep - 1, cmp);
        order.truncate(keep);
    }
    order.sort_unstable_by(cmp);
    order
}

/// Componentwise mean of the selected set.
pub fn estimate_mean<P: AsRef<[f64]>>(selected: &[P]) -> Result<Vec<f64>, Eda2Error> {
    let first = selected.first().ok_or(Eda2Error::EmptySelection)?;
    let mut mean = vec![0.0; first.as_ref().len()];
    for p in selected {
        for (m, x) in mean.iter_mut().zip(p.as_ref()) {
            *m += x;
        }
    }
    let n = selected.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}

/// `Σ = (1/|H|) Σ_i (h_i − μ)(h_i − μ)ᵀ` over every archived point.
pub fn estimate_covariance<'a, I>(archive: I, mean: &[f64]) -> Result<DMatrix<f64>, Eda2Error>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let n = mean.len();
    // packed lower triangle, row by row
    let mut acc = vec![0.0; n * (n + 1) / 2];
    let mut count = 0usize;
    let mut dev = vec![0.0; n];
    for h in archive {
        for ((d, x), m) in dev.iter_mut().zip(h).zip(mean) {
            *d = x - m;
        }
        accumulate_outer(&mut acc, &dev, 1.0);
        count += 1;
    }
    if count < 2 {
        return Err(Eda2Error::EmptyArchive(count));
    }
    let cov = unpack(&acc, n, 1.0 / count as f64);
    Ok(cov)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianModel {
    pub mean: Vec<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianModel {
    /// Lower Cholesky factor of `Σ + εI`, with `ε` starting at
    /// `1e-10·(tr Σ / n + 1)` and growing tenfold up to `1e-2·(tr Σ / n + 1)`.
    pub fn factor(&self) -> Result<DMatrix<f64>, Eda2Error> {
        let n = self.mean.len();
        let base = self.covariance.trace() / n.max(1) as f64 + 1.0;
        let mut eps = 1e-10;
        while eps <= 1e-2 * (1.0 + 1e-9) {
            let mut m = self.covariance.clone();
            for i in 0..n {
                m[(i, i)] += eps * base;
            }
            if let Some(ch) = m.cholesky() {
                return Ok(ch.l());
            }
            eps *= 10.0;
        }
        Err(Eda2Error::CovarianceDegenerate)
    }

    /// `μ + L z` for a given standard-normal vector `z`, unclamped.
    pub fn transform(&self, factor: &DMatrix<f64>, z: &[f64]) -> Vec<f64> {
        let mut x = self.mean.clone();
        lower_mul_add(factor, z, &mut x);
        x
    }
}

/// `out += L z` for lower-triangular `L`.
fn lower_mul_add(factor: &DMatrix<f64>, z: &[f64], out: &mut [f64]) {
    let n = z.len();
    // column-major: column j holds L[j.., j]
    let data = factor.as_slice();
    for (j, &zj) in z.iter().enumerate() {
        let col = &data[j * n..(j + 1) * n];
        for (o, l) in out[j..].iter_mut().zip(&col[j..]) {
            *o += l * zj;
        }
    }
}

/// Draws `count` points from the model, clamped into `bounds`.
pub fn sample<R: Rng + ?Sized>(
    model: &GaussianModel,
    count: usize,
    bounds: &Bounds,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>, Eda2Error> {
    Ok(to_points(&sample_columns(model, count, bounds, rng)?))
}

/// [`sample`] with one point per matrix column.
pub fn sample_columns<R: Rng + ?Sized>(
    model: &GaussianModel,
    count: usize,
    bounds: &Bounds,
    rng: &mut R,
) -> Result<DMatrix<f64>, Eda2Error> {
    let factor = model.factor()?;
    let n = model.mean.len();
    // one standard-normal column per point, drawn in point order
    let mut draws = Vec::with_capacity(n * count);
    draws.extend((0..n * count).map(|_| -> f64 { StandardNormal.sample(rng) }));
    let mut x = factor * DMatrix::from_vec(n, count, draws);
    for j in 0..count {
        let col = &mut x.as_mut_slice()[j * n..(j + 1) * n];
        for (v, m) in col.iter_mut().zip(&model.mean) {
            *v += m;
        }
        bounds.clamp(col);
    }
    Ok(x)
}

/// Column `j` of a column-major matrix as a slice.
pub fn point(m: &DMatrix<f64>, j: usize) -> &[f64] {
    let n = m.nrows();
    &m.as_slice()[j * n..(j + 1) * n]
}

fn to_points(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.ncols()).map(|j| point(m, j).to_vec()).collect()
}

fn from_points(points: &[Vec<f64>], dim: usize) -> DMatrix<f64> {
    let mut flat = Vec::with_capacity(dim * points.len());
    for p in points {
        assert_eq!(p.len(), dim);
        flat.extend_from_slice(p);
    }
    DMatrix::from_vec(dim, points.len(), flat)
}

/// Size, mean and packed lower-triangular scatter of one selected set.
#[derive(Debug, Clone)]
struct SetMoments {
    count: usize,
    mean: Vec<f64>,
    scatter: Vec<f64>,
}

impl SetMoments {
    fn of(points: &DMatrix<f64>) -> Self {
        let (n, count) = points.shape();
        let mut mean = vec![0.0; n];
        for j in 0..count {
            for (m, x) in mean.iter_mut().zip(point(points, j)) {
                *m += x;
            }
        }
        if count > 0 {
            mean.iter_mut().for_each(|m| *m /= count as f64);
        }
        let mut scatter = vec![0.0; n * (n + 1) / 2];
        let mut dev = vec![0.0; n];
        for j in 0..count {
            for ((d, x), m) in dev.iter_mut().zip(point(points, j)).zip(&mean) {
                *d = x - m;
            }
            accumulate_outer(&mut scatter, &dev, 1.0);
        }
        SetMoments { count, mean, scatter }
    }
}

/// `acc += w·d dᵀ` on a packed lower triangle.
fn accumulate_outer(acc: &mut [f64], d: &[f64], w: f64) {
    let mut k = 0;
    for i in 0..d.len() {
        let di = d[i] * w;
        for (a, dj) in acc[k..k + i + 1].iter_mut().zip(&d[..=i]) {
            *a += di * dj;
        }
        k += i + 1;
    }
}

/// Same quantity as [`estimate_covariance`] over the union of the sets,
/// combined from per-set moments: each set contributes its own scatter plus
/// `count·(m_k − μ)(m_k − μ)ᵀ`.
fn pooled_covariance(sets: &VecDeque<SetMoments>, mean: &[f64]) -> Result<DMatrix<f64>, Eda2Error> {
    let n = mean.len();
    let total: usize = sets.iter().map(|s| s.count).sum();
    if total < 2 {
        return Err(Eda2Error::EmptyArchive(total));
    }
    let mut acc = vec![0.0; n * (n + 1) / 2];
    let mut dev = vec![0.0; n];
    for set in sets {
        for (a, v) in acc.iter_mut().zip(&set.scatter) {
            *a += v;
        }
        for ((d, m), mu) in dev.iter_mut().zip(&set.mean).zip(mean) {
            *d = m - mu;
        }
        accumulate_outer(&mut acc, &dev, set.count as f64);
    }
    Ok(unpack(&acc, n, 1.0 / total as f64))
}

fn unpack(acc: &[f64], n: usize, scale: f64) -> DMatrix<f64> {
    let mut cov = DMatrix::<f64>::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in 0..=i {
            let v = acc[k] * scale;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
            k += 1;
        }
    }
    cov
}

/// Search state between generations.
#[derive(Debug, Clone)]
pub struct Eda2State {
    config: Eda2Config,
    bounds: Bounds,
    /// Selected sets, one point per column.
    archive: VecDeque<DMatrix<f64>>,
    /// Moments of each archived set, aligned with `archive`.
    moments: VecDeque<SetMoments>,
    best: Option<(Vec<f64>, f64)>,
    model: Option<GaussianModel>,
    generation: usize,
}

impl Eda2State {
    pub fn new(config: Eda2Config, bounds: Bounds) -> Result<Self, Eda2Error> {
        config.validate()?;
        Ok(Eda2State {
            config,
            bounds,
            archive: VecDeque::new(),
            moments: VecDeque::new(),
            best: None,
            model: None,
            generation: 0,
        })
    }

    pub fn best(&self) -> Option<(&[f64], f64)> {
        self.best.as_ref().map(|(p, f)| (p.as_slice(), *f))
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn model(&self) -> Option<&GaussianModel> {
        self.model.as_ref()
    }

    /// Copies of the archived selected sets, newest first.
    pub fn archive(&self) -> Vec<Vec<Vec<f64>>> {
        self.archive.iter().map(to_points).collect()
    }

    /// Points to evaluate next: uniform over the box before the first
    /// generation, then draws from the current Gaussian model.
    pub fn ask<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<Vec<f64>>, Eda2Error> {
        Ok(to_points(&self.ask_columns(rng)?))
    }

    /// [`Eda2State::ask`] with one point per matrix column.
    pub fn ask_columns<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DMatrix<f64>, Eda2Error> {
        let (n, count) = (self.bounds.dim(), self.config.population_size);
        match &self.model {
            None => {
                let mut x = DMatrix::zeros(n, count);
                for j in 0..count {
                    self.bounds.fill_uniform(&mut x.as_mut_slice()[j * n..(j + 1) * n], rng);
                }
                Ok(x)
            }
            Some(model) => sample_columns(model, count, &self.bounds, rng),
        }
    }

    /// Absorbs an evaluated population: selection over the population plus the
    /// incumbent, archive update, and re-estimation of the model.
    pub fn tell(&mut self, points: Vec<Vec<f64>>, fitness: Vec<f64>) -> Result<(), Eda2Error> {
        let dim = points.first().map_or(self.bounds.dim(), Vec::len);
        self.tell_columns(&from_points(&points, dim), fitness)
    }

    /// [`Eda2State::tell`] with one point per matrix column.
    pub fn tell_columns(&mut self, points: &DMatrix<f64>, fitness: Vec<f64>) -> Result<(), Eda2Error> {
        assert_eq!(points.ncols(), fitness.len());
        let size = points.ncols();
        let mut pool_fitness = fitness;
        if let Some((_, f)) = &self.best {
            pool_fitness.push(*f);
        }
        let member = |i: usize| -> &[f64] {
            if i < size {
                point(points, i)
            } else {
                &self.best.as_ref().expect("incumbent is last in the pool").0
            }
        };
        let chosen = select(&pool_fitness, self.config.truncation);
        let Some(&top) = chosen.first() else {
            return Err(Eda2Error::EmptySelection);
        };
        let n = points.nrows();
        let mut flat = Vec::with_capacity(n * chosen.len());
        for &i in &chosen {
            flat.extend_from_slice(member(i));
        }
        if self.best.as_ref().is_none_or(|(_, f)| pool_fitness[top] < *f) {
            self.best = Some((member(top).to_vec(), pool_fitness[top]));
        }
        let selected = DMatrix::from_vec(n, chosen.len(), flat);
        let moments = SetMoments::of(&selected);
        let mean = moments.mean.clone();
        self.moments.push_front(moments);
        self.archive.push_front(selected);
        self.archive.truncate(self.config.archive_length + 1);
        self.moments.truncate(self.config.archive_length + 1);
        let covariance = pooled_covariance(&self.moments, &mean)?;
        self.model = Some(GaussianModel { mean, covariance });
        self.generation += 1;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Eda2Outcome {
    pub best_point: Vec<f64>,
    pub best_value: f64,
    /// Best-so-far after the initial population and after each iteration.
    pub history: Vec<f64>,
}

/// Minimizes `objective` over `bounds` for `config.max_iterations` generations
/// after the initial population.
pub fn run_eda2<F, E, R>(
    mut objective: F,
    bounds: &Bounds,
    config: &Eda2Config,
    rng: &mut R,
) -> Result<Eda2Outcome, E>
where
    F: FnMut(&[f64]) -> Result<f64, E>,
    E: From<Eda2Error>,
    R: Rng + ?Sized,
{
    run_eda2_batch(
        |pts| (0..pts.ncols()).map(|j| objective(point(pts, j))).collect(),
        bounds,
        config,
        rng,
    )
}

/// [`run_eda2`] with the objective applied to a whole population at once,
/// one point per column.
pub fn run_eda2_batch<F, E, R>(
    mut objective: F,
    bounds: &Bounds,
    config: &Eda2Config,
    rng: &mut R,
) -> Result<Eda2Outcome, E>
where
    F: FnMut(&DMatrix<f64>) -> Result<Vec<f64>, E>,
    E: From<Eda2Error>,
    R: Rng + ?Sized,
{
    let mut state = Eda2State::new(*config, bounds.clone())?;
    let mut history = Vec::with_capacity(config.max_iterations + 1);
    for _ in 0..=config.max_iterations {
        let points = state.ask_columns(rng)?;
        let fitness = objective(&points)?;
        state.tell_columns(&points, fitness)?;
        history.push(state.best().expect("best exists after tell").1);
    }
    let (best_point, best_value) = state.best.expect("at least one generation ran");
    Ok(Eda2Outcome {
        best_point,
        best_value,
        history,
    })
}
