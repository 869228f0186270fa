//! Dense third-order tensors and canonical polyadic decomposition (CPD)
//! fitted by alternating least squares.
//!
//! A rank-`R` Kruskal model approximates a tensor as a weighted sum of `R`
//! outer products of unit-norm factor columns:
//!
//! ```text
//! X ≈ Σ_r λ_r · a_r ∘ b_r ∘ c_r
//! ```
//!
//! [`cp_als`] updates the three factor matrices in mode order 1, 2, 3 per
//! sweep, each by an exact least-squares solve against the Khatri-Rao product
//! of the other two factors. The residual is therefore non-increasing from
//! sweep to sweep.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{khatri_rao, pinv_symmetric, PINV_RCOND};

/// Dense third-order tensor, mode-1 index slowest and mode-3 fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseTensor3 {
    dims: (usize, usize, usize),
    data: Vec<f64>,
}

impl DenseTensor3 {
    pub fn new(dims: (usize, usize, usize), data: Vec<f64>) -> Result<Self> {
        let (i, j, k) = dims;
        if i == 0 || j == 0 || k == 0 {
            return Err(Error::InvalidArgument(format!(
                "tensor dims must be positive, got {dims:?}"
            )));
        }
        if data.len() != i * j * k {
            return Err(Error::DimensionMismatch(format!(
                "data length {} != {}·{}·{}",
                data.len(),
                i,
                j,
                k
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite tensor entry at flat index {pos}"
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: (usize, usize, usize)) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.0 * dims.1 * dims.2],
        }
    }

    pub fn from_fn(dims: (usize, usize, usize), mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(dims.0 * dims.1 * dims.2);
        for i in 0..dims.0 {
            for j in 0..dims.1 {
                for k in 0..dims.2 {
                    data.push(f(i, j, k));
                }
            }
        }
        Self { dims, data }
    }

    /// Outer product `a ∘ b ∘ c`.
    pub fn outer(a: &[f64], b: &[f64], c: &[f64]) -> Self {
        Self::from_fn((a.len(), b.len(), c.len()), |i, j, k| a[i] * b[j] * c[k])
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims.1 + j) * self.dims.2 + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.offset(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let o = self.offset(i, j, k);
        self.data[o] = v;
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dims, other.dims);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch(format!(
                "{:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Self { dims: self.dims, data })
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            dims: self.dims,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// Mode-`n` unfolding (0-based mode). Rows index mode `n`; columns run over
    /// the remaining two modes with the later mode fastest.
    pub fn unfold(&self, mode: usize) -> DMatrix<f64> {
        let (di, dj, dk) = self.dims;
        match mode {
            0 => DMatrix::from_row_slice(di, dj * dk, &self.data),
            1 => DMatrix::from_fn(dj, di * dk, |j, c| self.get(c / dk, j, c % dk)),
            2 => DMatrix::from_fn(dk, di * dj, |k, c| self.get(c / dj, c % dj, k)),
            _ => panic!("mode {mode} out of range for a third-order tensor"),
        }
    }
}

/// Weights plus three factor matrices: the factored ("Kruskal") form of a CPD.
#[derive(Debug, Clone, PartialEq)]
pub struct KruskalModel {
    weights: Vec<f64>,
    factors: [DMatrix<f64>; 3],
}

impl KruskalModel {
    pub fn new(weights: Vec<f64>, factors: [DMatrix<f64>; 3]) -> Result<Self> {
        let rank = weights.len();
        if rank == 0 {
            return Err(Error::InvalidArgument("rank must be at least 1".into()));
        }
        for (n, f) in factors.iter().enumerate() {
            if f.ncols() != rank {
                return Err(Error::DimensionMismatch(format!(
                    "factor {} has {} columns, expected rank {}",
                    n + 1,
                    f.ncols(),
                    rank
                )));
            }
            if f.nrows() == 0 {
                return Err(Error::InvalidArgument(format!("factor {} has no rows", n + 1)));
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!("factor {} has non-finite entries", n + 1)));
            }
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidData("non-finite weight".into()));
        }
        Ok(Self { weights, factors })
    }

    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (
            self.factors[0].nrows(),
            self.factors[1].nrows(),
            self.factors[2].nrows(),
        )
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn factor(&self, mode: usize) -> &DMatrix<f64> {
        &self.factors[mode]
    }

    pub fn factors(&self) -> &[DMatrix<f64>; 3] {
        &self.factors
    }

    /// Column `r` of the mode-`mode` factor as an owned vector.
    pub fn column(&self, mode: usize, r: usize) -> Vec<f64> {
        self.factors[mode].column(r).iter().copied().collect()
    }

    /// Rescales every factor column to unit norm, absorbing the scale into the
    /// weights, then sorts components by descending weight and applies the
    /// sign convention (largest-magnitude mode-1 entry positive, compensated
    /// in mode 2).
    pub fn normalize(&mut self) {
        let rank = self.rank();
        for r in 0..rank {
            for f in self.factors.iter_mut() {
                let norm = f.column(r).norm();
                if norm > 0.0 {
                    f.column_mut(r).scale_mut(1.0 / norm);
                    self.weights[r] *= norm;
                } else {
                    self.weights[r] = 0.0;
                }
            }
            if self.weights[r] < 0.0 {
                self.weights[r] = -self.weights[r];
                self.factors[2].column_mut(r).neg_mut();
            }
        }
        self.fix_signs();
        self.sort_by_weight();
    }

    fn fix_signs(&mut self) {
        for r in 0..self.rank() {
            let col = self.factors[0].column(r);
            let mut best = 0.0_f64;
            for &v in col.iter() {
                if v.abs() > best.abs() {
                    best = v;
                }
            }
            if best < 0.0 {
                self.factors[0].column_mut(r).neg_mut();
                self.factors[1].column_mut(r).neg_mut();
            }
        }
    }

    fn sort_by_weight(&mut self) {
        let mut order: Vec<usize> = (0..self.rank()).collect();
        // stable: equal weights keep their original order
        order.sort_by(|&a, &b| self.weights[b].total_cmp(&self.weights[a]));
        if order.iter().enumerate().all(|(i, &o)| i == o) {
            return;
        }
        self.weights = order.iter().map(|&o| self.weights[o]).collect();
        for f in self.factors.iter_mut() {
            *f = f.select_columns(order.iter());
        }
    }

    /// Permutes components and flips signs of mode pair (`mode_a`, `mode_b`)
    /// for the components in `flip`. The represented tensor is unchanged.
    pub fn permuted(&self, perm: &[usize], flip: &[usize], modes: (usize, usize)) -> Self {
        let mut out = Self {
            weights: perm.iter().map(|&p| self.weights[p]).collect(),
            factors: [
                self.factors[0].select_columns(perm.iter()),
                self.factors[1].select_columns(perm.iter()),
                self.factors[2].select_columns(perm.iter()),
            ],
        };
        for &r in flip {
            out.factors[modes.0].column_mut(r).neg_mut();
            out.factors[modes.1].column_mut(r).neg_mut();
        }
        out
    }

    /// Same model with the listed components' weights set to zero.
    fn masked(&self, keep: &BTreeSet<usize>) -> Self {
        let weights = self
            .weights
            .iter()
            .enumerate()
            .map(|(r, &w)| if keep.contains(&r) { w } else { 0.0 })
            .collect();
        Self {
            weights,
            factors: self.factors.clone(),
        }
    }
}

/// Outcome of one decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub fit: f64,
    pub iterations: usize,
    pub converged: bool,
    pub final_delta: f64,
    /// Fit after every sweep of the returned run.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitMode {
    /// One start with factors drawn uniformly from [-1, 1].
    Random,
    /// `restarts` random starts, each run for `warmup_sweeps`; the best one
    /// is continued to convergence.
    BestOf { restarts: usize, warmup_sweeps: usize },
}

impl Default for InitMode {
    fn default() -> Self {
        InitMode::BestOf {
            restarts: 5,
            warmup_sweeps: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpOptions {
    pub max_iters: usize,
    pub tolerance: f64,
    pub seed: u64,
    pub init: InitMode,
}

impl Default for CpOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tolerance: 1e-8,
            seed: 0,
            init: InitMode::default(),
        }
    }
}

/// Largest rank accepted for a tensor of the given dims.
pub fn max_feasible_rank(dims: (usize, usize, usize)) -> usize {
    let (i, j, k) = dims;
    (j * k).min(i * k).min(i * j)
}

/// Working state for one ALS run.
struct AlsState<'a> {
    unfoldings: &'a [DMatrix<f64>; 3],
    norm_x_sq: f64,
    norm_x: f64,
    factors: [DMatrix<f64>; 3],
    weights: Vec<f64>,
    trace: Vec<f64>,
}

impl<'a> AlsState<'a> {
    fn new(unfoldings: &'a [DMatrix<f64>; 3], norm_x: f64, init: [DMatrix<f64>; 3]) -> Self {
        let rank = init[0].ncols();
        Self {
            unfoldings,
            norm_x_sq: norm_x * norm_x,
            norm_x,
            factors: init,
            weights: vec![1.0; rank],
            trace: Vec::new(),
        }
    }

    fn others(mode: usize) -> (usize, usize) {
        match mode {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        }
    }

    /// One sweep over modes 1, 2, 3. Returns the fit after the sweep.
    fn sweep(&mut self) -> f64 {
        let rank = self.weights.len();
        let mut last_mttkrp = DMatrix::zeros(0, 0);
        for mode in 0..3 {
            let (slow, fast) = Self::others(mode);
            let kr = khatri_rao(&self.factors[slow], &self.factors[fast]);
            let mttkrp = &self.unfoldings[mode] * &kr;
            let g_slow = self.factors[slow].transpose() * &self.factors[slow];
            let g_fast = self.factors[fast].transpose() * &self.factors[fast];
            let gram = g_slow.component_mul(&g_fast);
            let updated = &mttkrp * pinv_symmetric(&gram, PINV_RCOND);
            let mut updated = updated;
            for r in 0..rank {
                let norm = updated.column(r).norm();
                if norm > 0.0 {
                    updated.column_mut(r).scale_mut(1.0 / norm);
                }
                self.weights[r] = norm;
            }
            self.factors[mode] = updated;
            if mode == 2 {
                last_mttkrp = mttkrp;
            }
        }
        let fit = self.current_fit(&last_mttkrp);
        self.trace.push(fit);
        fit
    }

    /// Fit of the current model. Uses ‖X‖² − 2⟨X, X̂⟩ + ‖X̂‖² with the last
    /// MTTKRP; falls back to an explicit residual when the residual is small
    /// enough for cancellation to matter.
    fn current_fit(&self, mttkrp_mode3: &DMatrix<f64>) -> f64 {
        let rank = self.weights.len();
        let c = &self.factors[2];
        let mut inner = 0.0;
        for r in 0..rank {
            inner += self.weights[r] * c.column(r).dot(&mttkrp_mode3.column(r));
        }
        let mut gram = DMatrix::from_element(rank, rank, 1.0);
        for f in &self.factors {
            gram.component_mul_assign(&(f.transpose() * f));
        }
        let mut model_sq = 0.0;
        for p in 0..rank {
            for q in 0..rank {
                model_sq += self.weights[p] * self.weights[q] * gram[(p, q)];
            }
        }
        let resid_sq = self.norm_x_sq - 2.0 * inner + model_sq;
        if resid_sq > 1e-4 * self.norm_x_sq {
            return 1.0 - resid_sq.max(0.0).sqrt() / self.norm_x;
        }
        let resid = self.explicit_residual();
        1.0 - resid / self.norm_x
    }

    fn explicit_residual(&self) -> f64 {
        let a = DMatrix::from_fn(self.factors[0].nrows(), self.weights.len(), |i, r| {
            self.factors[0][(i, r)] * self.weights[r]
        });
        let kr = khatri_rao(&self.factors[1], &self.factors[2]);
        let approx = a * kr.transpose();
        (&self.unfoldings[0] - approx).norm()
    }

    fn into_model(self) -> (KruskalModel, Vec<f64>) {
        let mut model = KruskalModel {
            weights: self.weights,
            factors: self.factors,
        };
        model.normalize();
        (model, self.trace)
    }
}

fn random_factors(dims: (usize, usize, usize), rank: usize, rng: &mut ChaCha8Rng) -> [DMatrix<f64>; 3] {
    let mut make = |rows: usize| DMatrix::from_fn(rows, rank, |_, _| rng.random_range(-1.0..=1.0));
    [make(dims.0), make(dims.1), make(dims.2)]
}

/// Canonical polyadic decomposition by alternating least squares.
///
/// Non-convergence within `max_iters` is not an error: the model is returned
/// with `converged = false`.
pub fn cp_als(x: &DenseTensor3, rank: usize, opts: &CpOptions) -> Result<(KruskalModel, FitReport)> {
    cp_als_impl(x, rank, opts, None)
}

/// [`cp_als`] with one extra starting point: the components of `warm`
/// (a lower-rank model of the same tensor) padded with random columns. The
/// warm start competes with the random ones on warm-up fit, so a rank sweep
/// built this way rarely loses fit against the previous rank.
pub fn cp_als_warm(
    x: &DenseTensor3,
    rank: usize,
    opts: &CpOptions,
    warm: &KruskalModel,
) -> Result<(KruskalModel, FitReport)> {
    if warm.dims() != x.dims() || warm.rank() > rank {
        return Err(Error::DimensionMismatch(format!(
            "warm start of rank {} on {:?} for rank {rank} on {:?}",
            warm.rank(),
            warm.dims(),
            x.dims()
        )));
    }
    cp_als_impl(x, rank, opts, Some(warm))
}

fn warm_factors(warm: &KruskalModel, rank: usize, rng: &mut ChaCha8Rng) -> [DMatrix<f64>; 3] {
    let mut f = random_factors(warm.dims(), rank, rng);
    for mode in 0..3 {
        for r in 0..warm.rank() {
            let scale = if mode == 0 { warm.weights[r] } else { 1.0 };
            f[mode].set_column(r, &(warm.factors[mode].column(r) * scale));
        }
    }
    f
}

fn cp_als_impl(
    x: &DenseTensor3,
    rank: usize,
    opts: &CpOptions,
    warm: Option<&KruskalModel>,
) -> Result<(KruskalModel, FitReport)> {
    let dims = x.dims();
    if rank == 0 {
        return Err(Error::InvalidArgument("rank must be at least 1".into()));
    }
    let bound = max_feasible_rank(dims);
    if rank > bound {
        return Err(Error::RankInfeasible { rank, bound, dims });
    }
    let norm_x = x.frobenius_norm();
    if norm_x == 0.0 {
        return Err(Error::DegenerateInput("tensor has zero Frobenius norm".into()));
    }
    if opts.max_iters == 0 {
        return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
    }

    let unfoldings = [x.unfold(0), x.unfold(1), x.unfold(2)];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut state = match opts.init {
        InitMode::Random => {
            let init = match warm {
                Some(w) => warm_factors(w, rank, &mut rng),
                None => random_factors(dims, rank, &mut rng),
            };
            AlsState::new(&unfoldings, norm_x, init)
        }
        InitMode::BestOf {
            restarts,
            warmup_sweeps,
        } => {
            let restarts = restarts.max(1);
            let warmup = warmup_sweeps.clamp(1, opts.max_iters);
            let mut best: Option<AlsState> = None;
            let mut starts: Vec<[DMatrix<f64>; 3]> = Vec::with_capacity(restarts + 1);
            if let Some(w) = warm {
                starts.push(warm_factors(w, rank, &mut rng));
            }
            for _ in 0..restarts {
                starts.push(random_factors(dims, rank, &mut rng));
            }
            for init in starts {
                let mut cand = AlsState::new(&unfoldings, norm_x, init);
                for _ in 0..warmup {
                    cand.sweep();
                }
                let cand_fit = *cand.trace.last().unwrap();
                let better = match &best {
                    None => true,
                    Some(b) => cand_fit > *b.trace.last().unwrap(),
                };
                if better {
                    best = Some(cand);
                }
            }
            best.expect("at least one restart")
        }
    };

    let mut converged = false;
    let mut final_delta = f64::INFINITY;
    if state.trace.len() >= 2 {
        let n = state.trace.len();
        final_delta = (state.trace[n - 1] - state.trace[n - 2]).abs();
        converged = final_delta <= opts.tolerance;
    }
    while !converged && state.trace.len() < opts.max_iters {
        let prev = state.trace.last().copied();
        let fit = state.sweep();
        if let Some(prev) = prev {
            final_delta = (fit - prev).abs();
            converged = final_delta <= opts.tolerance;
        }
    }

    let iterations = state.trace.len();
    let (model, trace) = state.into_model();
    let fit = *trace.last().expect("at least one sweep");
    Ok((
        model,
        FitReport {
            fit,
            iterations,
            converged,
            final_delta,
            trace,
        },
    ))
}

/// Full tensor represented by a Kruskal model.
pub fn reconstruct(m: &KruskalModel) -> DenseTensor3 {
    let (di, dj, dk) = m.dims();
    let a = DMatrix::from_fn(di, m.rank(), |i, r| m.factors[0][(i, r)] * m.weights[r]);
    let kr = khatri_rao(&m.factors[1], &m.factors[2]);
    let full = a * kr.transpose();
    let mut data = Vec::with_capacity(di * dj * dk);
    for i in 0..di {
        for c in 0..dj * dk {
            data.push(full[(i, c)]);
        }
    }
    DenseTensor3 {
        dims: (di, dj, dk),
        data,
    }
}

/// Sum of the rank-1 terms whose (0-based) indices are in `keep`.
pub fn partial_reconstruct(m: &KruskalModel, keep: &[usize]) -> Result<DenseTensor3> {
    let mut set = BTreeSet::new();
    for &r in keep {
        if r >= m.rank() {
            return Err(Error::IndexOutOfRange(format!(
                "component {r} out of range for rank {}",
                m.rank()
            )));
        }
        set.insert(r);
    }
    Ok(reconstruct(&m.masked(&set)))
}

/// `1 − ‖X − X̂‖_F / ‖X‖_F`.
pub fn fit(x: &DenseTensor3, m: &KruskalModel) -> Result<f64> {
    if x.dims() != m.dims() {
        return Err(Error::DimensionMismatch(format!(
            "tensor {:?} vs model {:?}",
            x.dims(),
            m.dims()
        )));
    }
    let norm_x = x.frobenius_norm();
    if norm_x == 0.0 {
        return Err(Error::DegenerateInput("tensor has zero Frobenius norm".into()));
    }
    let xhat = reconstruct(m);
    let resid: f64 = x
        .data
        .iter()
        .zip(&xhat.data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(1.0 - resid / norm_x)
}

// serde for KruskalModel goes through an explicit column-list form so the
// JSON consumed by the review UI is readable: factors[mode][component][row].
#[derive(Serialize, Deserialize)]
struct KruskalRepr {
    rank: usize,
    dims: [usize; 3],
    weights: Vec<f64>,
    factors: Vec<Vec<Vec<f64>>>,
}

impl Serialize for KruskalModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let (a, b, c) = self.dims();
        KruskalRepr {
            rank: self.rank(),
            dims: [a, b, c],
            weights: self.weights.clone(),
            factors: (0..3)
                .map(|n| (0..self.rank()).map(|r| self.column(n, r)).collect())
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for KruskalModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = KruskalRepr::deserialize(d)?;
        if repr.factors.len() != 3 {
            return Err(D::Error::custom("expected three factor matrices"));
        }
        let mut mats = Vec::with_capacity(3);
        for (n, cols) in repr.factors.iter().enumerate() {
            if cols.len() != repr.rank || cols.iter().any(|c| c.len() != repr.dims[n]) {
                return Err(D::Error::custom(format!("factor {} has wrong shape", n + 1)));
            }
            mats.push(DMatrix::from_fn(repr.dims[n], repr.rank, |i, r| cols[r][i]));
        }
        let factors: [DMatrix<f64>; 3] = mats.try_into().expect("three factors");
        KruskalModel::new(repr.weights, factors).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(v: &[f64]) -> Vec<f64> {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / n).collect()
    }

    #[test]
    fn rank_one_exact_recovery() {
        let a = unit(&[1.0, 2.0, -1.0, 0.5]);
        let b = unit(&[0.3, -0.7, 1.1]);
        let c = unit(&[2.0, 1.0, 1.0, -1.0, 0.2]);
        let x = DenseTensor3::outer(&a, &b, &c).scaled(5.0);
        let (m, rep) = cp_als(&x, 1, &CpOptions::default()).unwrap();
        assert!((m.weights()[0] - 5.0).abs() < 1e-9, "λ = {}", m.weights()[0]);
        assert!(rep.fit >= 0.9999, "fit {}", rep.fit);
        assert!(reconstruct(&m).max_abs_diff(&x) < 1e-6);
    }

    #[test]
    fn zero_tensor_is_degenerate() {
        let x = DenseTensor3::zeros((3, 3, 3));
        let err = cp_als(&x, 2, &CpOptions::default()).unwrap_err();
        assert!(err.to_string().contains("degenerate input"));
    }

    #[test]
    fn infeasible_rank_rejected() {
        let x = DenseTensor3::from_fn((2, 2, 3), |i, j, k| (i + j + k) as f64 + 1.0);
        let err = cp_als(&x, 5, &CpOptions::default()).unwrap_err();
        assert!(err.to_string().contains("rank infeasible"));
    }

    #[test]
    fn non_convergence_returns_model() {
        let x = DenseTensor3::from_fn((5, 4, 3), |i, j, k| ((i * 7 + j * 3 + k) % 5) as f64 - 1.5);
        let opts = CpOptions {
            max_iters: 2,
            init: InitMode::Random,
            ..CpOptions::default()
        };
        let (m, rep) = cp_als(&x, 3, &opts).unwrap();
        assert_eq!(m.rank(), 3);
        assert_eq!(rep.iterations, 2);
        assert!(!rep.converged);
    }

    #[test]
    fn reconstruct_constant_rank_one() {
        let s = 1.0 / 2f64.sqrt();
        let col = DMatrix::from_element(2, 1, s);
        let m = KruskalModel::new(vec![2.0], [col.clone(), col.clone(), col]).unwrap();
        let t = reconstruct(&m);
        for &v in t.data() {
            assert!((v - 2.0 * s * s * s).abs() < 1e-15);
        }
        assert!((t.data()[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-8);
    }

    #[test]
    fn zero_weights_reconstruct_to_zero() {
        let f = DMatrix::from_element(3, 2, 0.5);
        let m = KruskalModel::new(vec![0.0, 0.0], [f.clone(), f.clone(), f]).unwrap();
        assert!(reconstruct(&m).data().iter().all(|&v| v == 0.0));
        let x = DenseTensor3::from_fn((3, 3, 3), |i, j, k| (i + 2 * j + k) as f64);
        assert_eq!(fit(&x, &m).unwrap(), 0.0);
    }

    #[test]
    fn partial_reconstruct_edges() {
        let f0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let m = KruskalModel::new(vec![3.0, 1.0], [f0.clone(), f0.clone(), f0]).unwrap();
        let none = partial_reconstruct(&m, &[]).unwrap();
        assert!(none.data().iter().all(|&v| v == 0.0));
        let all = partial_reconstruct(&m, &[0, 1]).unwrap();
        assert_eq!(all, reconstruct(&m));
        assert!(partial_reconstruct(&m, &[2]).is_err());
    }

    #[test]
    fn fit_of_exact_model_is_one() {
        let f = DMatrix::from_row_slice(2, 1, &[0.6, 0.8]);
        let m = KruskalModel::new(vec![4.0], [f.clone(), f.clone(), f]).unwrap();
        let x = reconstruct(&m);
        assert_eq!(fit(&x, &m).unwrap(), 1.0);
        let wrong = DenseTensor3::zeros((2, 2, 3));
        assert!(fit(&wrong, &m).is_err());
        assert!(fit(&DenseTensor3::zeros((2, 2, 2)), &m).is_err());
    }

    #[test]
    fn normalization_and_ordering() {
        let x = DenseTensor3::from_fn((6, 5, 4), |i, j, k| {
            ((i as f64) * 0.3).sin() * (j as f64 + 1.0) * (k as f64 * 0.7).cos()
                + 0.5 * ((i + j) as f64).cos() * (k as f64 + 0.5)
        });
        let (m, _) = cp_als(&x, 2, &CpOptions::default()).unwrap();
        for n in 0..3 {
            for r in 0..2 {
                assert!((m.factor(n).column(r).norm() - 1.0).abs() < 1e-9);
            }
        }
        assert!(m.weights()[0] >= m.weights()[1]);
        for r in 0..2 {
            let col = m.column(0, r);
            let max = col.iter().cloned().fold(0.0_f64, |a, v| if v.abs() > a.abs() { v } else { a });
            assert!(max > 0.0);
        }
    }

    #[test]
    fn kruskal_json_round_trip() {
        let f = DMatrix::from_row_slice(2, 2, &[0.6, 1.0, 0.8, 0.0]);
        let m = KruskalModel::new(vec![2.0, 1.0], [f.clone(), f.clone(), f]).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        let back: KruskalModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }
}
