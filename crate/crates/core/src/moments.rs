//! Data moments, the optimal target map, the linear-network model, and exact
//! loss/gradient evaluation from moments.
//!
//! The quadratic loss depends on the data only through the second-order
//! moments, so every operation here is moment-based and independent of the
//! sample count.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// `‖Σx − I‖_F` below this means the data is treated as white.
pub const WHITENESS_TOL: f64 = 1e-10;
/// Σx is full rank when its smallest eigenvalue exceeds this fraction of the largest.
pub const RANK_TOL: f64 = 1e-12;

/// Empirical second-order moments of a paired sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMoments {
    /// Second moment of the inputs, `(1/n) Σ x xᵀ`.
    pub sigma_x: DMatrix<f64>,
    /// Cross moment `(1/n) Σ y xᵀ`.
    pub sigma_yx: DMatrix<f64>,
    /// Second moment of the outputs, `(1/n) Σ y yᵀ`.
    pub sigma_y: DMatrix<f64>,
    /// Symmetric PSD square root of `sigma_x`.
    pub sigma_x_sqrt: DMatrix<f64>,
    /// True iff `‖sigma_x − I‖_F ≤ WHITENESS_TOL`.
    pub is_white: bool,
}

impl DataMoments {
    /// Validating constructor from raw moment matrices.
    pub fn new(sigma_x: DMatrix<f64>, sigma_yx: DMatrix<f64>, sigma_y: DMatrix<f64>) -> Result<Self> {
        let d_x = sigma_x.nrows();
        let d_y = sigma_y.nrows();
        if !sigma_x.is_square() || !sigma_y.is_square() {
            return Err(Error::DimensionMismatch("sigma_x and sigma_y must be square".into()));
        }
        if sigma_yx.nrows() != d_y || sigma_yx.ncols() != d_x {
            return Err(Error::DimensionMismatch(format!(
                "sigma_yx is {}x{}, expected {}x{}",
                sigma_yx.nrows(),
                sigma_yx.ncols(),
                d_y,
                d_x
            )));
        }
        let sym_err = (&sigma_x - sigma_x.transpose()).norm();
        if sym_err > 1e-10 * (1.0 + sigma_x.norm()) {
            return Err(Error::InvalidArgument("sigma_x is not symmetric".into()));
        }
        let eigs = linalg::symmetric_eigenvalues_desc(&sigma_x);
        let (max_eig, min_eig) = (eigs[0], *eigs.last().unwrap());
        if min_eig <= RANK_TOL * max_eig.max(1.0) {
            return Err(Error::DegenerateInputCovariance { min_eig, tol: RANK_TOL * max_eig.max(1.0) });
        }
        let sigma_x_sqrt = linalg::symmetric_sqrt(&sigma_x);
        let is_white = (&sigma_x - DMatrix::identity(d_x, d_x)).norm() <= WHITENESS_TOL;
        Ok(Self { sigma_x, sigma_yx, sigma_y, sigma_x_sqrt, is_white })
    }

    /// Input dimension.
    pub fn d_x(&self) -> usize {
        self.sigma_x.nrows()
    }

    /// Output dimension.
    pub fn d_y(&self) -> usize {
        self.sigma_y.nrows()
    }
}

/// Empirical moments of a paired sample set. Rows of `x_samples`/`y_samples`
/// are samples; the two tables must have the same number of rows.
pub fn compute_moments(x_samples: &DMatrix<f64>, y_samples: &DMatrix<f64>) -> Result<DataMoments> {
    let n = x_samples.nrows();
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    if y_samples.nrows() != n {
        return Err(Error::InvalidArgument(format!(
            "mismatched sample counts: {} x-rows vs {} y-rows",
            n,
            y_samples.nrows()
        )));
    }
    let scale = 1.0 / n as f64;
    let sigma_x = x_samples.transpose() * x_samples * scale;
    let sigma_yx = y_samples.transpose() * x_samples * scale;
    let sigma_y = y_samples.transpose() * y_samples * scale;
    DataMoments::new(sigma_x, sigma_yx, sigma_y)
}

/// Noiseless white-data moments whose optimal map is exactly `t`:
/// `sigma_x = I`, `sigma_yx = t`, `sigma_y = t tᵀ`. The loss is zero on the
/// set of global minima.
pub fn moments_from_target(t: &DMatrix<f64>) -> (DataMoments, TargetMap) {
    let d_x = t.ncols();
    let identity = DMatrix::identity(d_x, d_x);
    let moments = DataMoments {
        sigma_x: identity.clone(),
        sigma_yx: t.clone(),
        sigma_y: t * t.transpose(),
        sigma_x_sqrt: identity,
        is_white: true,
    };
    let target = TargetMap::from_matrix(t.clone());
    (moments, target)
}

/// The unique loss-minimizing linear map `T = Σyx Σx⁻¹` together with its SVD
/// and top singular triplet.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMap {
    /// The optimal map itself (`d_y × d_x`).
    pub t: DMatrix<f64>,
    /// Left singular vectors, `d_y × d` orthonormal columns.
    pub left_vectors: DMatrix<f64>,
    /// Singular values, nonincreasing, length `d = min(d_x, d_y)`.
    pub singular_values: Vec<f64>,
    /// Right singular vectors, `d_x × d` orthonormal columns.
    pub right_vectors: DMatrix<f64>,
    /// Largest singular value.
    pub sigma_max: f64,
    /// Top left singular vector (first column of `left_vectors`).
    pub u: DVector<f64>,
    /// Top right singular vector (first column of `right_vectors`).
    pub v: DVector<f64>,
    /// `σ₁ − σ₂`; zero when there is a single singular value.
    pub top_gap: f64,
}

impl TargetMap {
    /// SVD of an explicit matrix, with a deterministic sign convention: each
    /// singular-vector pair is flipped so that the largest-magnitude entry of
    /// the left vector is positive (ties broken by lowest index).
    pub fn from_matrix(t: DMatrix<f64>) -> Self {
        let d = t.nrows().min(t.ncols());
        let svd = t.clone().svd(true, true);
        let u_full = svd.u.expect("svd requested u");
        let vt_full = svd.v_t.expect("svd requested v_t");

        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].partial_cmp(&svd.singular_values[a]).unwrap());

        let mut left = DMatrix::zeros(t.nrows(), d);
        let mut right = DMatrix::zeros(t.ncols(), d);
        let mut values = Vec::with_capacity(d);
        for (col, &src) in order.iter().take(d).enumerate() {
            values.push(svd.singular_values[src]);
            let mut u_col = u_full.column(src).into_owned();
            let mut v_col = vt_full.row(src).transpose();
            // Sign convention: largest-magnitude entry of the left vector positive.
            let mut pivot = 0;
            for i in 1..u_col.len() {
                if u_col[i].abs() > u_col[pivot].abs() {
                    pivot = i;
                }
            }
            if u_col[pivot] < 0.0 {
                u_col = -u_col;
                v_col = -v_col;
            }
            left.set_column(col, &u_col);
            right.set_column(col, &v_col);
        }

        let sigma_max = values[0];
        let top_gap = if d > 1 { values[0] - values[1] } else { 0.0 };
        let u = left.column(0).into_owned();
        let v = right.column(0).into_owned();
        Self { t, left_vectors: left, singular_values: values, right_vectors: right, sigma_max, u, v, top_gap }
    }

    /// `T = Σyx Σx⁻¹` from validated moments.
    pub fn from_moments(moments: &DataMoments) -> Result<Self> {
        let t = linalg::right_divide_spd(&moments.sigma_yx, &moments.sigma_x)?;
        Ok(Self::from_matrix(t))
    }

    pub fn d_x(&self) -> usize {
        self.t.ncols()
    }

    pub fn d_y(&self) -> usize {
        self.t.nrows()
    }
}

/// An `m`-layer linear network `x ↦ W_m ⋯ W_1 x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearNetwork {
    weights: Vec<DMatrix<f64>>,
    dims: Vec<usize>,
}

impl LinearNetwork {
    /// Build from ordered weight matrices `W_1 … W_m`. Adjacent shapes must
    /// chain and the capacity condition `min_j d_j ≥ min(d_x, d_y)` must hold.
    pub fn new(weights: Vec<DMatrix<f64>>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        }
        let mut dims = Vec::with_capacity(weights.len() + 1);
        dims.push(weights[0].ncols());
        for (j, w) in weights.iter().enumerate() {
            if w.ncols() != *dims.last().unwrap() {
                return Err(Error::DimensionMismatch(format!(
                    "layer {} has {} columns but layer input dim is {}",
                    j + 1,
                    w.ncols(),
                    dims.last().unwrap()
                )));
            }
            dims.push(w.nrows());
        }
        let required = dims[0].min(*dims.last().unwrap());
        let min_dim = *dims.iter().min().unwrap();
        if min_dim < required {
            return Err(Error::CapacityViolation { min_dim, required });
        }
        Ok(Self { weights, dims })
    }

    pub fn weights(&self) -> &[DMatrix<f64>] {
        &self.weights
    }

    /// 1-based layer access.
    pub fn weight(&self, j: usize) -> &DMatrix<f64> {
        &self.weights[j - 1]
    }

    pub fn weights_mut(&mut self) -> &mut [DMatrix<f64>] {
        &mut self.weights
    }

    /// Dimension chain `d_0 … d_m`.
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Number of layers.
    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn d_x(&self) -> usize {
        self.dims[0]
    }

    pub fn d_y(&self) -> usize {
        *self.dims.last().unwrap()
    }

    /// Total parameter count `N = Σ d_j d_{j−1}`.
    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.nrows() * w.ncols()).sum()
    }

    /// Capacity condition `min_j d_j ≥ min(d_x, d_y)`; constructors enforce it,
    /// so this is always true for constructed values.
    pub fn capacity_satisfied(&self) -> bool {
        let required = self.d_x().min(self.d_y());
        self.dims.iter().all(|&d| d >= required)
    }

    /// Full end-to-end product `W_m ⋯ W_1`.
    pub fn product(&self) -> DMatrix<f64> {
        end_to_end(self, 1, self.depth()).expect("full range is always valid")
    }

    /// Concatenated column-major parameter vector `[vec(W_1); …; vec(W_m)]`.
    pub fn parameter_vector(&self) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for w in &self.weights {
            out.extend_from_slice(w.as_slice());
        }
        DVector::from_vec(out)
    }

    /// Inverse of [`Self::parameter_vector`] for a fixed architecture.
    pub fn from_parameter_vector(dims: &[usize], params: &DVector<f64>) -> Result<Self> {
        let mut weights = Vec::with_capacity(dims.len() - 1);
        let mut offset = 0;
        for j in 1..dims.len() {
            let (r, c) = (dims[j], dims[j - 1]);
            if offset + r * c > params.len() {
                return Err(Error::DimensionMismatch("parameter vector too short".into()));
            }
            weights.push(DMatrix::from_column_slice(r, c, &params.as_slice()[offset..offset + r * c]));
            offset += r * c;
        }
        if offset != params.len() {
            return Err(Error::DimensionMismatch("parameter vector too long".into()));
        }
        LinearNetwork::new(weights)
    }
}

/// Partial product `W_to ⋯ W_from` (1-based, inclusive). An empty range
/// (`from > to`) yields the identity of the appropriate dimension, matching
/// the convention that a product over an empty set is `I`.
pub fn end_to_end(net: &LinearNetwork, from_layer: usize, to_layer: usize) -> Result<DMatrix<f64>> {
    let m = net.depth();
    if from_layer < 1 || from_layer > m + 1 {
        return Err(Error::InvalidArgument(format!("from_layer {from_layer} out of range 1..={}", m + 1)));
    }
    if to_layer > m {
        return Err(Error::InvalidArgument(format!("to_layer {to_layer} out of range 0..={m}")));
    }
    if from_layer > to_layer {
        let d = net.dims[from_layer - 1];
        return Ok(DMatrix::identity(d, d));
    }
    let mut acc = net.weights[from_layer - 1].clone();
    for j in from_layer..to_layer {
        acc = &net.weights[j] * acc;
    }
    Ok(acc)
}

/// Exact empirical quadratic loss from moments:
/// `trace(Σy − 2 P Σyxᵀ + P Σx Pᵀ)` with `P` the end-to-end product.
pub fn loss(net: &LinearNetwork, moments: &DataMoments) -> Result<f64> {
    check_net_moments(net, moments)?;
    let p = net.product();
    Ok(loss_of_product(&p, moments))
}

pub(crate) fn loss_of_product(p: &DMatrix<f64>, moments: &DataMoments) -> f64 {
    let fit = p * &moments.sigma_x * p.transpose();
    let cross = p * moments.sigma_yx.transpose();
    (moments.sigma_y.trace() - 2.0 * cross.trace() + fit.trace()).max(0.0)
}

/// Gradient of the loss with respect to each layer:
/// `∂ℓ/∂W_k = 2 (∏_{i>k} W_i)ᵀ (P Σx − Σyx) (∏_{j<k} W_j)ᵀ`.
pub fn gradient(net: &LinearNetwork, moments: &DataMoments) -> Result<Vec<DMatrix<f64>>> {
    check_net_moments(net, moments)?;
    let m = net.depth();
    // Prefix products ∏_{j=1}^{k} W_j and suffix products ∏_{i=k}^{m} W_i.
    let mut prefix = Vec::with_capacity(m + 1);
    prefix.push(DMatrix::identity(net.d_x(), net.d_x()));
    for j in 0..m {
        prefix.push(&net.weights[j] * &prefix[j]);
    }
    let mut suffix = vec![DMatrix::identity(net.d_y(), net.d_y()); m + 1];
    for i in (0..m).rev() {
        suffix[i] = &suffix[i + 1] * &net.weights[i];
    }
    let residual = &prefix[m] * &moments.sigma_x - &moments.sigma_yx;
    let grads = (0..m)
        .map(|k| 2.0 * suffix[k + 1].transpose() * &residual * prefix[k].transpose())
        .collect();
    Ok(grads)
}

/// Is the end-to-end product within `tol·max(1, ‖T‖_F)` of the target?
/// Returns the verdict together with the absolute residual `‖∏W_j − T‖_F`.
pub fn is_global_min(net: &LinearNetwork, target: &TargetMap, tol: f64) -> Result<(bool, f64)> {
    if tol <= 0.0 {
        return Err(Error::InvalidArgument("tol must be positive".into()));
    }
    if net.d_x() != target.d_x() || net.d_y() != target.d_y() {
        return Err(Error::DimensionMismatch("network and target dimensions differ".into()));
    }
    let residual = (net.product() - &target.t).norm();
    Ok((residual <= tol * target.t.norm().max(1.0), residual))
}

/// Loss along the segment `(1−α)·w_a + α·w_b`, sampled at `n_points` uniform
/// values of α over `interval` (entrywise interpolation of the concatenated
/// parameters). Defaults to `[-0.25, 1.25]` via [`loss_section`].
pub fn loss_section_over(
    net_a: &LinearNetwork,
    net_b: &LinearNetwork,
    moments: &DataMoments,
    n_points: usize,
    interval: (f64, f64),
) -> Result<Vec<(f64, f64)>> {
    if net_a.dims != net_b.dims {
        return Err(Error::DimensionMismatch("networks must share the same dims".into()));
    }
    if n_points < 2 {
        return Err(Error::InvalidArgument("n_points must be at least 2".into()));
    }
    check_net_moments(net_a, moments)?;
    let (lo, hi) = interval;
    let pa = net_a.parameter_vector();
    let pb = net_b.parameter_vector();
    let step = (hi - lo) / (n_points - 1) as f64;
    let mut out = Vec::with_capacity(n_points);
    for i in 0..n_points {
        let alpha = lo + i as f64 * step;
        let params = (1.0 - alpha) * &pa + alpha * &pb;
        let net = LinearNetwork::from_parameter_vector(&net_a.dims, &params)?;
        out.push((alpha, loss(&net, moments)?));
    }
    Ok(out)
}

/// [`loss_section_over`] with the default interval `[-0.25, 1.25]`.
pub fn loss_section(
    net_a: &LinearNetwork,
    net_b: &LinearNetwork,
    moments: &DataMoments,
    n_points: usize,
) -> Result<Vec<(f64, f64)>> {
    loss_section_over(net_a, net_b, moments, n_points, (-0.25, 1.25))
}

fn check_net_moments(net: &LinearNetwork, moments: &DataMoments) -> Result<()> {
    if net.d_x() != moments.d_x() || net.d_y() != moments.d_y() {
        return Err(Error::DimensionMismatch(format!(
            "network maps {} -> {} but moments are {} -> {}",
            net.d_x(),
            net.d_y(),
            moments.d_x(),
            moments.d_y()
        )));
    }
    Ok(())
}
