//! Levenberg-Marquardt batch trainer for [`Mlp`].
//!
//! Each iteration solves the damped normal equations
//! `(J^T J + mu I) dp = -J^T r` for the parameter step, where `r` stacks the
//! per-sample output residuals and `J` is the analytic parameter Jacobian.
//! Steps that reduce the sum of squared residuals are accepted and relax the
//! damping; rejected steps tighten it. Normal-equation assembly is chunked
//! through [`crate::parallel`] with a fixed sequential fold, so results are
//! bit-identical whether or not the thread pool is enabled.
//!
//! The objective is plain least squares by default; see
//! [`LmOptions::relative_floor`] for the optional per-sample relative-error
//! weighting used when one dataset spans widely different target amplitudes.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::Mlp;
use crate::error::{GimbalError, Result};
use crate::parallel;

/// Samples per assembly chunk; fixed so chunking (and therefore rounding
/// order) never depends on thread count.
const CHUNK: usize = 256;

/// Supervised batch of raw (unstandardized) inputs and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSet {
    inputs: Vec<DVector<f64>>,
    targets: Vec<DVector<f64>>,
}

impl TrainSet {
    pub fn new(inputs: Vec<DVector<f64>>, targets: Vec<DVector<f64>>) -> Result<TrainSet> {
        if inputs.is_empty() {
            return Err(GimbalError::config("training set is empty"));
        }
        if inputs.len() != targets.len() {
            return Err(GimbalError::config(format!(
                "training set has {} inputs but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        let in_dim = inputs[0].len();
        let out_dim = targets[0].len();
        for (x, y) in inputs.iter().zip(&targets) {
            if x.len() != in_dim || y.len() != out_dim {
                return Err(GimbalError::config("ragged training set"));
            }
            if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
                return Err(GimbalError::numeric("non-finite value in training set"));
            }
        }
        Ok(TrainSet { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn output_dim(&self) -> usize {
        self.targets[0].len()
    }

    pub fn inputs(&self) -> &[DVector<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[DVector<f64>] {
        &self.targets
    }

    /// Keeps every `stride`-th sample, a cheap way to thin densely logged
    /// trajectories before batch training.
    pub fn decimate(&self, stride: usize) -> Result<TrainSet> {
        if stride == 0 {
            return Err(GimbalError::config("decimation stride must be positive"));
        }
        TrainSet::new(
            self.inputs.iter().step_by(stride).cloned().collect(),
            self.targets.iter().step_by(stride).cloned().collect(),
        )
    }
}

/// Computes per-channel mean and standard deviation of the raw inputs and
/// installs them on the network. Channels with (numerically) zero spread get
/// unit scale so constant features stay finite.
pub fn standardize_inputs(mlp: &mut Mlp, set: &TrainSet) -> Result<()> {
    if set.input_dim() != mlp.input_dim() {
        return Err(GimbalError::config(
            "training set width does not match network input",
        ));
    }
    let dim = set.input_dim();
    let n = set.len() as f64;
    let mut mean = DVector::zeros(dim);
    for x in set.inputs() {
        mean += x;
    }
    mean /= n;
    let mut var = DVector::zeros(dim);
    for x in set.inputs() {
        let d = x - &mean;
        var += d.component_mul(&d);
    }
    var /= n;
    let std = DVector::from_fn(dim, |i, _| {
        let s = var[i].sqrt();
        if s > 1e-12 {
            s
        } else {
            1.0
        }
    });
    mlp.set_standardization(mean, std)
}

/// Trainer knobs; the defaults match the lab's training pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    /// Maximum accepted iterations.
    pub max_iters: usize,
    /// Stop once mean squared error over all residuals falls to this level.
    pub target_mse: f64,
    /// Stop when the accepted step is this small relative to the parameters.
    pub step_tol: f64,
    /// Initial damping.
    pub mu0: f64,
    /// Multiplier applied on reject (and divided out on accept).
    pub mu_factor: f64,
    /// Give up once damping exceeds this value without an acceptable step.
    pub mu_max: f64,
    /// Optional relative-error weighting: the residual rows of sample `i`
    /// are scaled by `1 / (‖target_i‖ + floor)`, so each sample is fit to
    /// roughly the same *relative* accuracy and large-amplitude samples
    /// cannot monopolize the objective. The floor caps the weight of
    /// near-zero targets and carries the targets' units. When set, every
    /// reported error (`target_mse`, `mse_history`, report fields) is in
    /// weighted units. `None` keeps the plain unweighted objective.
    pub relative_floor: Option<f64>,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iters: 200,
            target_mse: 1e-8,
            step_tol: 1e-10,
            mu0: 1e-3,
            mu_factor: 10.0,
            mu_max: 1e12,
            relative_floor: None,
        }
    }
}

impl LmOptions {
    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(GimbalError::config("max_iters must be positive"));
        }
        for (name, v) in [
            ("target_mse", self.target_mse),
            ("step_tol", self.step_tol),
            ("mu0", self.mu0),
            ("mu_max", self.mu_max),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(GimbalError::config(format!(
                    "{name} must be finite and positive"
                )));
            }
        }
        if !(self.mu_factor.is_finite() && self.mu_factor > 1.0) {
            return Err(GimbalError::config("mu_factor must exceed 1"));
        }
        if let Some(floor) = self.relative_floor {
            if !(floor.is_finite() && floor > 0.0) {
                return Err(GimbalError::config(
                    "relative_floor must be finite and positive",
                ));
            }
        }
        Ok(())
    }

    /// Per-sample residual weights for this option set, or `None` for the
    /// unweighted objective.
    fn weights(&self, set: &TrainSet) -> Option<Vec<f64>> {
        self.relative_floor.map(|floor| {
            set.targets
                .iter()
                .map(|t| 1.0 / (t.norm() + floor))
                .collect()
        })
    }
}

/// Why training stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Mean squared error reached the target.
    TargetMse,
    /// Accepted step became negligible.
    StepTolerance,
    /// Iteration budget exhausted.
    MaxIterations,
    /// No error-reducing step exists up to the damping cap (local minimum).
    DampingOverflow,
}

/// Summary of a training run; `mse_history` holds the error after each
/// accepted step (starting with the initial error) and never increases.
#[derive(Debug, Clone, PartialEq)]
pub struct LmReport {
    pub iters: usize,
    pub initial_mse: f64,
    pub final_mse: f64,
    pub stop: StopReason,
    pub mse_history: Vec<f64>,
}

/// Assembles `J^T J`, `J^T r`, and the sum of squared residuals, chunked
/// with a deterministic fold. `weights` scales each sample's residual rows
/// (and matching Jacobian rows); `None` means unit weights.
fn normal_equations(
    mlp: &Mlp,
    set: &TrainSet,
    weights: Option<&[f64]>,
) -> (DMatrix<f64>, DVector<f64>, f64) {
    let n_params = mlp.num_params();
    let out_dim = mlp.output_dim();
    let bounds = parallel::chunk_bounds(set.len(), CHUNK);
    let partials = parallel::map_collect(bounds.len(), |ci| {
        let (lo, hi) = bounds[ci];
        let rows = (hi - lo) * out_dim;
        let mut j = DMatrix::zeros(rows, n_params);
        let mut r = DVector::zeros(rows);
        for (sample_in_chunk, idx) in (lo..hi).enumerate() {
            let w = weights.map_or(1.0, |ws| ws[idx]);
            let (y, jac) = mlp.forward_with_param_jacobian(&set.inputs[idx]);
            for o in 0..out_dim {
                let row = sample_in_chunk * out_dim + o;
                r[row] = w * (y[o] - set.targets[idx][o]);
                j.row_mut(row).copy_from(&(jac.row(o) * w));
            }
        }
        let a = j.tr_mul(&j);
        let g = j.tr_mul(&r);
        let sse = r.norm_squared();
        (a, g, sse)
    });
    let mut a = DMatrix::zeros(n_params, n_params);
    let mut g = DVector::zeros(n_params);
    let mut sse = 0.0;
    for (pa, pg, ps) in partials {
        a += pa;
        g += pg;
        sse += ps;
    }
    (a, g, sse)
}

/// Sum of squared residuals at the network's current parameters, using the
/// same chunking, weighting, and accumulation order as [`normal_equations`].
fn sum_squared_residuals(mlp: &Mlp, set: &TrainSet, weights: Option<&[f64]>) -> f64 {
    let out_dim = mlp.output_dim();
    let bounds = parallel::chunk_bounds(set.len(), CHUNK);
    let partials = parallel::map_collect(bounds.len(), |ci| {
        let (lo, hi) = bounds[ci];
        let mut sse = 0.0;
        for idx in lo..hi {
            let w = weights.map_or(1.0, |ws| ws[idx]);
            let y = mlp.forward(&set.inputs[idx]);
            for o in 0..out_dim {
                let e: f64 = w * (y[o] - set.targets[idx][o]);
                sse += e * e;
            }
        }
        sse
    });
    partials.into_iter().sum()
}

/// Trains the network in place; on return the network holds the best
/// parameters found.
pub fn lm_train(mlp: &mut Mlp, set: &TrainSet, opts: &LmOptions) -> Result<LmReport> {
    opts.validate()?;
    if set.input_dim() != mlp.input_dim() || set.output_dim() != mlp.output_dim() {
        return Err(GimbalError::config(format!(
            "training set is {}-in {}-out but network is {}-in {}-out",
            set.input_dim(),
            set.output_dim(),
            mlp.input_dim(),
            mlp.output_dim()
        )));
    }

    let n_params = mlp.num_params();
    let n_resid = (set.len() * mlp.output_dim()) as f64;
    let weights = opts.weights(set);
    let weights = weights.as_deref();
    let mut p = mlp.params();
    let (mut a, mut g, mut sse) = normal_equations(mlp, set, weights);
    if !sse.is_finite() {
        return Err(GimbalError::numeric(
            "non-finite error at initial parameters",
        ));
    }
    let initial_mse = sse / n_resid;
    let mut history = vec![initial_mse];
    let mut mu = opts.mu0;
    let mut stop = StopReason::MaxIterations;
    let mut iters = 0;

    'train: while iters < opts.max_iters {
        if sse / n_resid <= opts.target_mse {
            stop = StopReason::TargetMse;
            break;
        }
        // Tighten damping until a step reduces the error.
        let (step, sse_new) = loop {
            let mut damped = a.clone();
            for i in 0..n_params {
                damped[(i, i)] += mu;
            }
            if let Some(chol) = Cholesky::new(damped) {
                let step = chol.solve(&(-&g));
                let candidate = &p + &step;
                if candidate.iter().all(|v| v.is_finite()) {
                    mlp.set_params(&candidate)?;
                    let sse_new = sum_squared_residuals(mlp, set, weights);
                    if sse_new.is_finite() && sse_new < sse {
                        break (step, sse_new);
                    }
                    mlp.set_params(&p)?;
                }
            }
            mu *= opts.mu_factor;
            if mu > opts.mu_max {
                stop = StopReason::DampingOverflow;
                break 'train;
            }
        };

        iters += 1;
        p = mlp.params();
        sse = sse_new;
        history.push(sse / n_resid);
        mu = (mu / opts.mu_factor).max(1e-14);

        if sse / n_resid <= opts.target_mse {
            stop = StopReason::TargetMse;
            break;
        }
        if step.norm() <= opts.step_tol * (1.0 + p.norm()) {
            stop = StopReason::StepTolerance;
            break;
        }
        let eqs = normal_equations(mlp, set, weights);
        a = eqs.0;
        g = eqs.1;
        sse = eqs.2;
    }

    Ok(LmReport {
        iters,
        initial_mse,
        final_mse: sse / n_resid,
        stop,
        mse_history: history,
    })
}
