//! Feedforward network used to learn reference-acceleration corrections.
//!
//! The network is a fully connected multilayer perceptron with positive
//! linear (`poslin`, i.e. rectified linear) hidden units and a linear output
//! layer. Inputs pass through a stored per-channel standardization so the
//! trainer sees O(1) features regardless of the physical units of the raw
//! channels. The compensation network used by the hybrid controller maps the
//! six measured kinematic channels `(psi_a, theta_m, psi_a_dot, theta_m_dot,
//! psi_a_ddot, theta_m_ddot)` to a two-channel correction added to the
//! reference acceleration of each axis.
//!
//! Training lives in [`lm`]; weights serialize to a small binary format that
//! round-trips bit-exactly.

pub mod lm;

use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{GimbalError, Result};

/// Input channels consumed by the compensation network.
pub const COMP_INPUT_DIM: usize = 6;
/// Output channels produced by the compensation network.
pub const COMP_OUTPUT_DIM: usize = 2;
/// Layer widths of the standard compensation network.
pub const STANDARD_SIZES: [usize; 4] = [6, 20, 20, 2];

const MAGIC: &[u8; 8] = b"GMBLNN01";

#[inline]
fn poslin(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

#[inline]
fn poslin_prime(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// One fully connected layer, `out = W x + b` before activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

/// Multilayer perceptron with poslin hidden units, linear output, and a
/// stored input standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
    input_mean: DVector<f64>,
    input_std: DVector<f64>,
}

impl Mlp {
    /// Builds a network with the given layer widths and reproducible uniform
    /// `+/- 0.5 / sqrt(fan_in)` weights.
    pub fn new(sizes: &[usize], seed: u64) -> Result<Mlp> {
        if sizes.len() < 2 {
            return Err(GimbalError::config(
                "network needs at least input and output layers",
            ));
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(GimbalError::config("network layer widths must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for pair in sizes.windows(2) {
            let (n_in, n_out) = (pair[0], pair[1]);
            let bound = 0.5 / (n_in as f64).sqrt();
            let w = DMatrix::from_fn(n_out, n_in, |_, _| rng.gen_range(-bound..bound));
            let b = DVector::from_fn(n_out, |_, _| rng.gen_range(-bound..bound));
            layers.push(Layer { w, b });
        }
        Ok(Mlp {
            layers,
            input_mean: DVector::zeros(sizes[0]),
            input_std: DVector::repeat(sizes[0], 1.0),
        })
    }

    /// The standard six-in, two-out compensation network.
    pub fn standard(seed: u64) -> Mlp {
        Mlp::new(&STANDARD_SIZES, seed).expect("standard sizes are valid")
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut out = vec![self.layers[0].w.ncols()];
        out.extend(self.layers.iter().map(|l| l.w.nrows()));
        out
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().w.nrows()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Installs the per-channel input standardization applied before the
    /// first layer.
    pub fn set_standardization(&mut self, mean: DVector<f64>, std: DVector<f64>) -> Result<()> {
        if mean.len() != self.input_dim() || std.len() != self.input_dim() {
            return Err(GimbalError::config(
                "standardization length must match input width",
            ));
        }
        if mean.iter().any(|v| !v.is_finite()) || std.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(GimbalError::config(
                "standardization must be finite with positive scale",
            ));
        }
        self.input_mean = mean;
        self.input_std = std;
        Ok(())
    }

    pub fn standardization(&self) -> (&DVector<f64>, &DVector<f64>) {
        (&self.input_mean, &self.input_std)
    }

    fn standardize(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(x.len(), |i, _| {
            (x[i] - self.input_mean[i]) / self.input_std[i]
        })
    }

    /// Runs the network on a raw (unstandardized) input.
    pub fn forward(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut a = self.standardize(x);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = &layer.w * &a + &layer.b;
            if l < last {
                z.apply(|v| *v = poslin(*v));
            }
            a = z;
        }
        a
    }

    /// Forward pass keeping pre-activations and activations of every layer;
    /// `acts[0]` is the standardized input and `acts[L]` the output.
    fn forward_trace(&self, x: &DVector<f64>) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut pres = Vec::with_capacity(self.layers.len());
        acts.push(self.standardize(x));
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let z = &layer.w * acts.last().unwrap() + &layer.b;
            pres.push(z.clone());
            let a = if l < last {
                let mut a = z;
                a.apply(|v| *v = poslin(*v));
                a
            } else {
                z
            };
            acts.push(a);
        }
        (pres, acts)
    }

    /// Output together with the Jacobian of each output w.r.t. the flat
    /// parameter vector (rows = outputs, cols = parameters, layout matching
    /// [`Mlp::params`]).
    pub fn forward_with_param_jacobian(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let (pres, acts) = self.forward_trace(x);
        let n_out = self.output_dim();
        let mut jac = DMatrix::zeros(n_out, self.num_params());

        // Parameter offset of each layer in the flat vector.
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for layer in &self.layers {
            offsets.push(off);
            off += layer.w.len() + layer.b.len();
        }

        for o in 0..n_out {
            // Sensitivity of output o to the pre-activation of the current
            // layer, starting at the (linear) output layer.
            let mut delta = DVector::zeros(n_out);
            delta[o] = 1.0;
            for l in (0..self.layers.len()).rev() {
                let layer = &self.layers[l];
                let a_in = &acts[l];
                let base = offsets[l];
                let n_in = layer.w.ncols();
                for r in 0..layer.w.nrows() {
                    let d = delta[r];
                    if d != 0.0 {
                        for c in 0..n_in {
                            jac[(o, base + r * n_in + c)] = d * a_in[c];
                        }
                    }
                    jac[(o, base + layer.w.len() + r)] = d;
                }
                if l > 0 {
                    let mut back = layer.w.tr_mul(&delta);
                    for (v, z) in back.iter_mut().zip(pres[l - 1].iter()) {
                        *v *= poslin_prime(*z);
                    }
                    delta = back;
                }
            }
        }
        (acts.into_iter().last().unwrap(), jac)
    }

    /// Flattens all weights and biases (per layer: `W` row-major, then `b`).
    pub fn params(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.num_params());
        let mut k = 0;
        for layer in &self.layers {
            for r in 0..layer.w.nrows() {
                for c in 0..layer.w.ncols() {
                    out[k] = layer.w[(r, c)];
                    k += 1;
                }
            }
            for r in 0..layer.b.len() {
                out[k] = layer.b[r];
                k += 1;
            }
        }
        out
    }

    /// Writes a flat parameter vector back into the layers.
    pub fn set_params(&mut self, p: &DVector<f64>) -> Result<()> {
        if p.len() != self.num_params() {
            return Err(GimbalError::config(format!(
                "parameter vector has {} entries, network needs {}",
                p.len(),
                self.num_params()
            )));
        }
        let mut k = 0;
        for layer in &mut self.layers {
            for r in 0..layer.w.nrows() {
                for c in 0..layer.w.ncols() {
                    layer.w[(r, c)] = p[k];
                    k += 1;
                }
            }
            for r in 0..layer.b.len() {
                layer.b[r] = p[k];
                k += 1;
            }
        }
        Ok(())
    }

    /// Serializes to a little-endian binary file that round-trips bit-exactly.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        let sizes = self.sizes();
        push_u64(&mut buf, self.layers.len() as u64);
        for s in &sizes {
            push_u64(&mut buf, *s as u64);
        }
        for v in self.input_mean.iter().chain(self.input_std.iter()) {
            push_f64(&mut buf, *v);
        }
        for layer in &self.layers {
            for r in 0..layer.w.nrows() {
                for c in 0..layer.w.ncols() {
                    push_f64(&mut buf, layer.w[(r, c)]);
                }
            }
            for r in 0..layer.b.len() {
                push_f64(&mut buf, layer.b[r]);
            }
        }
        std::fs::write(path, buf)?;
        Ok(())
    }

    /// Loads a network written by [`Mlp::save`].
    pub fn load(path: &Path) -> Result<Mlp> {
        let display = path.display().to_string();
        let bytes = std::fs::read(path)?;
        let mut cur = Cursor {
            bytes: &bytes,
            pos: 0,
            path: &display,
        };
        let magic = cur.take(8)?;
        if magic != MAGIC {
            return Err(GimbalError::format(&display, "bad magic header"));
        }
        let n_layers = cur.u64()? as usize;
        if n_layers == 0 || n_layers > 64 {
            return Err(GimbalError::format(&display, "implausible layer count"));
        }
        let mut sizes = Vec::with_capacity(n_layers + 1);
        for _ in 0..=n_layers {
            let s = cur.u64()? as usize;
            if s == 0 || s > 1_000_000 {
                return Err(GimbalError::format(&display, "implausible layer width"));
            }
            sizes.push(s);
        }
        let mut mean = DVector::zeros(sizes[0]);
        for i in 0..sizes[0] {
            mean[i] = cur.f64()?;
        }
        let mut std = DVector::zeros(sizes[0]);
        for i in 0..sizes[0] {
            std[i] = cur.f64()?;
        }
        let mut layers = Vec::with_capacity(n_layers);
        for pair in sizes.windows(2) {
            let (n_in, n_out) = (pair[0], pair[1]);
            let mut w = DMatrix::zeros(n_out, n_in);
            for r in 0..n_out {
                for c in 0..n_in {
                    w[(r, c)] = cur.f64()?;
                }
            }
            let mut b = DVector::zeros(n_out);
            for r in 0..n_out {
                b[r] = cur.f64()?;
            }
            layers.push(Layer { w, b });
        }
        if cur.pos != bytes.len() {
            return Err(GimbalError::format(
                &display,
                "trailing bytes after network data",
            ));
        }
        let mut mlp = Mlp {
            layers,
            input_mean: DVector::zeros(sizes[0]),
            input_std: DVector::repeat(sizes[0], 1.0),
        };
        mlp.set_standardization(mean, std)
            .map_err(|e| GimbalError::format(&display, e.to_string()))?;
        Ok(mlp)
    }
}

fn push_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a str,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(GimbalError::format(self.path, "file truncated"));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().unwrap()))
    }
}

/// Assembles the canonical six-channel compensation input
/// `(psi_a, theta_m, psi_a_dot, theta_m_dot, psi_a_ddot, theta_m_ddot)`.
pub fn compensation_input(
    q: Vector2<f64>,
    q_dot: Vector2<f64>,
    q_ddot: Vector2<f64>,
) -> DVector<f64> {
    DVector::from_column_slice(&[q.x, q.y, q_dot.x, q_dot.y, q_ddot.x, q_ddot.y])
}

/// Evaluates the compensation network on measured kinematics, returning the
/// per-axis reference-acceleration correction.
pub fn nn_compensate(
    mlp: &Mlp,
    q: Vector2<f64>,
    q_dot: Vector2<f64>,
    q_ddot: Vector2<f64>,
) -> Result<Vector2<f64>> {
    if mlp.input_dim() != COMP_INPUT_DIM || mlp.output_dim() != COMP_OUTPUT_DIM {
        return Err(GimbalError::config(format!(
            "compensation network must be {COMP_INPUT_DIM}-in {COMP_OUTPUT_DIM}-out, got {:?}",
            mlp.sizes()
        )));
    }
    let y = mlp.forward(&compensation_input(q, q_dot, q_ddot));
    Ok(Vector2::new(y[0], y[1]))
}
