//! Computed-torque model: exact inverse dynamics of the ideal plant.
//!
//! The block converts per-axis acceleration commands into joint torques
//! through the full rigid-body model, `tau = M(q) q_ddot + h(q, q_dot,
//! base)`. It is deliberately ideal: it knows nothing about the polynomial
//! disturbance torques or about any parameter distortion applied to the
//! plant, so controllers built on it always work from the nominal parameter
//! set they were given.

use nalgebra::Vector2;

use crate::dynamics::{self, BaseMotionSample, GimbalParams, GimbalState};
use crate::error::Result;

/// Kinematic triple fed to the inverse dynamics: positions, rates and the
/// acceleration to realize. Axis order is (azimuth, elevation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CtmInput {
    pub q: Vector2<f64>,
    pub q_dot: Vector2<f64>,
    pub q_ddot: Vector2<f64>,
}

impl CtmInput {
    pub fn new(q: Vector2<f64>, q_dot: Vector2<f64>, q_ddot: Vector2<f64>) -> Self {
        CtmInput { q, q_dot, q_ddot }
    }

    fn state(&self) -> GimbalState {
        GimbalState {
            psi_a: self.q.x,
            theta_m: self.q.y,
            psi_a_dot: self.q_dot.x,
            theta_m_dot: self.q_dot.y,
        }
    }
}

/// Joint torques that realize `input.q_ddot` on the ideal plant at the
/// given kinematics: `tau = M(q) q_ddot + h(q, q_dot, base)`.
pub fn inverse_dynamics(
    p: &GimbalParams,
    input: &CtmInput,
    base: &BaseMotionSample,
) -> Result<Vector2<f64>> {
    let state = input.state();
    // Reuse the forward-dynamics input checks by validating here.
    if !state.is_finite() || !input.q_ddot.x.is_finite() || !input.q_ddot.y.is_finite() {
        return Err(crate::error::GimbalError::numeric(
            "computed-torque input contains non-finite values",
        ));
    }
    let m = dynamics::mass_matrix(p, &state, base);
    let h = dynamics::bias_terms(p, &state, base);
    Ok(m * input.q_ddot + h)
}

/// Difference between the torque demanded on the commanded kinematics and
/// the torque the ideal model associates with the plant's realized
/// kinematics. Feeding identical inputs yields an exact zero.
pub fn delta_torque(
    p: &GimbalParams,
    commanded: &CtmInput,
    plant: &CtmInput,
    base: &BaseMotionSample,
) -> Result<Vector2<f64>> {
    Ok(inverse_dynamics(p, commanded, base)? - inverse_dynamics(p, plant, base)?)
}
