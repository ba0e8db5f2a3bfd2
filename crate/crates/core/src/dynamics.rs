//! Rigid-body dynamics of a two-axis (yaw/pitch) gimbal on a moving base.
//!
//! Frames and conventions:
//!
//! * `F_b` — base frame, attached to the vehicle. The azimuth joint sits at
//!   `r_a_b` from the base origin.
//! * `F_a` — azimuth gimbal frame, obtained from `F_b` by rotating `psi_a`
//!   about `z_b`. `rot_z(psi_a)` maps `F_a` components to `F_b` components.
//! * `F_m` — pitch gimbal frame, obtained from `F_a` by rotating `theta_m`
//!   about `y_a`. `rot_y(theta_m)` maps `F_m` components to `F_a` components.
//!
//! Generalized coordinates are the joint angles `q = (psi_a, theta_m)`;
//! motor torques act directly on the joints, so applied/disturbance torques
//! are themselves the generalized forces. Body angular velocities compose
//! base rotation with joint rates:
//!
//! ```text
//! omega_a = Rz' * omega_b + psi_a_dot * e_z              (in F_a)
//! omega_m = Ry' * omega_a + theta_m_dot * e_y            (in F_m)
//! ```
//!
//! Base translational acceleration couples through the CoG offsets as an
//! inertial force `-m * a_b` on each body; base angular acceleration is
//! treated as zero (samples carry no rate derivative). Gravity is oriented
//! by the base roll/pitch/yaw with `z` up in the world frame. All internal
//! quantities are SI (kg, m, rad, s).
//!
//! The equations of motion are `M(q) q_ddot + h(q, q_dot, base) = tau`,
//! assembled from closed-form derivatives of the kinetic and potential
//! energy. The test suite checks `M` and `h` against numerically
//! differentiated energies, so the algebra here never has to be trusted
//! blindly.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

use crate::error::{GimbalError, Result};

/// Index of the azimuth axis in two-vectors used across the crate.
pub const AZ: usize = 0;
/// Index of the elevation axis in two-vectors used across the crate.
pub const EL: usize = 1;

/// Mass, geometry and limits of the two-body gimbal chain.
#[derive(Debug, Clone, PartialEq)]
pub struct GimbalParams {
    /// Azimuth (yaw) gimbal mass [kg].
    pub mass_az: f64,
    /// Pitch (elevation) gimbal mass [kg].
    pub mass_el: f64,
    /// Azimuth gimbal inertia about its CoG, in `F_a` [kg m^2].
    pub inertia_az: Matrix3<f64>,
    /// Pitch gimbal inertia about its CoG, in `F_m` [kg m^2].
    pub inertia_el: Matrix3<f64>,
    /// Azimuth CoG offset from the azimuth joint, in `F_a` [m].
    pub r_ga_a: Vector3<f64>,
    /// Pitch CoG offset from the pitch joint, in `F_m` [m].
    pub r_gm_m: Vector3<f64>,
    /// Pitch joint offset from the azimuth joint, in `F_a` [m].
    pub r_m_a: Vector3<f64>,
    /// Azimuth joint offset from the base origin, in `F_b` [m].
    pub r_a_b: Vector3<f64>,
    /// Symmetric field-of-regard half-range of the azimuth axis [rad].
    pub for_az_rad: f64,
    /// Symmetric field-of-regard half-range of the elevation axis [rad].
    pub for_el_rad: f64,
    /// Gravitational acceleration magnitude [m/s^2].
    pub gravity: f64,
}

impl GimbalParams {
    /// Nominal desk-unit parameter set (CAD values; offsets given in mm in
    /// the data sheet, stored here in metres).
    pub fn nominal() -> Self {
        GimbalParams {
            mass_az: 0.55,
            mass_el: 1.138,
            inertia_az: Matrix3::from_diagonal(&Vector3::new(0.002, 0.004, 0.002)),
            inertia_el: Matrix3::from_diagonal(&Vector3::new(0.004, 0.003, 0.004)),
            r_ga_a: Vector3::new(0.0, 0.0, 0.575e-3),
            r_gm_m: Vector3::new(0.0, -44.5e-3, 0.0),
            r_m_a: Vector3::new(0.0, 44.5e-3, 57.5e-3),
            r_a_b: Vector3::new(31.625e-3, 0.0, -57.5e-3),
            for_az_rad: 45f64.to_radians(),
            for_el_rad: 20f64.to_radians(),
            gravity: 9.81,
        }
    }

    /// Validates masses, inertia symmetry/positive-definiteness, limits.
    pub fn validate(&self) -> Result<()> {
        if !(self.mass_az > 0.0) || !(self.mass_el > 0.0) {
            return Err(GimbalError::config("gimbal masses must be positive"));
        }
        for (name, j) in [
            ("azimuth", &self.inertia_az),
            ("elevation", &self.inertia_el),
        ] {
            let asym = (j - j.transpose()).norm();
            if asym > 1e-12 * j.norm().max(1.0) {
                return Err(GimbalError::config(format!(
                    "{name} inertia matrix is not symmetric"
                )));
            }
            // Deliberately distorted study plants may carry off-diagonal
            // terms too large for a realizable body, so only the diagonal
            // is required to be positive here; the assembled joint-space
            // mass matrix is still guarded at every solve.
            if !(j[(0, 0)] > 0.0 && j[(1, 1)] > 0.0 && j[(2, 2)] > 0.0) {
                return Err(GimbalError::config(format!(
                    "{name} inertia diagonal must be positive"
                )));
            }
            if j.iter().any(|v| !v.is_finite()) {
                return Err(GimbalError::config(format!(
                    "{name} inertia matrix must be finite"
                )));
            }
        }
        if !(self.for_az_rad > 0.0) || !(self.for_el_rad > 0.0) {
            return Err(GimbalError::config(
                "field-of-regard limits must be positive",
            ));
        }
        if !self.gravity.is_finite() || self.gravity < 0.0 {
            return Err(GimbalError::config(
                "gravity must be finite and non-negative",
            ));
        }
        let finite = [self.r_ga_a, self.r_gm_m, self.r_m_a, self.r_a_b]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()));
        if !finite {
            return Err(GimbalError::config("geometry offsets must be finite"));
        }
        Ok(())
    }
}

/// Joint-space state of the gimbal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GimbalState {
    /// Azimuth joint angle [rad].
    pub psi_a: f64,
    /// Elevation joint angle [rad].
    pub theta_m: f64,
    /// Azimuth joint rate [rad/s].
    pub psi_a_dot: f64,
    /// Elevation joint rate [rad/s].
    pub theta_m_dot: f64,
}

impl GimbalState {
    pub fn zero() -> Self {
        GimbalState {
            psi_a: 0.0,
            theta_m: 0.0,
            psi_a_dot: 0.0,
            theta_m_dot: 0.0,
        }
    }

    pub fn angles(&self) -> Vector2<f64> {
        Vector2::new(self.psi_a, self.theta_m)
    }

    pub fn rates(&self) -> Vector2<f64> {
        Vector2::new(self.psi_a_dot, self.theta_m_dot)
    }

    pub fn is_finite(&self) -> bool {
        self.psi_a.is_finite()
            && self.theta_m.is_finite()
            && self.psi_a_dot.is_finite()
            && self.theta_m_dot.is_finite()
    }
}

/// One sample of prescribed base motion: angular velocity and translational
/// acceleration in the base frame, plus base attitude (roll, pitch, yaw,
/// world `z` up) used to orient gravity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaseMotionSample {
    /// Base angular velocity (p, q, r) in `F_b` [rad/s].
    pub omega: Vector3<f64>,
    /// Base translational acceleration in `F_b` [m/s^2].
    pub accel: Vector3<f64>,
    /// Base attitude as roll/pitch/yaw [rad].
    pub euler: Vector3<f64>,
}

impl BaseMotionSample {
    pub fn stationary() -> Self {
        BaseMotionSample {
            omega: Vector3::zeros(),
            accel: Vector3::zeros(),
            euler: Vector3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.omega
            .iter()
            .chain(self.accel.iter())
            .chain(self.euler.iter())
            .all(|x| x.is_finite())
    }
}

/// Rotation mapping components of the rotated frame back to the parent
/// frame, for a rotation of `angle` about the parent `z` axis.
pub fn rot_z(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Rotation mapping components of the rotated frame back to the parent
/// frame, for a rotation of `angle` about the parent `y` axis.
pub fn rot_y(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

/// Gravity acceleration vector expressed in the base frame for a base
/// attitude given as roll/pitch/yaw (world frame `z` up, ZYX composition).
pub fn gravity_in_base(euler: Vector3<f64>, g: f64) -> Vector3<f64> {
    let r_world_base = rot_z(euler.z) * rot_y(euler.y) * rot_x_mat(euler.x);
    r_world_base.transpose() * Vector3::new(0.0, 0.0, -g)
}

fn rot_x_mat(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

/// Shared kinematic quantities for one (params, state, base) evaluation.
/// Vectors are expressed in `F_a` unless noted otherwise.
struct Kinematics {
    ry: Matrix3<f64>,
    /// Base angular velocity in `F_a`.
    w: Vector3<f64>,
    /// Base angular velocity in `F_m`.
    wm: Vector3<f64>,
    /// Azimuth joint axis seen from `F_m`.
    u: Vector3<f64>,
    /// Azimuth body angular velocity, `F_a`.
    omega_a: Vector3<f64>,
    /// Pitch body angular velocity, `F_m`.
    omega_m: Vector3<f64>,
    /// Azimuth-rate velocity arm of the azimuth CoG: `e_z x r_ga_a`.
    k_a: Vector3<f64>,
    /// Azimuth-rate velocity arm of the pitch CoG: `e_z x d_e`.
    k_e: Vector3<f64>,
    /// Elevation-rate velocity arm of the pitch CoG: `Ry (e_y x r_gm_m)`.
    w_arm: Vector3<f64>,
    /// Derivative of `w_arm` with respect to `theta_m`.
    w_curv: Vector3<f64>,
    /// Pitch CoG velocity from joint rates, `F_a`.
    v_e: Vector3<f64>,
    /// Gravity acceleration vector in `F_a`.
    g_a: Vector3<f64>,
    /// Base translational acceleration in `F_a`.
    acc_a: Vector3<f64>,
}

impl Kinematics {
    fn new(p: &GimbalParams, s: &GimbalState, b: &BaseMotionSample) -> Self {
        let rz = rot_z(s.psi_a);
        let ry = rot_y(s.theta_m);
        let e_y = Vector3::y();
        let e_z = Vector3::z();

        let w = rz.transpose() * b.omega;
        let wm = ry.transpose() * w;
        let u = ry.transpose() * e_z;
        let omega_a = w + s.psi_a_dot * e_z;
        let omega_m = wm + s.psi_a_dot * u + s.theta_m_dot * e_y;

        let k_a = e_z.cross(&p.r_ga_a);
        let k_e = e_z.cross(&(p.r_m_a + ry * p.r_gm_m));
        let arm0 = e_y.cross(&p.r_gm_m);
        let w_arm = ry * arm0;
        let w_curv = ry * e_y.cross(&arm0);
        let v_e = s.psi_a_dot * k_e + s.theta_m_dot * w_arm;

        let g_a = rz.transpose() * gravity_in_base(b.euler, p.gravity);
        let acc_a = rz.transpose() * b.accel;

        Kinematics {
            ry,
            w,
            wm,
            u,
            omega_a,
            omega_m,
            k_a,
            k_e,
            w_arm,
            w_curv,
            v_e,
            g_a,
            acc_a,
        }
    }
}

fn check_inputs(s: &GimbalState, b: &BaseMotionSample) -> Result<()> {
    if !s.is_finite() {
        return Err(GimbalError::numeric(
            "gimbal state contains non-finite values",
        ));
    }
    if !b.is_finite() {
        return Err(GimbalError::numeric(
            "base motion sample contains non-finite values",
        ));
    }
    Ok(())
}

/// Joint-space mass matrix `M(q)`. Symmetric positive definite for valid
/// parameters.
pub fn mass_matrix(p: &GimbalParams, s: &GimbalState, b: &BaseMotionSample) -> Matrix2<f64> {
    let k = Kinematics::new(p, s, b);
    let e_y = Vector3::y();
    let e_z = Vector3::z();

    let m00 = (p.inertia_az * e_z).dot(&e_z)
        + (p.inertia_el * k.u).dot(&k.u)
        + p.mass_az * k.k_a.norm_squared()
        + p.mass_el * k.k_e.norm_squared();
    let m01 = (p.inertia_el * k.u).dot(&e_y) + p.mass_el * k.k_e.dot(&k.w_arm);
    let m11 = (p.inertia_el * e_y).dot(&e_y) + p.mass_el * k.w_arm.norm_squared();

    Matrix2::new(m00, m01, m01, m11)
}

/// Velocity, gravity and base-motion bias `h(q, q_dot, base)` such that the
/// equations of motion read `M(q) q_ddot + h = tau_applied + tau_dist`.
pub fn bias_terms(p: &GimbalParams, s: &GimbalState, b: &BaseMotionSample) -> Vector2<f64> {
    let k = Kinematics::new(p, s, b);
    let e_y = Vector3::y();
    let e_z = Vector3::z();
    let (psi_dot, theta_dot) = (s.psi_a_dot, s.theta_m_dot);

    // Time derivatives along the motion with q_ddot = 0 and base angular
    // velocity held constant in the base frame.
    let w_dot = -psi_dot * e_z.cross(&k.w);
    let wm_dot = -theta_dot * e_y.cross(&k.wm) + k.ry.transpose() * w_dot;
    let u_dot = -theta_dot * e_y.cross(&k.u);
    let omega_a_dot = w_dot;
    let omega_m_dot = wm_dot + psi_dot * u_dot;

    let d_e_dot = theta_dot * k.w_arm;
    let k_e_dot = e_z.cross(&d_e_dot);
    let w_arm_dot = theta_dot * k.w_curv;
    let v_e_dot = psi_dot * k_e_dot + theta_dot * w_arm_dot;

    // Rate of change of the generalized momenta at frozen joint
    // accelerations.
    let p_psi_dot = (p.inertia_az * omega_a_dot).dot(&e_z)
        + (p.inertia_el * omega_m_dot).dot(&k.u)
        + (p.inertia_el * k.omega_m).dot(&u_dot)
        + p.mass_el * (v_e_dot.dot(&k.k_e) + k.v_e.dot(&k_e_dot));
    let p_theta_dot = (p.inertia_el * omega_m_dot).dot(&e_y)
        + p.mass_el * (v_e_dot.dot(&k.w_arm) + k.v_e.dot(&w_arm_dot));

    // Configuration gradients of the kinetic energy.
    let domega_a_dpsi = -e_z.cross(&k.w);
    let domega_m_dpsi = k.ry.transpose() * domega_a_dpsi;
    let dt_dpsi = (p.inertia_az * k.omega_a).dot(&domega_a_dpsi)
        + (p.inertia_el * k.omega_m).dot(&domega_m_dpsi);

    let domega_m_dtheta = -e_y.cross(&k.wm) - psi_dot * e_y.cross(&k.u);
    let dv_e_dtheta = psi_dot * e_z.cross(&k.w_arm) + theta_dot * k.w_curv;
    let dt_dtheta =
        (p.inertia_el * k.omega_m).dot(&domega_m_dtheta) + p.mass_el * k.v_e.dot(&dv_e_dtheta);

    // Gravity enters as +dV/dq, the prescribed base acceleration as the
    // inertial force -m a_b projected through the CoG Jacobians.
    let grad_az = p.mass_az * k.k_a + p.mass_el * k.k_e;
    let h_psi = p_psi_dot - dt_dpsi - k.g_a.dot(&grad_az) + k.acc_a.dot(&grad_az);
    let h_theta = p_theta_dot - dt_dtheta + p.mass_el * (k.acc_a - k.g_a).dot(&k.w_arm);

    Vector2::new(h_psi, h_theta)
}

/// Solves `M(q) q_ddot = tau + tau_dist - h` for the joint accelerations.
pub fn forward_dynamics(
    p: &GimbalParams,
    s: &GimbalState,
    b: &BaseMotionSample,
    tau: Vector2<f64>,
    tau_dist: Vector2<f64>,
) -> Result<Vector2<f64>> {
    check_inputs(s, b)?;
    if !(tau.x.is_finite() && tau.y.is_finite() && tau_dist.x.is_finite() && tau_dist.y.is_finite())
    {
        return Err(GimbalError::numeric(
            "torque inputs contain non-finite values",
        ));
    }
    let m = mass_matrix(p, s, b);
    let h = bias_terms(p, s, b);
    let rhs = tau + tau_dist - h;
    let det = m.m11 * m.m22 - m.m12 * m.m21;
    if !(det > 1e-18) || !(m.m11 > 0.0) {
        return Err(GimbalError::numeric("mass matrix is not positive definite"));
    }
    Ok(Vector2::new(
        (m.m22 * rhs.x - m.m12 * rhs.y) / det,
        (m.m11 * rhs.y - m.m21 * rhs.x) / det,
    ))
}

/// CoG positions of the two bodies relative to the base origin, in `F_b`.
pub fn cog_positions(p: &GimbalParams, s: &GimbalState) -> (Vector3<f64>, Vector3<f64>) {
    let rz = rot_z(s.psi_a);
    let ry = rot_y(s.theta_m);
    let rho_az = p.r_a_b + rz * p.r_ga_a;
    let rho_el = p.r_a_b + rz * (p.r_m_a + ry * p.r_gm_m);
    (rho_az, rho_el)
}

/// Kinetic energy of the chain, including the base angular-velocity
/// contribution to the body rates.
pub fn kinetic_energy(p: &GimbalParams, s: &GimbalState, b: &BaseMotionSample) -> f64 {
    let k = Kinematics::new(p, s, b);
    let v_a = s.psi_a_dot * k.k_a;
    0.5 * p.mass_az * v_a.norm_squared()
        + 0.5 * p.mass_el * k.v_e.norm_squared()
        + 0.5 * (p.inertia_az * k.omega_a).dot(&k.omega_a)
        + 0.5 * (p.inertia_el * k.omega_m).dot(&k.omega_m)
}

/// Gravitational potential energy relative to the base origin.
pub fn potential_energy(p: &GimbalParams, s: &GimbalState, b: &BaseMotionSample) -> f64 {
    let g_b = gravity_in_base(b.euler, p.gravity);
    let (rho_az, rho_el) = cog_positions(p, s);
    -p.mass_az * g_b.dot(&rho_az) - p.mass_el * g_b.dot(&rho_el)
}

/// Total mechanical energy. Conserved along torque-free motion on a
/// stationary base; with applied torques the balance `dE/dt = q_dot . tau`
/// holds.
pub fn total_energy(p: &GimbalParams, s: &GimbalState, b: &BaseMotionSample) -> f64 {
    kinetic_energy(p, s, b) + potential_energy(p, s, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(rng: &mut ChaCha8Rng, p: &GimbalParams) -> GimbalState {
        GimbalState {
            psi_a: rng.gen_range(-p.for_az_rad..p.for_az_rad),
            theta_m: rng.gen_range(-p.for_el_rad..p.for_el_rad),
            psi_a_dot: rng.gen_range(-2.0..2.0),
            theta_m_dot: rng.gen_range(-2.0..2.0),
        }
    }

    fn random_base(rng: &mut ChaCha8Rng) -> BaseMotionSample {
        BaseMotionSample {
            omega: Vector3::new(
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
            ),
            accel: Vector3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            ),
            euler: Vector3::new(
                rng.gen_range(-0.4..0.4),
                rng.gen_range(-0.4..0.4),
                rng.gen_range(-3.0..3.0),
            ),
        }
    }

    fn random_spd(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
        let a = Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        a * a.transpose() * 1e-3 + Matrix3::identity() * 5e-4
    }

    fn random_offset(rng: &mut ChaCha8Rng, scale: f64) -> Vector3<f64> {
        Vector3::new(
            rng.gen_range(-scale..scale),
            rng.gen_range(-scale..scale),
            rng.gen_range(-scale..scale),
        )
    }

    fn random_params(rng: &mut ChaCha8Rng) -> GimbalParams {
        GimbalParams {
            mass_az: rng.gen_range(0.2..2.0),
            mass_el: rng.gen_range(0.2..2.0),
            inertia_az: random_spd(rng),
            inertia_el: random_spd(rng),
            r_ga_a: random_offset(rng, 0.05),
            r_gm_m: random_offset(rng, 0.05),
            r_m_a: random_offset(rng, 0.08),
            r_a_b: random_offset(rng, 0.08),
            for_az_rad: 45f64.to_radians(),
            for_el_rad: 20f64.to_radians(),
            gravity: 9.81,
        }
    }

    fn state_with(s: &GimbalState, dq: [f64; 2], dqd: [f64; 2]) -> GimbalState {
        GimbalState {
            psi_a: s.psi_a + dq[0],
            theta_m: s.theta_m + dq[1],
            psi_a_dot: s.psi_a_dot + dqd[0],
            theta_m_dot: s.theta_m_dot + dqd[1],
        }
    }

    /// Mass matrix from second differences of the kinetic energy in the
    /// joint rates. Exact to roundoff because KE is quadratic in rates.
    fn mass_matrix_fd(p: &GimbalParams, s: &GimbalState, b: &BaseMotionSample) -> Matrix2<f64> {
        let h = 1e-3;
        let mut m = Matrix2::zeros();
        for i in 0..2 {
            for j in 0..2 {
                let mut dpp = [0.0; 2];
                let mut dpm = [0.0; 2];
                let mut dmp = [0.0; 2];
                let mut dmm = [0.0; 2];
                dpp[i] += h;
                dpp[j] += h;
                dpm[i] += h;
                dpm[j] -= h;
                dmp[i] -= h;
                dmp[j] += h;
                dmm[i] -= h;
                dmm[j] -= h;
                let f = |d: [f64; 2]| kinetic_energy(p, &state_with(s, [0.0; 2], d), b);
                m[(i, j)] = (f(dpp) - f(dpm) - f(dmp) + f(dmm)) / (4.0 * h * h);
            }
        }
        m
    }

    /// Bias vector from the energy functions alone: momentum rate minus
    /// kinetic-energy gradient plus potential gradient plus the inertial
    /// force of the prescribed base acceleration.
    fn bias_terms_fd(p: &GimbalParams, s: &GimbalState, b: &BaseMotionSample) -> Vector2<f64> {
        let hq = 1e-5;
        let hv = 1e-4;
        let momentum = |st: &GimbalState, i: usize| {
            let mut dp = [0.0; 2];
            let mut dm = [0.0; 2];
            dp[i] += hv;
            dm[i] -= hv;
            (kinetic_energy(p, &state_with(st, [0.0; 2], dp), b)
                - kinetic_energy(p, &state_with(st, [0.0; 2], dm), b))
                / (2.0 * hv)
        };
        let qd = [s.psi_a_dot, s.theta_m_dot];
        let mut h_out = Vector2::zeros();
        for i in 0..2 {
            // dp_i/dt = sum_j (dp_i/dq_j) qd_j, joint accelerations frozen.
            let mut p_rate = 0.0;
            for j in 0..2 {
                let mut dqp = [0.0; 2];
                let mut dqm = [0.0; 2];
                dqp[j] += hq;
                dqm[j] -= hq;
                let dpi_dqj = (momentum(&state_with(s, dqp, [0.0; 2]), i)
                    - momentum(&state_with(s, dqm, [0.0; 2]), i))
                    / (2.0 * hq);
                p_rate += dpi_dqj * qd[j];
            }
            let mut dqp = [0.0; 2];
            let mut dqm = [0.0; 2];
            dqp[i] += hq;
            dqm[i] -= hq;
            let dke_dq = (kinetic_energy(p, &state_with(s, dqp, [0.0; 2]), b)
                - kinetic_energy(p, &state_with(s, dqm, [0.0; 2]), b))
                / (2.0 * hq);
            let dpe_dq = (potential_energy(p, &state_with(s, dqp, [0.0; 2]), b)
                - potential_energy(p, &state_with(s, dqm, [0.0; 2]), b))
                / (2.0 * hq);
            let (rho_a_p, rho_e_p) = cog_positions(p, &state_with(s, dqp, [0.0; 2]));
            let (rho_a_m, rho_e_m) = cog_positions(p, &state_with(s, dqm, [0.0; 2]));
            let drho_a = (rho_a_p - rho_a_m) / (2.0 * hq);
            let drho_e = (rho_e_p - rho_e_m) / (2.0 * hq);
            let inertial = (p.mass_az * drho_a + p.mass_el * drho_e).dot(&b.accel);
            h_out[i] = p_rate - dke_dq + dpe_dq + inertial;
        }
        h_out
    }

    #[test]
    fn nominal_mass_matrix_is_constant_and_decoupled() {
        let p = GimbalParams::nominal();
        let b = BaseMotionSample::stationary();
        for theta in [-0.3, 0.0, 0.25] {
            let s = GimbalState {
                psi_a: 0.4,
                theta_m: theta,
                ..GimbalState::zero()
            };
            let m = mass_matrix(&p, &s, &b);
            assert_abs_diff_eq!(m.m11, 0.006, epsilon = 1e-12);
            assert_abs_diff_eq!(m.m22, 0.003, epsilon = 1e-12);
            assert_abs_diff_eq!(m.m12, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn pure_azimuth_spin_kinetic_energy() {
        let p = GimbalParams::nominal();
        let b = BaseMotionSample::stationary();
        let s = GimbalState {
            psi_a_dot: 1.0,
            ..GimbalState::zero()
        };
        assert_abs_diff_eq!(kinetic_energy(&p, &s, &b), 0.003, epsilon = 1e-12);
    }

    #[test]
    fn mass_matrix_matches_energy_hessian() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..200 {
            let p = if trial % 3 == 0 {
                GimbalParams::nominal()
            } else {
                random_params(&mut rng)
            };
            let s = random_state(&mut rng, &p);
            let b = random_base(&mut rng);
            let m = mass_matrix(&p, &s, &b);
            let m_fd = mass_matrix_fd(&p, &s, &b);
            assert!((m - m_fd).norm() < 1e-6, "trial {trial}: {m} vs {m_fd}");
            assert_abs_diff_eq!(m.m12, m.m21, epsilon = 1e-14);
        }
    }

    #[test]
    fn bias_terms_match_energy_derivatives() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for trial in 0..200 {
            let p = if trial % 3 == 0 {
                GimbalParams::nominal()
            } else {
                random_params(&mut rng)
            };
            let s = random_state(&mut rng, &p);
            let b = random_base(&mut rng);
            let h = bias_terms(&p, &s, &b);
            let h_fd = bias_terms_fd(&p, &s, &b);
            assert!(
                (h - h_fd).norm() < 1e-6,
                "trial {trial}: analytic {h:?} vs finite-difference {h_fd:?}"
            );
        }
    }

    #[test]
    fn power_balance_along_vector_field() {
        // dE/dt must equal q_dot . tau on a stationary base, for any torque.
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for trial in 0..100 {
            let p = if trial % 2 == 0 {
                GimbalParams::nominal()
            } else {
                random_params(&mut rng)
            };
            let s = random_state(&mut rng, &p);
            let b = BaseMotionSample::stationary();
            let tau = Vector2::new(rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2));
            let qdd = forward_dynamics(&p, &s, &b, tau, Vector2::zeros()).unwrap();
            let eps = 1e-6;
            let forward = state_with(
                &s,
                [eps * s.psi_a_dot, eps * s.theta_m_dot],
                [eps * qdd.x, eps * qdd.y],
            );
            let backward = state_with(
                &s,
                [-eps * s.psi_a_dot, -eps * s.theta_m_dot],
                [-eps * qdd.x, -eps * qdd.y],
            );
            let de_dt =
                (total_energy(&p, &forward, &b) - total_energy(&p, &backward, &b)) / (2.0 * eps);
            let power = s.psi_a_dot * tau.x + s.theta_m_dot * tau.y;
            assert_abs_diff_eq!(de_dt, power, epsilon = 1e-8);
        }
    }

    #[test]
    fn gravity_moment_matches_cross_product_statics() {
        // Independent statics: moment of gravity about each joint axis from
        // a direct lever-arm cross product, against -h on a static state.
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..50 {
            let p = random_params(&mut rng);
            let mut b = random_base(&mut rng);
            b.omega = Vector3::zeros();
            b.accel = Vector3::zeros();
            let s = GimbalState {
                psi_a: rng.gen_range(-0.7..0.7),
                theta_m: rng.gen_range(-0.3..0.3),
                ..GimbalState::zero()
            };
            let h = bias_terms(&p, &s, &b);
            let rz = rot_z(s.psi_a);
            let ry = rot_y(s.theta_m);
            let g_a = rz.transpose() * gravity_in_base(b.euler, p.gravity);
            let g_m = ry.transpose() * g_a;
            // Elevation: lever arm of the pitch CoG about the pitch joint.
            let tau_el = p.mass_el * p.r_gm_m.cross(&g_m).dot(&Vector3::y());
            // Azimuth: both CoGs, lever arms about the azimuth joint.
            let d_e = p.r_m_a + ry * p.r_gm_m;
            let tau_az =
                (p.mass_az * p.r_ga_a.cross(&g_a) + p.mass_el * d_e.cross(&g_a)).dot(&Vector3::z());
            assert_abs_diff_eq!(h.y, -tau_el, epsilon = 1e-12);
            assert_abs_diff_eq!(h.x, -tau_az, epsilon = 1e-12);
        }
    }

    #[test]
    fn mass_matrix_spd_over_field_of_regard() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let nominal = GimbalParams::nominal();
        let mut distorted = nominal.clone();
        distorted.r_ga_a.y = -0.01;
        distorted.r_gm_m.z = -0.01;
        distorted.inertia_az[(0, 1)] = 0.02;
        distorted.inertia_az[(1, 0)] = 0.02;
        for p in [&nominal, &distorted] {
            for _ in 0..500 {
                let s = random_state(&mut rng, p);
                let m = mass_matrix(p, &s, &BaseMotionSample::stationary());
                assert!(m.m11 > 0.0);
                assert!(m.m11 * m.m22 - m.m12 * m.m21 > 0.0);
                assert_abs_diff_eq!(m.m12, m.m21, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn forward_dynamics_rejects_non_finite() {
        let p = GimbalParams::nominal();
        let b = BaseMotionSample::stationary();
        let mut s = GimbalState::zero();
        s.psi_a_dot = f64::NAN;
        assert!(forward_dynamics(&p, &s, &b, Vector2::zeros(), Vector2::zeros()).is_err());
        let s = GimbalState::zero();
        let bad = Vector2::new(f64::INFINITY, 0.0);
        assert!(forward_dynamics(&p, &s, &b, bad, Vector2::zeros()).is_err());
    }

    #[test]
    fn validate_rejects_bad_params() {
        let mut p = GimbalParams::nominal();
        p.mass_el = -1.0;
        assert!(p.validate().is_err());
        let mut p = GimbalParams::nominal();
        p.inertia_az[(0, 0)] = -0.002;
        assert!(p.validate().is_err());
        let mut p = GimbalParams::nominal();
        p.inertia_el[(0, 1)] = 0.5;
        assert!(p.validate().is_err());
        // A symmetric off-diagonal distortion is a legal study plant even
        // when it exceeds what a realizable rigid body could carry.
        let mut p = GimbalParams::nominal();
        p.inertia_az[(0, 1)] = 0.02;
        p.inertia_az[(1, 0)] = 0.02;
        assert!(p.validate().is_ok());
        assert!(GimbalParams::nominal().validate().is_ok());
    }
}
