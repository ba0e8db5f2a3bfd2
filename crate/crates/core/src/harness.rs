//! Fixed-step closed-loop simulator and experiment pipelines.
//!
//! The loop runs controller and plant on the same 1 kHz grid: sample the
//! reference and base motion, hand the controller the measured kinematics
//! (including the acceleration the plant produced under the torque held over
//! the previous interval), apply the commanded torque with zero-order hold,
//! and integrate the rigid-body dynamics with classical Runge-Kutta, with
//! the state-dependent disturbance torque evaluated inside the derivative.
//! Axis angles are clamped to the field of regard with the rate zeroed and
//! the event counted.
//!
//! On top of the runner sit the logging/metrics helpers and the training
//! pipeline that fits the compensation network from a logged sweep run.

use std::io::Write;
use std::path::Path;

use nalgebra::{DVector, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adrc::AdrcGains;
use crate::controllers::{
    ControllerKind, DeltaSource, EsoInput, GimbalController, PlantFeedback,
    DEFAULT_DELTA_FILTER_TAU,
};
use crate::ctm::{self, CtmInput};
use crate::disturbance::{disturbance_torque, BaseMotionProfile, CoeffSet};
use crate::dynamics::{
    forward_dynamics, total_energy, BaseMotionSample, GimbalParams, GimbalState,
};
use crate::error::{GimbalError, Result};
use crate::nn::lm::{lm_train, standardize_inputs, LmOptions, LmReport, TrainSet};
use crate::nn::{compensation_input, Mlp};

/// Classical 4th-order Runge-Kutta step of `dy/dt = f(t, y)`.
pub fn rk4_step<F>(f: &F, y: &[f64], t: f64, dt: f64) -> Result<Vec<f64>>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>>,
{
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(GimbalError::config("integration step must be positive"));
    }
    let n = y.len();
    let stage = |base: &[f64], k: &[f64], scale: f64| -> Vec<f64> {
        (0..n).map(|i| base[i] + scale * k[i]).collect()
    };
    let check = |k: &Vec<f64>, which: &str| -> Result<()> {
        if k.len() != n {
            return Err(GimbalError::numeric(format!(
                "derivative returned {} entries for a {n}-state system",
                k.len()
            )));
        }
        if k.iter().any(|v| !v.is_finite()) {
            return Err(GimbalError::numeric(format!(
                "non-finite derivative in stage {which} at t = {t}"
            )));
        }
        Ok(())
    };
    let k1 = f(t, y)?;
    check(&k1, "k1")?;
    let k2 = f(t + 0.5 * dt, &stage(y, &k1, 0.5 * dt))?;
    check(&k2, "k2")?;
    let k3 = f(t + 0.5 * dt, &stage(y, &k2, 0.5 * dt))?;
    check(&k3, "k3")?;
    let k4 = f(t + dt, &stage(y, &k3, dt))?;
    check(&k4, "k4")?;
    Ok((0..n)
        .map(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Per-axis reference command [rad] as a function of time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReferenceProfile {
    Constant {
        value: f64,
    },
    Step {
        value: f64,
        at: f64,
    },
    Sine {
        amplitude: f64,
        frequency_hz: f64,
        phase_rad: f64,
    },
    /// Linear amplitude ramp `a0 -> a1` with a linear frequency chirp
    /// `f0 -> f1` over `duration`; held at the end values afterwards. The
    /// phase offset [rad] lets two axes sweep in quadrature so their joint
    /// trajectory fills the position plane instead of tracing one line.
    Sweep {
        a0: f64,
        a1: f64,
        f0_hz: f64,
        f1_hz: f64,
        duration: f64,
        phase_rad: f64,
    },
}

impl ReferenceProfile {
    pub fn sample(&self, t: f64) -> f64 {
        use std::f64::consts::TAU;
        match *self {
            ReferenceProfile::Constant { value } => value,
            ReferenceProfile::Step { value, at } => {
                if t >= at {
                    value
                } else {
                    0.0
                }
            }
            ReferenceProfile::Sine {
                amplitude,
                frequency_hz,
                phase_rad,
            } => amplitude * (TAU * frequency_hz * t + phase_rad).sin(),
            ReferenceProfile::Sweep {
                a0,
                a1,
                f0_hz,
                f1_hz,
                duration,
                phase_rad,
            } => {
                let tc = t.clamp(0.0, duration);
                let amp = a0 + (a1 - a0) * tc / duration;
                let mut phase = TAU * (f0_hz * tc + (f1_hz - f0_hz) * tc * tc / (2.0 * duration));
                if t > duration {
                    phase += TAU * f1_hz * (t - duration);
                }
                amp * (phase + phase_rad).sin()
            }
        }
    }

    /// Largest magnitude the profile can command (for range validation).
    pub fn peak(&self) -> f64 {
        match *self {
            ReferenceProfile::Constant { value } => value.abs(),
            ReferenceProfile::Step { value, .. } => value.abs(),
            ReferenceProfile::Sine { amplitude, .. } => amplitude.abs(),
            ReferenceProfile::Sweep { a0, a1, .. } => a0.abs().max(a1.abs()),
        }
    }

    pub fn validate(&self, axis: &str) -> Result<()> {
        let fields: Vec<f64> = match *self {
            ReferenceProfile::Constant { value } => vec![value],
            ReferenceProfile::Step { value, at } => vec![value, at],
            ReferenceProfile::Sine {
                amplitude,
                frequency_hz,
                phase_rad,
            } => {
                vec![amplitude, frequency_hz, phase_rad]
            }
            ReferenceProfile::Sweep {
                a0,
                a1,
                f0_hz,
                f1_hz,
                duration,
                phase_rad,
            } => {
                vec![a0, a1, f0_hz, f1_hz, duration, phase_rad]
            }
        };
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(GimbalError::config(format!(
                "{axis} reference has non-finite fields"
            )));
        }
        if let ReferenceProfile::Sweep { duration, .. } = *self {
            if duration <= 0.0 {
                return Err(GimbalError::config(format!(
                    "{axis} sweep duration must be positive"
                )));
            }
        }
        Ok(())
    }
}

/// Optional actuator model: first-order torque lag plus saturation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotorModel {
    /// Lag time constant [s]; 0 disables the lag.
    pub tau: f64,
    /// Symmetric torque limit [N m], if any.
    pub max_torque: Option<f64>,
}

/// Optional additive Gaussian measurement noise fed to the controller (the
/// logged plant state stays exact).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementNoise {
    pub seed: u64,
    pub angle_std: f64,
    pub rate_std: f64,
    pub accel_std: f64,
}

/// Everything describing one closed-loop experiment except the controller
/// variant and its networks.
#[derive(Debug, Clone)]
pub struct Scenario {
    /// Parameters the simulated plant actually has.
    pub plant: GimbalParams,
    /// Parameters the controller's model blocks believe (usually nominal).
    pub model: GimbalParams,
    pub gains_az: AdrcGains,
    pub gains_el: AdrcGains,
    pub coeffs: CoeffSet,
    pub scale_az: f64,
    pub scale_el: f64,
    pub base: BaseMotionProfile,
    pub ref_az: ReferenceProfile,
    pub ref_el: ReferenceProfile,
    pub duration: f64,
    /// Control period [s]; plant and controller share the grid.
    pub dt: f64,
    /// RK4 substeps per control period (torque still held over the full
    /// period); >1 is used by integration-convergence checks.
    pub substeps: usize,
    pub initial: GimbalState,
    pub motor: Option<MotorModel>,
    pub noise: Option<MeasurementNoise>,
    pub eso_input: EsoInput,
    pub delta_source: DeltaSource,
    pub delta_filter_tau: f64,
}

impl Scenario {
    /// A quiet starting point: nominal plant and model, default gains, no
    /// disturbance, stationary base, zero references, 1 kHz, 5 s.
    pub fn baseline() -> Scenario {
        Scenario {
            plant: GimbalParams::nominal(),
            model: GimbalParams::nominal(),
            gains_az: AdrcGains::default(),
            gains_el: AdrcGains::default(),
            coeffs: CoeffSet::zero(),
            scale_az: 1.0,
            scale_el: 1.0,
            base: BaseMotionProfile::Zero,
            ref_az: ReferenceProfile::Constant { value: 0.0 },
            ref_el: ReferenceProfile::Constant { value: 0.0 },
            duration: 5.0,
            dt: 1e-3,
            substeps: 1,
            initial: GimbalState::zero(),
            motor: None,
            noise: None,
            eso_input: EsoInput::default(),
            delta_source: DeltaSource::default(),
            delta_filter_tau: DEFAULT_DELTA_FILTER_TAU,
        }
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        self.model.validate()?;
        self.gains_az.validate()?;
        self.gains_el.validate()?;
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(GimbalError::config("control period must be positive"));
        }
        if !(self.duration.is_finite()) || self.duration < self.dt {
            return Err(GimbalError::config(
                "duration must cover at least one control period",
            ));
        }
        if self.substeps == 0 {
            return Err(GimbalError::config("substeps must be at least 1"));
        }
        if !(self.scale_az.is_finite() && self.scale_el.is_finite()) {
            return Err(GimbalError::config("disturbance scales must be finite"));
        }
        self.ref_az.validate("azimuth")?;
        self.ref_el.validate("elevation")?;
        let deg = 180.0 / std::f64::consts::PI;
        if self.ref_az.peak() > self.plant.for_az_rad {
            return Err(GimbalError::config(format!(
                "azimuth reference peak {:.3} deg exceeds the field of regard +/- {:.3} deg",
                self.ref_az.peak() * deg,
                self.plant.for_az_rad * deg
            )));
        }
        if self.ref_el.peak() > self.plant.for_el_rad {
            return Err(GimbalError::config(format!(
                "elevation reference peak {:.3} deg exceeds the field of regard +/- {:.3} deg",
                self.ref_el.peak() * deg,
                self.plant.for_el_rad * deg
            )));
        }
        if !self.initial.is_finite() {
            return Err(GimbalError::config("initial state must be finite"));
        }
        if let Some(m) = &self.motor {
            if !(m.tau.is_finite() && m.tau >= 0.0) {
                return Err(GimbalError::config("motor lag must be non-negative"));
            }
            if let Some(t) = m.max_torque {
                if !(t.is_finite() && t > 0.0) {
                    return Err(GimbalError::config("torque limit must be positive"));
                }
            }
        }
        if let Some(n) = &self.noise {
            if [n.angle_std, n.rate_std, n.accel_std]
                .iter()
                .any(|v| !(v.is_finite() && *v >= 0.0))
            {
                return Err(GimbalError::config("noise levels must be non-negative"));
            }
        }
        if !(self.delta_filter_tau.is_finite() && self.delta_filter_tau >= 0.0) {
            return Err(GimbalError::config(
                "delta filter time constant must be non-negative",
            ));
        }
        Ok(())
    }
}

/// Networks available to a run: the one installed at start and an optional
/// replacement installed at a given time.
#[derive(Debug, Clone, Copy, Default)]
pub struct NetworkPlan<'a> {
    pub initial: Option<&'a Mlp>,
    pub swap: Option<(f64, &'a Mlp)>,
}

impl<'a> NetworkPlan<'a> {
    pub fn none() -> Self {
        NetworkPlan::default()
    }

    pub fn with(initial: &'a Mlp) -> Self {
        NetworkPlan {
            initial: Some(initial),
            swap: None,
        }
    }
}

/// One logged control instant; values are taken at the start of the
/// interval the torque is held over.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub t: f64,
    pub ref_az: f64,
    pub ref_el: f64,
    pub v1_az: f64,
    pub v1_el: f64,
    pub psi_a: f64,
    pub theta_m: f64,
    pub psi_a_dot: f64,
    pub theta_m_dot: f64,
    pub u_az: f64,
    pub u_el: f64,
    pub comp_az: f64,
    pub comp_el: f64,
    pub t_az: f64,
    pub t_el: f64,
    pub td_az: f64,
    pub td_el: f64,
    pub energy: f64,
}

/// Kinematics/command pairs captured for network training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSample {
    pub q: Vector2<f64>,
    pub q_dot: Vector2<f64>,
    /// Acceleration under the torque held over the previous interval (what
    /// the controller's feedback carried).
    pub q_ddot_meas: Vector2<f64>,
    /// Acceleration command issued this step.
    pub accel_cmd: Vector2<f64>,
    /// Acceleration the plant takes on under the newly applied torque.
    pub q_ddot_applied: Vector2<f64>,
}

/// Full record of a closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub dt: f64,
    pub frames: Vec<Frame>,
    pub train: Vec<TrainSample>,
    /// Field-of-regard clamp events (angle pinned, rate zeroed).
    pub clamp_events: usize,
    /// Torque saturation events (when a limit is configured).
    pub saturation_events: usize,
}

pub const RUN_CSV_HEADER: &str = "t,ref_az,ref_el,v1_az,v1_el,psi_a,theta_m,psi_a_dot,theta_m_dot,u_az,u_el,comp_az,comp_el,T_az,T_el,Td_az,Td_el,energy";

impl RunLog {
    pub fn duration(&self) -> f64 {
        self.frames.len() as f64 * self.dt
    }

    /// Writes the full log as CSV with the documented 18-column header.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        writeln!(w, "{RUN_CSV_HEADER}")?;
        for f in &self.frames {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                f.t,
                f.ref_az,
                f.ref_el,
                f.v1_az,
                f.v1_el,
                f.psi_a,
                f.theta_m,
                f.psi_a_dot,
                f.theta_m_dot,
                f.u_az,
                f.u_el,
                f.comp_az,
                f.comp_el,
                f.t_az,
                f.t_el,
                f.td_az,
                f.td_el,
                f.energy
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Mean absolute reference-tracking error per axis in degrees over
/// `t >= settle_skip`.
pub fn mean_tracking_error(log: &RunLog, settle_skip: f64) -> Result<Vector2<f64>> {
    mean_tracking_error_window(log, settle_skip, f64::INFINITY)
}

/// Mean absolute tracking error per axis in degrees over `t0 <= t <= t1`.
pub fn mean_tracking_error_window(log: &RunLog, t0: f64, t1: f64) -> Result<Vector2<f64>> {
    let mut sum = Vector2::zeros();
    let mut count = 0usize;
    for f in &log.frames {
        if f.t + 1e-12 >= t0 && f.t <= t1 + 1e-12 {
            sum.x += (f.ref_az - f.psi_a).abs();
            sum.y += (f.ref_el - f.theta_m).abs();
            count += 1;
        }
    }
    if count == 0 {
        return Err(GimbalError::config(format!(
            "tracking-error window [{t0}, {t1}] contains no samples"
        )));
    }
    Ok(sum * (180.0 / std::f64::consts::PI / count as f64))
}

/// Runs one closed-loop scenario under the given controller variant.
pub fn run_scenario(sc: &Scenario, kind: ControllerKind, nets: &NetworkPlan<'_>) -> Result<RunLog> {
    sc.validate()?;
    let mut ctrl = GimbalController::new(
        kind,
        sc.gains_az.clone(),
        sc.gains_el.clone(),
        sc.model.clone(),
        sc.dt,
    )?;
    ctrl.set_eso_input(sc.eso_input);
    ctrl.set_delta_source(sc.delta_source);
    ctrl.set_delta_filter_tau(sc.delta_filter_tau)?;
    if let Some(net) = nets.initial {
        ctrl.set_network(net.clone())?;
    }
    let mut pending_swap = nets.swap;
    if let Some((t_swap, _)) = pending_swap {
        if !(t_swap.is_finite() && t_swap >= 0.0) {
            return Err(GimbalError::config(
                "network swap time must be non-negative",
            ));
        }
    }

    let motor_lag = sc.motor.as_ref().map(|m| m.tau).filter(|tau| *tau > 0.0);
    let max_torque = sc.motor.as_ref().and_then(|m| m.max_torque);
    let mut noise_rng = sc.noise.map(|n| ChaCha8Rng::seed_from_u64(n.seed));

    let steps = sc.steps();
    let mut frames = Vec::with_capacity(steps);
    let mut train = Vec::with_capacity(steps);
    let mut clamp_events = 0usize;
    let mut saturation_events = 0usize;

    let mut state = sc.initial;
    // Torque currently acting on the plant: commanded ZOH value, or the lag
    // state when the motor model is enabled.
    let mut held_torque = Vector2::zeros();
    let mut lag_torque = Vector2::zeros();

    for n in 0..steps {
        let t = n as f64 * sc.dt;
        if let Some((t_swap, net)) = pending_swap {
            if t + 0.5 * sc.dt >= t_swap {
                ctrl.set_network(net.clone())?;
                pending_swap = None;
            }
        }
        let b = sc.base.sample(t)?;
        let reference = Vector2::new(sc.ref_az.sample(t), sc.ref_el.sample(t));

        let td_now = disturbance_torque(&sc.coeffs, &state, sc.scale_az, sc.scale_el);
        let acting = if motor_lag.is_some() {
            lag_torque
        } else {
            held_torque
        };
        let q_ddot_meas = forward_dynamics(&sc.plant, &state, &b, acting, td_now)?;
        let q = state.angles();
        let q_dot = state.rates();
        let mut fb = PlantFeedback {
            q,
            q_dot,
            q_ddot: q_ddot_meas,
        };
        if let (Some(spec), Some(rng)) = (&sc.noise, noise_rng.as_mut()) {
            let mut draw = |std: f64| -> f64 {
                // Box-Muller from two uniform draws; consumed even when the
                // level is zero so channel layout stays fixed.
                let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                std * (-2.0 * u1.ln()).sqrt() * u2.cos()
            };
            fb.q.x += draw(spec.angle_std);
            fb.q.y += draw(spec.angle_std);
            fb.q_dot.x += draw(spec.rate_std);
            fb.q_dot.y += draw(spec.rate_std);
            fb.q_ddot.x += draw(spec.accel_std);
            fb.q_ddot.y += draw(spec.accel_std);
        }

        let out = ctrl.step(reference, &fb, &b)?;
        let mut cmd = out.torque;
        if let Some(limit) = max_torque {
            let clipped = Vector2::new(cmd.x.clamp(-limit, limit), cmd.y.clamp(-limit, limit));
            if clipped != cmd {
                saturation_events += 1;
            }
            cmd = clipped;
        }

        let torque_at_start = if motor_lag.is_some() { lag_torque } else { cmd };
        let q_ddot_applied = forward_dynamics(&sc.plant, &state, &b, torque_at_start, td_now)?;

        frames.push(Frame {
            t,
            ref_az: reference.x,
            ref_el: reference.y,
            v1_az: out.tg_pos.x,
            v1_el: out.tg_pos.y,
            psi_a: state.psi_a,
            theta_m: state.theta_m,
            psi_a_dot: state.psi_a_dot,
            theta_m_dot: state.theta_m_dot,
            u_az: out.accel_cmd.x,
            u_el: out.accel_cmd.y,
            comp_az: out.compensation.x,
            comp_el: out.compensation.y,
            t_az: cmd.x,
            t_el: cmd.y,
            td_az: td_now.x,
            td_el: td_now.y,
            energy: total_energy(&sc.plant, &state, &b),
        });
        train.push(TrainSample {
            q,
            q_dot,
            q_ddot_meas,
            accel_cmd: out.accel_cmd,
            q_ddot_applied,
        });

        // Integrate the plant over [t, t + dt] with the commanded torque
        // held; disturbance and base motion are evaluated at stage times.
        let derivative = |tt: f64, y: &[f64]| -> Result<Vec<f64>> {
            let s = GimbalState {
                psi_a: y[0],
                theta_m: y[1],
                psi_a_dot: y[2],
                theta_m_dot: y[3],
            };
            let bb = sc.base.sample(tt)?;
            let torque = if motor_lag.is_some() {
                Vector2::new(y[4], y[5])
            } else {
                cmd
            };
            let td = disturbance_torque(&sc.coeffs, &s, sc.scale_az, sc.scale_el);
            let acc = forward_dynamics(&sc.plant, &s, &bb, torque, td)?;
            let mut dy = vec![y[2], y[3], acc.x, acc.y];
            if let Some(tau) = motor_lag {
                dy.push((cmd.x - y[4]) / tau);
                dy.push((cmd.y - y[5]) / tau);
            }
            Ok(dy)
        };
        let mut y = vec![
            state.psi_a,
            state.theta_m,
            state.psi_a_dot,
            state.theta_m_dot,
        ];
        if motor_lag.is_some() {
            y.push(lag_torque.x);
            y.push(lag_torque.y);
        }
        let h = sc.dt / sc.substeps as f64;
        for k in 0..sc.substeps {
            y = rk4_step(&derivative, &y, t + k as f64 * h, h)?;
        }
        state = GimbalState {
            psi_a: y[0],
            theta_m: y[1],
            psi_a_dot: y[2],
            theta_m_dot: y[3],
        };
        if motor_lag.is_some() {
            lag_torque = Vector2::new(y[4], y[5]);
        }
        held_torque = cmd;

        if state.psi_a.abs() > sc.plant.for_az_rad {
            state.psi_a = state.psi_a.clamp(-sc.plant.for_az_rad, sc.plant.for_az_rad);
            state.psi_a_dot = 0.0;
            clamp_events += 1;
        }
        if state.theta_m.abs() > sc.plant.for_el_rad {
            state.theta_m = state
                .theta_m
                .clamp(-sc.plant.for_el_rad, sc.plant.for_el_rad);
            state.theta_m_dot = 0.0;
            clamp_events += 1;
        }
    }

    Ok(RunLog {
        dt: sc.dt,
        frames,
        train,
        clamp_events,
        saturation_events,
    })
}

/// Integrates torque-free motion (no control, no disturbance) and reports
/// `(t, state, total energy)` at every grid point, including the start.
pub fn integrate_free(
    p: &GimbalParams,
    s0: GimbalState,
    duration: f64,
    dt: f64,
    substeps: usize,
) -> Result<Vec<(f64, GimbalState, f64)>> {
    p.validate()?;
    if !(dt > 0.0 && duration >= dt) {
        return Err(GimbalError::config("duration must cover at least one step"));
    }
    if substeps == 0 {
        return Err(GimbalError::config("substeps must be at least 1"));
    }
    let base = BaseMotionSample::stationary();
    let derivative = |_tt: f64, y: &[f64]| -> Result<Vec<f64>> {
        let s = GimbalState {
            psi_a: y[0],
            theta_m: y[1],
            psi_a_dot: y[2],
            theta_m_dot: y[3],
        };
        let acc = forward_dynamics(p, &s, &base, Vector2::zeros(), Vector2::zeros())?;
        Ok(vec![y[2], y[3], acc.x, acc.y])
    };
    let steps = (duration / dt).round() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    let mut state = s0;
    out.push((0.0, state, total_energy(p, &state, &base)));
    let mut y = vec![
        state.psi_a,
        state.theta_m,
        state.psi_a_dot,
        state.theta_m_dot,
    ];
    for n in 0..steps {
        let t = n as f64 * dt;
        let h = dt / substeps as f64;
        for k in 0..substeps {
            y = rk4_step(&derivative, &y, t + k as f64 * h, h)?;
        }
        state = GimbalState {
            psi_a: y[0],
            theta_m: y[1],
            psi_a_dot: y[2],
            theta_m_dot: y[3],
        };
        out.push((t + dt, state, total_energy(p, &state, &base)));
    }
    Ok(out)
}

/// Classical computed-torque tracking on an ideal, disturbance-free plant:
/// the torque for each hold interval is the model inversion of the
/// reference kinematics sampled at the interval midpoint, with the
/// commanded acceleration augmented by PD feedback on the measured state.
/// Returns the maximum absolute position error [rad] across both axes; the
/// reference is a sine of the given amplitude on both axes.
pub fn ctm_tracking_sine_error(
    p: &GimbalParams,
    amplitude: f64,
    frequency_hz: f64,
    duration: f64,
    dt: f64,
) -> Result<f64> {
    use std::f64::consts::TAU;
    p.validate()?;
    let base = BaseMotionSample::stationary();
    let omega = TAU * frequency_hz;
    let q_ref = |t: f64| amplitude * (omega * t).sin();
    let qd_ref = |t: f64| amplitude * omega * (omega * t).cos();
    let qdd_ref = |t: f64| -amplitude * omega * omega * (omega * t).sin();
    let (kp, kd) = (400.0, 40.0);

    let steps = (duration / dt).round() as usize;
    let mut state = GimbalState {
        psi_a: 0.0,
        theta_m: 0.0,
        psi_a_dot: qd_ref(0.0),
        theta_m_dot: qd_ref(0.0),
    };
    let mut worst = 0.0f64;
    for n in 0..steps {
        let t = n as f64 * dt;
        let tm = t + 0.5 * dt;
        let accel = Vector2::new(
            qdd_ref(tm) + kp * (q_ref(t) - state.psi_a) + kd * (qd_ref(t) - state.psi_a_dot),
            qdd_ref(tm) + kp * (q_ref(t) - state.theta_m) + kd * (qd_ref(t) - state.theta_m_dot),
        );
        let input = CtmInput::new(
            Vector2::new(q_ref(tm), q_ref(tm)),
            Vector2::new(qd_ref(tm), qd_ref(tm)),
            accel,
        );
        let torque = ctm::inverse_dynamics(p, &input, &base)?;
        let derivative = |_tt: f64, y: &[f64]| -> Result<Vec<f64>> {
            let s = GimbalState {
                psi_a: y[0],
                theta_m: y[1],
                psi_a_dot: y[2],
                theta_m_dot: y[3],
            };
            let acc = forward_dynamics(p, &s, &base, torque, Vector2::zeros())?;
            Ok(vec![y[2], y[3], acc.x, acc.y])
        };
        let y = vec![
            state.psi_a,
            state.theta_m,
            state.psi_a_dot,
            state.theta_m_dot,
        ];
        let y = rk4_step(&derivative, &y, t, dt)?;
        state = GimbalState {
            psi_a: y[0],
            theta_m: y[1],
            psi_a_dot: y[2],
            theta_m_dot: y[3],
        };
        let r = q_ref(t + dt);
        worst = worst
            .max((state.psi_a - r).abs())
            .max((state.theta_m - r).abs());
    }
    Ok(worst)
}

/// Converts a logged run into a supervised set: inputs are the measured
/// kinematics the controller saw, targets are the per-axis gap between the
/// commanded and realized accelerations, at the full control rate.
pub fn build_dataset(log: &RunLog) -> Result<TrainSet> {
    if log.train.is_empty() {
        return Err(GimbalError::config("run log holds no training samples"));
    }
    let mut inputs = Vec::with_capacity(log.train.len());
    let mut targets = Vec::with_capacity(log.train.len());
    for s in &log.train {
        inputs.push(compensation_input(s.q, s.q_dot, s.q_ddot_meas));
        targets.push(DVector::from_column_slice(&[
            s.accel_cmd.x - s.q_ddot_applied.x,
            s.accel_cmd.y - s.q_ddot_applied.y,
        ]));
    }
    TrainSet::new(inputs, targets)
}

/// Knobs of the training pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingOptions {
    /// Seed of the network initialization.
    pub net_seed: u64,
    /// Keep every n-th sample of the full-rate dataset.
    pub decimation: usize,
    pub lm: LmOptions,
}

impl Default for TrainingOptions {
    fn default() -> Self {
        TrainingOptions {
            net_seed: 1,
            decimation: 10,
            lm: LmOptions::default(),
        }
    }
}

/// Result of [`train_pipeline`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub mlp: Mlp,
    pub report: LmReport,
    pub dataset_len: usize,
    /// Pooled variance of the training targets, the scale against which the
    /// final MSE is judged.
    pub target_variance: f64,
}

/// Runs the baseline controller over the (disturbed) scenario, builds the
/// dataset, and fits the compensation network.
pub fn train_pipeline(sc: &Scenario, opts: &TrainingOptions) -> Result<TrainOutcome> {
    if opts.decimation == 0 {
        return Err(GimbalError::config("training decimation must be positive"));
    }
    let log = run_scenario(sc, ControllerKind::Adrc, &NetworkPlan::none())?;
    let full = build_dataset(&log)?;
    let set = full.decimate(opts.decimation)?;

    let mut mean = 0.0;
    let mut energy = 0.0;
    let mut count = 0.0;
    for tgt in set.targets() {
        for v in tgt.iter() {
            mean += v;
            energy += v * v;
            count += 1.0;
        }
    }
    mean /= count;
    let target_variance = energy / count - mean * mean;

    let mut mlp = Mlp::standard(opts.net_seed);
    standardize_inputs(&mut mlp, &set)?;
    let report = lm_train(&mut mlp, &set, &opts.lm)?;
    if !report.final_mse.is_finite() {
        return Err(GimbalError::numeric(format!(
            "training diverged; error history {:?}",
            report.mse_history
        )));
    }
    Ok(TrainOutcome {
        mlp,
        report,
        dataset_len: set.len(),
        target_variance,
    })
}
