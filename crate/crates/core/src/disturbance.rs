//! State-dependent disturbance torques and base-motion excitation.
//!
//! Lumped effects acting on the joints (bearing friction, cable wrap,
//! unmodeled coupling) are represented per axis as a polynomial in the four
//! kinematic variables `(theta_m_dot, theta_m, psi_a, psi_a_dot)`: the
//! eight base terms listed in [`basis_labels`], all 28 pairwise products,
//! and a constant bias, for 37 coefficients per axis. Coefficient sets are
//! either given explicitly or drawn reproducibly from a seed with per-term
//! scaling so a requested magnitude is meaningful across terms of very
//! different dynamic range.
//!
//! The module also provides the prescribed base-motion profiles (stationary
//! base, per-channel sinusoids, or a time table loaded from CSV).

use std::path::Path;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{BaseMotionSample, GimbalState};
use crate::error::{GimbalError, Result};

/// Number of polynomial terms per axis.
pub const BASIS_LEN: usize = 37;

/// The eight base monomials, in basis order.
const SINGLE_LABELS: [&str; 8] = [
    "theta_m_dot",
    "theta_m",
    "psi_a",
    "psi_a_dot",
    "psi_a^2",
    "psi_a_dot^2",
    "theta_m^2",
    "theta_m_dot^2",
];

/// Ranges used to normalize seeded coefficients: field of regard of the
/// nominal unit and a +/- 2 rad/s rate envelope.
const PSI_RANGE: f64 = std::f64::consts::FRAC_PI_4;
const THETA_RANGE: f64 = std::f64::consts::PI / 9.0;
const RATE_RANGE: f64 = 2.0;

fn single_values(s: &GimbalState) -> [f64; 8] {
    [
        s.theta_m_dot,
        s.theta_m,
        s.psi_a,
        s.psi_a_dot,
        s.psi_a * s.psi_a,
        s.psi_a_dot * s.psi_a_dot,
        s.theta_m * s.theta_m,
        s.theta_m_dot * s.theta_m_dot,
    ]
}

fn single_ranges() -> [f64; 8] {
    [
        RATE_RANGE,
        THETA_RANGE,
        PSI_RANGE,
        RATE_RANGE,
        PSI_RANGE * PSI_RANGE,
        RATE_RANGE * RATE_RANGE,
        THETA_RANGE * THETA_RANGE,
        RATE_RANGE * RATE_RANGE,
    ]
}

/// Evaluates the 37-entry polynomial basis at a state: the eight base terms,
/// the 28 pairwise products in lexicographic `(i, j), i < j` order, then the
/// constant 1.
pub fn monomial_basis(s: &GimbalState) -> [f64; BASIS_LEN] {
    let single = single_values(s);
    let mut out = [0.0; BASIS_LEN];
    out[..8].copy_from_slice(&single);
    let mut k = 8;
    for i in 0..8 {
        for j in (i + 1)..8 {
            out[k] = single[i] * single[j];
            k += 1;
        }
    }
    out[36] = 1.0;
    out
}

/// Human-readable labels matching [`monomial_basis`] entry for entry.
pub fn basis_labels() -> Vec<String> {
    let mut out: Vec<String> = SINGLE_LABELS.iter().map(|s| s.to_string()).collect();
    for i in 0..8 {
        for j in (i + 1)..8 {
            out.push(format!("{}*{}", SINGLE_LABELS[i], SINGLE_LABELS[j]));
        }
    }
    out.push("1".to_string());
    out
}

/// Per-axis coefficient vectors of the disturbance polynomial [N m per
/// basis unit].
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffSet {
    pub az: [f64; BASIS_LEN],
    pub el: [f64; BASIS_LEN],
}

impl CoeffSet {
    pub fn zero() -> Self {
        CoeffSet {
            az: [0.0; BASIS_LEN],
            el: [0.0; BASIS_LEN],
        }
    }
}

/// Draws a reproducible coefficient set. Each coefficient is uniform in
/// `+/- magnitude * w_k / (range_k sqrt(37))` where `range_k` is the maximum
/// of the corresponding basis entry over the field-of-regard/rate envelope,
/// so the worst-case torque over that envelope is on the order of
/// `magnitude` [N m].
///
/// The weight `w_k = 2^-d` halves a term per power of angular rate it
/// carries (`d` up to 4 for the rate-squared pair products). Inside the
/// calibration envelope this barely matters, but rate monomials grow without
/// bound beyond it, and friction-like lumped torques do not; the weighting
/// keeps the family physically tame under excitations that exceed 2 rad/s,
/// such as the high-frequency end of the training sweep.
pub fn make_coeff_set(seed: u64, magnitude: f64) -> CoeffSet {
    let ranges = single_ranges();
    // Powers of angular rate in each of the eight base monomials.
    let degrees: [u32; 8] = [1, 0, 0, 1, 0, 2, 0, 2];
    let mut term_range = [1.0; BASIS_LEN];
    let mut term_weight = [1.0; BASIS_LEN];
    for k in 0..8 {
        term_range[k] = ranges[k];
        term_weight[k] = 0.5f64.powi(degrees[k] as i32);
    }
    let mut k = 8;
    for i in 0..8 {
        for j in (i + 1)..8 {
            term_range[k] = ranges[i] * ranges[j];
            term_weight[k] = 0.5f64.powi((degrees[i] + degrees[j]) as i32);
            k += 1;
        }
    }
    term_range[36] = 1.0;
    term_weight[36] = 1.0;

    let norm = (BASIS_LEN as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |range: f64, weight: f64| -> f64 {
        let u: f64 = rng.gen_range(-1.0..1.0);
        magnitude * weight * u / (range * norm)
    };
    let mut az = [0.0; BASIS_LEN];
    let mut el = [0.0; BASIS_LEN];
    for k in 0..BASIS_LEN {
        az[k] = draw(term_range[k], term_weight[k]);
    }
    for k in 0..BASIS_LEN {
        el[k] = draw(term_range[k], term_weight[k]);
    }
    CoeffSet { az, el }
}

/// Disturbance torque on (azimuth, elevation) at a state, with per-axis
/// multipliers applied to the polynomial value.
pub fn disturbance_torque(
    coeffs: &CoeffSet,
    s: &GimbalState,
    scale_az: f64,
    scale_el: f64,
) -> Vector2<f64> {
    let basis = monomial_basis(s);
    let mut az = 0.0;
    let mut el = 0.0;
    for k in 0..BASIS_LEN {
        az += coeffs.az[k] * basis[k];
        el += coeffs.el[k] * basis[k];
    }
    Vector2::new(scale_az * az, scale_el * el)
}

/// One sinusoidal excitation channel: `amplitude * sin(2 pi f t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SineChannel {
    pub amplitude: f64,
    pub frequency_hz: f64,
    pub phase_rad: f64,
}

impl SineChannel {
    fn eval(&self, t: f64) -> f64 {
        self.amplitude * (2.0 * std::f64::consts::PI * self.frequency_hz * t + self.phase_rad).sin()
    }
}

/// Per-channel sinusoid mix over the nine base-motion channels.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SinusoidBase {
    /// Angular velocity channels (p, q, r) [rad/s].
    pub omega: [SineChannel; 3],
    /// Acceleration channels (ax, ay, az) [m/s^2].
    pub accel: [SineChannel; 3],
    /// Attitude channels (roll, pitch, yaw) [rad].
    pub euler: [SineChannel; 3],
}

/// Time-tabled base motion loaded from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseMotionTable {
    times: Vec<f64>,
    rows: Vec<[f64; 9]>,
}

/// Prescribed base motion over a run.
#[derive(Debug, Clone, PartialEq)]
pub enum BaseMotionProfile {
    /// Stationary, level base.
    Zero,
    /// Per-channel sinusoids.
    Sinusoid(SinusoidBase),
    /// Linear interpolation of a time table; sampling outside the table's
    /// span is an error.
    Table(BaseMotionTable),
}

impl BaseMotionProfile {
    pub fn sample(&self, t: f64) -> Result<BaseMotionSample> {
        match self {
            BaseMotionProfile::Zero => Ok(BaseMotionSample::stationary()),
            BaseMotionProfile::Sinusoid(s) => Ok(BaseMotionSample {
                omega: Vector3::new(s.omega[0].eval(t), s.omega[1].eval(t), s.omega[2].eval(t)),
                accel: Vector3::new(s.accel[0].eval(t), s.accel[1].eval(t), s.accel[2].eval(t)),
                euler: Vector3::new(s.euler[0].eval(t), s.euler[1].eval(t), s.euler[2].eval(t)),
            }),
            BaseMotionProfile::Table(table) => table.sample(t),
        }
    }
}

const TABLE_HEADER: [&str; 10] = ["t", "p", "q", "r", "ax", "ay", "az", "phi", "theta", "psi"];

impl BaseMotionTable {
    /// Loads a table from CSV with header `t,p,q,r,ax,ay,az,phi,theta,psi`
    /// (seconds, rad/s, m/s^2, rad). Timestamps must strictly increase.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let display = path.display().to_string();
        let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => GimbalError::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("{display}: {e}"),
            )),
            _ => GimbalError::format(&display, e.to_string()),
        })?;
        let header = reader
            .headers()
            .map_err(|e| GimbalError::format(&display, e.to_string()))?
            .clone();
        let got: Vec<&str> = header.iter().map(|h| h.trim()).collect();
        if got != TABLE_HEADER {
            return Err(GimbalError::format(
                &display,
                format!(
                    "expected header {}, got {}",
                    TABLE_HEADER.join(","),
                    got.join(",")
                ),
            ));
        }
        let mut times = Vec::new();
        let mut rows = Vec::new();
        for (idx, record) in reader.records().enumerate() {
            let record = record.map_err(|e| GimbalError::format(&display, e.to_string()))?;
            if record.len() != 10 {
                return Err(GimbalError::format(
                    &display,
                    format!("row {}: expected 10 fields, got {}", idx + 2, record.len()),
                ));
            }
            let mut vals = [0.0f64; 10];
            for (v, field) in vals.iter_mut().zip(record.iter()) {
                *v = field.trim().parse().map_err(|_| {
                    GimbalError::format(
                        &display,
                        format!("row {}: non-numeric field {field:?}", idx + 2),
                    )
                })?;
                if !v.is_finite() {
                    return Err(GimbalError::format(
                        &display,
                        format!("row {}: non-finite value", idx + 2),
                    ));
                }
            }
            if let Some(&last) = times.last() {
                if vals[0] <= last {
                    return Err(GimbalError::format(
                        &display,
                        format!("row {}: timestamps must strictly increase", idx + 2),
                    ));
                }
            }
            times.push(vals[0]);
            let mut row = [0.0f64; 9];
            row.copy_from_slice(&vals[1..]);
            rows.push(row);
        }
        if times.len() < 2 {
            return Err(GimbalError::format(
                &display,
                "table needs at least two rows",
            ));
        }
        Ok(BaseMotionTable { times, rows })
    }

    pub fn span(&self) -> (f64, f64) {
        (self.times[0], *self.times.last().unwrap())
    }

    fn sample(&self, t: f64) -> Result<BaseMotionSample> {
        let (t0, t1) = self.span();
        if t < t0 || t > t1 {
            return Err(GimbalError::numeric(format!(
                "base-motion sample time {t} outside table span [{t0}, {t1}]"
            )));
        }
        let idx = match self
            .times
            .binary_search_by(|probe| probe.partial_cmp(&t).unwrap())
        {
            Ok(i) => i.min(self.times.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.times.len() - 2),
        };
        let (ta, tb) = (self.times[idx], self.times[idx + 1]);
        let w = (t - ta) / (tb - ta);
        let a = &self.rows[idx];
        let b = &self.rows[idx + 1];
        let mut v = [0.0f64; 9];
        for k in 0..9 {
            v[k] = a[k] + w * (b[k] - a[k]);
        }
        Ok(BaseMotionSample {
            omega: Vector3::new(v[0], v[1], v[2]),
            accel: Vector3::new(v[3], v[4], v[5]),
            euler: Vector3::new(v[6], v[7], v[8]),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parallel;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::io::Write;

    fn state(psi: f64, theta: f64, psid: f64, thetad: f64) -> GimbalState {
        GimbalState {
            psi_a: psi,
            theta_m: theta,
            psi_a_dot: psid,
            theta_m_dot: thetad,
        }
    }

    #[test]
    fn basis_ordering_matches_golden_file() {
        // Distinct values per variable make every entry unique.
        let s = state(5.0, 3.0, 7.0, 2.0);
        let basis = monomial_basis(&s);
        let labels = basis_labels();
        let mut rendered = String::new();
        for (label, value) in labels.iter().zip(basis.iter()) {
            rendered.push_str(&format!("{label} {value}\n"));
        }
        let golden = include_str!("../tests/golden/basis_order.txt");
        assert_eq!(rendered, golden);
    }

    #[test]
    fn single_rate_probe_hits_expected_entries() {
        let s = state(0.0, 0.0, 0.0, 0.2);
        let basis = monomial_basis(&s);
        let labels = basis_labels();
        for (k, label) in labels.iter().enumerate() {
            let expected = match label.as_str() {
                "theta_m_dot" => 0.2,
                "theta_m_dot^2" => 0.04,
                "theta_m_dot*theta_m_dot^2" => 0.008,
                "1" => 1.0,
                _ => 0.0,
            };
            assert_abs_diff_eq!(basis[k], expected, epsilon = 1e-15);
        }
    }

    #[test]
    fn torque_is_linear_in_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let a = make_coeff_set(rng.gen(), 0.05);
            let b = make_coeff_set(rng.gen(), 0.02);
            let s = state(
                rng.gen_range(-0.7..0.7),
                rng.gen_range(-0.3..0.3),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
            let mut sum = CoeffSet::zero();
            for k in 0..BASIS_LEN {
                sum.az[k] = a.az[k] + b.az[k];
                sum.el[k] = a.el[k] + b.el[k];
            }
            let ta = disturbance_torque(&a, &s, 1.0, 1.0);
            let tb = disturbance_torque(&b, &s, 1.0, 1.0);
            let tsum = disturbance_torque(&sum, &s, 1.0, 1.0);
            assert_abs_diff_eq!(tsum.x, ta.x + tb.x, epsilon = 1e-12);
            assert_abs_diff_eq!(tsum.y, ta.y + tb.y, epsilon = 1e-12);
            // Axis multipliers scale the polynomial exactly.
            let scaled = disturbance_torque(&a, &s, 2.0, 3.0);
            assert_eq!(scaled.x, 2.0 * ta.x);
            assert_eq!(scaled.y, 3.0 * ta.y);
        }
    }

    #[test]
    fn seeded_coeffs_are_deterministic_and_bounded() {
        let a = make_coeff_set(7, 0.05);
        let b = make_coeff_set(7, 0.05);
        assert_eq!(a, b);
        let c = make_coeff_set(8, 0.05);
        assert_ne!(a, c);

        // Monte-Carlo worst case over the field-of-regard/rate envelope.
        let maxima = parallel::map_collect(100, |chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + chunk as u64);
            let mut worst = 0.0f64;
            for _ in 0..1000 {
                let s = state(
                    rng.gen_range(-PSI_RANGE..PSI_RANGE),
                    rng.gen_range(-THETA_RANGE..THETA_RANGE),
                    rng.gen_range(-RATE_RANGE..RATE_RANGE),
                    rng.gen_range(-RATE_RANGE..RATE_RANGE),
                );
                let t = disturbance_torque(&a, &s, 1.0, 1.0);
                worst = worst.max(t.x.abs()).max(t.y.abs());
            }
            worst
        });
        let worst = maxima.into_iter().fold(0.0f64, f64::max);
        assert!(
            (0.01..=0.25).contains(&worst),
            "worst-case torque {worst} outside calibration window"
        );
    }

    #[test]
    fn zero_profile_is_stationary() {
        let s = BaseMotionProfile::Zero.sample(3.2).unwrap();
        assert_eq!(s, BaseMotionSample::stationary());
    }

    #[test]
    fn sinusoid_profile_evaluates_channels() {
        let mut spec = SinusoidBase::default();
        spec.omega[2] = SineChannel {
            amplitude: 0.3,
            frequency_hz: 0.5,
            phase_rad: 0.0,
        };
        spec.euler[0] = SineChannel {
            amplitude: 0.1,
            frequency_hz: 0.25,
            phase_rad: std::f64::consts::FRAC_PI_2,
        };
        let profile = BaseMotionProfile::Sinusoid(spec);
        let b = profile.sample(0.5).unwrap();
        assert_abs_diff_eq!(b.omega.z, 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(
            b.euler.x,
            0.1 * (2.0 * std::f64::consts::PI * 0.25 * 0.5 + std::f64::consts::FRAC_PI_2).sin(),
            epsilon = 1e-12
        );
        assert_eq!(b.accel, Vector3::zeros());
    }

    #[test]
    fn csv_table_interpolates_and_bounds_range() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("base.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "t,p,q,r,ax,ay,az,phi,theta,psi").unwrap();
        writeln!(f, "0.0,0.1,0,0,1.0,0,0,0,0,0").unwrap();
        writeln!(f, "1.0,0.3,0,0,2.0,0,0,0.2,0,0").unwrap();
        writeln!(f, "2.0,0.5,0,0,0.0,0,0,0.4,0,0").unwrap();
        drop(f);
        let table = BaseMotionTable::from_csv(&path).unwrap();
        assert_eq!(table.span(), (0.0, 2.0));
        let mid = table.sample(0.5).unwrap();
        assert_abs_diff_eq!(mid.omega.x, 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(mid.accel.x, 1.5, epsilon = 1e-12);
        let exact = table.sample(1.0).unwrap();
        assert_abs_diff_eq!(exact.omega.x, 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(exact.euler.x, 0.2, epsilon = 1e-12);
        assert!(table.sample(-0.1).is_err());
        assert!(table.sample(2.1).is_err());
    }

    #[test]
    fn csv_table_rejects_malformed_input() {
        let dir = tempfile::tempdir().unwrap();
        let bad_header = dir.path().join("bad_header.csv");
        std::fs::write(
            &bad_header,
            "time,p,q,r,ax,ay,az,phi,theta,psi\n0,0,0,0,0,0,0,0,0,0\n",
        )
        .unwrap();
        assert!(BaseMotionTable::from_csv(&bad_header).is_err());

        let bad_field = dir.path().join("bad_field.csv");
        std::fs::write(
            &bad_field,
            "t,p,q,r,ax,ay,az,phi,theta,psi\n0,0,0,0,0,0,0,0,0,0\n1,x,0,0,0,0,0,0,0,0\n",
        )
        .unwrap();
        assert!(BaseMotionTable::from_csv(&bad_field).is_err());

        let non_monotone = dir.path().join("non_monotone.csv");
        std::fs::write(
            &non_monotone,
            "t,p,q,r,ax,ay,az,phi,theta,psi\n0,0,0,0,0,0,0,0,0,0\n0,0,0,0,0,0,0,0,0,0\n",
        )
        .unwrap();
        assert!(BaseMotionTable::from_csv(&non_monotone).is_err());
    }
}
