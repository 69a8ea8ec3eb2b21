//! Walking-based sensor calibration: a stand, one step forward, a stand.

use log::{debug, info};
use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::gravity::minimal_rotation;
use crate::math::{geodesic_angle, is_rotation, orthonormalize};

pub const SENSOR_COUNT: usize = 6;
pub const SENSOR_NAMES: [&str; SENSOR_COUNT] = ["lwrist", "rwrist", "lknee", "rknee", "head", "pelvis"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    /// Specific force in the sensor frame [m/s²].
    pub acc: Vector3<f64>,
    /// Angular velocity in the sensor frame [rad/s].
    pub gyro: Vector3<f64>,
    /// Sensor orientation in the inertial frame.
    pub r_is: Matrix3<f64>,
}

impl ImuSample {
    /// Acceleration in the inertial frame, `R_IS a_S + g_I`.
    pub fn inertial_acceleration(&self, g_inertial: &Vector3<f64>) -> Vector3<f64> {
        self.r_is * self.acc + g_inertial
    }
}

/// Synchronized samples of the six sensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ImuLog {
    pub sample_rate: f64,
    /// `sensors[i][t]`
    pub sensors: Vec<Vec<ImuSample>>,
}

impl ImuLog {
    pub fn new(sample_rate: f64, sensors: Vec<Vec<ImuSample>>) -> Result<Self> {
        let log = ImuLog { sample_rate, sensors };
        log.validate()?;
        Ok(log)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(Error::Config(format!("invalid sample rate {}", self.sample_rate)));
        }
        if self.sensors.len() != SENSOR_COUNT {
            return Err(Error::dim("imu sensors", SENSOR_COUNT, self.sensors.len()));
        }
        let len = self.sensors[0].len();
        for (i, s) in self.sensors.iter().enumerate() {
            if s.len() != len {
                return Err(Error::Config(format!(
                    "sensor {i} has {} samples, sensor 0 has {len}",
                    s.len()
                )));
            }
            if let Some(t) = s.iter().position(|x| !is_rotation(&x.r_is, 1e-5)) {
                return Err(Error::Numerical(format!("sensor {i} sample {t}: orientation is not a rotation")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sensors.first().map_or(0, |s| s.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepIntegration {
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub sigma_pv: f64,
    pub sigma_vv: f64,
}

/// Dead-reckons one sensor from rest, tracking the scalar position-velocity
/// covariance alongside.
pub fn integrate_step(samples: &[ImuSample], g_inertial: &Vector3<f64>, dt: f64) -> Result<StepIntegration> {
    if samples.is_empty() {
        return Err(Error::Calibration("empty integration window".into()));
    }
    let accs: Vec<Vector3<f64>> = samples.iter().map(|s| s.inertial_acceleration(g_inertial)).collect();
    Ok(integrate_accelerations(&accs, dt))
}

pub fn integrate_accelerations(accs: &[Vector3<f64>], dt: f64) -> StepIntegration {
    let mut st = StepIntegration {
        p: Vector3::zeros(),
        v: Vector3::zeros(),
        sigma_pv: 0.0,
        sigma_vv: 0.0,
    };
    for a in accs {
        st.p += st.v * dt + a * (0.5 * dt * dt);
        st.v += a * dt;
        st.sigma_pv += st.sigma_vv * dt;
        st.sigma_vv += 1.0;
    }
    st
}

/// Position corrected by the zero-velocity observation at the end of the step.
pub fn zupt_correct(p: &Vector3<f64>, v: &Vector3<f64>, sigma_pv: f64, sigma_vv: f64) -> Result<Vector3<f64>> {
    if sigma_vv <= 0.0 {
        return Err(Error::Calibration("velocity variance must be positive".into()));
    }
    Ok(p - v * (sigma_pv / sigma_vv))
}

/// Removes the gravity-aligned part of `p`. Works for unit or full-magnitude `g`.
pub fn horizontal_project(p: &Vector3<f64>, g: &Vector3<f64>) -> Result<Vector3<f64>> {
    let gg = g.norm_squared();
    if gg <= 0.0 {
        return Err(Error::Calibration("gravity vector is zero".into()));
    }
    Ok(p - g * (p.dot(g) / gg))
}

/// Heading corrections aligning every displacement to the last one.
pub fn heading_align(p_bar: &[Vector3<f64>; SENSOR_COUNT], min_displacement: f64) -> Result<[Matrix3<f64>; SENSOR_COUNT]> {
    for (i, p) in p_bar.iter().enumerate() {
        if p.norm() < min_displacement {
            return Err(Error::Calibration(format!(
                "sensor {} ({}) moved only {:.3} m during the step; redo the calibration",
                i + 1,
                SENSOR_NAMES[i],
                p.norm()
            )));
        }
    }
    let reference = p_bar[SENSOR_COUNT - 1].normalize();
    let mut out = [Matrix3::identity(); SENSOR_COUNT];
    for i in 0..SENSOR_COUNT - 1 {
        out[i] = minimal_rotation(&p_bar[i].normalize(), &reference);
    }
    Ok(out)
}

/// Inertial-from-model rotation with columns `[p̂ × ĝ, -ĝ, p̂]`.
pub fn extrinsics(p6: &Vector3<f64>, g: &Vector3<f64>) -> Result<Matrix3<f64>> {
    if p6.norm() == 0.0 || g.norm() == 0.0 {
        return Err(Error::Calibration("zero step direction or gravity".into()));
    }
    let p = p6.normalize();
    let gh = g.normalize();
    if p.dot(&gh).abs() > 1e-6 {
        return Err(Error::Calibration("step direction is not horizontal".into()));
    }
    Ok(Matrix3::from_columns(&[p.cross(&gh), -gh, p]))
}

/// `R_SB = (R_i R_IS⁽¹⁾)ᵀ R_IM R_MB`
pub fn sensor_to_bone(
    r_is_recorded: &Matrix3<f64>,
    r_heading: &Matrix3<f64>,
    r_im: &Matrix3<f64>,
    r_mb: &Matrix3<f64>,
) -> Matrix3<f64> {
    (r_heading * r_is_recorded).transpose() * r_im * r_mb
}

/// Per-sensor geodesic angle [deg] between the two standing recordings.
pub fn verify_pose_return(
    before: &[Matrix3<f64>; SENSOR_COUNT],
    after: &[Matrix3<f64>; SENSOR_COUNT],
    tolerance_deg: f64,
) -> (bool, [f64; SENSOR_COUNT]) {
    let angles: [f64; SENSOR_COUNT] = std::array::from_fn(|i| geodesic_angle(&before[i], &after[i]).to_degrees());
    (angles.iter().all(|a| *a <= tolerance_deg), angles)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationConfig {
    /// Gravity in the inertial frame [m/s²].
    pub g_inertial: Vector3<f64>,
    /// Bone orientations of the standing pose in the model frame.
    pub r_mb: [Matrix3<f64>; SENSOR_COUNT],
    /// Motion threshold on the window-averaged inertial acceleration [m/s²].
    pub still_threshold: f64,
    /// Averaging window for motion detection [s].
    pub motion_window: f64,
    /// Standing segments must last at least this long [s].
    pub still_duration: f64,
    /// Padding added on both sides of the detected step [s].
    pub step_margin: f64,
    pub min_displacement: f64,
    pub pose_return_tolerance_deg: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            g_inertial: Vector3::new(0.0, 0.0, -9.8),
            r_mb: [Matrix3::identity(); SENSOR_COUNT],
            still_threshold: 0.3,
            motion_window: 0.1,
            still_duration: 0.5,
            step_margin: 0.05,
            min_displacement: 0.05,
            pose_return_tolerance_deg: 10.0,
        }
    }
}

/// Sample ranges of the stand / step / stand protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segmentation {
    pub first_stand: (usize, usize),
    /// Integration window, margins included.
    pub step: (usize, usize),
    pub second_stand: (usize, usize),
}

/// Finds the stand / step / stand structure from window-averaged accelerations.
pub fn segment_protocol(log: &ImuLog, config: &CalibrationConfig) -> Result<Segmentation> {
    let n = log.len();
    let win = ((config.still_duration * log.sample_rate).round() as usize).max(1);
    if n < 2 * win + 1 {
        return Err(Error::Calibration(format!("log too short ({n} samples) for the stand/step/stand protocol")));
    }
    // Window-mean inertial acceleration per sensor; noise averages out while
    // a moving body keeps a clear signal.
    let half = ((config.motion_window * log.sample_rate).round() as usize / 2).max(1);
    let accel: Vec<Vec<Vector3<f64>>> = log
        .sensors
        .iter()
        .map(|s| s.iter().map(|x| x.inertial_acceleration(&config.g_inertial)).collect())
        .collect();
    let prefix: Vec<Vec<Vector3<f64>>> = accel
        .iter()
        .map(|a| {
            let mut p = vec![Vector3::zeros(); n + 1];
            for t in 0..n {
                p[t + 1] = p[t] + a[t];
            }
            p
        })
        .collect();
    let still: Vec<bool> = (0..n)
        .map(|t| {
            let lo = t.saturating_sub(half);
            let hi = (t + half + 1).min(n);
            prefix
                .iter()
                .map(|p| ((p[hi] - p[lo]) / (hi - lo) as f64).norm())
                .fold(0.0, f64::max)
                < config.still_threshold
        })
        .collect();

    // Runs of equal flags.
    let mut runs: Vec<(bool, usize, usize)> = Vec::new();
    for (t, &s) in still.iter().enumerate() {
        match runs.last_mut() {
            Some((flag, _, end)) if *flag == s => *end = t + 1,
            _ => runs.push((s, t, t + 1)),
        }
    }
    let long_still = |r: &(bool, usize, usize)| r.0 && r.2 - r.1 >= win;
    let first = runs
        .iter()
        .position(long_still)
        .ok_or_else(|| Error::Calibration("no initial standing phase found".into()))?;
    let second = runs
        .iter()
        .skip(first + 1)
        .position(long_still)
        .map(|k| k + first + 1)
        .ok_or_else(|| Error::Calibration("no standing phase after the step; the log may be truncated".into()))?;
    if second == first + 1 {
        return Err(Error::Calibration("no step detected between standing phases".into()));
    }
    let (_, s1_lo, s1_hi) = runs[first];
    let (_, s2_lo, s2_hi) = runs[second];
    let margin = (config.step_margin * log.sample_rate).round() as usize;
    let step = (s1_hi.saturating_sub(margin).max(s1_lo), (s2_lo + margin).min(s2_hi));
    debug!("segments: stand {s1_lo}..{s1_hi}, step {}..{}, stand {s2_lo}..{s2_hi}", step.0, step.1);
    Ok(Segmentation {
        first_stand: (s1_lo, s1_hi),
        step,
        second_stand: (s2_lo, s2_hi),
    })
}

/// Chordal mean of the orientations of one sensor over a sample range.
pub fn mean_orientation(samples: &[ImuSample]) -> Matrix3<f64> {
    let sum: Matrix3<f64> = samples.iter().map(|s| s.r_is).sum();
    orthonormalize(&sum)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub r_heading: [Matrix3<f64>; SENSOR_COUNT],
    pub r_im: Matrix3<f64>,
    pub r_sb: [Matrix3<f64>; SENSOR_COUNT],
    /// Horizontal step displacement of each sensor [m].
    pub displacement: [Vector3<f64>; SENSOR_COUNT],
    /// Integrated velocity at the end of the step [m/s].
    pub terminal_velocity: [Vector3<f64>; SENSOR_COUNT],
    /// Geodesic angle between the two standing recordings [deg].
    pub pose_return_deg: [f64; SENSOR_COUNT],
    pub segmentation: Segmentation,
}

pub fn calibrate(log: &ImuLog, config: &CalibrationConfig) -> Result<CalibrationResult> {
    log.validate()?;
    let seg = segment_protocol(log, config)?;
    let dt = log.dt();
    let g = config.g_inertial;

    let mut displacement = [Vector3::zeros(); SENSOR_COUNT];
    let mut terminal_velocity = [Vector3::zeros(); SENSOR_COUNT];
    let mut before = [Matrix3::identity(); SENSOR_COUNT];
    let mut after = [Matrix3::identity(); SENSOR_COUNT];
    for (i, s) in log.sensors.iter().enumerate() {
        let st = integrate_step(&s[seg.step.0..seg.step.1], &g, dt)?;
        let p_tilde = zupt_correct(&st.p, &st.v, st.sigma_pv, st.sigma_vv)?;
        displacement[i] = horizontal_project(&p_tilde, &g)?;
        terminal_velocity[i] = st.v;
        before[i] = mean_orientation(&s[seg.first_stand.0..seg.first_stand.1]);
        after[i] = mean_orientation(&s[seg.second_stand.0..seg.second_stand.1]);
    }

    let (ok, pose_return_deg) = verify_pose_return(&before, &after, config.pose_return_tolerance_deg);
    if !ok {
        return Err(Error::Calibration(format!(
            "standing pose changed across the step (angles {pose_return_deg:.1?} deg); redo the calibration"
        )));
    }

    let r_heading = heading_align(&displacement, config.min_displacement)?;
    let r_im = extrinsics(&displacement[SENSOR_COUNT - 1], &g)?;
    let r_sb = std::array::from_fn(|i| sensor_to_bone(&before[i], &r_heading[i], &r_im, &config.r_mb[i]));
    info!(
        "calibrated: step {:.3} m, heading corrections {:.2?} deg",
        displacement[SENSOR_COUNT - 1].norm(),
        r_heading.map(|r| crate::math::rotation_angle(&r).to_degrees())
    );
    Ok(CalibrationResult {
        r_heading,
        r_im,
        r_sb,
        displacement,
        terminal_velocity,
        pose_return_deg,
        segmentation: seg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{axis_angle, rotation_angle};
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn g() -> Vector3<f64> {
        Vector3::new(0.0, 0.0, -9.8)
    }

    #[test]
    fn static_sensor_stays_put() {
        let r = axis_angle(&Vector3::new(0.2, 0.5, 1.0), 0.9);
        let sample = ImuSample {
            acc: -(r.transpose() * g()),
            gyro: Vector3::zeros(),
            r_is: r,
        };
        let st = integrate_step(&vec![sample; 100], &g(), 0.01).unwrap();
        assert!(st.p.norm() < 1e-12 && st.v.norm() < 1e-12);
    }

    #[test]
    fn constant_acceleration_and_covariance_sums() {
        let a = Vector3::new(0.3, -0.2, 0.1);
        let n = 120;
        let dt = 0.01;
        let st = integrate_accelerations(&vec![a; n], dt);
        let t = n as f64 * dt;
        assert!((st.v - a * t).norm() < 1e-12);
        // The midpoint-style update integrates constant acceleration exactly.
        assert!((st.p - a * (0.5 * t * t)).norm() < 1e-12);
        assert_eq!(st.sigma_vv, n as f64);
        assert!((st.sigma_pv - dt * (n * (n - 1)) as f64 / 2.0).abs() < 1e-12);
        assert!(integrate_step(&[], &g(), dt).is_err());
    }

    #[test]
    fn zupt_cases() {
        let p = Vector3::new(1.0, 2.0, 3.0);
        assert_eq!(zupt_correct(&p, &Vector3::zeros(), 3.0, 4.0).unwrap(), p);
        assert!(zupt_correct(&p, &p, 1.0, 0.0).is_err());
    }

    #[test]
    fn zupt_reduces_bias_error() {
        // Smooth 0.6 m step plus a constant bias; truth known in closed form.
        let dt = 0.01;
        let n = 100;
        let t_total = n as f64 * dt;
        let bias = Vector3::new(0.05, -0.03, 0.02);
        let accs: Vec<Vector3<f64>> = (0..n)
            .map(|k| {
                let s = (k as f64 + 0.5) * dt / t_total;
                let a = 0.6 * 2.0 * std::f64::consts::PI / (t_total * t_total) * (2.0 * std::f64::consts::PI * s).sin();
                Vector3::new(a, 0.0, 0.0) + bias
            })
            .collect();
        let clean: Vec<_> = accs.iter().map(|a| a - bias).collect();
        let truth = integrate_accelerations(&clean, dt).p;
        let st = integrate_accelerations(&accs, dt);
        let corrected = zupt_correct(&st.p, &st.v, st.sigma_pv, st.sigma_vv).unwrap();
        assert!((corrected - truth).norm() < (st.p - truth).norm());
    }

    /// Probability that the corrected error is the smaller one for i.i.d.
    /// acceleration noise, in the continuous-time limit. Per axis the pair
    /// (p, p - v T/2) has covariance [[1, 1/4], [1/4, 1/4]] (units of σ²T³/3),
    /// so the comparison reduces to an F(3, 3) tail.
    fn analytic_win_probability() -> f64 {
        let tr: f64 = 0.75;
        let det: f64 = -0.1875;
        let disc = (tr * tr - 4.0 * det).sqrt();
        let (l1, l2) = ((tr + disc) / 2.0, (tr - disc) / 2.0);
        let r = -l2 / l1;
        let z = r / (1.0 + r);
        // Regularized incomplete beta I_z(3/2, 3/2).
        let cdf = 2.0 / std::f64::consts::PI * (z.sqrt().asin() - (1.0 - 2.0 * z) * (z * (1.0 - z)).sqrt());
        1.0 - cdf
    }

    #[test]
    fn zupt_monte_carlo() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let dt = 0.01;
        let n = 100;
        let trials = 1000;
        let mut better = 0;
        let (mut se_raw, mut se_corr) = (0.0, 0.0);
        for _ in 0..trials {
            let accs: Vec<Vector3<f64>> = (0..n)
                .map(|_| Vector3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng)))
                .collect();
            let st = integrate_accelerations(&accs, dt);
            let c = zupt_correct(&st.p, &st.v, st.sigma_pv, st.sigma_vv).unwrap();
            if c.norm() <= st.p.norm() {
                better += 1;
            }
            se_raw += st.p.norm_squared();
            se_corr += c.norm_squared();
        }
        let rate = better as f64 / trials as f64;
        let expect = analytic_win_probability();
        assert!((expect - 0.8847).abs() < 1e-4);
        let sd = (expect * (1.0 - expect) / trials as f64).sqrt();
        assert!((rate - expect).abs() < 3.0 * sd, "win rate {rate}, expected {expect}");
        // Mean squared error drops to a quarter.
        assert!(se_corr / se_raw < 0.3, "{}", se_corr / se_raw);
    }

    #[test]
    fn projection() {
        let gu = Vector3::new(0.0, 0.0, -1.0);
        let p = Vector3::new(1.0, 2.0, 0.0);
        assert_eq!(horizontal_project(&p, &gu).unwrap(), p);
        assert!(horizontal_project(&Vector3::new(0.0, 0.0, 3.0), &g()).unwrap().norm() < 1e-12);
        let q = Vector3::new(0.3, -1.0, 2.0);
        let a = horizontal_project(&q, &g()).unwrap();
        let b = horizontal_project(&q, &gu).unwrap();
        assert!((a - b).norm() < 1e-15);
    }

    #[test]
    fn heading_identity_and_alignment() {
        let p = Vector3::new(0.6, 0.1, 0.0);
        assert_eq!(heading_align(&[p; 6], 0.05).unwrap(), [Matrix3::identity(); 6]);
        let yaw = axis_angle(&Vector3::z(), 10f64.to_radians());
        let mut ps = [p; 6];
        ps[1] = yaw * p;
        let r = heading_align(&ps, 0.05).unwrap();
        assert!((rotation_angle(&r[1]) - 10f64.to_radians()).abs() < 1e-12);
        assert!((r[1] * ps[1]).cross(&ps[5]).norm() < 1e-9);
        ps[2] = Vector3::new(0.01, 0.0, 0.0);
        assert!(heading_align(&ps, 0.05).is_err());
    }

    #[test]
    fn extrinsic_axes() {
        let gy = Vector3::new(0.0, -9.8, 0.0);
        let r = extrinsics(&Vector3::x(), &gy).unwrap();
        assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-12);
        assert!((r.determinant() - 1.0).abs() < 1e-12);
        assert!((r.transpose() * gy - Vector3::new(0.0, -9.8, 0.0)).norm() < 1e-12);
        assert_eq!(r.column(2).into_owned(), Vector3::x());
        assert!(extrinsics(&Vector3::new(0.0, 1.0, 0.0), &gy).is_err());
    }

    #[test]
    fn sensor_to_bone_unwinds() {
        let r1 = axis_angle(&Vector3::new(1.0, 2.0, 0.5), 0.7);
        let i = Matrix3::identity();
        assert_eq!(sensor_to_bone(&r1, &i, &i, &i), r1.transpose());
    }

    #[test]
    fn pose_return_check() {
        let r = [axis_angle(&Vector3::y(), 0.3); 6];
        let (ok, angles) = verify_pose_return(&r, &r, 10.0);
        assert!(ok && angles.iter().all(|a| *a < 1e-6));
        let mut flipped = r;
        flipped[3] = axis_angle(&Vector3::x(), std::f64::consts::PI) * r[3];
        assert!(!verify_pose_return(&r, &flipped, 10.0).0);
        let mut nudged = r;
        nudged[0] = axis_angle(&Vector3::new(1.0, 1.0, 0.0), 8f64.to_radians()) * r[0];
        let (ok, angles) = verify_pose_return(&r, &nudged, 10.0);
        assert!(ok && (angles[0] - 8.0).abs() < 1e-9);
    }
}
