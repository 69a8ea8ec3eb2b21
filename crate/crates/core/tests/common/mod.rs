#![allow(dead_code)]

pub mod oracle;

use imuphys::SkeletonModel;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(n: usize, rng: &mut impl Rng, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-scale..scale))
}

/// Random configuration with moderate angles, away from Euler singularities.
pub fn random_q(model: &SkeletonModel, rng: &mut impl Rng) -> DVector<f64> {
    let n = model.dof();
    DVector::from_fn(n, |i, _| if i < 3 { rng.random_range(-1.0..1.0) } else { rng.random_range(-0.8..0.8) })
}

pub fn models() -> [(&'static str, SkeletonModel); 2] {
    [("test_chain", SkeletonModel::test_chain()), ("humanoid", SkeletonModel::humanoid())]
}

pub mod calib {
    use imuphys::calibration::{CalibrationConfig, ImuLog, SENSOR_COUNT};
    use imuphys::math::{axis_angle, rot_x, rot_z};
    use imuphys::synth::{default_attachments, scenario, synthesize_imu, SensorAttachment};
    use imuphys::SkeletonModel;
    use nalgebra::{Matrix3, Vector3};

    pub struct Setup {
        pub r_im: Matrix3<f64>,
        pub attachments: [SensorAttachment; SENSOR_COUNT],
        pub clean: ImuLog,
        pub config: CalibrationConfig,
    }

    /// Synthetic one-step walk seen through the bundled sensor rig, with the
    /// inertial frame yawed by 0.7 rad and z up.
    pub fn setup() -> Setup {
        let model = SkeletonModel::humanoid();
        let walk = scenario(&model, "calibration_walk").unwrap();
        let attachments = default_attachments(&model).unwrap();
        let r_im = rot_z(0.7) * rot_x(std::f64::consts::FRAC_PI_2);
        let clean = synthesize_imu(&model, &walk.motion, &attachments, &r_im, &Vector3::new(0.0, -9.8, 0.0)).unwrap();
        let first = model.pose_from_parts(&walk.motion.root[0], &walk.motion.angles[0]).unwrap();
        let config = CalibrationConfig {
            r_mb: std::array::from_fn(|i| first.rotations[attachments[i].joint]),
            ..CalibrationConfig::default()
        };
        Setup { r_im, attachments, clean, config }
    }

    pub fn yaw(deg: f64) -> Matrix3<f64> {
        axis_angle(&Vector3::z(), deg.to_radians())
    }

    /// Heading correction that undoes drifts `deg`, relative to sensor 6.
    pub fn expected_heading(deg: &[f64; SENSOR_COUNT], i: usize) -> Matrix3<f64> {
        yaw(deg[SENSOR_COUNT - 1]) * yaw(deg[i]).transpose()
    }
}
