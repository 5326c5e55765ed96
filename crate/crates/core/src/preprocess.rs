//! Drift compensation and the raw-IMU fusion path.
//!
//! [`remove_drift`] subtracts a centered moving average (a zero-phase
//! high-pass) from the selected channels, removing slow additive sensor bias.
//! [`fuse_attitude`] runs a complementary-filter attitude estimate over the
//! gyro/accelerometer/magnetometer channels, replacing the attitude channels
//! with fused Euler angles and the acceleration channels with gravity-free
//! linear acceleration — the raw-IMU alternative when a device does not
//! deliver fused attitude itself.

use nalgebra::{Unit, UnitQuaternion, Vector3};

use crate::data_model::{ChannelId, Recording, Session};
use crate::error::{Error, Result};
use crate::util::moving_mean;

// ---------------------------------------------------------------------------
// Drift removal
// ---------------------------------------------------------------------------

/// Configuration for moving-average high-pass drift removal.
#[derive(Debug, Clone)]
pub struct DriftConfig {
    /// Width of the centered averaging window, seconds.
    pub highpass_window_s: f64,
    /// Channels to filter; all others pass through untouched.
    pub channels: Vec<ChannelId>,
}

impl Default for DriftConfig {
    fn default() -> Self {
        DriftConfig {
            highpass_window_s: 2.0,
            channels: ChannelId::ACCELERATION.to_vec(),
        }
    }
}

/// Effective window width in samples: `round(window_s × rate)`, forced odd so
/// the window is symmetric about its center (an even width has no center
/// sample and would leave a half-sample phase bias on ramps).
fn drift_window_samples(cfg: &DriftConfig, sample_rate_hz: f64) -> Result<usize> {
    if !(cfg.highpass_window_s > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "highpass_window_s must be positive, got {}",
            cfg.highpass_window_s
        )));
    }
    let w = (cfg.highpass_window_s * sample_rate_hz).round() as usize;
    let w = w.max(1);
    Ok(if w % 2 == 0 { w + 1 } else { w })
}

/// Subtract a centered moving average of width `round(highpass_window_s ×
/// sample_rate)` from each selected channel.
///
/// Edge windows are truncated to the available samples rather than padded.
/// Unselected channels, metadata, and timing are preserved bit-exactly.
pub fn remove_drift(rec: &Recording, cfg: &DriftConfig) -> Result<Recording> {
    let w = drift_window_samples(cfg, rec.sample_rate_hz)?;
    if w >= rec.len() {
        return Err(Error::InvalidConfig(format!(
            "drift window of {w} samples must be shorter than the recording ({} samples)",
            rec.len()
        )));
    }
    let half = w / 2;
    let mut out = rec.clone();
    for &ch in &cfg.channels {
        let col: Vec<f64> = rec.channel(ch).iter().copied().collect();
        let mean = moving_mean(&col, half, half);
        for (i, m) in mean.into_iter().enumerate() {
            out.samples[[i, ch.index()]] = col[i] - m;
        }
    }
    Ok(out)
}

/// [`remove_drift`] applied to both wrists of a session; labels and the
/// session id are carried over unchanged.
pub fn remove_drift_session(session: &Session, cfg: &DriftConfig) -> Result<Session> {
    Ok(Session {
        left: remove_drift(&session.left, cfg)?,
        right: remove_drift(&session.right, cfg)?,
        labels_left: session.labels_left.clone(),
        labels_right: session.labels_right.clone(),
        session_id: session.session_id.clone(),
    })
}

// ---------------------------------------------------------------------------
// Attitude fusion
// ---------------------------------------------------------------------------

/// Configuration for the complementary attitude filter.
#[derive(Debug, Clone)]
pub struct FusionConfig {
    /// Weight of the accelerometer/magnetometer correction per step, in [0,1].
    /// 0 disables correction (pure gyro integration).
    pub correction_gain: f64,
    /// Expected gravity magnitude, m/s².
    pub gravity_magnitude: f64,
    /// Whether the magnetometer corrects heading drift.
    pub use_magnetometer: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            correction_gain: 0.1,
            gravity_magnitude: 9.81,
            use_magnetometer: true,
        }
    }
}

impl FusionConfig {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.correction_gain) {
            return Err(Error::InvalidConfig(format!(
                "correction_gain must be in [0, 1], got {}",
                self.correction_gain
            )));
        }
        if !(self.gravity_magnitude > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "gravity_magnitude must be positive, got {}",
                self.gravity_magnitude
            )));
        }
        Ok(())
    }
}

/// Sequential complementary-filter state: a unit quaternion mapping body to
/// world coordinates, advanced one sample at a time.
///
/// Per step: (1) propagate by the gyro rate through the exact quaternion
/// exponential; (2) rotate the estimate by `correction_gain` of the error
/// between the measured and predicted gravity (and, if enabled, magnetic
/// north) directions; (3) renormalize. The world frame is defined by gravity
/// along +z and, when the magnetometer is used, the first magnetometer sample
/// fixing the north reference.
#[derive(Debug, Clone)]
pub struct AttitudeFilter {
    cfg: FusionConfig,
    dt: f64,
    q: UnitQuaternion<f64>,
    north_ref: Option<Unit<Vector3<f64>>>,
}

impl AttitudeFilter {
    pub fn new(cfg: FusionConfig, sample_rate_hz: f64) -> Result<AttitudeFilter> {
        cfg.validate()?;
        if !(sample_rate_hz > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        Ok(AttitudeFilter {
            cfg,
            dt: 1.0 / sample_rate_hz,
            q: UnitQuaternion::identity(),
            north_ref: None,
        })
    }

    /// Current body-to-world attitude estimate.
    pub fn attitude(&self) -> UnitQuaternion<f64> {
        self.q
    }

    /// Override the current attitude (e.g. a known initial orientation).
    pub fn set_attitude(&mut self, q: UnitQuaternion<f64>) {
        self.q = q;
    }

    /// Euler angles of the current estimate as (yaw, pitch, roll), intrinsic
    /// Z-Y-X convention, radians.
    pub fn euler_ypr(&self) -> (f64, f64, f64) {
        let (roll, pitch, yaw) = self.q.euler_angles();
        (yaw, pitch, roll)
    }

    /// Advance one sample and return the gravity-free linear acceleration in
    /// body coordinates.
    ///
    /// A zero-norm accelerometer (or magnetometer) sample skips that
    /// correction for the step; propagation still happens.
    pub fn step(
        &mut self,
        gyro: Vector3<f64>,
        accel: Vector3<f64>,
        mag: Option<Vector3<f64>>,
    ) -> Vector3<f64> {
        self.q *= UnitQuaternion::from_scaled_axis(gyro * self.dt);

        if self.cfg.correction_gain > 0.0 {
            let mut delta = Vector3::zeros();
            let a_norm = accel.norm();
            if a_norm > f64::EPSILON {
                // At rest the accelerometer reads the gravity reaction +g·ẑ
                // (world), so the predicted body-frame direction is q⁻¹ẑ.
                let measured = accel / a_norm;
                let predicted = self.q.inverse_transform_vector(&Vector3::z());
                delta += self.cfg.correction_gain * measured.cross(&predicted);
            }
            if self.cfg.use_magnetometer {
                if let Some(m) = mag {
                    let m_norm = m.norm();
                    if m_norm > f64::EPSILON {
                        let measured = m / m_norm;
                        match self.north_ref {
                            None => {
                                // First usable sample defines magnetic north
                                // in world coordinates.
                                self.north_ref = Some(Unit::new_normalize(
                                    self.q.transform_vector(&measured),
                                ));
                            }
                            Some(north) => {
                                let predicted =
                                    self.q.inverse_transform_vector(&north);
                                delta +=
                                    self.cfg.correction_gain * measured.cross(&predicted);
                            }
                        }
                    }
                }
            }
            if delta != Vector3::zeros() {
                self.q *= UnitQuaternion::from_scaled_axis(delta);
            }
        }

        self.q = UnitQuaternion::new_normalize(self.q.into_inner());

        let gravity_body = self
            .q
            .inverse_transform_vector(&(Vector3::z() * self.cfg.gravity_magnitude));
        accel - gravity_body
    }
}

/// Run the complementary filter over a whole recording.
///
/// Acceleration channels are replaced by gravity-free linear acceleration and
/// attitude channels by the fused Euler angles; gyro and magnetometer
/// channels, metadata, and timing pass through unchanged.
pub fn fuse_attitude(rec: &Recording, cfg: &FusionConfig) -> Result<Recording> {
    let mut filter = AttitudeFilter::new(cfg.clone(), rec.sample_rate_hz)?;
    let mut out = rec.clone();
    for i in 0..rec.len() {
        let pick3 = |ids: [ChannelId; 3]| {
            Vector3::new(
                rec.samples[[i, ids[0].index()]],
                rec.samples[[i, ids[1].index()]],
                rec.samples[[i, ids[2].index()]],
            )
        };
        let gyro = pick3([ChannelId::GyrX, ChannelId::GyrY, ChannelId::GyrZ]);
        let accel = pick3([ChannelId::AccX, ChannelId::AccY, ChannelId::AccZ]);
        let mag = cfg
            .use_magnetometer
            .then(|| pick3([ChannelId::MagX, ChannelId::MagY, ChannelId::MagZ]));
        let linear = filter.step(gyro, accel, mag);
        let (yaw, pitch, roll) = filter.euler_ypr();
        out.samples[[i, ChannelId::AccX.index()]] = linear.x;
        out.samples[[i, ChannelId::AccY.index()]] = linear.y;
        out.samples[[i, ChannelId::AccZ.index()]] = linear.z;
        out.samples[[i, ChannelId::AttYaw.index()]] = yaw;
        out.samples[[i, ChannelId::AttPitch.index()]] = pitch;
        out.samples[[i, ChannelId::AttRoll.index()]] = roll;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::{Population, RecordingMeta, Scenario, Wrist, NUM_CHANNELS};
    use ndarray::Array2;
    use proptest::prelude::*;

    fn meta() -> RecordingMeta {
        RecordingMeta {
            subject_id: "s01".into(),
            wrist: Wrist::Left,
            scenario: Scenario::L1,
            population: Population::Healthy,
            sample_rate_hz: 100.0,
        }
    }

    fn recording_with_acc_x(acc_x: &[f64]) -> Recording {
        let mut samples = Array2::zeros((acc_x.len(), NUM_CHANNELS));
        for (i, &v) in acc_x.iter().enumerate() {
            samples[[i, ChannelId::AccX.index()]] = v;
            samples[[i, ChannelId::MagX.index()]] = 7.0; // untouched sentinel
        }
        Recording::new(samples, &meta(), 0.0).unwrap()
    }

    #[test]
    fn drift_removes_a_constant_exactly() {
        let rec = recording_with_acc_x(&vec![2.5; 400]);
        let out = remove_drift(&rec, &DriftConfig::default()).unwrap();
        assert!(out.channel(ChannelId::AccX).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn session_drift_removal_matches_per_wrist_and_keeps_labels() {
        use crate::data_model::{LabelInterval, LabelTrack, MovementClass};
        let ramp: Vec<f64> = (0..600).map(|i| 0.01 * i as f64).collect();
        let left = recording_with_acc_x(&ramp);
        let mut right = recording_with_acc_x(&ramp);
        right.wrist = Wrist::Right;
        let labels = LabelTrack::new(vec![LabelInterval {
            start_index: 100,
            end_index: 200,
            class: MovementClass::M1,
        }])
        .unwrap();
        let session = Session {
            left: left.clone(),
            right: right.clone(),
            labels_left: labels.clone(),
            labels_right: LabelTrack::default(),
            session_id: "s1".into(),
        };
        let cfg = DriftConfig::default();
        let out = remove_drift_session(&session, &cfg).unwrap();
        assert_eq!(out.left, remove_drift(&left, &cfg).unwrap());
        assert_eq!(out.right, remove_drift(&right, &cfg).unwrap());
        assert_eq!(out.labels_left, labels);
        assert_eq!(out.session_id, "s1");
    }

    #[test]
    fn drift_cancels_a_ramp_away_from_edges() {
        let n = 1000;
        let a = 0.3;
        let ramp: Vec<f64> = (0..n).map(|i| a * i as f64 / 100.0).collect();
        let scale = ramp[n - 1].abs();
        let rec = recording_with_acc_x(&ramp);
        let out = remove_drift(&rec, &DriftConfig::default()).unwrap();
        // Window 2 s @ 100 Hz → 201 samples (forced odd), half-width 100.
        for i in 100..n - 100 {
            let v = out.samples[[i, ChannelId::AccX.index()]];
            assert!(
                v.abs() < 1e-9 * scale,
                "interior residual {v} at {i} exceeds 1e-9 relative"
            );
        }
    }

    #[test]
    fn drift_keeps_fast_sinusoid_and_drops_offset() {
        // 5 Hz sinusoid (period ≪ 2 s window) on a constant offset. Oracle:
        // the moving-average frequency response at 5 Hz, computed by direct
        // summation over one 201-sample window, bounds the amplitude loss.
        let n = 2000;
        let rate = 100.0;
        let (amp, offset, f) = (1.0, 3.0, 5.0);
        let x: Vec<f64> = (0..n)
            .map(|i| offset + amp * (2.0 * std::f64::consts::PI * f * i as f64 / rate).sin())
            .collect();
        let rec = recording_with_acc_x(&x);
        let out = remove_drift(&rec, &DriftConfig::default()).unwrap();

        let w = 201;
        let gain: f64 = (0..w)
            .map(|j| (2.0 * std::f64::consts::PI * f * j as f64 / rate).sin())
            .sum::<f64>()
            .abs()
            / w as f64;
        assert!(gain < 0.05, "oracle precondition: response {gain} should be small");

        let interior: Vec<f64> = (w..n - w)
            .map(|i| out.samples[[i, ChannelId::AccX.index()]])
            .collect();
        let peak = interior.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(
            (peak - amp).abs() <= 0.05 * amp,
            "sinusoid amplitude {peak} drifted more than 5% from {amp}"
        );
        let mean = interior.iter().sum::<f64>() / interior.len() as f64;
        assert!(mean.abs() < 0.01 * amp, "offset not removed: residual mean {mean}");
    }

    #[test]
    fn drift_is_idempotent_on_window_matched_content() {
        // Offset + sinusoid whose period (67 samples) divides the 201-sample
        // window: the moving average annihilates the sinusoid in the interior,
        // so a second application changes nothing there.
        let n = 1500;
        let x: Vec<f64> = (0..n)
            .map(|i| 4.0 + (2.0 * std::f64::consts::PI * i as f64 / 67.0).sin())
            .collect();
        let rec = recording_with_acc_x(&x);
        let once = remove_drift(&rec, &DriftConfig::default()).unwrap();
        let twice = remove_drift(&once, &DriftConfig::default()).unwrap();
        for i in 201..n - 201 {
            let d = (twice.samples[[i, 0]] - once.samples[[i, 0]]).abs();
            assert!(d < 1e-6, "second pass moved interior sample {i} by {d}");
        }
    }

    #[test]
    fn drift_preserves_everything_else() {
        let rec = recording_with_acc_x(&vec![1.0; 300]);
        let out = remove_drift(&rec, &DriftConfig::default()).unwrap();
        assert_eq!(out.channel(ChannelId::MagX), rec.channel(ChannelId::MagX));
        assert_eq!(out.len(), rec.len());
        assert_eq!(out.meta(), rec.meta());
        assert_eq!(out.start_time_ms, rec.start_time_ms);
    }

    #[test]
    fn drift_rejects_window_not_shorter_than_recording() {
        let rec = recording_with_acc_x(&vec![1.0; 150]);
        assert!(matches!(
            remove_drift(&rec, &DriftConfig::default()),
            Err(Error::InvalidConfig(_))
        ));
    }

    fn stationary_recording(n: usize) -> Recording {
        let mut samples = Array2::zeros((n, NUM_CHANNELS));
        for i in 0..n {
            samples[[i, ChannelId::AccZ.index()]] = 9.81;
            samples[[i, ChannelId::MagX.index()]] = 22.0;
            samples[[i, ChannelId::MagZ.index()]] = -41.0;
        }
        Recording::new(samples, &meta(), 0.0).unwrap()
    }

    #[test]
    fn fusion_cancels_gravity_at_rest() {
        let rec = stationary_recording(300);
        let out = fuse_attitude(&rec, &FusionConfig::default()).unwrap();
        for i in 100..300 {
            for ch in ChannelId::ACCELERATION {
                assert!(
                    out.samples[[i, ch.index()]].abs() < 0.01,
                    "linear acceleration not cancelled at sample {i}"
                );
            }
            for ch in [ChannelId::AttYaw, ChannelId::AttPitch, ChannelId::AttRoll] {
                assert!(out.samples[[i, ch.index()]].abs() < 1e-6);
            }
        }
        // Gyro and magnetometer channels pass through untouched.
        assert_eq!(out.channel(ChannelId::MagX), rec.channel(ChannelId::MagX));
        assert_eq!(out.channel(ChannelId::GyrY), rec.channel(ChannelId::GyrY));
    }

    #[test]
    fn fusion_with_zero_gain_integrates_yaw_exactly() {
        // ωz = π/2 rad/s for 2 s → yaw = π (up to the ±π wrap).
        let n = 200;
        let mut samples = Array2::zeros((n, NUM_CHANNELS));
        for i in 0..n {
            samples[[i, ChannelId::GyrZ.index()]] = std::f64::consts::FRAC_PI_2;
            samples[[i, ChannelId::AccZ.index()]] = 9.81;
        }
        let rec = Recording::new(samples, &meta(), 0.0).unwrap();
        let cfg = FusionConfig {
            correction_gain: 0.0,
            ..FusionConfig::default()
        };
        let out = fuse_attitude(&rec, &cfg).unwrap();
        let yaw = out.samples[[n - 1, ChannelId::AttYaw.index()]];
        let err = (yaw.abs() - std::f64::consts::PI).abs();
        assert!(err < 1e-3, "yaw {yaw} not within 1e-3 of ±π");
    }

    #[test]
    fn fusion_matches_analytic_integration_over_10_s() {
        let n = 1000;
        let omega = 0.4;
        let mut filter = AttitudeFilter::new(
            FusionConfig {
                correction_gain: 0.0,
                ..FusionConfig::default()
            },
            100.0,
        )
        .unwrap();
        for _ in 0..n {
            filter.step(Vector3::new(0.0, 0.0, omega), Vector3::new(0.0, 0.0, 9.81), None);
        }
        let (yaw, _, _) = filter.euler_ypr();
        let expected = {
            // 4 rad wrapped into (−π, π].
            let mut a = omega * 10.0;
            while a > std::f64::consts::PI {
                a -= 2.0 * std::f64::consts::PI;
            }
            a
        };
        assert!(
            (yaw - expected).abs() < 1e-3,
            "fused yaw {yaw} vs analytic {expected}"
        );
    }

    #[test]
    fn fusion_correction_decays_like_the_scalar_oracle() {
        // 10° initial attitude error at rest, gain 0.1. The correction step
        // rotates the up-axis estimate along the great circle toward gravity,
        // so the error angle obeys θ' = θ − gain·sin θ exactly.
        let gain = 0.1;
        let mut filter = AttitudeFilter::new(
            FusionConfig {
                correction_gain: gain,
                use_magnetometer: false,
                ..FusionConfig::default()
            },
            100.0,
        )
        .unwrap();
        let theta0 = 10.0f64.to_radians();
        filter.set_attitude(UnitQuaternion::from_scaled_axis(Vector3::x() * theta0));

        let mut oracle = theta0;
        let mut prev = theta0;
        let mut below_1deg_at = None;
        for step in 0..500 {
            filter.step(Vector3::zeros(), Vector3::new(0.0, 0.0, 9.81), None);
            oracle -= gain * oracle.sin();
            let err = filter.attitude().angle();
            assert!(
                (err - oracle).abs() < 1e-9,
                "step {step}: filter error {err} vs scalar oracle {oracle}"
            );
            assert!(err <= prev + 1e-12, "error must decay monotonically");
            prev = err;
            if below_1deg_at.is_none() && err < 1.0f64.to_radians() {
                below_1deg_at = Some(step);
            }
        }
        let reached = below_1deg_at.expect("error never fell below 1°");
        assert!(reached < 500, "decay to 1° took {reached} steps (> 5 s)");
    }

    proptest! {
        #[test]
        fn quaternion_stays_unit_norm(
            seed in any::<u64>(),
            gain in 0.0f64..=1.0,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut filter = AttitudeFilter::new(
                FusionConfig { correction_gain: gain, ..FusionConfig::default() },
                100.0,
            ).unwrap();
            for _ in 0..200 {
                let r = |rng: &mut rand_chacha::ChaCha8Rng, s: f64| {
                    Vector3::new(
                        rng.random_range(-s..s),
                        rng.random_range(-s..s),
                        rng.random_range(-s..s),
                    )
                };
                let gyro = r(&mut rng, 5.0);
                let accel = r(&mut rng, 15.0);
                let mag = r(&mut rng, 50.0);
                filter.step(gyro, accel, Some(mag));
                let norm = filter.attitude().into_inner().norm();
                prop_assert!((norm - 1.0).abs() < 1e-9);
            }
        }
    }
}
