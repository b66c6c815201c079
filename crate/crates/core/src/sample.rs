use serde::{Deserialize, Serialize};

/// Upper bound (exclusive) for a plausible heart rate reading.
pub const MAX_HR_BPM: f64 = 300.0;

/// One timestamped reading from the wearable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorSample {
    /// Milliseconds since session start.
    pub t_ms: u64,
    /// Acceleration in g.
    pub accel: [f64; 3],
    pub hr_bpm: Option<f64>,
    /// Skin relative humidity in percent.
    pub skin_rh: Option<f64>,
}

impl SensorSample {
    pub fn new(t_ms: u64, accel: [f64; 3], hr_bpm: Option<f64>, skin_rh: Option<f64>) -> Self {
        Self {
            t_ms,
            accel,
            hr_bpm,
            skin_rh,
        }
    }

    /// Euclidean magnitude of the acceleration vector.
    pub fn accel_magnitude(&self) -> f64 {
        let [x, y, z] = self.accel;
        (x * x + y * y + z * z).sqrt()
    }

    /// Checks the value-range invariants. Returns the offending field.
    pub fn validate(&self) -> Result<(), SampleFault> {
        if self.accel.iter().any(|a| !a.is_finite()) {
            return Err(SampleFault::Accel);
        }
        if let Some(hr) = self.hr_bpm {
            if !(hr.is_finite() && hr > 0.0 && hr < MAX_HR_BPM) {
                return Err(SampleFault::HeartRate(hr));
            }
        }
        if let Some(rh) = self.skin_rh {
            if !(rh.is_finite() && (0.0..=100.0).contains(&rh)) {
                return Err(SampleFault::SkinHumidity(rh));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum SampleFault {
    #[error("acceleration component is not finite")]
    Accel,
    #[error("heart rate {0} outside (0, 300) bpm")]
    HeartRate(f64),
    #[error("skin humidity {0} outside [0, 100] %")]
    SkinHumidity(f64),
}
