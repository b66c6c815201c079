//! Wearable-sensor detector for unattended diabetic-coma risk.
//!
//! Samples of acceleration, heart rate and skin humidity flow through
//! [`features`] into the [`detector`] state machine, which raises a local
//! alarm and, when nobody acknowledges it, hands over to [`escalation`].
//! [`trace`], [`scenario`], [`replay`] and [`oracle`] cover offline traces:
//! the file format, synthetic sessions, deterministic replay and an
//! independent recomputation used to verify event logs.

pub mod config;
pub mod detector;
pub mod driver;
pub mod escalation;
pub mod event;
pub mod features;
pub mod gateway;
pub mod oracle;
pub mod replay;
pub mod sample;
pub mod scenario;
pub mod settings;
pub mod trace;

pub use config::{ConfigError, DetectionConfig, SleepWindow};
pub use detector::{AttemptRequest, Detector, DetectorError, DetectorState, InputEvent};
pub use escalation::{
    AttemptOutcome, AttemptRecord, Channel, ChannelPreference, Contact, ContactList,
    EscalationError, EscalationPolicy, EscalationRun,
};
pub use event::{AlarmEvidence, EventKind, OutputEvent, StateKind, StopCause};
pub use features::{Baselines, DangerReason, DangerSet, FeatureFrame, WearStatus};
pub use sample::SensorSample;
pub use trace::{Action, TraceRecord};
