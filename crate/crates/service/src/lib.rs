//! Live sessions over HTTP.
//!
//! Each session wraps a [`comaguard_core::driver::Driver`] and persists its
//! inputs and events as JSON Lines, so a restarted service resumes every
//! session with an identical log.

pub mod api;
pub mod config;
pub mod error;
pub mod gateway;
pub mod mock;
pub mod session;

pub use api::{router, serve, CreateSession, Registry};
pub use config::{ServiceConfig, ServiceOptions};
pub use error::ServiceError;
pub use gateway::{Gateway, GatewayOutcome, GatewayRequest, GatewayResponse, ENV_GATEWAY_URL};
pub use mock::MockGateway;
pub use session::{RecoverError, Session, SessionMeta, StepReport, WallClock};
