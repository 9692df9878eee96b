//! JSON API over a [`kgcrowd::engine::Engine`], with token sessions, role
//! checks and an event log that replays to the same state.

mod api;
mod error;
mod http;
pub mod log;

pub use api::{parse_query, ApiRequest, ApiResponse, Service, ServiceConfig, ServiceError};
pub use error::ApiError;
pub use http::{router, serve, Shared};
