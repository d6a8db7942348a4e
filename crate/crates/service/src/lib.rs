//! Storage, event feed and HTTP API over the `pmdss-core` models.
//!
//! [`Service`] holds the operations; [`http::router`] exposes them over HTTP
//! and [`store::Store`] persists every project as an append-only change log.

pub mod api;
pub mod config;
pub mod error;
pub mod http;
pub mod roles;
pub mod store;

pub use api::{
    s_curve_rows, BaselineReceipt, EventRequest, IndicatorReport, IndicesView, LifecycleView,
    ModelView, SCurve, SCurveRow, SeriesPoint, Service, SnapshotReceipt,
};
pub use config::{ConfigInvalid, ServiceConfig};
pub use error::ServiceError;
pub use http::{router, serve, ErrorBody, LayeredRoute, ServeError, ROUTES};
pub use roles::RoleMap;
pub use store::{FeedEvent, FeedKind, Store, StoredProject};
