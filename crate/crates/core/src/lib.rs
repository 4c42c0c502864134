//! Hyperlocal news: geotag articles with geohash cells and serve them to
//! users by location.

pub mod affinity;
pub mod app;
pub mod corpus;
pub mod error;
pub mod gazetteer;
pub mod geocoder;
pub mod geohash;
pub mod metrics;
pub mod serving;
pub mod stamper;

pub use error::{Error, Result};
