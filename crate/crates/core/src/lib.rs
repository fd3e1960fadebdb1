//! Imputation of industrial categories and locations in enterprise
//! registration records.
//!
//! Categories are predicted from the words of the enterprise name; postcodes
//! and administrative divisions are recovered from a postcode gazetteer, and
//! the completed addresses are geocoded through a quota-limited key pool.

pub mod category;
pub mod classify;
pub mod corpus;
pub mod error;
pub mod evaluate;
pub mod gazetteer;
pub mod geocode;
pub mod locimpute;
pub mod partition;
pub mod pipeline;
pub mod segmenter;
pub mod spatial;
pub mod synth;
pub mod vectorizer;

pub use category::{Category, NUM_CATEGORIES};
pub use classify::{Method, TrainParams, TrainedModel};
pub use corpus::{Coordinates, EnterpriseRecord, GroundTruth, Origin, Postcode, Provenance};
pub use error::{Error, Result};
pub use gazetteer::{AddressTree, PostcodeEntry};
pub use geocode::{ApiKey, GeocodeResult, GeocodeStatus};
pub use locimpute::{ImputedLocation, LocationSource};
pub use segmenter::{Lexicon, Pos, Token};
pub use vectorizer::{LabeledPoint, SparseVector};
