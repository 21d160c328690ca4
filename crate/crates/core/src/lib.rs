//! Wind-hazard storm classification and mixed-climate extreme wind speeds.
//!
//! The pipeline runs in stages, each a module:
//!
//! 1. [`ingest`] parses station records onto a regular 3-hour grid.
//! 2. [`terrain`] corrects recorded speeds to open-terrain exposure.
//! 3. [`storms`] selects independent peaks and trims each 96-hour window
//!    with recursive change-point segmentation.
//! 4. [`features`] turns every storm into an 82-entry statistical descriptor.
//! 5. [`learn`] trains and evaluates six classifiers on labeled storms.
//! 6. [`evt`] fits per-type extreme value models and combines them into a
//!    mixed-climate return-period curve.
//!
//! [`synth`] generates labeled synthetic stations with known storm
//! signatures, used as ground truth in tests.

pub mod error;
pub mod evt;
pub mod features;
pub mod ingest;
pub mod learn;
pub mod storms;
pub mod synth;
pub mod terrain;

mod timefmt;

pub use error::{Error, Result};
pub use features::{FeatureVector, WindType};
pub use ingest::{MetRecord, StationMeta};
pub use storms::StormSegment;
pub use terrain::RoughnessTable;
