//! Denoising toolkit for event-camera streams.
//!
//! Every event is classified as real log-intensity activity or background
//! noise. The learned classifier builds a small spatiotemporal graph around
//! each event ([`graph`]), summarizes it with an EventConv message-passing
//! layer ([`eventconv`]) and feeds the resulting signature through a
//! transformer encoder/decoder ([`transformer`]). Conventional filters
//! ([`filters`]), a ground-truth labeler ([`kogtl`]), a synthetic scene
//! generator ([`synth`]) and evaluation tooling ([`harness`]) complete the
//! toolkit.

pub mod autodiff;
pub mod error;
pub mod event;
pub mod eventconv;
pub mod filters;
pub mod graph;
pub mod harness;
pub mod kogtl;
pub mod par;
pub mod synth;
pub mod transformer;

pub use error::{Error, Result};
pub use event::{Decision, Event, EventStream, Label, Polarity, SensorGeometry};
