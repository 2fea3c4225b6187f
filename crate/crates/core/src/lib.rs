//! Dual-track symbolic piano music generation.
//!
//! The crate covers the whole pipeline: Standard MIDI File ingestion
//! ([`midi`]), pianoroll and chord-index representations ([`repr`]), a small
//! reverse-mode autodiff engine ([`autodiff`]), the recurrent generators and
//! the left-hand MLP ([`models`]), teacher-forced training ([`train`]),
//! randomized decoding ([`sample`]) and the UPC/QN metrics ([`metrics`]).

pub mod autodiff;
pub mod gradsuite;
pub mod midi;
pub mod metrics;
pub mod models;
pub mod repr;
pub mod sample;
pub mod train;
