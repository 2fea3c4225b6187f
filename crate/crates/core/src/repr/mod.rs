//! Pianoroll and chord-index representations of quantized notes, hand
//! splitting for the dual-track model, and fixed-length training windows.

mod corpus;
mod pianoroll;
mod render;
mod window;

pub use corpus::{ChordCorpus, ChordSequence, CorpusError, REST, UNK};
pub use pianoroll::{from_pianoroll, split_hands, to_pianoroll, Frame, GridConfig, Pianoroll, PITCHES};
pub use render::{render_pianoroll, write_pgm, RenderError};
pub use window::{window_dataset, WindowPair};
