use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::repr::PITCHES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arch {
    /// Two stacked LSTM cells and a linear output layer.
    SimpleLstm,
    /// LSTM encoder, LSTM decoder, linear head.
    EncDec,
    /// Encoder-decoder with dot-product attention context fed to the decoder.
    AttnEncDec,
    /// Time and pitch convolutions in front of an attention encoder-decoder.
    CnnAttnEncDec,
    /// A right-hand generator plus a frame-wise left-hand MLP.
    DualTrack,
}

impl Arch {
    pub const ALL: [Arch; 5] = [
        Arch::SimpleLstm,
        Arch::EncDec,
        Arch::AttnEncDec,
        Arch::CnnAttnEncDec,
        Arch::DualTrack,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Arch::SimpleLstm => "simple-lstm",
            Arch::EncDec => "enc-dec",
            Arch::AttnEncDec => "attn-enc-dec",
            Arch::CnnAttnEncDec => "cnn-attn-enc-dec",
            Arch::DualTrack => "dual-track",
        }
    }

    pub fn has_encoder(self) -> bool {
        !matches!(self, Arch::SimpleLstm)
    }

    pub fn has_attention(self) -> bool {
        matches!(self, Arch::AttnEncDec | Arch::CnnAttnEncDec)
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Arch::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown architecture {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Representation {
    /// One chord index per step, fed through a learned embedding.
    Embedding,
    /// One 128-wide binary pitch frame per step.
    Pianoroll,
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Representation::Embedding => "embedding",
            Representation::Pianoroll => "pianoroll",
        })
    }
}

impl FromStr for Representation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "embedding" => Ok(Representation::Embedding),
            "pianoroll" => Ok(Representation::Pianoroll),
            _ => Err(format!("unknown representation {s:?}")),
        }
    }
}

/// Architecture hyperparameters. Every parameter shape of a model is a
/// function of this struct alone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Arch,
    pub representation: Representation,
    pub hidden_size: usize,
    /// Embedding width; equals the 128-pitch frame width for pianorolls.
    pub embedding_size: usize,
    /// LSTM layers per stack (the whole model for `SimpleLstm`, each of the
    /// encoder and decoder otherwise).
    pub num_lstm_layers: usize,
    pub conv_time_kernel: usize,
    pub conv_pitch_kernel: usize,
    /// Chord vocabulary size, embedding representation only.
    pub corpus_size: usize,
    /// Right-hand generator, `DualTrack` only.
    pub generator: Option<Arch>,
    pub mlp_hidden: usize,
    pub in_len: usize,
    pub out_len: usize,
}

impl ModelConfig {
    /// Default hyperparameters for an architecture and representation:
    /// hidden 256, embedding 200 (or frame width 128), kernels 10 and 11,
    /// four-bar windows at 72 steps per bar.
    pub fn new(arch: Arch, representation: Representation) -> Self {
        let generator = match (arch, representation) {
            (Arch::DualTrack, Representation::Pianoroll) => Some(Arch::CnnAttnEncDec),
            (Arch::DualTrack, Representation::Embedding) => Some(Arch::AttnEncDec),
            _ => None,
        };
        Self {
            arch,
            representation,
            hidden_size: 256,
            embedding_size: match representation {
                Representation::Embedding => 200,
                Representation::Pianoroll => PITCHES,
            },
            num_lstm_layers: if arch == Arch::SimpleLstm { 2 } else { 1 },
            conv_time_kernel: 10,
            conv_pitch_kernel: 11,
            corpus_size: 0,
            generator,
            mlp_hidden: 256,
            in_len: 288,
            out_len: 288,
        }
    }

    pub fn with_corpus_size(mut self, n: usize) -> Self {
        self.corpus_size = n;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        if self.hidden_size == 0 || self.num_lstm_layers == 0 {
            return bad("hidden size and layer count must be positive".into());
        }
        if self.in_len == 0 || self.out_len == 0 {
            return bad("window lengths must be positive".into());
        }
        if self.conv_time_kernel == 0 || self.conv_pitch_kernel == 0 {
            return bad("kernel sizes must be positive".into());
        }
        match self.representation {
            Representation::Embedding => {
                if self.embedding_size == 0 {
                    return bad("embedding size must be positive".into());
                }
                if self.corpus_size < 3 {
                    return bad(format!(
                        "corpus size {} is too small (two reserved indices plus at least one chord)",
                        self.corpus_size
                    ));
                }
            }
            Representation::Pianoroll => {
                if self.embedding_size != PITCHES {
                    return bad(format!(
                        "pianoroll input width must be {PITCHES}, got {}",
                        self.embedding_size
                    ));
                }
            }
        }
        let core = self.core_arch();
        if core == Arch::DualTrack {
            return bad("a dual-track generator cannot itself be dual-track".into());
        }
        if self.arch == Arch::DualTrack && self.generator.is_none() {
            return bad("dual-track needs a generator architecture".into());
        }
        if self.arch != Arch::DualTrack && self.generator.is_some() {
            return bad(format!("{} takes no generator", self.arch));
        }
        if core == Arch::CnnAttnEncDec && self.representation != Representation::Pianoroll {
            return bad("cnn-attn-enc-dec requires the pianoroll representation".into());
        }
        if self.arch == Arch::DualTrack && self.mlp_hidden == 0 {
            return bad("mlp hidden size must be positive".into());
        }
        Ok(())
    }

    /// The sequence model that produces the (right-hand) output.
    pub fn core_arch(&self) -> Arch {
        match self.arch {
            Arch::DualTrack => self.generator.unwrap_or(Arch::DualTrack),
            a => a,
        }
    }

    /// Output width per step: corpus size or 128 pitches.
    pub fn output_size(&self) -> usize {
        match self.representation {
            Representation::Embedding => self.corpus_size,
            Representation::Pianoroll => PITCHES,
        }
    }
}
