use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use dtrack_core::models::{build_model, config_sidecar_path, Arch, ModelConfig, Representation};
use dtrack_core::repr::{window_dataset, ChordCorpus, Frame, Pianoroll, WindowPair};
use dtrack_core::sample::Window;
use dtrack_core::train::{hand_pairs, train, Dataset, DualTrackMode, TrainConfig, TrainData, TrainError};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::{check_writable, with_suffix};
use crate::data::{load_pieces, DataConfig, SourceRecord};
use crate::failure::{DataContext, Failure, Outcome};
use crate::manifest::{config_hash, manifest_path, record, Artifact};

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// MIDI files or directories to train on
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Architecture: simple-lstm, enc-dec, attn-enc-dec, cnn-attn-enc-dec, dual-track
    #[arg(long)]
    pub arch: Arch,
    /// Input representation: embedding or pianoroll
    #[arg(long)]
    pub repr: Representation,
    /// JSON file with optional "model", "train" and "data" sections
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Chord corpus JSON (embedding only; built from the inputs if omitted)
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Checkpoint path to write
    #[arg(long)]
    pub out: PathBuf,
    /// Seed for initialisation, shuffling and teacher forcing
    #[arg(long)]
    pub seed: u64,
    /// Training epochs
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Adam learning rate
    #[arg(long)]
    pub lr: Option<f64>,
    /// Windows per optimiser step
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// LSTM hidden size
    #[arg(long)]
    pub hidden_size: Option<usize>,
    /// Window start spacing in steps
    #[arg(long)]
    pub stride: Option<usize>,
    /// Right-hand generator for dual-track models
    #[arg(long)]
    pub generator: Option<Arch>,
    /// Dual-track schedule: sequential or joint
    #[arg(long)]
    pub dual_track_mode: Option<String>,
    /// Manifest to update (default: beside the checkpoint)
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Overwrite existing outputs
    #[arg(long)]
    pub force: bool,
}

/// Hyperparameters that may be set from a config file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOverrides {
    pub hidden_size: Option<usize>,
    pub embedding_size: Option<usize>,
    pub num_lstm_layers: Option<usize>,
    pub conv_time_kernel: Option<usize>,
    pub conv_pitch_kernel: Option<usize>,
    pub generator: Option<Arch>,
    pub mlp_hidden: Option<usize>,
}

impl ModelOverrides {
    fn apply(&self, c: &mut ModelConfig) {
        let set = |dst: &mut usize, v: Option<usize>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut c.hidden_size, self.hidden_size);
        // Pianoroll frames have a fixed width.
        if c.representation == Representation::Embedding {
            set(&mut c.embedding_size, self.embedding_size);
        }
        set(&mut c.num_lstm_layers, self.num_lstm_layers);
        set(&mut c.conv_time_kernel, self.conv_time_kernel);
        set(&mut c.conv_pitch_kernel, self.conv_pitch_kernel);
        set(&mut c.mlp_hidden, self.mlp_hidden);
        if self.generator.is_some() {
            c.generator = self.generator;
        }
    }
}

/// Schema of the `--config` file. Every section and field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub model: ModelOverrides,
    pub train: TrainConfig,
    pub data: DataConfig,
}

/// Everything `generate` needs besides the checkpoint, stored next to it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    /// Chord corpus JSON, embedding models only.
    pub corpus: Option<serde_json::Value>,
    /// First training input window, used when `generate` gets no prime.
    pub prime: Window,
    pub sources: Vec<SourceRecord>,
    pub config_hash: String,
    pub final_loss: Option<f64>,
    pub final_mlp_loss: Option<f64>,
    pub frozen_checksum: Option<(u64, u64)>,
    pub wall_time_secs: f64,
}

impl RunRecord {
    pub fn path(checkpoint: &Path) -> PathBuf {
        with_suffix(checkpoint, ".run.json")
    }

    pub fn load(checkpoint: &Path) -> Outcome<Self> {
        let path = Self::path(checkpoint);
        let text = fs::read_to_string(&path).data_ctx(|| format!("reading run record {}", path.display()))?;
        serde_json::from_str(&text).data_ctx(|| format!("parsing run record {}", path.display()))
    }

    pub fn corpus(&self) -> Outcome<Option<ChordCorpus>> {
        self.corpus
            .as_ref()
            .map(|v| ChordCorpus::from_json(&v.to_string()))
            .transpose()
            .data_ctx(|| "run record corpus".into())
    }
}

#[derive(Serialize)]
struct HashedConfig<'a> {
    model: &'a ModelConfig,
    train: &'a TrainConfig,
    data: &'a DataConfig,
    corpus: Option<String>,
    sources: &'a [SourceRecord],
}

pub fn train_failure(e: TrainError) -> Failure {
    if e.is_numeric() {
        Failure::Numeric(e.into())
    } else if matches!(e, TrainError::InvalidRate(_) | TrainError::InvalidConfig(_)) {
        Failure::Usage(e.into())
    } else {
        Failure::Data(e.into())
    }
}

fn read_config(path: &Path) -> Outcome<ConfigFile> {
    let text = fs::read_to_string(path).data_ctx(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(anyhow::Error::new(e).context(format!("config {}", path.display()))))
}

fn windows<T: Clone>(seqs: &[Vec<T>], in_len: usize, out_len: usize, stride: usize) -> Vec<WindowPair<T>> {
    seqs.iter()
        .flat_map(|s| {
            let w = window_dataset(s, in_len, out_len, stride);
            if w.is_empty() {
                warn!("skipping a piece of {} steps, shorter than one window pair", s.len());
            }
            w
        })
        .collect()
}

pub fn run(args: TrainArgs) -> Outcome {
    let file = match &args.config {
        Some(p) => read_config(p)?,
        None => ConfigFile::default(),
    };
    let mut data = file.data;
    if args.stride.is_some() {
        data.stride = args.stride;
    }
    data.validate()?;

    let mut tc = file.train;
    tc.seed = args.seed;
    if let Some(e) = args.epochs {
        tc.epochs = e;
    }
    if let Some(lr) = args.lr {
        tc.lr = lr;
    }
    if let Some(b) = args.batch_size {
        tc.batch_size = b;
    }
    if let Some(mode) = &args.dual_track_mode {
        tc.dual_track_mode = match mode.as_str() {
            "sequential" => DualTrackMode::Sequential,
            "joint" => DualTrackMode::Joint,
            other => return Err(Failure::usage(format!("unknown dual-track mode {other:?} (sequential, joint)"))),
        };
    }
    tc.validate().map_err(train_failure)?;

    let grid = data.grid();
    let mut mc = ModelConfig::new(args.arch, args.repr);
    let mut overrides = file.model;
    if args.hidden_size.is_some() {
        overrides.hidden_size = args.hidden_size;
    }
    if args.generator.is_some() {
        overrides.generator = args.generator;
    }
    overrides.apply(&mut mc);
    mc.in_len = grid.window_len(data.in_bars);
    mc.out_len = grid.window_len(data.out_bars);

    let out = &args.out;
    let run_path = RunRecord::path(out);
    let loss_path = with_suffix(out, ".loss.csv");
    let mlp_loss_path = with_suffix(out, ".mlp-loss.csv");
    let sidecar = config_sidecar_path(out);
    let dual = args.arch == Arch::DualTrack;
    let mut outputs = vec![out.as_path(), &sidecar, &run_path, &loss_path];
    if dual {
        outputs.push(&mlp_loss_path);
    }
    check_writable(&outputs, args.force)?;

    let pieces = load_pieces(&args.inputs, grid)?;
    let rolls: Vec<Pianoroll> = pieces.iter().map(|p| if dual { p.right.clone() } else { p.merged() }).collect();
    let stride = data.stride_steps();
    let (dataset, corpus, prime) = match args.repr {
        Representation::Embedding => {
            let corpus = match &args.corpus {
                Some(p) => ChordCorpus::load(p).data_ctx(|| format!("loading corpus {}", p.display()))?,
                None => ChordCorpus::build(&rolls),
            };
            mc.corpus_size = corpus.len();
            let seqs: Vec<Vec<usize>> = rolls.iter().map(|r| corpus.encode(r)).collect();
            let w = windows(&seqs, mc.in_len, mc.out_len, stride);
            let prime = w.first().map(|p| Window::Chords(p.input.clone()));
            (Dataset::Chords(w), Some(corpus), prime)
        }
        Representation::Pianoroll => {
            let seqs: Vec<Vec<Frame>> = rolls.iter().map(|r| r.rows().to_vec()).collect();
            let w = windows(&seqs, mc.in_len, mc.out_len, stride);
            let prime = w.first().map(|p| Window::Frames(p.input.clone()));
            (Dataset::Frames(w), None, prime)
        }
    };
    let Some(prime) = prime else {
        return Err(Failure::data(format!(
            "no input spans {} steps (an input window plus its target)",
            mc.in_len + mc.out_len
        )));
    };
    mc.validate().map_err(|e| Failure::Usage(e.into()))?;
    let pairs = if dual {
        pieces.iter().flat_map(|p| hand_pairs(&p.right, &p.left)).collect()
    } else {
        Vec::new()
    };

    let sources: Vec<SourceRecord> = pieces.iter().map(|p| p.source.clone()).collect();
    let corpus_json = corpus.as_ref().map(ChordCorpus::to_json);
    let hash = config_hash(&HashedConfig {
        model: &mc,
        train: &tc,
        data: &data,
        corpus: corpus_json.clone(),
        sources: &sources,
    });

    let mut model = build_model(mc.clone(), args.seed).map_err(|e| Failure::Usage(e.into()))?;
    info!(
        "training {} ({} parameters) on {} windows from {} files",
        mc.arch,
        model.num_parameters(),
        dataset.len(),
        pieces.len()
    );
    let report = train(&mut model, &TrainData { windows: dataset, hand_pairs: pairs }, &tc, Some(out)).map_err(train_failure)?;

    fs::write(&loss_path, report.loss_csv()).data_ctx(|| format!("writing {}", loss_path.display()))?;
    if dual {
        let mut csv = String::from("epoch,loss\n");
        for (e, l) in report.mlp_epoch_loss.iter().enumerate() {
            csv.push_str(&format!("{e},{l}\n"));
        }
        fs::write(&mlp_loss_path, csv).data_ctx(|| format!("writing {}", mlp_loss_path.display()))?;
    }
    let run = RunRecord {
        model: mc,
        train: tc,
        data,
        corpus: corpus_json.map(|j| serde_json::from_str(&j).expect("corpus JSON is valid")),
        prime,
        sources: sources.clone(),
        config_hash: hash.clone(),
        final_loss: report.epoch_loss.last().copied(),
        final_mlp_loss: report.mlp_epoch_loss.last().copied(),
        frozen_checksum: report.frozen_checksum,
        wall_time_secs: report.wall_time.as_secs_f64(),
    };
    let json = serde_json::to_string_pretty(&run).expect("run record serializes");
    fs::write(&run_path, json).data_ctx(|| format!("writing {}", run_path.display()))?;

    record(&manifest_path(args.manifest.as_deref(), out), |m| {
        m.add_sources(&sources);
        m.representation = Some(args.repr.to_string());
        let mut add = |path: &Path, kind: &str| {
            m.artifacts.insert(
                path.to_path_buf(),
                Artifact { kind: kind.into(), command: "train".into(), config_hash: hash.clone(), inputs: args.inputs.clone() },
            );
        };
        add(out, "checkpoint");
        add(&sidecar, "model-config");
        add(&run_path, "run-record");
        add(&loss_path, "loss-csv");
        if dual {
            add(&mlp_loss_path, "mlp-loss-csv");
        }
    })?;

    print!("trained {} for {} epochs in {:.1}s", args.arch, run.train.epochs, run.wall_time_secs);
    if let Some(l) = run.final_loss {
        print!(", final loss {l:.5}");
    }
    if let Some(l) = run.final_mlp_loss {
        print!(", final left-hand loss {l:.5}");
    }
    println!("\nwrote {}", out.display());
    Ok(())
}
