use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use dtrack_core::autodiff::AutodiffError;
use dtrack_core::midi::{write_midi, MidiSong, NoteEvent};
use dtrack_core::models::{dual_track_generate, Arch, Model, ModelError, Representation};
use dtrack_core::repr::{from_pianoroll, write_pgm, ChordCorpus, Pianoroll};
use dtrack_core::sample::{generate, SampleConfig, SampleError, Strategy, Window};
use serde::Serialize;

use super::check_writable;
use super::train::RunRecord;
use crate::data::load_piece;
use crate::failure::{DataContext, Failure, Outcome};
use crate::manifest::{config_hash, manifest_path, record, Artifact};

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Checkpoint written by `train`
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Decoding strategy: greedy, top-k or gumbel
    #[arg(long, default_value = "gumbel")]
    pub strategy: Strategy,
    /// Gumbel noise scale
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Candidates kept by top-k
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Pianoroll activation threshold for greedy and gumbel decoding
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Steps to generate
    #[arg(long, default_value_t = 288)]
    pub length: usize,
    /// Sampling seed
    #[arg(long)]
    pub seed: u64,
    /// Consecutive rest steps that end generation early (rest-padded)
    #[arg(long, default_value_t = 144)]
    pub rest_cutoff: usize,
    /// Never stop early on rests
    #[arg(long)]
    pub no_rest_cutoff: bool,
    /// MIDI file whose opening window primes the model (default: first training window)
    #[arg(long)]
    pub prime: Option<PathBuf>,
    /// MIDI file to write
    #[arg(long)]
    pub out: PathBuf,
    /// Also render the merged output as a PGM image
    #[arg(long)]
    pub render: Option<PathBuf>,
    /// Manifest to update (default: beside the output)
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Overwrite existing outputs
    #[arg(long)]
    pub force: bool,
}

pub fn sample_failure(e: SampleError) -> Failure {
    match e {
        SampleError::NonFiniteValue(_)
        | SampleError::Model(ModelError::Autodiff(AutodiffError::NonFiniteValue(_))) => Failure::Numeric(e.into()),
        SampleError::InvalidK { .. } | SampleError::InvalidConfig(_) => Failure::Usage(e.into()),
        _ => Failure::Data(e.into()),
    }
}

fn prime_window(path: &Path, model: &Model, run: &RunRecord, corpus: Option<&ChordCorpus>) -> Outcome<Window> {
    let piece = load_piece(path, run.data.grid())?;
    let roll = if model.config().arch == Arch::DualTrack { piece.right } else { piece.merged() };
    let need = model.config().in_len;
    if roll.len() < need {
        return Err(Failure::data(format!(
            "prime {} has {} steps, the model needs {need}",
            path.display(),
            roll.len()
        )));
    }
    let rows = roll.rows()[..need].to_vec();
    Ok(match model.config().representation {
        Representation::Pianoroll => Window::Frames(rows),
        Representation::Embedding => {
            let corpus = corpus.ok_or_else(|| Failure::data("embedding run record has no corpus"))?;
            Window::Chords(corpus.encode(&Pianoroll::new(rows, roll.grid)))
        }
    })
}

fn on_track(roll: &Pianoroll, track: usize) -> Vec<NoteEvent> {
    from_pianoroll(roll).into_iter().map(|n| NoteEvent { track, ..n }).collect()
}

#[derive(Serialize)]
struct GenerationConfig<'a> {
    checkpoint_hash: &'a str,
    sample: &'a SampleConfig,
    prime: Option<&'a Path>,
}

pub fn run(args: GenerateArgs) -> Outcome {
    let mut outputs = vec![args.out.as_path()];
    if let Some(r) = &args.render {
        outputs.push(r);
    }
    check_writable(&outputs, args.force)?;

    let mut sc = SampleConfig::new(args.strategy, args.length, args.seed);
    sc.k = args.k;
    sc.gumbel_scale = args.scale;
    sc.pianoroll_threshold = args.threshold;
    sc.rest_cutoff = if args.no_rest_cutoff { None } else { Some(args.rest_cutoff) };
    sc.validate().map_err(sample_failure)?;

    let model = Model::load(&args.checkpoint).data_ctx(|| format!("loading {}", args.checkpoint.display()))?;
    let run = RunRecord::load(&args.checkpoint)?;
    if run.model != *model.config() {
        return Err(Failure::data("run record does not match the checkpoint config"));
    }
    let grid = run.data.grid();
    let ticks = u16::try_from(grid.steps_per_beat).map_err(|_| Failure::data("steps per beat exceeds the MIDI tick range"))?;
    let corpus = run.corpus()?;
    let prime = match &args.prime {
        Some(p) => prime_window(p, &model, &run, corpus.as_ref())?,
        None => run.prime.clone(),
    };

    let (right, left, saturated_at) = if model.config().arch == Arch::DualTrack {
        let o = dual_track_generate(&model, &prime, &sc, corpus.as_ref(), grid).map_err(sample_failure)?;
        (o.right, Some(o.left), o.saturated_at)
    } else {
        let g = generate(&model, &prime, &sc).map_err(sample_failure)?;
        let roll = match g.output {
            Window::Frames(rows) => Pianoroll::new(rows, grid),
            Window::Chords(seq) => corpus
                .as_ref()
                .ok_or_else(|| Failure::data("embedding run record has no corpus"))?
                .decode(&seq, grid),
        };
        (roll, None, g.saturated_at)
    };

    let mut notes = on_track(&right, 0);
    if let Some(left) = &left {
        notes.extend(on_track(left, 1));
    }
    let n_notes = notes.len();
    let bytes = write_midi(&MidiSong::new(ticks, notes));
    fs::write(&args.out, bytes).data_ctx(|| format!("writing {}", args.out.display()))?;
    if let Some(path) = &args.render {
        let merged = match &left {
            Some(l) => right.merge(l),
            None => right.clone(),
        };
        write_pgm(&merged, path).data_ctx(|| format!("writing {}", path.display()))?;
    }

    let hash = config_hash(&GenerationConfig { checkpoint_hash: &run.config_hash, sample: &sc, prime: args.prime.as_deref() });
    record(&manifest_path(args.manifest.as_deref(), &args.out), |m| {
        let artifact = |kind: &str| Artifact {
            kind: kind.into(),
            command: "generate".into(),
            config_hash: hash.clone(),
            inputs: vec![args.checkpoint.clone()],
        };
        m.artifacts.insert(args.out.clone(), artifact("midi"));
        if let Some(path) = &args.render {
            m.artifacts.insert(path.clone(), artifact("pgm"));
        }
    })?;

    print!("wrote {} ({} steps, {n_notes} notes, {} strategy", args.out.display(), right.len(), sc.strategy);
    match saturated_at {
        Some(t) => println!(", rest cutoff at step {t})"),
        None => println!(")"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_errors_classified() {
        assert!(matches!(sample_failure(SampleError::NonFiniteValue(3)), Failure::Numeric(_)));
        assert!(matches!(sample_failure(SampleError::InvalidK { k: 0, dim: 4 }), Failure::Usage(_)));
        assert!(matches!(sample_failure(SampleError::SeedLength { expected: 2, got: 1 }), Failure::Data(_)));
    }
}
