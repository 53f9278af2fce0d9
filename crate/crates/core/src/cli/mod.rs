//! Command-line front end. [`run`] parses arguments, executes one subcommand and
//! returns the process exit code: 0 success, 2 input error, 3 config or weight
//! error, 4 internal failure.

mod manifest;
mod selftest;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

pub use manifest::{
    read_embedding_vector, EmbeddingIndex, Failure, IndexEntry, Manifest, ManifestRecord,
};
pub use selftest::{run_checks, Check};

use crate::aggregation::{AggregationConfig, Mode, SpeakerEmbedding};
use crate::audio::{canonicalize, read_wav};
use crate::backbone::BackboneConfig;
use crate::dsp::{mel_spectrogram, write_f0_csv, write_mel_csv, yin_f0};
use crate::error::{Error, Result};
use crate::eval::{abx_select, cosine, cross_similarity, diagonal_dominance, grouped_cross_similarity};
use crate::model::{ModelConfig, SpeakerModel};
use crate::nn::ScaleMode;
use crate::util::write_atomic;
use crate::weights::{init_params, ParamStore};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

/// Environment variable capping the embedding worker pool.
pub const THREADS_ENV: &str = "AGV_NUM_THREADS";

pub fn exit_code(e: &Error) -> i32 {
    use Error::*;
    match e {
        MalformedContainer(_) | UnsupportedEncoding(_) | EmptyAudio | RateOutOfRange(_)
        | TooShort { .. } | EmptyContour | ZeroNorm | LabelMismatch(_) | TooFewCandidates(_)
        | Manifest(_) | Io { .. } | Json(_) => EXIT_INPUT,
        DegenerateBand(_) | ShapeMismatch(_) | EvenKernel(_) | IndivisibleHeads { .. }
        | IndivisibleScale { .. } | MissingParameter(_) | UnexpectedParameters(_)
        | InvalidConfig(_) | BadMagic { .. } | HeaderMismatch(_) | TruncatedPayload { .. }
        | DimMismatch(..) => EXIT_CONFIG,
        NonFiniteEvaluation(_) => EXIT_INTERNAL,
    }
}

#[derive(Debug, Parser)]
#[command(name = "agv", version, about = "Speaker embeddings with multi-level attention aggregation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// Cue combination: se, se+f0, se+me, se+f0+me or se+me+f0.
    #[arg(long, default_value = "se+f0+me")]
    pub mode: Mode,
    /// Replace token-bank fusion with a plain temporal mean.
    #[arg(long)]
    pub no_split: bool,
    #[arg(long, default_value_t = 8)]
    pub tokens: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    #[arg(long, default_value_t = 192)]
    pub dmodel: usize,
    #[arg(long, default_value_t = 64)]
    pub channels: usize,
    #[arg(long, default_value = "sqrt")]
    pub scale_mode: ScaleMode,
}

impl ConfigArgs {
    pub fn to_config(&self) -> ModelConfig {
        ModelConfig {
            backbone: BackboneConfig {
                channels: self.channels,
                d_model: self.dmodel,
                ..BackboneConfig::default()
            },
            aggregation: AggregationConfig {
                mode: self.mode,
                splitting: !self.no_split,
                n_tokens: self.tokens,
                heads: self.heads,
                scale_mode: self.scale_mode,
            },
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct WeightArgs {
    /// AGVW0001 weight file; without it weights are initialized from --seed.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GroupBy {
    Speaker,
    Language,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EmbeddingFormat {
    Json,
    Bin,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Embed every utterance of a JSONL manifest.
    Embed {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "json")]
        format: EmbeddingFormat,
        /// Record per-file failures in the index instead of stopping.
        #[arg(long)]
        keep_going: bool,
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        weights: WeightArgs,
    },
    /// Per-frame F0 as CSV on stdout.
    F0 { audio: PathBuf },
    /// Log-mel frames as CSV on stdout.
    Mel { audio: PathBuf },
    /// Cosine similarity matrix over an embedding index, as CSV and PGM.
    Simmatrix {
        #[arg(long)]
        index: PathBuf,
        #[arg(long, value_enum)]
        group_by: Option<GroupBy>,
        /// Output prefix; `.csv` and `.pgm` are appended.
        #[arg(long)]
        out: PathBuf,
    },
    /// Pick the candidate closest to a reference utterance.
    Abx {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        reference: String,
        /// Candidate utterance ids; defaults to every other entry.
        #[arg(long, num_args = 1..)]
        candidates: Vec<String>,
    },
    /// Gradient checks, DSP tone suite and serialization round trip.
    Selftest {
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write freshly initialized weights.
    Init {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Print per-tensor statistics of a weight file.
    Inspect {
        weights: PathBuf,
        /// Also check the file against the config flags.
        #[arg(long)]
        check: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

/// Parse `args` (including the program name) and run. Output goes to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = if code == EXIT_OK {
                write!(out, "{}", e.render())
            } else {
                write!(err, "{}", e.render())
            };
            return code;
        }
    };
    match execute(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn stdout_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn execute(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::Embed {
            manifest,
            out: dir,
            format,
            keep_going,
            config,
            weights,
        } => cmd_embed(&manifest, &dir, format, keep_going, &config.to_config(), &weights, out, err),
        Command::F0 { audio } => {
            let buf = canonicalize(&read_wav(&audio)?, false)?;
            let f0 = yin_f0(&buf)?;
            write_f0_csv(&f0, &mut &mut *out).map_err(stdout_err)?;
            Ok(EXIT_OK)
        }
        Command::Mel { audio } => {
            let buf = canonicalize(&read_wav(&audio)?, false)?;
            let mel = mel_spectrogram(&buf)?;
            write_mel_csv(&mel, &mut &mut *out).map_err(stdout_err)?;
            Ok(EXIT_OK)
        }
        Command::Simmatrix {
            index,
            group_by,
            out: prefix,
        } => cmd_simmatrix(&index, group_by, &prefix, out),
        Command::Abx {
            index,
            reference,
            candidates,
        } => cmd_abx(&index, &reference, &candidates, out),
        Command::Selftest {
            weights,
            manifest,
            seed,
        } => {
            let checks = match run_checks(weights.as_deref(), manifest.as_deref(), seed) {
                Ok(c) => c,
                Err(e) => {
                    let _ = writeln!(out, "FAIL {e}");
                    return Err(e);
                }
            };
            let mut ok = true;
            for c in &checks {
                ok &= c.passed;
                let tag = if c.passed { "PASS" } else { "FAIL" };
                let _ = writeln!(out, "{tag} {}: {}", c.name, c.detail);
            }
            let _ = writeln!(out, "{}", if ok { "PASS" } else { "FAIL" });
            Ok(if ok { EXIT_OK } else { EXIT_INTERNAL })
        }
        Command::Init {
            out: path,
            seed,
            config,
        } => {
            let cfg = config.to_config();
            let store = init_params(&cfg, seed)?;
            store.save(&path)?;
            let _ = writeln!(
                out,
                "wrote {} ({} tensors, {} parameters, config {})",
                path.display(),
                store.len(),
                store.total_parameters(),
                store.meta.config_digest
            );
            Ok(EXIT_OK)
        }
        Command::Inspect {
            weights,
            check,
            config,
        } => {
            let store = ParamStore::load(&weights)?;
            let m = &store.meta;
            let _ = writeln!(
                out,
                "format_version {} seed {} config {} tensors {} parameters {}",
                m.format_version,
                m.seed,
                m.config_digest,
                store.len(),
                store.total_parameters()
            );
            for s in store.summary() {
                let _ = writeln!(
                    out,
                    "{} {:?} min {:.6e} max {:.6e} mean {:.6e}",
                    s.name, s.shape, s.min, s.max, s.mean
                );
            }
            if check {
                store.validate(&config.to_config())?;
                let _ = writeln!(out, "matches config {}", config.to_config().digest_hex());
            }
            Ok(EXIT_OK)
        }
    }
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("{THREADS_ENV}=`{v}` is not a count")))?;
        b = b.num_threads(n);
    }
    b.build()
        .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))
}

fn load_model(cfg: &ModelConfig, w: &WeightArgs) -> Result<(SpeakerModel, u64)> {
    let store = match &w.weights {
        Some(path) => ParamStore::load(path)?,
        None => init_params(cfg, w.seed)?,
    };
    let seed = store.meta.seed;
    Ok((SpeakerModel::from_store(&store, cfg)?, seed))
}

#[allow(clippy::too_many_arguments)]
fn cmd_embed(
    manifest_path: &Path,
    dir: &Path,
    format: EmbeddingFormat,
    keep_going: bool,
    cfg: &ModelConfig,
    weights: &WeightArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32> {
    let manifest = Manifest::load(manifest_path)?;
    let (model, seed) = load_model(cfg, weights)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ext = match format {
        EmbeddingFormat::Json => "json",
        EmbeddingFormat::Bin => "bin",
    };
    let results: Vec<Result<SpeakerEmbedding>> = thread_pool()?.install(|| {
        manifest
            .records
            .par_iter()
            .map(|r| model.embed(&read_wav(&r.path)?))
            .collect()
    });
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for (r, res) in manifest.records.iter().zip(results) {
        match res {
            Ok(e) => {
                let file = format!("{}.{ext}", r.utterance_id);
                let bytes = match format {
                    EmbeddingFormat::Json => (e.to_json() + "\n").into_bytes(),
                    EmbeddingFormat::Bin => e.to_bytes(),
                };
                write_atomic(&dir.join(&file), &bytes)?;
                entries.push(IndexEntry {
                    utterance_id: r.utterance_id.clone(),
                    speaker_id: r.speaker_id.clone(),
                    language: r.language.clone(),
                    file,
                });
            }
            Err(e) if keep_going => {
                let _ = writeln!(err, "skipped {}: {e}", r.utterance_id);
                failures.push(Failure {
                    utterance_id: r.utterance_id.clone(),
                    error: e.to_string(),
                });
            }
            Err(e) => {
                let _ = writeln!(err, "{}: {}", r.utterance_id, r.path.display());
                return Err(e);
            }
        }
    }
    let index = EmbeddingIndex {
        mode: cfg.aggregation.mode,
        config_hash: cfg.digest_hex(),
        seed,
        config: cfg.clone(),
        entries,
        failures,
    };
    let json = serde_json::to_string_pretty(&index)? + "\n";
    write_atomic(&dir.join("index.json"), json.as_bytes())?;
    let _ = writeln!(
        out,
        "embedded {} of {} utterances into {} (config {})",
        index.entries.len(),
        manifest.records.len(),
        dir.display(),
        index.config_hash
    );
    Ok(EXIT_OK)
}

fn load_index_vectors(index_path: &Path) -> Result<(EmbeddingIndex, Vec<Vec<f64>>)> {
    let index = EmbeddingIndex::load(index_path)?;
    let base = index_path.parent().unwrap_or(Path::new("."));
    let vectors = index
        .entries
        .iter()
        .map(|e| read_embedding_vector(&base.join(&e.file)))
        .collect::<Result<Vec<_>>>()?;
    if let Some(first) = vectors.first() {
        if let Some(bad) = vectors.iter().find(|v| v.len() != first.len()) {
            return Err(Error::DimMismatch(bad.len(), first.len()));
        }
    }
    Ok((index, vectors))
}

fn cmd_simmatrix(
    index_path: &Path,
    group_by: Option<GroupBy>,
    prefix: &Path,
    out: &mut dyn Write,
) -> Result<i32> {
    let (index, vectors) = load_index_vectors(index_path)?;
    if vectors.len() < 2 {
        return Err(Error::Manifest(format!(
            "need at least 2 embeddings, index has {}",
            vectors.len()
        )));
    }
    let key = group_by.unwrap_or(GroupBy::Speaker);
    let group_labels: Vec<String> = index
        .entries
        .iter()
        .map(|e| match key {
            GroupBy::Speaker => e.speaker_id.clone(),
            GroupBy::Language => e.language.clone(),
        })
        .collect();
    let grouped = grouped_cross_similarity(&group_labels, &vectors)?;
    let matrix = match group_by {
        Some(_) => grouped.clone(),
        None => {
            let ids: Vec<String> = index.entries.iter().map(|e| e.utterance_id.clone()).collect();
            cross_similarity(&vectors, &vectors)?.with_labels(ids.clone(), ids)?
        }
    };
    let mut csv = Vec::new();
    matrix
        .write_csv(&mut csv)
        .map_err(|e| Error::io(prefix, e))?;
    let csv_path = with_suffix(prefix, "csv");
    let pgm_path = with_suffix(prefix, "pgm");
    write_atomic(&csv_path, &csv)?;
    write_atomic(&pgm_path, &matrix.to_pgm())?;
    let dominance = diagonal_dominance(&grouped)?;
    let _ = writeln!(
        out,
        "{}x{} matrix written to {} and {}",
        matrix.n_rows(),
        matrix.n_cols(),
        csv_path.display(),
        pgm_path.display()
    );
    let _ = writeln!(
        out,
        "diagonal_dominance {} ({} groups by {})",
        crate::dsp::sig9(dominance),
        grouped.n_rows(),
        match key {
            GroupBy::Speaker => "speaker",
            GroupBy::Language => "language",
        }
    );
    Ok(EXIT_OK)
}

fn with_suffix(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn cmd_abx(index_path: &Path, reference: &str, candidates: &[String], out: &mut dyn Write) -> Result<i32> {
    let (index, vectors) = load_index_vectors(index_path)?;
    let find = |id: &str| {
        index
            .entries
            .iter()
            .position(|e| e.utterance_id == id)
            .ok_or_else(|| Error::Manifest(format!("utterance `{id}` not in index")))
    };
    let r = find(reference)?;
    let cands: Vec<usize> = if candidates.is_empty() {
        (0..index.entries.len()).filter(|&i| i != r).collect()
    } else {
        candidates.iter().map(|c| find(c)).collect::<Result<_>>()?
    };
    let cand_vecs: Vec<&[f64]> = cands.iter().map(|&i| vectors[i].as_slice()).collect();
    let chosen = abx_select(&vectors[r], &cand_vecs)?;
    for (&i, v) in cands.iter().zip(&cand_vecs) {
        let _ = writeln!(
            out,
            "{},{}",
            index.entries[i].utterance_id,
            crate::dsp::sig9(cosine(&vectors[r], v)?)
        );
    }
    let _ = writeln!(out, "chosen {}", index.entries[cands[chosen]].utterance_id);
    Ok(EXIT_OK)
}
