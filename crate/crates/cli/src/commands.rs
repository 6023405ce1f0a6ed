//! Subcommand definitions and dispatch. Every command reads whole artifacts,
//! validates them, computes, and writes outputs atomically, so a failing
//! invocation exits non-zero without leaving partial files behind.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, ensure, Context, Result};
use clap::{Subcommand, ValueEnum};
use gmmdkit::featio::common::{fmt_real, write_atomic};
use gmmdkit::featio::{self, AuxModelSet, FeatureArchive, FeatureMatrix, LatticeSet};
use gmmdkit::gmm::{self, DiagonalGmm, EmConfig};
use gmmdkit::ivector::{self, BaumWelchStats};
use gmmdkit::lattice::PhonePosteriorMatrix;
use gmmdkit::{adapt, analysis, frontend, fusion, gmmd, lattice};
use ndarray::{concatenate, Axis};
use rayon::prelude::*;

use crate::util;
use crate::Globals;

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Feature-stream transforms: splicing, DCT reduction, concatenation.
    #[command(subcommand)]
    Frontend(FrontendCmd),
    /// Gaussian mixture training.
    #[command(subcommand)]
    Gmm(GmmCmd),
    /// Speaker adaptation of an auxiliary model.
    #[command(subcommand)]
    Adapt(AdaptCmd),
    /// Log-likelihood features from an auxiliary model.
    #[command(subcommand)]
    Gmmd(GmmdCmd),
    /// Speaker embeddings over a universal background model.
    #[command(subcommand)]
    Ivector(IvectorCmd),
    /// Lattice posteriors, phone features, and consensus decoding.
    #[command(subcommand)]
    Lattice(LatticeCmd),
    /// System combination of posterior streams or lattices.
    #[command(subcommand)]
    Fuse(FuseCmd),
    /// Diagnostics: clustering, frame errors, WER, embedding exports.
    #[command(subcommand)]
    Analyze(AnalyzeCmd),
    /// Multi-stage batch runs driven by a config file.
    #[command(subcommand)]
    Pipeline(PipelineCmd),
}

#[derive(Debug, Subcommand)]
pub enum FrontendCmd {
    /// Splices every utterance over fixed frame context offsets.
    Splice {
        /// Input feature archive.
        #[arg(long = "in")]
        input: PathBuf,
        /// Context offsets, e.g. `-3..3` or `-10,-5..5,10`.
        #[arg(long, allow_hyphen_values = true)]
        offsets: String,
        /// Output feature archive.
        #[arg(long)]
        out: PathBuf,
    },
    /// Reduces each frame to its leading DCT coefficients.
    Dct {
        /// Input feature archive.
        #[arg(long = "in")]
        input: PathBuf,
        /// Number of leading coefficients to keep.
        #[arg(long)]
        keep: usize,
        /// Output feature archive.
        #[arg(long)]
        out: PathBuf,
    },
    /// Concatenates two archives frame by frame.
    Concat {
        /// First feature archive.
        #[arg(long)]
        a: PathBuf,
        /// Second feature archive; must cover the same utterances.
        #[arg(long)]
        b: PathBuf,
        /// Output feature archive.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum GmmCmd {
    /// Trains one diagonal-covariance mixture on all frames pooled.
    TrainUbm {
        /// Training feature archive.
        #[arg(long)]
        feats: PathBuf,
        /// Number of mixture components.
        #[arg(long)]
        components: usize,
        /// EM iterations.
        #[arg(long)]
        iterations: usize,
        /// Variance floor; defaults to 1e-3 times the mean data variance.
        #[arg(long)]
        variance_floor: Option<f64>,
        /// Output model file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Trains a per-state auxiliary model from aligned features.
    TrainAux {
        /// Training feature archive.
        #[arg(long)]
        feats: PathBuf,
        /// Frame alignments for every training utterance.
        #[arg(long)]
        ali: PathBuf,
        /// Mixture components per state.
        #[arg(long)]
        components: usize,
        /// EM iterations per state.
        #[arg(long)]
        iterations: usize,
        /// Variance floor; defaults to 1e-3 times the mean data variance.
        #[arg(long)]
        variance_floor: Option<f64>,
        /// Output model file.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum AdaptCmd {
    /// MAP-adapts the model means to the given data.
    Map {
        /// Prior (speaker-independent) model.
        #[arg(long)]
        model: PathBuf,
        /// Adaptation feature archive.
        #[arg(long)]
        feats: PathBuf,
        /// Frame alignments for the adaptation data.
        #[arg(long)]
        ali: PathBuf,
        /// Speaker-to-utterances map; with it, one model per speaker is
        /// written as a model set, otherwise a single model over all data.
        #[arg(long)]
        spk2utt: Option<PathBuf>,
        /// MAP prior weight.
        #[arg(long, default_value_t = 5.0)]
        tau: f64,
        /// Output model (or model set) file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Reports the per-frame log-likelihood gain of adapted models.
    Gain {
        /// Prior model.
        #[arg(long)]
        baseline: PathBuf,
        /// Adapted model, or a model set when --spk2utt is given.
        #[arg(long)]
        adapted: PathBuf,
        /// Evaluation feature archive.
        #[arg(long)]
        feats: PathBuf,
        /// Frame alignments for the evaluation data.
        #[arg(long)]
        ali: PathBuf,
        /// Speaker-to-utterances map for per-speaker gains.
        #[arg(long)]
        spk2utt: Option<PathBuf>,
        /// Optional gains file (`<speaker> <gain>` lines).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum GmmdCmd {
    /// Per-frame state log-likelihood features from an auxiliary model.
    Extract {
        /// Single model applied to every utterance.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Speaker-keyed model set; requires --spk2utt.
        #[arg(long)]
        models: Option<PathBuf>,
        /// Speaker-to-utterances map selecting each speaker's model.
        #[arg(long)]
        spk2utt: Option<PathBuf>,
        /// Input feature archive.
        #[arg(long)]
        feats: PathBuf,
        /// Output feature archive.
        #[arg(long)]
        out: PathBuf,
    },
    /// Concatenates likelihood features with base features and splices.
    BuildInput {
        /// Likelihood feature archive.
        #[arg(long)]
        gmmd: PathBuf,
        /// Base feature archive over the same utterances.
        #[arg(long)]
        base: PathBuf,
        /// Context offsets for splicing.
        #[arg(long, allow_hyphen_values = true)]
        offsets: String,
        /// Mean/variance-normalize each utterance after splicing.
        #[arg(long)]
        normalize: bool,
        /// Output feature archive.
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-utterance mean/variance normalization.
    Normalize {
        /// Input feature archive.
        #[arg(long = "in")]
        input: PathBuf,
        /// Output feature archive.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum IvectorCmd {
    /// Trains the total-variability loadings from per-speaker statistics.
    Train {
        /// Universal background model.
        #[arg(long)]
        ubm: PathBuf,
        /// Training feature archive.
        #[arg(long)]
        feats: PathBuf,
        /// Speaker-to-utterances map.
        #[arg(long)]
        spk2utt: PathBuf,
        /// Embedding dimension.
        #[arg(long)]
        dim: usize,
        /// EM iterations.
        #[arg(long)]
        iterations: usize,
        /// Output model file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Extracts one embedding per speaker.
    Extract {
        /// Trained total-variability model.
        #[arg(long)]
        tv: PathBuf,
        /// Feature archive.
        #[arg(long)]
        feats: PathBuf,
        /// Speaker-to-utterances map.
        #[arg(long)]
        spk2utt: PathBuf,
        /// Output archive of one single-frame matrix per speaker.
        #[arg(long)]
        out: PathBuf,
    },
    /// Appends each speaker's embedding to every frame of their utterances.
    Append {
        /// Input feature archive.
        #[arg(long)]
        feats: PathBuf,
        /// Embedding archive keyed by speaker.
        #[arg(long)]
        ivectors: PathBuf,
        /// Speaker-to-utterances map.
        #[arg(long)]
        spk2utt: PathBuf,
        /// Output feature archive.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum LatticeCmd {
    /// Stores forward-backward arc posteriors on every lattice.
    Posteriors {
        /// Input lattice set.
        #[arg(long = "in")]
        input: PathBuf,
        /// Acoustic scale.
        #[arg(long)]
        lambda: f64,
        /// Output lattice set.
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-frame phone posteriors as log-feature matrices.
    PhoneFeats {
        /// Input lattice set.
        #[arg(long = "in")]
        input: PathBuf,
        /// Phone symbol table.
        #[arg(long)]
        phones: PathBuf,
        /// Acoustic scale.
        #[arg(long)]
        lambda: f64,
        /// Posterior floor.
        #[arg(long, default_value_t = 1e-9)]
        epsilon: f64,
        /// Alignments; when given, each matrix is padded to the aligned
        /// frame count.
        #[arg(long)]
        ali: Option<PathBuf>,
        /// Output feature archive.
        #[arg(long)]
        out: PathBuf,
    },
    /// Builds a confusion network from every lattice.
    Cn {
        /// Input lattice set.
        #[arg(long = "in")]
        input: PathBuf,
        /// Acoustic scale (ignored when posteriors are already stored).
        #[arg(long)]
        lambda: f64,
        /// Output confusion-network set.
        #[arg(long)]
        out: PathBuf,
    },
    /// Consensus hypotheses from confusion networks.
    Consensus {
        /// Input confusion-network set.
        #[arg(long)]
        cn: PathBuf,
        /// Symbol table naming the hypothesis words.
        #[arg(long)]
        phones: PathBuf,
        /// Output transcript file (`<utterance> <word...>` lines).
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum FuseCmd {
    /// Weighted frame-level interpolation of two posterior archives.
    Posterior {
        /// First archive (weight alpha).
        #[arg(long)]
        a: PathBuf,
        /// Second archive (weight 1 - alpha).
        #[arg(long)]
        b: PathBuf,
        /// Interpolation weight in [0, 1].
        #[arg(long)]
        alpha: f64,
        /// Output feature archive.
        #[arg(long)]
        out: PathBuf,
    },
    /// Posterior-weighted union of two lattice sets.
    Lattice {
        /// First lattice set (weight alpha).
        #[arg(long)]
        a: PathBuf,
        /// Second lattice set (weight 1 - alpha).
        #[arg(long)]
        b: PathBuf,
        /// Interpolation weight in [0, 1].
        #[arg(long)]
        alpha: f64,
        /// Acoustic scale for the first set.
        #[arg(long)]
        lambda_a: f64,
        /// Acoustic scale for the second set.
        #[arg(long)]
        lambda_b: f64,
        /// Output lattice set.
        #[arg(long)]
        out: PathBuf,
    },
    /// Scores a grid of fusion weights against reference transcripts.
    AlphaSearch {
        /// Reference transcripts (`<utterance> <word...>` lines).
        #[arg(long)]
        refs: PathBuf,
        /// What the system outputs are.
        #[arg(long, value_enum)]
        mode: FuseMode,
        /// First system (feature archive or lattice set, per --mode).
        #[arg(long)]
        a: PathBuf,
        /// Second system.
        #[arg(long)]
        b: PathBuf,
        /// Acoustic scale for the first set (lattice mode).
        #[arg(long, default_value_t = 1.0)]
        lambda_a: f64,
        /// Acoustic scale for the second set (lattice mode).
        #[arg(long, default_value_t = 1.0)]
        lambda_b: f64,
        /// Symbol table naming the hypothesis words.
        #[arg(long)]
        phones: PathBuf,
        /// Weights to score: `start:step:end` or a comma-separated list.
        #[arg(long)]
        grid: String,
        /// Optional tab-separated results table.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// System-output representation for the fusion-weight search.
#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FuseMode {
    /// Frame-synchronous log-score archives, decoded by per-frame argmax.
    Posterior,
    /// Lattice sets, decoded by consensus over the fused lattice.
    Lattice,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCmd {
    /// Cluster-separability index of embedding vectors.
    DbIndex {
        /// Embedding archive (every frame of every matrix is a vector).
        #[arg(long)]
        vectors: PathBuf,
        /// Cluster-to-utterances map (`<cluster> <utterance...>` lines).
        #[arg(long)]
        clusters: PathBuf,
        /// Optional tab-separated results file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Frame error rate and oracle frame error rate of posterior features.
    Fer {
        /// Log-posterior feature archive.
        #[arg(long)]
        feats: PathBuf,
        /// Reference alignments.
        #[arg(long)]
        ali: PathBuf,
        /// Phone symbol table.
        #[arg(long)]
        phones: PathBuf,
        /// Phone whose frames are excluded as non-speech.
        #[arg(long)]
        silence_phone: String,
        /// Posterior floor the features were exported with.
        #[arg(long, default_value_t = 1e-9)]
        epsilon: f64,
        /// Optional tab-separated results table.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Candidate-depth, rank, and log-probability distributions.
    LatticeStats {
        /// Log-posterior feature archive.
        #[arg(long)]
        feats: PathBuf,
        /// Reference alignments.
        #[arg(long)]
        ali: PathBuf,
        /// Phone symbol table.
        #[arg(long)]
        phones: PathBuf,
        /// Phone whose frames are excluded as non-speech.
        #[arg(long)]
        silence_phone: String,
        /// Posterior floor the features were exported with.
        #[arg(long, default_value_t = 1e-9)]
        epsilon: f64,
        /// Optional tab-separated results table.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Word error rate of hypotheses against references.
    Wer {
        /// Reference transcripts.
        #[arg(long)]
        refs: PathBuf,
        /// Hypothesis transcripts.
        #[arg(long)]
        hyps: PathBuf,
        /// Optional tab-separated results table.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Relative WER reduction of a system over a baseline.
    Werr {
        /// Reference transcripts.
        #[arg(long)]
        refs: PathBuf,
        /// Baseline hypothesis transcripts.
        #[arg(long)]
        baseline_hyps: PathBuf,
        /// System hypothesis transcripts.
        #[arg(long)]
        system_hyps: PathBuf,
        /// Speaker-to-utterances map for per-speaker reductions.
        #[arg(long)]
        spk2utt: Option<PathBuf>,
        /// Per-speaker likelihood gains to pair with the reductions.
        #[arg(long)]
        gains: Option<PathBuf>,
        /// Optional tab-separated results table.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Labelled vector table for embedding visualisation.
    TsneExport {
        /// Embedding archive, one vector per frame.
        #[arg(long)]
        vectors: PathBuf,
        /// Alignments labelling every frame.
        #[arg(long)]
        ali: PathBuf,
        /// Phone symbol table.
        #[arg(long)]
        phones: PathBuf,
        /// Phone group to keep: vowels, consonants-1, or consonants-2.
        #[arg(long)]
        group: String,
        /// HMM state position to keep (0, 1, or 2).
        #[arg(long, default_value_t = 1)]
        hmm_position: u8,
        /// Output tab-separated table.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum PipelineCmd {
    /// Runs the stages of a config file and writes an artifact manifest.
    Run {
        /// Pipeline config file.
        #[arg(long)]
        config: PathBuf,
        /// Output manifest of artifact hashes.
        #[arg(long)]
        manifest: PathBuf,
    },
}

pub fn run(globals: &Globals, command: &Command) -> Result<()> {
    match command {
        Command::Frontend(cmd) => run_frontend(cmd),
        Command::Gmm(cmd) => run_gmm(globals, cmd),
        Command::Adapt(cmd) => run_adapt(cmd),
        Command::Gmmd(cmd) => run_gmmd(cmd),
        Command::Ivector(cmd) => run_ivector(globals, cmd),
        Command::Lattice(cmd) => run_lattice(cmd),
        Command::Fuse(cmd) => run_fuse(cmd),
        Command::Analyze(cmd) => run_analyze(cmd),
        Command::Pipeline(PipelineCmd::Run { config, manifest }) => {
            crate::pipeline::run_pipeline(globals, config, manifest)
        }
    }
}

/// Applies `f` to every utterance of an archive-like map.
fn transform<V, W>(
    map: &BTreeMap<String, V>,
    f: impl Fn(&V) -> gmmdkit::Result<W>,
) -> Result<BTreeMap<String, W>> {
    map.iter()
        .map(|(id, x)| Ok((id.clone(), f(x).with_context(|| format!("utterance {id}"))?)))
        .collect()
}

fn same_keys<A, B>(
    a: &BTreeMap<String, A>,
    b: &BTreeMap<String, B>,
    what_a: &str,
    what_b: &str,
) -> Result<()> {
    if let Some(k) = a.keys().find(|k| !b.contains_key(*k)) {
        bail!("utterance {k} is in {what_a} but not in {what_b}");
    }
    if let Some(k) = b.keys().find(|k| !a.contains_key(*k)) {
        bail!("utterance {k} is in {what_b} but not in {what_a}");
    }
    Ok(())
}

/// All frames of all utterances pooled into one matrix, in key order.
fn pooled_frames(feats: &FeatureArchive) -> Result<ndarray::Array2<f64>> {
    ensure!(!feats.is_empty(), "feature archive is empty");
    let views: Vec<_> = feats.values().map(|x| x.frames()).collect();
    concatenate(Axis(0), &views).context("utterances disagree on feature dimension")
}

fn run_frontend(cmd: &FrontendCmd) -> Result<()> {
    match cmd {
        FrontendCmd::Splice { input, offsets, out } => {
            let feats = featio::read_feature_archive(input)?;
            let offsets = util::parse_offsets(offsets)?;
            let spliced = transform(&feats, |x| frontend::splice(x, &offsets))?;
            featio::write_feature_archive(&spliced, out)?;
        }
        FrontendCmd::Dct { input, keep, out } => {
            let feats = featio::read_feature_archive(input)?;
            let reduced = transform(&feats, |x| frontend::dct_reduce(x, *keep))?;
            featio::write_feature_archive(&reduced, out)?;
        }
        FrontendCmd::Concat { a, b, out } => {
            let fa = featio::read_feature_archive(a)?;
            let fb = featio::read_feature_archive(b)?;
            same_keys(&fa, &fb, "the first archive", "the second archive")?;
            let joined = transform(&fa, |x| frontend::concat_features(x, &fb[x.utterance_id()]))?;
            featio::write_feature_archive(&joined, out)?;
        }
    }
    Ok(())
}

fn run_gmm(globals: &Globals, cmd: &GmmCmd) -> Result<()> {
    match cmd {
        GmmCmd::TrainUbm { feats, components, iterations, variance_floor, out } => {
            let feats = featio::read_feature_archive(feats)?;
            let data = pooled_frames(&feats)?;
            let variance_floor = match variance_floor {
                Some(v) => *v,
                None => gmm::default_variance_floor(data.view())?,
            };
            let config = EmConfig {
                components: *components,
                iterations: *iterations,
                variance_floor,
                seed: globals.seed,
            };
            let outcome = gmm::em_train(data.view(), &config)?;
            for (i, ll) in outcome.log_likelihoods.iter().enumerate() {
                log::info!("EM iteration {i}: log-likelihood {ll}");
            }
            featio::write_gmm(&outcome.gmm, out)?;
        }
        GmmCmd::TrainAux { feats, ali, components, iterations, variance_floor, out } => {
            let feats = featio::read_feature_archive(feats)?;
            let ali = featio::read_alignment_set(ali)?;
            let variance_floor = match variance_floor {
                Some(v) => *v,
                None => gmm::default_variance_floor(pooled_frames(&feats)?.view())?,
            };
            let config = EmConfig {
                components: *components,
                iterations: *iterations,
                variance_floor,
                seed: globals.seed,
            };
            let model = gmm::train_aux_model(&feats, &ali, &config)?;
            featio::write_aux_model(&model, out)?;
        }
    }
    Ok(())
}

fn run_adapt(cmd: &AdaptCmd) -> Result<()> {
    match cmd {
        AdaptCmd::Map { model, feats, ali, spk2utt, tau, out } => {
            let model = featio::read_aux_model(model)?;
            let feats = featio::read_feature_archive(feats)?;
            let ali = featio::read_alignment_set(ali)?;
            match spk2utt {
                Some(path) => {
                    let spk2utt = util::read_word_map(path)?;
                    ensure!(!spk2utt.is_empty(), "speaker map {} is empty", path.display());
                    let mut set = AuxModelSet::new();
                    for (speaker, utts) in &spk2utt {
                        let sub = util::archive_subset(&feats, utts)
                            .with_context(|| format!("speaker {speaker}"))?;
                        let adapted = adapt::map_adapt_means(&model, &sub, &ali, *tau)
                            .with_context(|| format!("speaker {speaker}"))?;
                        set.insert(speaker.clone(), adapted);
                    }
                    featio::write_aux_model_set(&set, out)?;
                }
                None => {
                    let adapted = adapt::map_adapt_means(&model, &feats, &ali, *tau)?;
                    featio::write_aux_model(&adapted, out)?;
                }
            }
        }
        AdaptCmd::Gain { baseline, adapted, feats, ali, spk2utt, out } => {
            let baseline = featio::read_aux_model(baseline)?;
            let feats = featio::read_feature_archive(feats)?;
            let ali = featio::read_alignment_set(ali)?;
            let gains: BTreeMap<String, f64> = match spk2utt {
                Some(path) => {
                    let spk2utt = util::read_word_map(path)?;
                    let set = featio::read_aux_model_set(adapted)?;
                    let mut gains = BTreeMap::new();
                    for (speaker, utts) in &spk2utt {
                        let model = set.get(speaker).with_context(|| {
                            format!("speaker {speaker} has no model in {}", adapted.display())
                        })?;
                        let sub = util::archive_subset(&feats, utts)
                            .with_context(|| format!("speaker {speaker}"))?;
                        let gain = adapt::likelihood_gain(&baseline, model, &sub, &ali)
                            .with_context(|| format!("speaker {speaker}"))?;
                        gains.insert(speaker.clone(), gain);
                    }
                    gains
                }
                None => {
                    let model = featio::read_aux_model(adapted)?;
                    let gain = adapt::likelihood_gain(&baseline, &model, &feats, &ali)?;
                    BTreeMap::from([("all".to_string(), gain)])
                }
            };
            for (speaker, gain) in &gains {
                println!("{speaker} {gain:.6}");
            }
            if let Some(path) = out {
                util::write_real_map(&gains, "log-likelihood gain per frame", path)?;
            }
        }
    }
    Ok(())
}

fn run_gmmd(cmd: &GmmdCmd) -> Result<()> {
    match cmd {
        GmmdCmd::Extract { model, models, spk2utt, feats, out } => {
            let feats = featio::read_feature_archive(feats)?;
            let extracted = match (model, models) {
                (Some(_), Some(_)) => bail!("--model and --models are mutually exclusive"),
                (None, None) => bail!("one of --model or --models is required"),
                (Some(path), None) => {
                    ensure!(spk2utt.is_none(), "--spk2utt requires --models");
                    let model = featio::read_aux_model(path)?;
                    gmmd::extract_gmmd_archive(&model, &feats)?
                }
                (None, Some(path)) => {
                    let Some(spk2utt) = spk2utt else {
                        bail!("--models requires --spk2utt");
                    };
                    let set = featio::read_aux_model_set(path)?;
                    let spk2utt = util::read_word_map(spk2utt)?;
                    util::utterance_speakers(&spk2utt)?;
                    let mut extracted = FeatureArchive::new();
                    for (speaker, utts) in &spk2utt {
                        let model = set.get(speaker).with_context(|| {
                            format!("speaker {speaker} has no model in {}", path.display())
                        })?;
                        let sub = util::archive_subset(&feats, utts)
                            .with_context(|| format!("speaker {speaker}"))?;
                        extracted.extend(gmmd::extract_gmmd_archive(model, &sub)?);
                    }
                    if let Some(id) = feats.keys().find(|id| !extracted.contains_key(*id)) {
                        bail!("utterance {id} is not claimed by any speaker");
                    }
                    extracted
                }
            };
            featio::write_feature_archive(&extracted, out)?;
        }
        GmmdCmd::BuildInput { gmmd, base, offsets, normalize, out } => {
            let gf = featio::read_feature_archive(gmmd)?;
            let bf = featio::read_feature_archive(base)?;
            same_keys(&gf, &bf, "the likelihood archive", "the base archive")?;
            let offsets = util::parse_offsets(offsets)?;
            let built = transform(&gf, |g| {
                let y = gmmd::build_gmmd_input(g, &bf[g.utterance_id()], &offsets)?;
                if *normalize {
                    gmmd::mean_variance_normalize(&y)
                } else {
                    Ok(y)
                }
            })?;
            featio::write_feature_archive(&built, out)?;
        }
        GmmdCmd::Normalize { input, out } => {
            let feats = featio::read_feature_archive(input)?;
            let normalized = transform(&feats, gmmd::mean_variance_normalize)?;
            featio::write_feature_archive(&normalized, out)?;
        }
    }
    Ok(())
}

/// Accumulates zeroth/first-order statistics per speaker, in parallel over
/// speakers with a deterministic reduction order.
fn speaker_stats(
    ubm: &DiagonalGmm,
    feats: &FeatureArchive,
    spk2utt: &BTreeMap<String, Vec<String>>,
) -> Result<BTreeMap<String, BaumWelchStats>> {
    ensure!(!spk2utt.is_empty(), "speaker map is empty");
    util::utterance_speakers(spk2utt)?;
    let speakers: Vec<_> = spk2utt.iter().collect();
    let stats: Vec<(String, BaumWelchStats)> = speakers
        .par_iter()
        .map(|(speaker, utts)| {
            ensure!(!utts.is_empty(), "speaker {speaker} has no utterances");
            let mut acc = BaumWelchStats::zeros(ubm.num_components(), ubm.dim());
            for utt in *utts {
                let x = feats.get(utt).with_context(|| {
                    format!("utterance {utt} of speaker {speaker} is missing from the features")
                })?;
                acc.merge(&ivector::accumulate_stats(ubm, x)?)?;
            }
            Ok(((*speaker).clone(), acc))
        })
        .collect::<Result<_>>()?;
    Ok(stats.into_iter().collect())
}

fn run_ivector(globals: &Globals, cmd: &IvectorCmd) -> Result<()> {
    match cmd {
        IvectorCmd::Train { ubm, feats, spk2utt, dim, iterations, out } => {
            let ubm = featio::read_gmm(ubm)?;
            let feats = featio::read_feature_archive(feats)?;
            let spk2utt = util::read_word_map(spk2utt)?;
            let stats = speaker_stats(&ubm, &feats, &spk2utt)?;
            let outcome =
                ivector::train_total_variability(&stats, &ubm, *dim, *iterations, globals.seed)?;
            for (i, objective) in outcome.objective.iter().enumerate() {
                log::info!("EM iteration {i}: objective {objective}");
            }
            featio::write_tv_model(&outcome.tv, out)?;
        }
        IvectorCmd::Extract { tv, feats, spk2utt, out } => {
            let tv = featio::read_tv_model(tv)?;
            let feats = featio::read_feature_archive(feats)?;
            let spk2utt = util::read_word_map(spk2utt)?;
            let stats = speaker_stats(tv.ubm(), &feats, &spk2utt)?;
            let mut embeddings = FeatureArchive::new();
            for (speaker, acc) in &stats {
                let w = ivector::extract_ivector(&tv, acc)
                    .with_context(|| format!("speaker {speaker}"))?;
                let matrix = FeatureMatrix::new(speaker.clone(), w.insert_axis(Axis(0)))?;
                embeddings.insert(speaker.clone(), matrix);
            }
            featio::write_feature_archive(&embeddings, out)?;
        }
        IvectorCmd::Append { feats, ivectors, spk2utt, out } => {
            let feats = featio::read_feature_archive(feats)?;
            let ivectors = featio::read_feature_archive(ivectors)?;
            let spk2utt = util::read_word_map(spk2utt)?;
            let utt2spk = util::utterance_speakers(&spk2utt)?;
            let appended = feats
                .iter()
                .map(|(id, x)| {
                    let speaker = utt2spk
                        .get(id)
                        .with_context(|| format!("utterance {id} is not in the speaker map"))?;
                    let w = ivectors.get(speaker).with_context(|| {
                        format!("speaker {speaker} has no entry in the embedding archive")
                    })?;
                    ensure!(
                        w.num_frames() == 1,
                        "embedding for speaker {speaker} has {} frames, expected 1",
                        w.num_frames()
                    );
                    Ok((id.clone(), ivector::append_ivector(x, w.frame(0))?))
                })
                .collect::<Result<FeatureArchive>>()?;
            featio::write_feature_archive(&appended, out)?;
        }
    }
    Ok(())
}

fn run_lattice(cmd: &LatticeCmd) -> Result<()> {
    match cmd {
        LatticeCmd::Posteriors { input, lambda, out } => {
            let lats = featio::read_lattice_set(input)?;
            let scored = transform(&lats, |lat| lattice::with_computed_posteriors(lat, *lambda))?;
            featio::write_lattice_set(&scored, out)?;
        }
        LatticeCmd::PhoneFeats { input, phones, lambda, epsilon, ali, out } => {
            let lats = featio::read_lattice_set(input)?;
            let phones = featio::read_symbol_table(phones)?;
            let ali = ali.as_ref().map(|p| featio::read_alignment_set(p)).transpose()?;
            let feats = lats
                .iter()
                .map(|(id, lat)| {
                    let t = match &ali {
                        Some(set) => Some(
                            set.get(id)
                                .with_context(|| format!("utterance {id} has no alignment"))?
                                .len(),
                        ),
                        None => None,
                    };
                    let p = lattice::phone_posterior_features(lat, &phones, *lambda, *epsilon, t)
                        .with_context(|| format!("utterance {id}"))?;
                    Ok((id.clone(), p.to_log_features()?))
                })
                .collect::<Result<FeatureArchive>>()?;
            featio::write_feature_archive(&feats, out)?;
        }
        LatticeCmd::Cn { input, lambda, out } => {
            let lats = featio::read_lattice_set(input)?;
            let cns = transform(&lats, |lat| lattice::build_confusion_network(lat, *lambda))?;
            featio::write_confusion_networks(&cns, out)?;
        }
        LatticeCmd::Consensus { cn, phones, out } => {
            let cns = featio::read_confusion_networks(cn)?;
            let phones = featio::read_symbol_table(phones)?;
            let hyps = cns
                .iter()
                .map(|(id, cn)| {
                    let words = lattice::consensus_hypothesis(cn)
                        .into_iter()
                        .map(|sym| {
                            phones.name_of(sym).map(str::to_string).with_context(|| {
                                format!("utterance {id}: symbol {sym} is not in the table")
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Ok((id.clone(), words))
                })
                .collect::<Result<BTreeMap<_, _>>>()?;
            util::write_word_map(&hyps, "consensus hypotheses", out)?;
        }
    }
    Ok(())
}

fn run_fuse(cmd: &FuseCmd) -> Result<()> {
    match cmd {
        FuseCmd::Posterior { a, b, alpha, out } => {
            let fa = featio::read_feature_archive(a)?;
            let fb = featio::read_feature_archive(b)?;
            same_keys(&fa, &fb, "the first archive", "the second archive")?;
            let fused = transform(&fa, |x| fusion::posterior_fuse(x, &fb[x.utterance_id()], *alpha))?;
            featio::write_feature_archive(&fused, out)?;
        }
        FuseCmd::Lattice { a, b, alpha, lambda_a, lambda_b, out } => {
            let la = featio::read_lattice_set(a)?;
            let lb = featio::read_lattice_set(b)?;
            same_keys(&la, &lb, "the first lattice set", "the second lattice set")?;
            let fused = la
                .iter()
                .map(|(id, lat)| {
                    let merged = fusion::lattice_fuse(lat, &lb[id], *alpha, *lambda_a, *lambda_b)
                        .with_context(|| format!("utterance {id}"))?;
                    Ok((id.clone(), merged))
                })
                .collect::<Result<LatticeSet>>()?;
            featio::write_lattice_set(&fused, out)?;
        }
        FuseCmd::AlphaSearch {
            refs,
            mode,
            a,
            b,
            lambda_a,
            lambda_b,
            phones,
            grid,
            out,
        } => {
            let refs = util::read_word_map(refs)?;
            let phones = featio::read_symbol_table(phones)?;
            let grid = util::parse_grid(grid)?;
            let report = match mode {
                FuseMode::Posterior => {
                    let fa = featio::read_feature_archive(a)?;
                    let fb = featio::read_feature_archive(b)?;
                    let source = fusion::FusionSource::LogScores { a: &fa, b: &fb };
                    fusion::alpha_search(&refs, &source, &phones, &grid)?
                }
                FuseMode::Lattice => {
                    let la = featio::read_lattice_set(a)?;
                    let lb = featio::read_lattice_set(b)?;
                    let source = fusion::FusionSource::Lattices {
                        a: &la,
                        b: &lb,
                        lambda_a: *lambda_a,
                        lambda_b: *lambda_b,
                    };
                    fusion::alpha_search(&refs, &source, &phones, &grid)?
                }
            };
            util::emit_report(&report.text(), &report.table(), out.as_deref())?;
        }
    }
    Ok(())
}

fn run_analyze(cmd: &AnalyzeCmd) -> Result<()> {
    match cmd {
        AnalyzeCmd::DbIndex { vectors, clusters, out } => {
            let vectors = featio::read_feature_archive(vectors)?;
            let clusters = util::read_word_map(clusters)?;
            ensure!(!clusters.is_empty(), "the cluster map is empty");
            util::utterance_speakers(&clusters)?;
            let mut views = Vec::new();
            let mut labels = Vec::new();
            for (k, (cluster, utts)) in clusters.iter().enumerate() {
                for utt in utts {
                    let x = vectors.get(utt).with_context(|| {
                        format!("utterance {utt} of cluster {cluster} is missing from the vectors")
                    })?;
                    views.push(x.frames());
                    labels.extend(std::iter::repeat(k).take(x.num_frames()));
                }
            }
            ensure!(!views.is_empty(), "the cluster map names no utterances");
            let data = concatenate(Axis(0), &views).context("vector dimensions disagree")?;
            let db = analysis::db_index(data.view(), &labels)?;
            let text = format!("DB index: {db:.6}\n");
            let table = format!("db_index\t{}\n", fmt_real(db));
            util::emit_report(&text, &table, out.as_deref())?;
        }
        AnalyzeCmd::Fer { feats, ali, phones, silence_phone, epsilon, out } => {
            let feats = featio::read_feature_archive(feats)?;
            ensure!(!feats.is_empty(), "feature archive is empty");
            let refs = featio::read_alignment_set(ali)?;
            let phones = featio::read_symbol_table(phones)?;
            let silence = silence_id(&phones, silence_phone)?;
            let mut text = String::new();
            let mut table = String::from("utterance\tfer\toracle_fer\tspeech_frames\n");
            let (mut fer_sum, mut oracle_sum, mut total_speech) = (0.0, 0.0, 0usize);
            for (id, x) in &feats {
                let p = PhonePosteriorMatrix::from_log_features(x, *epsilon)?;
                let track = refs
                    .get(id)
                    .with_context(|| format!("utterance {id} has no alignment"))?;
                let mask = analysis::speech_mask(track, silence);
                let speech = mask.iter().filter(|&&b| b).count();
                let (fer, oracle) = analysis::frame_error_rates(&p, track, &mask, &phones)
                    .with_context(|| format!("utterance {id}"))?;
                text.push_str(&format!(
                    "{id}: FER {:.2}% oracle {:.2}% ({speech} speech frames)\n",
                    100.0 * fer,
                    100.0 * oracle
                ));
                table.push_str(&format!(
                    "{id}\t{}\t{}\t{speech}\n",
                    fmt_real(fer),
                    fmt_real(oracle)
                ));
                fer_sum += fer * speech as f64;
                oracle_sum += oracle * speech as f64;
                total_speech += speech;
            }
            let corpus_fer = fer_sum / total_speech as f64;
            let corpus_oracle = oracle_sum / total_speech as f64;
            text.push_str(&format!(
                "corpus: FER {:.2}% oracle {:.2}% ({total_speech} speech frames)\n",
                100.0 * corpus_fer,
                100.0 * corpus_oracle
            ));
            table.push_str(&format!(
                "corpus\t{}\t{}\t{total_speech}\n",
                fmt_real(corpus_fer),
                fmt_real(corpus_oracle)
            ));
            util::emit_report(&text, &table, out.as_deref())?;
        }
        AnalyzeCmd::LatticeStats { feats, ali, phones, silence_phone, epsilon, out } => {
            let feats = featio::read_feature_archive(feats)?;
            let refs = featio::read_alignment_set(ali)?;
            let phones = featio::read_symbol_table(phones)?;
            let silence = silence_id(&phones, silence_phone)?;
            let mut ps = BTreeMap::new();
            let mut masks = BTreeMap::new();
            for (id, x) in &feats {
                let track = refs
                    .get(id)
                    .with_context(|| format!("utterance {id} has no alignment"))?;
                masks.insert(id.clone(), analysis::speech_mask(track, silence));
                ps.insert(id.clone(), PhonePosteriorMatrix::from_log_features(x, *epsilon)?);
            }
            let report = analysis::lattice_statistics(&ps, &refs, &masks, &phones)?;
            util::emit_report(&report.text(), &report.table(), out.as_deref())?;
        }
        AnalyzeCmd::Wer { refs, hyps, out } => {
            let refs = util::read_word_map(refs)?;
            let hyps = util::read_word_map(hyps)?;
            let report = analysis::wer_score(&refs, &hyps)?;
            util::emit_report(&report.text(), &report.table(), out.as_deref())?;
        }
        AnalyzeCmd::Werr { refs, baseline_hyps, system_hyps, spk2utt, gains, out } => {
            let refs = util::read_word_map(refs)?;
            let baseline = analysis::wer_score(&refs, &util::read_word_map(baseline_hyps)?)?;
            let system = analysis::wer_score(&refs, &util::read_word_map(system_hyps)?)?;
            let spk2utt = spk2utt.as_ref().map(|p| util::read_word_map(p)).transpose()?;
            let gains = gains.as_ref().map(|p| util::read_real_map(p)).transpose()?;
            let report =
                analysis::werr_report(&baseline, &system, spk2utt.as_ref(), gains.as_ref())?;
            util::emit_report(&report.text(), &report.table(), out.as_deref())?;
        }
        AnalyzeCmd::TsneExport { vectors, ali, phones, group, hmm_position, out } => {
            let vectors = featio::read_feature_archive(vectors)?;
            let refs = featio::read_alignment_set(ali)?;
            let phones = featio::read_symbol_table(phones)?;
            let group: analysis::PhoneGroup = group.parse()?;
            let mut views = Vec::new();
            let mut labels = Vec::new();
            for (id, x) in &vectors {
                let track = refs
                    .get(id)
                    .with_context(|| format!("utterance {id} has no alignment"))?;
                ensure!(
                    track.len() == x.num_frames(),
                    "utterance {id}: {} frames but {} alignment labels",
                    x.num_frames(),
                    track.len()
                );
                views.push(x.frames());
                labels.extend(track.labels().iter().map(|l| (l.phone_id, l.hmm_position)));
            }
            ensure!(!views.is_empty(), "vector archive is empty");
            let data = concatenate(Axis(0), &views).context("vector dimensions disagree")?;
            let rendered = analysis::tsne_export(data.view(), &labels, &phones, *hmm_position, group)?;
            write_atomic(out, |w| {
                w.write_all(rendered.as_bytes())?;
                Ok(())
            })?;
        }
    }
    Ok(())
}

fn silence_id(phones: &featio::SymbolTable, name: &str) -> Result<u32> {
    phones
        .id_of(name)
        .with_context(|| format!("silence phone {name:?} is not in the symbol table"))
}
