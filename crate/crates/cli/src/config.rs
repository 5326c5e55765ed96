//! Pipeline configuration: one TOML file plus a global seed drive every
//! command.
//!
//! Each section mirrors one module's config type and defaults to that
//! module's defaults, so an empty (or absent) file runs the library
//! defaults. Unknown keys are rejected and parse failures carry the
//! offending line. The single `seed` fans out to per-stage sub-seeds by
//! stable hashing ([`wristarc::derive_seed`]), so one number pins the
//! synthesis, split, and training randomness without further bookkeeping.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use wristarc::cnn::{CnnConfig, TrainConfig};
use wristarc::data_model::{ChannelId, Population, Scenario, Wrist, NUM_CHANNELS};
use wristarc::derive_seed;
use wristarc::error::{Error, Result};
use wristarc::eval::{CellConfig, DatasetConfig, SplitSpec, SplitUnit};
use wristarc::preprocess::{DriftConfig, FusionConfig};
use wristarc::segment::{PeakChannel, RestConfig, SpotConfig, WindowConfig};
use wristarc::svm::SvmConfig;
use wristarc::synth::{CorpusTemplate, Hemiparesis, JitterConfig, ProtocolConfig};

// ---------------------------------------------------------------------------
// Top level
// ---------------------------------------------------------------------------

/// Everything a pipeline run can be told, in one deserializable bundle.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Global seed; every stage derives its own sub-seed from it.
    pub seed: u64,
    pub paths: PathsSection,
    pub drift: DriftSection,
    pub fusion: FusionSection,
    pub rest: RestSection,
    pub window: WindowSection,
    pub spot: SpotSection,
    pub features: FeaturesSection,
    pub svm: SvmSection,
    pub cnn: CnnSection,
    pub split: SplitSection,
    pub synth: SynthSection,
}

impl PipelineConfig {
    /// Load a config file, or the defaults when no file is given.
    ///
    /// `seed` (the `--seed` flag) overrides the file's global seed.
    pub fn load(path: Option<&Path>, seed: Option<u64>) -> Result<PipelineConfig> {
        let mut cfg = match path {
            None => PipelineConfig::default(),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| {
                    Error::InvalidConfig(format!("cannot read {}: {e}", p.display()))
                })?;
                toml::from_str(&text).map_err(|e| {
                    Error::InvalidConfig(format!("{}: {e}", p.display()))
                })?
            }
        };
        if let Some(s) = seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }

    /// Sub-seed of one named stage.
    fn stage_seed(&self, stage: &str) -> u64 {
        derive_seed(self.seed, stage)
    }

    pub fn drift_config(&self) -> Result<DriftConfig> {
        Ok(DriftConfig {
            highpass_window_s: self.drift.highpass_window_s,
            channels: parse_channels(&self.drift.channels)?,
        })
    }

    pub fn fusion_config(&self) -> FusionConfig {
        FusionConfig {
            correction_gain: self.fusion.correction_gain,
            gravity_magnitude: self.fusion.gravity_magnitude,
            use_magnetometer: self.fusion.use_magnetometer,
        }
    }

    /// Segmentation parameters for dataset assembly.
    pub fn dataset_config(&self) -> Result<DatasetConfig> {
        Ok(DatasetConfig {
            rest: self.rest_config(),
            window: self.window_config(),
            spot: self.spot_config()?,
        })
    }

    pub fn rest_config(&self) -> RestConfig {
        RestConfig {
            energy_window_s: self.rest.energy_window_s,
            energy_threshold: self.rest.energy_threshold,
            min_rest_s: self.rest.min_rest_s,
            min_action_s: self.rest.min_action_s,
        }
    }

    pub fn window_config(&self) -> WindowConfig {
        WindowConfig {
            window_s: self.window.window_s,
        }
    }

    pub fn spot_config(&self) -> Result<SpotConfig> {
        let peak_channel = match self.spot.peak_channel.as_str() {
            "accel_norm" => PeakChannel::AccelNorm,
            other => PeakChannel::Single(ChannelId::from_str(other)?),
        };
        Ok(SpotConfig {
            margin_before_s: self.spot.margin_before_s,
            margin_after_s: self.spot.margin_after_s,
            peak_channel,
        })
    }

    pub fn svm_config(&self) -> SvmConfig {
        SvmConfig {
            c: self.svm.c,
            tolerance: self.svm.tolerance,
            max_passes: self.svm.max_passes,
            seed: self.stage_seed("svm"),
        }
    }

    /// CNN architecture template; input shape and classes are filled in per
    /// dataset when a cell runs.
    pub fn cnn_template(&self) -> CnnConfig {
        CnnConfig {
            temporal_filters: self.cnn.temporal_filters,
            depth_multiplier: self.cnn.depth_multiplier,
            separable_filters: self.cnn.separable_filters,
            temporal_kernel: self.cnn.temporal_kernel,
            separable_kernel: self.cnn.separable_kernel,
            pool1: self.cnn.pool1,
            pool2: self.cnn.pool2,
            dropout_rate: self.cnn.dropout_rate,
            seed: self.stage_seed("cnn"),
            ..CnnConfig::new(NUM_CHANNELS, 1, Vec::new())
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.cnn.learning_rate,
            batch_size: self.cnn.batch_size,
            epochs: self.cnn.epochs,
            patience: self.cnn.patience,
        }
    }

    pub fn cell_config(&self) -> CellConfig {
        CellConfig {
            svm: self.svm_config(),
            cnn: self.cnn_template(),
            cnn_train: self.train_config(),
        }
    }

    pub fn split_spec(&self) -> Result<SplitSpec> {
        let unit = match self.split.unit.as_str() {
            "segment" => SplitUnit::Segment,
            "session" => SplitUnit::Session,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown split unit {other:?}; expected \"segment\" or \"session\""
                )))
            }
        };
        Ok(SplitSpec {
            train: self.split.train,
            val: self.split.val,
            test: self.split.test,
            seed: self.stage_seed("split"),
            unit,
        })
    }

    /// Channel subset exported by the `features` command.
    pub fn feature_channels(&self) -> Result<Vec<ChannelId>> {
        let channels = parse_channels(&self.features.channels)?;
        if channels.is_empty() {
            return Err(Error::InvalidConfig(
                "features.channels must name at least one channel".into(),
            ));
        }
        Ok(channels)
    }

    /// Corpus-generation template for the `synth` command.
    pub fn synth_template(&self) -> Result<CorpusTemplate> {
        let population = Population::from_str(&self.synth.population)?;
        let dominant = Wrist::from_str(&self.synth.dominant_wrist)?;
        let hemiparesis = match self.synth.hemiparesis_scale {
            None => None,
            Some(scale) => Some(Hemiparesis {
                wrist: Wrist::from_str(&self.synth.hemiparesis_wrist)?,
                amplitude_scale: scale,
            }),
        };
        let mut protocol = ProtocolConfig::new(Scenario::L1, self.stage_seed("synth"));
        protocol.rest_s = self.synth.rest_s;
        protocol.n_target = self.synth.n_target;
        protocol.n_nontarget = self.synth.n_nontarget;
        protocol.noise_std = self.synth.noise_std;
        protocol.drift_rate = self.synth.drift_rate;
        protocol.sample_rate_hz = self.synth.sample_rate_hz;
        protocol.population = population;
        protocol.dominant = dominant;
        protocol.hemiparesis = hemiparesis;
        Ok(CorpusTemplate {
            protocol,
            jitter: JitterConfig {
                direction_deg: self.synth.jitter_direction_deg,
                duration_frac: self.synth.jitter_duration_frac,
                amplitude_frac: self.synth.jitter_amplitude_frac,
            },
            n_l1_sessions: self.synth.l1_sessions,
            n_l2_sessions: self.synth.l2_sessions,
        })
    }
}

/// Parse channel labels (`acc_x` … `att_roll`).
fn parse_channels(labels: &[String]) -> Result<Vec<ChannelId>> {
    labels.iter().map(|s| ChannelId::from_str(s)).collect()
}

// ---------------------------------------------------------------------------
// Sections
// ---------------------------------------------------------------------------

/// Where the pipeline reads and writes when `--in`/`--out` are not given.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    /// Recording corpus (synth output or external data).
    pub corpus: PathBuf,
    /// Root of every intermediate artifact.
    pub work: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        PathsSection {
            corpus: PathBuf::from("corpus"),
            work: PathBuf::from("work"),
        }
    }
}

impl PathsSection {
    pub fn ingested(&self) -> PathBuf {
        self.work.join("ingested")
    }

    pub fn preprocessed(&self) -> PathBuf {
        self.work.join("preprocessed")
    }

    pub fn segments(&self) -> PathBuf {
        self.work.join("segments")
    }

    pub fn features(&self) -> PathBuf {
        self.work.join("features")
    }

    pub fn models(&self) -> PathBuf {
        self.work.join("models")
    }

    pub fn results(&self) -> PathBuf {
        self.work.join("results")
    }

    pub fn report(&self) -> PathBuf {
        self.work.join("report")
    }
}

/// Mirrors [`DriftConfig`].
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftSection {
    pub highpass_window_s: f64,
    pub channels: Vec<String>,
}

impl Default for DriftSection {
    fn default() -> Self {
        let d = DriftConfig::default();
        DriftSection {
            highpass_window_s: d.highpass_window_s,
            channels: d.channels.iter().map(|c| c.to_string()).collect(),
        }
    }
}

/// Mirrors [`FusionConfig`] plus the switch that enables the stage: the
/// synthetic corpus already carries attitude channels, so re-deriving them
/// from the inertial channels is opt-in.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionSection {
    /// Recompute the attitude channels during `preprocess`.
    pub enabled: bool,
    pub correction_gain: f64,
    pub gravity_magnitude: f64,
    pub use_magnetometer: bool,
}

impl Default for FusionSection {
    fn default() -> Self {
        let f = FusionConfig::default();
        FusionSection {
            enabled: false,
            correction_gain: f.correction_gain,
            gravity_magnitude: f.gravity_magnitude,
            use_magnetometer: f.use_magnetometer,
        }
    }
}

/// Mirrors [`RestConfig`].
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RestSection {
    pub energy_window_s: f64,
    pub energy_threshold: f64,
    pub min_rest_s: f64,
    pub min_action_s: f64,
}

impl Default for RestSection {
    fn default() -> Self {
        let r = RestConfig::default();
        RestSection {
            energy_window_s: r.energy_window_s,
            energy_threshold: r.energy_threshold,
            min_rest_s: r.min_rest_s,
            min_action_s: r.min_action_s,
        }
    }
}

/// Mirrors [`WindowConfig`].
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowSection {
    pub window_s: f64,
}

impl Default for WindowSection {
    fn default() -> Self {
        WindowSection {
            window_s: WindowConfig::default().window_s,
        }
    }
}

/// Mirrors [`SpotConfig`]; `peak_channel` is `"accel_norm"` or one channel
/// label.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpotSection {
    pub margin_before_s: f64,
    pub margin_after_s: f64,
    pub peak_channel: String,
}

impl Default for SpotSection {
    fn default() -> Self {
        let s = SpotConfig::default();
        SpotSection {
            margin_before_s: s.margin_before_s,
            margin_after_s: s.margin_after_s,
            peak_channel: "accel_norm".into(),
        }
    }
}

/// Channel subset the `features` command exports; training always uses all
/// twelve channels.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesSection {
    pub channels: Vec<String>,
}

impl Default for FeaturesSection {
    fn default() -> Self {
        FeaturesSection {
            channels: ChannelId::ALL.iter().map(|c| c.to_string()).collect(),
        }
    }
}

/// Mirrors [`SvmConfig`]; the seed comes from the global seed.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmSection {
    pub c: f64,
    pub tolerance: f64,
    /// Cap on coordinate epochs; omitted means the library's automatic cap.
    pub max_passes: Option<usize>,
}

impl Default for SvmSection {
    fn default() -> Self {
        let s = SvmConfig::default();
        SvmSection {
            c: s.c,
            tolerance: s.tolerance,
            max_passes: s.max_passes,
        }
    }
}

/// Mirrors the [`CnnConfig`] architecture knobs and [`TrainConfig`]; input
/// shape and classes are dataset-dependent and filled in at training time.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CnnSection {
    pub temporal_filters: usize,
    pub depth_multiplier: usize,
    pub separable_filters: usize,
    pub temporal_kernel: usize,
    pub separable_kernel: usize,
    pub pool1: usize,
    pub pool2: usize,
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
}

impl Default for CnnSection {
    fn default() -> Self {
        let c = CnnConfig::new(NUM_CHANNELS, 1, Vec::new());
        let t = TrainConfig::default();
        CnnSection {
            temporal_filters: c.temporal_filters,
            depth_multiplier: c.depth_multiplier,
            separable_filters: c.separable_filters,
            temporal_kernel: c.temporal_kernel,
            separable_kernel: c.separable_kernel,
            pool1: c.pool1,
            pool2: c.pool2,
            dropout_rate: c.dropout_rate,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            epochs: t.epochs,
            patience: t.patience,
        }
    }
}

/// Mirrors [`SplitSpec`]; the seed comes from the global seed.
///
/// The default puts 20% aside for validation — the CNN needs it for early
/// stopping, and the SVM folds it back into training, so the SVM still
/// trains on 80% of the data.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    /// `"segment"` (stratified per class) or `"session"` (whole sessions).
    pub unit: String,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            train: 0.6,
            val: 0.2,
            test: 0.2,
            unit: "segment".into(),
        }
    }
}

/// Mirrors [`CorpusTemplate`]: corpus size, protocol settings, style
/// jitter, and the optional hemiparesis stand-in.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub subjects: usize,
    pub l1_sessions: usize,
    pub l2_sessions: usize,
    /// `"healthy"` or `"patient"`.
    pub population: String,
    pub rest_s: f64,
    pub n_target: usize,
    pub n_nontarget: usize,
    pub noise_std: f64,
    pub drift_rate: f64,
    pub sample_rate_hz: f64,
    pub dominant_wrist: String,
    /// Amplitude scale of the affected wrist, in (0, 1]; omitted disables
    /// the hemiparesis stand-in.
    pub hemiparesis_scale: Option<f64>,
    pub hemiparesis_wrist: String,
    pub jitter_direction_deg: f64,
    pub jitter_duration_frac: f64,
    pub jitter_amplitude_frac: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let p = ProtocolConfig::new(Scenario::L1, 0);
        let j = JitterConfig::default();
        let t = CorpusTemplate::default();
        SynthSection {
            subjects: 25,
            l1_sessions: t.n_l1_sessions,
            l2_sessions: t.n_l2_sessions,
            population: p.population.to_string(),
            rest_s: p.rest_s,
            n_target: p.n_target,
            n_nontarget: p.n_nontarget,
            noise_std: p.noise_std,
            drift_rate: p.drift_rate,
            sample_rate_hz: p.sample_rate_hz,
            dominant_wrist: p.dominant.to_string(),
            hemiparesis_scale: None,
            hemiparesis_wrist: "left".into(),
            jitter_direction_deg: j.direction_deg,
            jitter_duration_frac: j.duration_frac,
            jitter_amplitude_frac: j.amplitude_frac,
        }
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<PipelineConfig> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    #[test]
    fn empty_config_matches_library_defaults() {
        let cfg = parse("").unwrap();
        assert_eq!(cfg.seed, 0);
        let drift = cfg.drift_config().unwrap();
        let d = DriftConfig::default();
        assert_eq!(drift.highpass_window_s, d.highpass_window_s);
        assert_eq!(drift.channels, d.channels);
        assert_eq!(cfg.rest_config().energy_threshold, RestConfig::default().energy_threshold);
        assert_eq!(cfg.window_config().window_s, WindowConfig::default().window_s);
        let svm = cfg.svm_config();
        assert_eq!(svm.c, SvmConfig::default().c);
        assert_eq!(svm.max_passes, None);
        let cnn = cfg.cnn_template();
        let c = CnnConfig::new(NUM_CHANNELS, 1, Vec::new());
        assert_eq!(cnn.temporal_filters, c.temporal_filters);
        assert_eq!(cnn.temporal_kernel, c.temporal_kernel);
        assert_eq!(cfg.synth.subjects, 25);
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_line_number() {
        let err = parse("[rest]\nbogus = 1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bogus"), "{msg}");
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn stage_seeds_differ_and_derive_from_the_global_seed() {
        let cfg = parse("seed = 7").unwrap();
        let (svm, cnn, split) = (
            cfg.svm_config().seed,
            cfg.cnn_template().seed,
            cfg.split_spec().unwrap().seed,
        );
        assert_ne!(svm, cnn);
        assert_ne!(svm, split);
        assert_ne!(cnn, split);
        assert_eq!(svm, derive_seed(7, "svm"));
        let other = parse("seed = 8").unwrap();
        assert_ne!(other.svm_config().seed, svm);
    }

    #[test]
    fn seed_flag_overrides_the_file_seed() {
        let mut cfg = parse("seed = 7").unwrap();
        cfg.seed = 9;
        assert_eq!(cfg.svm_config().seed, derive_seed(9, "svm"));
    }

    #[test]
    fn peak_channel_accepts_the_norm_and_single_channels() {
        let cfg = parse("[spot]\npeak_channel = \"acc_x\"\n").unwrap();
        assert_eq!(
            cfg.spot_config().unwrap().peak_channel,
            PeakChannel::Single(ChannelId::AccX)
        );
        let cfg = parse("").unwrap();
        assert_eq!(cfg.spot_config().unwrap().peak_channel, PeakChannel::AccelNorm);
        let cfg = parse("[spot]\npeak_channel = \"bogus\"\n").unwrap();
        assert!(cfg.spot_config().is_err());
    }

    #[test]
    fn feature_channel_subset_parses_and_rejects_unknown_labels() {
        let cfg = parse("[features]\nchannels = [\"acc_x\", \"gyr_z\"]\n").unwrap();
        assert_eq!(
            cfg.feature_channels().unwrap(),
            vec![ChannelId::AccX, ChannelId::GyrZ]
        );
        let cfg = parse("[features]\nchannels = [\"bogus\"]\n").unwrap();
        assert!(cfg.feature_channels().is_err());
        let cfg = parse("[features]\nchannels = []\n").unwrap();
        assert!(cfg.feature_channels().is_err());
    }

    #[test]
    fn split_defaults_reserve_a_validation_part() {
        let spec = parse("").unwrap().split_spec().unwrap();
        assert_eq!((spec.train, spec.val, spec.test), (0.6, 0.2, 0.2));
        assert_eq!(spec.unit, SplitUnit::Segment);
        let spec = parse("[split]\nunit = \"session\"\n").unwrap().split_spec().unwrap();
        assert_eq!(spec.unit, SplitUnit::Session);
        assert!(parse("[split]\nunit = \"bogus\"\n").unwrap().split_spec().is_err());
    }

    #[test]
    fn synth_template_carries_population_and_hemiparesis() {
        let cfg = parse(
            "[synth]\npopulation = \"patient\"\nhemiparesis_scale = 0.7\nsubjects = 4\n",
        )
        .unwrap();
        let t = cfg.synth_template().unwrap();
        assert_eq!(t.protocol.population, Population::Patient);
        let h = t.protocol.hemiparesis.unwrap();
        assert_eq!(h.wrist, Wrist::Left);
        assert_eq!(h.amplitude_scale, 0.7);
        assert_eq!(cfg.synth.subjects, 4);
        assert_eq!(t.protocol.seed, derive_seed(0, "synth"));
    }
}
