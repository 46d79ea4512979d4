//! Pipeline configuration: one TOML document covering every stage.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attrib::AttributionScale;
use crate::curate::CurationParams;
use crate::error::{Error, Result};
use crate::eval::RelabelPolicy;
use crate::model::{ModelKind, ZooConfig};
use crate::sim::{NoiseMode, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Synth,
    Features,
    Train,
    Curate,
    Refine,
    Attrib,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Synth,
        Stage::Features,
        Stage::Train,
        Stage::Curate,
        Stage::Refine,
        Stage::Attrib,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Features => "features",
            Stage::Train => "train",
            Stage::Curate => "curate",
            Stage::Refine => "refine",
            Stage::Attrib => "attrib",
            Stage::Report => "report",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSection {
    /// Stages run by `run_pipeline`; always executed in canonical order.
    pub stages: Vec<Stage>,
    pub seed: u64,
    /// Output directory; the CLI and FLIMCURATE_OUT can override it.
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
}

fn default_out_dir() -> String {
    "out".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSection {
    pub rate: f64,
    pub mode: NoiseMode,
}

impl Default for CorruptionSection {
    fn default() -> Self {
        Self { rate: 0.10, mode: NoiseMode::Adjacent }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSection {
    pub laguerre_order: usize,
    pub alpha: f64,
    pub harmonics: usize,
    #[serde(default)]
    pub include_intensity_ratio: bool,
    #[serde(default)]
    pub phasor_on_raw: bool,
}

impl Default for FeatureSection {
    fn default() -> Self {
        Self {
            laguerre_order: 12,
            alpha: crate::features::default_alpha(),
            harmonics: 3,
            include_intensity_ratio: false,
            phasor_on_raw: false,
        }
    }
}

impl FeatureSection {
    pub fn schema(&self) -> crate::features::FeatureSchema {
        crate::features::FeatureSchema {
            bands: vec![crate::sim::Band::A, crate::sim::Band::B],
            laguerre_order: self.laguerre_order,
            harmonics: self.harmonics,
            include_intensity_ratio: self.include_intensity_ratio,
            phasor_on_raw: self.phasor_on_raw,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSection {
    /// Candidate kinds ranked by the selection rule.
    pub kinds: Vec<ModelKind>,
    #[serde(default)]
    pub zoo: ZooConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self { kinds: ModelKind::ALL.to_vec(), zoo: ZooConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RefineSection {
    /// Model kind for refinement; None uses the selected baseline.
    #[serde(default)]
    pub model: Option<ModelKind>,
    #[serde(default)]
    pub policy: crate::curate::MergePolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescoreSection {
    #[serde(flatten)]
    pub policy: RelabelPolicy,
}

impl Default for RescoreSection {
    fn default() -> Self {
        Self { policy: RelabelPolicy::Oracle }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttribSection {
    pub n_permutations: usize,
    pub background_size: usize,
    pub instances_per_class: usize,
    pub top_k: usize,
    #[serde(default)]
    pub scale: AttributionScale,
    #[serde(default = "default_importance_repeats")]
    pub importance_repeats: usize,
}

fn default_importance_repeats() -> usize {
    5
}

impl Default for AttribSection {
    fn default() -> Self {
        Self {
            n_permutations: 500,
            background_size: 100,
            instances_per_class: 20,
            top_k: 5,
            scale: AttributionScale::Probability,
            importance_repeats: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub pipeline: PipelineSection,
    pub sim: SimConfig,
    #[serde(default)]
    pub corruption: CorruptionSection,
    #[serde(default)]
    pub features: FeatureSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub curation: CurationParams,
    #[serde(default)]
    pub refine: RefineSection,
    #[serde(default)]
    pub rescore: RescoreSection,
    #[serde(default)]
    pub attrib: AttribSection,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<PipelineConfig> {
        let config: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pipeline.stages.is_empty() {
            return Err(Error::Config("pipeline.stages: must not be empty".into()));
        }
        self.sim.validate()?;
        if !(0.0..1.0).contains(&self.corruption.rate) {
            return Err(Error::Config(format!(
                "corruption.rate: must be in [0,1), got {}",
                self.corruption.rate
            )));
        }
        if self.features.laguerre_order == 0 {
            return Err(Error::Config("features.laguerre_order: must be positive".into()));
        }
        if !(self.features.alpha > 0.0 && self.features.alpha < 1.0) {
            return Err(Error::Config(format!(
                "features.alpha: must be in (0,1), got {}",
                self.features.alpha
            )));
        }
        if self.features.harmonics == 0 {
            return Err(Error::Config("features.harmonics: must be positive".into()));
        }
        if self.train.kinds.is_empty() {
            return Err(Error::Config("train.kinds: must not be empty".into()));
        }
        self.curation.validate()?;
        if let RelabelPolicy::NoisyOracle { reliability } = self.rescore.policy {
            if !(0.0..=1.0).contains(&reliability) {
                return Err(Error::Config(format!(
                    "rescore.reliability: must be in [0,1], got {reliability}"
                )));
            }
        }
        if self.attrib.n_permutations == 0 {
            return Err(Error::Config("attrib.n_permutations: must be positive".into()));
        }
        if self.attrib.background_size == 0 {
            return Err(Error::Config("attrib.background_size: must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON encoding of the resolved config.
    pub fn sha256(&self) -> String {
        let canon = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&canon);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Stages to run, deduplicated and in canonical order.
    pub fn ordered_stages(&self) -> Vec<Stage> {
        let mut stages: Vec<Stage> = Stage::ALL
            .iter()
            .copied()
            .filter(|s| self.pipeline.stages.contains(s))
            .collect();
        stages.dedup();
        stages
    }
}
