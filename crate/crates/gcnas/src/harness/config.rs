//! Experiment configuration: the TOML surface of the harness.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::darts::DartsConfig;
use crate::data::SbmParams;
use crate::error::{Error, Result};
use crate::ga::GaConfig;
use crate::gc::CutSolver;
use crate::supernet::SupernetConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMethod {
    /// No partitioning: the one-shot baseline with a single supernet.
    None,
    /// Gradient-contribution cuts.
    Gc,
    /// Same chosen layers as GC, split by a fixed index boundary
    /// (first ⌈n/2⌉ modules vs the rest).
    Fs,
    /// Same chosen layers as GC, uniformly random balanced bipartition.
    Random,
}

impl PartitionMethod {
    pub fn name(self) -> &'static str {
        match self {
            PartitionMethod::None => "none",
            PartitionMethod::Gc => "gc",
            PartitionMethod::Fs => "fs",
            PartitionMethod::Random => "random",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    pub method: PartitionMethod,
    /// Number of layers to split; yields 2^k sub-supernets.
    pub k: usize,
    pub solver: CutSolver,
    pub warmup_epochs: usize,
    pub batches_to_accumulate: usize,
    pub sub_supernet_fine_tune_epochs: usize,
    /// Re-initialize sub-supernets instead of inheriting parent weights.
    pub from_scratch: bool,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig {
            method: PartitionMethod::Gc,
            k: 2,
            solver: CutSolver::BruteForce,
            warmup_epochs: 3,
            batches_to_accumulate: 20,
            sub_supernet_fine_tune_epochs: 15,
            from_scratch: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchStrategy {
    Ga,
    Darts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub strategy: SearchStrategy,
    pub ga: GaConfig,
    pub darts: DartsConfig,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            strategy: SearchStrategy::Ga,
            ga: GaConfig::default(),
            darts: DartsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    /// Uniformly sampled subnets in the rank-correlation protocol.
    pub num_rank_subnets: usize,
    /// Full-schedule epochs for scratch-trained ground truth.
    pub scratch_epochs: usize,
    /// Brief per-subnet fine-tuning before inherited-weight evaluation.
    pub fine_tune_epochs: usize,
    /// One full experiment repetition per seed.
    pub seeds: Vec<u64>,
    /// Partition methods compared by the rank-correlation protocol.
    pub methods: Vec<PartitionMethod>,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            num_rank_subnets: 24,
            scratch_epochs: 25,
            fine_tune_epochs: 3,
            seeds: vec![101, 102, 103, 104, 105],
            methods: vec![PartitionMethod::Gc, PartitionMethod::None],
        }
    }
}

/// The whole experiment surface: `[data]`, `[supernet]`, `[partition]`,
/// `[search]`, `[protocol]` sections of the config file. Unknown keys are
/// rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: SbmParams,
    pub supernet: SupernetConfig,
    pub partition: PartitionConfig,
    pub search: SearchConfig,
    pub protocol: ProtocolConfig,
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config file {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.supernet.validate()?;
        self.search.ga.validate()?;
        if self.supernet.num_classes != self.data.num_classes {
            return Err(Error::Config(format!(
                "supernet.num_classes ({}) must match data.num_classes ({})",
                self.supernet.num_classes, self.data.num_classes
            )));
        }
        if self.partition.k + 1 > self.supernet.layers {
            return Err(Error::Config(format!(
                "partition.k ({}) needs at least k+1 supernet layers, got {}",
                self.partition.k, self.supernet.layers
            )));
        }
        if self.protocol.seeds.is_empty() {
            return Err(Error::Config("protocol.seeds must not be empty".into()));
        }
        Ok(())
    }

    /// Apply the global `--seed` override: every stage seed derives from it.
    pub fn override_seed(&mut self, seed: u64) {
        self.data.seed = seed;
        self.supernet.seed = seed;
        self.search.ga.seed = seed ^ 0x6761;
        self.search.darts.seed = seed ^ 0x6461;
        self.protocol.seeds = (0..self.protocol.seeds.len() as u64).map(|i| seed + i).collect();
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
