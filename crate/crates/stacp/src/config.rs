//! Experiment configuration: a TOML file plus command-line overrides.
//!
//! ```toml
//! seed = 0
//! workers = 0                 # 0 uses every core
//! out = "runs/default"
//! methods = ["stacp", "no-ctx", "no-tc", "toppopular", "pfm", "pfmpd"]
//! cutoffs = [10, 20]
//! train_fraction = 1.0
//!
//! [dataset]
//! path = "checkins.tsv"
//! profile = "gowalla"         # gowalla | foursquare | custom
//! # delimiter, columns, has_header and time_format override the profile
//!
//! [policy]
//! work_days = [0, 1, 2, 3, 4] # 0 = Monday
//! work_start_hour = 8
//! work_end_hour = 18
//!
//! [split]
//! train = 0.7
//! validation = 0.1
//! test = 0.2
//!
//! [centers]
//! d = 15.0
//! alpha = 0.02
//!
//! [context]
//! lambda = 0.5
//!
//! [factorization]
//! k = 30
//! sigma = 2.0
//! rho = 1.0
//! learning_rate = 1e-4
//! max_epochs = 300
//! tolerance = 1e-6
//! floor = 1e-8
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use stacp_core::{CenterConfig, ContextConfig, SplitRatios, StatePolicy, TrainConfig};

use crate::dataset::{Column, DatasetFormat, TimeFormat};
use crate::error::{Error, Result};
use crate::pipeline::Method;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: Option<PathBuf>,
    pub profile: String,
    pub delimiter: Option<char>,
    pub columns: Option<Vec<Column>>,
    pub has_header: Option<bool>,
    pub time_format: Option<TimeFormat>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            path: None,
            profile: "custom".into(),
            delimiter: None,
            columns: None,
            has_header: None,
            time_format: None,
        }
    }
}

impl DatasetConfig {
    pub fn format(&self) -> Result<DatasetFormat> {
        let mut f = DatasetFormat::profile(&self.profile)
            .ok_or_else(|| Error::Config(format!("dataset.profile: unknown profile {:?}", self.profile)))?;
        if let Some(d) = self.delimiter {
            f.delimiter = d;
        }
        if let Some(c) = &self.columns {
            f.columns = c.clone();
        }
        if let Some(h) = self.has_header {
            f.has_header = h;
        }
        if let Some(t) = self.time_format {
            f.time_format = t;
        }
        f.validate()?;
        Ok(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub work_days: Vec<u8>,
    pub work_start_hour: u8,
    pub work_end_hour: u8,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig { work_days: vec![0, 1, 2, 3, 4], work_start_hour: 8, work_end_hour: 18 }
    }
}

impl PolicyConfig {
    pub fn policy(&self) -> Result<StatePolicy> {
        let mut work_days = [false; 7];
        for &d in &self.work_days {
            *work_days
                .get_mut(usize::from(d))
                .ok_or_else(|| Error::Config(format!("policy.work_days: {d} is not a weekday index 0-6")))? = true;
        }
        let p = StatePolicy { work_days, work_start_hour: self.work_start_hour, work_end_hour: self.work_end_hour };
        p.validate().map_err(|e| Error::Config(format!("policy: {e}")))?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        let r = SplitRatios::default();
        SplitConfig { train: r.train, validation: r.validation, test: r.test }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CentersConfig {
    pub d: f64,
    pub alpha: f64,
}

impl Default for CentersConfig {
    fn default() -> Self {
        let c = CenterConfig::default();
        CentersConfig { d: c.d, alpha: c.alpha }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContextSection {
    pub lambda: f64,
}

impl Default for ContextSection {
    fn default() -> Self {
        ContextSection { lambda: ContextConfig::default().lambda }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FactorizationConfig {
    pub k: usize,
    pub sigma: f64,
    pub rho: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub tolerance: f64,
    pub floor: f64,
}

impl Default for FactorizationConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        FactorizationConfig {
            k: t.k,
            sigma: t.sigma,
            rho: t.rho,
            learning_rate: t.learning_rate,
            max_epochs: t.max_epochs,
            tolerance: t.tolerance,
            floor: t.floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
    pub methods: Vec<Method>,
    pub cutoffs: Vec<usize>,
    pub train_fraction: f64,
    pub dataset: DatasetConfig,
    pub policy: PolicyConfig,
    pub split: SplitConfig,
    pub centers: CentersConfig,
    pub context: ContextSection,
    pub factorization: FactorizationConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            workers: 0,
            out: PathBuf::from("runs/default"),
            methods: Method::ALL.to_vec(),
            cutoffs: vec![10, 20],
            train_fraction: 1.0,
            dataset: DatasetConfig::default(),
            policy: PolicyConfig::default(),
            split: SplitConfig::default(),
            centers: CentersConfig::default(),
            context: ContextSection::default(),
            factorization: FactorizationConfig::default(),
        }
    }
}

/// Values given on the command line; `None` keeps the file's value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub d: Option<f64>,
    pub alpha: Option<f64>,
    pub lambda: Option<f64>,
    pub k: Option<usize>,
    pub methods: Option<Vec<Method>>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<ExperimentConfig> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.workers {
            self.workers = v;
        }
        if let Some(v) = &o.out {
            self.out = v.clone();
        }
        if let Some(v) = &o.data {
            self.dataset.path = Some(v.clone());
        }
        if let Some(v) = o.d {
            self.centers.d = v;
        }
        if let Some(v) = o.alpha {
            self.centers.alpha = v;
        }
        if let Some(v) = o.lambda {
            self.context.lambda = v;
        }
        if let Some(v) = o.k {
            self.factorization.k = v;
        }
        if let Some(v) = &o.methods {
            self.methods = v.clone();
        }
    }

    pub fn center_config(&self) -> CenterConfig {
        CenterConfig { d: self.centers.d, alpha: self.centers.alpha }
    }

    pub fn context_config(&self) -> ContextConfig {
        ContextConfig { lambda: self.context.lambda }
    }

    pub fn split_ratios(&self) -> SplitRatios {
        SplitRatios { train: self.split.train, validation: self.split.validation, test: self.split.test }
    }

    pub fn train_config(&self) -> TrainConfig {
        let f = &self.factorization;
        TrainConfig {
            k: f.k,
            sigma: f.sigma,
            rho: f.rho,
            learning_rate: f.learning_rate,
            max_epochs: f.max_epochs,
            tolerance: f.tolerance,
            floor: f.floor,
            seed: self.seed,
        }
    }

    /// Checks every field and reports all problems at once. The dataset
    /// path is only required when `need_data` is set.
    pub fn validate(&self, need_data: bool) -> Result<()> {
        let mut problems = Vec::new();
        let mut check = |field: &str, r: std::result::Result<(), String>| {
            if let Err(msg) = r {
                problems.push(format!("{field}: {msg}"));
            }
        };
        let core = |r: stacp_core::Result<()>| r.map_err(|e| e.to_string());
        let ours = |r: Result<()>| r.map_err(|e| e.to_string());
        if need_data {
            check("dataset.path", if self.dataset.path.is_some() { Ok(()) } else { Err("missing".into()) });
        }
        check("dataset", ours(self.dataset.format().map(|_| ())));
        check("policy", ours(self.policy.policy().map(|_| ())));
        check("split", core(self.split_ratios().validate()));
        check("centers", core(self.center_config().validate()));
        check("context", core(self.context_config().validate()));
        check("factorization", core(self.train_config().validate()));
        check("methods", if self.methods.is_empty() { Err("no methods listed".into()) } else { Ok(()) });
        let mut dedup = self.methods.clone();
        dedup.sort();
        dedup.dedup();
        check("methods", if dedup.len() == self.methods.len() { Ok(()) } else { Err("duplicate method".into()) });
        check(
            "cutoffs",
            if self.cutoffs.is_empty() || self.cutoffs.contains(&0) { Err("must be non-empty and positive".into()) } else { Ok(()) },
        );
        check(
            "train_fraction",
            if self.train_fraction > 0.0 && self.train_fraction <= 1.0 { Ok(()) } else { Err(format!("{} not in (0, 1]", self.train_fraction)) },
        );
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// SHA-256 over the canonical JSON form, leaving out the output
    /// directory and worker count since neither affects results.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        c.workers = 0;
        let json = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}
