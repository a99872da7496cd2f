use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use spq::codebook::{Trainer, DEFAULT_BATCH_SIZE, DEFAULT_KMEANS_ITERS, DEFAULT_ODL_EPOCHS};
use spq::ivf::{DEFAULT_COARSE_K, DEFAULT_PROBES};
use spq::util::equal_split;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pq,
    Spq,
    Ivfpq,
    Ivfspq,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Pq => "pq",
            Method::Spq => "spq",
            Method::Ivfpq => "ivfpq",
            Method::Ivfspq => "ivfspq",
        }
    }

    pub fn is_sparse(self) -> bool {
        matches!(self, Method::Spq | Method::Ivfspq)
    }

    pub fn is_ivf(self) -> bool {
        matches!(self, Method::Ivfpq | Method::Ivfspq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    Adc,
    Sdc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TrainerKind {
    Odl,
    Kmeans,
}

/// Synthetic Gaussian data used when no dataset paths are given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Synth {
    pub n: usize,
    pub queries: usize,
    pub d: usize,
}

impl Default for Synth {
    fn default() -> Self {
        Self {
            n: 10_000,
            queries: 100,
            d: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub gallery: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub groundtruth: Option<PathBuf>,
    pub synth: Synth,
    pub method: Method,
    pub methods: Vec<Method>,
    pub distance: Distance,
    pub m: usize,
    pub subspace_dims: Option<Vec<usize>>,
    pub k: usize,
    pub sparsity: usize,
    pub coarse_k: usize,
    pub probes: usize,
    pub p: usize,
    pub rerank: Option<usize>,
    pub recall_at: Vec<usize>,
    pub t_eval: usize,
    pub map_t_eval: usize,
    pub bits: Vec<usize>,
    pub trainer: TrainerKind,
    pub kmeans_iters: usize,
    pub odl_epochs: usize,
    pub batch_size: usize,
    pub train_size: usize,
    pub seed: u64,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            gallery: None,
            queries: None,
            train: None,
            groundtruth: None,
            synth: Synth::default(),
            method: Method::Spq,
            methods: vec![Method::Pq, Method::Spq],
            distance: Distance::Adc,
            m: 8,
            subspace_dims: None,
            k: 256,
            sparsity: 2,
            coarse_k: DEFAULT_COARSE_K,
            probes: DEFAULT_PROBES,
            p: 100,
            rerank: None,
            recall_at: vec![1, 10, 100],
            t_eval: 1,
            map_t_eval: 50,
            bits: vec![32, 64, 128],
            trainer: TrainerKind::Odl,
            kmeans_iters: DEFAULT_KMEANS_ITERS,
            odl_epochs: DEFAULT_ODL_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            train_size: 100_000,
            seed: 0,
            threads: None,
        }
    }
}

/// Flags shared by every subcommand; each one overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML run configuration
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub method: Option<Method>,
    #[arg(long, global = true)]
    pub distance: Option<Distance>,
    /// Number of subspaces
    #[arg(long, global = true)]
    pub m: Option<usize>,
    /// Codebook size per subspace
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Sparse level L
    #[arg(long = "sparsity", short = 'L', global = true)]
    pub sparsity: Option<usize>,
    /// Coarse cells of the inverted file
    #[arg(long, global = true)]
    pub coarse_k: Option<usize>,
    /// Cells probed per query
    #[arg(long, short = 'w', global = true)]
    pub probes: Option<usize>,
    /// Results returned per query
    #[arg(long, short = 'p', global = true)]
    pub p: Option<usize>,
    /// Re-rank this many candidates exactly (needs the raw gallery)
    #[arg(long, global = true)]
    pub rerank: Option<usize>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub recall_at: Option<Vec<usize>>,
    #[arg(long, global = true)]
    pub t_eval: Option<usize>,
    #[arg(long, global = true)]
    pub map_t_eval: Option<usize>,
    #[arg(long, global = true)]
    pub trainer: Option<TrainerKind>,
    #[arg(long, global = true)]
    pub kmeans_iters: Option<usize>,
    #[arg(long, global = true)]
    pub odl_epochs: Option<usize>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    /// Rows sampled from the training set
    #[arg(long, global = true)]
    pub train_size: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is serializable")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Config file (if any) with flag overrides applied.
    pub fn resolve(o: &Overrides) -> Result<Self> {
        let mut c = match &o.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => {$(
                if let Some(v) = &o.$f {
                    c.$f = v.clone();
                }
            )*};
        }
        set!(
            method, distance, m, k, sparsity, coarse_k, probes, p, recall_at, t_eval, map_t_eval, trainer,
            kmeans_iters, odl_epochs, batch_size, train_size, seed
        );
        if o.rerank.is_some() {
            c.rerank = o.rerank;
        }
        if o.threads.is_some() {
            c.threads = o.threads;
        }
        if o.m.is_some() {
            c.subspace_dims = None;
        }
        Ok(c)
    }

    pub fn trainer(&self) -> Trainer {
        match self.trainer {
            TrainerKind::Odl => Trainer::Odl {
                epochs: self.odl_epochs,
                batch_size: self.batch_size,
            },
            TrainerKind::Kmeans => Trainer::KMeans {
                iters: self.kmeans_iters,
            },
        }
    }

    /// Subspace widths for dimensionality `d`.
    pub fn dims(&self, d: usize) -> Result<Vec<usize>> {
        if let Some(dims) = &self.subspace_dims {
            if dims.iter().sum::<usize>() != d || dims.contains(&0) {
                bail!("subspace_dims {dims:?} must be positive and sum to D = {d}");
            }
            return Ok(dims.clone());
        }
        match equal_split(d, self.m) {
            Some(dims) => Ok(dims),
            None => bail!("D = {d} is not divisible by m = {}; choose another m or set subspace_dims", self.m),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > 65_536 {
            bail!("k = {} must be in 1..=65536", self.k);
        }
        if self.sparsity == 0 || self.sparsity > self.k {
            bail!("sparse level L = {} must be in 1..=k ({})", self.sparsity, self.k);
        }
        if self.m == 0 {
            bail!("m must be at least 1");
        }
        if self.p == 0 {
            bail!("p must be at least 1");
        }
        if self.t_eval == 0 || self.map_t_eval == 0 {
            bail!("t_eval and map_t_eval must be at least 1");
        }
        if self.recall_at.is_empty() || self.recall_at.contains(&0) {
            bail!("recall_at needs positive ranks");
        }
        if self.coarse_k == 0 || self.probes == 0 || self.probes > self.coarse_k {
            bail!("probes w = {} must be in 1..=coarse_k ({})", self.probes, self.coarse_k);
        }
        if self.rerank == Some(0) {
            bail!("rerank must be at least 1");
        }
        if self.threads == Some(0) {
            bail!("threads must be at least 1");
        }
        Ok(())
    }
}
