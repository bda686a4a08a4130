use std::path::Path;

use anyhow::Context;
use mftlab_core::drift::DriftedModel;
use mftlab_core::flows::FlowModel;
use mftlab_core::mft::CostOracle;
use mftlab_core::zero_range::validate_model;
use mftlab_core::{Eta, ZeroRangeModel};
use nalgebra::DMatrix;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::Failure;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub nodes: usize,
    /// Dense jump-rate matrix; the diagonal is ignored.
    pub rates: Vec<Vec<f64>>,
    pub pi: Option<Vec<f64>>,
    /// One entry for every node, or a single entry shared by all.
    #[serde(default)]
    pub eta: Option<EtaField>,
    pub drift: Option<DriftConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum EtaField {
    Shared(EtaSpec),
    PerNode(Vec<EtaSpec>),
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum EtaSpec {
    Identity,
    Power { gamma: f64 },
    Tabulated { points: Vec<[f64; 2]> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftConfig {
    pub lambda: f64,
}

impl EtaSpec {
    fn build(&self) -> mftlab_core::Result<Eta> {
        match self {
            EtaSpec::Identity => Ok(Eta::Identity),
            EtaSpec::Power { gamma } => Eta::power(*gamma),
            EtaSpec::Tabulated { points } => {
                let pts: Vec<(f64, f64)> = points.iter().map(|p| (p[0], p[1])).collect();
                Eta::tabulated(&pts)
            }
        }
    }
}

/// A parsed configuration, before any model checks.
pub struct Loaded {
    pub config: ModelConfig,
    pub sha256: String,
}

pub fn load(path: &Path) -> Result<Loaded, Failure> {
    let raw = std::fs::read(path).with_context(|| format!("reading {}", path.display())).map_err(Failure::Usage)?;
    let text = std::str::from_utf8(&raw).context("config is not UTF-8").map_err(Failure::Usage)?;
    let config: ModelConfig =
        toml::from_str(text).with_context(|| format!("parsing {}", path.display())).map_err(Failure::Usage)?;
    Ok(Loaded { config, sha256: format!("{:x}", Sha256::digest(&raw)) })
}

impl ModelConfig {
    pub fn rate_matrix(&self) -> Result<DMatrix<f64>, Failure> {
        if self.rates.len() != self.nodes || self.rates.iter().any(|r| r.len() != self.nodes) {
            return Err(Failure::Usage(anyhow::anyhow!(
                "rates must be a {0}x{0} matrix for {0} nodes",
                self.nodes
            )));
        }
        Ok(DMatrix::from_fn(self.nodes, self.nodes, |x, y| self.rates[x][y]))
    }

    pub fn etas(&self) -> Result<Vec<Eta>, Failure> {
        let specs: Vec<&EtaSpec> = match &self.eta {
            None => return Ok(vec![Eta::Identity; self.nodes]),
            Some(EtaField::Shared(s)) => vec![s; self.nodes],
            Some(EtaField::PerNode(v)) => v.iter().collect(),
        };
        specs.into_iter().map(|s| s.build().map_err(Failure::Core)).collect()
    }

    pub fn validation(&self) -> Result<mftlab_core::zero_range::ValidationReport, Failure> {
        let q = self.rate_matrix()?;
        let eta = self.etas()?;
        Ok(validate_model(&q, self.pi.as_deref(), &eta))
    }

    pub fn base_model(&self) -> Result<ZeroRangeModel, Failure> {
        ZeroRangeModel::new(self.rate_matrix()?, self.pi.clone(), self.etas()?).map_err(Failure::Core)
    }

    pub fn model(&self) -> Result<Model, Failure> {
        let base = self.base_model()?;
        match &self.drift {
            None => Ok(Model::Plain(base)),
            Some(d) => DriftedModel::new(base, d.lambda).map(Model::Drifted).map_err(Failure::Core),
        }
    }
}

pub enum Model {
    Plain(ZeroRangeModel),
    Drifted(DriftedModel),
}

impl Model {
    pub fn base(&self) -> &ZeroRangeModel {
        match self {
            Model::Plain(m) => m,
            Model::Drifted(d) => d.base(),
        }
    }

    pub fn oracle(&self) -> &dyn CostOracle {
        match self {
            Model::Plain(m) => m,
            Model::Drifted(d) => d,
        }
    }

    pub fn flow_model(&self) -> &dyn FlowModel {
        match self {
            Model::Plain(m) => m,
            Model::Drifted(d) => d,
        }
    }
}
