use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::Args;
use serde::Deserialize;
use vnorm_core::calibration::CalibrationResult;
use vnorm_core::costmodel::GlobalParams;
use vnorm_core::io::{read_gold, read_labeled, read_value_column, read_value_lines};
use vnorm_core::pipeline::PipelineConfig;
use vnorm_core::similarity::SimilarityConfig;
use vnorm_core::synth::TypoModel;
use vnorm_core::{Execution, GoldPartition, ValueTable};
use vnorm_service::live::ModelParams;

/// Settings read from `--config`; command-line flags take precedence.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub users: Option<usize>,
    pub caps: Option<Vec<usize>>,
    pub calibration_seed: Option<u64>,
    pub similarity: Option<SimilarityConfig>,
    pub global: Option<GlobalParams>,
    pub typos: Option<TypoModel>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn pipeline(&self, caps: Option<Vec<usize>>, exec: Execution) -> PipelineConfig {
        PipelineConfig {
            similarity: self.similarity.unwrap_or_default(),
            global: self.global.unwrap_or_default(),
            caps: caps.or_else(|| self.caps.clone()),
            calibration_seed: self.calibration_seed.unwrap_or(0),
            exec,
            ..PipelineConfig::default()
        }
    }
}

/// Where the values come from, and optionally their gold clustering.
#[derive(Args, Clone, Debug)]
pub struct DataArgs {
    /// Values file: one value per line, or a CSV read with --column.
    #[arg(long)]
    pub values: Option<PathBuf>,
    /// CSV column holding the values.
    #[arg(long)]
    pub column: Option<String>,
    /// Gold CSV `value,cluster_id`. Without --values it also supplies the values.
    #[arg(long)]
    pub gold: Option<PathBuf>,
}

pub struct Data {
    pub table: Arc<ValueTable>,
    pub gold: Option<GoldPartition>,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(f))
}

impl DataArgs {
    pub fn load(&self) -> Result<Data> {
        let ctx = |p: &Path| format!("reading {}", p.display());
        let (table, gold) = match (&self.values, &self.gold) {
            (Some(v), gold) => {
                let table = match &self.column {
                    Some(c) => read_value_column(open(v)?, c),
                    None => read_value_lines(open(v)?),
                }
                .with_context(|| ctx(v))?;
                let gold = match gold {
                    Some(g) => Some(read_gold(open(g)?, &table).with_context(|| ctx(g))?),
                    None => None,
                };
                (table, gold)
            }
            (None, Some(g)) => {
                let (table, gold) = read_labeled(open(g)?).with_context(|| ctx(g))?;
                (table, Some(gold))
            }
            (None, None) => anyhow::bail!(vnorm_core::Error::InvalidParameter("give --values or --gold".into())),
        };
        Ok(Data {
            table: Arc::new(table),
            gold,
        })
    }

    pub fn load_with_gold(&self) -> Result<(Arc<ValueTable>, GoldPartition)> {
        let data = self.load()?;
        let gold = data
            .gold
            .ok_or_else(|| vnorm_core::Error::InvalidParameter("this command needs --gold".into()))?;
        Ok((data.table, gold))
    }
}

/// Reads a parameters document: an exported calibration result or `{user, purity}`.
pub fn read_params(path: &Path) -> Result<ModelParams> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(cal) = serde_json::from_str::<CalibrationResult>(&text) {
        return Ok(ModelParams::from(&cal));
    }
    let params: ModelParams = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    params.user.validate()?;
    Ok(params)
}
