use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use serde::Serialize;
use vnorm_core::calibration::calibrate_synthetic;
use vnorm_core::hac::run_hac;
use vnorm_core::io::{read_labeled, read_partition, write_gold, write_partition, write_value_lines};
use vnorm_core::metrics::precision_recall;
use vnorm_core::simulator::generate_user;
use vnorm_core::synth::{generate, SynthConfig};
use vnorm_core::Error;

use crate::input::{Config, DataArgs};
use crate::report::{emit, minutes};
use crate::Common;

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Partition CSV `value,cluster_id[,canonical]`.
    #[arg(long)]
    pub partition: PathBuf,
    /// Gold CSV `value,cluster_id`.
    #[arg(long)]
    pub gold: PathBuf,
}

pub fn evaluate(args: EvaluateArgs, common: &Common) -> Result<()> {
    let open = |p: &PathBuf| -> Result<BufReader<File>> {
        Ok(BufReader::new(File::open(p).with_context(|| format!("opening {}", p.display()))?))
    };
    let (table, gold) = read_labeled(open(&args.gold)?).with_context(|| format!("reading {}", args.gold.display()))?;
    let partition = read_partition(open(&args.partition)?, &table).map_err(|e| match e {
        Error::GoldCoverage(missing) => Error::ValueTableMismatch(format!(
            "the partition omits {} gold value(s): {:?}",
            missing.len(),
            &missing[..missing.len().min(10)]
        )),
        other => other,
    })
    .with_context(|| format!("reading {}", args.partition.display()))?;
    let pr = precision_recall(&partition, &gold)?;
    emit(common, &pr, || {
        format!(
            "precision: {}\nrecall: {}\ncandidate matches: {}\ngold matches: {}\ncorrect matches: {}\n",
            pr.precision, pr.recall, pr.candidate_matches, pr.gold_matches, pr.correct_matches
        )
    })
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub n_values: usize,
    #[arg(long)]
    pub n_entities: usize,
    /// Entities sharing one name stem.
    #[arg(long)]
    pub family_size: Option<usize>,
    /// Exponent weighting variant counts toward a few entities (0 = uniform).
    #[arg(long)]
    pub skew: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Per-variant edit rates; the rest come from the config file or defaults.
    #[arg(long)]
    pub substitute: Option<f64>,
    #[arg(long)]
    pub delete: Option<f64>,
    #[arg(long)]
    pub insert: Option<f64>,
    #[arg(long)]
    pub transpose: Option<f64>,
    #[arg(long)]
    pub case: Option<f64>,
    #[arg(long)]
    pub abbreviate: Option<f64>,
    #[arg(long)]
    pub drop_suffix: Option<f64>,
    /// Output values file, one per line.
    #[arg(long, default_value = "values.txt")]
    pub values_out: PathBuf,
    /// Output gold CSV.
    #[arg(long, default_value = "gold.csv")]
    pub gold_out: PathBuf,
}

#[derive(Serialize)]
struct SynthSummary {
    values: usize,
    entities: usize,
    largest_entity: usize,
    values_file: PathBuf,
    gold_file: PathBuf,
}

pub fn synth(args: SynthArgs, common: &Common, config: &Config) -> Result<()> {
    let d = SynthConfig::default();
    let mut typos = config.typos.unwrap_or_default();
    for (slot, v) in [
        (&mut typos.substitute, args.substitute),
        (&mut typos.delete, args.delete),
        (&mut typos.insert, args.insert),
        (&mut typos.transpose, args.transpose),
        (&mut typos.case, args.case),
        (&mut typos.abbreviate, args.abbreviate),
        (&mut typos.drop_suffix, args.drop_suffix),
    ] {
        if let Some(v) = v {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!("edit rate {v} outside [0, 1]")).into());
            }
            *slot = v;
        }
    }
    let cfg = SynthConfig {
        n_values: args.n_values,
        n_entities: args.n_entities,
        family_size: args.family_size.unwrap_or(d.family_size),
        skew: args.skew.unwrap_or(d.skew),
        typos,
        seed: args.seed.or(config.seed).unwrap_or(0),
    };
    let data = generate(&cfg)?;
    let create = |p: &PathBuf| -> Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?))
    };
    let mut w = create(&args.values_out)?;
    write_value_lines(&mut w, &data.values)?;
    w.flush()?;
    write_gold(create(&args.gold_out)?, &data.values, &data.labels)?;
    let summary = SynthSummary {
        values: data.values.len(),
        entities: data.entities.len(),
        largest_entity: data.variant_counts().into_iter().max().unwrap_or(0),
        values_file: args.values_out.clone(),
        gold_file: args.gold_out.clone(),
    };
    emit(common, &summary, || {
        format!(
            "wrote {} values over {} entities (largest {}) to {} and {}\n",
            summary.values,
            summary.entities,
            summary.largest_entity,
            summary.values_file.display(),
            summary.gold_file.display()
        )
    })
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Seed of the synthetic user.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Calibrates a synthetic user and writes the parameters document.
pub fn calibrate(args: CalibrateArgs, common: &Common, config: &Config) -> Result<()> {
    let (table, gold) = args.data.load_with_gold()?;
    let pipeline = config.pipeline(None, common.exec());
    let user = generate_user(args.seed.or(config.seed).unwrap_or(0));
    let result = calibrate_synthetic(
        &table,
        &gold,
        &user.params,
        &pipeline.similarity,
        pipeline.calibration_seed,
        pipeline.exec,
    )?;
    for d in &result.diagnostics {
        eprintln!("note: {d}");
    }
    eprintln!("calibration took {}", minutes(result.total_seconds, common.verbose));
    let json = serde_json::to_string_pretty(&result)? + "\n";
    match &common.out {
        Some(p) => std::fs::write(p, json).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().lock().write_all(json.as_bytes())?,
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Largest cluster HAC may form.
    #[arg(long)]
    pub cap: usize,
}

/// Runs HAC(cap) and writes the partition CSV.
pub fn cluster(args: ClusterArgs, common: &Common, config: &Config) -> Result<()> {
    if args.cap == 0 {
        return Err(Error::InvalidParameter("--cap must be at least 1".into()).into());
    }
    let data = args.data.load()?;
    let sim = config.similarity.unwrap_or_default();
    let out = run_hac(&data.table, &sim, Some(args.cap))?;
    let mut buf = Vec::new();
    write_partition(&mut buf, &data.table, &out.partition)?;
    match &common.out {
        Some(p) => std::fs::write(p, buf).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().lock().write_all(&buf)?,
    }
    if let Some(gold) = &data.gold {
        let pr = precision_recall(&out.partition, gold)?;
        eprintln!(
            "{} clusters, precision {:.4}, recall {:.4}",
            out.partition.len(),
            pr.precision,
            pr.recall
        );
    }
    Ok(())
}
