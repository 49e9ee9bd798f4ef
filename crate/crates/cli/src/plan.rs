use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use serde::Serialize;
use vnorm_core::calibration::CalibrationResult;
use vnorm_core::costmodel::PlanEstimate;
use vnorm_core::pipeline::Prepared;
use vnorm_core::planner::{rank, PlanReport};
use vnorm_core::simulator::{generate_user, simulate_session};
use vnorm_core::Error;

use crate::input::{read_params, Config, DataArgs};
use crate::report::{emit, minutes, Table};
use crate::Common;

#[derive(Args, Debug)]
pub struct PlanArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Parameters document (exported calibration or `{user, purity}`).
    /// Without it, a synthetic user is calibrated against --gold.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Caps to search, comma separated; default 1..=min(n,100) plus n.
    #[arg(long, value_delimiter = ',')]
    pub caps: Vec<usize>,
    /// Seed of the synthetic user.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Print only the best N plans.
    #[arg(long)]
    pub top: Option<usize>,
}

#[derive(Serialize)]
struct PlanRow {
    #[serde(flatten)]
    estimate: PlanEstimate,
    /// Simulated cleaning seconds of the synthetic user, with --gold.
    true_seconds: Option<f64>,
    true_rank: Option<usize>,
}

#[derive(Serialize)]
struct PlanOutput {
    values: usize,
    selected: Option<usize>,
    calibration: Option<CalibrationResult>,
    /// Rank of the selected plan among simulated true costs (1 = best).
    picked_rank: Option<usize>,
    best_cap: Option<usize>,
    diff_seconds: Option<f64>,
    diff_percent: Option<f64>,
    plans: Vec<PlanRow>,
}

/// 1-based rank of `x` among `all`, ties sharing the better rank.
fn rank_of(x: f64, all: &[f64]) -> usize {
    1 + all.iter().filter(|&&y| y < x).count()
}

pub fn run(args: PlanArgs, common: &Common, config: &Config) -> Result<()> {
    let data = args.data.load()?;
    let caps = (!args.caps.is_empty()).then(|| args.caps.clone());
    let pipeline = config.pipeline(caps.clone(), common.exec());
    let global = pipeline.global;
    let seed = args.seed.or(config.seed).unwrap_or(0);
    let prepared = Prepared::new(data.table.clone(), pipeline)?;
    let user = generate_user(seed);

    let (report, calibration) = match (&args.params, &data.gold) {
        (Some(p), _) => {
            let params = read_params(p)?;
            (rank(&prepared.joint, &params.purity, &params.user, &global, common.exec())?, None)
        }
        (None, Some(gold)) => {
            let (cal, report) = prepared.plan_for(&user, gold)?;
            (report, Some(cal))
        }
        (None, None) => {
            return Err(Error::InvalidParameter("plan needs --params, or --gold to calibrate a synthetic user".into()).into())
        }
    };

    // The pipeline always adds cap n; report only what was asked for.
    let report = match &caps {
        Some(c) => PlanReport::from_estimates(report.estimates.into_iter().filter(|e| c.contains(&e.cap)).collect()),
        None => report,
    };

    let true_costs: Option<Vec<f64>> = match &data.gold {
        Some(gold) => Some(
            common
                .exec()
                .map(&report.estimates, |e| {
                    let input = prepared.partition(e.cap)?;
                    let r = simulate_session(&prepared.table, input, gold, &user, &global, prepared.config.simulation)?;
                    Ok::<_, Error>(r.total_seconds)
                })
                .into_iter()
                .collect::<Result<_, _>>()?,
        ),
        None => None,
    };

    let mut out = PlanOutput {
        values: data.table.len(),
        selected: report.selected,
        calibration,
        picked_rank: None,
        best_cap: None,
        diff_seconds: None,
        diff_percent: None,
        plans: Vec::new(),
    };
    if let (Some(costs), Some(sel)) = (&true_costs, report.selected) {
        let picked = report.estimates.iter().position(|e| e.cap == sel).map(|i| costs[i]);
        let best = costs.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1).then(report.estimates[a.0].cap.cmp(&report.estimates[b.0].cap)));
        if let (Some(p), Some((bi, &b))) = (picked, best) {
            out.picked_rank = Some(rank_of(p, costs));
            out.best_cap = Some(report.estimates[bi].cap);
            out.diff_seconds = Some(p - b);
            out.diff_percent = Some(if b > 0.0 { 100.0 * (p - b) / b } else { 0.0 });
        }
    }
    for (i, e) in report.estimates.iter().enumerate() {
        out.plans.push(PlanRow {
            estimate: e.clone(),
            true_seconds: true_costs.as_ref().map(|c| c[i]),
            true_rank: true_costs.as_ref().map(|c| rank_of(c[i], c)),
        });
    }

    emit(common, &out, || {
        let mut t = Table::new(&["rank", "cap", "purity", "estimate", "split", "local", "global"]);
        if true_costs.is_some() {
            t.extend(&["simulated", "true rank"]);
        }
        let shown = args.top.unwrap_or(out.plans.len());
        for (i, row) in out.plans.iter().take(shown).enumerate() {
            let e = &row.estimate;
            let mut cells = vec![
                (i + 1).to_string(),
                e.cap.to_string(),
                format!("{:.3}", e.purity),
                minutes(e.estimated_seconds, common.verbose),
                minutes(e.split_seconds, common.verbose),
                minutes(e.local_merge_seconds, common.verbose),
                minutes(e.global_merge_seconds, common.verbose),
            ];
            if let (Some(s), Some(r)) = (row.true_seconds, row.true_rank) {
                cells.push(minutes(s, common.verbose));
                cells.push(r.to_string());
            }
            t.row(cells);
        }
        let mut text = format!("{} values, {} plans searched\n\n{}", out.values, out.plans.len(), t.render());
        match out.selected {
            Some(c) => text.push_str(&format!("\nselected cap: {c}\n")),
            None => text.push_str("\nno plan selected (empty input)\n"),
        }
        if let Some(cal) = &out.calibration {
            text.push_str(&format!("calibration time: {}\n", minutes(cal.total_seconds, common.verbose)));
        }
        if let (Some(r), Some(b), Some(d), Some(p)) = (out.picked_rank, out.best_cap, out.diff_seconds, out.diff_percent) {
            text.push_str(&format!(
                "picked plan rank: {r} of {}\nbest simulated plan: cap {b}\ntime diff to best plan: {} ({p:.1}%)\n",
                out.plans.len(),
                minutes(d, common.verbose)
            ));
        }
        text
    })
}
