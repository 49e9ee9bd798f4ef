use anyhow::Result;
use clap::Args;
use serde::Serialize;
use vnorm_core::multiuser::run_cwinston;
use vnorm_core::pipeline::{run_many, PlanChoice, Prepared};
use vnorm_core::simulator::{generate_user, user_seeds, SyntheticUser};
use vnorm_core::Error;

use crate::input::{Config, DataArgs};
use crate::report::{emit, minutes, Table};
use crate::{Common, Internal};

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Plans to compare, comma separated: auto, merge, quack or a cap.
    #[arg(long, value_delimiter = ',', default_value = "auto")]
    pub plan: Vec<PlanChoice>,
    /// Synthetic users (or teams, with -k > 1).
    #[arg(long)]
    pub users: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Team size; above 1 runs the multi-user pipeline.
    #[arg(short, long, default_value_t = 1)]
    pub k: usize,
    /// Caps the planner searches, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub caps: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Stats {
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(xs: &[f64]) -> Self {
        let mut v = xs.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n == 0 {
            0.0
        } else if n % 2 == 1 {
            v[n / 2]
        } else {
            (v[n / 2 - 1] + v[n / 2]) / 2.0
        };
        Self {
            mean: if n == 0 { 0.0 } else { v.iter().sum::<f64>() / n as f64 },
            median,
            min: v.first().copied().unwrap_or(0.0),
            max: v.last().copied().unwrap_or(0.0),
        }
    }
}

#[derive(Serialize)]
struct PlanResult {
    plan: PlanChoice,
    k: usize,
    runs: usize,
    caps: Vec<usize>,
    /// Seconds including calibration.
    seconds: Stats,
    calibration_seconds: Stats,
    all_correct: bool,
    /// Per-user busy seconds averaged over teams, with k > 1.
    #[serde(skip_serializing_if = "Option::is_none")]
    busy_seconds: Option<Stats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    merge_rounds: Option<Stats>,
}

#[derive(Serialize)]
struct SimulateOutput {
    values: usize,
    seed: u64,
    results: Vec<PlanResult>,
}

fn distinct(mut caps: Vec<usize>) -> Vec<usize> {
    caps.sort_unstable();
    caps.dedup();
    caps
}

fn solo(prepared: &Prepared, gold: &vnorm_core::GoldPartition, plan: PlanChoice, users: usize, seed: u64) -> Result<PlanResult> {
    let s = run_many(prepared, gold, plan, users, seed)?;
    let totals: Vec<f64> = s.runs.iter().map(|r| r.total_seconds).collect();
    let cal: Vec<f64> = s.runs.iter().map(|r| r.calibration_seconds).collect();
    Ok(PlanResult {
        plan,
        k: 1,
        runs: users,
        caps: distinct(s.runs.iter().map(|r| r.cap).collect()),
        seconds: Stats::of(&totals),
        calibration_seconds: Stats::of(&cal),
        all_correct: s.all_correct,
        busy_seconds: None,
        merge_rounds: None,
    })
}

fn team(prepared: &Prepared, gold: &vnorm_core::GoldPartition, k: usize, teams: usize, seed: u64) -> Result<PlanResult> {
    let seeds = user_seeds(seed, teams * k);
    let mut walls = Vec::new();
    let mut cal = Vec::new();
    let mut busy = Vec::new();
    let mut rounds = Vec::new();
    let mut caps = Vec::new();
    let mut all_correct = true;
    for chunk in seeds.chunks(k) {
        let users: Vec<SyntheticUser> = chunk.iter().map(|&s| generate_user(s)).collect();
        let r = run_cwinston(prepared, gold, &users)?;
        walls.push(r.wall_seconds);
        cal.push(r.calibration_seconds);
        busy.push(r.per_user_busy_seconds.iter().sum::<f64>() / k as f64);
        rounds.push(r.rounds.len() as f64);
        caps.push(r.cap);
        all_correct &= r.precision == 1.0 && r.recall == 1.0;
    }
    Ok(PlanResult {
        plan: PlanChoice::Auto,
        k,
        runs: teams,
        caps: distinct(caps),
        seconds: Stats::of(&walls),
        calibration_seconds: Stats::of(&cal),
        all_correct,
        busy_seconds: Some(Stats::of(&busy)),
        merge_rounds: Some(Stats::of(&rounds)),
    })
}

pub fn run(args: SimulateArgs, common: &Common, config: &Config) -> Result<()> {
    let (table, gold) = args.data.load_with_gold()?;
    let users = args.users.or(config.users).unwrap_or(1);
    let seed = args.seed.or(config.seed).unwrap_or(0);
    if users == 0 || args.k == 0 {
        return Err(Error::InvalidParameter("--users and -k must be at least 1".into()).into());
    }
    if args.k > 1 && args.plan.iter().any(|p| *p != PlanChoice::Auto) {
        return Err(Error::InvalidParameter("teams (-k > 1) always use the auto plan".into()).into());
    }
    let caps = (!args.caps.is_empty()).then(|| args.caps.clone());
    let prepared = Prepared::new(table.clone(), config.pipeline(caps, common.exec()))?;
    for plan in &args.plan {
        if let Some(c) = prepared.fixed_cap(*plan) {
            if !table.is_empty() {
                prepared.partition(c)?;
            }
        }
    }

    let mut results = Vec::new();
    for &plan in &args.plan {
        results.push(if args.k > 1 {
            team(&prepared, &gold, args.k, users, seed)?
        } else {
            solo(&prepared, &gold, plan, users, seed)?
        });
    }
    let out = SimulateOutput {
        values: table.len(),
        seed,
        results,
    };
    emit(common, &out, || {
        let v = common.verbose;
        let mut t = Table::new(&["plan", "k", "runs", "cap", "mean", "median", "min", "max", "calibration", "accuracy"]);
        for r in &out.results {
            let caps: Vec<String> = r.caps.iter().map(|c| c.to_string()).collect();
            t.row(vec![
                r.plan.to_string(),
                r.k.to_string(),
                r.runs.to_string(),
                caps.join(","),
                minutes(r.seconds.mean, v),
                minutes(r.seconds.median, v),
                minutes(r.seconds.min, v),
                minutes(r.seconds.max, v),
                minutes(r.calibration_seconds.mean, v),
                if r.all_correct { "100%".into() } else { "below 100%".into() },
            ]);
        }
        format!("{} values, seed {}\n\n{}", out.values, out.seed, t.render())
    })?;
    if out.results.iter().any(|r| !r.all_correct) {
        return Err(Internal("a simulated session ended below 100% accuracy".into()).into());
    }
    Ok(())
}
