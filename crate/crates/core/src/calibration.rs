//! Calibration of the purity model and per-user operation costs.
//!
//! A short session of timed tasks: three match pairs, three purity marks on
//! HAC(10) clusters and three on HAC(20) clusters, three isPure questions,
//! and three findDom tasks each on clusters that fit and that exceed
//! short-term memory. Answers and elapsed times feed small least-squares fits.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::costmodel::{PurityModel, UserParams};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::hac::run_joint_with_matrix;
use crate::model::{GoldPartition, Partition, ValueId, ValueTable};
use crate::similarity::{SimilarityConfig, SimilarityMatrix};

/// Caps whose clusters are sampled for purity.
pub const PURITY_CAPS: [usize; 2] = [10, 20];
/// Cap whose clusters supply the isPure and findDom tasks.
pub const OPERATION_CAP: usize = 20;
const PER_KIND: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationKind {
    MatchPair,
    PurityMark,
    IsPureCluster,
    FindDomSmall,
    FindDomLarge,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationTask {
    pub index: usize,
    pub kind: CalibrationKind,
    /// Values shown, in display order.
    pub values: Vec<ValueId>,
    /// HAC cap the cluster was drawn from, for purity marks.
    pub cap: Option<usize>,
    /// The cluster was assembled from several HAC clusters.
    #[serde(default)]
    pub synthesized: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CalibrationAnswer {
    /// Match pair: do the two values refer to the same entity?
    Match { same: bool },
    /// isPure: the yes/no button pressed.
    Pure { pure: bool },
    /// Purity mark: every value of the dominating entity.
    /// findDom: at least one value of the dominating entity.
    Dominating { values: Vec<ValueId> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationObservation {
    pub index: usize,
    pub elapsed: f64,
    pub answer: CalibrationAnswer,
}

/// A fitted quantity with an optional note on how it was obtained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fitted<T> {
    pub value: T,
    pub warning: Option<String>,
}

impl<T> Fitted<T> {
    fn ok(value: T) -> Self {
        Self { value, warning: None }
    }

    fn warn(value: T, warning: impl Into<String>) -> Self {
        let warning = warning.into();
        log::warn!("calibration: {warning}");
        Self {
            value,
            warning: Some(warning),
        }
    }
}

/// Ordinary least squares for `y = slope·x + intercept`; `None` when all `x` coincide.
pub fn ols(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = points.len() as f64;
    if points.is_empty() {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= f64::EPSILON * mx.abs().max(1.0) {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Power law `α = a·λ^b` through `(λ, α)` points by log-log least squares.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PurityModel> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .map(|&(l, a)| {
            if l > 0.0 && a > 0.0 && a <= 1.0 {
                Ok((l.ln(), a.ln()))
            } else {
                Err(Error::InvalidPurity(a))
            }
        })
        .collect::<Result<_>>()?;
    let (b, ln_a) = ols(&logs).ok_or_else(|| Error::InvalidParameter("power-law fit needs two distinct caps".into()))?;
    Ok(PurityModel { a: ln_a.exp(), b })
}

/// Purity model through (1, 1), (10, α₁₀) and (20, α₂₀).
pub fn fit_purity(alpha10: f64, alpha20: f64) -> Result<Fitted<PurityModel>> {
    if alpha10 >= 1.0 && alpha20 >= 1.0 {
        return Ok(Fitted::warn(PurityModel { a: 1.0, b: 0.0 }, "degenerate purity fit: all samples pure"));
    }
    let m = fit_power_law(&[(1.0, 1.0), (10.0, alpha10), (20.0, alpha20)])?;
    if m.b > 0.0 {
        let a = mean([1.0, alpha10, alpha20]).expect("three points");
        return Ok(Fitted::warn(
            PurityModel { a, b: 0.0 },
            format!("purity rises with the cap (b = {:.4}); clamped to b = 0", m.b),
        ));
    }
    Ok(Fitted::ok(m))
}

/// ρ_m from timed match pairs.
pub fn fit_match_cost(timings: &[f64], u: &UserParams) -> Fitted<f64> {
    let Some(m) = mean(timings.iter().map(|t| t - u.click())) else {
        return Fitted::warn(u.rho_m, "no match timings; keeping the prior rho_m");
    };
    if m < 0.0 {
        Fitted::warn(0.0, "match timings below one click; rho_m floored at 0")
    } else {
        Fitted::ok(m)
    }
}

/// (γ, γ₀) from `(ψ, α, t)` isPure observations, α guessed from the answer.
pub fn fit_is_pure(obs: &[(f64, f64, f64)], u: &UserParams) -> Fitted<(f64, f64)> {
    let points: Vec<(f64, f64)> = obs.iter().map(|&(psi, alpha, t)| (alpha * psi, t - u.click())).collect();
    let Some(my) = mean(points.iter().map(|p| p.1)) else {
        return Fitted::warn((u.gamma, u.gamma0), "no isPure timings; keeping the prior gamma, gamma0");
    };
    match ols(&points) {
        None => Fitted::warn((0.0, my.max(0.0)), "singular isPure fit: identical alpha*psi; gamma = 0"),
        Some((g, g0)) if g < 0.0 || g0 < 0.0 => {
            Fitted::warn((g.max(0.0), if g < 0.0 { my.max(0.0) } else { 0.0 }), "negative isPure coefficient clamped")
        }
        Some(fit) => Fitted::ok(fit),
    }
}

/// (η₁, η₂, η₃) from `(ψ, t)` findDom observations on small and large clusters.
pub fn fit_find_dom(small: &[(f64, f64)], large: &[(f64, f64)], u: &UserParams) -> Fitted<(f64, f64, f64)> {
    let mut warnings = Vec::new();
    let eta1 = match mean(small.iter().map(|&(psi, t)| (t - u.click()) / psi)) {
        Some(e) if e < 0.0 => {
            warnings.push("eta1 floored at 0".to_string());
            0.0
        }
        Some(e) => e,
        None => {
            warnings.push("no small findDom timings; keeping the prior eta1".to_string());
            u.eta1
        }
    };
    let points: Vec<(f64, f64)> = large.iter().map(|&(psi, t)| (psi * psi, t - u.click())).collect();
    let (eta2, eta3) = match (ols(&points), mean(points.iter().map(|p| p.1))) {
        (_, None) => {
            warnings.push("no large findDom timings; keeping the prior eta2, eta3".to_string());
            (u.eta2, u.eta3)
        }
        (None, Some(my)) => {
            warnings.push("singular findDom fit: identical sizes; eta2 = 0".to_string());
            (0.0, my.max(0.0))
        }
        (Some((e2, e3)), Some(my)) if e2 < 0.0 || e3 < 0.0 => {
            warnings.push("negative findDom coefficient clamped".to_string());
            (e2.max(0.0), if e2 < 0.0 { my.max(0.0) } else { 0.0 })
        }
        (Some(fit), _) => fit,
    };
    let value = (eta1, eta2, eta3);
    if warnings.is_empty() {
        Fitted::ok(value)
    } else {
        Fitted::warn(value, warnings.join("; "))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPlan {
    pub seed: u64,
    pub tasks: Vec<CalibrationTask>,
    pub diagnostics: Vec<String>,
}

fn distinct_sizes_first(mut clusters: Vec<Vec<ValueId>>, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<ValueId>> {
    clusters.shuffle(rng);
    let mut by_size: BTreeMap<usize, Vec<Vec<ValueId>>> = BTreeMap::new();
    for c in clusters {
        by_size.entry(c.len()).or_default().push(c);
    }
    let mut sizes: Vec<usize> = by_size.keys().copied().collect();
    sizes.shuffle(rng);
    let mut picked = Vec::new();
    for s in &sizes {
        if picked.len() == k {
            break;
        }
        picked.push(by_size.get_mut(s).expect("listed size").pop().expect("nonempty"));
    }
    let mut rest: Vec<Vec<ValueId>> = by_size.into_values().flatten().collect();
    rest.shuffle(rng);
    picked.extend(rest.into_iter().take(k.saturating_sub(picked.len())));
    picked
}

/// Draws the calibration tasks for a dataset.
pub fn plan_calibration(
    table: &ValueTable,
    sim_cfg: &SimilarityConfig,
    stm_capacity: usize,
    seed: u64,
    exec: Execution,
) -> Result<CalibrationPlan> {
    let n = table.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut diagnostics = Vec::new();
    let mut drafts: Vec<(CalibrationKind, Vec<ValueId>, Option<usize>, bool)> = Vec::new();

    if n >= 2 {
        for _ in 0..PER_KIND {
            let a = rng.gen_range(0..n);
            let mut b = rng.gen_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            drafts.push((CalibrationKind::MatchPair, vec![a, b], None, false));
        }
    } else {
        diagnostics.push("fewer than two values: no match pairs".into());
    }

    let mut results: BTreeMap<usize, Partition> = BTreeMap::new();
    if n > 0 {
        let mut caps: Vec<usize> = PURITY_CAPS.iter().chain([&OPERATION_CAP]).map(|&c| c.min(n)).collect();
        caps.sort_unstable();
        caps.dedup();
        let sim = SimilarityMatrix::from_table(table, sim_cfg, exec);
        let joint = run_joint_with_matrix(&sim, sim_cfg, &caps, exec)?;
        for cap in PURITY_CAPS.iter().chain([&OPERATION_CAP]) {
            results.insert(*cap, joint.results[&(*cap).min(n)].partition.clone());
        }
    }
    let clusters_of = |cap: usize| -> Vec<Vec<ValueId>> {
        results
            .get(&cap)
            .map(|p| p.clusters().iter().map(|c| c.members.clone()).collect())
            .unwrap_or_default()
    };

    for cap in PURITY_CAPS {
        let clusters = clusters_of(cap);
        if clusters.iter().all(|c| c.len() == 1) {
            diagnostics.push(format!("HAC({cap}) produced only singletons: purity taken as 1, tasks skipped"));
            continue;
        }
        let full: Vec<&Vec<ValueId>> = clusters.iter().filter(|c| c.len() == cap).collect();
        let picked: Vec<Vec<ValueId>> = if full.len() >= PER_KIND {
            full.choose_multiple(&mut rng, PER_KIND).map(|c| (*c).clone()).collect()
        } else {
            let mut by_size = clusters.clone();
            by_size.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
            by_size.truncate(PER_KIND);
            if by_size.len() < PER_KIND {
                diagnostics.push(format!("HAC({cap}) has {} cluster(s): reusing the largest", by_size.len()));
                while by_size.len() < PER_KIND {
                    by_size.push(by_size[0].clone());
                }
            } else {
                diagnostics.push(format!("HAC({cap}) has fewer than 3 clusters of size {cap}: using the largest"));
            }
            by_size
        };
        for c in picked {
            drafts.push((CalibrationKind::PurityMark, c, Some(cap), false));
        }
    }

    let c20 = clusters_of(OPERATION_CAP);
    let non_singletons: Vec<Vec<ValueId>> = c20.iter().filter(|c| c.len() > 1).cloned().collect();
    if non_singletons.is_empty() {
        diagnostics.push("HAC(20) has no non-singleton cluster: no isPure tasks".into());
    }
    for c in distinct_sizes_first(non_singletons, PER_KIND, &mut rng) {
        drafts.push((CalibrationKind::IsPureCluster, c, None, false));
    }

    let small: Vec<Vec<ValueId>> = c20
        .iter()
        .filter(|c| c.len() > 1 && c.len() <= stm_capacity)
        .cloned()
        .collect();
    let mut small = distinct_sizes_first(small, PER_KIND, &mut rng);
    let mut small_synth = vec![false; small.len()];
    while small.len() < PER_KIND && n >= 2 {
        let size = rng.gen_range(2..=stm_capacity.clamp(2, n));
        let mut ids: Vec<ValueId> = (0..n).collect();
        ids.shuffle(&mut rng);
        ids.truncate(size);
        small.push(ids);
        small_synth.push(true);
    }
    if small_synth.contains(&true) {
        diagnostics.push("small findDom clusters synthesized from random values".into());
    }
    for (c, s) in small.into_iter().zip(small_synth) {
        drafts.push((CalibrationKind::FindDomSmall, c, None, s));
    }

    let large: Vec<Vec<ValueId>> = c20.iter().filter(|c| c.len() > stm_capacity).cloned().collect();
    let mut large = distinct_sizes_first(large, PER_KIND, &mut rng);
    let mut large_synth = vec![false; large.len()];
    let mut target = stm_capacity + 1;
    while large.len() < PER_KIND && n > stm_capacity {
        let mut pool = c20.clone();
        pool.shuffle(&mut rng);
        let mut union = Vec::new();
        for c in pool {
            if union.len() >= target {
                break;
            }
            union.extend(c);
        }
        large.push(union);
        large_synth.push(true);
        target = (target + 3).min(n);
    }
    if large_synth.contains(&true) {
        diagnostics.push("large findDom clusters synthesized by unioning HAC(20) clusters".into());
    }
    if n <= stm_capacity {
        diagnostics.push("dataset fits in short-term memory: no large findDom tasks".into());
    }
    for (c, s) in large.into_iter().zip(large_synth) {
        drafts.push((CalibrationKind::FindDomLarge, c, None, s));
    }

    let tasks = drafts
        .into_iter()
        .enumerate()
        .map(|(index, (kind, mut values, cap, synthesized))| {
            if kind != CalibrationKind::MatchPair {
                table.sort_alphabetically(&mut values);
            }
            CalibrationTask {
                index,
                kind,
                values,
                cap,
                synthesized,
            }
        })
        .collect();
    Ok(CalibrationPlan {
        seed,
        tasks,
        diagnostics,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub user_params: UserParams,
    pub purity_model: PurityModel,
    pub alpha10: f64,
    pub alpha20: f64,
    /// Fit warnings and sampling notes.
    pub diagnostics: Vec<String>,
    /// Human time spent on calibration, counted in the plan's total.
    pub total_seconds: f64,
}

/// Observations collected against a plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSession {
    pub plan: CalibrationPlan,
    pub base: UserParams,
    pub observations: Vec<CalibrationObservation>,
}

impl CalibrationSession {
    pub fn new(plan: CalibrationPlan, base: UserParams) -> Self {
        Self {
            plan,
            base,
            observations: Vec::new(),
        }
    }

    pub fn next_task(&self) -> Option<&CalibrationTask> {
        self.plan.tasks.get(self.observations.len())
    }

    pub fn is_done(&self) -> bool {
        self.observations.len() == self.plan.tasks.len()
    }

    pub fn total_seconds(&self) -> f64 {
        self.observations.iter().map(|o| o.elapsed).sum()
    }

    pub fn submit(&mut self, obs: CalibrationObservation) -> Result<()> {
        let task = self.next_task().ok_or(Error::SessionDone)?;
        if obs.index != task.index {
            return Err(Error::StaleTask {
                expected: task.index as u64,
                got: obs.index as u64,
            });
        }
        if !(obs.elapsed.is_finite() && obs.elapsed > 0.0) {
            return Err(Error::InvalidParameter(format!("elapsed {} must be > 0", obs.elapsed)));
        }
        let fits = match (&task.kind, &obs.answer) {
            (CalibrationKind::MatchPair, CalibrationAnswer::Match { .. })
            | (CalibrationKind::IsPureCluster, CalibrationAnswer::Pure { .. }) => true,
            (
                CalibrationKind::PurityMark | CalibrationKind::FindDomSmall | CalibrationKind::FindDomLarge,
                CalibrationAnswer::Dominating { values },
            ) => !values.is_empty() && values.iter().all(|v| task.values.contains(v)),
            _ => false,
        };
        if !fits {
            return Err(Error::ActionMismatch(format!("answer does not fit a {:?} task", task.kind)));
        }
        self.observations.push(obs);
        Ok(())
    }

    fn observed(&self, kind: CalibrationKind) -> impl Iterator<Item = (&CalibrationTask, &CalibrationObservation)> {
        self.observations
            .iter()
            .map(|o| (&self.plan.tasks[o.index], o))
            .filter(move |(t, _)| t.kind == kind)
    }

    fn purity_at(&self, cap: usize) -> f64 {
        mean(self.observed(CalibrationKind::PurityMark).filter(|(t, _)| t.cap == Some(cap)).map(|(t, o)| {
            match &o.answer {
                CalibrationAnswer::Dominating { values } => values.len() as f64 / t.values.len() as f64,
                _ => 1.0,
            }
        }))
        .unwrap_or(1.0)
    }

    /// Purity model from the purity marks observed so far.
    pub fn purity_model(&self) -> Result<Fitted<PurityModel>> {
        fit_purity(self.purity_at(PURITY_CAPS[0]), self.purity_at(PURITY_CAPS[1]))
    }

    pub fn finish(&self) -> Result<CalibrationResult> {
        if !self.is_done() {
            return Err(Error::IncompleteSession);
        }
        let u = &self.base;
        let mut diagnostics = self.plan.diagnostics.clone();
        let purity = self.purity_model()?;
        let alpha20_guess = purity.value.purity(OPERATION_CAP);

        let matches: Vec<f64> = self.observed(CalibrationKind::MatchPair).map(|(_, o)| o.elapsed).collect();
        let rho_m = fit_match_cost(&matches, u);
        let is_pure: Vec<(f64, f64, f64)> = self
            .observed(CalibrationKind::IsPureCluster)
            .map(|(t, o)| {
                let alpha = match o.answer {
                    CalibrationAnswer::Pure { pure: true } => 1.0,
                    _ => alpha20_guess,
                };
                (t.values.len() as f64, alpha, o.elapsed)
            })
            .collect();
        let gammas = fit_is_pure(&is_pure, u);
        let sized = |kind| -> Vec<(f64, f64)> {
            self.observed(kind).map(|(t, o)| (t.values.len() as f64, o.elapsed)).collect()
        };
        let etas = fit_find_dom(&sized(CalibrationKind::FindDomSmall), &sized(CalibrationKind::FindDomLarge), u);

        for w in [&purity.warning, &rho_m.warning, &gammas.warning, &etas.warning].into_iter().flatten() {
            diagnostics.push(w.clone());
        }
        let user_params = UserParams {
            rho_m: rho_m.value,
            gamma: gammas.value.0,
            gamma0: gammas.value.1,
            eta1: etas.value.0,
            eta2: etas.value.1,
            eta3: etas.value.2,
            ..*u
        };
        user_params.validate()?;
        Ok(CalibrationResult {
            user_params,
            purity_model: purity.value,
            alpha10: self.purity_at(PURITY_CAPS[0]),
            alpha20: self.purity_at(PURITY_CAPS[1]),
            diagnostics,
            total_seconds: self.total_seconds(),
        })
    }
}

/// How a noiseless synthetic user answers a calibration task, and how long it takes.
///
/// Timings follow the cost model exactly: a match pair takes ρ_m plus one
/// click, isPure takes γ·α·ψ + γ₀ plus one click with α the purity the fit
/// will assume for the answer given, findDom takes ρ_d(ψ) plus one click, and
/// a purity mark is charged as findDom followed by marking every value.
pub fn synthetic_observation(
    session: &CalibrationSession,
    task: &CalibrationTask,
    gold: &GoldPartition,
    u: &UserParams,
) -> Result<CalibrationObservation> {
    let entity = |v: ValueId| gold.entity_of(v);
    let dominating = || -> Vec<ValueId> {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for &v in &task.values {
            *counts.entry(entity(v)).or_default() += 1;
        }
        let best = counts.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).map(|(&e, _)| e);
        task.values.iter().copied().filter(|&v| Some(entity(v)) == best).collect()
    };
    let psi = task.values.len() as f64;
    let (answer, elapsed) = match task.kind {
        CalibrationKind::MatchPair => (
            CalibrationAnswer::Match {
                same: entity(task.values[0]) == entity(task.values[1]),
            },
            u.rho_m + u.click(),
        ),
        CalibrationKind::IsPureCluster => {
            let pure = task.values.iter().all(|&v| entity(v) == entity(task.values[0]));
            let alpha = if pure {
                1.0
            } else {
                session.purity_model()?.value.purity(OPERATION_CAP)
            };
            (CalibrationAnswer::Pure { pure }, u.is_pure(psi, alpha) + u.click())
        }
        CalibrationKind::FindDomSmall | CalibrationKind::FindDomLarge => (
            CalibrationAnswer::Dominating {
                values: dominating().into_iter().take(1).collect(),
            },
            u.find_dom(psi) + u.click(),
        ),
        CalibrationKind::PurityMark => {
            let values = dominating();
            let t = u.find_dom(psi) + psi * (u.rho_f + u.rho_m) + values.len() as f64 * u.rho_s + u.click();
            (CalibrationAnswer::Dominating { values }, t)
        }
    };
    Ok(CalibrationObservation {
        index: task.index,
        elapsed,
        answer,
    })
}

/// Runs a full calibration with a noiseless synthetic user.
pub fn calibrate_synthetic(
    table: &ValueTable,
    gold: &GoldPartition,
    user: &UserParams,
    sim_cfg: &SimilarityConfig,
    seed: u64,
    exec: Execution,
) -> Result<CalibrationResult> {
    let plan = plan_calibration(table, sim_cfg, user.stm_capacity, seed, exec)?;
    calibrate_with_plan(plan, gold, user)
}

/// Answers an already drawn plan with a noiseless synthetic user.
pub fn calibrate_with_plan(plan: CalibrationPlan, gold: &GoldPartition, user: &UserParams) -> Result<CalibrationResult> {
    let base = UserParams {
        rho_f: user.rho_f,
        rho_s: user.rho_s,
        rho_z: user.rho_z,
        rho_r: user.rho_r,
        stm_capacity: user.stm_capacity,
        columns: user.columns,
        mu: user.mu,
        ..UserParams::default()
    };
    let mut session = CalibrationSession::new(plan, base);
    while let Some(task) = session.next_task().cloned() {
        let obs = synthetic_observation(&session, &task, gold, user)?;
        session.submit(obs)?;
    }
    session.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn purity_fit_cases() {
        let f = fit_purity(1.0, 1.0).unwrap();
        assert_eq!(f.value, PurityModel { a: 1.0, b: 0.0 });
        assert!(f.warning.is_some());

        // Hand OLS over x = (0, ln 10, ln 20), y = (0, ln 0.8, ln 0.65).
        let xs = [0.0, 10f64.ln(), 20f64.ln()];
        let ys = [0.0, 0.8f64.ln(), 0.65f64.ln()];
        let mx = xs.iter().sum::<f64>() / 3.0;
        let my = ys.iter().sum::<f64>() / 3.0;
        let b = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
            / xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
        let a = (my - b * mx).exp();
        let f = fit_purity(0.8, 0.65).unwrap().value;
        assert!(close(f.a, a, 1e-12) && close(f.b, b, 1e-12));

        let exact = fit_purity(10f64.powf(-0.3), 20f64.powf(-0.3)).unwrap().value;
        assert!(close(exact.a, 1.0, 1e-9) && close(exact.b, -0.3, 1e-9));
        assert!(close(exact.purity(1), 1.0, 1e-9));
    }

    #[test]
    fn match_cost_cases() {
        let u = UserParams::default();
        assert_eq!(fit_match_cost(&[2.0, 2.0, 2.0], &u).value, 1.0);
        assert_eq!(fit_match_cost(&[1.0, 1.0, 1.0], &u).value, 0.0);
        assert!(close(fit_match_cost(&[1.8, 2.2, 2.0], &u).value, 1.0, 1e-12));
    }

    #[test]
    fn is_pure_fit_cases() {
        let u = UserParams::default();
        let obs: Vec<(f64, f64, f64)> = [4.0, 8.0, 12.0].iter().map(|&p| (p, 1.0, 0.25 * p + 0.7 + 1.0)).collect();
        let f = fit_is_pure(&obs, &u);
        assert!(close(f.value.0, 0.25, 1e-12) && close(f.value.1, 0.7, 1e-12));
        let same = [(5.0, 1.0, 3.0); 3];
        let f = fit_is_pure(&same, &u);
        assert_eq!(f.value, (0.0, 2.0));
        assert!(f.warning.is_some());
    }

    #[test]
    fn find_dom_fit_cases() {
        let u = UserParams::default();
        let small: Vec<(f64, f64)> = [3.0, 5.0, 7.0].iter().map(|&p| (p, 0.3 * p + 1.0)).collect();
        let large: Vec<(f64, f64)> = [8.0, 12.0, 20.0].iter().map(|&p| (p, 0.002 * p * p + 1.5 + 1.0)).collect();
        let f = fit_find_dom(&small, &large, &u);
        assert!(close(f.value.0, 0.3, 1e-12));
        assert!(close(f.value.1, 0.002, 1e-9) && close(f.value.2, 1.5, 1e-9));
        let flat = [(10.0, 4.0); 3];
        assert_eq!(fit_find_dom(&small, &flat, &u).value.1, 0.0);
    }
}
