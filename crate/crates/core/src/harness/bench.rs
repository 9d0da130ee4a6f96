//! Seeded benchmark over scenarios and planners.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::scenario::Scenario;
use super::trial::{run_trial_with_bank, PlannerKind, RunMetrics};

/// One trial's metrics with its identifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub scenario: String,
    pub planner: PlannerKind,
    pub seed: u64,
    pub metrics: RunMetrics,
}

/// Aggregates for one (scenario, planner) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub scenario: String,
    pub planner: PlannerKind,
    pub trials: usize,
    pub successes: usize,
    /// Mean and std over successful trials (NaN when none succeeded).
    pub smoothness: (f64, f64),
    pub traversed_length: (f64, f64),
    pub compute_seconds: (f64, f64),
    /// Mean and minimum over all trials.
    pub min_gt_clearance: (f64, f64),
}

impl BenchRow {
    pub fn success_rate(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }
}

/// Aggregated rows plus every trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub trials: Vec<TrialRecord>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl BenchReport {
    pub fn row(&self, scenario: &str, planner: PlannerKind) -> Option<&BenchRow> {
        self.rows
            .iter()
            .find(|r| r.scenario == scenario && r.planner == planner)
    }

    /// Deterministic metrics table; wall-clock figures live in [`Self::timing_table`].
    pub fn to_table(&self) -> String {
        let mut out = String::from(
            "scenario,planner,trials,success_pct,smoothness_mean,smoothness_std,traversed_mean,traversed_std,min_clearance_mean,min_clearance_min\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{:.2},{:.4},{:.4},{:.3},{:.3},{:.4},{:.4}",
                r.scenario,
                r.planner,
                r.trials,
                100.0 * r.success_rate(),
                r.smoothness.0,
                r.smoothness.1,
                r.traversed_length.0,
                r.traversed_length.1,
                r.min_gt_clearance.0,
                r.min_gt_clearance.1,
            );
        }
        out
    }

    /// Mean and std of the per-call planning time.
    pub fn timing_table(&self) -> String {
        let mut out = String::from("scenario,planner,compute_mean_s,compute_std_s\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:.6},{:.6}",
                r.scenario, r.planner, r.compute_seconds.0, r.compute_seconds.1
            );
        }
        out
    }
}

/// Runs every planner on every scenario for every seed.
pub fn benchmark(
    scenarios: &[Scenario],
    planners: &[PlannerKind],
    seeds: &[u64],
) -> Result<BenchReport> {
    benchmark_with(scenarios, planners, seeds, |_| {})
}

/// [`benchmark`] reporting each finished trial to `progress`.
pub fn benchmark_with(
    scenarios: &[Scenario],
    planners: &[PlannerKind],
    seeds: &[u64],
    progress: impl FnMut(&TrialRecord),
) -> Result<BenchReport> {
    if seeds.is_empty() {
        return Err(Error::InvalidInput(
            "benchmark needs at least one seed".into(),
        ));
    }
    let cases: Vec<(Scenario, u64)> = scenarios
        .iter()
        .flat_map(|s| seeds.iter().map(move |&seed| (s.clone(), seed)))
        .collect();
    benchmark_cases(&cases, planners, progress)
}

/// Runs every planner on explicit `(scenario, seed)` cases. Cases sharing a
/// scenario name are aggregated into one row per planner, so a suite of
/// generated scenarios reports like a single scenario.
pub fn benchmark_cases(
    cases: &[(Scenario, u64)],
    planners: &[PlannerKind],
    mut progress: impl FnMut(&TrialRecord),
) -> Result<BenchReport> {
    if cases.is_empty() {
        return Err(Error::InvalidInput(
            "benchmark needs at least one case".into(),
        ));
    }
    let mut names: Vec<&str> = Vec::new();
    for (s, _) in cases {
        if !names.contains(&s.name.as_str()) {
            names.push(&s.name);
        }
    }
    let banks = cases
        .iter()
        .map(|(s, _)| s.bank.load(None))
        .collect::<Result<Vec<_>>>()?;
    let mut report = BenchReport {
        rows: Vec::new(),
        trials: Vec::new(),
    };
    for name in names {
        for &planner in planners {
            let mut records = Vec::new();
            for ((scenario, seed), bank) in cases
                .iter()
                .zip(&banks)
                .filter(|((s, _), _)| s.name == name)
            {
                let outcome = run_trial_with_bank(scenario, planner, *seed, Some(bank))?;
                let record = TrialRecord {
                    scenario: name.to_string(),
                    planner,
                    seed: *seed,
                    metrics: outcome.metrics,
                };
                progress(&record);
                records.push(record);
            }
            let ok: Vec<&RunMetrics> = records
                .iter()
                .map(|r| &r.metrics)
                .filter(|m| m.success)
                .collect();
            let all: Vec<&RunMetrics> = records.iter().map(|r| &r.metrics).collect();
            let collect = |set: &[&RunMetrics], f: fn(&RunMetrics) -> f64| -> Vec<f64> {
                set.iter().map(|m| f(m)).collect()
            };
            let clearances = collect(&all, |m| m.min_gt_clearance);
            report.rows.push(BenchRow {
                scenario: name.to_string(),
                planner,
                trials: records.len(),
                successes: ok.len(),
                smoothness: mean_std(&collect(&ok, |m| m.smoothness)),
                traversed_length: mean_std(&collect(&ok, |m| m.traversed_length)),
                compute_seconds: mean_std(&collect(&all, |m| m.compute_seconds)),
                min_gt_clearance: (
                    mean_std(&clearances).0,
                    clearances.iter().copied().fold(f64::INFINITY, f64::min),
                ),
            });
            report.trials.extend(records);
        }
    }
    Ok(report)
}
