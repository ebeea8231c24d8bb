//! Quadratic weighted kappa and per-set evaluation reports.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Essay, EssaySetMeta, MetaCatalog};
use crate::scoreparse::{ParseRecord, ParseStatus};

const GRID_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("score {score} is not on the grid of essay set `{set}`")]
    OffGrid { score: f64, set: String },
    #[error("no rating pairs")]
    NoPairs,
    #[error("need at least 2 bins, got {0}")]
    TooFewBins(usize),
    #[error("bin {bin} outside 0..{num_bins}")]
    BinOutOfRange { bin: usize, num_bins: usize },
    #[error("degenerate marginals")]
    DegenerateMarginals,
    #[error("essay `{0}` has no gold record")]
    MissingGold(String),
    #[error("essay `{essay}` belongs to unknown essay set `{set}`")]
    UnknownSet { essay: String, set: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingPair {
    pub essay_id: String,
    pub predicted: usize,
    pub gold: usize,
}

/// Index of `score` on the set's grid: `(score - score_min) / score_step`.
pub fn to_bins(score: f64, meta: &EssaySetMeta) -> Result<usize, EvalError> {
    let off_grid = || EvalError::OffGrid {
        score,
        set: meta.essay_set_id.clone(),
    };
    if !meta.on_grid(score) || !meta.in_range(score) {
        return Err(off_grid());
    }
    let steps = ((score - meta.score_min as f64) / meta.score_step).round();
    if steps < -GRID_EPS {
        return Err(off_grid());
    }
    Ok(steps as usize)
}

/// Quadratic weighted kappa over `num_bins` ordinal categories.
///
/// `1 - sum(w * O) / sum(w * E)` with `w[i][j] = (i - j)^2 / (N - 1)^2`, `O`
/// the observed (predicted, gold) count matrix and `E` the outer product of
/// its marginals scaled to the same total. The weight scale cancels, so both
/// sums are taken exactly in integers and the result is symmetric in its
/// raters bit for bit. When the expected disagreement is zero (all ratings
/// in one shared bin) the result is 1.
pub fn qwk(pairs: &[RatingPair], num_bins: usize) -> Result<f64, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::NoPairs);
    }
    if num_bins < 2 {
        return Err(EvalError::TooFewBins(num_bins));
    }
    let n = num_bins;
    let mut observed = vec![0u128; n * n];
    let mut hist_pred = vec![0u128; n];
    let mut hist_gold = vec![0u128; n];
    for p in pairs {
        for bin in [p.predicted, p.gold] {
            if bin >= n {
                return Err(EvalError::BinOutOfRange { bin, num_bins: n });
            }
        }
        observed[p.predicted * n + p.gold] += 1;
        hist_pred[p.predicted] += 1;
        hist_gold[p.gold] += 1;
    }
    // num = sum(d^2 * O) * total and den = sum(d^2 * hist_pred * hist_gold)
    // are the two sums above times total * (N - 1)^2.
    let mut num = 0u128;
    let mut den = 0u128;
    for i in 0..n {
        for j in 0..n {
            let d2 = (i.abs_diff(j) as u128).pow(2);
            num += d2 * observed[i * n + j];
            den += d2 * hist_pred[i] * hist_gold[j];
        }
    }
    num *= pairs.len() as u128;
    if den == 0 {
        return if num == 0 {
            Ok(1.0)
        } else {
            Err(EvalError::DegenerateMarginals)
        };
    }
    Ok(1.0 - num as f64 / den as f64)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SetReport {
    /// `None` when no essay of the set could be evaluated.
    pub qwk: Option<f64>,
    /// Essays in the QWK computation.
    pub n: usize,
    pub parse_failures: usize,
    pub clamped: usize,
    /// Essays never sent to the model (request cap).
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub config_digest: String,
    /// Free-form run facts (model, selection, subsample seed, ...).
    #[serde(default)]
    pub run: BTreeMap<String, String>,
    pub per_set: BTreeMap<String, SetReport>,
    /// Unweighted mean over sets with a defined QWK.
    pub average_qwk: Option<f64>,
    pub sets_averaged: usize,
    /// QWK over all pairs at once; only when every evaluated set shares one
    /// score grid (e.g. the ELLIPSE prompts).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pooled_qwk: Option<f64>,
}

/// Joins parse records with gold scores and computes per-set QWK.
///
/// Failed records count as parse failures and are left out of QWK; ids in
/// `skipped` are tallied per set.
pub fn build_report(
    records: &[ParseRecord],
    skipped: &BTreeSet<String>,
    gold: &[Essay],
    metas: &MetaCatalog,
    config_digest: &str,
    run: BTreeMap<String, String>,
) -> Result<EvaluationReport, EvalError> {
    let by_id: HashMap<&str, &Essay> = gold.iter().map(|e| (e.id.as_str(), e)).collect();
    let lookup = |id: &str| -> Result<(&Essay, &EssaySetMeta), EvalError> {
        let essay = by_id
            .get(id)
            .ok_or_else(|| EvalError::MissingGold(id.to_string()))?;
        let meta = metas
            .get(&essay.essay_set_id)
            .ok_or_else(|| EvalError::UnknownSet {
                essay: id.to_string(),
                set: essay.essay_set_id.clone(),
            })?;
        Ok((essay, meta))
    };

    let mut pairs: BTreeMap<String, Vec<RatingPair>> = BTreeMap::new();
    let mut per_set: BTreeMap<String, SetReport> = BTreeMap::new();
    for record in records {
        let (essay, meta) = lookup(&record.essay_id)?;
        let set = per_set.entry(meta.essay_set_id.clone()).or_default();
        let predicted = match (record.status, record.score(meta.target_trait())) {
            (ParseStatus::Ok, Some(score)) => score,
            _ => {
                set.parse_failures += 1;
                continue;
            }
        };
        if record.clamped {
            set.clamped += 1;
        }
        pairs
            .entry(meta.essay_set_id.clone())
            .or_default()
            .push(RatingPair {
                essay_id: record.essay_id.clone(),
                predicted: to_bins(predicted, meta)?,
                gold: to_bins(essay.gold_overall, meta)?,
            });
    }
    for id in skipped {
        let (_, meta) = lookup(id)?;
        per_set
            .entry(meta.essay_set_id.clone())
            .or_default()
            .skipped += 1;
    }

    for (set_id, report) in per_set.iter_mut() {
        let meta = metas.get(set_id).expect("set seen through lookup");
        if let Some(set_pairs) = pairs.get(set_id) {
            report.n = set_pairs.len();
            report.qwk = Some(qwk(set_pairs, meta.num_bins())?);
        } else {
            log::warn!("essay set `{set_id}` has no evaluable essays; left out of the average");
        }
    }
    let grids: BTreeSet<(i64, i64, u64)> = pairs
        .keys()
        .filter_map(|id| metas.get(id))
        .map(|m| (m.score_min, m.score_max, m.score_step.to_bits()))
        .collect();
    let pooled_qwk = match (
        grids.len(),
        pairs.keys().next().and_then(|id| metas.get(id)),
    ) {
        (1, Some(meta)) if pairs.len() > 1 => {
            let all: Vec<RatingPair> = pairs.values().flatten().cloned().collect();
            Some(qwk(&all, meta.num_bins())?)
        }
        _ => None,
    };
    let defined: Vec<f64> = per_set.values().filter_map(|s| s.qwk).collect();
    let average_qwk =
        (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    Ok(EvaluationReport {
        config_digest: config_digest.to_string(),
        run,
        per_set,
        average_qwk,
        sets_averaged: defined.len(),
        pooled_qwk,
    })
}

/// Numeric ids in numeric order, then the rest lexicographically.
fn set_order(a: &str, b: &str) -> std::cmp::Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        (Ok(_), Err(_)) => std::cmp::Ordering::Less,
        (Err(_), Ok(_)) => std::cmp::Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

fn fmt_qwk(q: Option<f64>) -> String {
    q.map_or_else(|| "undefined".to_string(), |q| format!("{q:.3}"))
}

impl EvaluationReport {
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("report serializes");
        out.push('\n');
        out
    }

    /// Plain-text table: one row per set, then an `Avg.` row.
    pub fn to_text(&self) -> String {
        let mut ids: Vec<&String> = self.per_set.keys().collect();
        ids.sort_by(|a, b| set_order(a, b));
        let width = ids.iter().map(|s| s.len()).max().unwrap_or(0).max(4);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>9}  {:>5}  {:>14}  {:>7}  {:>7}",
            "set", "qwk", "n", "parse_failures", "clamped", "skipped"
        );
        for id in ids {
            let s = &self.per_set[id];
            let _ = writeln!(
                out,
                "{:<width$}  {:>9}  {:>5}  {:>14}  {:>7}  {:>7}",
                id,
                fmt_qwk(s.qwk),
                s.n,
                s.parse_failures,
                s.clamped,
                s.skipped
            );
        }
        let total = |f: fn(&SetReport) -> usize| self.per_set.values().map(f).sum::<usize>();
        let _ = writeln!(
            out,
            "{:<width$}  {:>9}  {:>5}  {:>14}  {:>7}  {:>7}",
            "Avg.",
            fmt_qwk(self.average_qwk),
            total(|s| s.n),
            total(|s| s.parse_failures),
            total(|s| s.clamped),
            total(|s| s.skipped)
        );
        if let Some(pooled) = self.pooled_qwk {
            let _ = writeln!(
                out,
                "{:<width$}  {:>9}  {:>5}",
                "Pooled",
                fmt_qwk(Some(pooled)),
                total(|s| s.n)
            );
        }
        for (k, v) in &self.run {
            let _ = writeln!(out, "{k}: {v}");
        }
        let _ = writeln!(out, "config_digest: {}", self.config_digest);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EssayType;

    fn meta(id: &str, lo: i64, hi: i64, step: f64) -> EssaySetMeta {
        EssaySetMeta {
            essay_set_id: id.into(),
            prompt_text: String::new(),
            score_min: lo,
            score_max: hi,
            score_step: step,
            trait_names: vec!["Overall".into()],
            trait_ranges: BTreeMap::new(),
            essay_type: EssayType::Unknown,
            score_column: None,
        }
    }

    fn pairs(v: &[(usize, usize)]) -> Vec<RatingPair> {
        v.iter()
            .enumerate()
            .map(|(i, &(p, g))| RatingPair {
                essay_id: format!("e{i}"),
                predicted: p,
                gold: g,
            })
            .collect()
    }

    #[test]
    fn bins() {
        assert_eq!(to_bins(1.0, &meta("a", 1, 6, 1.0)).unwrap(), 0);
        assert_eq!(to_bins(3.5, &meta("b", 1, 5, 0.5)).unwrap(), 5);
        assert_eq!(to_bins(5.0, &meta("b", 1, 5, 0.5)).unwrap(), 8);
        assert!(matches!(
            to_bins(2.25, &meta("b", 1, 5, 0.5)),
            Err(EvalError::OffGrid { .. })
        ));
        assert!(to_bins(7.0, &meta("a", 1, 6, 1.0)).is_err());
    }

    #[test]
    fn reference_values() {
        assert_eq!(qwk(&pairs(&[(0, 2), (2, 0)]), 3).unwrap(), -1.0);
        assert_eq!(qwk(&pairs(&[(0, 0), (1, 1), (2, 2)]), 3).unwrap(), 1.0);
        assert_eq!(qwk(&pairs(&[(1, 1), (1, 1)]), 3).unwrap(), 1.0);
        // All predictions 0, all gold 2: observed equals expected.
        assert_eq!(qwk(&pairs(&[(0, 2), (0, 2)]), 3).unwrap(), 0.0);
        assert_eq!(qwk(&[], 3), Err(EvalError::NoPairs));
        assert_eq!(qwk(&pairs(&[(0, 0)]), 1), Err(EvalError::TooFewBins(1)));
        assert!(matches!(
            qwk(&pairs(&[(0, 5)]), 3),
            Err(EvalError::BinOutOfRange { .. })
        ));
    }

    fn record(id: &str, set: &str, score: Option<f64>, clamped: bool) -> ParseRecord {
        let raw = "raw";
        let mut rec = match score {
            Some(s) => ParseRecord {
                scores: BTreeMap::from([("Overall".to_string(), s)]),
                ..ParseRecord::new(id, set, raw, &Err(fail()))
            },
            None => ParseRecord::new(id, set, raw, &Err(fail())),
        };
        if score.is_some() {
            rec.status = ParseStatus::Ok;
            rec.failure = None;
        }
        rec.clamped = clamped;
        rec
    }

    fn fail() -> crate::scoreparse::ParseFailure {
        crate::scoreparse::ParseFailure {
            reason: crate::scoreparse::FailureReason::NoScoreFound,
            detail: String::new(),
            raw: "raw".into(),
        }
    }

    fn essay(id: &str, set: &str, gold: f64) -> Essay {
        Essay {
            id: id.into(),
            essay_set_id: set.into(),
            text: "t".into(),
            gold_overall: gold,
            gold_traits: None,
            grade_band: None,
        }
    }

    #[test]
    fn report_counts_and_average() {
        let metas = MetaCatalog::new([meta("1", 1, 6, 1.0), meta("2", 0, 3, 1.0)]).unwrap();
        let gold = vec![
            essay("a", "1", 2.0),
            essay("b", "1", 5.0),
            essay("c", "1", 3.0),
            essay("d", "2", 1.0),
            essay("e", "2", 2.0),
        ];
        let records = vec![
            record("a", "1", Some(2.0), false),
            record("b", "1", Some(5.0), true),
            record("c", "1", None, false),
            record("d", "2", None, false),
        ];
        let skipped = BTreeSet::from(["e".to_string()]);
        let report =
            build_report(&records, &skipped, &gold, &metas, "abc", BTreeMap::new()).unwrap();
        let one = &report.per_set["1"];
        assert_eq!(
            (one.n, one.parse_failures, one.clamped, one.skipped),
            (2, 1, 1, 0)
        );
        assert_eq!(one.qwk, Some(1.0));
        let two = &report.per_set["2"];
        assert_eq!(
            (two.qwk, two.n, two.parse_failures, two.skipped),
            (None, 0, 1, 1)
        );
        assert_eq!(report.average_qwk, Some(1.0));
        assert_eq!(report.sets_averaged, 1);
        let text = report.to_text();
        assert!(text.contains("Avg."));
        assert!(text.contains("undefined"));
        let back: EvaluationReport = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn pooled_only_on_shared_grid() {
        let same = MetaCatalog::new([meta("p", 1, 5, 0.5), meta("q", 1, 5, 0.5)]).unwrap();
        let gold = vec![
            essay("a", "p", 1.0),
            essay("b", "p", 2.0),
            essay("c", "q", 3.5),
            essay("d", "q", 5.0),
        ];
        let records = vec![
            record("a", "p", Some(1.0), false),
            record("b", "p", Some(2.0), false),
            record("c", "q", Some(3.5), false),
            record("d", "q", Some(4.5), false),
        ];
        let report = build_report(
            &records,
            &BTreeSet::new(),
            &gold,
            &same,
            "",
            BTreeMap::new(),
        )
        .unwrap();
        let all = [(0, 0), (2, 2), (5, 5), (7, 8)];
        assert_eq!(report.pooled_qwk, Some(qwk(&pairs(&all), 9).unwrap()));
        assert!(report.to_text().contains("Pooled"));

        let mixed = MetaCatalog::new([meta("p", 1, 5, 0.5), meta("q", 1, 6, 1.0)]).unwrap();
        let gold = vec![essay("a", "p", 1.0), essay("b", "q", 2.0)];
        let records = vec![
            record("a", "p", Some(1.0), false),
            record("b", "q", Some(2.0), false),
        ];
        let report = build_report(
            &records,
            &BTreeSet::new(),
            &gold,
            &mixed,
            "",
            BTreeMap::new(),
        )
        .unwrap();
        assert_eq!(report.pooled_qwk, None);
    }

    #[test]
    fn missing_gold_names_the_essay() {
        let metas = MetaCatalog::new([meta("1", 1, 6, 1.0)]).unwrap();
        let err = build_report(
            &[record("zz", "1", Some(2.0), false)],
            &BTreeSet::new(),
            &[],
            &metas,
            "",
            BTreeMap::new(),
        )
        .unwrap_err();
        assert_eq!(err, EvalError::MissingGold("zz".into()));
        assert_eq!(err.to_string(), "essay `zz` has no gold record");
    }

    #[test]
    fn numeric_set_order_in_table() {
        assert_eq!(set_order("2", "10"), std::cmp::Ordering::Less);
        assert_eq!(set_order("10", "ellipse"), std::cmp::Ordering::Less);
    }
}
