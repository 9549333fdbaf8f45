//! Pearson correlation, per-group evaluation and the pooled-vs-macro ranking
//! comparison.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Example};
use crate::error::{Error, Result};

/// Product-moment correlation computed in two passes (means, then centered sums).
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation("fewer than two points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance"));
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    if !r.is_finite() {
        return Err(Error::UndefinedCorrelation("non-finite input"));
    }
    Ok(r.clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum GroupBy {
    #[default]
    Language,
    Origin,
}

impl GroupBy {
    fn key(self, ex: &Example) -> String {
        match self {
            GroupBy::Language => ex.language.clone(),
            GroupBy::Origin => ex.origin.to_string(),
        }
    }
}

/// Pooled and per-group correlations for one system.
///
/// Groups whose correlation is undefined (fewer than two items, or constant
/// gold or predictions) are listed in `undefined_groups` and left out of
/// `per_group_r` and of the macro average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall_r: f64,
    pub per_group_r: BTreeMap<String, f64>,
    pub macro_avg_r: f64,
    pub n_overall: usize,
    pub n_per_group: BTreeMap<String, usize>,
    pub undefined_groups: Vec<String>,
}

impl EvalReport {
    /// Builds a report from already-computed correlations, e.g. published
    /// per-language results. Sample counts are left empty.
    pub fn from_group_scores(overall_r: f64, per_group_r: BTreeMap<String, f64>) -> Result<Self> {
        let macro_avg_r = macro_average(&per_group_r)?;
        Ok(EvalReport {
            overall_r,
            per_group_r,
            macro_avg_r,
            n_overall: 0,
            n_per_group: BTreeMap::new(),
            undefined_groups: Vec::new(),
        })
    }

    pub fn groups(&self) -> BTreeSet<&str> {
        self.per_group_r
            .keys()
            .chain(&self.undefined_groups)
            .map(String::as_str)
            .collect()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("group\tn\tpearson\n");
        let _ = writeln!(out, "ALL\t{}\t{}", self.n_overall, self.overall_r);
        let _ = writeln!(out, "AVG\t\t{}", self.macro_avg_r);
        for group in self.groups() {
            let n = self.n_per_group.get(group).copied().unwrap_or(0);
            let r = self
                .per_group_r
                .get(group)
                .map(f64::to_string)
                .unwrap_or_default();
            let _ = writeln!(out, "{group}\t{n}\t{r}");
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:<8}{:>8}{:>10}\n", "group", "n", "pearson");
        let _ = writeln!(
            out,
            "{:<8}{:>8}{:>10.3}",
            "ALL", self.n_overall, self.overall_r
        );
        let _ = writeln!(out, "{:<8}{:>8}{:>10.3}", "AVG", "", self.macro_avg_r);
        for group in self.groups() {
            let n = self.n_per_group.get(group).copied().unwrap_or(0);
            match self.per_group_r.get(group) {
                Some(r) => {
                    let _ = writeln!(out, "{group:<8}{n:>8}{r:>10.3}");
                }
                None => {
                    let _ = writeln!(out, "{group:<8}{n:>8}{:>10}", "undef");
                }
            }
        }
        if !self.undefined_groups.is_empty() {
            let _ = writeln!(
                out,
                "warning: {} group(s) with undefined correlation excluded from AVG",
                self.undefined_groups.len()
            );
        }
        out
    }
}

fn macro_average(per_group_r: &BTreeMap<String, f64>) -> Result<f64> {
    if per_group_r.is_empty() {
        return Err(Error::UndefinedCorrelation(
            "no group has a defined correlation",
        ));
    }
    Ok(per_group_r.values().sum::<f64>() / per_group_r.len() as f64)
}

/// Scores `predictions` against the gold scores of `gold`.
///
/// Pairs are ordered by id before any summation, so the report does not
/// depend on the order of either input.
pub fn evaluate(
    predictions: &HashMap<String, f64>,
    gold: &Dataset,
    group_by: GroupBy,
) -> Result<EvalReport> {
    let mut missing = Vec::new();
    let mut rows: Vec<(&str, String, f64, f64)> = Vec::with_capacity(gold.len());
    for ex in gold {
        let score = ex.score.ok_or_else(|| Error::InvalidExample {
            id: ex.id.clone(),
            message: "gold example has no score".into(),
        })?;
        match predictions.get(&ex.id) {
            Some(&p) => rows.push((&ex.id, group_by.key(ex), score, p)),
            None => missing.push(ex.id.clone()),
        }
    }
    if !missing.is_empty() {
        missing.sort();
        return Err(Error::MissingPredictions(missing));
    }
    rows.sort_by(|a, b| a.0.cmp(b.0));

    let gold_all: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let pred_all: Vec<f64> = rows.iter().map(|r| r.3).collect();
    let overall_r = pearson(&pred_all, &gold_all)?;

    let mut grouped: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (_, group, g, p) in &rows {
        let entry = grouped.entry(group.as_str()).or_default();
        entry.0.push(*p);
        entry.1.push(*g);
    }
    let mut per_group_r = BTreeMap::new();
    let mut n_per_group = BTreeMap::new();
    let mut undefined_groups = Vec::new();
    for (group, (pred, gold)) in &grouped {
        n_per_group.insert(group.to_string(), pred.len());
        match pearson(pred, gold) {
            Ok(r) => {
                per_group_r.insert(group.to_string(), r);
            }
            Err(Error::UndefinedCorrelation(_)) => undefined_groups.push(group.to_string()),
            Err(e) => return Err(e),
        }
    }
    let macro_avg_r = macro_average(&per_group_r)?;
    Ok(EvalReport {
        overall_r,
        per_group_r,
        macro_avg_r,
        n_overall: rows.len(),
        n_per_group,
        undefined_groups,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisparityRow {
    pub system: String,
    pub overall_r: f64,
    pub macro_avg_r: f64,
    pub rank_overall: usize,
    pub rank_macro: usize,
}

impl DisparityRow {
    pub fn inverted(&self) -> bool {
        self.rank_overall != self.rank_macro
    }
}

/// Systems ranked side by side by pooled and by macro-averaged correlation.
/// Rows are in pooled-rank order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisparityReport {
    pub rows: Vec<DisparityRow>,
}

impl DisparityReport {
    pub fn row(&self, system: &str) -> Option<&DisparityRow> {
        self.rows.iter().find(|r| r.system == system)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("system\tALL\trank_ALL\tAVG\trank_AVG\tinverted\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                r.system,
                r.overall_r,
                r.rank_overall,
                r.macro_avg_r,
                r.rank_macro,
                r.inverted()
            );
        }
        out
    }

    pub fn to_table(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.system.len())
            .max()
            .unwrap_or(6)
            .max(6);
        let mut out = format!(
            "{:<width$}  {:>7} {:>4}  {:>7} {:>4}\n",
            "system", "ALL", "#", "AVG", "#"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>7.3} {:>4}  {:>7.3} {:>4}{}",
                r.system,
                r.overall_r,
                r.rank_overall,
                r.macro_avg_r,
                r.rank_macro,
                if r.inverted() { "  *" } else { "" }
            );
        }
        out
    }
}

fn ranks(reports: &[(String, EvalReport)], value: impl Fn(&EvalReport) -> f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..reports.len()).collect();
    order.sort_by(|&a, &b| {
        value(&reports[b].1)
            .total_cmp(&value(&reports[a].1))
            .then_with(|| reports[a].0.cmp(&reports[b].0))
    });
    let mut rank = vec![0; reports.len()];
    for (pos, &i) in order.iter().enumerate() {
        rank[i] = pos + 1;
    }
    rank
}

/// Ranks systems by pooled and by macro-averaged correlation. Equal values
/// are ordered by system name.
pub fn disparity_report(reports: &[(String, EvalReport)]) -> Result<DisparityReport> {
    if let Some((first_name, first)) = reports.first() {
        let groups = first.groups();
        for (name, report) in &reports[1..] {
            if report.groups() != groups {
                return Err(Error::GroupMismatch(format!(
                    "{name:?} differs from {first_name:?}"
                )));
            }
        }
    }
    let by_overall = ranks(reports, |r| r.overall_r);
    let by_macro = ranks(reports, |r| r.macro_avg_r);
    let mut rows: Vec<DisparityRow> = reports
        .iter()
        .enumerate()
        .map(|(i, (name, report))| DisparityRow {
            system: name.clone(),
            overall_r: report.overall_r,
            macro_avg_r: report.macro_avg_r,
            rank_overall: by_overall[i],
            rank_macro: by_macro[i],
        })
        .collect();
    rows.sort_by_key(|r| r.rank_overall);
    Ok(DisparityReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn textbook_values() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        // centered sums: sxy = 4, sxx = syy = 5
        let r = pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.8).abs() < 1e-15);
    }

    #[test]
    fn undefined_cases() {
        assert!(matches!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
        assert!(matches!(
            pearson(&[1.0], &[1.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
        assert!(matches!(
            pearson(&[1.0, 2.0], &[1.0]),
            Err(Error::LengthMismatch { left: 2, right: 1 })
        ));
    }

    fn gold(rows: &[(&str, &str, f64)]) -> Dataset {
        Dataset::new(
            rows.iter()
                .map(|(id, lang, s)| Example::gold(*id, *lang, Some(*s), "t"))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn perfect_predictions() {
        let g = gold(&[("a", "en", 1.0), ("b", "en", 2.5), ("c", "en", 4.0)]);
        let preds = g.iter().map(|e| (e.id.clone(), e.score.unwrap())).collect();
        let rep = evaluate(&preds, &g, GroupBy::Language).unwrap();
        assert!((rep.overall_r - 1.0).abs() < 1e-12);
        assert_eq!(rep.macro_avg_r, rep.overall_r);
        assert_eq!(rep.n_overall, 3);
    }

    #[test]
    fn pooling_hides_group_quality() {
        // within each group the ranking is perfect, but group offsets are swapped
        let g = gold(&[
            ("a1", "aa", 1.0),
            ("a2", "aa", 2.0),
            ("b1", "bb", 4.0),
            ("b2", "bb", 5.0),
        ]);
        let preds: HashMap<String, f64> = [("a1", 4.0), ("a2", 5.0), ("b1", 1.0), ("b2", 2.0)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let rep = evaluate(&preds, &g, GroupBy::Language).unwrap();
        let pooled = pearson(&[4.0, 5.0, 1.0, 2.0], &[1.0, 2.0, 4.0, 5.0]).unwrap();
        assert_eq!(rep.overall_r, pooled);
        assert!((pooled + 0.8).abs() < 1e-12);
        assert!((rep.macro_avg_r - 1.0).abs() < 1e-12);
        assert!(rep.overall_r < rep.macro_avg_r);
    }

    #[test]
    fn missing_and_undefined() {
        let g = gold(&[("a", "en", 1.0), ("b", "en", 2.0), ("c", "ko", 3.0)]);
        let preds: HashMap<String, f64> = [("a".to_string(), 1.0)].into();
        match evaluate(&preds, &g, GroupBy::Language) {
            Err(Error::MissingPredictions(ids)) => assert_eq!(ids, ["b", "c"]),
            other => panic!("{other:?}"),
        }
        let preds = g.iter().map(|e| (e.id.clone(), e.score.unwrap())).collect();
        let rep = evaluate(&preds, &g, GroupBy::Language).unwrap();
        assert_eq!(rep.undefined_groups, ["ko"]);
        assert_eq!(rep.per_group_r.len(), 1);
        assert_eq!(rep.n_per_group.values().sum::<usize>(), rep.n_overall);
    }

    #[test]
    fn ties_and_singletons() {
        let rep = EvalReport::from_group_scores(0.5, [("en".into(), 0.5)].into()).unwrap();
        let one = disparity_report(&[("solo".into(), rep.clone())]).unwrap();
        assert_eq!((one.rows[0].rank_overall, one.rows[0].rank_macro), (1, 1));

        let two = disparity_report(&[("zeta".into(), rep.clone()), ("alpha".into(), rep)]).unwrap();
        assert_eq!(two.row("alpha").unwrap().rank_overall, 1);
        assert_eq!(two.row("zeta").unwrap().rank_overall, 2);
        assert!(!two.rows.iter().any(DisparityRow::inverted));
    }

    #[test]
    fn group_sets_must_match() {
        let a = EvalReport::from_group_scores(0.5, [("en".into(), 0.5)].into()).unwrap();
        let b = EvalReport::from_group_scores(0.5, [("es".into(), 0.5)].into()).unwrap();
        assert!(matches!(
            disparity_report(&[("a".into(), a), ("b".into(), b)]),
            Err(Error::GroupMismatch(_))
        ));
    }

    fn vec_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..40).prop_flat_map(|n| {
            (
                proptest::collection::vec(-100.0f64..100.0, n),
                proptest::collection::vec(-100.0f64..100.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn affine_invariance((x, y) in vec_pair(), a in 0.01f64..50.0, b in -100.0f64..100.0) {
            prop_assume!(pearson(&x, &y).is_ok());
            let r = pearson(&x, &y).unwrap();
            let ax: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            prop_assert!((pearson(&ax, &y).unwrap() - r).abs() < 1e-9);
            let neg: Vec<f64> = x.iter().map(|v| -a * v + b).collect();
            prop_assert!((pearson(&neg, &y).unwrap() + r).abs() < 1e-9);
            prop_assert!((pearson(&x, &ax).unwrap() - 1.0).abs() < 1e-12);
            prop_assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-12);
        }

        #[test]
        fn symmetric((x, y) in vec_pair()) {
            if let Ok(r) = pearson(&x, &y) {
                prop_assert!((r - pearson(&y, &x).unwrap()).abs() < 1e-12);
                prop_assert!((-1.0..=1.0).contains(&r));
            }
        }

        #[test]
        fn report_ignores_input_order(
            rows in proptest::collection::vec((1.0f64..=5.0, -2.0f64..7.0, 0usize..3), 8..40),
            shuffle_seed in any::<u64>(),
        ) {
            use rand::{seq::SliceRandom, SeedableRng};
            let langs = ["en", "es", "ko"];
            let exs: Vec<Example> = rows.iter().enumerate()
                .map(|(i, (g, _, l))| Example::gold(format!("id{i}"), langs[*l], Some(*g), "t"))
                .collect();
            let preds: HashMap<String, f64> = rows.iter().enumerate()
                .map(|(i, (_, p, _))| (format!("id{i}"), *p))
                .collect();
            let ds = Dataset::new(exs.clone()).unwrap();
            let mut shuffled = exs;
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(shuffle_seed));
            let ds2 = Dataset::new(shuffled).unwrap();
            let a = evaluate(&preds, &ds, GroupBy::Language);
            let b = evaluate(&preds, &ds2, GroupBy::Language);
            match (a, b) {
                (Ok(a), Ok(b)) => {
                    prop_assert_eq!(&a, &b);
                    let mean = a.per_group_r.values().sum::<f64>() / a.per_group_r.len() as f64;
                    prop_assert!((a.macro_avg_r - mean).abs() < 1e-12);
                    prop_assert_eq!(a.n_per_group.values().sum::<usize>(), a.n_overall);
                }
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "order changed success"),
            }
        }
    }
}
