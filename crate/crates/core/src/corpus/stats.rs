use std::fmt::Write as _;

use serde::Serialize;

use super::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LanguageShare {
    pub language: String,
    pub count: usize,
    pub percentage: f64,
}

/// Per-language counts and shares, largest first (ties by language code).
pub fn corpus_stats(ds: &Dataset) -> Vec<LanguageShare> {
    let total = ds.len();
    let mut rows: Vec<LanguageShare> = ds
        .language_counts()
        .iter()
        .map(|(language, &count)| LanguageShare {
            language: language.clone(),
            count,
            percentage: 100.0 * count as f64 / total as f64,
        })
        .collect();
    rows.sort_by(|a, b| {
        b.count
            .cmp(&a.count)
            .then_with(|| a.language.cmp(&b.language))
    });
    rows
}

pub fn stats_tsv(rows: &[LanguageShare]) -> String {
    let mut out = String::from("language\tcount\tpercentage\n");
    for r in rows {
        let _ = writeln!(out, "{}\t{}\t{:.1}", r.language, r.count, r.percentage);
    }
    out
}

pub fn stats_table(rows: &[LanguageShare]) -> String {
    let total: usize = rows.iter().map(|r| r.count).sum();
    let mut out = format!("{:<10}{:>10}{:>9}\n", "language", "count", "share");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<10}{:>10}{:>8.1}%",
            r.language, r.count, r.percentage
        );
    }
    let _ = writeln!(
        out,
        "{:<10}{:>10}{:>8.1}%",
        "total",
        total,
        if total > 0 { 100.0 } else { 0.0 }
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Example;

    fn dataset(counts: &[(&str, usize)]) -> Dataset {
        let mut exs = Vec::new();
        for (lang, n) in counts {
            for i in 0..*n {
                exs.push(Example::gold(format!("{lang}{i}"), *lang, None, "t"));
            }
        }
        Dataset::new(exs).unwrap()
    }

    #[test]
    fn matches_pretraining_proportions() {
        // counts in units of 100k tweets, the shape of the pre-training corpus
        let ds = dataset(&[
            ("en", 794),
            ("es", 224),
            ("pt", 163),
            ("it", 25),
            ("fr", 66),
            ("zh", 40),
            ("hi", 27),
            ("nl", 11),
            ("ko", 83),
            ("ar", 129),
        ]);
        let rows = corpus_stats(&ds);
        assert_eq!(rows[0].language, "en");
        // the published counts are themselves rounded to 0.1m, hence the window
        assert!(
            (rows[0].percentage - 50.9).abs() < 0.1,
            "{}",
            rows[0].percentage
        );
        let total: f64 = rows.iter().map(|r| r.percentage).sum();
        assert!((total - 100.0).abs() < 0.1);
    }

    #[test]
    fn degenerate_cases() {
        let rows = corpus_stats(&dataset(&[("ko", 7)]));
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].percentage, 100.0);
        assert!(corpus_stats(&Dataset::default()).is_empty());
    }
}
