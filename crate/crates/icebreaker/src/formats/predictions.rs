//! Ranked predictions (`query_id,rank,candidate_id,score`) and metric reports.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use icebreaker_core::dataset::VideoId;
use icebreaker_core::evaluation::{MetricReport, RankingResult};

use crate::{Error, Result};

pub const PREDICTIONS_HEADER: &str = "query_id,rank,candidate_id,score";

/// One block of rows per ranking, in the given order.
pub fn format_predictions(rankings: &[RankingResult]) -> String {
    let mut out = String::from(PREDICTIONS_HEADER);
    out.push('\n');
    for r in rankings {
        for (rank, (id, score)) in r.ranked.iter().enumerate() {
            writeln!(out, "{},{},{id},{score}", r.query, rank + 1).expect("string write");
        }
    }
    out
}

/// Parses a predictions file. Ranks must run 1, 2, ... within each query and
/// a query's rows must be contiguous.
pub fn parse_predictions(text: &str) -> Result<Vec<RankingResult>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, h)) if h == PREDICTIONS_HEADER => {}
        _ => return Err(Error::Format(format!("predictions: first line must be `{PREDICTIONS_HEADER}`"))),
    }
    let mut out: Vec<RankingResult> = Vec::new();
    let mut seen = BTreeSet::new();
    let mut current: Option<(VideoId, Vec<(VideoId, f64)>)> = None;
    let mut finish = |block: Option<(VideoId, Vec<(VideoId, f64)>)>, n: usize| -> Result<()> {
        if let Some((q, ranked)) = block {
            out.push(RankingResult::new(q, ranked).map_err(|e| Error::Format(format!("predictions line {n}: {e}")))?);
        }
        Ok(())
    };
    for (n, line) in lines {
        if line.is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Format(format!("predictions line {n}: {what}"));
        let fields: Vec<&str> = line.split(',').collect();
        let [query, rank, cand, score] = fields[..] else {
            return Err(bad("expected 4 comma-separated fields"));
        };
        let query = VideoId::new(query).map_err(|e| bad(&e.to_string()))?;
        let cand = VideoId::new(cand).map_err(|e| bad(&e.to_string()))?;
        let rank: usize = rank.parse().map_err(|_| bad("rank is not a positive integer"))?;
        let score: f64 = score.parse().map_err(|_| bad("score is not a number"))?;
        if current.as_ref().is_none_or(|(q, _)| *q != query) {
            finish(current.take(), n)?;
            if !seen.insert(query.clone()) {
                return Err(bad(&format!("rows for {query} are not contiguous")));
            }
            current = Some((query, Vec::new()));
        }
        let (_, ranked) = current.as_mut().expect("just set");
        if rank != ranked.len() + 1 {
            return Err(bad(&format!("expected rank {}, got {rank}", ranked.len() + 1)));
        }
        ranked.push((cand, score));
    }
    finish(current.take(), text.lines().count())?;
    Ok(out)
}

/// Aligned plain-text table of a report.
pub fn format_report_table(report: &MetricReport) -> String {
    let mut out = format!("queries: {}\n{:<8}{:>6}{:>10}\n", report.n_queries, "metric", "k", "value");
    for (name, values) in [("hit", &report.hit_at), ("recall", &report.recall_at)] {
        for (k, v) in values {
            writeln!(out, "{name:<8}{k:>6}{v:>10.4}").expect("string write");
        }
    }
    out
}

/// Machine-readable `metric,k,value` rows.
pub fn format_report_csv(report: &MetricReport) -> String {
    let mut out = String::from("metric,k,value\n");
    for (name, values) in [("hit", &report.hit_at), ("recall", &report.recall_at)] {
        for (k, v) in values {
            writeln!(out, "{name},{k},{v}").expect("string write");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn id(s: &str) -> VideoId {
        VideoId::new(s).unwrap()
    }

    fn sample() -> Vec<RankingResult> {
        vec![
            RankingResult::new(id("q1"), vec![(id("a"), 0.25), (id("b"), 1.0 / 3.0)]).unwrap(),
            RankingResult::new(id("q2"), vec![(id("q1"), -2.5e-8)]).unwrap(),
        ]
    }

    #[test]
    fn round_trip_is_exact() {
        let text = format_predictions(&sample());
        assert!(text.starts_with("query_id,rank,candidate_id,score\nq1,1,a,0.25\nq1,2,b,"));
        assert_eq!(parse_predictions(&text).unwrap(), sample());
        assert_eq!(format_predictions(&parse_predictions(&text).unwrap()), text);
    }

    #[test]
    fn malformed_rows_name_their_line() {
        let cases = [
            "query_id,rank,candidate_id,score\nq1,1,a\n",
            "query_id,rank,candidate_id,score\nq1,2,a,0.1\n",
            "query_id,rank,candidate_id,score\nq1,1,a,x\n",
            "query_id,rank,candidate_id,score\nq1,1,a,0.1\nq2,1,a,0.1\nq1,2,b,0.1\n",
            "query_id,rank,candidate_id,score\nq1,1,q1,0.1\n",
            "query_id,rank,candidate_id,score\nq1,1,a,0.1\nq1,2,a,0.1\n",
        ];
        for text in cases {
            match parse_predictions(text) {
                Err(Error::Format(msg)) => assert!(msg.contains("line"), "{msg}"),
                other => panic!("{text:?} -> {other:?}"),
            }
        }
        assert!(matches!(parse_predictions("q,r,c,s\n"), Err(Error::Format(_))));
        assert!(matches!(parse_predictions(""), Err(Error::Format(_))));
    }

    #[test]
    fn report_outputs() {
        let report = MetricReport {
            hit_at: BTreeMap::from([(5, 1.0), (10, 1.0)]),
            recall_at: BTreeMap::from([(50, 0.5)]),
            n_queries: 2,
        };
        assert_eq!(format_report_csv(&report), "metric,k,value\nhit,5,1\nhit,10,1\nrecall,50,0.5\n");
        let table = format_report_table(&report);
        assert!(table.contains("recall      50    0.5000"), "{table}");
    }
}
