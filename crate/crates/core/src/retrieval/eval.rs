use std::fmt::Write as _;

use rayon::prelude::*;

use super::db::{knn, DescriptorDb, Neighbor};
use crate::activation::{SequenceRecord, Threshold};
use crate::error::{Error, Result};

/// Retrieval result of one query.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryOutcome {
    pub query: String,
    /// Whether any database entry lies within the threshold. Queries
    /// without one are excluded from the recall denominator.
    pub has_positive: bool,
    pub retrieved: Vec<String>,
    pub correct: Vec<bool>,
    pub distances: Vec<f64>,
}

impl QueryOutcome {
    /// Rank (1-based) of the first correct retrieval.
    pub fn first_correct(&self) -> Option<usize> {
        self.correct.iter().position(|&c| c).map(|i| i + 1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub ns: Vec<usize>,
    /// Percentages, one per entry of `ns`.
    pub recalls: Vec<f64>,
    pub threshold: Threshold,
    pub evaluated: usize,
    pub excluded: usize,
    pub outcomes: Vec<QueryOutcome>,
    /// Free-form `key, value` pairs echoed into the text output.
    pub meta: Vec<(String, String)>,
}

impl EvalReport {
    pub fn recall(&self, n: usize) -> Option<f64> {
        self.ns.iter().position(|&x| x == n).map(|i| self.recalls[i])
    }

    /// Line-delimited text: a versioned header, `# key<TAB>value` metadata,
    /// the summary block, then one row per query.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# vdnapr eval report v1\n");
        for (k, v) in &self.meta {
            let _ = writeln!(s, "# {k}\t{v}");
        }
        let _ = writeln!(s, "threshold\t{}", self.threshold);
        let _ = writeln!(s, "queries\t{}", self.evaluated);
        let _ = writeln!(s, "excluded\t{}", self.excluded);
        for (n, r) in self.ns.iter().zip(&self.recalls) {
            let _ = writeln!(s, "R@{n}\t{r:.3}");
        }
        s.push_str("query\tpositive\tretrieved\tcorrect\tdistance\n");
        for o in &self.outcomes {
            let flags: Vec<&str> = o.correct.iter().map(|&c| if c { "1" } else { "0" }).collect();
            let dists: Vec<String> = o.distances.iter().map(|d| format!("{d:.6}")).collect();
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}",
                o.query,
                u8::from(o.has_positive),
                o.retrieved.join(","),
                flags.join(","),
                dists.join(",")
            );
        }
        s
    }
}

/// Recall@N of `queries` against `db`: a query succeeds at `N` when any of
/// its `N` nearest database entries lies within `threshold` of it.
pub fn recall_at_n(
    db: &DescriptorDb,
    queries: &DescriptorDb,
    ns: &[usize],
    threshold: Threshold,
) -> Result<EvalReport> {
    if db.kind() != queries.kind() || db.dim() != queries.dim() && !queries.is_empty() {
        return Err(Error::shape(format!(
            "query descriptors ({}, dim {}) do not match the database ({}, dim {})",
            queries.kind(),
            queries.dim(),
            db.kind(),
            db.dim()
        )));
    }
    rank_and_score(db.records(), queries.records(), ns, threshold, |q, n| knn(db, queries.row(q), n))
}

/// Scores arbitrary rankings: `search(q, n)` returns the `n` best database
/// entries for query `q`.
pub(crate) fn rank_and_score<F>(
    db: &[SequenceRecord],
    queries: &[SequenceRecord],
    ns: &[usize],
    threshold: Threshold,
    search: F,
) -> Result<EvalReport>
where
    F: Fn(usize, usize) -> Result<Vec<Neighbor>> + Sync,
{
    if ns.is_empty() || ns.contains(&0) {
        return Err(Error::Config("recall needs at least one N, all >= 1".into()));
    }
    let mut sorted_ns = ns.to_vec();
    sorted_ns.sort_unstable();
    sorted_ns.dedup();
    let max_n = *sorted_ns.last().expect("non-empty");

    let outcomes = (0..queries.len())
        .into_par_iter()
        .map(|q| {
            let rec = &queries[q];
            let hits = search(q, max_n)?;
            Ok(QueryOutcome {
                query: rec.label().to_string(),
                has_positive: db.iter().any(|r| r.matches(rec, threshold)),
                retrieved: hits.iter().map(|h| db[h.index].label().to_string()).collect(),
                correct: hits.iter().map(|h| db[h.index].matches(rec, threshold)).collect(),
                distances: hits.iter().map(|h| h.distance).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let evaluated = outcomes.iter().filter(|o| o.has_positive).count();
    let recalls = sorted_ns
        .iter()
        .map(|&n| {
            let hits = outcomes.iter().filter(|o| o.has_positive && o.first_correct().is_some_and(|r| r <= n)).count();
            if evaluated == 0 {
                0.0
            } else {
                100.0 * hits as f64 / evaluated as f64
            }
        })
        .collect();
    Ok(EvalReport {
        ns: sorted_ns,
        recalls,
        threshold,
        evaluated,
        excluded: outcomes.len() - evaluated,
        outcomes,
        meta: Vec::new(),
    })
}
