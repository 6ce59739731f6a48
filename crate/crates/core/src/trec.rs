//! TREC run files: `query_id Q0 doc_id rank score tag`.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::{Error, RankedEntry, RankedList, Result};

/// Formats lists in the given order; entries keep their own ranks.
pub fn format_run(lists: &[RankedList], tag: &str) -> String {
    let mut out = String::new();
    for l in lists {
        for e in &l.entries {
            writeln!(out, "{} Q0 {} {} {} {}", l.query_id, e.doc_id, e.rank, e.score, tag).unwrap();
        }
    }
    out
}

pub fn write_run(path: impl AsRef<Path>, lists: &[RankedList], tag: &str) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_run(lists, tag)).map_err(|e| Error::io(path, e))
}

/// Parses a run, grouping lines per query (ascending query id) and ordering
/// each list by its rank column.
pub fn parse_run(text: &str, path: &Path) -> Result<Vec<RankedList>> {
    let mut grouped: BTreeMap<String, (String, Vec<(usize, RankedEntry)>)> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let [qid, _q0, doc, rank, score, tag] = f[..] else {
            return Err(Error::parse(path, lineno, "expected `query_id Q0 doc_id rank score tag`"));
        };
        let rank: usize = rank
            .parse()
            .ok()
            .filter(|&r| r >= 1)
            .ok_or_else(|| Error::parse(path, lineno, format!("bad rank `{rank}`")))?;
        let score: f64 = score
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| Error::parse(path, lineno, format!("bad score `{score}`")))?;
        let slot = grouped
            .entry(qid.to_string())
            .or_insert_with(|| (tag.to_string(), Vec::new()));
        slot.1.push((
            lineno,
            RankedEntry {
                doc_id: doc.to_string(),
                score,
                rank,
            },
        ));
    }
    let mut lists = Vec::with_capacity(grouped.len());
    for (qid, (tag, mut entries)) in grouped {
        entries.sort_by_key(|(_, e)| e.rank);
        let mut seen = HashSet::new();
        for (i, (lineno, e)) in entries.iter().enumerate() {
            if !seen.insert(e.doc_id.as_str()) {
                return Err(Error::parse(path, *lineno, format!("doc `{}` repeated for query `{qid}`", e.doc_id)));
            }
            if e.rank != i + 1 {
                return Err(Error::parse(path, *lineno, format!("ranks for query `{qid}` are not contiguous from 1")));
            }
        }
        lists.push(RankedList {
            query_id: qid,
            producer: tag,
            entries: entries.into_iter().map(|(_, e)| e).collect(),
        });
    }
    Ok(lists)
}

pub fn read_run(path: impl AsRef<Path>) -> Result<Vec<RankedList>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_run(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let lists = vec![
            RankedList::from_ordered("q1", "x", [("a".to_string(), 2.5), ("b".to_string(), 0.125)]),
            RankedList::from_ordered("q2", "x", [("c".to_string(), -1.0)]),
        ];
        let text = format_run(&lists, "tag");
        assert!(text.starts_with("q1 Q0 a 1 2.5 tag\n"));
        let back = parse_run(&text, Path::new("run")).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].entries, lists[0].entries);
        assert_eq!(back[1].producer, "tag");
    }

    #[test]
    fn malformed_line_reports_number() {
        let err = parse_run("q1 Q0 a 1 1.0 t\nq1 Q0 b two 1.0 t\n", Path::new("run")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_run("q1 Q0 a 1\n", Path::new("run")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn out_of_order_lines_sorted_by_rank() {
        let back = parse_run("q Q0 b 2 1 t\nq Q0 a 1 2 t\n", Path::new("run")).unwrap();
        let ids: Vec<_> = back[0].doc_ids().collect();
        assert_eq!(ids, ["a", "b"]);
        assert!(parse_run("q Q0 b 3 1 t\nq Q0 a 1 2 t\n", Path::new("run")).is_err());
    }
}
