//! Deterministic scorer process for exercising the line protocol.
//!
//! `slideret-stub-scorer <mode>` where mode is one of:
//! `zero`, `rank`, `neg-rank`, `caption-length`, `lexical`, `omit-first`,
//! `garbage`, `exit`, `hang`.

use std::io::{self, BufRead, Write};

use slideret_core::pipeline::{lexical_overlap, DocScore, ScorerRequest, ScorerResponse};

fn main() {
    let mode = std::env::args().nth(1).unwrap_or_else(|| "zero".to_string());
    let stdin = io::stdin();
    let mut stdout = io::stdout().lock();
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        let req: ScorerRequest = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("stub scorer: bad request: {e}");
                continue;
            }
        };
        let score = |i: usize, c: &slideret_core::pipeline::Candidate| match mode.as_str() {
            "rank" => (i + 1) as f64,
            "neg-rank" => -((i + 1) as f64),
            "caption-length" => c.caption.len() as f64,
            "lexical" => lexical_overlap(&req.text, &c.caption),
            _ => 0.0,
        };
        let mut scores: Vec<DocScore> = req
            .candidates
            .iter()
            .enumerate()
            .map(|(i, c)| DocScore {
                doc_id: c.doc_id.clone(),
                score: score(i, c),
            })
            .collect();
        match mode.as_str() {
            "omit-first" if !scores.is_empty() => {
                scores.remove(0);
            }
            "garbage" => {
                writeln!(stdout, "not json").unwrap();
                stdout.flush().unwrap();
                continue;
            }
            "exit" => std::process::exit(3),
            "hang" => std::thread::sleep(std::time::Duration::from_secs(3600)),
            _ => {}
        }
        let resp = ScorerResponse {
            query_id: req.query_id,
            scores,
        };
        writeln!(stdout, "{}", serde_json::to_string(&resp).unwrap()).unwrap();
        stdout.flush().unwrap();
    }
}
