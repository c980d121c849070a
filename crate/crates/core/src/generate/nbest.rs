use std::path::Path;

/// One line of an N-best file: `example<TAB>rank<TAB>logprob<TAB>tokens`,
/// rank 1-based.
#[derive(Clone, Debug, PartialEq)]
pub struct NbestEntry {
    pub example: usize,
    pub rank: usize,
    pub log_prob: f64,
    pub tokens: Vec<String>,
}

pub fn format_nbest_line(e: &NbestEntry) -> String {
    format!("{}\t{}\t{:.6}\t{}", e.example, e.rank, e.log_prob, e.tokens.join(" "))
}

pub fn parse_nbest(text: &str) -> Result<Vec<NbestEntry>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(n, l)| {
            let cols: Vec<&str> = l.splitn(4, '\t').collect();
            let [ex, rank, lp, toks] = cols[..] else {
                return Err(format!("line {}: expected 4 columns", n + 1));
            };
            let field = |what: &str| format!("line {}: bad {what}", n + 1);
            let rank: usize = rank.parse().map_err(|_| field("rank"))?;
            if rank == 0 {
                return Err(field("rank (ranks start at 1)"));
            }
            Ok(NbestEntry {
                example: ex.parse().map_err(|_| field("example index"))?,
                rank,
                log_prob: lp.parse().map_err(|_| field("log-probability"))?,
                tokens: toks.split_whitespace().map(String::from).collect(),
            })
        })
        .collect()
}

pub fn write_nbest(path: impl AsRef<Path>, entries: &[NbestEntry]) -> std::io::Result<()> {
    let mut out = String::new();
    for e in entries {
        out.push_str(&format_nbest_line(e));
        out.push('\n');
    }
    std::fs::write(path, out)
}

pub fn read_nbest(path: impl AsRef<Path>) -> Result<Vec<NbestEntry>, String> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_nbest(&text).map_err(|e| format!("{}: {e}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let e = NbestEntry {
            example: 3,
            rank: 2,
            log_prob: -1.25,
            tokens: vec!["我".into(), "like".into()],
        };
        let line = format_nbest_line(&e);
        assert_eq!(line, "3\t2\t-1.250000\t我 like");
        assert_eq!(parse_nbest(&line).unwrap(), vec![e]);
        assert!(parse_nbest("1\t0\t0\tx").is_err());
        assert!(parse_nbest("1\t1\tx").is_err());
        assert_eq!(parse_nbest("0\t1\t0\t").unwrap()[0].tokens.len(), 0);
    }
}
