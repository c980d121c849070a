use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{Cleaner, CorpusError, ParallelExample};

fn read_bytes(path: &Path) -> Result<Vec<u8>, CorpusError> {
    std::fs::read(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Splits into lines, validating UTF-8 per line so errors carry both the
/// byte offset within the file and the 1-based line number.
fn utf8_lines(bytes: &[u8]) -> Result<Vec<&str>, CorpusError> {
    let mut out = Vec::new();
    let mut offset = 0;
    for (i, raw) in bytes.split(|&b| b == b'\n').enumerate() {
        let line = std::str::from_utf8(raw).map_err(|e| CorpusError::InvalidUtf8 {
            offset: offset + e.valid_up_to(),
            line: Some(i + 1),
        })?;
        out.push(line.strip_suffix('\r').unwrap_or(line));
        offset += raw.len() + 1;
    }
    if bytes.ends_with(b"\n") || bytes.is_empty() {
        out.pop();
    }
    Ok(out)
}

/// Parses `l1<TAB>l2[<TAB>cs]` lines. Blank lines are skipped.
pub fn parse_parallel_tsv(bytes: &[u8], cleaner: &Cleaner) -> Result<Vec<ParallelExample>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in utf8_lines(bytes)?.into_iter().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if !(2..=3).contains(&cols.len()) {
            return Err(CorpusError::ColumnCount {
                line: line_no,
                found: cols.len(),
            });
        }
        let field = |text: &str, name: &'static str| {
            let toks = cleaner.clean(text);
            if toks.is_empty() {
                Err(CorpusError::EmptyField { line: line_no, field: name })
            } else {
                Ok(toks)
            }
        };
        let l1 = field(cols[0], "l1")?;
        let l2 = field(cols[1], "l2")?;
        let cs = cols.get(2).map(|c| field(c, "cs")).transpose()?;
        out.push(ParallelExample { l1, l2, cs });
    }
    Ok(out)
}

pub fn load_parallel_tsv(path: impl AsRef<Path>, cleaner: &Cleaner) -> Result<Vec<ParallelExample>, CorpusError> {
    parse_parallel_tsv(&read_bytes(path.as_ref())?, cleaner)
}

/// Parses a POS sidecar and checks it line-by-line against `corpus`.
pub fn parse_pos_lines(bytes: &[u8], corpus: &[Vec<String>]) -> Result<Vec<Vec<String>>, CorpusError> {
    let lines = utf8_lines(bytes)?;
    if lines.len() != corpus.len() {
        return Err(CorpusError::LineCount {
            what: "pos sidecar",
            found: lines.len(),
            expected: corpus.len(),
        });
    }
    lines
        .into_iter()
        .zip(corpus)
        .enumerate()
        .map(|(i, (line, tokens))| {
            let tags: Vec<String> = line.split_whitespace().map(str::to_string).collect();
            if tags.len() != tokens.len() {
                return Err(CorpusError::TagCount {
                    line: i + 1,
                    tags: tags.len(),
                    tokens: tokens.len(),
                });
            }
            Ok(tags)
        })
        .collect()
}

pub fn load_pos_file(path: impl AsRef<Path>, corpus: &[Vec<String>]) -> Result<Vec<Vec<String>>, CorpusError> {
    parse_pos_lines(&read_bytes(path.as_ref())?, corpus)
}

/// Whitespace-tokenized lines, one utterance per line (blank lines kept
/// as empty utterances so sidecars stay aligned).
pub fn read_token_lines(path: impl AsRef<Path>) -> Result<Vec<Vec<String>>, CorpusError> {
    let bytes = read_bytes(path.as_ref())?;
    Ok(utf8_lines(&bytes)?
        .into_iter()
        .map(|l| l.split_whitespace().map(str::to_string).collect())
        .collect())
}

pub fn write_token_lines<S: AsRef<[String]>>(path: impl AsRef<Path>, lines: &[S]) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    for l in lines {
        writeln!(w, "{}", l.as_ref().join(" ")).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}
