//! Sample files and key=value metadata.
//!
//! A sample file has one sequence of `0`/`1` characters per line, or
//! `count<TAB>sequence` for repeated sequences. Lines starting with `#` and
//! blank lines are ignored. A sample-set file holds several samples
//! separated by blank lines.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{ArgError, Result};
use crate::genetics::{Allele, Sequence, State};

fn parse_line(line: &str, lineno: usize) -> Result<(Sequence, u32)> {
    let err = |message: String| ArgError::Parse {
        line: lineno,
        message,
    };
    let (count, body) = match line.split_once('\t') {
        Some((c, s)) => {
            let c: u32 = c
                .trim()
                .parse()
                .map_err(|_| err(format!("bad count {c:?}")))?;
            if c == 0 {
                return Err(err("count must be positive".into()));
            }
            (c, s.trim())
        }
        None => (1, line.trim()),
    };
    let alleles = body
        .chars()
        .map(|ch| match ch {
            '0' => Ok(Allele::Zero),
            '1' => Ok(Allele::One),
            other => Err(err(format!("character {other:?} is not 0 or 1"))),
        })
        .collect::<Result<Vec<_>>>()?;
    if alleles.is_empty() {
        return Err(err("empty sequence".into()));
    }
    let seq = Sequence::new(&alleles).map_err(|e| err(e.to_string()))?;
    Ok((seq, count))
}

fn collect(rows: Vec<(usize, Sequence, u32)>) -> Result<State> {
    let first = rows.first().ok_or_else(|| ArgError::Parse {
        line: 0,
        message: "sample has no sequences".into(),
    })?;
    let markers = first.1.len();
    for (lineno, s, _) in &rows {
        if s.len() != markers {
            return Err(ArgError::Parse {
                line: *lineno,
                message: format!("sequence of length {} in a sample of length {markers}", s.len()),
            });
        }
    }
    State::from_counts(markers, rows.into_iter().map(|(_, s, c)| (s, c)))
}

pub fn parse_sample(text: &str) -> Result<State> {
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (s, c) = parse_line(line, i + 1)?;
        rows.push((i + 1, s, c));
    }
    collect(rows)
}

pub fn parse_sample_set(text: &str) -> Result<Vec<State>> {
    let mut samples = Vec::new();
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.starts_with('#') {
            continue;
        }
        if line.trim().is_empty() {
            if !rows.is_empty() {
                samples.push(collect(std::mem::take(&mut rows))?);
            }
            continue;
        }
        let (s, c) = parse_line(line, i + 1)?;
        rows.push((i + 1, s, c));
    }
    if !rows.is_empty() {
        samples.push(collect(rows)?);
    }
    Ok(samples)
}

/// Sample file text; repeated sequences use the count syntax.
pub fn format_sample(state: &State) -> Result<String> {
    if state.has_non_ancestral() {
        return Err(ArgError::InvalidSequence(
            "sample files hold fully ancestral sequences only".into(),
        ));
    }
    let mut out = String::new();
    for (s, c) in state.entries() {
        if *c == 1 {
            let _ = writeln!(out, "{s}");
        } else {
            let _ = writeln!(out, "{c}\t{s}");
        }
    }
    Ok(out)
}

pub fn format_sample_set(samples: &[State]) -> Result<String> {
    let parts = samples.iter().map(format_sample).collect::<Result<Vec<_>>>()?;
    Ok(parts.join("\n"))
}

pub fn load_sample(path: &Path) -> Result<State> {
    parse_sample(&read(path)?)
}

pub fn load_sample_set(path: &Path) -> Result<Vec<State>> {
    parse_sample_set(&read(path)?)
}

pub fn save_sample(state: &State, path: &Path) -> Result<()> {
    write(path, &format_sample(state)?)
}

pub fn save_sample_set(samples: &[State], path: &Path) -> Result<()> {
    write(path, &format_sample_set(samples)?)
}

/// Rows of `0`/`1` lines, one per sequence, in the given order.
pub fn format_rows(rows: &[Sequence]) -> String {
    rows.iter().map(|s| format!("{s}\n")).collect()
}

pub fn format_metadata(entries: &BTreeMap<String, String>) -> String {
    entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

pub fn parse_metadata(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ArgError::Parse {
            line: i + 1,
            message: format!("expected key=value, got {line:?}"),
        })?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

pub fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| ArgError::io(path, e))
}

pub fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| ArgError::io(path, e))
}
