//! Argument parsers and the small key/value text formats the CLI adds on
//! top of the library's archives: word maps (`<key> <token...>`) and gain
//! tables (`<key> <real>`).

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use gmmdkit::featio::common::{fmt_real, write_atomic, Fields, LineReader};
use gmmdkit::featio::FeatureArchive;

/// Context offsets such as `-10,-5..5,10`; ranges are inclusive.
pub fn parse_offsets(text: &str) -> Result<Vec<i32>> {
    let mut out = Vec::new();
    for tok in text.split(',') {
        let tok = tok.trim();
        ensure!(!tok.is_empty(), "empty offset in {text:?}");
        // Split on the `..` of a range; a leading minus sign is part of the
        // first number, so search from index 1.
        if let Some(pos) = tok[1..].find("..").map(|p| p + 1) {
            let lo: i32 = tok[..pos].parse().with_context(|| format!("bad offset range {tok:?}"))?;
            let hi: i32 = tok[pos + 2..].parse().with_context(|| format!("bad offset range {tok:?}"))?;
            ensure!(lo <= hi, "offset range {tok:?} is reversed");
            out.extend(lo..=hi);
        } else {
            out.push(tok.parse().with_context(|| format!("bad offset {tok:?}"))?);
        }
    }
    Ok(out)
}

/// Interpolation-weight grids: either `start:step:end` (inclusive, evenly
/// spaced) or a comma-separated list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        ensure!(parts.len() == 3, "grid {text:?} is not start:step:end");
        let start: f64 = parts[0].parse().context("bad grid start")?;
        let step: f64 = parts[1].parse().context("bad grid step")?;
        let end: f64 = parts[2].parse().context("bad grid end")?;
        ensure!(step > 0.0 && end >= start, "grid {text:?} does not ascend");
        let n = ((end - start) / step).round() as usize;
        return Ok((0..=n).map(|k| start + k as f64 * step).collect());
    }
    text.split(',')
        .map(|t| t.trim().parse::<f64>().with_context(|| format!("bad grid value {t:?}")))
        .collect()
}

/// `<key> <token...>` per line: utterance transcripts or speaker→utterance
/// maps. The token list may be empty.
pub fn read_word_map(path: &Path) -> Result<BTreeMap<String, Vec<String>>> {
    let mut reader = LineReader::open(path)?;
    let mut map = BTreeMap::new();
    while let Some(line) = reader.next_line()? {
        let mut toks = line.split_whitespace().map(str::to_string);
        let key = toks.next().expect("reader skips blank lines");
        if map.insert(key.clone(), toks.collect()).is_some() {
            bail!("{}: duplicate key {key}", path.display());
        }
    }
    Ok(map)
}

pub fn write_word_map(map: &BTreeMap<String, Vec<String>>, header: &str, path: &Path) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "# {header}")?;
        for (key, toks) in map {
            write!(w, "{key}")?;
            for t in toks {
                write!(w, " {t}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    })?;
    Ok(())
}

/// `<key> <real>` per line.
pub fn read_real_map(path: &Path) -> Result<BTreeMap<String, f64>> {
    let mut reader = LineReader::open(path)?;
    let mut map = BTreeMap::new();
    while let Some(line) = reader.next_line()? {
        let mut f = Fields::new(&reader, &line);
        let key = f.token("key")?.to_string();
        let value = f.finite_real("value")?;
        f.expect_end()?;
        if map.insert(key.clone(), value).is_some() {
            bail!("{}: duplicate key {key}", path.display());
        }
    }
    Ok(map)
}

pub fn write_real_map(map: &BTreeMap<String, f64>, header: &str, path: &Path) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "# {header}")?;
        for (key, value) in map {
            writeln!(w, "{key} {}", fmt_real(*value))?;
        }
        Ok(())
    })?;
    Ok(())
}

/// Inverts a speaker→utterances map, rejecting utterances claimed twice.
pub fn utterance_speakers(spk2utt: &BTreeMap<String, Vec<String>>) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (speaker, utts) in spk2utt {
        for utt in utts {
            if let Some(other) = map.insert(utt.clone(), speaker.clone()) {
                bail!("utterance {utt} is listed under speakers {other} and {speaker}");
            }
        }
    }
    Ok(map)
}

/// The named utterances of an archive, cloned into a new archive; every
/// name must be present.
pub fn archive_subset(archive: &FeatureArchive, utts: &[String]) -> Result<FeatureArchive> {
    let mut out = FeatureArchive::new();
    for utt in utts {
        let x = archive
            .get(utt)
            .with_context(|| format!("utterance {utt} is missing from the feature archive"))?;
        out.insert(utt.clone(), x.clone());
    }
    Ok(out)
}

/// Writes a report pair: the human-readable text to stdout, the
/// tab-separated table to `out` when given.
pub fn emit_report(text: &str, table: &str, out: Option<&Path>) -> Result<()> {
    print!("{text}");
    if let Some(path) = out {
        write_atomic(path, |w| {
            w.write_all(table.as_bytes())?;
            Ok(())
        })?;
    }
    Ok(())
}
