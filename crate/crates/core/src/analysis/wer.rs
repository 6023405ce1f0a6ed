//! Word error rate scoring by minimum edit distance, and relative WER
//! reduction reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Edit-distance alignment counts for one or more utterances.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EditCounts {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub reference_words: usize,
}

impl EditCounts {
    pub fn errors(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }

    pub fn add(&mut self, other: &EditCounts) {
        self.substitutions += other.substitutions;
        self.insertions += other.insertions;
        self.deletions += other.deletions;
        self.reference_words += other.reference_words;
    }

    /// Fraction of errors per reference word; 0 for an empty, error-free
    /// reference.
    pub fn wer(&self) -> f64 {
        if self.reference_words == 0 {
            if self.errors() == 0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.errors() as f64 / self.reference_words as f64
        }
    }
}

/// Unit-cost alignment. The backtrace prefers substitution over insertion
/// over deletion, making the split among error types deterministic.
fn align_counts(reference: &[String], hypothesis: &[String]) -> EditCounts {
    let n = reference.len();
    let m = hypothesis.len();
    let mut dist = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in dist.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        dist[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = dist[i - 1][j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            let ins = dist[i][j - 1] + 1;
            let del = dist[i - 1][j] + 1;
            dist[i][j] = sub.min(ins).min(del);
        }
    }

    let mut counts = EditCounts {
        reference_words: n,
        ..EditCounts::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let cost = usize::from(reference[i - 1] != hypothesis[j - 1]);
            if dist[i][j] == dist[i - 1][j - 1] + cost {
                if cost == 1 {
                    counts.substitutions += 1;
                }
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if j > 0 && dist[i][j] == dist[i][j - 1] + 1 {
            counts.insertions += 1;
            j -= 1;
        } else {
            counts.deletions += 1;
            i -= 1;
        }
    }
    counts
}

/// Corpus-level WER report with per-utterance counts.
#[derive(Debug, Clone, PartialEq)]
pub struct WerReport {
    pub totals: EditCounts,
    pub per_utterance: BTreeMap<String, EditCounts>,
}

impl WerReport {
    pub fn wer(&self) -> f64 {
        self.totals.wer()
    }

    pub fn text(&self) -> String {
        let t = &self.totals;
        format!(
            "WER {:.2}% | {} ref words | {} sub, {} ins, {} del over {} utterances\n",
            100.0 * t.wer(),
            t.reference_words,
            t.substitutions,
            t.insertions,
            t.deletions,
            self.per_utterance.len()
        )
    }

    /// One tab-separated record per utterance plus a TOTAL row.
    pub fn table(&self) -> String {
        let mut out = String::from("utterance\tref_words\tsub\tins\tdel\twer\n");
        for (id, c) in &self.per_utterance {
            let _ = writeln!(
                out,
                "{id}\t{}\t{}\t{}\t{}\t{:.6}",
                c.reference_words, c.substitutions, c.insertions, c.deletions, c.wer()
            );
        }
        let t = &self.totals;
        let _ = writeln!(
            out,
            "TOTAL\t{}\t{}\t{}\t{}\t{:.6}",
            t.reference_words, t.substitutions, t.insertions, t.deletions, t.wer()
        );
        out
    }
}

/// Scores hypotheses against references. A missing hypothesis counts as an
/// empty one (all deletions); a hypothesis without a reference is an error.
pub fn wer_score(
    refs: &BTreeMap<String, Vec<String>>,
    hyps: &BTreeMap<String, Vec<String>>,
) -> Result<WerReport> {
    if refs.is_empty() {
        return Err(Error::invalid("references", "empty reference set"));
    }
    if let Some(id) = hyps.keys().find(|id| !refs.contains_key(*id)) {
        return Err(Error::Mismatch(format!(
            "hypothesis for unknown utterance {id}"
        )));
    }
    let empty: Vec<String> = Vec::new();
    let mut report = WerReport {
        totals: EditCounts::default(),
        per_utterance: BTreeMap::new(),
    };
    for (id, reference) in refs {
        let hyp = hyps.get(id).unwrap_or(&empty);
        let counts = align_counts(reference, hyp);
        report.totals.add(&counts);
        report.per_utterance.insert(id.clone(), counts);
    }
    if report.totals.reference_words == 0 {
        return Err(Error::invalid("references", "no reference words"));
    }
    Ok(report)
}

/// Relative WER reduction in percent: `100 (base - sys) / base`.
pub fn relative_reduction(baseline_wer: f64, system_wer: f64) -> Result<f64> {
    if baseline_wer == 0.0 {
        return Err(Error::invalid("baseline WER", "zero baseline leaves the reduction undefined"));
    }
    Ok(100.0 * (baseline_wer - system_wer) / baseline_wer)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerWerr {
    pub speaker: String,
    pub baseline_wer: f64,
    pub system_wer: f64,
    /// None when the speaker's baseline WER is zero.
    pub werr: Option<f64>,
    /// Adaptation likelihood gain, when supplied, for paired exports.
    pub likelihood_gain: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WerrReport {
    pub baseline_wer: f64,
    pub system_wer: f64,
    pub werr: f64,
    pub per_speaker: Vec<SpeakerWerr>,
}

impl WerrReport {
    pub fn text(&self) -> String {
        let mut out = format!(
            "baseline WER {:.2}% -> system WER {:.2}%: relative reduction {:.1}%\n",
            100.0 * self.baseline_wer,
            100.0 * self.system_wer,
            self.werr
        );
        for s in &self.per_speaker {
            let werr = s
                .werr
                .map(|w| format!("{w:.1}%"))
                .unwrap_or_else(|| "n/a".into());
            let gain = s
                .likelihood_gain
                .map(|g| format!(", gain {g:.6}"))
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "  speaker {}: {:.2}% -> {:.2}% ({werr}{gain})",
                s.speaker,
                100.0 * s.baseline_wer,
                100.0 * s.system_wer
            );
        }
        out
    }

    pub fn table(&self) -> String {
        let mut out = String::from("speaker\tbaseline_wer\tsystem_wer\twerr\tlikelihood_gain\n");
        for s in &self.per_speaker {
            let werr = s.werr.map(|w| format!("{w:.6}")).unwrap_or_else(|| "n/a".into());
            let gain = s
                .likelihood_gain
                .map(|g| format!("{g:.6}"))
                .unwrap_or_else(|| "n/a".into());
            let _ = writeln!(
                out,
                "{}\t{:.6}\t{:.6}\t{werr}\t{gain}",
                s.speaker, s.baseline_wer, s.system_wer
            );
        }
        let _ = writeln!(
            out,
            "TOTAL\t{:.6}\t{:.6}\t{:.6}\tn/a",
            self.baseline_wer, self.system_wer, self.werr
        );
        out
    }
}

/// Compares two scoring runs over the same references. With a
/// speaker-to-utterances map, also reports per-speaker reductions,
/// optionally paired with per-speaker likelihood gains.
pub fn werr_report(
    baseline: &WerReport,
    system: &WerReport,
    spk2utt: Option<&BTreeMap<String, Vec<String>>>,
    gains: Option<&BTreeMap<String, f64>>,
) -> Result<WerrReport> {
    if baseline.per_utterance.len() != system.per_utterance.len()
        || baseline
            .per_utterance
            .iter()
            .zip(&system.per_utterance)
            .any(|((ia, ca), (ib, cb))| ia != ib || ca.reference_words != cb.reference_words)
    {
        return Err(Error::Mismatch(
            "baseline and system were scored against different references".into(),
        ));
    }
    let werr = relative_reduction(baseline.wer(), system.wer())?;

    let mut per_speaker = Vec::new();
    if let Some(map) = spk2utt {
        for (speaker, utts) in map {
            let mut base = EditCounts::default();
            let mut sys = EditCounts::default();
            for utt in utts {
                let cb = baseline.per_utterance.get(utt).ok_or_else(|| {
                    Error::Mismatch(format!("speaker {speaker}: utterance {utt} was not scored"))
                })?;
                base.add(cb);
                sys.add(&system.per_utterance[utt]);
            }
            let (bw, sw) = (base.wer(), sys.wer());
            per_speaker.push(SpeakerWerr {
                speaker: speaker.clone(),
                baseline_wer: bw,
                system_wer: sw,
                werr: (bw != 0.0).then(|| 100.0 * (bw - sw) / bw),
                likelihood_gain: gains.and_then(|g| g.get(speaker).copied()),
            });
        }
    }
    Ok(WerrReport {
        baseline_wer: baseline.wer(),
        system_wer: system.wer(),
        werr,
        per_speaker,
    })
}
