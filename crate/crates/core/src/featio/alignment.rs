//! Frame-level alignments pairing each frame with a state label.
//!
//! File grammar, utterances in lexicographic id order:
//!
//! ```text
//! ALI <id> <num_frames>
//! <state_id> <phone_id> <hmm_position>     (num_frames lines)
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::featio::common::{write_atomic, Fields, LineReader};

/// One frame's label: the aligned HMM state, its phone, and the position of
/// the state inside the phone HMM (0, 1, or 2).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameLabel {
    pub state_id: usize,
    pub phone_id: u32,
    pub hmm_position: u8,
}

/// Per-frame labels for one utterance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentTrack {
    utterance_id: String,
    labels: Vec<FrameLabel>,
}

impl AlignmentTrack {
    pub fn new(utterance_id: impl Into<String>, labels: Vec<FrameLabel>) -> Result<Self> {
        let utterance_id = utterance_id.into();
        if let Some(bad) = labels.iter().find(|l| l.hmm_position > 2) {
            return Err(Error::invalid(
                "alignment",
                format!(
                    "utterance {utterance_id}: hmm_position {} outside {{0,1,2}}",
                    bad.hmm_position
                ),
            ));
        }
        Ok(AlignmentTrack { utterance_id, labels })
    }

    pub fn utterance_id(&self) -> &str {
        &self.utterance_id
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[FrameLabel] {
        &self.labels
    }
}

pub type AlignmentSet = BTreeMap<String, AlignmentTrack>;

pub fn read_alignment_set(path: &Path) -> Result<AlignmentSet> {
    let mut reader = LineReader::open(path)?;
    let mut set = AlignmentSet::new();
    while let Some(line) = reader.next_line()? {
        let mut f = Fields::new(&reader, &line);
        f.expect_tag("ALI")?;
        let id = f.token("utterance id")?.to_string();
        let num_frames = f.usize("num_frames")?;
        f.expect_end()?;

        let mut labels = Vec::with_capacity(num_frames);
        for _ in 0..num_frames {
            let row = reader.expect_line(&format!("frame label of utterance {id}"))?;
            let mut f = Fields::new(&reader, &row);
            let state_id = f.usize("state_id")?;
            let phone_id = f.u32("phone_id")?;
            let hmm_position = f.usize("hmm_position")?;
            f.expect_end()?;
            if hmm_position > 2 {
                return Err(reader.err(format!(
                    "utterance {id}: hmm_position {hmm_position} outside {{0,1,2}}"
                )));
            }
            labels.push(FrameLabel {
                state_id,
                phone_id,
                hmm_position: hmm_position as u8,
            });
        }
        let track = AlignmentTrack::new(id.clone(), labels).map_err(|e| reader.err(e.to_string()))?;
        if set.insert(id.clone(), track).is_some() {
            return Err(reader.err(format!("duplicate utterance {id}")));
        }
    }
    Ok(set)
}

pub fn write_alignment_set(set: &AlignmentSet, path: &Path) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "# alignments: state_id phone_id hmm_position per frame")?;
        for (id, track) in set {
            if id != track.utterance_id() {
                return Err(Error::Mismatch(format!(
                    "alignment key {id:?} does not match utterance id {:?}",
                    track.utterance_id()
                )));
            }
            writeln!(w, "ALI {} {}", id, track.len())?;
            for l in track.labels() {
                writeln!(w, "{} {} {}", l.state_id, l.phone_id, l.hmm_position)?;
            }
        }
        Ok(())
    })
}
