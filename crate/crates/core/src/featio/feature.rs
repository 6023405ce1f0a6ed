//! Per-utterance feature matrices and the feature archive format.
//!
//! Archive grammar, one or more utterances in lexicographic id order:
//!
//! ```text
//! UTT <id> <num_frames> <dim>
//! <v1> <v2> ... <v_dim>     (num_frames lines)
//! ```

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::featio::common::{fmt_real, write_atomic, Fields, LineReader};

/// A `T x d` matrix of real-valued frames for one utterance.
///
/// All values are finite; every frame shares the dimension `d`. A zero
/// dimension is permitted so concatenation has an identity element.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    utterance_id: String,
    frames: Array2<f64>,
}

impl FeatureMatrix {
    pub fn new(utterance_id: impl Into<String>, frames: Array2<f64>) -> Result<Self> {
        let utterance_id = utterance_id.into();
        if utterance_id.is_empty() || utterance_id.contains(char::is_whitespace) {
            return Err(Error::invalid(
                "feature matrix",
                format!("bad utterance id {utterance_id:?}"),
            ));
        }
        if let Some(bad) = frames.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(
                "feature matrix",
                format!("utterance {utterance_id}: non-finite value {bad}"),
            ));
        }
        Ok(FeatureMatrix { utterance_id, frames })
    }

    pub fn utterance_id(&self) -> &str {
        &self.utterance_id
    }

    pub fn num_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }

    pub fn frames(&self) -> ArrayView2<'_, f64> {
        self.frames.view()
    }

    pub fn frame(&self, t: usize) -> ArrayView1<'_, f64> {
        self.frames.row(t)
    }

    pub fn into_frames(self) -> Array2<f64> {
        self.frames
    }

    /// Same content under a different utterance id.
    pub fn renamed(&self, utterance_id: impl Into<String>) -> Result<Self> {
        FeatureMatrix::new(utterance_id, self.frames.clone())
    }
}

/// Utterance-keyed archive; `BTreeMap` keeps lexicographic order everywhere.
pub type FeatureArchive = BTreeMap<String, FeatureMatrix>;

pub fn read_feature_archive(path: &Path) -> Result<FeatureArchive> {
    let mut reader = LineReader::open(path)?;
    let mut archive = FeatureArchive::new();
    while let Some(line) = reader.next_line()? {
        let mut f = Fields::new(&reader, &line);
        f.expect_tag("UTT")?;
        let id = f.token("utterance id")?.to_string();
        let num_frames = f.usize("num_frames")?;
        let dim = f.usize("dim")?;
        f.expect_end()?;

        let mut data = Vec::with_capacity(num_frames * dim);
        for _ in 0..num_frames {
            let row = reader.expect_line(&format!("frame of utterance {id}"))?;
            let mut f = Fields::new(&reader, &row);
            if f.remaining() != dim {
                return Err(reader.err(format!(
                    "utterance {id}: frame has {} values, header says dim {dim}",
                    f.remaining()
                )));
            }
            for _ in 0..dim {
                data.push(f.finite_real("feature value")?);
            }
        }
        let frames = Array2::from_shape_vec((num_frames, dim), data)
            .expect("shape checked during parse");
        let matrix = FeatureMatrix::new(id.clone(), frames)
            .map_err(|e| reader.err(e.to_string()))?;
        if archive.insert(id.clone(), matrix).is_some() {
            return Err(reader.err(format!("duplicate utterance {id}")));
        }
    }
    Ok(archive)
}

pub fn write_feature_archive(archive: &FeatureArchive, path: &Path) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "# feature archive; log-domain values use natural log")?;
        for (id, matrix) in archive {
            if id != matrix.utterance_id() {
                return Err(Error::Mismatch(format!(
                    "archive key {id:?} does not match utterance id {:?}",
                    matrix.utterance_id()
                )));
            }
            write_matrix(w, matrix)?;
        }
        Ok(())
    })
}

fn write_matrix(w: &mut dyn Write, matrix: &FeatureMatrix) -> Result<()> {
    writeln!(
        w,
        "UTT {} {} {}",
        matrix.utterance_id(),
        matrix.num_frames(),
        matrix.dim()
    )?;
    let mut line = String::new();
    for row in matrix.frames().rows() {
        line.clear();
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            line.push_str(&fmt_real(*v));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}
