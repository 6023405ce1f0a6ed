//! Model file formats: GMM sets and total-variability models.
//!
//! GMM set grammar (states in id order, one block per state):
//!
//! ```text
//! GMMSET <N> <dim>
//! STATE <state_id> <phone_id> <hmm_position> <M>
//! <weight> <mean_1..mean_dim> <var_1..var_dim>     (M lines)
//! ```
//!
//! A bare GMM (such as a UBM) is a one-state set. The total-variability
//! format embeds one:
//!
//! ```text
//! TV <K> <D> <M>
//! <one-state GMM set block: the UBM with K components>
//! TMATRIX <k>
//! <M reals per line, D lines>                      (for k = 0..K-1)
//! ```
//!
//! Per-speaker adapted models are stored as a speaker-keyed collection of
//! GMM set blocks, speakers in lexicographic order:
//!
//! ```text
//! SPEAKERMODELS <num_speakers>
//! SPEAKER <speaker_id>
//! <GMM set block>
//! ```

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::featio::common::{fmt_real, write_atomic, Fields, LineReader};
use crate::gmm::{AuxModel, DiagonalGmm, StateMeta};
use crate::ivector::TotalVariability;

fn write_state_block(
    w: &mut dyn Write,
    state_id: usize,
    meta: StateMeta,
    gmm: &DiagonalGmm,
) -> Result<()> {
    writeln!(
        w,
        "STATE {} {} {} {}",
        state_id,
        meta.phone_id,
        meta.hmm_position,
        gmm.num_components()
    )?;
    let d = gmm.dim();
    let mut line = String::new();
    for m in 0..gmm.num_components() {
        line.clear();
        line.push_str(&fmt_real(gmm.weights()[m]));
        for i in 0..d {
            line.push(' ');
            line.push_str(&fmt_real(gmm.means()[[m, i]]));
        }
        for i in 0..d {
            line.push(' ');
            line.push_str(&fmt_real(gmm.vars()[[m, i]]));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

fn read_state_block(
    reader: &mut LineReader,
    expected_id: usize,
    dim: usize,
) -> Result<(StateMeta, DiagonalGmm)> {
    let line = reader.expect_line("STATE header")?;
    let mut f = Fields::new(reader, &line);
    f.expect_tag("STATE")?;
    let state_id = f.usize("state_id")?;
    let phone_id = f.u32("phone_id")?;
    let hmm_position = f.usize("hmm_position")?;
    let m = f.usize("component count")?;
    f.expect_end()?;
    if state_id != expected_id {
        return Err(reader.err(format!("expected state {expected_id}, found {state_id}")));
    }
    if hmm_position > 2 {
        return Err(reader.err(format!("hmm_position {hmm_position} outside {{0,1,2}}")));
    }
    if m == 0 {
        return Err(reader.err(format!("state {state_id} has no components")));
    }

    let mut weights = Array1::zeros(m);
    let mut means = Array2::zeros((m, dim));
    let mut vars = Array2::zeros((m, dim));
    for c in 0..m {
        let row = reader.expect_line("component line")?;
        let mut f = Fields::new(reader, &row);
        if f.remaining() != 1 + 2 * dim {
            return Err(reader.err(format!(
                "component line has {} fields, expected {} for dim {dim}",
                f.remaining(),
                1 + 2 * dim
            )));
        }
        weights[c] = f.finite_real("weight")?;
        for i in 0..dim {
            means[[c, i]] = f.finite_real("mean")?;
        }
        for i in 0..dim {
            vars[[c, i]] = f.finite_real("variance")?;
        }
    }
    let gmm = DiagonalGmm::new(weights, means, vars).map_err(|e| reader.err(e.to_string()))?;
    Ok((
        StateMeta {
            phone_id,
            hmm_position: hmm_position as u8,
        },
        gmm,
    ))
}

fn write_gmmset_body(w: &mut dyn Write, model: &AuxModel) -> Result<()> {
    writeln!(w, "GMMSET {} {}", model.num_states(), model.dim())?;
    for s in 0..model.num_states() {
        write_state_block(w, s, model.meta(s), model.state(s))?;
    }
    Ok(())
}

fn read_gmmset_body(reader: &mut LineReader) -> Result<AuxModel> {
    let line = reader.expect_line("GMMSET header")?;
    let mut f = Fields::new(reader, &line);
    f.expect_tag("GMMSET")?;
    let n = f.usize("state count")?;
    let dim = f.usize("dim")?;
    f.expect_end()?;
    if n == 0 {
        return Err(reader.err("GMMSET with zero states"));
    }
    let mut states = Vec::with_capacity(n);
    let mut metas = Vec::with_capacity(n);
    for s in 0..n {
        let (meta, gmm) = read_state_block(reader, s, dim)?;
        metas.push(meta);
        states.push(gmm);
    }
    AuxModel::new(states, metas).map_err(|e| reader.err(e.to_string()))
}

pub fn write_aux_model(model: &AuxModel, path: &Path) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "# gmm set")?;
        write_gmmset_body(w, model)
    })
}

pub fn read_aux_model(path: &Path) -> Result<AuxModel> {
    let mut reader = LineReader::open(path)?;
    let model = read_gmmset_body(&mut reader)?;
    if let Some(line) = reader.next_line()? {
        return Err(reader.err(format!("trailing content after model: {line:?}")));
    }
    Ok(model)
}

/// Writes a bare GMM as a one-state set.
pub fn write_gmm(gmm: &DiagonalGmm, path: &Path) -> Result<()> {
    let model = AuxModel::new(
        vec![gmm.clone()],
        vec![StateMeta { phone_id: 0, hmm_position: 0 }],
    )?;
    write_aux_model(&model, path)
}

/// Reads a one-state set back as a bare GMM.
pub fn read_gmm(path: &Path) -> Result<DiagonalGmm> {
    let model = read_aux_model(path)?;
    if model.num_states() != 1 {
        return Err(Error::invalid(
            "gmm file",
            format!("{}: expected a single-state set, found {}", path.display(), model.num_states()),
        ));
    }
    Ok(model.state(0).clone())
}

pub type AuxModelSet = BTreeMap<String, AuxModel>;

pub fn write_aux_model_set(set: &AuxModelSet, path: &Path) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "# per-speaker gmm sets")?;
        writeln!(w, "SPEAKERMODELS {}", set.len())?;
        for (speaker, model) in set {
            if speaker.is_empty() || speaker.contains(char::is_whitespace) {
                return Err(Error::invalid("speaker id", format!("bad speaker string {speaker:?}")));
            }
            writeln!(w, "SPEAKER {speaker}")?;
            write_gmmset_body(w, model)?;
        }
        Ok(())
    })
}

pub fn read_aux_model_set(path: &Path) -> Result<AuxModelSet> {
    let mut reader = LineReader::open(path)?;
    let line = reader.expect_line("SPEAKERMODELS header")?;
    let mut f = Fields::new(&reader, &line);
    f.expect_tag("SPEAKERMODELS")?;
    let n = f.usize("speaker count")?;
    f.expect_end()?;
    let mut set = AuxModelSet::new();
    for _ in 0..n {
        let line = reader.expect_line("SPEAKER header")?;
        let mut f = Fields::new(&reader, &line);
        f.expect_tag("SPEAKER")?;
        let speaker = f.token("speaker id")?.to_string();
        f.expect_end()?;
        let model = read_gmmset_body(&mut reader)?;
        if set.insert(speaker.clone(), model).is_some() {
            return Err(reader.err(format!("duplicate speaker {speaker}")));
        }
    }
    if let Some(line) = reader.next_line()? {
        return Err(reader.err(format!("trailing content after models: {line:?}")));
    }
    Ok(set)
}

pub fn write_tv_model(tv: &TotalVariability, path: &Path) -> Result<()> {
    write_atomic(path, |w| {
        let k = tv.ubm().num_components();
        let d = tv.ubm().dim();
        writeln!(w, "# total-variability model")?;
        writeln!(w, "TV {} {} {}", k, d, tv.ivector_dim())?;
        let ubm_model = AuxModel::new(
            vec![tv.ubm().clone()],
            vec![StateMeta { phone_id: 0, hmm_position: 0 }],
        )?;
        write_gmmset_body(w, &ubm_model)?;
        for (ki, t) in tv.loadings().iter().enumerate() {
            writeln!(w, "TMATRIX {ki}")?;
            let mut line = String::new();
            for row in t.rows() {
                line.clear();
                for (i, v) in row.iter().enumerate() {
                    if i > 0 {
                        line.push(' ');
                    }
                    line.push_str(&fmt_real(*v));
                }
                writeln!(w, "{line}")?;
            }
        }
        Ok(())
    })
}

pub fn read_tv_model(path: &Path) -> Result<TotalVariability> {
    let mut reader = LineReader::open(path)?;
    let line = reader.expect_line("TV header")?;
    let mut f = Fields::new(&reader, &line);
    f.expect_tag("TV")?;
    let k = f.usize("component count")?;
    let d = f.usize("feature dim")?;
    let m = f.usize("ivector dim")?;
    f.expect_end()?;

    let ubm_model = read_gmmset_body(&mut reader)?;
    if ubm_model.num_states() != 1 {
        return Err(reader.err("TV UBM block must be a single-state set"));
    }
    let ubm = ubm_model.state(0).clone();
    if ubm.num_components() != k || ubm.dim() != d {
        return Err(reader.err(format!(
            "UBM is {}x{}, TV header says {k}x{d}",
            ubm.num_components(),
            ubm.dim()
        )));
    }

    let mut loadings = Vec::with_capacity(k);
    for ki in 0..k {
        let line = reader.expect_line("TMATRIX header")?;
        let mut f = Fields::new(&reader, &line);
        f.expect_tag("TMATRIX")?;
        let found = f.usize("matrix index")?;
        f.expect_end()?;
        if found != ki {
            return Err(reader.err(format!("expected TMATRIX {ki}, found {found}")));
        }
        let mut t = Array2::zeros((d, m));
        for row in 0..d {
            let rline = reader.expect_line("loading row")?;
            let mut f = Fields::new(&reader, &rline);
            if f.remaining() != m {
                return Err(reader.err(format!(
                    "loading row has {} values, expected {m}",
                    f.remaining()
                )));
            }
            for col in 0..m {
                t[[row, col]] = f.finite_real("loading value")?;
            }
        }
        loadings.push(t);
    }
    if let Some(line) = reader.next_line()? {
        return Err(reader.err(format!("trailing content after model: {line:?}")));
    }
    TotalVariability::new(ubm, loadings, m).map_err(|e| reader.err(e.to_string()))
}
