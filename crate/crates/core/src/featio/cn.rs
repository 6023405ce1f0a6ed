//! Confusion network files.
//!
//! ```text
//! CN <id> <num_bins>
//! BIN <bin_index> <num_entries>
//! <symbol_id> <posterior>
//! ```
//!
//! Posteriors are plain probabilities; each bin sums to one.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::featio::common::{fmt_real, write_atomic, Fields, LineReader};
use crate::lattice::ConfusionNetwork;

pub type ConfusionNetworkSet = BTreeMap<String, ConfusionNetwork>;

pub fn read_confusion_networks(path: &Path) -> Result<ConfusionNetworkSet> {
    let mut reader = LineReader::open(path)?;
    let mut set = ConfusionNetworkSet::new();
    while let Some(line) = reader.next_line()? {
        let mut f = Fields::new(&reader, &line);
        f.expect_tag("CN")?;
        let id = f.token("utterance id")?.to_string();
        let num_bins = f.usize("num_bins")?;
        f.expect_end()?;

        let mut bins = Vec::with_capacity(num_bins);
        for k in 0..num_bins {
            let row = reader.expect_line(&format!("bin header of utterance {id}"))?;
            let mut f = Fields::new(&reader, &row);
            f.expect_tag("BIN")?;
            let index = f.usize("bin index")?;
            let entries = f.usize("num_entries")?;
            f.expect_end()?;
            if index != k {
                return Err(reader.err(format!("bin index {index} out of order, expected {k}")));
            }
            let mut bin = BTreeMap::new();
            for _ in 0..entries {
                let row = reader.expect_line(&format!("bin entry of utterance {id}"))?;
                let mut f = Fields::new(&reader, &row);
                let sym = f.u32("symbol_id")?;
                let mass = f.finite_real("posterior")?;
                f.expect_end()?;
                if bin.insert(sym, mass).is_some() {
                    return Err(reader.err(format!("duplicate symbol {sym} in bin {k}")));
                }
            }
            bins.push(bin);
        }
        let cn = ConfusionNetwork::new(id.clone(), bins).map_err(|e| reader.err(e.to_string()))?;
        if set.insert(id.clone(), cn).is_some() {
            return Err(reader.err(format!("duplicate utterance {id}")));
        }
    }
    Ok(set)
}

pub fn write_confusion_networks(set: &ConfusionNetworkSet, path: &Path) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "# confusion networks; posteriors are probabilities")?;
        for (id, cn) in set {
            if id != cn.utterance_id() {
                return Err(Error::Mismatch(format!(
                    "confusion network key {id:?} does not match utterance id {:?}",
                    cn.utterance_id()
                )));
            }
            writeln!(w, "CN {} {}", id, cn.num_bins())?;
            for (k, bin) in cn.bins().iter().enumerate() {
                writeln!(w, "BIN {} {}", k, bin.len())?;
                for (sym, mass) in bin {
                    writeln!(w, "{} {}", sym, fmt_real(*mass))?;
                }
            }
        }
        Ok(())
    })
}
