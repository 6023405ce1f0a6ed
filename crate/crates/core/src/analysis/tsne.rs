//! Export of labelled feature vectors for external embedding tools.

use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::featio::common::fmt_real;
use crate::featio::SymbolTable;

const VOWELS: &[&str] = &[
    "UH", "OW", "AO", "EY", "ER", "AA", "AY", "IY", "EH", "AE", "IH", "AH",
];
const CONSONANTS_1: &[&str] = &["L", "R", "M", "N", "NG", "W"];
const CONSONANTS_2: &[&str] = &["P", "T", "D", "K", "CH", "F", "V", "TH", "S", "Z", "SH"];

/// Phone subsets used to keep embedding plots readable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhoneGroup {
    Vowels,
    Consonants1,
    Consonants2,
}

impl PhoneGroup {
    pub fn members(self) -> &'static [&'static str] {
        match self {
            PhoneGroup::Vowels => VOWELS,
            PhoneGroup::Consonants1 => CONSONANTS_1,
            PhoneGroup::Consonants2 => CONSONANTS_2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PhoneGroup::Vowels => "vowels",
            PhoneGroup::Consonants1 => "consonants-1",
            PhoneGroup::Consonants2 => "consonants-2",
        }
    }

    fn contains(self, phone: &str) -> bool {
        self.members().contains(&phone)
    }
}

impl fmt::Display for PhoneGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PhoneGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vowels" => Ok(PhoneGroup::Vowels),
            "consonants-1" => Ok(PhoneGroup::Consonants1),
            "consonants-2" => Ok(PhoneGroup::Consonants2),
            other => Err(Error::invalid(
                "phone group",
                format!("unknown group {other:?}; expected vowels, consonants-1 or consonants-2"),
            )),
        }
    }
}

/// Renders the vectors whose frame label matches `hmm_position` and whose
/// phone belongs to `group` as a tab-separated table, one labelled vector
/// per row. `labels[i]` is the (phone id, HMM position) of `vectors` row i.
pub fn tsne_export(
    vectors: ArrayView2<'_, f64>,
    labels: &[(u32, u8)],
    phones: &SymbolTable,
    hmm_position: u8,
    group: PhoneGroup,
) -> Result<String> {
    if vectors.nrows() != labels.len() {
        return Err(Error::Mismatch(format!(
            "{} vectors but {} labels",
            vectors.nrows(),
            labels.len()
        )));
    }
    let mut out = String::from("phone");
    for d in 0..vectors.ncols() {
        out.push_str(&format!("\td{d}"));
    }
    out.push('\n');
    for (row, &(phone_id, position)) in vectors.rows().into_iter().zip(labels) {
        let name = phones.name_of(phone_id).ok_or_else(|| {
            Error::invalid("frame label", format!("phone id {phone_id} is not in the symbol table"))
        })?;
        if position != hmm_position || !group.contains(name) {
            continue;
        }
        out.push_str(name);
        for v in row {
            out.push('\t');
            out.push_str(&fmt_real(*v));
        }
        out.push('\n');
    }
    Ok(out)
}
