//! Bidirectional symbol table with id 0 reserved for the null symbol.
//!
//! File grammar: one `<string> <id>` pair per line, written in id order.

use std::collections::HashMap;
use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::featio::common::{write_atomic, Fields, LineReader};

/// The printed form of symbol id 0.
pub const NULL_SYMBOL: &str = "<eps>";

/// Injective map between symbol ids and strings. Id 0 always exists and is
/// always [`NULL_SYMBOL`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolTable {
    by_id: BTreeMap<u32, String>,
    by_name: HashMap<String, u32>,
}

impl SymbolTable {
    pub fn new() -> Self {
        let mut t = SymbolTable {
            by_id: BTreeMap::new(),
            by_name: HashMap::new(),
        };
        t.by_id.insert(0, NULL_SYMBOL.to_string());
        t.by_name.insert(NULL_SYMBOL.to_string(), 0);
        t
    }

    /// Builds a table from non-null symbols assigned ids 1, 2, ... in order.
    pub fn from_symbols<S: AsRef<str>>(symbols: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut t = SymbolTable::new();
        for (i, s) in symbols.into_iter().enumerate() {
            t.insert(s.as_ref(), i as u32 + 1)?;
        }
        Ok(t)
    }

    pub fn insert(&mut self, name: &str, id: u32) -> Result<()> {
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(Error::invalid("symbol", format!("bad symbol string {name:?}")));
        }
        if id == 0 && name != NULL_SYMBOL {
            return Err(Error::invalid(
                "symbol",
                format!("id 0 is reserved for {NULL_SYMBOL}, got {name:?}"),
            ));
        }
        if let Some(existing) = self.by_id.get(&id) {
            if existing == name {
                return Ok(());
            }
            return Err(Error::invalid(
                "symbol",
                format!("id {id} already maps to {existing:?}, cannot remap to {name:?}"),
            ));
        }
        if let Some(&existing) = self.by_name.get(name) {
            return Err(Error::invalid(
                "symbol",
                format!("symbol {name:?} already has id {existing}, cannot remap to {id}"),
            ));
        }
        self.by_id.insert(id, name.to_string());
        self.by_name.insert(name.to_string(), id);
        Ok(())
    }

    pub fn id_of(&self, name: &str) -> Option<u32> {
        self.by_name.get(name).copied()
    }

    pub fn name_of(&self, id: u32) -> Option<&str> {
        self.by_id.get(&id).map(|s| s.as_str())
    }

    pub fn contains_id(&self, id: u32) -> bool {
        self.by_id.contains_key(&id)
    }

    /// Number of entries including the null symbol.
    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Non-null ids in ascending order.
    pub fn ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.by_id.keys().copied().filter(|&id| id != 0)
    }

    /// All `(id, name)` pairs in id order, null symbol first.
    pub fn iter(&self) -> impl Iterator<Item = (u32, &str)> {
        self.by_id.iter().map(|(&id, name)| (id, name.as_str()))
    }
}

impl Default for SymbolTable {
    fn default() -> Self {
        SymbolTable::new()
    }
}

pub fn read_symbol_table(path: &Path) -> Result<SymbolTable> {
    let mut reader = LineReader::open(path)?;
    let mut table = SymbolTable::new();
    while let Some(line) = reader.next_line()? {
        let mut f = Fields::new(&reader, &line);
        let name = f.token("symbol string")?.to_string();
        let id = f.u32("symbol id")?;
        f.expect_end()?;
        table.insert(&name, id).map_err(|e| reader.err(e.to_string()))?;
    }
    Ok(table)
}

pub fn write_symbol_table(table: &SymbolTable, path: &Path) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "# symbol table: <string> <id>")?;
        for (id, name) in table.iter() {
            writeln!(w, "{name} {id}")?;
        }
        Ok(())
    })
}
