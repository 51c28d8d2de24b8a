//! The triplet label space and its projections onto instrument, verb and
//! target components.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_INSTRUMENTS: usize = 6;
pub const NUM_VERBS: usize = 10;
pub const NUM_TARGETS: usize = 15;
pub const NUM_TRIPLETS: usize = 100;

/// Schema fixture bundled with the crate.
pub const BUNDLED_SCHEMA_CSV: &str = include_str!("../data/triplet_schema.csv");

const HEADER: [&str; 7] = [
    "triplet_id",
    "instrument_id",
    "verb_id",
    "target_id",
    "instrument_name",
    "verb_name",
    "target_name",
];

/// Evaluation component a triplet can be projected onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Component {
    I,
    V,
    T,
    IV,
    IT,
    IVT,
}

impl Component {
    /// Table order: single components, pairs, full triplet.
    pub const ALL: [Component; 6] = [
        Component::I,
        Component::V,
        Component::T,
        Component::IV,
        Component::IT,
        Component::IVT,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Component::I => "I",
            Component::V => "V",
            Component::T => "T",
            Component::IV => "IV",
            Component::IT => "IT",
            Component::IVT => "IVT",
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Component::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidInput(format!("unknown component {s:?}")))
    }
}

/// Class identity inside one component space. Pairs are (first, second)
/// component ids, e.g. (instrument, verb) for IV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassKey {
    Single(u8),
    Pair(u8, u8),
}

impl fmt::Display for ClassKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassKey::Single(a) => write!(f, "{a}"),
            ClassKey::Pair(a, b) => write!(f, "{a},{b}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ComponentKey {
    pub component: Component,
    pub key: ClassKey,
}

/// Component ids of one triplet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TripletParts {
    pub instrument: u8,
    pub verb: u8,
    pub target: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletSchema {
    instrument_names: Vec<String>,
    verb_names: Vec<String>,
    target_names: Vec<String>,
    triplets: Vec<TripletParts>,
}

#[derive(Debug, Deserialize)]
struct SchemaRow {
    triplet_id: i64,
    instrument_id: i64,
    verb_id: i64,
    target_id: i64,
    instrument_name: String,
    verb_name: String,
    target_name: String,
}

/// Loads and validates a schema CSV file.
pub fn load_schema(path: impl AsRef<Path>) -> Result<TripletSchema> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    TripletSchema::from_reader(file, &path.display().to_string())
}

impl TripletSchema {
    /// The fixture schema shipped in `data/triplet_schema.csv`.
    pub fn bundled() -> Self {
        Self::from_reader(BUNDLED_SCHEMA_CSV.as_bytes(), "<bundled schema>")
            .expect("bundled schema is valid")
    }

    pub fn from_reader(reader: impl Read, source: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| Error::parse(source, e))?
            .iter()
            .map(str::to_owned)
            .collect::<Vec<_>>();
        if header != HEADER {
            return Err(Error::parse(
                source,
                format!(
                    "expected header {:?}, found {:?}",
                    HEADER.join(","),
                    header.join(",")
                ),
            ));
        }

        let mut rows = Vec::new();
        for (i, rec) in rdr.deserialize::<SchemaRow>().enumerate() {
            let row = rec.map_err(|e| Error::parse(format!("{source}: row {}", i + 2), e))?;
            rows.push(row);
        }
        Self::from_rows(rows)
    }

    fn from_rows(rows: Vec<SchemaRow>) -> Result<Self> {
        if rows.len() != NUM_TRIPLETS {
            return Err(Error::Schema(format!(
                "expected {NUM_TRIPLETS} triplet rows, found {}",
                rows.len()
            )));
        }
        let mut slots: Vec<Option<TripletParts>> = vec![None; NUM_TRIPLETS];
        let mut names: [BTreeMap<u8, String>; 3] = Default::default();
        let mut tuples = HashSet::new();
        let limits = [NUM_INSTRUMENTS, NUM_VERBS, NUM_TARGETS];
        let kinds = ["instrument", "verb", "target"];

        for row in rows {
            let tid = row.triplet_id;
            if !(0..NUM_TRIPLETS as i64).contains(&tid) {
                return Err(Error::Schema(format!(
                    "triplet_id {tid} out of range 0..{NUM_TRIPLETS}"
                )));
            }
            let ids = [row.instrument_id, row.verb_id, row.target_id];
            let row_names = [row.instrument_name, row.verb_name, row.target_name];
            let mut parts = [0u8; 3];
            for k in 0..3 {
                if !(0..limits[k] as i64).contains(&ids[k]) {
                    return Err(Error::Schema(format!(
                        "triplet {tid}: {}_id {} out of range 0..{}",
                        kinds[k], ids[k], limits[k]
                    )));
                }
                parts[k] = ids[k] as u8;
                let prev = names[k]
                    .entry(parts[k])
                    .or_insert_with(|| row_names[k].clone());
                if *prev != row_names[k] {
                    return Err(Error::Schema(format!(
                        "triplet {tid}: {} {} named both {prev:?} and {:?}",
                        kinds[k], parts[k], row_names[k]
                    )));
                }
            }
            let parts = TripletParts {
                instrument: parts[0],
                verb: parts[1],
                target: parts[2],
            };
            let slot = &mut slots[tid as usize];
            if slot.is_some() {
                return Err(Error::Schema(format!("duplicate triplet_id {tid}")));
            }
            if !tuples.insert(parts) {
                return Err(Error::Schema(format!(
                    "triplet {tid}: combination ({},{},{}) already declared",
                    parts.instrument, parts.verb, parts.target
                )));
            }
            *slot = Some(parts);
        }

        let name_list = |k: usize, prefix: &str| {
            (0..limits[k] as u8)
                .map(|id| {
                    names[k]
                        .get(&id)
                        .cloned()
                        .unwrap_or_else(|| format!("{prefix}_{id}"))
                })
                .collect::<Vec<_>>()
        };
        Ok(TripletSchema {
            instrument_names: name_list(0, "instrument"),
            verb_names: name_list(1, "verb"),
            target_names: name_list(2, "target"),
            // 100 unique ids in 0..100 fill every slot
            triplets: slots
                .into_iter()
                .map(|s| s.expect("all ids present"))
                .collect(),
        })
    }

    pub fn instrument_names(&self) -> &[String] {
        &self.instrument_names
    }

    pub fn verb_names(&self) -> &[String] {
        &self.verb_names
    }

    pub fn target_names(&self) -> &[String] {
        &self.target_names
    }

    pub fn triplets(&self) -> &[TripletParts] {
        &self.triplets
    }

    pub fn parts(&self, triplet_id: u8) -> Result<TripletParts> {
        self.triplets
            .get(triplet_id as usize)
            .copied()
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "triplet_id {triplet_id} out of range 0..{NUM_TRIPLETS}"
                ))
            })
    }

    /// Projects a triplet onto a component class.
    pub fn project(&self, triplet_id: u8, component: Component) -> Result<ComponentKey> {
        let p = self.parts(triplet_id)?;
        let key = match component {
            Component::I => ClassKey::Single(p.instrument),
            Component::V => ClassKey::Single(p.verb),
            Component::T => ClassKey::Single(p.target),
            Component::IV => ClassKey::Pair(p.instrument, p.verb),
            Component::IT => ClassKey::Pair(p.instrument, p.target),
            Component::IVT => ClassKey::Single(triplet_id),
        };
        Ok(ComponentKey { component, key })
    }

    /// Dense class numbering for one component, restricted to classes
    /// realised by at least one triplet.
    pub fn component_index(&self, component: Component) -> ComponentIndex {
        let keys: Vec<ClassKey> = (0..NUM_TRIPLETS as u8)
            .map(|t| self.project(t, component).expect("in range").key)
            .collect();
        let mut classes = keys.clone();
        classes.sort_unstable();
        classes.dedup();
        let of_triplet = keys
            .iter()
            .map(|k| classes.binary_search(k).expect("present"))
            .collect();
        ComponentIndex {
            component,
            classes,
            of_triplet,
        }
    }
}

/// Maps triplet ids to dense class indices of one component.
#[derive(Debug, Clone)]
pub struct ComponentIndex {
    pub component: Component,
    /// Sorted realised classes.
    pub classes: Vec<ClassKey>,
    of_triplet: Vec<usize>,
}

impl ComponentIndex {
    pub fn class_of(&self, triplet_id: u8) -> usize {
        self.of_triplet[triplet_id as usize]
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}
