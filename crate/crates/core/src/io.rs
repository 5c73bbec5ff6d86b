//! JSON records for primal pairs, rollout libraries and search traces.
//!
//! A library is a directory holding `index.json` plus one pair file per
//! entry. Traces are line-delimited JSON, one record per iteration.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{BoundaryAtom, BoundaryMeasure, OccupationAtom, OccupationMeasure, PrimalPair, Provenance};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct MeasureRecord<S> {
    pub time: S,
    pub dim_x: usize,
    pub atoms: Vec<BoundaryAtom<S>>,
}

impl<S: Scalar> MeasureRecord<S> {
    pub fn from_measure(m: &BoundaryMeasure<S>) -> Self {
        MeasureRecord {
            time: m.time(),
            dim_x: m.dim_x(),
            atoms: m.atoms().to_vec(),
        }
    }

    pub fn into_measure(self) -> Result<BoundaryMeasure<S>> {
        BoundaryMeasure::new(self.time, self.dim_x, self.atoms)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct PairRecord<S> {
    pub provenance: Provenance,
    pub dim_x: usize,
    pub dim_u: usize,
    pub occupation: Vec<OccupationAtom<S>>,
    pub terminal: MeasureRecord<S>,
}

impl<S: Scalar> PairRecord<S> {
    pub fn from_pair(p: &PrimalPair<S>) -> Self {
        PairRecord {
            provenance: p.provenance.clone(),
            dim_x: p.occupation.dim_x(),
            dim_u: p.occupation.dim_u(),
            occupation: p.occupation.atoms().to_vec(),
            terminal: MeasureRecord::from_measure(&p.terminal),
        }
    }

    pub fn into_pair(self) -> Result<PrimalPair<S>> {
        PrimalPair::new(
            OccupationMeasure::from_atoms(self.dim_x, self.dim_u, self.occupation)?,
            self.terminal.into_measure()?,
            self.provenance,
        )
    }
}

fn json_err(e: serde_json::Error) -> Error {
    Error::Parse {
        line: e.line(),
        message: e.to_string(),
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(json_err)
}

pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(json_err)
}

pub fn write_pair<S: Scalar>(path: &Path, pair: &PrimalPair<S>) -> Result<()> {
    fs::write(path, to_json(&PairRecord::from_pair(pair))?)?;
    Ok(())
}

pub fn read_pair<S: Scalar>(path: &Path) -> Result<PrimalPair<S>> {
    from_json::<PairRecord<S>>(&fs::read_to_string(path)?)?.into_pair()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LibraryEntry {
    pub label: String,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LibraryIndex {
    pub problem_id: String,
    pub entries: Vec<LibraryEntry>,
}

pub fn write_library<S: Scalar>(dir: &Path, problem_id: &str, pairs: &[(String, PrimalPair<S>)]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(pairs.len());
    for (i, (label, pair)) in pairs.iter().enumerate() {
        let file = format!("pair_{i:04}.json");
        write_pair(&dir.join(&file), pair)?;
        entries.push(LibraryEntry {
            label: label.clone(),
            file,
        });
    }
    let index = LibraryIndex {
        problem_id: problem_id.to_string(),
        entries,
    };
    fs::write(dir.join("index.json"), to_json(&index)?)?;
    Ok(())
}

pub fn read_library<S: Scalar>(dir: &Path) -> Result<(LibraryIndex, Vec<PrimalPair<S>>)> {
    let index: LibraryIndex = from_json(&fs::read_to_string(dir.join("index.json"))?)?;
    let pairs = index
        .entries
        .iter()
        .map(|e| read_pair(&dir.join(&e.file)))
        .collect::<Result<Vec<_>>>()?;
    Ok((index, pairs))
}

/// One compact JSON object per line.
pub fn write_json_lines<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    for r in records {
        let line = serde_json::to_string(r).map_err(json_err)?;
        writeln!(f, "{line}")?;
    }
    Ok(())
}

pub fn read_json_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
