use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::WorldConfig;
use crate::error::{LtcsError, Result};
use crate::model::QueryGroup;

pub const DATASET_FORMAT: &str = "ltcs-dataset";
pub const DATASET_VERSION: u32 = 1;

/// First line of a dataset file; one JSON query group per following line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub version: u32,
    #[serde(default)]
    pub world: Option<WorldConfig>,
}

pub fn write_dataset<W: Write>(mut out: W, world: Option<&WorldConfig>, groups: &[QueryGroup]) -> Result<()> {
    let header = DatasetHeader {
        format: DATASET_FORMAT.to_string(),
        version: DATASET_VERSION,
        world: world.cloned(),
    };
    let json = |e: serde_json::Error| LtcsError::Data(e.to_string());
    writeln!(out, "{}", serde_json::to_string(&header).map_err(json)?)?;
    for g in groups {
        writeln!(out, "{}", serde_json::to_string(g).map_err(json)?)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_dataset<R: BufRead>(input: R) -> Result<(DatasetHeader, Vec<QueryGroup>)> {
    let mut lines = input.lines();
    let first = lines.next().ok_or_else(|| LtcsError::Data("empty dataset file".into()))??;
    let header: DatasetHeader =
        serde_json::from_str(&first).map_err(|e| LtcsError::Data(format!("line 1: bad dataset header: {e}")))?;
    if header.format != DATASET_FORMAT {
        return Err(LtcsError::Data(format!("line 1: unknown dataset format {:?}", header.format)));
    }
    if header.version != DATASET_VERSION {
        return Err(LtcsError::Data(format!(
            "dataset version {} is not supported (expected {})",
            header.version, DATASET_VERSION
        )));
    }
    let mut groups = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let g: QueryGroup =
            serde_json::from_str(&line).map_err(|e| LtcsError::Data(format!("line {}: {e}", i + 2)))?;
        groups.push(g);
    }
    Ok((header, groups))
}

pub fn save_dataset(path: &Path, world: Option<&WorldConfig>, groups: &[QueryGroup]) -> Result<()> {
    write_dataset(BufWriter::new(File::create(path)?), world, groups)
}

pub fn load_dataset(path: &Path) -> Result<(DatasetHeader, Vec<QueryGroup>)> {
    read_dataset(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::generate_dataset;

    #[test]
    fn round_trip() {
        let cfg = WorldConfig { num_queries: 5, items_per_query: 6, consideration_size: 3, ..Default::default() };
        let data = generate_dataset(&cfg).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, Some(&cfg), &data).unwrap();
        let (h, back) = read_dataset(&buf[..]).unwrap();
        assert_eq!(h.world.as_ref(), Some(&cfg));
        assert_eq!(back, data);
    }

    #[test]
    fn bad_line_is_reported() {
        let text = format!("{{\"format\":\"{DATASET_FORMAT}\",\"version\":1}}\nnot json\n");
        let err = read_dataset(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }
}
