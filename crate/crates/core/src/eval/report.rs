use std::io::Write;

use crate::error::{LtcsError, Result};
use crate::eval::sweep::SweepResult;

pub const SWEEP_CSV_HEADER: &str = "parameter,value,seed,ndcg_end_to_end,ndcg_initial_only";

/// One row per `(value, seed)` cell.
pub fn write_sweep_csv<W: Write>(result: &SweepResult, mut out: W) -> Result<()> {
    writeln!(out, "{SWEEP_CSV_HEADER}")?;
    for c in &result.cells {
        writeln!(
            out,
            "{},{},{},{},{}",
            result.parameter.name(),
            c.value,
            c.seed,
            c.ndcg_end_to_end,
            c.ndcg_initial_only
        )?;
    }
    Ok(())
}

pub fn write_sweep_json<W: Write>(result: &SweepResult, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, result).map_err(|e| LtcsError::Data(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}
