//! Library layer of the command-line front end: sweep and rate-comparison
//! machinery, argument grammar helpers, and the table formats.

pub mod sweep;

use decoy_core::error::{Error, Result};

/// Parse a cycle count that may be written in scientific notation (`1e7`).
pub fn parse_count(s: &str) -> Result<u64> {
    let v: f64 = s
        .parse()
        .map_err(|_| Error::InvalidInput(format!("bad count: {s}")))?;
    if !(v >= 1.0 && v.fract() == 0.0 && v <= 9.007_199_254_740_992e15) {
        return Err(Error::InvalidInput(format!(
            "count must be a positive integer below 2^53, got {s}"
        )));
    }
    Ok(v as u64)
}

/// Parse a `lo:hi:step` grid specification into a strictly increasing grid.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::InvalidInput(format!(
            "grid must be lo:hi:step, got {s}"
        )));
    }
    let lo: f64 = parts[0]
        .parse()
        .map_err(|_| Error::InvalidInput(format!("bad grid lo: {}", parts[0])))?;
    let hi: f64 = parts[1]
        .parse()
        .map_err(|_| Error::InvalidInput(format!("bad grid hi: {}", parts[1])))?;
    let step: f64 = parts[2]
        .parse()
        .map_err(|_| Error::InvalidInput(format!("bad grid step: {}", parts[2])))?;
    if !(lo > 0.0 && step > 0.0 && hi >= lo) {
        return Err(Error::InvalidInput(format!(
            "grid needs 0 < lo <= hi and step > 0, got {s}"
        )));
    }
    let mut grid = Vec::new();
    let mut i = 0u32;
    loop {
        let v = lo + f64::from(i) * step;
        if v > hi + 0.5 * step {
            break;
        }
        grid.push(v.min(hi));
        i += 1;
    }
    Ok(grid)
}

/// Parse a comma-separated list of positive reals.
pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|tok| {
            let v: f64 = tok
                .trim()
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad value: {tok}")))?;
            if v <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "values must be positive, got {tok}"
                )));
            }
            Ok(v)
        })
        .collect()
}
