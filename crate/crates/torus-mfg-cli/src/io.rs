//! Density file format: a two-line header (schema, grid shape) followed by
//! one node value per line. Values are printed with Rust's shortest
//! round-trip float formatting, so write-then-read restores them bit-exactly.
//!
//! ```text
//! # torus-mfg.density.v1
//! # n_x=64 p=1
//! 1.0312...
//! ```

use std::io::Write;
use std::path::Path;

use torus_mfg::grid::{GridField, TorusGrid};
use torus_mfg::measures::Density;
use torus_mfg::{Error, Result};

pub const DENSITY_SCHEMA: &str = "torus-mfg.density.v1";

pub fn render_density(d: &Density<f64>) -> String {
    let g = d.grid();
    let mut out = String::new();
    out.push_str(&format!("# {DENSITY_SCHEMA}\n"));
    out.push_str(&format!("# n_x={} p={}\n", g.nodes_per_axis(), g.dim()));
    for v in d.values() {
        out.push_str(&format!("{v}\n"));
    }
    out
}

pub fn write_density(path: &Path, d: &Density<f64>) -> Result<()> {
    let mut file = std::fs::File::create(path)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", path.display())))?;
    file.write_all(render_density(d).as_bytes())
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

pub fn parse_density(text: &str) -> Result<Density<f64>> {
    let mut lines = text.lines();
    let schema = lines
        .next()
        .ok_or_else(|| Error::Config("empty density file".into()))?
        .trim();
    if schema != format!("# {DENSITY_SCHEMA}") {
        return Err(Error::Config(format!("unexpected density schema line {schema:?}")));
    }
    let header = lines
        .next()
        .ok_or_else(|| Error::Config("density file missing shape header".into()))?
        .trim_start_matches('#')
        .trim();
    let mut n_x = None;
    let mut p = None;
    for part in header.split_whitespace() {
        match part.split_once('=') {
            Some(("n_x", v)) => n_x = v.parse::<usize>().ok(),
            Some(("p", v)) => p = v.parse::<usize>().ok(),
            _ => return Err(Error::Config(format!("bad density header field {part:?}"))),
        }
    }
    let (n_x, p) = match (n_x, p) {
        (Some(n), Some(p)) => (n, p),
        _ => return Err(Error::Config("density header must give n_x and p".into())),
    };
    let grid = TorusGrid::new(p, n_x)?;
    let mut values = Vec::with_capacity(grid.len());
    for line in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        values.push(
            line.parse::<f64>()
                .map_err(|_| Error::Config(format!("bad density value {line:?}")))?,
        );
    }
    if values.len() != grid.len() {
        return Err(Error::Config(format!(
            "density file has {} values, grid needs {}",
            values.len(),
            grid.len()
        )));
    }
    // stored values are kept bit-exact; only rounding-level drift is allowed
    Density::from_normalized(GridField::new(grid, values)?)
}

pub fn read_density(path: &Path) -> Result<Density<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_density(&text)
}
