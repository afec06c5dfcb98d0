//! Flat sectioned key-value configuration.
//!
//! ```text
//! [grid]      p, n_x
//! [scheme]    n, s, m, damping, fp_tol, max_iter
//! [potential] v_terms = (l,k,amp,phase_t,phase_x)…, w_terms = (k,amp)…
//! [final]     kind, f_modes…, phi_poly…
//! [initial]   rho_modes…, density_file
//! [pde]       nu, dt_factor
//! [mc]        paths, seed
//! ```
//!
//! Tuples gain one extra `k` slot when `p = 2`. Unknown sections or keys are
//! hard errors: a misspelled key never silently falls back to a default.

use std::collections::BTreeMap;

use torus_mfg::grid::{GridField, TorusGrid};
use torus_mfg::measures::Density;
use torus_mfg::model::{FinalCondition, Polynomial, PotentialSpec, VTerm, WTerm};
use torus_mfg::scheme::SchemeConfig;
use torus_mfg::{Error, Result};

const TAU: f64 = std::f64::consts::TAU;

#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    /// section -> key -> raw value string
    pub sections: BTreeMap<String, BTreeMap<String, String>>,
}

const KNOWN: &[(&str, &[&str])] = &[
    ("grid", &["p", "n_x"]),
    ("scheme", &["n", "s", "m", "damping", "fp_tol", "max_iter"]),
    ("potential", &["v_terms", "w_terms"]),
    (
        "final",
        &[
            "kind", "f_modes", "f2_modes", "f3_modes", "f4_modes", "f5_modes", "f6_modes",
            "f7_modes", "f8_modes", "phi_poly",
        ],
    ),
    ("initial", &["rho_modes", "density_file"]),
    ("pde", &["nu", "dt_factor"]),
    ("mc", &["paths", "seed"]),
];

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (lineno, raw_line) in text.lines().enumerate() {
            let line = match raw_line.find('#') {
                Some(i) => &raw_line[..i],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
                let name = name.trim().to_string();
                if !KNOWN.iter().any(|(s, _)| *s == name) {
                    return Err(Error::Config(format!(
                        "line {}: unknown section [{name}]",
                        lineno + 1
                    )));
                }
                sections.entry(name.clone()).or_default();
                current = Some(name);
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected `key = value`, got {line:?}",
                    lineno + 1
                )));
            };
            let section = current.clone().ok_or_else(|| {
                Error::Config(format!("line {}: key before any [section]", lineno + 1))
            })?;
            let key = key.trim().to_string();
            let allowed = KNOWN
                .iter()
                .find(|(s, _)| *s == section)
                .map(|(_, keys)| *keys)
                .expect("section validated");
            if !allowed.contains(&key.as_str()) {
                return Err(Error::Config(format!(
                    "line {}: unknown key `{key}` in [{section}]",
                    lineno + 1
                )));
            }
            let slot = sections.get_mut(&section).expect("section present");
            if slot.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(Error::Config(format!(
                    "line {}: duplicate key `{key}` in [{section}]",
                    lineno + 1
                )));
            }
        }
        Ok(RawConfig { sections })
    }

    /// Canonical rendering: sorted sections and keys, `key = value` lines.
    /// The content hash in every report is taken over this text.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (section, keys) in &self.sections {
            out.push_str(&format!("[{section}]\n"));
            for (k, v) in keys {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }

    pub fn content_hash(&self) -> String {
        format!("fnv1a64:{:016x}", fnv1a64(self.canonical().as_bytes()))
    }

    fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section).and_then(|s| s.get(key)).map(|v| v.as_str())
    }

    fn require(&self, section: &str, key: &str) -> Result<&str> {
        self.get(section, key)
            .ok_or_else(|| Error::Config(format!("missing `{key}` in [{section}]")))
    }

    fn parse_num<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<T> {
        let raw = self.require(section, key)?;
        raw.parse()
            .map_err(|_| Error::Config(format!("[{section}] {key} = {raw:?} is not a number")))
    }

    fn parse_num_or<T: std::str::FromStr>(&self, section: &str, key: &str, dflt: T) -> Result<T> {
        match self.get(section, key) {
            None => Ok(dflt),
            Some(raw) => raw.parse().map_err(|_| {
                Error::Config(format!("[{section}] {key} = {raw:?} is not a number"))
            }),
        }
    }

    pub fn grid(&self) -> Result<TorusGrid> {
        TorusGrid::new(self.parse_num("grid", "p")?, self.parse_num("grid", "n_x")?)
    }

    pub fn scheme(&self) -> Result<SchemeConfig<f64>> {
        let n: usize = self.parse_num("scheme", "n")?;
        let s: usize = self.parse_num("scheme", "s")?;
        let m: usize = self.parse_num_or("scheme", "m", s.div_ceil(n.max(1)).max(1))?;
        let mut cfg = SchemeConfig::new(n, s, m);
        cfg.damping = self.parse_num_or("scheme", "damping", cfg.damping)?;
        cfg.fp_tol = self.parse_num_or("scheme", "fp_tol", cfg.fp_tol)?;
        cfg.max_iter = self.parse_num_or("scheme", "max_iter", cfg.max_iter)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn potential(&self, p: usize) -> Result<PotentialSpec<f64>> {
        let mut v_terms = Vec::new();
        if let Some(raw) = self.get("potential", "v_terms") {
            for tup in parse_tuples(raw, "potential.v_terms")? {
                let want = 4 + p;
                if tup.len() != want {
                    return Err(Error::Config(format!(
                        "v_terms entries need {want} numbers (l,k,amp,phase_t,phase_x) at p={p}"
                    )));
                }
                let mut k = [0i64; 2];
                k[0] = as_int(tup[1], "v_terms k")?;
                if p == 2 {
                    k[1] = as_int(tup[2], "v_terms k2")?;
                }
                v_terms.push(VTerm {
                    ell: as_int(tup[0], "v_terms l")?,
                    k,
                    amp: tup[p + 1],
                    phase_t: tup[p + 2],
                    phase_x: tup[p + 3],
                });
            }
        }
        let mut w_terms = Vec::new();
        if let Some(raw) = self.get("potential", "w_terms") {
            for tup in parse_tuples(raw, "potential.w_terms")? {
                let want = 1 + p;
                if tup.len() != want {
                    return Err(Error::Config(format!(
                        "w_terms entries need {want} numbers (k,amp) at p={p}"
                    )));
                }
                let mut k = [0i64; 2];
                k[0] = as_int(tup[0], "w_terms k")?;
                if p == 2 {
                    k[1] = as_int(tup[1], "w_terms k2")?;
                }
                w_terms.push(WTerm { k, amp: tup[p] });
            }
        }
        Ok(PotentialSpec::new(v_terms, w_terms))
    }

    fn mode_field(&self, raw: &str, grid: TorusGrid, what: &str) -> Result<GridField<f64>> {
        let p = grid.dim();
        let mut modes = Vec::new();
        for tup in parse_tuples(raw, what)? {
            let want = 2 + p;
            if tup.len() != want {
                return Err(Error::Config(format!(
                    "{what} entries need {want} numbers (k,amp,phase) at p={p}"
                )));
            }
            let mut k = [0i64; 2];
            k[0] = as_int(tup[0], what)?;
            if p == 2 {
                k[1] = as_int(tup[1], what)?;
            }
            modes.push((k, tup[p], tup[p + 1]));
        }
        Ok(GridField::from_fn(grid, |x: [f64; 2]| {
            modes
                .iter()
                .map(|(k, amp, phase)| {
                    let dot = k[0] as f64 * x[0] + k[1] as f64 * x[1];
                    amp * (TAU * dot + phase).cos()
                })
                .sum()
        }))
    }

    pub fn final_condition(&self, grid: TorusGrid) -> Result<FinalCondition<f64>> {
        let kind = self.require("final", "kind")?;
        match kind {
            "linear" => {
                let f = self.mode_field(self.require("final", "f_modes")?, grid, "f_modes")?;
                Ok(FinalCondition::linear(f))
            }
            "product" => {
                let mut fs =
                    vec![self.mode_field(self.require("final", "f_modes")?, grid, "f_modes")?];
                for i in 2..=8 {
                    let key = format!("f{i}_modes");
                    match self.get("final", &key) {
                        Some(raw) => fs.push(self.mode_field(raw, grid, &key)?),
                        None => break,
                    }
                }
                FinalCondition::product(fs)
            }
            "smooth" => {
                let f = self.mode_field(self.require("final", "f_modes")?, grid, "f_modes")?;
                let coeffs = parse_numbers(self.require("final", "phi_poly")?, "phi_poly")?;
                if coeffs.is_empty() {
                    return Err(Error::Config("phi_poly needs at least one coefficient".into()));
                }
                Ok(FinalCondition::smooth(Polynomial::new(coeffs), f))
            }
            other => Err(Error::Config(format!(
                "final kind {other:?}, expected linear | product | smooth"
            ))),
        }
    }

    pub fn initial_density(&self, grid: TorusGrid) -> Result<Density<f64>> {
        match (self.get("initial", "rho_modes"), self.get("initial", "density_file")) {
            (Some(_), Some(_)) => {
                Err(Error::Config("[initial] takes rho_modes or density_file, not both".into()))
            }
            (Some(raw), None) => {
                let bump = self.mode_field(raw, grid, "rho_modes")?;
                Density::normalized(bump.shift(1.0))
            }
            (None, Some(path)) => {
                let d = crate::io::read_density(std::path::Path::new(path))?;
                if d.grid() != grid {
                    return Err(Error::Config(format!(
                        "density file {path} does not match the [grid] section"
                    )));
                }
                Ok(d)
            }
            (None, None) => Ok(Density::uniform(grid)),
        }
    }

    pub fn pde_nu(&self) -> Result<f64> {
        self.parse_num_or("pde", "nu", 0.5)
    }

    pub fn pde_dt_factor(&self) -> Result<f64> {
        self.parse_num_or("pde", "dt_factor", 0.125)
    }

    pub fn mc_paths(&self) -> Result<usize> {
        self.parse_num_or("mc", "paths", 10_000)
    }

    pub fn mc_seed(&self) -> Result<u64> {
        self.parse_num_or("mc", "seed", 0)
    }
}

fn as_int(x: f64, what: &str) -> Result<i64> {
    if x.fract() != 0.0 || x.abs() > 1e9 {
        return Err(Error::Config(format!("{what}: {x} is not an integer")));
    }
    Ok(x as i64)
}

fn parse_numbers(raw: &str, what: &str) -> Result<Vec<f64>> {
    raw.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::Config(format!("{what}: {s:?} is not a number")))
        })
        .collect()
}

fn parse_tuples(raw: &str, what: &str) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    let mut rest = raw.trim();
    while !rest.is_empty() {
        let Some(open) = rest.find('(') else {
            return Err(Error::Config(format!("{what}: expected `(`, got {rest:?}")));
        };
        if !rest[..open].trim().is_empty() {
            return Err(Error::Config(format!("{what}: stray text {:?}", &rest[..open])));
        }
        let Some(close) = rest.find(')') else {
            return Err(Error::Config(format!("{what}: unterminated tuple")));
        };
        out.push(parse_numbers(&rest[open + 1..close], what)?);
        rest = rest[close + 1..].trim_start_matches(',').trim();
    }
    if out.is_empty() {
        return Err(Error::Config(format!("{what}: no tuples given")));
    }
    Ok(out)
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
