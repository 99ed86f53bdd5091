//! `key = value` run configuration with `#` comments.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::read_text;
use crate::error::{Error, Result};
use crate::field::Grid2D;
use crate::model::{IcMode, InitialCondition, Parameters};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub grid: Grid2D,
    pub params: Parameters,
    pub ic: InitialCondition,
    pub record_every: f64,
    pub evolve_w: bool,
    pub output_dir: Option<PathBuf>,
    /// Exponents (p, q) of the tracked ∫u^p v^(−q).
    pub upvq: Option<(f64, f64)>,
}

const REQUIRED: [&str; 13] = [
    "nx", "ny", "lx", "ly", "r", "mu", "beta", "chi", "t_end", "record_every", "ic_mode", "u_base", "v_base",
];
const OPTIONAL: [&str; 11] = [
    "amplitude",
    "modes_k",
    "seed",
    "cfl_safety",
    "quad_tol",
    "evolve_w",
    "upvq_p",
    "upvq_q",
    "output_dir",
    "ic_u_file",
    "ic_v_file",
];

struct Entries<'a> {
    map: HashMap<&'a str, (&'a str, usize)>,
    last_line: usize,
}

fn config_err(key: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        line,
        msg: msg.into(),
    }
}

impl<'a> Entries<'a> {
    fn line_of(&self, key: &str) -> usize {
        self.map.get(key).map_or(self.last_line, |e| e.1)
    }

    fn raw(&self, key: &str) -> Option<(&'a str, usize)> {
        self.map.get(key).copied()
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<Option<(T, usize)>> {
        match self.raw(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse::<T>()
                .map(|x| Some((x, line)))
                .map_err(|_| config_err(key, line, format!("cannot parse `{v}`"))),
        }
    }

    fn required<T: FromStr>(&self, key: &str) -> Result<(T, usize)> {
        self.parse(key)?
            .ok_or_else(|| config_err(key, self.last_line, "missing required key"))
    }

    fn float(&self, key: &str, default: Option<f64>, rule: impl Fn(f64) -> Option<String>) -> Result<f64> {
        let (x, line) = match (self.parse::<f64>(key)?, default) {
            (Some(v), _) => v,
            (None, Some(d)) => return Ok(d),
            (None, None) => self.required::<f64>(key)?,
        };
        if !x.is_finite() {
            return Err(config_err(key, line, format!("must be finite, got {x}")));
        }
        match rule(x) {
            Some(msg) => Err(config_err(key, line, msg)),
            None => Ok(x),
        }
    }
}

fn positive(x: f64) -> Option<String> {
    (x <= 0.0).then(|| format!("must be > 0, got {x}"))
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut map = HashMap::new();
    let mut last_line = 0;
    for (k, raw_line) in text.lines().enumerate() {
        let line_no = k + 1;
        last_line = line_no;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| config_err(content, line_no, "expected `key = value`"))?;
        let key = key.trim();
        let value = value.trim();
        if !REQUIRED.contains(&key) && !OPTIONAL.contains(&key) {
            return Err(config_err(key, line_no, "unknown key"));
        }
        if let Some((_, first)) = map.insert(key, (value, line_no)) {
            return Err(config_err(key, line_no, format!("duplicate key (first set on line {first})")));
        }
    }
    let e = Entries { map, last_line };

    let (nx, nx_line) = e.required::<usize>("nx")?;
    if nx < 4 {
        return Err(config_err("nx", nx_line, format!("must be >= 4, got {nx}")));
    }
    let (ny, ny_line) = e.required::<usize>("ny")?;
    if ny < 4 {
        return Err(config_err("ny", ny_line, format!("must be >= 4, got {ny}")));
    }
    let lx = e.float("lx", None, positive)?;
    let ly = e.float("ly", None, positive)?;
    let grid = Grid2D::new(nx, ny, lx, ly).map_err(|err| config_err("ly", e.line_of("ly"), err.to_string()))?;

    let params = Parameters {
        r: e.float("r", None, positive)?,
        mu: e.float("mu", None, positive)?,
        beta: e.float("beta", None, |b| (b >= 1.0).then(|| format!("must be < 1, got {b}")))?,
        chi: e.float("chi", None, positive)?,
        cfl_safety: e.float("cfl_safety", Some(0.8), |c| {
            (!(c > 0.0 && c <= 1.0)).then(|| format!("must lie in (0, 1], got {c}"))
        })?,
        t_end: e.float("t_end", None, |t| (t < 0.0).then(|| format!("must be >= 0, got {t}")))?,
        quad_tol: e.float("quad_tol", Some(1e-8), positive)?,
    };
    let record_every = e.float("record_every", None, positive)?;

    let (mode_name, mode_line) = e.required::<String>("ic_mode")?;
    let file_keys = ["ic_u_file", "ic_v_file"];
    let mode = match mode_name.as_str() {
        "constant" => IcMode::Constant,
        "bump" => IcMode::Bump,
        "random_fourier" => IcMode::RandomFourier,
        "file" => {
            let (u_path, _) = e.required::<PathBuf>("ic_u_file")?;
            let (v_path, _) = e.required::<PathBuf>("ic_v_file")?;
            IcMode::File { u_path, v_path }
        }
        other => {
            return Err(config_err(
                "ic_mode",
                mode_line,
                format!("expected constant, bump, random_fourier or file, got `{other}`"),
            ))
        }
    };
    if !matches!(mode, IcMode::File { .. }) {
        for k in file_keys {
            if let Some((_, line)) = e.raw(k) {
                return Err(config_err(k, line, "only valid with ic_mode = file"));
            }
        }
    }
    let modes_k = match e.parse::<u32>("modes_k")? {
        None => 4,
        Some((0, line)) => return Err(config_err("modes_k", line, "must be >= 1")),
        Some((k, _)) => k,
    };
    let ic = InitialCondition {
        mode,
        u_base: e.float("u_base", None, positive)?,
        v_base: e.float("v_base", None, positive)?,
        amplitude: e.float("amplitude", Some(0.1), |a| {
            (!(0.0..1.0).contains(&a)).then(|| format!("must lie in [0, 1), got {a}"))
        })?,
        modes_k,
        seed: e.parse::<u64>("seed")?.map_or(0, |s| s.0),
    };
    let evolve_w = e.parse::<bool>("evolve_w")?.map_or(false, |b| b.0);
    let output_dir = e.parse::<PathBuf>("output_dir")?.map(|p| p.0);

    let upvq = match (e.parse::<f64>("upvq_p")?, e.parse::<f64>("upvq_q")?) {
        (None, None) => None,
        (Some((_, line)), None) => return Err(config_err("upvq_q", line, "upvq_p needs upvq_q")),
        (None, Some((_, line))) => return Err(config_err("upvq_p", line, "upvq_q needs upvq_p")),
        (Some((pe, pl)), Some((qe, ql))) => {
            if !(pe > 1.0 && pe.is_finite()) {
                return Err(config_err("upvq_p", pl, format!("must be > 1, got {pe}")));
            }
            let q_max = (params.mu * pe).min(pe - 1.0);
            if !(qe > 0.0 && qe < q_max) {
                return Err(config_err(
                    "upvq_q",
                    ql,
                    format!("must satisfy 0 < q < min(mu*p, p-1) = {q_max}, got {qe}"),
                ));
            }
            Some((pe, qe))
        }
    };

    Ok(RunConfig {
        grid,
        params,
        ic,
        record_every,
        evolve_w,
        output_dir,
        upvq,
    })
}

pub fn read_config(path: &Path) -> Result<RunConfig> {
    let mut cfg = parse_config(&read_text(path)?)?;
    // Relative IC file paths are taken relative to the config file.
    if let IcMode::File { u_path, v_path } = &mut cfg.ic.mode {
        if let Some(dir) = path.parent() {
            for p in [u_path, v_path] {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
    }
    Ok(cfg)
}

pub fn serialize_config(c: &RunConfig) -> String {
    let mut s = String::new();
    let g = &c.grid;
    let p = &c.params;
    let _ = writeln!(s, "nx = {}", g.nx());
    let _ = writeln!(s, "ny = {}", g.ny());
    let _ = writeln!(s, "lx = {:?}", g.lx());
    let _ = writeln!(s, "ly = {:?}", g.ly());
    let _ = writeln!(s, "r = {:?}", p.r);
    let _ = writeln!(s, "mu = {:?}", p.mu);
    let _ = writeln!(s, "beta = {:?}", p.beta);
    let _ = writeln!(s, "chi = {:?}", p.chi);
    let _ = writeln!(s, "cfl_safety = {:?}", p.cfl_safety);
    let _ = writeln!(s, "quad_tol = {:?}", p.quad_tol);
    let _ = writeln!(s, "t_end = {:?}", p.t_end);
    let _ = writeln!(s, "record_every = {:?}", c.record_every);
    let _ = writeln!(s, "ic_mode = {}", c.ic.mode.name());
    if let IcMode::File { u_path, v_path } = &c.ic.mode {
        let _ = writeln!(s, "ic_u_file = {}", u_path.display());
        let _ = writeln!(s, "ic_v_file = {}", v_path.display());
    }
    let _ = writeln!(s, "u_base = {:?}", c.ic.u_base);
    let _ = writeln!(s, "v_base = {:?}", c.ic.v_base);
    let _ = writeln!(s, "amplitude = {:?}", c.ic.amplitude);
    let _ = writeln!(s, "modes_k = {}", c.ic.modes_k);
    let _ = writeln!(s, "seed = {}", c.ic.seed);
    let _ = writeln!(s, "evolve_w = {}", c.evolve_w);
    if let Some(dir) = &c.output_dir {
        let _ = writeln!(s, "output_dir = {}", dir.display());
    }
    if let Some((pe, qe)) = c.upvq {
        let _ = writeln!(s, "upvq_p = {pe:?}");
        let _ = writeln!(s, "upvq_q = {qe:?}");
    }
    s
}
