//! Experiment configuration: `key = value` text, presets, and builders for the model objects.
//!
//! Lines hold one `key = value` pair; `#` starts a comment. A `preset` line selects the base
//! configuration (default `fig1`) and every other key overrides it, in any order. Repeated
//! `scatterer` lines replace the preset's scatterers (`scatterer = none` empties the scene); `eta` then
//! overrides every strength.
//! Lengths share one unit (micrometres in the presets).

use std::fmt::Write as _;

use num_complex::Complex64;

use crate::biphoton::PumpProfile;
use crate::error::{QholoError, Result};
use crate::grid::{DomainMask, GridSpec};
use crate::holography::DcMode;
use crate::montecarlo::RNG_NAME;
use crate::optics::OpticalSystem;
use crate::oracle::OracleBudget;
use crate::scene::{ChamberGeometry, PointScatterer, Scene};

pub const PRESETS: [&str; 3] = ["fig1", "mc128", "gabor2d"];

/// Every accepted key, in canonical order.
pub const KEYS: [&str; 24] = [
    "preset",
    "wavelength",
    "source_grid",
    "wall_grid",
    "wall_mask",
    "lens_focal",
    "opening_distance",
    "opening_width",
    "wall_distance",
    "scatterer",
    "eta",
    "pump_shape",
    "pump_width",
    "pump_center",
    "detector_optics",
    "depths",
    "dc_mode",
    "peaks",
    "mc_n",
    "seed",
    "rng",
    "out_dir",
    "tolerance_scale",
    "oracle_max_cells",
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WallMaskSpec {
    Full,
    /// Centred box covering this fraction of the extent on every axis.
    Central(f64),
    /// Cell centres inside `[lo, hi]` on every axis.
    Window { lo: [f64; 2], hi: [f64; 2] },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PumpShape {
    Gaussian,
    Uniform,
    Delta,
}

impl PumpShape {
    pub fn as_str(&self) -> &'static str {
        match self {
            PumpShape::Gaussian => "gaussian",
            PumpShape::Uniform => "uniform",
            PumpShape::Delta => "delta",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DetectorOptics {
    Identity,
    /// Free-space propagation over the given distance on the source grid.
    Fresnel(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub preset: String,
    pub wavelength: f64,
    pub source_grid: GridSpec,
    pub wall_grid: GridSpec,
    pub wall_mask: WallMaskSpec,
    pub lens_focal: Option<f64>,
    pub opening_distance: f64,
    pub opening_width: Option<f64>,
    pub wall_distance: f64,
    pub scatterers: Vec<PointScatterer>,
    pub pump_shape: PumpShape,
    pub pump_width: f64,
    pub pump_center: [f64; 2],
    pub detector_optics: DetectorOptics,
    pub depths: Vec<f64>,
    pub dc_mode: DcMode,
    pub peaks: usize,
    pub mc_n: u64,
    pub seed: u64,
    pub rng: String,
    pub out_dir: Option<String>,
    pub tolerance_scale: f64,
    pub oracle_max_cells: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        preset("fig1").expect("built-in preset")
    }
}

fn chamber_depths() -> Vec<f64> {
    (0..8).map(|k| 2400.0 + 1000.0 * k as f64).collect()
}

/// Built-in configurations. `fig1`: 1-D chamber behind a lens with one scatterer;
/// `mc128`: 1-D, 128 cells on both sides, for event sampling; `gabor2d`: 64 x 64 planes with
/// one weak scatterer and eight candidate depths.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let base = ExperimentConfig {
        preset: name.to_string(),
        wavelength: 0.8,
        source_grid: GridSpec::line(64, 640.0)?,
        wall_grid: GridSpec::line(128, 1280.0)?,
        wall_mask: WallMaskSpec::Central(0.06),
        lens_focal: Some(14000.0),
        opening_distance: 2000.0,
        opening_width: None,
        wall_distance: 12000.0,
        scatterers: vec![PointScatterer::new([50.0, 0.0], 6400.0, Complex64::new(0.3, 0.0))?],
        pump_shape: PumpShape::Gaussian,
        pump_width: 120.0,
        pump_center: [0.0, 0.0],
        detector_optics: DetectorOptics::Identity,
        depths: chamber_depths(),
        dc_mode: DcMode::SubtractP0,
        peaks: 5,
        mc_n: 1_000_000,
        seed: 7,
        rng: RNG_NAME.to_string(),
        out_dir: None,
        tolerance_scale: 1.0,
        oracle_max_cells: 4096,
    };
    match name {
        "fig1" => Ok(base),
        "mc128" => Ok(ExperimentConfig {
            source_grid: GridSpec::line(128, 1280.0)?,
            ..base
        }),
        "gabor2d" => Ok(ExperimentConfig {
            source_grid: GridSpec::square(64, 640.0)?,
            wall_grid: GridSpec::square(64, 640.0)?,
            scatterers: vec![PointScatterer::new([50.0, -30.0], 6400.0, Complex64::new(0.1, 0.0))?],
            ..base
        }),
        other => Err(QholoError::ConfigSemantic {
            key: "preset".into(),
            message: format!("unknown preset `{other}` (expected one of {})", PRESETS.join(", ")),
        }),
    }
}

fn semantic(key: &str, message: impl Into<String>) -> QholoError {
    QholoError::ConfigSemantic {
        key: key.to_string(),
        message: message.into(),
    }
}

struct Entry<'a> {
    line: usize,
    key: &'a str,
    value: &'a str,
    /// 1-based column where the value starts.
    column: usize,
}

impl Entry<'_> {
    fn err(&self, offset: usize, message: impl Into<String>) -> QholoError {
        QholoError::ConfigSyntax {
            line: self.line,
            column: self.column + offset,
            message: format!("`{}`: {}", self.key, message.into()),
        }
    }

    /// Whitespace-separated tokens with their column offsets inside the value.
    fn tokens(&self) -> Vec<(usize, &str)> {
        let mut out = Vec::new();
        let mut start = None;
        for (i, ch) in self.value.char_indices() {
            match (ch.is_whitespace(), start) {
                (false, None) => start = Some(i),
                (true, Some(s)) => {
                    out.push((s, &self.value[s..i]));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            out.push((s, &self.value[s..]));
        }
        out
    }

    fn numbers(&self, counts: &[usize]) -> Result<Vec<f64>> {
        let toks = self.tokens();
        if !counts.contains(&toks.len()) {
            let want: Vec<String> = counts.iter().map(|c| c.to_string()).collect();
            return Err(self.err(0, format!("expected {} numbers, found {}", want.join(" or "), toks.len())));
        }
        toks.iter()
            .map(|(off, t)| {
                let v: f64 = t.parse().map_err(|_| self.err(*off, format!("`{t}` is not a number")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(self.err(*off, format!("`{t}` is not finite")))
                }
            })
            .collect()
    }

    fn number(&self) -> Result<f64> {
        Ok(self.numbers(&[1])?[0])
    }

    fn word(&self) -> Result<&str> {
        let toks = self.tokens();
        match toks.as_slice() {
            [(_, w)] => Ok(w),
            _ => Err(self.err(0, "expected a single word")),
        }
    }

    fn count(&self) -> Result<u64> {
        let v = self.number()?;
        if v < 0.0 || v.fract() != 0.0 || v > u64::MAX as f64 {
            return Err(self.err(0, format!("`{}` is not a nonnegative integer", self.value.trim())));
        }
        // integers above 2^53 keep their exact text
        Ok(self.value.trim().parse::<u64>().unwrap_or(v as u64))
    }

    fn optional_number(&self) -> Result<Option<f64>> {
        if self.value.trim() == "none" {
            Ok(None)
        } else {
            self.number().map(Some)
        }
    }

    fn grid(&self) -> Result<GridSpec> {
        let v = self.numbers(&[2, 4])?;
        let as_count = |x: f64| -> Result<usize> {
            if x >= 2.0 && x.fract() == 0.0 {
                Ok(x as usize)
            } else {
                Err(self.err(0, format!("sample count {x} must be an integer of at least 2")))
            }
        };
        let g = if v.len() == 2 {
            GridSpec::line(as_count(v[0])?, v[1])
        } else {
            GridSpec::plane([as_count(v[0])?, as_count(v[1])?], [v[2], v[3]])
        };
        g.map_err(|e| self.err(0, e.to_string()))
    }
}

fn split_line(line_no: usize, raw: &str) -> Result<Option<Entry<'_>>> {
    let content = raw.split('#').next().unwrap_or("");
    if content.trim().is_empty() {
        return Ok(None);
    }
    let Some(eq) = content.find('=') else {
        let col = content.len() - content.trim_start().len() + 1;
        return Err(QholoError::ConfigSyntax {
            line: line_no,
            column: col,
            message: "expected `key = value`".into(),
        });
    };
    let key = content[..eq].trim();
    if key.is_empty() {
        return Err(QholoError::ConfigSyntax {
            line: line_no,
            column: eq + 1,
            message: "missing key before `=`".into(),
        });
    }
    if !KEYS.contains(&key) {
        let col = content.len() - content.trim_start().len() + 1;
        return Err(QholoError::ConfigSyntax {
            line: line_no,
            column: col,
            message: format!("unknown key `{key}`"),
        });
    }
    let rest = &content[eq + 1..];
    let lead = rest.len() - rest.trim_start().len();
    let value = rest.trim();
    if value.is_empty() {
        return Err(QholoError::ConfigSyntax {
            line: line_no,
            column: eq + 2,
            message: format!("`{key}` has no value"),
        });
    }
    Ok(Some(Entry {
        line: line_no,
        key,
        value,
        column: eq + 2 + lead,
    }))
}

/// Parses configuration text and validates it.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if let Some(e) = split_line(i + 1, raw)? {
            entries.push(e);
        }
    }
    for (i, e) in entries.iter().enumerate() {
        if e.key != "scatterer" && entries[..i].iter().any(|p| p.key == e.key) {
            return Err(e.err(0, "key given more than once"));
        }
    }
    let mut cfg = match entries.iter().find(|e| e.key == "preset") {
        Some(e) => preset(e.word()?).map_err(|_| e.err(0, format!("unknown preset (expected one of {})", PRESETS.join(", "))))?,
        None => preset("fig1")?,
    };
    let mut scatter_lines = Vec::new();
    let mut eta = None;
    for e in &entries {
        match e.key {
            "preset" => {}
            "wavelength" => cfg.wavelength = e.number()?,
            "source_grid" => cfg.source_grid = e.grid()?,
            "wall_grid" => cfg.wall_grid = e.grid()?,
            "wall_mask" => {
                let toks = e.tokens();
                let rest = || Entry {
                    line: e.line,
                    key: e.key,
                    value: &e.value[toks[0].1.len()..],
                    column: e.column + toks[0].1.len(),
                };
                cfg.wall_mask = match toks.first().map(|t| t.1) {
                    Some("full") if toks.len() == 1 => WallMaskSpec::Full,
                    Some("central") => WallMaskSpec::Central(rest().number()?),
                    Some("window") => {
                        let v = rest().numbers(&[2, 4])?;
                        if v.len() == 2 {
                            WallMaskSpec::Window {
                                lo: [v[0], 0.0],
                                hi: [v[1], 0.0],
                            }
                        } else {
                            WallMaskSpec::Window {
                                lo: [v[0], v[2]],
                                hi: [v[1], v[3]],
                            }
                        }
                    }
                    _ => return Err(e.err(0, "expected `full`, `central F` or `window LO HI [LO HI]`")),
                };
            }
            "lens_focal" => cfg.lens_focal = e.optional_number()?,
            "opening_distance" => cfg.opening_distance = e.number()?,
            "opening_width" => cfg.opening_width = e.optional_number()?,
            "wall_distance" => cfg.wall_distance = e.number()?,
            "scatterer" => scatter_lines.push(e),
            "eta" => {
                let v = e.numbers(&[1, 2])?;
                eta = Some(Complex64::new(v[0], v.get(1).copied().unwrap_or(0.0)));
            }
            "pump_shape" => {
                cfg.pump_shape = match e.word()? {
                    "gaussian" => PumpShape::Gaussian,
                    "uniform" => PumpShape::Uniform,
                    "delta" => PumpShape::Delta,
                    _ => return Err(e.err(0, "expected gaussian, uniform or delta")),
                }
            }
            "pump_width" => cfg.pump_width = e.number()?,
            "pump_center" => {
                let v = e.numbers(&[1, 2])?;
                cfg.pump_center = [v[0], v.get(1).copied().unwrap_or(0.0)];
            }
            "detector_optics" => {
                let toks = e.tokens();
                cfg.detector_optics = match toks.first().map(|t| t.1) {
                    Some("identity") if toks.len() == 1 => DetectorOptics::Identity,
                    Some("fresnel") if toks.len() == 2 => {
                        let d: f64 = toks[1]
                            .1
                            .parse()
                            .map_err(|_| e.err(toks[1].0, format!("`{}` is not a number", toks[1].1)))?;
                        DetectorOptics::Fresnel(d)
                    }
                    _ => return Err(e.err(0, "expected `identity` or `fresnel D`")),
                };
            }
            "depths" => {
                let n = e.tokens().len();
                cfg.depths = e.numbers(&[n.max(1)])?;
            }
            "dc_mode" => cfg.dc_mode = DcMode::parse(e.word()?).map_err(|m| e.err(0, m.to_string()))?,
            "peaks" => cfg.peaks = e.count()? as usize,
            "mc_n" => cfg.mc_n = e.count()?,
            "seed" => cfg.seed = e.count()?,
            "rng" => cfg.rng = e.word()?.to_string(),
            "out_dir" => {
                let v = e.value.to_string();
                cfg.out_dir = if v == "none" { None } else { Some(v) };
            }
            "tolerance_scale" => cfg.tolerance_scale = e.number()?,
            "oracle_max_cells" => cfg.oracle_max_cells = e.count()? as usize,
            _ => unreachable!("keys are checked while splitting"),
        }
    }
    if let Some(e) = scatter_lines.iter().find(|e| e.value.trim() == "none") {
        if scatter_lines.len() > 1 {
            return Err(e.err(0, "`scatterer = none` cannot be combined with other scatterer lines"));
        }
        cfg.scatterers.clear();
    } else if !scatter_lines.is_empty() {
        let ndim = cfg.source_grid.ndim();
        cfg.scatterers = scatter_lines
            .iter()
            .map(|e| {
                let v = e.numbers(&[ndim + 3])?;
                let position = if ndim == 1 { [v[0], 0.0] } else { [v[0], v[1]] };
                PointScatterer::new(position, v[ndim], Complex64::new(v[ndim + 1], v[ndim + 2]))
                    .map_err(|m| e.err(0, m.to_string()))
            })
            .collect::<Result<_>>()?;
    }
    if let Some(eta) = eta {
        for s in &mut cfg.scatterers {
            s.eta = eta;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("none".to_string(), |x| x.to_string())
}

fn fmt_grid(g: &GridSpec) -> String {
    if g.ndim() == 1 {
        format!("{} {}", g.samples(0), g.extent(0))
    } else {
        format!("{} {} {} {}", g.samples(0), g.samples(1), g.extent(0), g.extent(1))
    }
}

impl ExperimentConfig {
    /// Checks cross-key constraints; errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        if self.source_grid.ndim() != self.wall_grid.ndim() {
            return Err(semantic("wall_grid", "must have the same dimension as source_grid"));
        }
        if !self.source_grid.same_spacing(&self.wall_grid) {
            return Err(semantic("wall_grid", "cell size must match source_grid"));
        }
        let geometry = self.geometry();
        geometry.validate().map_err(|e| semantic("wavelength", e.to_string()))?;
        if self.pump_width.is_nan() || self.pump_width <= 0.0 {
            return Err(semantic("pump_width", "must be positive"));
        }
        if self.source_grid.nearest_cell(self.pump_center).is_none() {
            return Err(semantic("pump_center", "outside the source grid"));
        }
        for (j, s) in self.scatterers.iter().enumerate() {
            if !geometry.contains_depth(s.depth) {
                return Err(semantic(
                    "scatterer",
                    format!(
                        "scatterer {} depth {} outside the chamber (0, {})",
                        j + 1,
                        s.depth,
                        self.wall_distance
                    ),
                ));
            }
            if self.wall_grid.nearest_cell(s.position).is_none() {
                return Err(semantic("scatterer", format!("scatterer {} lies outside the chamber cross-section", j + 1)));
            }
        }
        if self.depths.is_empty() {
            return Err(semantic("depths", "at least one depth is required"));
        }
        if let Some(d) = self.depths.iter().find(|d| !geometry.contains_depth(**d)) {
            return Err(semantic("depths", format!("depth {d} outside the chamber")));
        }
        if let DetectorOptics::Fresnel(0.0) = self.detector_optics {
            return Err(semantic("detector_optics", "fresnel distance must be nonzero"));
        }
        if self.peaks == 0 {
            return Err(semantic("peaks", "must be at least 1"));
        }
        if self.mc_n == 0 {
            return Err(semantic("mc_n", "must be at least 1"));
        }
        if self.rng != RNG_NAME {
            return Err(semantic("rng", format!("only `{RNG_NAME}` is available")));
        }
        if self.tolerance_scale.is_nan() || self.tolerance_scale <= 0.0 {
            return Err(semantic("tolerance_scale", "must be positive"));
        }
        if self.oracle_max_cells == 0 {
            return Err(semantic("oracle_max_cells", "must be positive"));
        }
        if let Some(d) = &self.out_dir {
            if d.contains('#') {
                return Err(semantic("out_dir", "must not contain `#`"));
            }
        }
        self.wall_mask()
            .map_err(|e| semantic("wall_mask", e.to_string()))?;
        Ok(())
    }

    /// Canonical text: every key in fixed order, shortest round-trip number formatting.
    pub fn to_canonical(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("preset", self.preset.clone());
        kv("wavelength", self.wavelength.to_string());
        kv("source_grid", fmt_grid(&self.source_grid));
        kv("wall_grid", fmt_grid(&self.wall_grid));
        kv(
            "wall_mask",
            match self.wall_mask {
                WallMaskSpec::Full => "full".into(),
                WallMaskSpec::Central(f) => format!("central {f}"),
                WallMaskSpec::Window { lo, hi } if self.wall_grid.ndim() == 1 => format!("window {} {}", lo[0], hi[0]),
                WallMaskSpec::Window { lo, hi } => format!("window {} {} {} {}", lo[0], hi[0], lo[1], hi[1]),
            },
        );
        kv("lens_focal", fmt_opt(self.lens_focal));
        kv("opening_distance", self.opening_distance.to_string());
        kv("opening_width", fmt_opt(self.opening_width));
        kv("wall_distance", self.wall_distance.to_string());
        if self.scatterers.is_empty() {
            kv("scatterer", "none".into());
        }
        for s in &self.scatterers {
            let pos = if self.source_grid.ndim() == 1 {
                s.position[0].to_string()
            } else {
                format!("{} {}", s.position[0], s.position[1])
            };
            kv("scatterer", format!("{pos} {} {} {}", s.depth, s.eta.re, s.eta.im));
        }
        kv("pump_shape", self.pump_shape.as_str().into());
        kv("pump_width", self.pump_width.to_string());
        kv(
            "pump_center",
            if self.source_grid.ndim() == 1 {
                self.pump_center[0].to_string()
            } else {
                format!("{} {}", self.pump_center[0], self.pump_center[1])
            },
        );
        kv(
            "detector_optics",
            match self.detector_optics {
                DetectorOptics::Identity => "identity".into(),
                DetectorOptics::Fresnel(d) => format!("fresnel {d}"),
            },
        );
        kv("depths", self.depths.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" "));
        kv("dc_mode", self.dc_mode.as_str().into());
        kv("peaks", self.peaks.to_string());
        kv("mc_n", self.mc_n.to_string());
        kv("seed", self.seed.to_string());
        kv("rng", self.rng.clone());
        kv("out_dir", self.out_dir.clone().unwrap_or_else(|| "none".into()));
        kv("tolerance_scale", self.tolerance_scale.to_string());
        kv("oracle_max_cells", self.oracle_max_cells.to_string());
        out
    }

    pub fn geometry(&self) -> ChamberGeometry {
        ChamberGeometry {
            source: self.source_grid,
            wall: self.wall_grid,
            wavelength: self.wavelength,
            lens_focal: self.lens_focal,
            opening_distance: self.opening_distance,
            opening_width: self.opening_width,
            wall_distance: self.wall_distance,
        }
    }

    pub fn wall_mask(&self) -> Result<DomainMask> {
        match self.wall_mask {
            WallMaskSpec::Full => Ok(DomainMask::full(self.wall_grid)),
            WallMaskSpec::Central(f) => DomainMask::central(self.wall_grid, f),
            WallMaskSpec::Window { lo, hi } => DomainMask::window(self.wall_grid, lo, hi),
        }
    }

    pub fn pump(&self) -> Result<PumpProfile> {
        match self.pump_shape {
            PumpShape::Gaussian => PumpProfile::gaussian(self.source_grid, self.pump_width, self.pump_center),
            PumpShape::Uniform => PumpProfile::uniform(self.source_grid),
            PumpShape::Delta => {
                let (cell, _) = self
                    .source_grid
                    .nearest_cell(self.pump_center)
                    .ok_or_else(|| semantic("pump_center", "outside the source grid"))?;
                PumpProfile::delta(self.source_grid, cell)
            }
        }
    }

    /// `h2` on the source grid.
    pub fn detector(&self) -> Result<OpticalSystem> {
        match self.detector_optics {
            DetectorOptics::Identity => Ok(OpticalSystem::identity(self.source_grid)),
            DetectorOptics::Fresnel(d) => OpticalSystem::fresnel(self.source_grid, self.wavelength, d),
        }
    }

    pub fn scene(&self) -> Result<Scene> {
        Scene::from_geometry(&self.geometry(), self.wall_mask()?, &self.scatterers)
    }

    pub fn budget(&self) -> Result<OracleBudget> {
        OracleBudget::new(self.oracle_max_cells, OracleBudget::default().max_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_fig1() {
        let c = parse_config("").unwrap();
        assert_eq!(c, preset("fig1").unwrap());
        assert_eq!(parse_config("# only a comment\n\n").unwrap(), c);
    }

    #[test]
    fn empty_scene_round_trips() {
        let c = parse_config("scatterer = none\n").unwrap();
        assert!(c.scatterers.is_empty());
        assert!(c.to_canonical().contains("scatterer = none\n"));
        assert_eq!(parse_config(&c.to_canonical()).unwrap(), c);
        assert!(parse_config("scatterer = none\nscatterer = 1 5000 0.1 0\n").is_err());
    }

    #[test]
    fn eta_override() {
        let c = parse_config("eta = 0.3 0.0\n").unwrap();
        assert_eq!(c.scatterers.len(), 1);
        assert_eq!(c.scatterers[0].eta, Complex64::new(0.3, 0.0));
        let c = parse_config("scatterer = 10 5000 0.1 0.2\nscatterer = -20 3000 0 1\neta = 0.5").unwrap();
        assert!(c.scatterers.iter().all(|s| s.eta == Complex64::new(0.5, 0.0)));
    }

    #[test]
    fn presets_round_trip() {
        for name in PRESETS {
            let c = preset(name).unwrap();
            c.validate().unwrap();
            let text = c.to_canonical();
            let back = parse_config(&text).unwrap();
            assert_eq!(back, c, "{name}");
            assert_eq!(back.to_canonical(), text);
        }
    }

    #[test]
    fn errors_carry_positions_and_keys() {
        match parse_config("wavelength = 0.8\n  colour = red\n") {
            Err(QholoError::ConfigSyntax { line, column, .. }) => assert_eq!((line, column), (2, 3)),
            other => panic!("{other:?}"),
        }
        match parse_config("wavelength = 0.8 x\n") {
            Err(QholoError::ConfigSyntax { line: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        match parse_config("seed = abc\n") {
            Err(QholoError::ConfigSyntax { line: 1, column: 8, .. }) => {}
            other => panic!("{other:?}"),
        }
        match parse_config("just words\n") {
            Err(QholoError::ConfigSyntax { line: 1, column: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        match parse_config("scatterer = 0 20000 0.3 0\n") {
            Err(QholoError::ConfigSemantic { key, .. }) => assert_eq!(key, "scatterer"),
            other => panic!("{other:?}"),
        }
        assert!(parse_config("seed = 1\nseed = 2\n").is_err());
        assert!(parse_config("preset = nope\n").is_err());
    }

    #[test]
    fn mc_n_accepts_exponent_notation() {
        assert_eq!(parse_config("mc_n = 1e6").unwrap().mc_n, 1_000_000);
        assert!(parse_config("mc_n = 1.5").is_err());
        assert_eq!(parse_config("seed = 18446744073709551615").unwrap().seed, u64::MAX);
    }

    #[test]
    fn builders() {
        let c = preset("gabor2d").unwrap();
        assert_eq!(c.wall_mask().unwrap().count(), 9);
        let scene = c.scene().unwrap();
        assert_eq!(scene.len(), 1);
        assert_eq!(scene.scatterers()[0].snap_offset(), [0.0, 0.0]);
        assert!((c.pump().unwrap().field().norm() - 1.0).abs() < 1e-12);
    }
}
