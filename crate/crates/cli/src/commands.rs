use std::collections::BTreeMap;

use num_complex::Complex64;
use qholo_core::biphoton::{biphoton_amplitude, coincidence_rate, marginal_fast, singles_rate_detector2, PumpProfile};
use qholo_core::config::ExperimentConfig;
use qholo_core::formats::{fmt_f64, write_csv, write_peaks_csv, write_pgm, write_qhe1, write_qhf1, write_qhf1_real};
use qholo_core::holography::{gabor_reconstruct, record_hologram, ChamberBackprop, DcMode, DcRemoval};
use qholo_core::montecarlo::{bucket_histogram, convergence_report, sample_pairs};
use qholo_core::oracle::{dense_marginal, OracleBudget};
use qholo_core::scene::{effective_h1, hologram_decomposition, relative_residual, Scene};
use qholo_core::{ComplexField, DenseKernel, DomainMask, GridSpec, OpticalSystem, QholoError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::Command;

type Result<T> = std::result::Result<T, QholoError>;

/// Largest coincidence map the event sampler will build.
pub const MC_MAX_CELLS: usize = 1 << 22;

#[derive(Debug, Default)]
pub struct Outcome {
    pub artifacts: BTreeMap<String, Vec<u8>>,
    pub metrics: BTreeMap<String, Value>,
    pub summary: Vec<String>,
    pub tolerance_failed: bool,
    pub error: Option<(String, String)>,
}

impl Outcome {
    pub fn failed(code: &str, message: &str) -> Self {
        Outcome {
            error: Some((code.to_string(), message.to_string())),
            ..Default::default()
        }
    }

    fn put(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.artifacts.insert(name.into(), bytes);
    }

    fn metric(&mut self, key: &str, v: impl Into<Value>) {
        self.metrics.insert(key.to_string(), v.into());
    }
}

pub fn error_code(e: &QholoError) -> &'static str {
    match e {
        QholoError::GridMismatch(..) => "grid-mismatch",
        QholoError::InvalidGrid(..) => "invalid-grid",
        QholoError::Degenerate(..) => "degenerate",
        QholoError::NonFinite(..) => "non-finite",
        QholoError::IndexOutOfRange { .. } => "index-out-of-range",
        QholoError::EmptyMask => "empty-mask",
        QholoError::BudgetExceeded { .. } => "budget-exceeded",
        QholoError::InvalidParameter(..) => "invalid-parameter",
        QholoError::ConfigSyntax { .. } => "config-syntax",
        QholoError::ConfigSemantic { .. } => "config-semantic",
        QholoError::Format(..) => "format",
        QholoError::Io(..) => "io",
    }
}

pub fn run(cmd: Command, cfg: &ExperimentConfig) -> Result<Outcome> {
    match cmd {
        Command::Simulate => simulate(cfg),
        Command::Decompose => decompose(cfg),
        Command::Reconstruct => reconstruct(cfg),
        Command::Montecarlo => montecarlo(cfg),
        Command::OracleCheck => oracle_check(cfg),
    }
}

fn csv(grid: &GridSpec, values: &[f64]) -> Result<Vec<u8>> {
    let mut b = Vec::new();
    write_csv(&mut b, grid, values)?;
    Ok(b)
}

fn qhf(f: &ComplexField) -> Result<Vec<u8>> {
    let mut b = Vec::new();
    write_qhf1(&mut b, f)?;
    Ok(b)
}

fn qhf_real(grid: &GridSpec, values: &[f64]) -> Result<Vec<u8>> {
    let mut b = Vec::new();
    write_qhf1_real(&mut b, grid, values)?;
    Ok(b)
}

fn setup(cfg: &ExperimentConfig) -> Result<(Scene, PumpProfile, OpticalSystem)> {
    Ok((cfg.scene()?, cfg.pump()?, cfg.detector()?))
}

fn simulate(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (scene, zeta, h2) = setup(cfg)?;
    let h = record_hologram(&scene, &zeta, &h2)?;
    let mut out = Outcome::default();
    out.put("hologram.csv", csv(h.grid(), h.values())?);
    out.put("hologram.qhf", qhf_real(h.grid(), h.values())?);
    out.metric("total", fmt_f64(h.total()));
    out.metric("max", fmt_f64(h.max()));
    out.summary.push(format!("hologram total {:.6e}, max {:.6e}", h.total(), h.max()));
    Ok(out)
}

fn decompose(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (scene, zeta, h2) = setup(cfg)?;
    let d = hologram_decomposition(&scene, &zeta, &h2)?;
    let g = *d.grid();
    let mut out = Outcome::default();
    out.put("direct.csv", csv(&g, d.direct.values())?);
    out.put("scattered.csv", csv(&g, d.scattered.values())?);
    out.put("interference.csv", csv(&g, &d.interference)?);
    out.put("scattered_self.csv", csv(&g, &d.scattered_self)?);
    out.put("scattered_cross.csv", csv(&g, &d.scattered_cross)?);
    let total = d.total();
    out.put("hologram.csv", csv(&g, &total)?);
    for j in 0..d.len() {
        out.put(format!("q_{j}.qhf"), qhf(&d.q[j])?);
        out.put(format!("r_{j}.qhf"), qhf(&d.r[j])?);
        out.put(format!("f_{j}.qhf"), qhf(&d.f[j])?);
    }
    let mut s = String::from("j,illumination_re,illumination_im,eta_eff_re,eta_eff_im\n");
    for j in 0..d.len() {
        let (a, e) = (d.illumination[j], d.effective_eta[j]);
        s += &format!("{j},{},{},{},{}\n", fmt_f64(a.re), fmt_f64(a.im), fmt_f64(e.re), fmt_f64(e.im));
    }
    out.put("scalars.csv", s.into_bytes());
    let mut s = String::from("i,j,re,im\n");
    for i in 0..d.len() {
        for j in 0..d.len() {
            let o = d.overlap(i, j);
            s += &format!("{i},{j},{},{}\n", fmt_f64(o.re), fmt_f64(o.im));
        }
    }
    out.put("overlap.csv", s.into_bytes());

    let fast = record_hologram(&scene, &zeta, &h2)?;
    let residual = relative_residual(&total, fast.values());
    out.metric("master_residual", fmt_f64(residual));
    out.metric("scatterers", d.len());
    out.summary.push(format!("{} scatterer(s), master identity residual {residual:.3e}", d.len()));
    Ok(out)
}

fn reconstruct(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (scene, zeta, h2) = setup(cfg)?;
    let h = record_hologram(&scene, &zeta, &h2)?;
    let dc = match cfg.dc_mode {
        DcMode::None => DcRemoval::None,
        DcMode::SubtractMean => DcRemoval::SubtractMean,
        DcMode::SubtractP0 => DcRemoval::SubtractP0(record_hologram(&scene.without_scatterers(), &zeta, &h2)?),
    };
    let family = ChamberBackprop::new(cfg.geometry(), zeta, h2)?;
    let r = gabor_reconstruct(&h, &family, &cfg.depths, &dc, cfg.peaks)?;

    let mut out = Outcome::default();
    out.put("hologram.csv", csv(h.grid(), h.values())?);
    for (k, s) in r.slices.iter().enumerate() {
        let mut b = Vec::new();
        let scale = write_pgm(&mut b, s)?;
        out.put(format!("slice_{k}.pgm"), b);
        out.put(format!("slice_{k}.pgm.txt"), format!("depth {}\n{}", fmt_f64(r.depths[k]), scale.sidecar()).into_bytes());
        out.put(format!("slice_{k}.qhf"), qhf(s)?);
    }
    let ndim = r.slices[0].grid().ndim();
    let mut b = Vec::new();
    write_peaks_csv(&mut b, ndim, &r.peaks.peaks)?;
    out.put("peaks.csv", b);
    let pbr = r.peak_to_background();
    out.metric("peak_to_background", fmt_f64(pbr));
    out.metric("dc_mode", r.dc_mode.as_str());
    out.metric("dc_oracle_assisted", r.dc_mode.oracle_assisted());
    out.metric("peaks_truncated", r.peaks.truncated);
    if let Some(p) = r.peaks.peaks.first() {
        let pos = &p.position[..ndim];
        out.summary.push(format!(
            "strongest peak at {:?}, depth {}, peak-to-background {pbr:.3}",
            pos, p.depth
        ));
    }
    Ok(out)
}

fn montecarlo(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (scene, zeta, h2) = setup(cfg)?;
    let cells = scene.wall_grid().len() * h2.output_grid().len();
    if cells > MC_MAX_CELLS {
        return Err(QholoError::BudgetExceeded {
            what: "coincidence map cells",
            requested: cells,
            cap: MC_MAX_CELLS,
        });
    }
    let h1 = effective_h1(&scene)?;
    let p = coincidence_rate(&biphoton_amplitude(&zeta, &h1, &h2)?);
    let events = sample_pairs(&p, scene.wall(), cfg.mc_n, cfg.seed)?;
    let hist = bucket_histogram(&events, p.detector_grid())?;
    let truth = marginal_fast(&zeta, &h1, &h2, scene.wall())?;
    let report = convergence_report(&hist, &truth)?;

    let mut out = Outcome::default();
    let mut b = Vec::new();
    write_qhe1(&mut b, &events)?;
    out.put("events.qhe", b);
    let counts: Vec<f64> = hist.counts.iter().map(|&c| c as f64).collect();
    out.put("histogram.csv", csv(&hist.grid, &counts)?);
    let analytic = truth
        .normalized()
        .ok_or_else(|| QholoError::Degenerate("analytic hologram is identically zero".into()))?;
    out.put("analytic.csv", csv(analytic.grid(), analytic.values())?);
    out.metric("events", cfg.mc_n);
    out.metric("l1", fmt_f64(report.l1));
    out.metric("max_abs", fmt_f64(report.max_abs));
    out.summary
        .push(format!("{} events, L1 distance to analytic hologram {:.4e}", cfg.mc_n, report.l1));
    Ok(out)
}

struct Check {
    name: String,
    residual: f64,
    tol: f64,
    note: Option<String>,
}

fn random_field(rng: &mut ChaCha8Rng, grid: GridSpec) -> ComplexField {
    let v = (0..grid.len())
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    ComplexField::new(grid, v).expect("finite values")
}

fn random_kernel(rng: &mut ChaCha8Rng, input: GridSpec, output: GridSpec) -> Result<DenseKernel> {
    let v = (0..input.len() * output.len())
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    DenseKernel::new(input, output, v)
}

/// Random unitary kernel: phases × DFT × phases, scaled to the cell measure.
fn random_unitary(rng: &mut ChaCha8Rng, grid: GridSpec) -> Result<DenseKernel> {
    let n = grid.len();
    let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
    let b: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
    let s = 1.0 / ((n as f64).sqrt() * grid.cell_measure());
    let v = (0..n * n)
        .map(|k| {
            let (o, i) = (k / n, k % n);
            let ph = a[o] + b[i] - std::f64::consts::TAU * (o * i) as f64 / n as f64;
            Complex64::from_polar(s, ph)
        })
        .collect();
    DenseKernel::new(grid, grid, v)
}

fn adjoint_defect(rng: &mut ChaCha8Rng, h: &OpticalSystem) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let u = random_field(rng, *h.output_grid());
        let v = random_field(rng, *h.input_grid());
        let lhs = u.dot(&h.apply_forward(&v)?)?;
        let rhs = h.apply_adjoint(&u)?.dot(&v)?;
        worst = worst.max((lhs - rhs).norm() / (u.norm() * v.norm()));
    }
    Ok(worst)
}

fn random_checks(cfg: &ExperimentConfig, checks: &mut Vec<Check>) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let budget = OracleBudget::default();
    let g = GridSpec::line(16, 16.0 * 0.37)?;
    let mut fast_dense: f64 = 0.0;
    for _ in 0..20 {
        let zeta = PumpProfile::new(random_field(&mut rng, g));
        let k1 = random_kernel(&mut rng, g, g)?;
        let k2 = random_kernel(&mut rng, g, g)?;
        let wall = DomainMask::from_fn(g, |x| x[0] > -1.5)?;
        let dense = dense_marginal(&zeta, &k1, &k2, &wall, &budget)?;
        let fast = marginal_fast(&zeta, &OpticalSystem::dense(k1), &OpticalSystem::dense(k2), &wall)?;
        fast_dense = fast_dense.max(relative_residual(fast.values(), dense.values()));
    }
    checks.push(Check {
        name: "marginal fast vs dense (16 cells, 20 trials)".into(),
        residual: fast_dense,
        tol: 1e-10,
        note: None,
    });

    let mut unitary: f64 = 0.0;
    for _ in 0..5 {
        let zeta = PumpProfile::new(random_field(&mut rng, g));
        let h1 = OpticalSystem::dense(random_unitary(&mut rng, g)?);
        let h2 = OpticalSystem::dense(random_kernel(&mut rng, g, g)?);
        let full = DomainMask::full(g);
        let p = marginal_fast(&zeta, &h1, &h2, &full)?;
        let s = singles_rate_detector2(&zeta, &h2)?;
        unitary = unitary.max(relative_residual(p.values(), s.values()));
    }
    checks.push(Check {
        name: "unitary h1 on full wall gives singles rate".into(),
        residual: unitary,
        tol: 1e-9,
        note: None,
    });
    Ok(())
}

fn config_checks(cfg: &ExperimentConfig, checks: &mut Vec<Check>) -> Result<()> {
    let (scene, zeta, h2) = setup(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED);
    let h1 = effective_h1(&scene)?;

    let mut adj: f64 = 0.0;
    for h in [scene.direct(), &h1, &h2] {
        adj = adj.max(adjoint_defect(&mut rng, h)?);
    }
    checks.push(Check {
        name: "adjoint identity (direct, effective, detector)".into(),
        residual: adj,
        tol: 1e-10,
        note: None,
    });

    let d = hologram_decomposition(&scene, &zeta, &h2)?;
    let fast = marginal_fast(&zeta, &h1, &h2, scene.wall())?;
    checks.push(Check {
        name: "master decomposition identity".into(),
        residual: relative_residual(&d.total(), fast.values()),
        tol: 1e-9,
        note: None,
    });

    let zero = scene.map_eta(|_, _| Complex64::new(0.0, 0.0));
    let p0 = record_hologram(&scene.without_scatterers(), &zeta, &h2)?;
    let pz = record_hologram(&zero, &zeta, &h2)?;
    checks.push(Check {
        name: "zero scattering strength equals empty scene".into(),
        residual: pz.max_abs_diff(&p0)?,
        tol: 1e-12,
        note: None,
    });

    let budget = cfg.budget()?;
    let dense = (|| {
        let k1 = h1.to_dense(&budget)?;
        let k2 = h2.to_dense(&budget)?;
        dense_marginal(&zeta, &k1, &k2, scene.wall(), &budget)
    })();
    match dense {
        Ok(dense) => checks.push(Check {
            name: "configured marginal vs dense quadrature".into(),
            residual: relative_residual(fast.values(), dense.values()),
            tol: 1e-10,
            note: None,
        }),
        Err(QholoError::BudgetExceeded { what, requested, cap }) => checks.push(Check {
            name: "configured marginal vs dense quadrature".into(),
            residual: 0.0,
            tol: 0.0,
            note: Some(format!("skipped: {what} {requested} exceeds {cap}")),
        }),
        Err(e) => return Err(e),
    }
    Ok(())
}

fn oracle_check(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut checks = Vec::new();
    random_checks(cfg, &mut checks)?;
    config_checks(cfg, &mut checks)?;

    let mut out = Outcome::default();
    let mut report = String::new();
    let mut rows = Vec::new();
    for c in &checks {
        let tol = c.tol * cfg.tolerance_scale;
        let (status, line) = match &c.note {
            Some(n) => ("SKIP", format!("SKIP {}: {n}", c.name)),
            None if c.residual <= tol => ("PASS", format!("PASS {}: residual {} <= {}", c.name, fmt_f64(c.residual), fmt_f64(tol))),
            None => ("FAIL", format!("FAIL {}: residual {} > {}", c.name, fmt_f64(c.residual), fmt_f64(tol))),
        };
        if status == "FAIL" {
            out.tolerance_failed = true;
        }
        report += &line;
        report.push('\n');
        out.summary.push(line);
        rows.push(json!({
            "name": c.name,
            "status": status,
            "residual": fmt_f64(c.residual),
            "tolerance": fmt_f64(tol),
        }));
    }
    out.put("report.txt", report.into_bytes());
    out.metric("checks", Value::Array(rows));
    Ok(out)
}
