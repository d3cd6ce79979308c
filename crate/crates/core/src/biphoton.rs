//! Observables of the entangled source.
//!
//! The pair amplitude for detections at `x1` (chamber wall) and `x2` (detector 2) is
//! `A(x1, x2) = Σ_x h1(x1, x) ζ(x) h2(x2, x) · dx`, the coincidence rate is `|A|^2`, and the
//! bucket hologram sums the rate over the wall: `p̄(x2) = Σ_{x1 ∈ wall} |A(x1, x2)|^2 · dx1`.
//!
//! The same hologram follows from the two-point kernel
//! `g1(x, x') = Σ_{x1 ∈ wall} conj(h1(x1, x)) h1(x1, x') · dx1` as
//! `p̄(x2) = ΣΣ g1(x, x') conj(ζ(x) h2(x2, x)) ζ(x') h2(x2, x') · dx dx'`.
//!
//! Rates are reported without any prefactor ([`ScaleConvention::RawQuadrature`]).
//! Work over detector-2 cells runs in parallel; every cell is summed in a fixed order,
//! so results do not depend on the worker count.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{QholoError, Result};
use crate::grid::{pointwise_multiply, ComplexField, DomainMask, GridSpec};
use crate::hologram::{hash_field, hash_mask, Hologram, Provenance, ScaleConvention};
use crate::optics::OpticalSystem;
use crate::oracle::OracleBudget;

/// Pair-emission amplitude ζ on the source plane.
#[derive(Clone, Debug, PartialEq)]
pub struct PumpProfile {
    field: ComplexField,
    normalized: bool,
}

impl PumpProfile {
    pub fn new(field: ComplexField) -> Self {
        PumpProfile {
            field,
            normalized: false,
        }
    }

    pub fn normalized(field: ComplexField) -> Result<Self> {
        Ok(PumpProfile {
            field: crate::grid::normalize(&field)?,
            normalized: true,
        })
    }

    /// Normalized Gaussian amplitude `exp(-|x - c|^2 / (2 w^2))`.
    pub fn gaussian(grid: GridSpec, width: f64, center: [f64; 2]) -> Result<Self> {
        if !(width.is_finite() && width > 0.0) {
            return Err(QholoError::InvalidParameter(format!("pump width must be positive, got {width}")));
        }
        let f = ComplexField::from_fn(grid, |x| {
            let r2 = (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2);
            Complex64::new((-r2 / (2.0 * width * width)).exp(), 0.0)
        })?;
        Self::normalized(f)
    }

    pub fn uniform(grid: GridSpec) -> Result<Self> {
        Self::normalized(ComplexField::ones(grid))
    }

    /// All weight in one cell: amplitude `1/sqrt(cell_measure)`.
    pub fn delta(grid: GridSpec, cell: usize) -> Result<Self> {
        let d = ComplexField::delta(grid, cell)?;
        Self::normalized(d)
    }

    pub fn field(&self) -> &ComplexField {
        &self.field
    }

    pub fn grid(&self) -> &GridSpec {
        self.field.grid()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// `c · ζ`; stays flagged normalized only for unimodular `c`.
    pub fn scaled(&self, c: Complex64) -> Self {
        PumpProfile {
            field: self.field.scale(c),
            normalized: self.normalized && (c.norm() - 1.0).abs() < 1e-15,
        }
    }

    pub fn hash(&self) -> String {
        hash_field(&self.field)
    }
}

/// `A(x1, x2)` stored row-major over (wall cell, detector-2 cell).
#[derive(Clone, Debug, PartialEq)]
pub struct BiphotonAmplitude {
    wall_grid: GridSpec,
    detector_grid: GridSpec,
    values: Vec<Complex64>,
}

impl BiphotonAmplitude {
    pub fn new(wall_grid: GridSpec, detector_grid: GridSpec, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != wall_grid.len() * detector_grid.len() {
            return Err(QholoError::GridMismatch(format!(
                "{} amplitudes for {wall_grid} x {detector_grid}",
                values.len()
            )));
        }
        Ok(BiphotonAmplitude {
            wall_grid,
            detector_grid,
            values,
        })
    }

    pub fn wall_grid(&self) -> &GridSpec {
        &self.wall_grid
    }

    pub fn detector_grid(&self) -> &GridSpec {
        &self.detector_grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn get(&self, x1: usize, x2: usize) -> Complex64 {
        self.values[x1 * self.detector_grid.len() + x2]
    }

    pub fn max_abs_diff(&self, other: &BiphotonAmplitude) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// `p(x1, x2) = |A(x1, x2)|^2`, row-major over (wall cell, detector-2 cell).
#[derive(Clone, Debug, PartialEq)]
pub struct CoincidenceMap {
    wall_grid: GridSpec,
    detector_grid: GridSpec,
    values: Vec<f64>,
    scale: ScaleConvention,
}

impl CoincidenceMap {
    pub fn new(wall_grid: GridSpec, detector_grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != wall_grid.len() * detector_grid.len() {
            return Err(QholoError::GridMismatch(format!(
                "{} rates for {wall_grid} x {detector_grid}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(QholoError::InvalidParameter(format!("rate at {i} is negative or non-finite")));
        }
        Ok(CoincidenceMap {
            wall_grid,
            detector_grid,
            values,
            scale: ScaleConvention::RawQuadrature,
        })
    }

    pub fn wall_grid(&self) -> &GridSpec {
        &self.wall_grid
    }

    pub fn detector_grid(&self) -> &GridSpec {
        &self.detector_grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scale(&self) -> ScaleConvention {
        self.scale
    }

    pub fn get(&self, x1: usize, x2: usize) -> f64 {
        self.values[x1 * self.detector_grid.len() + x2]
    }
}

/// `g1(x, x')` over source × source, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CoherenceKernel {
    grid: GridSpec,
    values: Vec<Complex64>,
}

impl CoherenceKernel {
    pub fn new(grid: GridSpec, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() * grid.len() {
            return Err(QholoError::GridMismatch(format!("{} kernel entries for {grid}", values.len())));
        }
        Ok(CoherenceKernel { grid, values })
    }

    /// `δ(x - x')` on the grid: `1 / cell_measure` on the diagonal.
    pub fn identity(grid: GridSpec) -> Self {
        let n = grid.len();
        let mut values = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            values[i * n + i] = Complex64::new(1.0 / grid.cell_measure(), 0.0);
        }
        CoherenceKernel { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn get(&self, x: usize, xp: usize) -> Complex64 {
        self.values[x * self.grid.len() + xp]
    }

    /// Largest entrywise deviation from `other`, relative to `1 / cell_measure`.
    pub fn relative_deviation(&self, other: &CoherenceKernel) -> f64 {
        let scale = 1.0 / self.grid.cell_measure();
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
            / scale
    }

    /// Largest `|g1(x, x') - conj(g1(x', x))|`.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.grid.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }
}

fn ensure_source(sys: &OpticalSystem, zeta: &PumpProfile, name: &str) -> Result<()> {
    sys.input_grid().ensure_same(zeta.grid()).map_err(|e| {
        QholoError::GridMismatch(format!("{name} input must be the source grid: {e}"))
    })
}

fn provenance(zeta: &PumpProfile, wall: Option<&DomainMask>) -> Provenance {
    Provenance {
        scene: None,
        pump: Some(zeta.hash()),
        wall: wall.map(hash_mask),
        scale: ScaleConvention::RawQuadrature,
    }
}

/// `A(x1, x2)`, one detector-2 column at a time:
/// column `x2` is `h1` applied to `ζ · h2(x2, ·)`.
pub fn biphoton_amplitude(zeta: &PumpProfile, h1: &OpticalSystem, h2: &OpticalSystem) -> Result<BiphotonAmplitude> {
    ensure_source(h1, zeta, "h1")?;
    ensure_source(h2, zeta, "h2")?;
    let (wall, det) = (*h1.output_grid(), *h2.output_grid());
    let columns: Vec<ComplexField> = (0..det.len())
        .into_par_iter()
        .map(|x2| {
            let w = pointwise_multiply(zeta.field(), &h2.kernel_row(x2)?)?;
            h1.apply_forward(&w)
        })
        .collect::<Result<_>>()?;
    let n2 = det.len();
    let mut values = vec![Complex64::new(0.0, 0.0); wall.len() * n2];
    for (x2, col) in columns.iter().enumerate() {
        for (x1, v) in col.values().iter().enumerate() {
            values[x1 * n2 + x2] = *v;
        }
    }
    BiphotonAmplitude::new(wall, det, values)
}

/// `A(x1, x2)` in the other evaluation order: row `x1` is `h2` applied to `ζ · h1(x1, ·)`.
pub fn biphoton_amplitude_by_rows(
    zeta: &PumpProfile,
    h1: &OpticalSystem,
    h2: &OpticalSystem,
) -> Result<BiphotonAmplitude> {
    ensure_source(h1, zeta, "h1")?;
    ensure_source(h2, zeta, "h2")?;
    let (wall, det) = (*h1.output_grid(), *h2.output_grid());
    let rows: Vec<ComplexField> = (0..wall.len())
        .into_par_iter()
        .map(|x1| {
            let w = pointwise_multiply(zeta.field(), &h1.kernel_row(x1)?)?;
            h2.apply_forward(&w)
        })
        .collect::<Result<_>>()?;
    let values = rows.into_iter().flat_map(|r| r.into_values()).collect();
    BiphotonAmplitude::new(wall, det, values)
}

pub fn coincidence_rate(a: &BiphotonAmplitude) -> CoincidenceMap {
    CoincidenceMap {
        wall_grid: a.wall_grid,
        detector_grid: a.detector_grid,
        values: a.values.iter().map(|v| v.norm_sqr()).collect(),
        scale: ScaleConvention::RawQuadrature,
    }
}

/// `p̄(x2) = Σ_{x1 ∈ wall} p(x1, x2) · dx1`.
pub fn marginal_hologram(p: &CoincidenceMap, wall: &DomainMask) -> Result<Hologram> {
    p.wall_grid.ensure_same(wall.grid())?;
    if wall.count() == 0 {
        return Err(QholoError::EmptyMask);
    }
    let n2 = p.detector_grid.len();
    let w = p.wall_grid.cell_measure();
    let mut acc = vec![0.0; n2];
    for x1 in wall.indices() {
        for (a, v) in acc.iter_mut().zip(&p.values[x1 * n2..(x1 + 1) * n2]) {
            *a += v;
        }
    }
    Ok(Hologram::new(p.detector_grid, acc.into_iter().map(|v| v * w).collect())?.with_provenance(Provenance {
        wall: Some(hash_mask(wall)),
        ..Provenance::default()
    }))
}

/// Marginal hologram without materializing `A`: each detector-2 cell propagates
/// `ζ · h2(x2, ·)` through `h1` and sums `|·|^2` over the wall.
pub fn marginal_fast(
    zeta: &PumpProfile,
    h1: &OpticalSystem,
    h2: &OpticalSystem,
    wall: &DomainMask,
) -> Result<Hologram> {
    ensure_source(h1, zeta, "h1")?;
    ensure_source(h2, zeta, "h2")?;
    h1.output_grid().ensure_same(wall.grid())?;
    let det = *h2.output_grid();
    let w = wall.grid().cell_measure();
    let values: Vec<f64> = (0..det.len())
        .into_par_iter()
        .map(|x2| {
            let u = pointwise_multiply(zeta.field(), &h2.kernel_row(x2)?)?;
            let col = h1.apply_forward(&u)?;
            let s: f64 = wall.indices().map(|x1| col.get(x1).norm_sqr()).sum();
            Ok(s * w)
        })
        .collect::<Result<_>>()?;
    Ok(Hologram::new(det, values)?.with_provenance(provenance(zeta, Some(wall))))
}

/// `g1(x, x') = Σ_{x1 ∈ wall} conj(h1(x1, x)) h1(x1, x') · dx1`.
pub fn coherence_kernel(h1: &OpticalSystem, wall: &DomainMask, budget: &OracleBudget) -> Result<CoherenceKernel> {
    h1.output_grid().ensure_same(wall.grid())?;
    let src = *h1.input_grid();
    budget.check_plane(&src)?;
    budget.check_matrix(src.len(), src.len())?;
    let n = src.len();
    let columns: Vec<ComplexField> = (0..n)
        .into_par_iter()
        .map(|x| crate::grid::restrict(&h1.point_response(x)?, wall))
        .collect::<Result<_>>()?;
    let rows: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|x| columns.iter().map(|cp| columns[x].dot(cp)).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    CoherenceKernel::new(src, rows.into_iter().flatten().collect())
}

/// Hologram from the coherence kernel: a double sum over source cells per detector-2 cell.
pub fn marginal_via_kernel(zeta: &PumpProfile, g1: &CoherenceKernel, h2: &OpticalSystem) -> Result<Hologram> {
    g1.grid.ensure_same(zeta.grid())?;
    ensure_source(h2, zeta, "h2")?;
    let det = *h2.output_grid();
    let n = zeta.grid().len();
    let w = zeta.grid().cell_measure();
    let values: Vec<f64> = (0..det.len())
        .into_par_iter()
        .map(|x2| {
            let u = pointwise_multiply(zeta.field(), &h2.kernel_row(x2)?)?;
            let u = u.values();
            let mut s = Complex64::new(0.0, 0.0);
            for x in 0..n {
                let row = &g1.values[x * n..(x + 1) * n];
                let inner = row.iter().zip(u).fold(Complex64::new(0.0, 0.0), |acc, (g, v)| acc + g * v);
                s += u[x].conj() * inner;
            }
            Ok(s.re * w * w)
        })
        .collect::<Result<_>>()?;
    Ok(Hologram::new(det, values)?.with_provenance(provenance(zeta, None)))
}

/// Detector-2 singles: `s(x2) = Σ_x |ζ(x)|^2 |h2(x2, x)|^2 · dx`. Depends on nothing but ζ and h2.
pub fn singles_rate_detector2(zeta: &PumpProfile, h2: &OpticalSystem) -> Result<Hologram> {
    ensure_source(h2, zeta, "h2")?;
    let det = *h2.output_grid();
    let w = zeta.grid().cell_measure();
    let values: Vec<f64> = (0..det.len())
        .into_par_iter()
        .map(|x2| {
            let row = h2.kernel_row(x2)?;
            let s: f64 = zeta
                .field()
                .values()
                .iter()
                .zip(row.values())
                .map(|(z, h)| z.norm_sqr() * h.norm_sqr())
                .sum();
            Ok(s * w)
        })
        .collect::<Result<_>>()?;
    Ok(Hologram::new(det, values)?.with_provenance(provenance(zeta, None)))
}

/// Probability that photon 1 lands on the wall: `Σ_x |ζ(x)|^2 Σ_{x1 ∈ wall} |h1(x1, x)|^2 · dx1 dx^2`.
/// Equals 1 for a normalized pump, a unitary `h1` and the full output plane.
pub fn wall_singles_total(zeta: &PumpProfile, h1: &OpticalSystem, wall: &DomainMask) -> Result<f64> {
    ensure_source(h1, zeta, "h1")?;
    h1.output_grid().ensure_same(wall.grid())?;
    let ww = wall.grid().cell_measure();
    let per_cell: Vec<f64> = (0..zeta.grid().len())
        .into_par_iter()
        .map(|x| {
            let z2 = zeta.field().get(x).norm_sqr();
            if z2 == 0.0 {
                return Ok(0.0);
            }
            let col = h1.point_response(x)?;
            let s: f64 = wall.indices().map(|x1| col.get(x1).norm_sqr()).sum();
            Ok(z2 * s * ww)
        })
        .collect::<Result<_>>()?;
    let w = zeta.grid().cell_measure();
    Ok(per_cell.iter().sum::<f64>() * w * w)
}

/// Separable baseline `p_cl(x1, x2) = s1(x1) s2(x2)` summed over the wall: the detector-2
/// singles scaled by the wall singles total. Carries no trace of the scene's shape.
pub fn classical_factorized_marginal(
    zeta: &PumpProfile,
    h1: &OpticalSystem,
    h2: &OpticalSystem,
    wall: &DomainMask,
) -> Result<Hologram> {
    let total = wall_singles_total(zeta, h1, wall)?;
    let s2 = singles_rate_detector2(zeta, h2)?;
    let det = *s2.grid();
    Ok(Hologram::new(det, s2.values().iter().map(|v| v * total).collect())?
        .with_provenance(provenance(zeta, Some(wall))))
}
