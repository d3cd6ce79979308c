//! Point scatterers inside the chamber and the split of the hologram into its terms.
//!
//! Each scatterer `j` sits at cell `c_j` of a scatterer plane. `hI_j` carries light from the
//! source to that plane and `hS_j` from the plane to the wall. Single scattering adds a second
//! path to the direct system `h0`:
//!
//! `h1(x1, x) = h0(x1, x) + Σ_j η'_j hS_j(x1, c_j) hI_j(c_j, x)`, with `η'_j = η_j · dA_j`
//!
//! where `dA_j` is the cell measure of the scatterer plane, so `η_j` is dimensionless.
//!
//! With `q_j(x2) = Σ_x h2(x2, x) ζ(x) hI_j(c_j, x) dx`,
//! `f_j(x) = Σ_{x1 ∈ wall} conj(h0(x1, x)) hS_j(x1, c_j) dx1`,
//! `r_j(x2) = Σ_x h2(x2, x) ζ(x) conj(f_j(x)) dx` and the wall overlap
//! `O_ij = Σ_{x1 ∈ wall} conj(hS_i(x1, c_i)) hS_j(x1, c_j) dx1`, the bucket hologram splits as
//!
//! `p̄ = p̄0 + Re Σ_ij conj(η'_i q_i) η'_j q_j O_ij + 2 Re Σ_j η'_j q_j conj(r_j)`.
//!
//! The wall domain and the per-scatterer illumination amplitude are distinct objects:
//! [`wall_overlap`] returns `O_ij`, [`illumination_amplitude`] the pump amplitude reaching
//! scatterer `j`.

use num_complex::Complex64;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::biphoton::{marginal_fast, PumpProfile};
use crate::error::{QholoError, Result};
use crate::grid::{inner_product, pointwise_multiply, restrict, ComplexField, DomainMask, GridSpec};
use crate::hologram::{hash_grid, hash_mask, Hologram, Provenance, ScaleConvention};
use crate::optics::{compose, OpticalSystem, RankTerm};

/// Source plane, optional lens, opening, free space to the scatterer planes and on to a
/// planar wall. The chamber shares the wall grid; depths are measured from the opening.
#[derive(Clone, Debug, PartialEq)]
pub struct ChamberGeometry {
    pub source: GridSpec,
    pub wall: GridSpec,
    pub wavelength: f64,
    pub lens_focal: Option<f64>,
    pub opening_distance: f64,
    /// Full width of the square opening aperture; `None` leaves it open.
    pub opening_width: Option<f64>,
    pub wall_distance: f64,
}

impl ChamberGeometry {
    pub fn validate(&self) -> Result<()> {
        if !self.source.same_spacing(&self.wall) {
            return Err(QholoError::InvalidGrid(format!(
                "source {} and wall {} must share the cell size",
                self.source, self.wall
            )));
        }
        if !(self.wavelength.is_finite() && self.wavelength > 0.0) {
            return Err(QholoError::InvalidParameter(format!("wavelength {}", self.wavelength)));
        }
        if !(self.opening_distance.is_finite() && self.opening_distance >= 0.0) {
            return Err(QholoError::InvalidParameter(format!(
                "opening_distance {}",
                self.opening_distance
            )));
        }
        if !(self.wall_distance.is_finite() && self.wall_distance > 0.0) {
            return Err(QholoError::InvalidParameter(format!("wall_distance {}", self.wall_distance)));
        }
        if let Some(f) = self.lens_focal {
            if !(f.is_finite() && f != 0.0) {
                return Err(QholoError::InvalidParameter(format!("lens_focal {f}")));
            }
        }
        if let Some(w) = self.opening_width {
            if !(w.is_finite() && w > 0.0) {
                return Err(QholoError::InvalidParameter(format!("opening_width {w}")));
            }
        }
        Ok(())
    }

    pub fn contains_depth(&self, depth: f64) -> bool {
        depth > 0.0 && depth < self.wall_distance
    }

    fn free_space(&self, distance: f64) -> Result<OpticalSystem> {
        if distance == 0.0 {
            Ok(OpticalSystem::identity(self.wall))
        } else {
            OpticalSystem::fresnel(self.wall, self.wavelength, distance)
        }
    }

    /// Source plane to the opening plane.
    pub fn to_opening(&self) -> Result<OpticalSystem> {
        self.validate()?;
        let mut sys = if self.source == self.wall {
            OpticalSystem::identity(self.wall)
        } else {
            OpticalSystem::embed(self.source, self.wall)?
        };
        if let Some(f) = self.lens_focal {
            sys = compose(&OpticalSystem::thin_lens(self.wall, f, self.wavelength)?, &sys)?;
        }
        sys = compose(&self.free_space(self.opening_distance)?, &sys)?;
        if let Some(w) = self.opening_width {
            let half = w / 2.0;
            let ndim = self.wall.ndim();
            let aperture = ComplexField::from_fn(self.wall, |x| {
                let inside = (0..ndim).all(|a| x[a].abs() <= half);
                Complex64::new(if inside { 1.0 } else { 0.0 }, 0.0)
            })?;
            sys = compose(&OpticalSystem::mask(aperture), &sys)?;
        }
        Ok(sys)
    }

    /// `h0`: source to wall with nothing in the chamber.
    pub fn direct(&self) -> Result<OpticalSystem> {
        compose(&self.free_space(self.wall_distance)?, &self.to_opening()?)
    }

    /// `hI`: source to the scatterer plane at `depth`.
    pub fn illumination(&self, depth: f64) -> Result<OpticalSystem> {
        self.check_depth(depth)?;
        compose(&self.free_space(depth)?, &self.to_opening()?)
    }

    /// `hS`: scatterer plane at `depth` to the wall.
    pub fn scattering(&self, depth: f64) -> Result<OpticalSystem> {
        self.check_depth(depth)?;
        self.free_space(self.wall_distance - depth)
    }

    fn check_depth(&self, depth: f64) -> Result<()> {
        if self.contains_depth(depth) {
            Ok(())
        } else {
            Err(QholoError::InvalidParameter(format!(
                "depth {depth} outside the chamber (0, {})",
                self.wall_distance
            )))
        }
    }
}

/// A point scatterer: transverse position (second coordinate ignored on 1-D grids), depth and
/// dimensionless complex strength.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointScatterer {
    pub position: [f64; 2],
    pub depth: f64,
    pub eta: Complex64,
}

impl PointScatterer {
    pub fn new(position: [f64; 2], depth: f64, eta: Complex64) -> Result<Self> {
        if !(position.iter().all(|p| p.is_finite()) && depth.is_finite() && eta.re.is_finite() && eta.im.is_finite())
        {
            return Err(QholoError::InvalidParameter("scatterer parameters must be finite".into()));
        }
        Ok(PointScatterer { position, depth, eta })
    }
}

/// A scatterer with its paths and the grid cell it was snapped to.
#[derive(Clone, Debug)]
pub struct PlacedScatterer {
    scatterer: PointScatterer,
    cell: usize,
    snap_offset: [f64; 2],
    illumination: OpticalSystem,
    scattering: OpticalSystem,
}

impl PlacedScatterer {
    pub fn scatterer(&self) -> &PointScatterer {
        &self.scatterer
    }

    pub fn cell(&self) -> usize {
        self.cell
    }

    /// Snapped cell centre minus requested position.
    pub fn snap_offset(&self) -> [f64; 2] {
        self.snap_offset
    }

    /// `hI`: source to scatterer plane.
    pub fn illumination(&self) -> &OpticalSystem {
        &self.illumination
    }

    /// `hS`: scatterer plane to wall.
    pub fn scattering(&self) -> &OpticalSystem {
        &self.scattering
    }

    /// `η' = η · dA` of the scatterer plane.
    pub fn effective_eta(&self) -> Complex64 {
        self.scatterer.eta * self.illumination.output_grid().cell_measure()
    }
}

#[derive(Clone, Debug)]
pub struct Scene {
    direct: OpticalSystem,
    wall: DomainMask,
    scatterers: Vec<PlacedScatterer>,
}

impl Scene {
    pub fn new(direct: OpticalSystem, wall: DomainMask) -> Result<Self> {
        direct.output_grid().ensure_same(wall.grid())?;
        Ok(Scene {
            direct,
            wall,
            scatterers: Vec::new(),
        })
    }

    pub fn from_geometry(geometry: &ChamberGeometry, wall: DomainMask, scatterers: &[PointScatterer]) -> Result<Self> {
        let mut scene = Scene::new(geometry.direct()?, wall)?;
        for s in scatterers {
            scene.add_scatterer(*s, geometry.illumination(s.depth)?, geometry.scattering(s.depth)?)?;
        }
        Ok(scene)
    }

    /// Adds a scatterer with explicit paths, snapping it to the nearest cell of
    /// `illumination`'s output grid.
    pub fn add_scatterer(
        &mut self,
        scatterer: PointScatterer,
        illumination: OpticalSystem,
        scattering: OpticalSystem,
    ) -> Result<()> {
        illumination.input_grid().ensure_same(self.direct.input_grid())?;
        scattering.input_grid().ensure_same(illumination.output_grid())?;
        scattering.output_grid().ensure_same(self.wall.grid())?;
        let plane = *illumination.output_grid();
        let (cell, snap_offset) = plane.nearest_cell(scatterer.position).ok_or_else(|| {
            QholoError::InvalidParameter(format!(
                "scatterer at {:?} lies outside the scatterer plane {plane}",
                &scatterer.position[..plane.ndim()]
            ))
        })?;
        self.scatterers.push(PlacedScatterer {
            scatterer,
            cell,
            snap_offset,
            illumination,
            scattering,
        });
        Ok(())
    }

    pub fn source_grid(&self) -> &GridSpec {
        self.direct.input_grid()
    }

    pub fn wall_grid(&self) -> &GridSpec {
        self.direct.output_grid()
    }

    pub fn wall(&self) -> &DomainMask {
        &self.wall
    }

    /// `h0`.
    pub fn direct(&self) -> &OpticalSystem {
        &self.direct
    }

    pub fn len(&self) -> usize {
        self.scatterers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scatterers.is_empty()
    }

    pub fn scatterers(&self) -> &[PlacedScatterer] {
        &self.scatterers
    }

    pub fn scatterer(&self, j: usize) -> Result<&PlacedScatterer> {
        self.scatterers.get(j).ok_or(QholoError::IndexOutOfRange {
            index: j,
            len: self.scatterers.len(),
        })
    }

    pub fn without_scatterers(&self) -> Scene {
        Scene {
            direct: self.direct.clone(),
            wall: self.wall.clone(),
            scatterers: Vec::new(),
        }
    }

    /// Same scene with every `η_j` replaced by `map(j, η_j)`.
    pub fn map_eta(&self, mut map: impl FnMut(usize, Complex64) -> Complex64) -> Scene {
        let mut out = self.clone();
        for (j, s) in out.scatterers.iter_mut().enumerate() {
            s.scatterer.eta = map(j, s.scatterer.eta);
        }
        out
    }

    pub fn with_wall(&self, wall: DomainMask) -> Result<Scene> {
        self.wall_grid().ensure_same(wall.grid())?;
        Ok(Scene {
            wall,
            ..self.clone()
        })
    }

    /// Keeps only the scatterers whose indices are listed.
    pub fn subset(&self, keep: &[usize]) -> Result<Scene> {
        let mut out = self.without_scatterers();
        for &j in keep {
            out.scatterers.push(self.scatterer(j)?.clone());
        }
        Ok(out)
    }

    /// SHA-256 over the systems, the wall mask and every scatterer.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        self.direct.digest_into(&mut h);
        h.update(hash_mask(&self.wall).as_bytes());
        for s in &self.scatterers {
            for v in [s.scatterer.position[0], s.scatterer.position[1], s.scatterer.depth, s.scatterer.eta.re, s.scatterer.eta.im] {
                h.update(v.to_le_bytes());
            }
            h.update((s.cell as u64).to_le_bytes());
            hash_grid(&mut h, s.illumination.output_grid());
            s.illumination.digest_into(&mut h);
            s.scattering.digest_into(&mut h);
        }
        hex::encode(h.finalize())
    }
}

/// The source-to-wall system including every single-scattering path.
pub fn effective_h1(scene: &Scene) -> Result<OpticalSystem> {
    if scene.is_empty() {
        return Ok(scene.direct.clone());
    }
    let terms = scene
        .scatterers
        .iter()
        .map(|s| {
            let plane = *s.illumination.output_grid();
            Ok(RankTerm {
                weight: s.effective_eta(),
                left: s.scattering.point_response(s.cell)?,
                right: s.illumination.apply_adjoint(&ComplexField::delta(plane, s.cell)?)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    OpticalSystem::rank_update(scene.direct.clone(), terms)
}

/// Pump amplitude reaching scatterer `j`, `dA · Σ_x hI_j(c_j, x) ζ(x) dx`: the weight the
/// scattering path receives in [`effective_h1`] per unit `η`.
pub fn illumination_amplitude(scene: &Scene, j: usize, zeta: &PumpProfile) -> Result<Complex64> {
    let s = scene.scatterer(j)?;
    let u = s.illumination.apply_forward(zeta.field())?;
    Ok(u.get(s.cell) * s.illumination.output_grid().cell_measure())
}

/// `q_j = h2(ζ · hI_j(c_j, ·))`.
pub fn q_field(scene: &Scene, j: usize, zeta: &PumpProfile, h2: &OpticalSystem) -> Result<ComplexField> {
    let s = scene.scatterer(j)?;
    let row = s.illumination.kernel_row(s.cell)?;
    h2.apply_forward(&pointwise_multiply(zeta.field(), &row)?)
}

/// `f_j = h0†(restricted to the wall)` applied to the scattered point response; a source-plane field.
pub fn f_kernel(scene: &Scene, j: usize) -> Result<ComplexField> {
    let s = scene.scatterer(j)?;
    let response = restrict(&s.scattering.point_response(s.cell)?, &scene.wall)?;
    scene.direct.apply_adjoint(&response)
}

/// `r_j = h2(ζ · conj(f_j))`.
pub fn r_field(scene: &Scene, j: usize, zeta: &PumpProfile, h2: &OpticalSystem) -> Result<ComplexField> {
    let f = f_kernel(scene, j)?;
    h2.apply_forward(&pointwise_multiply(zeta.field(), &f.conj())?)
}

/// `O_ij`, row-major `N x N`. The diagonal is the wall-integrated intensity of each
/// scatterer's point response.
pub fn wall_overlap(scene: &Scene) -> Result<Vec<Complex64>> {
    let responses: Vec<ComplexField> = scene
        .scatterers
        .iter()
        .map(|s| s.scattering.point_response(s.cell))
        .collect::<Result<_>>()?;
    let n = responses.len();
    let mut out = Vec::with_capacity(n * n);
    for a in &responses {
        for b in &responses {
            out.push(inner_product(a, b, &scene.wall)?);
        }
    }
    Ok(out)
}

/// Direct, scattered and interference terms of the bucket hologram.
#[derive(Clone, Debug)]
pub struct DecompositionResult {
    /// `p̄0`: no scatterers.
    pub direct: Hologram,
    /// `p̄Σ`: scatterer paths alone, including the cross-scatterer terms.
    pub scattered: Hologram,
    /// `2 Re Σ_j η'_j q_j conj(r_j)`, signed.
    pub interference: Vec<f64>,
    /// Diagonal (`i = j`) part of `p̄Σ`.
    pub scattered_self: Vec<f64>,
    /// Off-diagonal (`i ≠ j`) part of `p̄Σ`, signed.
    pub scattered_cross: Vec<f64>,
    pub q: Vec<ComplexField>,
    pub r: Vec<ComplexField>,
    pub f: Vec<ComplexField>,
    pub illumination: Vec<Complex64>,
    /// `O_ij`, row-major.
    pub overlap: Vec<Complex64>,
    /// `η'_j`.
    pub effective_eta: Vec<Complex64>,
}

impl DecompositionResult {
    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn grid(&self) -> &GridSpec {
        self.direct.grid()
    }

    pub fn overlap(&self, i: usize, j: usize) -> Complex64 {
        self.overlap[i * self.len() + j]
    }

    /// `p̄0 + p̄Σ + interference`.
    pub fn total(&self) -> Vec<f64> {
        (0..self.interference.len())
            .map(|k| {
                self.direct.values()[k] + self.scattered_self[k] + self.scattered_cross[k] + self.interference[k]
            })
            .collect()
    }

    /// The sum with the cross-scatterer terms of `p̄Σ` left out.
    pub fn total_without_cross_terms(&self) -> Vec<f64> {
        (0..self.interference.len())
            .map(|k| self.direct.values()[k] + self.scattered_self[k] + self.interference[k])
            .collect()
    }
}

/// Largest `|a - b|` relative to `max |b|`.
pub fn relative_residual(a: &[f64], b: &[f64]) -> f64 {
    let m = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let d = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    if m > 0.0 {
        d / m
    } else {
        d
    }
}

/// Every term of the split, from the fast operators.
pub fn hologram_decomposition(scene: &Scene, zeta: &PumpProfile, h2: &OpticalSystem) -> Result<DecompositionResult> {
    const MAX_SCATTERERS: usize = 4096;
    if scene.len() > MAX_SCATTERERS {
        return Err(QholoError::BudgetExceeded {
            what: "scatterers",
            requested: scene.len(),
            cap: MAX_SCATTERERS,
        });
    }
    h2.input_grid().ensure_same(zeta.grid())?;
    let det = *h2.output_grid();
    let direct = marginal_fast(zeta, &scene.direct, h2, &scene.wall)?;
    let n = scene.len();

    let per: Vec<(ComplexField, ComplexField, ComplexField, Complex64)> = (0..n)
        .into_par_iter()
        .map(|j| {
            let f = f_kernel(scene, j)?;
            let r = h2.apply_forward(&pointwise_multiply(zeta.field(), &f.conj())?)?;
            Ok((q_field(scene, j, zeta, h2)?, r, f, illumination_amplitude(scene, j, zeta)?))
        })
        .collect::<Result<_>>()?;
    let overlap = wall_overlap(scene)?;
    let eta: Vec<Complex64> = scene.scatterers.iter().map(|s| s.effective_eta()).collect();

    let mut scattered_self = vec![0.0; det.len()];
    let mut scattered_cross = vec![0.0; det.len()];
    let mut interference = vec![0.0; det.len()];
    for k in 0..det.len() {
        let a: Vec<Complex64> = (0..n).map(|j| eta[j] * per[j].0.get(k)).collect();
        for i in 0..n {
            for j in 0..n {
                let t = (a[i].conj() * a[j] * overlap[i * n + j]).re;
                if i == j {
                    scattered_self[k] += t;
                } else {
                    scattered_cross[k] += t;
                }
            }
            interference[k] += 2.0 * (a[i] * per[i].1.get(k).conj()).re;
        }
    }

    let scattered: Vec<f64> = scattered_self.iter().zip(&scattered_cross).map(|(a, b)| a + b).collect();
    let prov = Provenance {
        scene: Some(scene.fingerprint()),
        pump: Some(zeta.hash()),
        wall: Some(hash_mask(&scene.wall)),
        scale: ScaleConvention::RawQuadrature,
    };
    let mut q = Vec::with_capacity(n);
    let mut r = Vec::with_capacity(n);
    let mut f = Vec::with_capacity(n);
    let mut illumination = Vec::with_capacity(n);
    for (qj, rj, fj, ij) in per {
        q.push(qj);
        r.push(rj);
        f.push(fj);
        illumination.push(ij);
    }
    Ok(DecompositionResult {
        direct: direct.with_provenance(prov.clone()),
        scattered: Hologram::new(det, scattered)?.with_provenance(prov),
        interference,
        scattered_self,
        scattered_cross,
        q,
        r,
        f,
        illumination,
        overlap,
        effective_eta: eta,
    })
}
