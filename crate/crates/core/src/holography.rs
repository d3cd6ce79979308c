//! Recording the bucket hologram and reconstructing the chamber from it digitally.
//!
//! A reconstruction slice at depth `z` is the adjoint of `R_z = h2 ∘ ζ ∘ hI_zᵀ` applied to the
//! bias-removed hologram `t = p̄ - DC`. `R_z(x2, c)` is the detector-2 signature `q` of a unit
//! scatterer at cell `c` of the plane at depth `z`, so each slice correlates `t` against every
//! candidate signature. The conjugate (twin) image is left in place.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::biphoton::{marginal_fast, PumpProfile};
use crate::error::{QholoError, Result};
use crate::grid::{ComplexField, GridSpec};
pub use crate::hologram::Hologram;
use crate::hologram::{hash_mask, Provenance, ScaleConvention};
use crate::optics::{compose, OpticalSystem};
use crate::scene::{effective_h1, ChamberGeometry, Scene};

/// `p̄` of the scene under pump `ζ` and detector optics `h2`, stamped with provenance hashes.
pub fn record_hologram(scene: &Scene, zeta: &PumpProfile, h2: &OpticalSystem) -> Result<Hologram> {
    let h1 = effective_h1(scene)?;
    let h = marginal_fast(zeta, &h1, h2, scene.wall())?;
    Ok(h.with_provenance(Provenance {
        scene: Some(scene.fingerprint()),
        pump: Some(zeta.hash()),
        wall: Some(hash_mask(scene.wall())),
        scale: ScaleConvention::RawQuadrature,
    }))
}

/// Back-propagation operators indexed by depth.
pub trait DepthFamily: Sync {
    /// Grid of the hologram being reconstructed.
    fn hologram_grid(&self) -> &GridSpec;
    /// Grid of every reconstruction slice.
    fn slice_grid(&self) -> &GridSpec;
    /// Slice at `depth` from the bias-removed hologram `t`.
    fn backpropagate(&self, depth: f64, t: &ComplexField) -> Result<ComplexField>;
}

/// Back-propagation through the detector optics, the pump and the chamber's illumination path.
#[derive(Clone, Debug)]
pub struct ChamberBackprop {
    geometry: ChamberGeometry,
    zeta: PumpProfile,
    h2: OpticalSystem,
}

impl ChamberBackprop {
    pub fn new(geometry: ChamberGeometry, zeta: PumpProfile, h2: OpticalSystem) -> Result<Self> {
        geometry.validate()?;
        zeta.grid().ensure_same(&geometry.source)?;
        h2.input_grid().ensure_same(&geometry.source)?;
        Ok(ChamberBackprop { geometry, zeta, h2 })
    }

    /// `R_z`: scatterer plane at `depth` to detector 2.
    pub fn operator(&self, depth: f64) -> Result<OpticalSystem> {
        let hi = self.geometry.illumination(depth)?;
        let inner = compose(&OpticalSystem::mask(self.zeta.field().clone()), &hi.transpose())?;
        compose(&self.h2, &inner)
    }
}

impl DepthFamily for ChamberBackprop {
    fn hologram_grid(&self) -> &GridSpec {
        self.h2.output_grid()
    }

    fn slice_grid(&self) -> &GridSpec {
        &self.geometry.wall
    }

    fn backpropagate(&self, depth: f64, t: &ComplexField) -> Result<ComplexField> {
        self.operator(depth)?.apply_adjoint(t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DcMode {
    None,
    /// Subtracts the empty-chamber hologram; needs knowledge of the scene's optics.
    SubtractP0,
    SubtractMean,
}

impl DcMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            DcMode::None => "none",
            DcMode::SubtractP0 => "subtract_p0",
            DcMode::SubtractMean => "subtract_mean",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(DcMode::None),
            "subtract_p0" => Ok(DcMode::SubtractP0),
            "subtract_mean" => Ok(DcMode::SubtractMean),
            other => Err(QholoError::InvalidParameter(format!(
                "unknown dc_mode `{other}` (expected none, subtract_p0 or subtract_mean)"
            ))),
        }
    }

    pub fn oracle_assisted(&self) -> bool {
        matches!(self, DcMode::SubtractP0)
    }
}

/// Bias removal with whatever data the mode needs.
#[derive(Clone, Debug)]
pub enum DcRemoval {
    None,
    SubtractP0(Hologram),
    SubtractMean,
}

impl DcRemoval {
    pub fn mode(&self) -> DcMode {
        match self {
            DcRemoval::None => DcMode::None,
            DcRemoval::SubtractP0(_) => DcMode::SubtractP0,
            DcRemoval::SubtractMean => DcMode::SubtractMean,
        }
    }

    /// `t = p̄ - DC` as a complex field with zero imaginary part.
    pub fn apply(&self, h: &Hologram) -> Result<ComplexField> {
        let v = h.values();
        let t: Vec<f64> = match self {
            DcRemoval::None => v.to_vec(),
            DcRemoval::SubtractP0(p0) => {
                h.grid().ensure_same(p0.grid())?;
                v.iter().zip(p0.values()).map(|(a, b)| a - b).collect()
            }
            DcRemoval::SubtractMean => {
                let mean = v.iter().sum::<f64>() / v.len() as f64;
                v.iter().map(|a| a - mean).collect()
            }
        };
        ComplexField::new(*h.grid(), t.into_iter().map(|x| Complex64::new(x, 0.0)).collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Peak {
    pub cell: usize,
    pub position: [f64; 2],
    pub depth_index: usize,
    pub depth: f64,
    /// `|slice|^2` at the peak.
    pub magnitude: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PeakList {
    pub peaks: Vec<Peak>,
    /// Fewer local maxima exist than were requested.
    pub truncated: bool,
}

#[derive(Clone, Debug)]
pub struct ReconstructionResult {
    pub depths: Vec<f64>,
    pub slices: Vec<ComplexField>,
    pub peaks: PeakList,
    pub dc_mode: DcMode,
}

impl ReconstructionResult {
    /// Largest `|slice|^2` over the volume divided by its mean over the volume.
    pub fn peak_to_background(&self) -> f64 {
        let mut max: f64 = 0.0;
        let mut sum = 0.0;
        let mut count = 0usize;
        for s in &self.slices {
            for v in s.values() {
                let m = v.norm_sqr();
                max = max.max(m);
                sum += m;
                count += 1;
            }
        }
        if sum == 0.0 {
            0.0
        } else {
            max / (sum / count as f64)
        }
    }
}

/// Back-propagates the bias-removed hologram to every depth and ranks the `k` strongest peaks.
pub fn gabor_reconstruct(
    h: &Hologram,
    family: &dyn DepthFamily,
    depths: &[f64],
    dc: &DcRemoval,
    k: usize,
) -> Result<ReconstructionResult> {
    if depths.is_empty() {
        return Err(QholoError::InvalidParameter("no reconstruction depths".into()));
    }
    h.grid().ensure_same(family.hologram_grid())?;
    let t = dc.apply(h)?;
    let slices: Vec<ComplexField> = depths
        .par_iter()
        .map(|&z| family.backpropagate(z, &t))
        .collect::<Result<_>>()?;
    let peaks = locate_peaks(&slices, depths, k)?;
    Ok(ReconstructionResult {
        depths: depths.to_vec(),
        slices,
        peaks,
        dc_mode: dc.mode(),
    })
}

/// The `k` largest local maxima of `|slice|^2` over the (transverse × depth) volume.
///
/// A cell is a local maximum when it is positive and no smaller than any neighbour, diagonal
/// neighbours included. Ties go to the lower depth index, then the lower cell index.
pub fn locate_peaks(slices: &[ComplexField], depths: &[f64], k: usize) -> Result<PeakList> {
    if k == 0 {
        return Err(QholoError::InvalidParameter("peak count must be at least 1".into()));
    }
    if slices.len() != depths.len() {
        return Err(QholoError::InvalidParameter(format!(
            "{} slices for {} depths",
            slices.len(),
            depths.len()
        )));
    }
    let Some(first) = slices.first() else {
        return Ok(PeakList {
            peaks: Vec::new(),
            truncated: true,
        });
    };
    let grid = *first.grid();
    for s in slices {
        grid.ensure_same(s.grid())?;
    }
    let int: Vec<Vec<f64>> = slices.iter().map(|s| s.values().iter().map(|v| v.norm_sqr()).collect()).collect();
    let [n0, n1] = [grid.samples(0), if grid.ndim() == 2 { grid.samples(1) } else { 1 }];
    let (r0, r1) = (1isize, if grid.ndim() == 2 { 1isize } else { 0 });

    let mut found = Vec::new();
    for (d, plane) in int.iter().enumerate() {
        for (cell, &v) in plane.iter().enumerate() {
            if v <= 0.0 {
                continue;
            }
            let [i, j] = grid.unflatten(cell);
            let mut is_max = true;
            'scan: for dd in -1isize..=1 {
                let nd = d as isize + dd;
                if nd < 0 || nd >= int.len() as isize {
                    continue;
                }
                for di in -r0..=r0 {
                    for dj in -r1..=r1 {
                        if dd == 0 && di == 0 && dj == 0 {
                            continue;
                        }
                        let (ni, nj) = (i as isize + di, j as isize + dj);
                        if ni < 0 || nj < 0 || ni >= n0 as isize || nj >= n1 as isize {
                            continue;
                        }
                        if int[nd as usize][grid.flatten([ni as usize, nj as usize])] > v {
                            is_max = false;
                            break 'scan;
                        }
                    }
                }
            }
            if is_max {
                found.push(Peak {
                    cell,
                    position: grid.cell_center(cell),
                    depth_index: d,
                    depth: depths[d],
                    magnitude: v,
                });
            }
        }
    }
    found.sort_by(|a, b| {
        b.magnitude
            .total_cmp(&a.magnitude)
            .then(a.depth_index.cmp(&b.depth_index))
            .then(a.cell.cmp(&b.cell))
    });
    let truncated = found.len() < k;
    found.truncate(k);
    Ok(PeakList { peaks: found, truncated })
}
