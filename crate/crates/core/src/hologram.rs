use sha2::{Digest, Sha256};

use crate::error::{QholoError, Result};
use crate::grid::{ComplexField, DomainMask, GridSpec};

/// How rate values are scaled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ScaleConvention {
    /// `p = |A|^2` with midpoint-rule amplitudes and no extra prefactor.
    #[default]
    RawQuadrature,
    /// Rescaled to unit integral over the grid.
    UnitIntegral,
}

impl ScaleConvention {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScaleConvention::RawQuadrature => "raw-quadrature",
            ScaleConvention::UnitIntegral => "unit-integral",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Provenance {
    pub scene: Option<String>,
    pub pump: Option<String>,
    pub wall: Option<String>,
    pub scale: ScaleConvention,
}

/// Real nonnegative map on the detector-2 grid: the marginal coincidence rate.
#[derive(Clone, Debug, PartialEq)]
pub struct Hologram {
    grid: GridSpec,
    values: Vec<f64>,
    provenance: Provenance,
}

impl Hologram {
    /// Negative entries (quadrature round-off) are clamped to zero; NaN/Inf are rejected.
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(QholoError::GridMismatch(format!(
                "{} hologram values for {grid}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(QholoError::NonFinite(i));
        }
        Ok(Hologram {
            grid,
            values: values.into_iter().map(|v| v.max(0.0)).collect(),
            provenance: Provenance::default(),
        })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Hologram {
            grid,
            values: vec![0.0; grid.len()],
            provenance: Provenance::default(),
        }
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// `∫ p̄ dx2`.
    pub fn total(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_measure()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// First index of the maximum value.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        best
    }

    /// Shape with unit integral; `None` when the map is identically zero.
    pub fn normalized(&self) -> Option<Hologram> {
        let t = self.total();
        if t <= 0.0 {
            return None;
        }
        Some(Hologram {
            grid: self.grid,
            values: self.values.iter().map(|v| v / t).collect(),
            provenance: Provenance {
                scale: ScaleConvention::UnitIntegral,
                ..self.provenance.clone()
            },
        })
    }

    pub fn max_abs_diff(&self, other: &Hologram) -> Result<f64> {
        self.grid.ensure_same(&other.grid)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// `max |self - other| / max(self)`.
    pub fn relative_deviation(&self, other: &Hologram) -> Result<f64> {
        let m = self.max();
        let d = self.max_abs_diff(other)?;
        Ok(if m > 0.0 { d / m } else { d })
    }
}

pub fn hash_field(f: &ComplexField) -> String {
    let mut h = Sha256::new();
    hash_grid(&mut h, f.grid());
    for v in f.values() {
        h.update(v.re.to_le_bytes());
        h.update(v.im.to_le_bytes());
    }
    hex::encode(h.finalize())
}

pub fn hash_mask(m: &DomainMask) -> String {
    let mut h = Sha256::new();
    hash_grid(&mut h, m.grid());
    h.update(m.flags().iter().map(|&b| b as u8).collect::<Vec<_>>());
    hex::encode(h.finalize())
}

pub(crate) fn hash_grid(h: &mut Sha256, g: &GridSpec) {
    h.update((g.ndim() as u64).to_le_bytes());
    for a in 0..g.ndim() {
        h.update((g.samples(a) as u64).to_le_bytes());
        h.update(g.extent(a).to_le_bytes());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamps_roundoff_and_rejects_nan() {
        let g = GridSpec::line(4, 1.0).unwrap();
        let h = Hologram::new(g, vec![1.0, -1e-17, 2.0, 0.0]).unwrap();
        assert_eq!(h.values()[1], 0.0);
        assert!(Hologram::new(g, vec![1.0, f64::NAN, 2.0, 0.0]).is_err());
        assert!(Hologram::new(g, vec![1.0]).is_err());
    }

    #[test]
    fn normalized_integrates_to_one() {
        let g = GridSpec::line(4, 2.0).unwrap();
        let h = Hologram::new(g, vec![1.0, 3.0, 2.0, 0.0]).unwrap();
        let n = h.normalized().unwrap();
        assert!((n.total() - 1.0).abs() < 1e-15);
        assert_eq!(n.provenance().scale, ScaleConvention::UnitIntegral);
        assert!(Hologram::zeros(g).normalized().is_none());
        assert_eq!(h.argmax(), 1);
    }

    #[test]
    fn hashes_are_reproducible() {
        let g = GridSpec::line(4, 2.0).unwrap();
        let f = ComplexField::ones(g);
        assert_eq!(hash_field(&f), hash_field(&f.clone()));
        assert_ne!(hash_field(&f), hash_field(&ComplexField::zeros(g)));
        assert_eq!(hash_mask(&DomainMask::full(g)).len(), 64);
    }
}
