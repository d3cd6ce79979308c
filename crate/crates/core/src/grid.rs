//! Uniform Cartesian grids on transverse planes and complex amplitudes sampled on them.
//!
//! Every integral over a plane is a midpoint sum: `value * cell_measure` summed over
//! cells in a fixed (row-major) order. Cell `i` along an axis with `n` samples sits at
//! `(i - n/2) * spacing`, so index `n/2` is the optical axis.

use std::fmt;

use num_complex::Complex64;

use crate::error::{QholoError, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    ndim: usize,
    samples: [usize; 2],
    extent: [f64; 2],
}

impl GridSpec {
    pub fn line(samples: usize, extent: f64) -> Result<Self> {
        Self::validate(samples, extent)?;
        Ok(GridSpec {
            ndim: 1,
            samples: [samples, 1],
            extent: [extent, 1.0],
        })
    }

    pub fn plane(samples: [usize; 2], extent: [f64; 2]) -> Result<Self> {
        Self::validate(samples[0], extent[0])?;
        Self::validate(samples[1], extent[1])?;
        Ok(GridSpec {
            ndim: 2,
            samples,
            extent,
        })
    }

    /// Square plane with `samples` cells and `extent` length per axis.
    pub fn square(samples: usize, extent: f64) -> Result<Self> {
        Self::plane([samples, samples], [extent, extent])
    }

    fn validate(samples: usize, extent: f64) -> Result<()> {
        if samples < 2 {
            return Err(QholoError::InvalidGrid(format!(
                "need at least 2 samples per axis, got {samples}"
            )));
        }
        if !(extent.is_finite() && extent > 0.0) {
            return Err(QholoError::InvalidGrid(format!(
                "extent must be positive and finite, got {extent}"
            )));
        }
        Ok(())
    }

    pub fn ndim(&self) -> usize {
        self.ndim
    }

    pub fn samples(&self, axis: usize) -> usize {
        self.samples[axis]
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.extent[axis]
    }

    /// Cell size along `axis`.
    pub fn spacing(&self, axis: usize) -> f64 {
        self.extent[axis] / self.samples[axis] as f64
    }

    /// Number of cells.
    pub fn len(&self) -> usize {
        self.samples[..self.ndim].iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Length (1-D) or area (2-D) of one cell.
    pub fn cell_measure(&self) -> f64 {
        match self.ndim {
            1 => self.spacing(0),
            _ => self.spacing(0) * self.spacing(1),
        }
    }

    pub fn coordinate(&self, axis: usize, index: usize) -> f64 {
        (index as f64 - (self.samples[axis] / 2) as f64) * self.spacing(axis)
    }

    /// Per-axis indices of a flat (row-major) cell index.
    pub fn unflatten(&self, cell: usize) -> [usize; 2] {
        match self.ndim {
            1 => [cell, 0],
            _ => [cell / self.samples[1], cell % self.samples[1]],
        }
    }

    pub fn flatten(&self, index: [usize; 2]) -> usize {
        match self.ndim {
            1 => index[0],
            _ => index[0] * self.samples[1] + index[1],
        }
    }

    /// Physical centre of a cell; the second coordinate is 0 on 1-D grids.
    pub fn cell_center(&self, cell: usize) -> [f64; 2] {
        let idx = self.unflatten(cell);
        match self.ndim {
            1 => [self.coordinate(0, idx[0]), 0.0],
            _ => [self.coordinate(0, idx[0]), self.coordinate(1, idx[1])],
        }
    }

    /// Nearest cell to a physical position, or `None` when the position lies outside
    /// the grid. Returns the cell and the snap offset (cell centre minus position).
    pub fn nearest_cell(&self, position: [f64; 2]) -> Option<(usize, [f64; 2])> {
        let mut index = [0usize; 2];
        let mut offset = [0.0; 2];
        for axis in 0..self.ndim {
            let h = self.spacing(axis);
            let k = (position[axis] / h).round() + (self.samples[axis] / 2) as f64;
            if !(k >= 0.0 && k < self.samples[axis] as f64) {
                return None;
            }
            index[axis] = k as usize;
            offset[axis] = self.coordinate(axis, index[axis]) - position[axis];
        }
        Some((self.flatten(index), offset))
    }

    /// True when both grids share dimensionality and cell size (to 1e-12 relative).
    pub fn same_spacing(&self, other: &GridSpec) -> bool {
        self.ndim == other.ndim
            && (0..self.ndim).all(|a| {
                let (x, y) = (self.spacing(a), other.spacing(a));
                (x - y).abs() <= 1e-12 * x.abs().max(y.abs())
            })
    }

    pub fn ensure_same(&self, other: &GridSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(QholoError::grid(self, other))
        }
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.ndim {
            1 => write!(f, "line[{} x {}]", self.samples[0], self.extent[0]),
            _ => write!(
                f,
                "plane[{}x{} x {}x{}]",
                self.samples[0], self.samples[1], self.extent[0], self.extent[1]
            ),
        }
    }
}

/// Complex amplitude per cell. `|value|^2 * cell_measure` is a probability weight.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    grid: GridSpec,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(grid: GridSpec, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(QholoError::GridMismatch(format!(
                "{} values for {grid} ({} cells)",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(QholoError::NonFinite(i));
        }
        Ok(ComplexField { grid, values })
    }

    /// Internal constructor for values already known to be finite and correctly sized.
    pub(crate) fn from_parts(grid: GridSpec, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        ComplexField { grid, values }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::from_parts(grid, vec![Complex64::new(0.0, 0.0); grid.len()])
    }

    pub fn ones(grid: GridSpec) -> Self {
        Self::from_parts(grid, vec![Complex64::new(1.0, 0.0); grid.len()])
    }

    /// Samples `f` at every cell centre.
    pub fn from_fn(grid: GridSpec, mut f: impl FnMut([f64; 2]) -> Complex64) -> Result<Self> {
        let values = (0..grid.len()).map(|c| f(grid.cell_center(c))).collect();
        Self::new(grid, values)
    }

    /// Discrete delta: `1 / cell_measure` at `cell`, zero elsewhere (unit integral).
    pub fn delta(grid: GridSpec, cell: usize) -> Result<Self> {
        if cell >= grid.len() {
            return Err(QholoError::IndexOutOfRange {
                index: cell,
                len: grid.len(),
            });
        }
        let mut f = Self::zeros(grid);
        f.values[cell] = Complex64::new(1.0 / grid.cell_measure(), 0.0);
        Ok(f)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn get(&self, cell: usize) -> Complex64 {
        self.values[cell]
    }

    /// `∫ |f|^2` over the whole grid.
    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell_measure()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scale(&self, c: Complex64) -> Self {
        self.map(|v| v * c)
    }

    pub fn conj(&self) -> Self {
        self.map(|v| v.conj())
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self::from_parts(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn add(&self, other: &ComplexField) -> Result<Self> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ComplexField) -> Result<Self> {
        self.zip(other, |a, b| a - b)
    }

    /// `self + c * other`.
    pub fn add_scaled(&self, c: Complex64, other: &ComplexField) -> Result<Self> {
        self.zip(other, |a, b| a + c * b)
    }

    fn zip(&self, other: &ComplexField, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        Ok(Self::from_parts(
            self.grid,
            self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        ))
    }

    /// Maximum cellwise modulus of the difference.
    pub fn max_abs_diff(&self, other: &ComplexField) -> Result<f64> {
        self.grid.ensure_same(&other.grid)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Inner product over the whole grid.
    pub fn dot(&self, other: &ComplexField) -> Result<Complex64> {
        self.grid.ensure_same(&other.grid)?;
        Ok(dot_unchecked(&self.values, &other.values) * self.grid.cell_measure())
    }
}

pub(crate) fn dot_unchecked(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter()
        .zip(b)
        .fold(Complex64::new(0.0, 0.0), |acc, (x, y)| acc + x.conj() * y)
}

/// Membership flags selecting an integration domain (the wall patch, a half plane, ...).
#[derive(Clone, Debug, PartialEq)]
pub struct DomainMask {
    grid: GridSpec,
    cells: Vec<bool>,
}

impl DomainMask {
    pub fn new(grid: GridSpec, cells: Vec<bool>) -> Result<Self> {
        if cells.len() != grid.len() {
            return Err(QholoError::GridMismatch(format!(
                "{} mask flags for {grid}",
                cells.len()
            )));
        }
        if !cells.iter().any(|&c| c) {
            return Err(QholoError::EmptyMask);
        }
        Ok(DomainMask { grid, cells })
    }

    pub fn full(grid: GridSpec) -> Self {
        DomainMask {
            grid,
            cells: vec![true; grid.len()],
        }
    }

    pub fn from_fn(grid: GridSpec, mut f: impl FnMut([f64; 2]) -> bool) -> Result<Self> {
        let cells = (0..grid.len()).map(|c| f(grid.cell_center(c))).collect();
        Self::new(grid, cells)
    }

    /// Cells whose centres lie within the central `fraction` of every axis.
    pub fn central(grid: GridSpec, fraction: f64) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(QholoError::InvalidParameter(format!(
                "central mask fraction must be in (0, 1], got {fraction}"
            )));
        }
        let half = [0.5 * fraction * grid.extent(0), 0.5 * fraction * grid.extent(1)];
        Self::from_fn(grid, |x| (0..grid.ndim()).all(|a| x[a].abs() < half[a]))
    }

    /// Cells whose centres satisfy `lo[a] <= x[a] <= hi[a]` on every axis.
    pub fn window(grid: GridSpec, lo: [f64; 2], hi: [f64; 2]) -> Result<Self> {
        Self::from_fn(grid, |x| (0..grid.ndim()).all(|a| x[a] >= lo[a] && x[a] <= hi[a]))
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn contains(&self, cell: usize) -> bool {
        self.cells[cell]
    }

    pub fn flags(&self) -> &[bool] {
        &self.cells
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn is_full(&self) -> bool {
        self.cells.iter().all(|&c| c)
    }

    /// Included cell indices in ascending order.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.cells.iter().enumerate().filter(|(_, &c)| c).map(|(i, _)| i)
    }

    pub fn union(&self, other: &DomainMask) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        Ok(DomainMask {
            grid: self.grid,
            cells: self.cells.iter().zip(&other.cells).map(|(a, b)| *a || *b).collect(),
        })
    }

    /// Complement; fails when the mask covers the whole grid.
    pub fn complement(&self) -> Result<Self> {
        Self::new(self.grid, self.cells.iter().map(|c| !c).collect())
    }
}

/// `Σ_{cells ∈ mask} conj(a) · b · cell_measure`.
pub fn inner_product(a: &ComplexField, b: &ComplexField, mask: &DomainMask) -> Result<Complex64> {
    a.grid.ensure_same(&b.grid)?;
    a.grid.ensure_same(&mask.grid)?;
    let sum = a
        .values
        .iter()
        .zip(&b.values)
        .zip(&mask.cells)
        .filter(|(_, &m)| m)
        .fold(Complex64::new(0.0, 0.0), |acc, ((x, y), _)| acc + x.conj() * y);
    Ok(sum * a.grid.cell_measure())
}

/// Rescales `f` by a positive real factor so that `∫ |g|^2 = 1`.
pub fn normalize(f: &ComplexField) -> Result<ComplexField> {
    let n = f.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(QholoError::Degenerate(format!("cannot normalize field with norm {n}")));
    }
    Ok(f.map(|v| v / n))
}

pub fn pointwise_multiply(f: &ComplexField, g: &ComplexField) -> Result<ComplexField> {
    f.zip(g, |a, b| a * b)
}

/// Zeroes every cell outside `mask`.
pub fn restrict(f: &ComplexField, mask: &DomainMask) -> Result<ComplexField> {
    f.grid.ensure_same(&mask.grid)?;
    Ok(ComplexField::from_parts(
        f.grid,
        f.values
            .iter()
            .zip(&mask.cells)
            .map(|(&v, &m)| if m { v } else { Complex64::new(0.0, 0.0) })
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_field(grid: GridSpec, rng: &mut impl Rng) -> ComplexField {
        let v = (0..grid.len())
            .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        ComplexField::new(grid, v).unwrap()
    }

    #[test]
    fn grid_rejects_bad_parameters() {
        assert!(GridSpec::line(1, 1.0).is_err());
        assert!(GridSpec::line(8, 0.0).is_err());
        assert!(GridSpec::line(8, f64::NAN).is_err());
        assert!(GridSpec::plane([8, 1], [1.0, 1.0]).is_err());
        let g = GridSpec::plane([4, 8], [2.0, 4.0]).unwrap();
        assert_eq!(g.len(), 32);
        assert_eq!(g.cell_measure(), 0.25);
    }

    #[test]
    fn coordinates_center_the_axis() {
        let g = GridSpec::line(8, 8.0).unwrap();
        assert_eq!(g.coordinate(0, 4), 0.0);
        assert_eq!(g.coordinate(0, 0), -4.0);
        let (cell, off) = g.nearest_cell([1.2, 0.0]).unwrap();
        assert_eq!(cell, 5);
        assert!((off[0] + 0.2).abs() < 1e-12);
        assert!(g.nearest_cell([10.0, 0.0]).is_none());
        let p = GridSpec::square(4, 4.0).unwrap();
        assert_eq!(p.unflatten(p.flatten([3, 1])), [3, 1]);
        assert_eq!(p.cell_center(p.flatten([2, 3])), [0.0, 1.0]);
    }

    #[test]
    fn field_rejects_nonfinite_and_wrong_length() {
        let g = GridSpec::line(4, 1.0).unwrap();
        assert!(ComplexField::new(g, vec![c(0.0, 0.0); 3]).is_err());
        let mut v = vec![c(0.0, 0.0); 4];
        v[2] = c(f64::INFINITY, 0.0);
        assert!(matches!(ComplexField::new(g, v), Err(QholoError::NonFinite(2))));
    }

    #[test]
    fn unit_field_has_unit_inner_product() {
        let g = GridSpec::line(16, 4.0).unwrap();
        let f = normalize(&ComplexField::ones(g)).unwrap();
        let ip = inner_product(&f, &f, &DomainMask::full(g)).unwrap();
        assert!((ip - c(1.0, 0.0)).norm() < 1e-14);
        // constant field on a unit-extent grid integrates to 1
        let u = normalize(&ComplexField::ones(GridSpec::line(10, 1.0).unwrap())).unwrap();
        assert!((u.get(3).re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn disjoint_indicators_are_orthogonal() {
        let g = GridSpec::line(8, 1.0).unwrap();
        let a = ComplexField::from_fn(g, |x| c(if x[0] < 0.0 { 1.0 } else { 0.0 }, 0.0)).unwrap();
        let b = ComplexField::from_fn(g, |x| c(if x[0] >= 0.0 { 1.0 } else { 0.0 }, 0.0)).unwrap();
        assert_eq!(inner_product(&a, &b, &DomainMask::full(g)).unwrap(), c(0.0, 0.0));
    }

    #[test]
    fn inner_product_matches_hand_sum_on_eight_cells() {
        let g = GridSpec::line(8, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_field(g, &mut rng);
        let b = random_field(g, &mut rng);
        let (av, bv) = (a.values(), b.values());
        let hand = (av[0].conj() * bv[0]
            + av[1].conj() * bv[1]
            + av[2].conj() * bv[2]
            + av[3].conj() * bv[3]
            + av[4].conj() * bv[4]
            + av[5].conj() * bv[5]
            + av[6].conj() * bv[6]
            + av[7].conj() * bv[7])
            * 0.25;
        let ip = inner_product(&a, &b, &DomainMask::full(g)).unwrap();
        assert!((ip - hand).norm() < 1e-14);
        let back = inner_product(&b, &a, &DomainMask::full(g)).unwrap();
        assert!((ip - back.conj()).norm() < 1e-15);
    }

    #[test]
    fn inner_product_rejects_grid_mismatch() {
        let g1 = GridSpec::line(8, 1.0).unwrap();
        let g2 = GridSpec::line(8, 2.0).unwrap();
        let r = inner_product(&ComplexField::ones(g1), &ComplexField::ones(g2), &DomainMask::full(g1));
        assert!(matches!(r, Err(QholoError::GridMismatch(_))));
        assert!(pointwise_multiply(&ComplexField::ones(g1), &ComplexField::ones(g2)).is_err());
    }

    #[test]
    fn normalize_gaussian_by_direct_sum() {
        let g = GridSpec::line(64, 6.4).unwrap();
        let f = ComplexField::from_fn(g, |x| c(3.0 * (-x[0] * x[0] / 0.5).exp(), 0.0)).unwrap();
        let n = normalize(&f).unwrap();
        let mut direct = 0.0;
        for v in n.values() {
            direct += v.re * v.re + v.im * v.im;
        }
        assert!((direct * 0.1 - 1.0).abs() < 1e-12);
        // positive real multiple of the input
        let ratio = n.get(20) / f.get(20);
        assert!(ratio.im.abs() < 1e-15 && ratio.re > 0.0);
        // idempotent
        assert!(normalize(&n).unwrap().max_abs_diff(&n).unwrap() < 1e-12);
    }

    #[test]
    fn normalize_zero_is_degenerate() {
        let g = GridSpec::line(4, 1.0).unwrap();
        assert!(matches!(normalize(&ComplexField::zeros(g)), Err(QholoError::Degenerate(_))));
    }

    #[test]
    fn pointwise_multiply_identities_and_scalar_loop() {
        let g = GridSpec::square(4, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_field(g, &mut rng);
        let h = random_field(g, &mut rng);
        assert_eq!(pointwise_multiply(&f, &ComplexField::ones(g)).unwrap(), f);
        assert_eq!(pointwise_multiply(&f, &ComplexField::zeros(g)).unwrap(), ComplexField::zeros(g));
        let prod = pointwise_multiply(&f, &h).unwrap();
        for i in 0..g.len() {
            let (a, b) = (f.get(i), h.get(i));
            let expect = c(a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re);
            assert!((prod.get(i) - expect).norm() < 1e-15);
        }
        assert_eq!(prod, pointwise_multiply(&h, &f).unwrap());
    }

    #[test]
    fn restrict_half_plane() {
        let g = GridSpec::square(8, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = random_field(g, &mut rng);
        let m = DomainMask::from_fn(g, |x| x[0] < 0.0).unwrap();
        let r = restrict(&f, &m).unwrap();
        for i in 0..g.len() {
            if m.contains(i) {
                assert_eq!(r.get(i), f.get(i));
            } else {
                assert_eq!(r.get(i), c(0.0, 0.0));
            }
        }
        assert_eq!(restrict(&f, &DomainMask::full(g)).unwrap(), f);
        assert!(DomainMask::full(g).complement().is_err());
    }

    #[test]
    fn central_mask_counts() {
        let g = GridSpec::line(64, 640.0).unwrap();
        assert_eq!(DomainMask::central(g, 0.06).unwrap().count(), 3);
        let p = GridSpec::square(64, 640.0).unwrap();
        assert_eq!(DomainMask::central(p, 0.06).unwrap().count(), 9);
        assert!(DomainMask::central(g, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn inner_product_is_sesquilinear(seed in any::<u64>(), ar in -2.0..2.0f64, ai in -2.0..2.0f64,
                                         br in -2.0..2.0f64, bi in -2.0..2.0f64) {
            let g = GridSpec::line(12, 3.0).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (u, v, w) = (random_field(g, &mut rng), random_field(g, &mut rng), random_field(g, &mut rng));
            let m = DomainMask::from_fn(g, |x| x[0] > -1.0).unwrap();
            let (alpha, beta) = (c(ar, ai), c(br, bi));
            let comb = v.scale(alpha).add_scaled(beta, &w).unwrap();
            let lhs = inner_product(&u, &comb, &m).unwrap();
            let rhs = alpha * inner_product(&u, &v, &m).unwrap() + beta * inner_product(&u, &w, &m).unwrap();
            prop_assert!((lhs - rhs).norm() < 1e-12);
            let lhs = inner_product(&comb, &u, &m).unwrap();
            let rhs = alpha.conj() * inner_product(&v, &u, &m).unwrap() + beta.conj() * inner_product(&w, &u, &m).unwrap();
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }

        #[test]
        fn restrict_is_idempotent(seed in any::<u64>(), cut in -1.0..1.0f64) {
            let g = GridSpec::square(6, 2.0).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = random_field(g, &mut rng);
            if let Ok(m) = DomainMask::from_fn(g, |x| x[0] + 0.5 * x[1] < cut) {
                let once = restrict(&f, &m).unwrap();
                prop_assert_eq!(restrict(&once, &m).unwrap(), once);
            }
        }
    }
}
