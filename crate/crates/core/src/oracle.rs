//! Brute-force references: explicit kernel matrices and literal loops, single threaded.
//!
//! Nothing here calls the fast operators except [`crate::optics::OpticalSystem::to_dense`], which only
//! probes a system with deltas to obtain its matrix.

use num_complex::Complex64;

use crate::biphoton::{BiphotonAmplitude, CoherenceKernel, PumpProfile};
use crate::error::{QholoError, Result};
use crate::grid::{DomainMask, GridSpec};
use crate::hologram::Hologram;
use crate::optics::DenseKernel;
use crate::scene::{DecompositionResult, Scene};
use crate::ComplexField;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Caps on dense materialization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleBudget {
    max_cells: usize,
    max_bytes: usize,
}

impl Default for OracleBudget {
    fn default() -> Self {
        OracleBudget {
            max_cells: 4096,
            max_bytes: 256 << 20,
        }
    }
}

impl OracleBudget {
    pub fn new(max_cells: usize, max_bytes: usize) -> Result<Self> {
        if max_cells == 0 || max_bytes == 0 {
            return Err(QholoError::InvalidParameter("oracle caps must be positive".into()));
        }
        Ok(OracleBudget { max_cells, max_bytes })
    }

    pub fn max_cells(&self) -> usize {
        self.max_cells
    }

    pub fn max_bytes(&self) -> usize {
        self.max_bytes
    }

    pub fn check_plane(&self, grid: &GridSpec) -> Result<()> {
        if grid.len() > self.max_cells {
            return Err(QholoError::BudgetExceeded {
                what: "cells per plane",
                requested: grid.len(),
                cap: self.max_cells,
            });
        }
        Ok(())
    }

    pub fn check_matrix(&self, rows: usize, cols: usize) -> Result<()> {
        let bytes = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(std::mem::size_of::<Complex64>()))
            .unwrap_or(usize::MAX);
        if bytes > self.max_bytes {
            return Err(QholoError::BudgetExceeded {
                what: "dense matrix bytes",
                requested: bytes,
                cap: self.max_bytes,
            });
        }
        Ok(())
    }
}

fn check_pair(zeta: &PumpProfile, h1: &DenseKernel, h2: &DenseKernel, budget: &OracleBudget) -> Result<()> {
    h1.input().ensure_same(zeta.grid())?;
    h2.input().ensure_same(zeta.grid())?;
    for g in [h1.input(), h1.output(), h2.output()] {
        budget.check_plane(g)?;
    }
    budget.check_matrix(h1.rows(), h1.cols())?;
    budget.check_matrix(h2.rows(), h2.cols())
}

/// `A(x1, x2)` by a triple loop.
pub fn dense_amplitude(
    zeta: &PumpProfile,
    h1: &DenseKernel,
    h2: &DenseKernel,
    budget: &OracleBudget,
) -> Result<BiphotonAmplitude> {
    check_pair(zeta, h1, h2, budget)?;
    let dx = zeta.grid().cell_measure();
    let z = zeta.field().values();
    let mut values = Vec::with_capacity(h1.rows() * h2.rows());
    for x1 in 0..h1.rows() {
        for x2 in 0..h2.rows() {
            let mut a = ZERO;
            for (x, zx) in z.iter().enumerate() {
                a += h1.get(x1, x) * zx * h2.get(x2, x);
            }
            values.push(a * dx);
        }
    }
    BiphotonAmplitude::new(*h1.output(), *h2.output(), values)
}

/// `p̄(x2) = Σ_{x1 ∈ wall} |Σ_x h1(x1, x) ζ(x) h2(x2, x) dx|^2 dx1`, literally.
pub fn dense_marginal(
    zeta: &PumpProfile,
    h1: &DenseKernel,
    h2: &DenseKernel,
    wall: &DomainMask,
    budget: &OracleBudget,
) -> Result<Hologram> {
    let order: Vec<usize> = (0..zeta.grid().len()).collect();
    dense_marginal_ordered(zeta, h1, h2, wall, budget, &order)
}

/// [`dense_marginal`] with the source-cell sum taken in the given order.
pub fn dense_marginal_ordered(
    zeta: &PumpProfile,
    h1: &DenseKernel,
    h2: &DenseKernel,
    wall: &DomainMask,
    budget: &OracleBudget,
    order: &[usize],
) -> Result<Hologram> {
    check_pair(zeta, h1, h2, budget)?;
    h1.output().ensure_same(wall.grid())?;
    if order.len() != zeta.grid().len() {
        return Err(QholoError::InvalidParameter("summation order must list every source cell".into()));
    }
    let dx = zeta.grid().cell_measure();
    let dx1 = wall.grid().cell_measure();
    let z = zeta.field().values();
    let mut out = vec![0.0; h2.rows()];
    for (x2, o) in out.iter_mut().enumerate() {
        for x1 in 0..h1.rows() {
            if !wall.contains(x1) {
                continue;
            }
            let mut a = ZERO;
            for &x in order {
                a += h1.get(x1, x) * z[x] * h2.get(x2, x);
            }
            *o += (a * dx).norm_sqr() * dx1;
        }
    }
    Hologram::new(*h2.output(), out)
}

/// `g1(x, x') = Σ_{x1 ∈ wall} conj(h1(x1, x)) h1(x1, x') dx1`, literally.
pub fn dense_coherence_kernel(h1: &DenseKernel, wall: &DomainMask, budget: &OracleBudget) -> Result<CoherenceKernel> {
    h1.output().ensure_same(wall.grid())?;
    budget.check_plane(h1.input())?;
    budget.check_matrix(h1.cols(), h1.cols())?;
    let n = h1.cols();
    let dx1 = wall.grid().cell_measure();
    let mut values = vec![ZERO; n * n];
    for x in 0..n {
        for xp in 0..n {
            let mut s = ZERO;
            for x1 in 0..h1.rows() {
                if wall.contains(x1) {
                    s += h1.get(x1, x).conj() * h1.get(x1, xp);
                }
            }
            values[x * n + xp] = s * dx1;
        }
    }
    CoherenceKernel::new(*h1.input(), values)
}

struct DensePaths {
    eta: Complex64,
    cell: usize,
    plane_measure: f64,
    hi: DenseKernel,
    hs: DenseKernel,
}

fn dense_paths(scene: &Scene, budget: &OracleBudget) -> Result<Vec<DensePaths>> {
    scene
        .scatterers()
        .iter()
        .map(|s| {
            let plane = s.illumination().output_grid();
            Ok(DensePaths {
                eta: s.scatterer().eta,
                cell: s.cell(),
                plane_measure: plane.cell_measure(),
                hi: s.illumination().to_dense(budget)?,
                hs: s.scattering().to_dense(budget)?,
            })
        })
        .collect()
}

/// Matrix of the source-to-wall system with every scattering path added entry by entry.
pub fn dense_effective_h1(scene: &Scene, budget: &OracleBudget) -> Result<DenseKernel> {
    let k0 = scene.direct().to_dense(budget)?;
    let paths = dense_paths(scene, budget)?;
    let (rows, cols) = (k0.rows(), k0.cols());
    let mut entries = k0.entries().to_vec();
    for p in &paths {
        for x1 in 0..rows {
            for x in 0..cols {
                entries[x1 * cols + x] += p.eta * p.plane_measure * p.hs.get(x1, p.cell) * p.hi.get(p.cell, x);
            }
        }
    }
    DenseKernel::new(*k0.input(), *k0.output(), entries)
}

/// Every term of the hologram split by literal quadrature.
#[allow(clippy::needless_range_loop)]
pub fn dense_decomposition(
    scene: &Scene,
    zeta: &PumpProfile,
    h2: &DenseKernel,
    budget: &OracleBudget,
) -> Result<DecompositionResult> {
    let k0 = scene.direct().to_dense(budget)?;
    let paths = dense_paths(scene, budget)?;
    let wall = scene.wall();
    let direct = dense_marginal(zeta, &k0, h2, wall, budget)?;
    let src = *zeta.grid();
    let det = *h2.output();
    let dx = src.cell_measure();
    let dx1 = wall.grid().cell_measure();
    let z = zeta.field().values();
    let n = paths.len();

    let mut q = Vec::with_capacity(n);
    let mut f = Vec::with_capacity(n);
    let mut r = Vec::with_capacity(n);
    let mut illumination = Vec::with_capacity(n);
    for p in &paths {
        let mut qj = vec![ZERO; det.len()];
        for (x2, v) in qj.iter_mut().enumerate() {
            for x in 0..src.len() {
                *v += h2.get(x2, x) * z[x] * p.hi.get(p.cell, x);
            }
            *v *= dx;
        }
        let mut fj = vec![ZERO; src.len()];
        for (x, v) in fj.iter_mut().enumerate() {
            for x1 in 0..k0.rows() {
                if wall.contains(x1) {
                    *v += k0.get(x1, x).conj() * p.hs.get(x1, p.cell);
                }
            }
            *v *= dx1;
        }
        let mut rj = vec![ZERO; det.len()];
        for (x2, v) in rj.iter_mut().enumerate() {
            for x in 0..src.len() {
                *v += h2.get(x2, x) * z[x] * fj[x].conj();
            }
            *v *= dx;
        }
        let mut ill = ZERO;
        for x in 0..src.len() {
            ill += p.hi.get(p.cell, x) * z[x];
        }
        illumination.push(ill * dx * p.plane_measure);
        q.push(ComplexField::new(det, qj)?);
        f.push(ComplexField::new(src, fj)?);
        r.push(ComplexField::new(det, rj)?);
    }

    let mut overlap = vec![ZERO; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut s = ZERO;
            for x1 in 0..k0.rows() {
                if wall.contains(x1) {
                    s += paths[i].hs.get(x1, paths[i].cell).conj() * paths[j].hs.get(x1, paths[j].cell);
                }
            }
            overlap[i * n + j] = s * dx1;
        }
    }

    let eta: Vec<Complex64> = paths.iter().map(|p| p.eta * p.plane_measure).collect();
    let mut scattered_self = vec![0.0; det.len()];
    let mut scattered_cross = vec![0.0; det.len()];
    let mut interference = vec![0.0; det.len()];
    for x2 in 0..det.len() {
        for i in 0..n {
            for j in 0..n {
                let t = ((eta[i] * q[i].get(x2)).conj() * eta[j] * q[j].get(x2) * overlap[i * n + j]).re;
                if i == j {
                    scattered_self[x2] += t;
                } else {
                    scattered_cross[x2] += t;
                }
            }
        }
        for j in 0..n {
            interference[x2] += 2.0 * (eta[j] * q[j].get(x2) * r[j].get(x2).conj()).re;
        }
    }
    let scattered = scattered_self.iter().zip(&scattered_cross).map(|(a, b)| a + b).collect();
    Ok(DecompositionResult {
        direct,
        scattered: Hologram::new(det, scattered)?,
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::OpticalSystem;
    use crate::scene::{relative_residual, PointScatterer};
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_kernel(input: GridSpec, output: GridSpec, rng: &mut impl Rng) -> DenseKernel {
        DenseKernel::from_fn(input, output, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).unwrap()
    }

    fn random_pump(g: GridSpec, rng: &mut impl Rng) -> PumpProfile {
        PumpProfile::normalized(ComplexField::from_fn(g, |_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).unwrap())
            .unwrap()
    }

    #[test]
    fn budget_caps() {
        let b = OracleBudget::new(16, 1024).unwrap();
        assert!(b.check_plane(&GridSpec::line(16, 1.0).unwrap()).is_ok());
        assert!(b.check_plane(&GridSpec::line(17, 1.0).unwrap()).is_err());
        assert!(b.check_matrix(8, 8).is_ok());
        assert!(b.check_matrix(8, 9).is_err());
        assert!(OracleBudget::new(0, 1).is_err());
        let g = GridSpec::line(32, 1.0).unwrap();
        assert!(OpticalSystem::identity(g).to_dense(&b).is_err());
    }

    #[test]
    fn identity_kernels_with_delta_pump() {
        let g = GridSpec::line(8, 2.0).unwrap();
        let id = DenseKernel::identity(g);
        let zeta = PumpProfile::delta(g, 3).unwrap();
        let p = dense_marginal(&zeta, &id, &id, &DomainMask::full(g), &OracleBudget::default()).unwrap();
        // only A(3, 3) = h1 ζ h2 dx = (1/dx)(1/sqrt(dx))(1/dx) dx survives
        let dx: f64 = 0.25;
        let a = (1.0 / dx.sqrt()) * (1.0 / dx) * (1.0 / dx) * dx;
        for (i, v) in p.values().iter().enumerate() {
            let e = if i == 3 { a * a * dx } else { 0.0 };
            assert!((v - e).abs() < 1e-12 * e.max(1.0));
        }
    }

    #[test]
    fn eight_cell_hand_sum() {
        let g = GridSpec::line(8, 4.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let h1 = random_kernel(g, g, &mut rng);
        let h2 = random_kernel(g, g, &mut rng);
        let zeta = random_pump(g, &mut rng);
        let wall = DomainMask::full(g);
        let p = dense_marginal(&zeta, &h1, &h2, &wall, &OracleBudget::default()).unwrap();
        let x2 = 5;
        let mut total = 0.0;
        for x1 in 0..8 {
            let mut terms = [c(0.0, 0.0); 8];
            for (x, t) in terms.iter_mut().enumerate() {
                *t = h1.entries()[x1 * 8 + x] * zeta.field().values()[x] * h2.entries()[x2 * 8 + x] * 0.5;
            }
            let a: Complex64 = terms.iter().sum();
            total += (a.re * a.re + a.im * a.im) * 0.5;
        }
        assert!((p.values()[x2] - total).abs() < 1e-12 * total);
    }

    #[test]
    fn summation_order_does_not_matter() {
        let g = GridSpec::line(16, 4.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let h1 = random_kernel(g, g, &mut rng);
        let h2 = random_kernel(g, g, &mut rng);
        let zeta = random_pump(g, &mut rng);
        let wall = DomainMask::from_fn(g, |x| x[0] < 0.5).unwrap();
        let b = OracleBudget::default();
        let p = dense_marginal(&zeta, &h1, &h2, &wall, &b).unwrap();
        let mut order: Vec<usize> = (0..16).collect();
        for _ in 0..5 {
            order.shuffle(&mut rng);
            let s = dense_marginal_ordered(&zeta, &h1, &h2, &wall, &b, &order).unwrap();
            assert!(p.relative_deviation(&s).unwrap() < 1e-12);
        }
    }

    #[test]
    fn literal_decomposition_is_self_consistent() {
        let g = GridSpec::line(16, 4.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let b = OracleBudget::default();
        let wall = DomainMask::from_fn(g, |x| x[0] > -1.1).unwrap();
        let mut scene = Scene::new(OpticalSystem::dense(random_kernel(g, g, &mut rng)), wall).unwrap();
        for k in 0..2 {
            let s = PointScatterer::new([k as f64 - 0.5, 0.0], 1.0, c(0.4, -0.2)).unwrap();
            scene
                .add_scatterer(
                    s,
                    OpticalSystem::dense(random_kernel(g, g, &mut rng)),
                    OpticalSystem::dense(random_kernel(g, g, &mut rng)),
                )
                .unwrap();
        }
        let zeta = random_pump(g, &mut rng);
        let h2 = random_kernel(g, g, &mut rng);
        let d = dense_decomposition(&scene, &zeta, &h2, &b).unwrap();
        let direct = dense_marginal(&zeta, &dense_effective_h1(&scene, &b).unwrap(), &h2, scene.wall(), &b).unwrap();
        assert!(relative_residual(&d.total(), direct.values()) <= 1e-11);

        let empty = dense_decomposition(&scene.without_scatterers(), &zeta, &h2, &b).unwrap();
        assert!(empty.scattered.values().iter().all(|&v| v == 0.0));
        let zero = dense_decomposition(&scene.map_eta(|_, _| c(0.0, 0.0)), &zeta, &h2, &b).unwrap();
        assert!(zero.interference.iter().all(|&v| v == 0.0));
    }
}
