//! Photon-pair event sampling and bucket histograms.
//!
//! Events are drawn by inverse CDF over the flattened `(x1, x2)` mass function restricted to
//! the wall. Generation runs in chunks of [`CHUNK`] events; chunk `k` uses its own ChaCha8
//! stream seeded with [`mix`]`(seed, k)`, so the output does not depend on how chunks are
//! scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::biphoton::CoincidenceMap;
use crate::error::{QholoError, Result};
use crate::grid::{DomainMask, GridSpec};
use crate::hologram::Hologram;

pub const CHUNK: usize = 65_536;
pub const RNG_NAME: &str = "chacha8-splitmix64-chunk65536";

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Sub-seed of chunk `chunk`: the SplitMix64 output function applied to
/// `seed + 0x9E3779B97F4A7C15 · (chunk + 1)` (wrapping).
pub fn mix(seed: u64, chunk: u64) -> u64 {
    let mut z = seed.wrapping_add(GOLDEN.wrapping_mul(chunk.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Detected pairs as (wall cell, detector-2 cell).
#[derive(Clone, Debug, PartialEq)]
pub struct EventStream {
    pub seed: u64,
    pub rng_name: String,
    pub wall_grid: GridSpec,
    pub detector_grid: GridSpec,
    pub events: Vec<(u32, u32)>,
}

impl EventStream {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Draws `n` i.i.d. pairs from `p` restricted to `wall`.
pub fn sample_pairs(p: &CoincidenceMap, wall: &DomainMask, n: u64, seed: u64) -> Result<EventStream> {
    if n == 0 {
        return Err(QholoError::InvalidParameter("event count must be at least 1".into()));
    }
    if n > u32::MAX as u64 * CHUNK as u64 {
        return Err(QholoError::InvalidParameter(format!("event count {n} too large")));
    }
    p.wall_grid().ensure_same(wall.grid())?;
    let n2 = p.detector_grid().len();
    if p.wall_grid().len() > u32::MAX as usize || n2 > u32::MAX as usize {
        return Err(QholoError::InvalidParameter("grid too large for 32-bit event indices".into()));
    }
    let mut cells = Vec::new();
    let mut cdf = Vec::new();
    let mut acc = 0.0;
    for x1 in wall.indices() {
        for x2 in 0..n2 {
            let m = p.get(x1, x2);
            if m > 0.0 {
                acc += m;
                cells.push((x1 as u32, x2 as u32));
                cdf.push(acc);
            }
        }
    }
    if !(acc > 0.0 && acc.is_finite()) {
        return Err(QholoError::Degenerate("coincidence map has no mass on the wall".into()));
    }
    let total = acc;
    let n = n as usize;
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<Vec<(u32, u32)>> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let len = CHUNK.min(n - k * CHUNK);
            let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, k as u64));
            (0..len)
                .map(|_| {
                    let u = rng.gen::<f64>() * total;
                    let i = cdf.partition_point(|&c| c <= u).min(cells.len() - 1);
                    cells[i]
                })
                .collect()
        })
        .collect();
    Ok(EventStream {
        seed,
        rng_name: RNG_NAME.to_string(),
        wall_grid: *p.wall_grid(),
        detector_grid: *p.detector_grid(),
        events: parts.concat(),
    })
}

/// Counts per detector-2 bin.
#[derive(Clone, Debug, PartialEq)]
pub struct HistogramEstimate {
    pub grid: GridSpec,
    pub counts: Vec<u64>,
    pub n: u64,
}

impl HistogramEstimate {
    /// Counts as a density with unit integral over the grid.
    pub fn estimate(&self) -> Vec<f64> {
        let w = self.grid.cell_measure();
        let n = self.n.max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / (n * w)).collect()
    }
}

/// Drops the wall coordinate and bins detector-2 cells.
pub fn bucket_histogram(s: &EventStream, x2bins: &GridSpec) -> Result<HistogramEstimate> {
    s.detector_grid.ensure_same(x2bins)?;
    let mut counts = vec![0u64; x2bins.len()];
    for &(_, x2) in &s.events {
        counts[x2 as usize] += 1;
    }
    Ok(HistogramEstimate {
        grid: *x2bins,
        counts,
        n: s.events.len() as u64,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub n: u64,
    /// `Σ |estimate - truth| dx2` of the unit-integral curves.
    pub l1: f64,
    /// Largest per-bin gap between the unit-integral curves.
    pub max_abs: f64,
}

pub fn convergence_report(est: &HistogramEstimate, truth: &Hologram) -> Result<ConvergenceReport> {
    est.grid.ensure_same(truth.grid())?;
    let t = truth
        .normalized()
        .ok_or_else(|| QholoError::Degenerate("reference hologram is identically zero".into()))?;
    let e = est.estimate();
    let w = est.grid.cell_measure();
    let mut l1 = 0.0;
    let mut max_abs: f64 = 0.0;
    for (a, b) in e.iter().zip(t.values()) {
        l1 += (a - b).abs() * w;
        max_abs = max_abs.max((a - b).abs());
    }
    Ok(ConvergenceReport { n: est.n, l1, max_abs })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(n1: usize, n2: usize, v: Vec<f64>) -> CoincidenceMap {
        CoincidenceMap::new(GridSpec::line(n1, n1 as f64).unwrap(), GridSpec::line(n2, n2 as f64).unwrap(), v).unwrap()
    }

    #[test]
    fn mix_separates_seeds_and_chunks() {
        assert_ne!(mix(7, 0), mix(7, 1));
        assert_ne!(mix(7, 0), mix(8, 0));
        assert_eq!(mix(0, u64::MAX), 0);
    }

    #[test]
    fn single_cell_mass() {
        let mut v = vec![0.0; 16];
        v[4 * 2 + 3] = 1.0;
        let p = map(4, 4, v);
        let s = sample_pairs(&p, &DomainMask::full(*p.wall_grid()), 1000, 3).unwrap();
        assert!(s.events.iter().all(|&e| e == (2, 3)));
        let h = bucket_histogram(&s, p.detector_grid()).unwrap();
        assert_eq!(h.counts, vec![0, 0, 0, 1000]);
    }

    #[test]
    fn errors() {
        let p = map(2, 2, vec![0.0, 0.0, 1.0, 0.0]);
        let g = *p.wall_grid();
        assert!(sample_pairs(&p, &DomainMask::full(g), 0, 1).is_err());
        let first = DomainMask::from_fn(g, |x| x[0] < 0.0).unwrap();
        assert!(sample_pairs(&p, &first, 10, 1).is_err());
    }

    #[test]
    fn two_equal_cells_split_binomially() {
        let p = map(2, 2, vec![1.0, 1.0, 0.0, 0.0]);
        let s = sample_pairs(&p, &DomainMask::full(*p.wall_grid()), 1_000_000, 42).unwrap();
        let h = bucket_histogram(&s, p.detector_grid()).unwrap();
        assert!((h.counts[0] as i64 - 500_000).abs() <= 2000, "{:?}", h.counts);
        assert_eq!(h.counts.iter().sum::<u64>(), 1_000_000);
    }

    #[test]
    fn uniform_passes_chi_square() {
        let p = map(2, 16, [vec![1.0; 16], vec![0.0; 16]].concat());
        let n = 160_000u64;
        let s = sample_pairs(&p, &DomainMask::full(*p.wall_grid()), n, 9).unwrap();
        let h = bucket_histogram(&s, p.detector_grid()).unwrap();
        let e = n as f64 / 16.0;
        let chi2: f64 = h.counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        // 99.9% quantile of chi-square with 15 degrees of freedom
        assert!(chi2 < 37.697, "chi2 = {chi2}");
    }

    #[test]
    fn deterministic_and_chunk_consistent() {
        let p = map(3, 5, (0..15).map(|i| 1.0 + i as f64).collect());
        let wall = DomainMask::full(*p.wall_grid());
        let a = sample_pairs(&p, &wall, 200_000, 5).unwrap();
        let b = sample_pairs(&p, &wall, 200_000, 5).unwrap();
        assert_eq!(a, b);
        let c = sample_pairs(&p, &wall, CHUNK as u64, 5).unwrap();
        assert_eq!(&a.events[..CHUNK], &c.events[..]);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let d = pool.install(|| sample_pairs(&p, &wall, 200_000, 5).unwrap());
        assert_eq!(a, d);
    }

    #[test]
    fn report_distance() {
        let g = GridSpec::line(4, 2.0).unwrap();
        let truth = Hologram::new(g, vec![1.0, 1.0, 2.0, 0.0]).unwrap();
        let same = HistogramEstimate {
            grid: g,
            counts: vec![25, 25, 50, 0],
            n: 100,
        };
        assert!(convergence_report(&same, &truth).unwrap().l1 < 1e-15);
        let off = HistogramEstimate {
            grid: g,
            counts: vec![0, 0, 0, 100],
            n: 100,
        };
        assert!((convergence_report(&off, &truth).unwrap().l1 - 2.0).abs() < 1e-12);
    }
}
