//! Linear optical systems `h(x_out, x_in)` with forward and adjoint application.
//!
//! Forward: `u_out(x_out) = Σ_in h(x_out, x_in) u_in(x_in) · cell_measure_in`.
//! Adjoint: `v(x_in) = Σ_out conj(h(x_out, x_in)) g(x_out) · cell_measure_out`, so that
//! `⟨u, H v⟩ = ⟨H† u, v⟩` holds with the measure-weighted inner products of [`crate::grid`].
//! Backward propagation everywhere in this crate means the adjoint, not the inverse.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use sha2::{Digest, Sha256};

use crate::error::{QholoError, Result};
use crate::fft::{frequency, GridFft};
use crate::grid::{dot_unchecked, ComplexField, GridSpec};
use crate::oracle::OracleBudget;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Debug)]
pub enum OpticalSystem {
    Identity(GridSpec),
    Dense(DenseKernel),
    Fresnel(FresnelPropagation),
    ThinLens(ThinLens),
    Mask(Mask),
    Embed(Embed),
    RankUpdate(RankUpdate),
    Cascade(Cascade),
}

/// Explicit kernel matrix `K[out, in] = h(x_out, x_in)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseKernel {
    input: GridSpec,
    output: GridSpec,
    entries: Vec<Complex64>,
}

/// Paraxial free-space propagation over `distance`, as a circular convolution whose
/// transfer function `exp(-iπ λ d |f|^2)` is unimodular on every DFT bin.
#[derive(Clone, Debug)]
pub struct FresnelPropagation {
    grid: GridSpec,
    wavelength: f64,
    distance: f64,
    transfer: Arc<[Complex64]>,
    fft: GridFft,
}

/// Phase mask `exp(-iπ |x|^2 / (λ f))`.
#[derive(Clone, Debug)]
pub struct ThinLens {
    grid: GridSpec,
    focal_length: f64,
    wavelength: f64,
    phase: Arc<[Complex64]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    transmittance: ComplexField,
}

/// Centre-aligned zero padding (or cropping) between grids of equal cell size.
#[derive(Clone, Debug, PartialEq)]
pub struct Embed {
    input: GridSpec,
    output: GridSpec,
    target: Arc<[Option<usize>]>,
}

/// `base + Σ_k weight_k · |left_k⟩⟨right_k|`: forward maps `u` to
/// `base(u) + Σ weight_k ⟨right_k, u⟩ left_k`.
#[derive(Clone, Debug)]
pub struct RankUpdate {
    base: Box<OpticalSystem>,
    terms: Vec<RankTerm>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankTerm {
    pub weight: Complex64,
    /// Field on the output grid.
    pub left: ComplexField,
    /// Field on the input grid.
    pub right: ComplexField,
}

/// Stages applied first to last.
#[derive(Clone, Debug)]
pub struct Cascade {
    stages: Vec<OpticalSystem>,
}

impl DenseKernel {
    pub fn new(input: GridSpec, output: GridSpec, entries: Vec<Complex64>) -> Result<Self> {
        if entries.len() != input.len() * output.len() {
            return Err(QholoError::GridMismatch(format!(
                "{} kernel entries for {} x {} cells",
                entries.len(),
                output.len(),
                input.len()
            )));
        }
        if let Some(i) = entries.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(QholoError::NonFinite(i));
        }
        Ok(DenseKernel {
            input,
            output,
            entries,
        })
    }

    /// Quadrature-weighted identity: `1 / cell_measure` on the diagonal.
    pub fn identity(grid: GridSpec) -> Self {
        let n = grid.len();
        let mut entries = vec![ZERO; n * n];
        let d = Complex64::new(1.0 / grid.cell_measure(), 0.0);
        for i in 0..n {
            entries[i * n + i] = d;
        }
        DenseKernel {
            input: grid,
            output: grid,
            entries,
        }
    }

    pub fn from_fn(
        input: GridSpec,
        output: GridSpec,
        mut f: impl FnMut(usize, usize) -> Complex64,
    ) -> Result<Self> {
        let mut entries = Vec::with_capacity(input.len() * output.len());
        for o in 0..output.len() {
            for i in 0..input.len() {
                entries.push(f(o, i));
            }
        }
        Self::new(input, output, entries)
    }

    pub fn input(&self) -> &GridSpec {
        &self.input
    }

    pub fn output(&self) -> &GridSpec {
        &self.output
    }

    pub fn rows(&self) -> usize {
        self.output.len()
    }

    pub fn cols(&self) -> usize {
        self.input.len()
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn get(&self, out: usize, inp: usize) -> Complex64 {
        self.entries[out * self.input.len() + inp]
    }

    pub fn row(&self, out: usize) -> &[Complex64] {
        let n = self.input.len();
        &self.entries[out * n..(out + 1) * n]
    }

    pub fn column(&self, inp: usize) -> ComplexField {
        let values = (0..self.rows()).map(|o| self.get(o, inp)).collect();
        ComplexField::from_parts(self.output, values)
    }

    fn forward(&self, u: &[Complex64]) -> Vec<Complex64> {
        let w = self.input.cell_measure();
        (0..self.rows())
            .map(|o| {
                self.row(o)
                    .iter()
                    .zip(u)
                    .fold(ZERO, |acc, (k, x)| acc + k * x)
                    * w
            })
            .collect()
    }

    fn adjoint(&self, g: &[Complex64]) -> Vec<Complex64> {
        let w = self.output.cell_measure();
        let n = self.cols();
        let mut v = vec![ZERO; n];
        for (o, go) in g.iter().enumerate() {
            for (vi, k) in v.iter_mut().zip(self.row(o)) {
                *vi += k.conj() * go;
            }
        }
        v.iter_mut().for_each(|x| *x *= w);
        v
    }

    fn transposed(&self) -> DenseKernel {
        let (r, c) = (self.rows(), self.cols());
        let mut entries = vec![ZERO; r * c];
        for o in 0..r {
            for i in 0..c {
                entries[i * r + o] = self.entries[o * c + i];
            }
        }
        DenseKernel {
            input: self.output,
            output: self.input,
            entries,
        }
    }

    /// Maximum entrywise deviation relative to the largest entry of `self`.
    pub fn relative_deviation(&self, other: &DenseKernel) -> Result<f64> {
        self.input.ensure_same(&other.input)?;
        self.output.ensure_same(&other.output)?;
        let scale = self.entries.iter().map(|v| v.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        Ok(self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
            / scale)
    }
}

impl FresnelPropagation {
    pub fn new(grid: GridSpec, wavelength: f64, distance: f64) -> Result<Self> {
        if !(wavelength.is_finite() && wavelength > 0.0) {
            return Err(QholoError::InvalidParameter(format!(
                "wavelength must be positive, got {wavelength}"
            )));
        }
        if !distance.is_finite() || distance == 0.0 {
            return Err(QholoError::InvalidParameter(format!(
                "propagation distance must be finite and nonzero, got {distance}"
            )));
        }
        let freq = |axis: usize, k: usize| frequency(k, grid.samples(axis), grid.spacing(axis));
        let transfer: Vec<Complex64> = (0..grid.len())
            .map(|c| {
                let idx = grid.unflatten(c);
                let mut f2 = freq(0, idx[0]).powi(2);
                if grid.ndim() == 2 {
                    f2 += freq(1, idx[1]).powi(2);
                }
                Complex64::from_polar(1.0, -PI * wavelength * distance * f2)
            })
            .collect();
        Ok(FresnelPropagation {
            grid,
            wavelength,
            distance,
            transfer: transfer.into(),
            fft: GridFft::new(&grid),
        })
    }

    /// Distance at which the sampled chirp kernel and the DFT propagator coincide
    /// exactly along axis 0: `n Δx^2 / λ`.
    pub fn critical_distance(grid: &GridSpec, wavelength: f64) -> f64 {
        grid.samples(0) as f64 * grid.spacing(0).powi(2) / wavelength
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn distance(&self) -> f64 {
        self.distance
    }

    /// Closed-form paraxial kernel `exp(iπ r^2/(λd)) / (iλd)^{D/2}` for displacement `x_out - x_in`.
    pub fn analytic_kernel(&self, displacement: [f64; 2]) -> Complex64 {
        let ld = self.wavelength * self.distance;
        let r2 = match self.grid.ndim() {
            1 => displacement[0].powi(2),
            _ => displacement[0].powi(2) + displacement[1].powi(2),
        };
        let norm = Complex64::new(0.0, ld);
        let norm = if self.grid.ndim() == 1 { norm.sqrt() } else { norm };
        Complex64::from_polar(1.0, PI * r2 / ld) / norm
    }

    fn apply(&self, values: &[Complex64], adjoint: bool) -> Vec<Complex64> {
        let mut data = values.to_vec();
        self.fft.forward(&mut data);
        for (d, t) in data.iter_mut().zip(self.transfer.iter()) {
            *d *= if adjoint { t.conj() } else { *t };
        }
        self.fft.inverse(&mut data);
        data
    }
}

impl ThinLens {
    pub fn new(grid: GridSpec, focal_length: f64, wavelength: f64) -> Result<Self> {
        if !focal_length.is_finite() || focal_length == 0.0 {
            return Err(QholoError::InvalidParameter(format!(
                "focal length must be finite and nonzero, got {focal_length}"
            )));
        }
        if !(wavelength.is_finite() && wavelength > 0.0) {
            return Err(QholoError::InvalidParameter(format!(
                "wavelength must be positive, got {wavelength}"
            )));
        }
        let phase: Vec<Complex64> = (0..grid.len())
            .map(|c| {
                let x = grid.cell_center(c);
                Complex64::from_polar(1.0, -PI * (x[0] * x[0] + x[1] * x[1]) / (wavelength * focal_length))
            })
            .collect();
        Ok(ThinLens {
            grid,
            focal_length,
            wavelength,
            phase: phase.into(),
        })
    }

    pub fn focal_length(&self) -> f64 {
        self.focal_length
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }
}

impl Mask {
    pub fn new(transmittance: ComplexField) -> Self {
        Mask { transmittance }
    }

    pub fn transmittance(&self) -> &ComplexField {
        &self.transmittance
    }
}

impl Embed {
    pub fn new(input: GridSpec, output: GridSpec) -> Result<Self> {
        if !input.same_spacing(&output) {
            return Err(QholoError::GridMismatch(format!(
                "embedding needs equal cell sizes: {input} -> {output}"
            )));
        }
        let offset: Vec<isize> = (0..input.ndim())
            .map(|a| (output.samples(a) / 2) as isize - (input.samples(a) / 2) as isize)
            .collect();
        let target: Vec<Option<usize>> = (0..input.len())
            .map(|c| {
                let idx = input.unflatten(c);
                let mut out = [0usize; 2];
                for a in 0..input.ndim() {
                    let o = idx[a] as isize + offset[a];
                    if o < 0 || o >= output.samples(a) as isize {
                        return None;
                    }
                    out[a] = o as usize;
                }
                Some(output.flatten(out))
            })
            .collect();
        Ok(Embed {
            input,
            output,
            target: target.into(),
        })
    }
}

impl RankUpdate {
    pub fn new(base: OpticalSystem, terms: Vec<RankTerm>) -> Result<Self> {
        for t in &terms {
            base.output_grid().ensure_same(t.left.grid())?;
            base.input_grid().ensure_same(t.right.grid())?;
        }
        Ok(RankUpdate {
            base: Box::new(base),
            terms,
        })
    }

    pub fn base(&self) -> &OpticalSystem {
        &self.base
    }

    pub fn terms(&self) -> &[RankTerm] {
        &self.terms
    }
}

impl Cascade {
    pub fn stages(&self) -> &[OpticalSystem] {
        &self.stages
    }
}

impl OpticalSystem {
    pub fn identity(grid: GridSpec) -> Self {
        OpticalSystem::Identity(grid)
    }

    pub fn dense(kernel: DenseKernel) -> Self {
        OpticalSystem::Dense(kernel)
    }

    pub fn fresnel(grid: GridSpec, wavelength: f64, distance: f64) -> Result<Self> {
        Ok(OpticalSystem::Fresnel(FresnelPropagation::new(grid, wavelength, distance)?))
    }

    pub fn thin_lens(grid: GridSpec, focal_length: f64, wavelength: f64) -> Result<Self> {
        Ok(OpticalSystem::ThinLens(ThinLens::new(grid, focal_length, wavelength)?))
    }

    pub fn mask(transmittance: ComplexField) -> Self {
        OpticalSystem::Mask(Mask::new(transmittance))
    }

    pub fn embed(input: GridSpec, output: GridSpec) -> Result<Self> {
        Ok(OpticalSystem::Embed(Embed::new(input, output)?))
    }

    pub fn rank_update(base: OpticalSystem, terms: Vec<RankTerm>) -> Result<Self> {
        Ok(OpticalSystem::RankUpdate(RankUpdate::new(base, terms)?))
    }

    /// Chains stages applied first to last.
    pub fn cascade(stages: Vec<OpticalSystem>) -> Result<Self> {
        let mut iter = stages.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| QholoError::InvalidParameter("empty cascade".into()))?;
        iter.try_fold(first, |acc, next| compose(&next, &acc))
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            OpticalSystem::Identity(_) => "identity",
            OpticalSystem::Dense(_) => "dense",
            OpticalSystem::Fresnel(_) => "fresnel",
            OpticalSystem::ThinLens(_) => "thin_lens",
            OpticalSystem::Mask(_) => "mask",
            OpticalSystem::Embed(_) => "embed",
            OpticalSystem::RankUpdate(_) => "rank_update",
            OpticalSystem::Cascade(_) => "cascade",
        }
    }

    pub fn input_grid(&self) -> &GridSpec {
        match self {
            OpticalSystem::Identity(g) => g,
            OpticalSystem::Dense(k) => &k.input,
            OpticalSystem::Fresnel(p) => &p.grid,
            OpticalSystem::ThinLens(l) => &l.grid,
            OpticalSystem::Mask(m) => m.transmittance.grid(),
            OpticalSystem::Embed(e) => &e.input,
            OpticalSystem::RankUpdate(r) => r.base.input_grid(),
            OpticalSystem::Cascade(c) => c.stages[0].input_grid(),
        }
    }

    pub fn output_grid(&self) -> &GridSpec {
        match self {
            OpticalSystem::Identity(g) => g,
            OpticalSystem::Dense(k) => &k.output,
            OpticalSystem::Fresnel(p) => &p.grid,
            OpticalSystem::ThinLens(l) => &l.grid,
            OpticalSystem::Mask(m) => m.transmittance.grid(),
            OpticalSystem::Embed(e) => &e.output,
            OpticalSystem::RankUpdate(r) => r.base.output_grid(),
            OpticalSystem::Cascade(c) => c.stages[c.stages.len() - 1].output_grid(),
        }
    }

    pub fn apply_forward(&self, f: &ComplexField) -> Result<ComplexField> {
        self.input_grid().ensure_same(f.grid())?;
        Ok(self.forward_unchecked(f))
    }

    pub fn apply_adjoint(&self, g: &ComplexField) -> Result<ComplexField> {
        self.output_grid().ensure_same(g.grid())?;
        Ok(self.adjoint_unchecked(g))
    }

    fn forward_unchecked(&self, f: &ComplexField) -> ComplexField {
        let out = *self.output_grid();
        match self {
            OpticalSystem::Identity(_) => f.clone(),
            OpticalSystem::Dense(k) => ComplexField::from_parts(out, k.forward(f.values())),
            OpticalSystem::Fresnel(p) => ComplexField::from_parts(out, p.apply(f.values(), false)),
            OpticalSystem::ThinLens(l) => ComplexField::from_parts(
                out,
                f.values().iter().zip(l.phase.iter()).map(|(v, p)| v * p).collect(),
            ),
            OpticalSystem::Mask(m) => ComplexField::from_parts(
                out,
                f.values()
                    .iter()
                    .zip(m.transmittance.values())
                    .map(|(v, t)| v * t)
                    .collect(),
            ),
            OpticalSystem::Embed(e) => {
                let mut values = vec![ZERO; out.len()];
                for (v, t) in f.values().iter().zip(e.target.iter()) {
                    if let Some(o) = t {
                        values[*o] = *v;
                    }
                }
                ComplexField::from_parts(out, values)
            }
            OpticalSystem::RankUpdate(r) => {
                let mut acc = r.base.forward_unchecked(f);
                let w = f.grid().cell_measure();
                for t in &r.terms {
                    let c = t.weight * dot_unchecked(t.right.values(), f.values()) * w;
                    for (a, l) in acc.values_mut().iter_mut().zip(t.left.values()) {
                        *a += c * l;
                    }
                }
                acc
            }
            OpticalSystem::Cascade(c) => {
                let mut cur = c.stages[0].forward_unchecked(f);
                for s in &c.stages[1..] {
                    cur = s.forward_unchecked(&cur);
                }
                cur
            }
        }
    }

    fn adjoint_unchecked(&self, g: &ComplexField) -> ComplexField {
        let inp = *self.input_grid();
        match self {
            OpticalSystem::Identity(_) => g.clone(),
            OpticalSystem::Dense(k) => ComplexField::from_parts(inp, k.adjoint(g.values())),
            OpticalSystem::Fresnel(p) => ComplexField::from_parts(inp, p.apply(g.values(), true)),
            OpticalSystem::ThinLens(l) => ComplexField::from_parts(
                inp,
                g.values().iter().zip(l.phase.iter()).map(|(v, p)| v * p.conj()).collect(),
            ),
            OpticalSystem::Mask(m) => ComplexField::from_parts(
                inp,
                g.values()
                    .iter()
                    .zip(m.transmittance.values())
                    .map(|(v, t)| v * t.conj())
                    .collect(),
            ),
            OpticalSystem::Embed(e) => {
                let values = e
                    .target
                    .iter()
                    .map(|t| t.map_or(ZERO, |o| g.values()[o]))
                    .collect();
                ComplexField::from_parts(inp, values)
            }
            OpticalSystem::RankUpdate(r) => {
                let mut acc = r.base.adjoint_unchecked(g);
                let w = g.grid().cell_measure();
                for t in &r.terms {
                    let c = t.weight.conj() * dot_unchecked(t.left.values(), g.values()) * w;
                    for (a, rv) in acc.values_mut().iter_mut().zip(t.right.values()) {
                        *a += c * rv;
                    }
                }
                acc
            }
            OpticalSystem::Cascade(c) => {
                let n = c.stages.len();
                let mut cur = c.stages[n - 1].adjoint_unchecked(g);
                for s in c.stages[..n - 1].iter().rev() {
                    cur = s.adjoint_unchecked(&cur);
                }
                cur
            }
        }
    }

    /// Column `h(·, x_in)`: the response to a unit-integral delta at `cell`.
    pub fn point_response(&self, cell: usize) -> Result<ComplexField> {
        let delta = ComplexField::delta(*self.input_grid(), cell)?;
        Ok(self.forward_unchecked(&delta))
    }

    /// Row `h(x_out, ·)` as a field over the input grid.
    pub fn kernel_row(&self, cell: usize) -> Result<ComplexField> {
        let delta = ComplexField::delta(*self.output_grid(), cell)?;
        Ok(self.adjoint_unchecked(&delta).conj())
    }

    /// Materializes the kernel by probing with every input delta.
    pub fn to_dense(&self, budget: &OracleBudget) -> Result<DenseKernel> {
        budget.check_plane(self.input_grid())?;
        budget.check_plane(self.output_grid())?;
        budget.check_matrix(self.output_grid().len(), self.input_grid().len())?;
        if let OpticalSystem::Dense(k) = self {
            return Ok(k.clone());
        }
        let (rows, cols) = (self.output_grid().len(), self.input_grid().len());
        let mut entries = vec![ZERO; rows * cols];
        for i in 0..cols {
            let col = self.point_response(i)?;
            for (o, v) in col.values().iter().enumerate() {
                entries[o * cols + i] = *v;
            }
        }
        DenseKernel::new(*self.input_grid(), *self.output_grid(), entries)
    }

    /// The system with kernel `h^T(x_in, x_out) = h(x_out, x_in)`.
    pub fn transpose(&self) -> OpticalSystem {
        match self {
            // symmetric kernels
            OpticalSystem::Identity(_)
            | OpticalSystem::Fresnel(_)
            | OpticalSystem::ThinLens(_)
            | OpticalSystem::Mask(_) => self.clone(),
            OpticalSystem::Dense(k) => OpticalSystem::Dense(k.transposed()),
            OpticalSystem::Embed(e) => OpticalSystem::Embed(
                Embed::new(e.output, e.input).expect("embed grids share spacing"),
            ),
            OpticalSystem::RankUpdate(r) => OpticalSystem::RankUpdate(RankUpdate {
                base: Box::new(r.base.transpose()),
                terms: r
                    .terms
                    .iter()
                    .map(|t| RankTerm {
                        weight: t.weight,
                        left: t.right.conj(),
                        right: t.left.conj(),
                    })
                    .collect(),
            }),
            OpticalSystem::Cascade(c) => OpticalSystem::Cascade(Cascade {
                stages: c.stages.iter().rev().map(|s| s.transpose()).collect(),
            }),
        }
    }

    /// Feeds a structural description (kind tags, parameters, numeric payloads) into `h`.
    pub fn digest_into(&self, h: &mut Sha256) {
        fn grid(h: &mut Sha256, g: &GridSpec) {
            h.update((g.ndim() as u64).to_le_bytes());
            for a in 0..g.ndim() {
                h.update((g.samples(a) as u64).to_le_bytes());
                h.update(g.extent(a).to_le_bytes());
            }
        }
        fn values(h: &mut Sha256, v: &[Complex64]) {
            for c in v {
                h.update(c.re.to_le_bytes());
                h.update(c.im.to_le_bytes());
            }
        }
        h.update(self.kind_name().as_bytes());
        grid(h, self.input_grid());
        grid(h, self.output_grid());
        match self {
            OpticalSystem::Identity(_) | OpticalSystem::Embed(_) => {}
            OpticalSystem::Dense(k) => values(h, &k.entries),
            OpticalSystem::Fresnel(p) => {
                h.update(p.wavelength.to_le_bytes());
                h.update(p.distance.to_le_bytes());
            }
            OpticalSystem::ThinLens(l) => {
                h.update(l.wavelength.to_le_bytes());
                h.update(l.focal_length.to_le_bytes());
            }
            OpticalSystem::Mask(m) => values(h, m.transmittance.values()),
            OpticalSystem::RankUpdate(r) => {
                r.base.digest_into(h);
                for t in &r.terms {
                    values(h, &[t.weight]);
                    values(h, t.left.values());
                    values(h, t.right.values());
                }
            }
            OpticalSystem::Cascade(c) => {
                h.update((c.stages.len() as u64).to_le_bytes());
                for s in &c.stages {
                    s.digest_into(h);
                }
            }
        }
    }
}

/// `outer ∘ inner`: forward applies `inner` first.
pub fn compose(outer: &OpticalSystem, inner: &OpticalSystem) -> Result<OpticalSystem> {
    if inner.output_grid() != outer.input_grid() {
        return Err(QholoError::GridMismatch(format!(
            "cannot compose: inner output {} vs outer input {}",
            inner.output_grid(),
            outer.input_grid()
        )));
    }
    Ok(match (outer, inner) {
        (OpticalSystem::Identity(_), s) | (s, OpticalSystem::Identity(_)) => s.clone(),
        (OpticalSystem::Mask(a), OpticalSystem::Mask(b)) => OpticalSystem::Mask(Mask::new(
            crate::grid::pointwise_multiply(&a.transmittance, &b.transmittance)?,
        )),
        _ => {
            let mut stages = Vec::new();
            for s in [inner, outer] {
                match s {
                    OpticalSystem::Cascade(c) => stages.extend(c.stages.iter().cloned()),
                    other => stages.push(other.clone()),
                }
            }
            OpticalSystem::Cascade(Cascade { stages })
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: GridSpec, rng: &mut impl Rng) -> ComplexField {
        let v = (0..grid.len())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        ComplexField::new(grid, v).unwrap()
    }

    fn random_dense(input: GridSpec, output: GridSpec, rng: &mut impl Rng) -> DenseKernel {
        DenseKernel::from_fn(input, output, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
        .unwrap()
    }

    fn all_kinds(rng: &mut impl Rng) -> Vec<OpticalSystem> {
        let g = GridSpec::line(16, 3.2).unwrap();
        let big = GridSpec::line(24, 4.8).unwrap();
        let p = GridSpec::plane([8, 6], [1.6, 1.2]).unwrap();
        let fres = OpticalSystem::fresnel(g, 0.5, 1.3).unwrap();
        let lens = OpticalSystem::thin_lens(g, 2.0, 0.5).unwrap();
        let mask = OpticalSystem::mask(random_field(g, rng));
        let dense = OpticalSystem::dense(random_dense(g, big, rng));
        let embed = OpticalSystem::embed(g, big).unwrap();
        let rank = OpticalSystem::rank_update(
            OpticalSystem::embed(g, big).unwrap(),
            vec![RankTerm {
                weight: Complex64::new(0.3, -0.2),
                left: random_field(big, rng),
                right: random_field(g, rng),
            }],
        )
        .unwrap();
        let cascade = OpticalSystem::cascade(vec![lens.clone(), fres.clone(), mask.clone(), embed.clone()]).unwrap();
        vec![
            OpticalSystem::identity(g),
            fres,
            lens,
            mask,
            dense,
            embed,
            OpticalSystem::embed(big, g).unwrap(),
            rank,
            cascade,
            OpticalSystem::fresnel(p, 0.4, -0.7).unwrap(),
            OpticalSystem::thin_lens(p, -1.0, 0.4).unwrap(),
        ]
    }

    #[test]
    fn adjoint_identity_holds_for_every_kind() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for sys in all_kinds(&mut rng) {
            for _ in 0..20 {
                let u = random_field(*sys.output_grid(), &mut rng);
                let v = random_field(*sys.input_grid(), &mut rng);
                let lhs = u.dot(&sys.apply_forward(&v).unwrap()).unwrap();
                let rhs = sys.apply_adjoint(&u).unwrap().dot(&v).unwrap();
                assert!(
                    (lhs - rhs).norm() <= 1e-10 * u.norm() * v.norm(),
                    "{}: {lhs} vs {rhs}",
                    sys.kind_name()
                );
            }
        }
    }

    #[test]
    fn to_dense_reproduces_every_kind() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let budget = OracleBudget::default();
        for sys in all_kinds(&mut rng) {
            let k = OpticalSystem::dense(sys.to_dense(&budget).unwrap());
            let f = random_field(*sys.input_grid(), &mut rng);
            let a = sys.apply_forward(&f).unwrap();
            let b = k.apply_forward(&f).unwrap();
            assert!(a.max_abs_diff(&b).unwrap() <= 1e-9 * a.max_abs().max(1e-300), "{}", sys.kind_name());
        }
    }

    #[test]
    fn transpose_matches_dense_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let budget = OracleBudget::default();
        for sys in all_kinds(&mut rng) {
            let k = sys.to_dense(&budget).unwrap();
            let kt = sys.transpose().to_dense(&budget).unwrap();
            assert!(kt.relative_deviation(&k.transposed()).unwrap() < 1e-10, "{}", sys.kind_name());
        }
    }

    #[test]
    fn identity_and_weighted_identity_matrix() {
        let g = GridSpec::line(8, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random_field(g, &mut rng);
        let id = OpticalSystem::identity(g);
        assert_eq!(id.apply_forward(&f).unwrap(), f);
        assert_eq!(id.apply_adjoint(&f).unwrap(), f);
        let dense_id = OpticalSystem::dense(DenseKernel::identity(g));
        assert!(dense_id.apply_forward(&f).unwrap().max_abs_diff(&f).unwrap() < 1e-15);
        assert_eq!(id.to_dense(&OracleBudget::default()).unwrap(), DenseKernel::identity(g));
        assert_eq!(id.point_response(3).unwrap(), ComplexField::delta(g, 3).unwrap());
    }

    #[test]
    fn mask_adjoint_is_conjugate_multiplication() {
        let g = GridSpec::line(8, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = random_field(g, &mut rng);
        let f = random_field(g, &mut rng);
        let m = OpticalSystem::mask(t.clone());
        let expect = crate::grid::pointwise_multiply(&t.conj(), &f).unwrap();
        assert_eq!(m.apply_adjoint(&f).unwrap(), expect);
        // dense form: diagonal of t / cell measure
        let k = m.to_dense(&OracleBudget::default()).unwrap();
        for o in 0..8 {
            for i in 0..8 {
                let e = if o == i { t.get(i) / 0.25 } else { ZERO };
                assert!((k.get(o, i) - e).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn compose_rules() {
        let g = GridSpec::line(16, 3.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = OpticalSystem::fresnel(g, 0.5, 0.8).unwrap();
        let f = random_field(g, &mut rng);
        let c = compose(&OpticalSystem::identity(g), &s).unwrap();
        assert!(c.apply_forward(&f).unwrap().max_abs_diff(&s.apply_forward(&f).unwrap()).unwrap() < 1e-12);
        let (t1, t2) = (random_field(g, &mut rng), random_field(g, &mut rng));
        let m = compose(&OpticalSystem::mask(t2.clone()), &OpticalSystem::mask(t1.clone())).unwrap();
        let OpticalSystem::Mask(m) = m else { panic!("masks should merge") };
        let prod = crate::grid::pointwise_multiply(&t2, &t1).unwrap();
        assert!(m.transmittance().max_abs_diff(&prod).unwrap() < 1e-12);
        let back = OpticalSystem::fresnel(g, 0.5, -0.8).unwrap();
        let round = compose(&back, &s).unwrap();
        assert!(round.apply_forward(&f).unwrap().max_abs_diff(&f).unwrap() < 1e-9);
        let other = GridSpec::line(8, 1.6).unwrap();
        assert!(compose(&OpticalSystem::identity(other), &s).is_err());
    }

    #[test]
    fn cascade_adjoint_reverses_order() {
        let g = GridSpec::line(16, 3.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = OpticalSystem::dense(random_dense(g, g, &mut rng));
        let b = OpticalSystem::mask(random_field(g, &mut rng));
        let c = compose(&b, &a).unwrap();
        let u = random_field(g, &mut rng);
        let expect = a.apply_adjoint(&b.apply_adjoint(&u).unwrap()).unwrap();
        assert!(c.apply_adjoint(&u).unwrap().max_abs_diff(&expect).unwrap() < 1e-12);
    }

    #[test]
    fn lens_is_pure_phase() {
        let g = GridSpec::square(8, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f = random_field(g, &mut rng);
        let out = OpticalSystem::thin_lens(g, 3.0, 0.5).unwrap().apply_forward(&f).unwrap();
        for (a, b) in out.values().iter().zip(f.values()) {
            assert!((a.norm() - b.norm()).abs() <= 1e-15 * b.norm().max(1.0));
        }
    }

    #[test]
    fn fresnel_rejects_zero_distance() {
        let g = GridSpec::line(8, 1.0).unwrap();
        assert!(OpticalSystem::fresnel(g, 0.5, 0.0).is_err());
        assert!(OpticalSystem::fresnel(g, -0.5, 1.0).is_err());
    }

    #[test]
    fn fresnel_is_unitary_and_adjoint_is_negative_distance() {
        let g = GridSpec::square(32, 3.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = random_field(g, &mut rng);
        let p = OpticalSystem::fresnel(g, 0.5, 2.0).unwrap();
        let out = p.apply_forward(&f).unwrap();
        assert!((out.norm() - f.norm()).abs() <= 1e-10 * f.norm());
        let back = OpticalSystem::fresnel(g, 0.5, -2.0).unwrap();
        let a = p.apply_adjoint(&out).unwrap();
        let b = back.apply_forward(&out).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-9);
        assert!(a.max_abs_diff(&f).unwrap() < 1e-9);
    }

    #[test]
    fn point_response_out_of_range() {
        let g = GridSpec::line(8, 1.0).unwrap();
        let r = OpticalSystem::identity(g).point_response(8);
        assert!(matches!(r, Err(QholoError::IndexOutOfRange { .. })));
    }

    #[test]
    fn to_dense_respects_budget() {
        let g = GridSpec::line(64, 1.0).unwrap();
        let budget = OracleBudget::new(32, usize::MAX).unwrap();
        assert!(matches!(
            OpticalSystem::identity(g).to_dense(&budget),
            Err(QholoError::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn dense_cascade_is_weighted_matrix_product() {
        let g = GridSpec::line(8, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (ka, kb) = (random_dense(g, g, &mut rng), random_dense(g, g, &mut rng));
        let c = compose(&OpticalSystem::dense(kb.clone()), &OpticalSystem::dense(ka.clone())).unwrap();
        let k = c.to_dense(&OracleBudget::default()).unwrap();
        for o in 0..8 {
            for i in 0..8 {
                let mut s = ZERO;
                for m in 0..8 {
                    s += kb.get(o, m) * ka.get(m, i);
                }
                assert!((k.get(o, i) - s * 0.25).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn linearity_of_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for sys in all_kinds(&mut rng) {
            let g = *sys.input_grid();
            let (f, h) = (random_field(g, &mut rng), random_field(g, &mut rng));
            let (a, b) = (Complex64::new(0.7, -1.1), Complex64::new(-0.4, 0.9));
            let lhs = sys.apply_forward(&f.scale(a).add_scaled(b, &h).unwrap()).unwrap();
            let rhs = sys
                .apply_forward(&f)
                .unwrap()
                .scale(a)
                .add_scaled(b, &sys.apply_forward(&h).unwrap())
                .unwrap();
            assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-12 * rhs.max_abs().max(1.0), "{}", sys.kind_name());
        }
    }

    #[test]
    fn kernel_row_matches_dense_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let budget = OracleBudget::default();
        for sys in all_kinds(&mut rng) {
            let k = sys.to_dense(&budget).unwrap();
            let row = sys.kernel_row(2).unwrap();
            for (i, v) in row.values().iter().enumerate() {
                assert!((v - k.get(2, i)).norm() < 1e-9 * (1.0 + v.norm()));
            }
        }
    }
}
