//! Masked Fourier phase retrieval: recover `u` from the intensities
//! `|F pad(d_l . u)|^2` of zero-padded 2-D DFTs of masked copies.
//!
//! Images are stored row-major. The DFT is unnormalized,
//! `F[v](m2, m1) = sum v(n2, n1) exp(-2 pi i (n2 m2 / M2 + n1 m1 / M1))`,
//! and its adjoint is the unnormalized inverse transform.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{dotc, norm, rng_from_seed, CVec, C64, ZERO};
use crate::metric::Metric;
use crate::operators::QuadraticMap;
use crate::lowrank::HermitianFactored;
use crate::solver::{run_primal_dual, IterationRecord, QuadraticProblem, SolverConfig, SolverOutcome};

/// Sobolev weights `(mu_I, mu_D1, mu_D2)` used for images by default.
pub const DEFAULT_SOBOLEV_WEIGHTS: (f64, f64, f64) = (0.25, 1.0, 1.0);

/// A complex image with `height` rows and `width` columns.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexImage {
    height: usize,
    width: usize,
    data: CVec,
}

impl ComplexImage {
    pub fn new(height: usize, width: usize, data: CVec) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidParameter(format!("image shape {height}x{width} is empty")));
        }
        check_len("image data", data.len(), height * width)?;
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidParameter("image contains non-finite values".into()));
        }
        Ok(ComplexImage { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![ZERO; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }
    pub fn data(&self) -> &[C64] {
        &self.data
    }
    pub fn into_data(self) -> CVec {
        self.data
    }
    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.data[row * self.width + col]
    }
    pub fn norm(&self) -> f64 {
        norm(&self.data)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    Rademacher,
    Gaussian,
    Custom,
}

/// `L` masks of a common shape.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskSet {
    masks: Vec<ComplexImage>,
    pub kind: MaskKind,
    pub seed: Option<u64>,
}

impl MaskSet {
    pub fn new(masks: Vec<ComplexImage>, kind: MaskKind, seed: Option<u64>) -> Result<Self> {
        let Some(first) = masks.first() else {
            return Err(Error::InvalidParameter("at least one mask required".into()));
        };
        if masks.iter().any(|m| m.shape() != first.shape()) {
            return Err(Error::Dimension("masks differ in shape".into()));
        }
        Ok(MaskSet { masks, kind, seed })
    }

    pub fn masks(&self) -> &[ComplexImage] {
        &self.masks
    }
    pub fn count(&self) -> usize {
        self.masks.len()
    }
    pub fn shape(&self) -> (usize, usize) {
        self.masks[0].shape()
    }
}

fn generate(height: usize, width: usize, count: usize, kind: MaskKind, seed: u64, mut draw: impl FnMut(&mut rand_chacha::ChaCha8Rng) -> f64) -> Result<MaskSet> {
    if count == 0 {
        return Err(Error::InvalidParameter("mask count must be positive".into()));
    }
    let mut rng = rng_from_seed(seed);
    let masks = (0..count)
        .map(|_| ComplexImage::new(height, width, (0..height * width).map(|_| C64::new(draw(&mut rng), 0.0)).collect()))
        .collect::<Result<Vec<_>>>()?;
    MaskSet::new(masks, kind, Some(seed))
}

/// Masks with independent entries `sqrt 2` and `-sqrt 2` with probability
/// 1/4 each and `0` with probability 1/2.
pub fn rademacher_masks(height: usize, width: usize, count: usize, seed: u64) -> Result<MaskSet> {
    generate(height, width, count, MaskKind::Rademacher, seed, |rng| match rng.random_range(0..4u8) {
        0 => std::f64::consts::SQRT_2,
        3 => -std::f64::consts::SQRT_2,
        _ => 0.0,
    })
}

/// Masks with independent standard normal entries.
pub fn gaussian_masks(height: usize, width: usize, count: usize, seed: u64) -> Result<MaskSet> {
    generate(height, width, count, MaskKind::Gaussian, seed, |rng| rng.sample(StandardNormal))
}

/// Number of masks that do not block each pixel, row-major.
pub fn coverage_map(masks: &MaskSet) -> Vec<usize> {
    let (h, w) = masks.shape();
    (0..h * w).map(|i| masks.masks.iter().filter(|m| m.data[i].norm() > 0.0).count()).collect()
}

/// The masked Fourier intensity map `Q(u) = (|F pad(d_l . u)|^2)_l`,
/// stacked mask by mask with each block row-major `M2 x M1`.
#[derive(Clone)]
pub struct PhaseRetrieval {
    masks: MaskSet,
    m2: usize,
    m1: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for PhaseRetrieval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PhaseRetrieval").field("shape", &self.masks.shape()).field("masks", &self.masks.count()).field("m2", &self.m2).field("m1", &self.m1).finish()
    }
}

impl PhaseRetrieval {
    pub fn new(masks: MaskSet, m2: usize, m1: usize) -> Result<Self> {
        let (n2, n1) = masks.shape();
        if m2 < n2 || m1 < n1 {
            return Err(Error::InvalidParameter(format!("transform size {m2}x{m1} is smaller than the image {n2}x{n1}")));
        }
        let mut planner = FftPlanner::new();
        Ok(PhaseRetrieval {
            row_fwd: planner.plan_fft_forward(m1),
            row_inv: planner.plan_fft_inverse(m1),
            col_fwd: planner.plan_fft_forward(m2),
            col_inv: planner.plan_fft_inverse(m2),
            masks,
            m2,
            m1,
        })
    }

    /// Transform of twice the image size in both directions.
    pub fn with_double_padding(masks: MaskSet) -> Result<Self> {
        let (n2, n1) = masks.shape();
        Self::new(masks, 2 * n2, 2 * n1)
    }

    pub fn masks(&self) -> &MaskSet {
        &self.masks
    }
    pub fn image_shape(&self) -> (usize, usize) {
        self.masks.shape()
    }
    pub fn transform_shape(&self) -> (usize, usize) {
        (self.m2, self.m1)
    }
    fn block(&self) -> usize {
        self.m2 * self.m1
    }

    /// 2-D transform of an `M2 x M1` buffer in place, rows then columns.
    fn transform(&self, buf: &mut [C64], inverse: bool) {
        let (rows, cols) = if inverse { (&self.row_inv, &self.col_inv) } else { (&self.row_fwd, &self.col_fwd) };
        rows.process(buf);
        let mut t = transpose(buf, self.m2, self.m1);
        cols.process(&mut t);
        buf.copy_from_slice(&transpose(&t, self.m1, self.m2));
    }

    /// `F pad(d . e)`.
    fn masked_transform(&self, mask: &ComplexImage, e: &[C64]) -> CVec {
        let (n2, n1) = mask.shape();
        let mut buf = vec![ZERO; self.block()];
        for r in 0..n2 {
            for c in 0..n1 {
                buf[r * self.m1 + c] = mask.data[r * n1 + c] * e[r * n1 + c];
            }
        }
        self.transform(&mut buf, false);
        buf
    }

    /// `conj(d) . crop(F* z)`, consuming `z`.
    fn masked_adjoint(&self, mask: &ComplexImage, mut z: CVec) -> CVec {
        let (n2, n1) = mask.shape();
        self.transform(&mut z, true);
        let mut out = vec![ZERO; n2 * n1];
        for r in 0..n2 {
            for c in 0..n1 {
                out[r * n1 + c] = mask.data[r * n1 + c].conj() * z[r * self.m1 + c];
            }
        }
        out
    }

    fn per_mask<T: Send>(&self, f: impl Fn(usize, &ComplexImage) -> T + Sync) -> Vec<T> {
        self.masks.masks.par_iter().enumerate().map(|(l, m)| f(l, m)).collect()
    }

    /// Intensities of an image as a real vector.
    pub fn forward_real(&self, u: &ComplexImage) -> Result<Vec<f64>> {
        if u.shape() != self.image_shape() {
            return Err(Error::Dimension(format!("image {:?} does not match masks {:?}", u.shape(), self.image_shape())));
        }
        Ok(self.apply(u.data())?.into_iter().map(|z| z.re).collect())
    }

    /// The full-size intensity vector as complex data with zero imaginary
    /// parts, the representation used by the solver.
    pub fn complex_data(g: &[f64]) -> CVec {
        g.iter().map(|&x| C64::new(x, 0.0)).collect()
    }
}

fn transpose(buf: &[C64], rows: usize, cols: usize) -> CVec {
    let mut out = vec![ZERO; buf.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = buf[r * cols + c];
        }
    }
    out
}

impl QuadraticMap for PhaseRetrieval {
    fn dim(&self) -> usize {
        let (n2, n1) = self.image_shape();
        n2 * n1
    }
    fn data_len(&self) -> usize {
        self.masks.count() * self.block()
    }
    fn apply(&self, u: &[C64]) -> Result<CVec> {
        check_len("image", u.len(), self.dim())?;
        let blocks = self.per_mask(|_, m| self.masked_transform(m, u).into_iter().map(|z| C64::new(z.norm_sqr(), 0.0)).collect::<CVec>());
        Ok(blocks.concat())
    }
    fn bilinear(&self, u: &[C64], v: &[C64]) -> Result<CVec> {
        check_len("first argument", u.len(), self.dim())?;
        check_len("second argument", v.len(), self.dim())?;
        let blocks = self.per_mask(|_, m| {
            let a = self.masked_transform(m, u);
            let b = self.masked_transform(m, v);
            a.iter().zip(&b).map(|(x, y)| x.conj() * y).collect::<CVec>()
        });
        Ok(blocks.concat())
    }
    fn hs_adjoint(&self, y: &[C64], e: &[C64]) -> Result<CVec> {
        check_len("data", y.len(), self.data_len())?;
        check_len("image", e.len(), self.dim())?;
        let block = self.block();
        let parts = self.per_mask(|l, m| {
            let mut z = self.masked_transform(m, e);
            for (zi, yi) in z.iter_mut().zip(&y[l * block..(l + 1) * block]) {
                *zi *= yi;
            }
            self.masked_adjoint(m, z)
        });
        // Summed in mask order so the result does not depend on scheduling.
        let mut out = vec![ZERO; self.dim()];
        for p in parts {
            for (o, v) in out.iter_mut().zip(p) {
                *o += v;
            }
        }
        Ok(out)
    }
}

/// `g + zeta` with Gaussian `zeta` rescaled to `|zeta| = level |g|`.
pub fn add_noise(g: &[f64], level: f64, seed: u64) -> Result<Vec<f64>> {
    if !(level >= 0.0 && level.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise level must be nonnegative, got {level}")));
    }
    let gn = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    if level == 0.0 || gn == 0.0 {
        return Ok(g.to_vec());
    }
    let mut rng = rng_from_seed(seed);
    let zeta: Vec<f64> = (0..g.len()).map(|_| rng.sample(StandardNormal)).collect();
    let zn = zeta.iter().map(|x| x * x).sum::<f64>().sqrt();
    let c = level * gn / zn;
    Ok(g.iter().zip(&zeta).map(|(a, z)| a + c * z).collect())
}

/// `min_theta |exp(i theta) u - u_ref| / |u_ref|`.
pub fn error_up_to_phase(u: &ComplexImage, reference: &ComplexImage) -> Result<f64> {
    if u.shape() != reference.shape() {
        return Err(Error::Dimension(format!("shapes {:?} and {:?} differ", u.shape(), reference.shape())));
    }
    let rn = reference.norm();
    if rn == 0.0 {
        return Err(Error::InvalidParameter("reference image is zero".into()));
    }
    // The optimal rotation aligns the correlation <u, u_ref> with the real axis.
    let corr = dotc(&u.data, &reference.data);
    let phase = if corr.norm() > 0.0 { corr / corr.norm() } else { C64::new(1.0, 0.0) };
    let diff: CVec = u.data.iter().zip(&reference.data).map(|(a, b)| a * phase - b).collect();
    Ok(norm(&diff) / rn)
}

/// Per-pixel `|u - u_ref|` after the optimal global phase rotation.
pub fn pixel_errors(u: &ComplexImage, reference: &ComplexImage) -> Result<Vec<f64>> {
    error_up_to_phase(u, reference)?;
    let corr = dotc(&u.data, &reference.data);
    let phase = if corr.norm() > 0.0 { corr / corr.norm() } else { C64::new(1.0, 0.0) };
    Ok(u.data.iter().zip(&reference.data).map(|(a, b)| (a * phase - b).norm()).collect())
}

/// A smooth complex test image: five Gaussian bumps with random centers,
/// widths, amplitudes and phases.
pub fn blob_image(height: usize, width: usize, seed: u64) -> Result<ComplexImage> {
    let mut rng = rng_from_seed(seed);
    let mut data = vec![ZERO; height * width];
    let short = height.min(width) as f64;
    for _ in 0..5 {
        let cy = rng.random_range(0.2..0.8) * height as f64;
        let cx = rng.random_range(0.2..0.8) * width as f64;
        let s = rng.random_range(0.08..0.2) * short;
        let a = rng.random_range(0.5..1.0);
        let phase = C64::from_polar(a, rng.random_range(0.0..std::f64::consts::TAU));
        for r in 0..height {
            for c in 0..width {
                let d2 = (r as f64 - cy).powi(2) + (c as f64 - cx).powi(2);
                data[r * width + c] += phase * (-d2 / (2.0 * s * s)).exp();
            }
        }
    }
    ComplexImage::new(height, width, data)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainMetric {
    Euclidean,
    Sobolev { mu: (f64, f64, f64) },
}

impl Default for DomainMetric {
    fn default() -> Self {
        DomainMetric::Sobolev { mu: DEFAULT_SOBOLEV_WEIGHTS }
    }
}

impl DomainMetric {
    pub fn build(&self, height: usize, width: usize) -> Result<Metric> {
        match *self {
            DomainMetric::Euclidean => Ok(Metric::euclidean(height * width)),
            DomainMetric::Sobolev { mu } => Metric::sobolev(height, width, mu),
        }
    }
}

/// A phase retrieval instance.
#[derive(Clone, Debug)]
pub struct PRProblem {
    pub operator: PhaseRetrieval,
    pub metric: Metric,
    /// Measured intensities, `L * M2 * M1` values.
    pub data: Vec<f64>,
    pub truth: Option<ComplexImage>,
}

impl PRProblem {
    pub fn new(operator: PhaseRetrieval, domain: DomainMetric, data: Vec<f64>, truth: Option<ComplexImage>) -> Result<Self> {
        check_len("data", data.len(), operator.data_len())?;
        if let Some(x) = data.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(format!("data contains {x}")));
        }
        if let Some(t) = &truth {
            if t.shape() != operator.image_shape() {
                return Err(Error::Dimension("ground truth does not match the masks".into()));
            }
        }
        let (h, w) = operator.image_shape();
        let metric = domain.build(h, w)?;
        Ok(PRProblem { operator, metric, data, truth })
    }

    /// Noiseless or noisy data generated from a known image.
    pub fn synthetic(operator: PhaseRetrieval, domain: DomainMetric, truth: ComplexImage, noise: f64, seed: u64) -> Result<Self> {
        let clean = operator.forward_real(&truth)?;
        let data = add_noise(&clean, noise, seed)?;
        Self::new(operator, domain, data, Some(truth))
    }
}

#[derive(Clone, Debug)]
pub struct Recovery {
    pub image: ComplexImage,
    pub tensor: HermitianFactored,
    pub outcome: SolverOutcome<HermitianFactored>,
    /// Relative error up to phase when the problem carries a ground truth.
    pub error: Option<f64>,
}

/// Runs the lifted primal-dual method and extracts the leading rank-one
/// factor. Zero data yields the zero image.
pub fn recover(problem: &PRProblem, cfg: &SolverConfig, sink: &mut dyn FnMut(&IterationRecord)) -> Result<Recovery> {
    let lifted = QuadraticProblem::new(&problem.operator, problem.metric.clone());
    let g = PhaseRetrieval::complex_data(&problem.data);
    let outcome = run_primal_dual(&lifted, &g, cfg, sink)?;
    let (h, w) = problem.operator.image_shape();
    let image = match outcome.w.leading_rank_one() {
        Ok(u) => ComplexImage::new(h, w, u)?,
        Err(Error::NoSolution(_)) => ComplexImage::zeros(h, w)?,
        Err(e) => return Err(e),
    };
    let error = match &problem.truth {
        Some(t) if t.norm() > 0.0 => Some(error_up_to_phase(&image, t)?),
        _ => None,
    };
    Ok(Recovery { image, tensor: outcome.w.clone(), outcome, error })
}
