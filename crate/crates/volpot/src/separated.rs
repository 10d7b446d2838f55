//! Rank-R separated kernel tables and the convolution evaluator.
//!
//! A separated kernel stores, per quadrature node, a scalar weight and a
//! sampled one-dimensional factor vector over integer grid offsets. Applying
//! the potential to a separated density then costs one 1-D convolution per
//! (node, distinct factor, point slot) instead of an n-dimensional sum, and
//! the n-fold products are accumulated as sign + log-magnitude so dimensions
//! up to several hundred thousand neither overflow nor underflow.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::kernels::{self, AdvectionDiffusionParams, CubatureParams};
use crate::quadrature::QuadratureNodeSet;
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Signed log-space scalars
// ---------------------------------------------------------------------------

/// A real number stored as sign and natural log of magnitude, so that
/// products of ~1e6 bounded factors stay representable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedLogValue {
    pub sign: i8,
    /// ln |value|; meaningless when sign == 0.
    pub log_mag: f64,
}

impl SignedLogValue {
    pub fn zero() -> Self {
        Self {
            sign: 0,
            log_mag: f64::NEG_INFINITY,
        }
    }

    pub fn from_f64(v: f64) -> Self {
        if v == 0.0 {
            Self::zero()
        } else {
            Self {
                sign: if v > 0.0 { 1 } else { -1 },
                log_mag: v.abs().ln(),
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.sign == 0
    }

    /// Integer power (the dimension-group multiplicity).
    pub fn powi(self, exp: usize) -> Self {
        if exp == 0 {
            return Self {
                sign: 1,
                log_mag: 0.0,
            };
        }
        if self.sign == 0 {
            return Self::zero();
        }
        Self {
            sign: if self.sign < 0 && exp % 2 == 1 { -1 } else { 1 },
            log_mag: self.log_mag * exp as f64,
        }
    }

    /// Convert back to f64; overflows to ±inf, underflows to ±0.
    pub fn to_f64(self) -> f64 {
        if self.sign == 0 {
            0.0
        } else {
            self.sign as f64 * self.log_mag.exp()
        }
    }
}

impl std::ops::Mul for SignedLogValue {
    type Output = Self;

    fn mul(self, other: Self) -> Self {
        if self.sign == 0 || other.sign == 0 {
            return Self::zero();
        }
        Self {
            sign: self.sign * other.sign,
            log_mag: self.log_mag + other.log_mag,
        }
    }
}

/// Max-shifted signed sum of log-space terms, accumulated in slice order so
/// the result is independent of thread count.
pub fn signed_log_sum(terms: &[SignedLogValue]) -> SignedLogValue {
    let mut max = f64::NEG_INFINITY;
    for t in terms {
        if t.sign != 0 && t.log_mag > max {
            max = t.log_mag;
        }
    }
    if max == f64::NEG_INFINITY {
        return SignedLogValue::zero();
    }
    let mut acc = 0.0;
    for t in terms {
        if t.sign != 0 {
            acc += t.sign as f64 * (t.log_mag - max).exp();
        }
    }
    if acc == 0.0 {
        // exact cancellation below log-space resolution
        return SignedLogValue::zero();
    }
    SignedLogValue {
        sign: if acc > 0.0 { 1 } else { -1 },
        log_mag: max + acc.abs().ln(),
    }
}

// ---------------------------------------------------------------------------
// Grids and separated densities
// ---------------------------------------------------------------------------

/// Uniform grid h·[index_min, index_max] shared by every dimension (cube
/// domains).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub h: f64,
    pub index_min: i64,
    pub index_max: i64,
}

impl GridSpec {
    pub fn new(h: f64, index_min: i64, index_max: i64) -> Result<Self> {
        if !(h > 0.0) || index_min > index_max {
            return Err(Error::InvalidParams(format!(
                "grid needs h > 0 and index_min <= index_max, got h={h}, [{index_min}, {index_max}]"
            )));
        }
        Ok(Self {
            h,
            index_min,
            index_max,
        })
    }

    /// Symmetric grid covering the cube [-half_width, half_width].
    pub fn symmetric(h: f64, half_width: f64) -> Result<Self> {
        let m = (half_width / h).round() as i64;
        Self::new(h, -m, m)
    }

    pub fn len(&self) -> usize {
        (self.index_max - self.index_min + 1) as usize
    }

    /// Never empty: the constructor requires index_min <= index_max.
    pub fn is_empty(&self) -> bool {
        false
    }
}

/// One group of dimensions sharing the same 1-D density factor, the same
/// evaluation-point slot, and (for advection-diffusion) the same drift
/// component.
#[derive(Debug, Clone)]
pub struct DimensionGroup {
    /// Index into the density's sample-vector pool.
    pub samples: usize,
    /// How many dimensions this group stands for.
    pub multiplicity: usize,
    /// Which coordinate of an evaluation point the group reads.
    pub slot: usize,
    /// Drift component b_j shared by the group's dimensions.
    pub drift: f64,
}

/// One rank-term of a separated density.
#[derive(Debug, Clone)]
pub struct DensityTerm {
    pub coefficient: f64,
    /// Symmetry fold count: how many identical copies of this term the full
    /// density contains (e.g. n-1 interchangeable dimensions).
    pub multiplier: f64,
    pub groups: Vec<DimensionGroup>,
    /// Per-time-index samples for space-time densities; None for elliptic
    /// problems.
    pub time_profile: Option<Vec<f64>>,
}

/// Density in separated form: a short sum of products of one-dimensional
/// sample vectors, with dimension-group compression.
#[derive(Debug, Clone)]
pub struct SeparatedDensity {
    pub grid: GridSpec,
    pub n: usize,
    /// Distinct 1-D sample vectors over the grid index range.
    pub sample_pool: Vec<Vec<f64>>,
    pub terms: Vec<DensityTerm>,
}

impl SeparatedDensity {
    /// Number of point-slots an evaluation point must provide.
    pub fn slot_count(&self) -> usize {
        self.terms
            .iter()
            .flat_map(|t| t.groups.iter().map(|g| g.slot + 1))
            .max()
            .unwrap_or(0)
    }

    fn validate(&self) -> Result<()> {
        for (q, term) in self.terms.iter().enumerate() {
            let total: usize = term.groups.iter().map(|g| g.multiplicity).sum();
            if total != self.n {
                return Err(Error::InvalidParams(format!(
                    "term {q}: group multiplicities sum to {total}, expected n = {}",
                    self.n
                )));
            }
            for g in &term.groups {
                if g.multiplicity == 0 {
                    return Err(Error::InvalidParams(format!(
                        "term {q}: zero-multiplicity group"
                    )));
                }
                if g.samples >= self.sample_pool.len() {
                    return Err(Error::InvalidParams(format!(
                        "term {q}: sample index {} out of pool",
                        g.samples
                    )));
                }
                if self.sample_pool[g.samples].len() != self.grid.len() {
                    return Err(Error::InvalidParams(format!(
                        "sample vector {} length {} != grid length {}",
                        g.samples,
                        self.sample_pool[g.samples].len(),
                        self.grid.len()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Closed-form densities the sampler knows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DensitySpec {
    /// e^{-|x|²}
    Gaussian,
    /// (4|x|² - 2n) e^{-|x|²} = Δe^{-|x|²}
    LaplacianGaussian,
    /// Rank-1 product Π_j e^{-alpha x_j²}
    GaussianPower { alpha: f64 },
}

/// How to assign dimensions to point slots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlotLayout {
    /// Slot 0 = first coordinate, slot 1 = the remaining n-1 (the layout of
    /// axis evaluation points (x1, 0, …, 0)); collapses to one slot at n = 1.
    AxisFirst,
    /// One slot per dimension; evaluation points are full multi-indices.
    /// Intended for small n (the rank of the Laplacian-Gaussian density
    /// grows like n in this layout).
    PerDimension,
}

/// Sample a closed-form density into separated form on a cube grid.
pub fn sample_density(
    spec: DensitySpec,
    grid: GridSpec,
    n: usize,
    layout: SlotLayout,
) -> Result<SeparatedDensity> {
    if n < 1 {
        return Err(Error::InvalidParams("n must be >= 1".into()));
    }
    if layout == SlotLayout::PerDimension && n > 16 {
        return Err(Error::InvalidParams(
            "per-dimension layout is meant for small n (<= 16)".into(),
        ));
    }
    let sample = |f: &dyn Fn(f64) -> f64| -> Vec<f64> {
        (grid.index_min..=grid.index_max)
            .map(|m| f(m as f64 * grid.h))
            .collect()
    };
    let gauss: Vec<f64> = sample(&kernels::gaussian_density);

    let density = match spec {
        DensitySpec::Gaussian | DensitySpec::GaussianPower { .. } => {
            let vec = if let DensitySpec::GaussianPower { alpha } = spec {
                sample(&|x| (-alpha * x * x).exp())
            } else {
                gauss
            };
            let groups = match layout {
                SlotLayout::AxisFirst => axis_groups(n, &[(0, 0.0)], 0),
                SlotLayout::PerDimension => (0..n)
                    .map(|j| DimensionGroup {
                        samples: 0,
                        multiplicity: 1,
                        slot: j,
                        drift: 0.0,
                    })
                    .collect(),
            };
            SeparatedDensity {
                grid,
                n,
                sample_pool: vec![vec],
                terms: vec![DensityTerm {
                    coefficient: 1.0,
                    multiplier: 1.0,
                    groups,
                    time_profile: None,
                }],
            }
        }
        DensitySpec::LaplacianGaussian => {
            // Σ_j (4x_j² - 2) Π_k e^{-x_k²}; pool: 0 = Gaussian, 1 = special
            let special = sample(&|x| kernels::laplacian_gaussian_density(1, x));
            let pool = vec![gauss, special];
            let terms = match layout {
                SlotLayout::AxisFirst => {
                    // term A: special factor in the axis slot;
                    // term B (x n-1): special factor in one of the tail dims
                    let mut terms = vec![DensityTerm {
                        coefficient: 1.0,
                        multiplier: 1.0,
                        groups: axis_groups(n, &[(1, 0.0)], 0),
                        time_profile: None,
                    }];
                    if n >= 2 {
                        let mut groups = vec![
                            DimensionGroup {
                                samples: 0,
                                multiplicity: 1,
                                slot: 0,
                                drift: 0.0,
                            },
                            DimensionGroup {
                                samples: 1,
                                multiplicity: 1,
                                slot: 1,
                                drift: 0.0,
                            },
                        ];
                        if n > 2 {
                            groups.push(DimensionGroup {
                                samples: 0,
                                multiplicity: n - 2,
                                slot: 1,
                                drift: 0.0,
                            });
                        }
                        terms.push(DensityTerm {
                            coefficient: 1.0,
                            multiplier: (n - 1) as f64,
                            groups,
                            time_profile: None,
                        });
                    }
                    terms
                }
                SlotLayout::PerDimension => (0..n)
                    .map(|j| DensityTerm {
                        coefficient: 1.0,
                        multiplier: 1.0,
                        groups: (0..n)
                            .map(|k| DimensionGroup {
                                samples: if k == j { 1 } else { 0 },
                                multiplicity: 1,
                                slot: k,
                                drift: 0.0,
                            })
                            .collect(),
                        time_profile: None,
                    })
                    .collect(),
            };
            SeparatedDensity {
                grid,
                n,
                sample_pool: pool,
                terms,
            }
        }
    };
    density.validate()?;
    Ok(density)
}

/// Axis layout helper: the given (sample, drift) goes into slot 0 with
/// multiplicity 1, a Gaussian tail of multiplicity n-1 into slot 1.
fn axis_groups(n: usize, head: &[(usize, f64)], tail_sample: usize) -> Vec<DimensionGroup> {
    let mut groups: Vec<DimensionGroup> = head
        .iter()
        .map(|&(samples, drift)| DimensionGroup {
            samples,
            multiplicity: 1,
            slot: 0,
            drift,
        })
        .collect();
    if n > 1 {
        groups.push(DimensionGroup {
            samples: tail_sample,
            multiplicity: n - 1,
            slot: 1,
            drift: 0.0,
        });
    }
    groups
}

// ---------------------------------------------------------------------------
// Separated kernels
// ---------------------------------------------------------------------------

/// Which potential a kernel table represents.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialKind {
    Newton,
    AdvectionDiffusion(AdvectionDiffusionParams),
    /// Heat-potential spatial tables at fixed time-integration nodes; nu is
    /// the diffusivity. Node t-values are the λ integration points.
    Heat { nu: f64 },
}

/// Per-node kernel data: quadrature weight and sampled factor vectors, one
/// per distinct drift component (a single table for drift-free kernels).
#[derive(Debug, Clone)]
pub struct KernelNode {
    pub t: f64,
    pub weight: f64,
    pub tables: Vec<Vec<f64>>,
}

/// Rank-R separated kernel: per quadrature node a weight and factor vectors
/// F_ℓ\[m\], m ∈ \[-m_max, m_max\], sampled at per-dimension offsets.
#[derive(Debug, Clone)]
pub struct SeparatedKernel {
    pub kind: PotentialKind,
    pub params: CubatureParams,
    pub m_max: usize,
    /// Distinct drift components, index-aligned with each node's tables.
    pub drifts: Vec<f64>,
    pub nodes: Vec<KernelNode>,
}

impl SeparatedKernel {
    pub fn rank(&self) -> usize {
        self.nodes.len()
    }

    /// ln of the per-dimension constant folded into every group product:
    /// (πD)^{-1/2} for the elliptic kernels, h·π^{-1/2} for the heat tables.
    pub fn per_dim_log_scale(&self) -> f64 {
        match self.kind {
            PotentialKind::Newton | PotentialKind::AdvectionDiffusion(_) => {
                -0.5 * (std::f64::consts::PI * self.params.d).ln()
            }
            PotentialKind::Heat { .. } => {
                self.params.h.ln() - 0.5 * std::f64::consts::PI.ln()
            }
        }
    }

    /// Scalar prefactor applied once per evaluated point.
    pub fn scalar_prefactor(&self) -> f64 {
        match self.kind {
            PotentialKind::Newton | PotentialKind::AdvectionDiffusion(_) => {
                self.params.d * self.params.h * self.params.h
            }
            // heat assembly owns its own prefactor
            PotentialKind::Heat { .. } => 1.0,
        }
    }

    fn table_index_for_drift(&self, drift: f64) -> Result<usize> {
        self.drifts
            .iter()
            .position(|&d| d == drift)
            .ok_or_else(|| {
                Error::InvalidParams(format!(
                    "kernel has no factor table for drift component {drift}"
                ))
            })
    }
}

/// Build the separated kernel table for a potential kind.
///
/// Factor samples per node ℓ and offset m:
///   Newton:  g_M(m/√D, τ_ℓ) · (1+τ_ℓ)^{-1/2},
///   advdiff: g_M(m/√D - τ_ℓ·√D·h·b_j, 2τ_ℓ) · (1+2τ_ℓ)^{-1/2}, per distinct b_j,
///   heat:    heat-factor(h·m, λ_ℓ) (carries its own width share).
/// Node weights come in through `quad` and hold every shared scalar.
pub fn build_kernel(
    kind: PotentialKind,
    params: CubatureParams,
    quad: &QuadratureNodeSet,
    m_max: usize,
) -> Result<SeparatedKernel> {
    match kind {
        PotentialKind::Newton if params.n < 3 => {
            return Err(Error::InvalidParams(format!(
                "the separable Newton representation needs n >= 3, got {}",
                params.n
            )));
        }
        PotentialKind::AdvectionDiffusion(ref ad) if ad.b.len() != params.n => {
            return Err(Error::InvalidParams(format!(
                "drift length {} != n = {}",
                ad.b.len(),
                params.n
            )));
        }
        _ => {}
    }
    let drifts: Vec<f64> = match kind {
        PotentialKind::AdvectionDiffusion(ref ad) => {
            let mut ds: Vec<f64> = Vec::new();
            for &b in &ad.b {
                if !ds.contains(&b) {
                    ds.push(b);
                }
            }
            ds
        }
        _ => vec![0.0],
    };
    let sqrt_d = params.d.sqrt();
    let len = 2 * m_max + 1;
    let nodes: Vec<KernelNode> = quad
        .nodes
        .par_iter()
        .map(|node| {
            let tables: Vec<Vec<f64>> = drifts
                .iter()
                .map(|&bj| {
                    (0..len)
                        .map(|i| {
                            let m = i as i64 - m_max as i64;
                            match kind {
                                PotentialKind::Newton => {
                                    kernels::g_newton(params.m, m as f64 / sqrt_d, node.t)
                                        / (1.0 + node.t).sqrt()
                                }
                                PotentialKind::AdvectionDiffusion(_) => {
                                    let shift = node.t * sqrt_d * params.h * bj;
                                    kernels::advdiff_factor(
                                        params.m,
                                        m as f64 / sqrt_d - shift,
                                        node.t,
                                        0.0,
                                    ) / (1.0 + 2.0 * node.t).sqrt()
                                }
                                PotentialKind::Heat { nu } => kernels::heat_factor(
                                    params.m,
                                    m as f64 * params.h,
                                    node.t,
                                    params.d,
                                    params.h,
                                    nu,
                                ),
                            }
                        })
                        .collect()
                })
                .collect();
            KernelNode {
                t: node.t,
                weight: node.weight,
                tables,
            }
        })
        .collect();
    Ok(SeparatedKernel {
        kind,
        params,
        m_max,
        drifts,
        nodes,
    })
}

/// Discrete 1-D convolution Σ_m F\[k-m\]·density\[m\] at output index k,
/// direct summation in ascending m. F covers offsets \[-m_max, m_max\];
/// offsets outside are treated as zero.
pub fn conv1d(factor: &[f64], density: &[f64], density_index_min: i64, k: i64) -> f64 {
    debug_assert!(factor.len() % 2 == 1);
    let m_max = (factor.len() / 2) as i64;
    let mut sum = 0.0;
    for (i, &u) in density.iter().enumerate() {
        let m = density_index_min + i as i64;
        let offset = k - m;
        if offset.abs() <= m_max {
            sum += factor[(offset + m_max) as usize] * u;
        }
    }
    sum
}

/// One evaluated potential value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialValue {
    pub value: f64,
    /// The signed log-space sum cancelled (or decayed) to exactly zero.
    pub underflowed_to_zero: bool,
}

/// Evaluate the separated cubature at grid points.
///
/// Each point supplies one grid index per density slot. Per point the value
/// is  prefactor · Σ_q r_q·mult_q Σ_ℓ w_ℓ Π_groups [scale·conv1d(F_ℓ, u_g, k_slot)]^multiplicity,
/// with the per-dimension scale share of the normalization folded into each
/// group factor inside signed log-space, and the ℓ/q sums reduced by a
/// max-shifted signed log-sum in fixed order (deterministic for any thread
/// count).
pub fn evaluate(
    kernel: &SeparatedKernel,
    density: &SeparatedDensity,
    points: &[Vec<i64>],
) -> Result<Vec<PotentialValue>> {
    if matches!(kernel.kind, PotentialKind::Heat { .. }) {
        return Err(Error::InvalidParams(
            "heat kernels are assembled by heat::solve, not separated::evaluate".into(),
        ));
    }
    density.validate()?;
    if density.n != kernel.params.n {
        return Err(Error::GridMismatch(format!(
            "density n = {} vs kernel n = {}",
            density.n, kernel.params.n
        )));
    }
    if (density.grid.h - kernel.params.h).abs() > 1e-15 * kernel.params.h {
        return Err(Error::GridMismatch(format!(
            "density grid h = {} vs kernel h = {}",
            density.grid.h, kernel.params.h
        )));
    }
    let extent = (density.grid.index_max - density.grid.index_min) as usize;
    if kernel.m_max < extent {
        return Err(Error::GridMismatch(format!(
            "kernel m_max = {} smaller than grid extent {extent}",
            kernel.m_max
        )));
    }
    let slots = density.slot_count();
    for (i, p) in points.iter().enumerate() {
        if p.len() != slots {
            return Err(Error::InvalidParams(format!(
                "point {i} has {} coordinates, density expects {slots} slots",
                p.len()
            )));
        }
        for &k in p {
            if k < density.grid.index_min || k > density.grid.index_max {
                return Err(Error::InvalidParams(format!(
                    "point {i} index {k} outside grid [{}, {}]",
                    density.grid.index_min, density.grid.index_max
                )));
            }
        }
    }
    // resolve drift -> table index once
    let mut table_of_group: Vec<Vec<usize>> = Vec::with_capacity(density.terms.len());
    for term in &density.terms {
        let mut per = Vec::with_capacity(term.groups.len());
        for g in &term.groups {
            per.push(kernel.table_index_for_drift(g.drift)?);
        }
        table_of_group.push(per);
    }

    let per_dim_log = kernel.per_dim_log_scale();
    let prefactor = kernel.scalar_prefactor();

    let values: Vec<PotentialValue> = points
        .par_iter()
        .map(|point| {
            // distinct (pool index, slot, table) convolutions for this point
            let mut conv_cache: Vec<((usize, usize, usize), f64)> = Vec::new();
            let mut terms_log: Vec<SignedLogValue> =
                Vec::with_capacity(kernel.nodes.len() * density.terms.len());
            // group factors are accumulated in a canonical key order, so a
            // permutation of the group list cannot change rounding
            let mut factors: Vec<((usize, usize, usize, usize), SignedLogValue)> = Vec::new();
            for node in &kernel.nodes {
                conv_cache.clear();
                let w = SignedLogValue::from_f64(node.weight);
                for (q, term) in density.terms.iter().enumerate() {
                    factors.clear();
                    for (gi, g) in term.groups.iter().enumerate() {
                        let table = table_of_group[q][gi];
                        let key = (g.samples, g.slot, table);
                        let conv = match conv_cache.iter().find(|(k, _)| *k == key) {
                            Some(&(_, v)) => v,
                            None => {
                                let v = conv1d(
                                    &node.tables[table],
                                    &density.sample_pool[g.samples],
                                    density.grid.index_min,
                                    point[g.slot],
                                );
                                conv_cache.push((key, v));
                                v
                            }
                        };
                        let factor = if conv == 0.0 {
                            SignedLogValue::zero()
                        } else {
                            SignedLogValue {
                                sign: if conv > 0.0 { 1 } else { -1 },
                                log_mag: conv.abs().ln() + per_dim_log,
                            }
                        };
                        factors.push((
                            (g.samples, g.slot, table, g.multiplicity),
                            factor.powi(g.multiplicity),
                        ));
                    }
                    factors.sort_by_key(|(key, _)| *key);
                    let mut acc = w * SignedLogValue::from_f64(term.coefficient * term.multiplier);
                    for (_, f) in &factors {
                        acc = acc * *f;
                    }
                    terms_log.push(acc);
                }
            }
            let total = signed_log_sum(&terms_log);
            PotentialValue {
                value: prefactor * total.to_f64(),
                underflowed_to_zero: total.is_zero(),
            }
        })
        .collect();
    Ok(values)
}

// ---------------------------------------------------------------------------
// Kernel export/import
// ---------------------------------------------------------------------------

fn kind_code(kind: &PotentialKind) -> u32 {
    match kind {
        PotentialKind::Newton => 0,
        PotentialKind::AdvectionDiffusion(_) => 1,
        PotentialKind::Heat { .. } => 2,
    }
}

/// Flat little-endian binary layout: header
/// (kind u32, M u32, n u64, h f64, D f64, R u64, m_max u64) followed by R
/// blocks of (weight f64, 2·m_max+1 factor f64). For multi-table kernels the
/// first drift's table is written.
pub fn export_binary(kernel: &SeparatedKernel, w: &mut impl Write) -> Result<()> {
    w.write_all(&kind_code(&kernel.kind).to_le_bytes())?;
    w.write_all(&(kernel.params.m as u32).to_le_bytes())?;
    w.write_all(&(kernel.params.n as u64).to_le_bytes())?;
    w.write_all(&kernel.params.h.to_le_bytes())?;
    w.write_all(&kernel.params.d.to_le_bytes())?;
    w.write_all(&(kernel.nodes.len() as u64).to_le_bytes())?;
    w.write_all(&(kernel.m_max as u64).to_le_bytes())?;
    for node in &kernel.nodes {
        w.write_all(&node.weight.to_le_bytes())?;
        for &f in &node.tables[0] {
            w.write_all(&f.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Header and tables read back from [`export_binary`]'s layout.
#[derive(Debug, Clone)]
pub struct ImportedKernel {
    pub kind_code: u32,
    pub m: u32,
    pub n: u64,
    pub h: f64,
    pub d: f64,
    pub rank: u64,
    pub m_max: u64,
    pub nodes: Vec<(f64, Vec<f64>)>,
}

pub fn import_binary(r: &mut impl Read) -> Result<ImportedKernel> {
    fn read_u32(r: &mut impl Read) -> Result<u32> {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }
    fn read_u64(r: &mut impl Read) -> Result<u64> {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }
    fn read_f64(r: &mut impl Read) -> Result<f64> {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }
    let kind_code = read_u32(r)?;
    let m = read_u32(r)?;
    let n = read_u64(r)?;
    let h = read_f64(r)?;
    let d = read_f64(r)?;
    let rank = read_u64(r)?;
    let m_max = read_u64(r)?;
    let len = 2 * m_max as usize + 1;
    let mut nodes = Vec::with_capacity(rank as usize);
    for _ in 0..rank {
        let weight = read_f64(r)?;
        let mut table = Vec::with_capacity(len);
        for _ in 0..len {
            table.push(read_f64(r)?);
        }
        nodes.push((weight, table));
    }
    Ok(ImportedKernel {
        kind_code,
        m,
        n,
        h,
        d,
        rank,
        m_max,
        nodes,
    })
}

/// Long-format CSV export for inspection: one row per (node, offset).
pub fn export_csv(kernel: &SeparatedKernel, w: &mut impl Write) -> Result<()> {
    writeln!(w, "node,t,weight,offset,factor")?;
    for (l, node) in kernel.nodes.iter().enumerate() {
        for (i, &f) in node.tables[0].iter().enumerate() {
            let m = i as i64 - kernel.m_max as i64;
            writeln!(
                w,
                "{l},{:.14E},{:.14E},{m},{:.14E}",
                node.t, node.weight, f
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{build_nodes, DoubleExpSubstitution, QuadratureNode, TrapezoidRule};
    use proptest::prelude::*;

    fn single_node_set(t: f64, weight: f64) -> QuadratureNodeSet {
        QuadratureNodeSet {
            nodes: vec![QuadratureNode { t, weight }],
            clipped: false,
        }
    }

    #[test]
    fn signed_log_roundtrip_and_products() {
        for &v in &[3.5f64, -0.002, 1e-200, -1e200] {
            let s = SignedLogValue::from_f64(v);
            // exp(ln ·) roundtrip carries ~|log_mag|·ε relative error
            assert!((s.to_f64() - v).abs() <= 1e-13 * v.abs());
        }
        let a = SignedLogValue::from_f64(-2.0);
        assert!((a.powi(3).to_f64() + 8.0).abs() < 1e-14);
        assert!((a.powi(2).to_f64() - 4.0).abs() < 1e-14);
        assert_eq!(a.powi(0).to_f64(), 1.0);
        assert!((SignedLogValue::from_f64(0.0) * a).is_zero());
        // a product of 1e6 factors of 0.999 stays representable
        let f = SignedLogValue::from_f64(0.999);
        let p = f.powi(1_000_000);
        assert!(p.log_mag.is_finite());
        assert!((p.log_mag - 1e6 * 0.999f64.ln()).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn signed_log_sum_matches_plain_sum(vals in proptest::collection::vec(-100.0f64..100.0, 1..20)) {
            let terms: Vec<SignedLogValue> = vals.iter().map(|&v| SignedLogValue::from_f64(v)).collect();
            let got = signed_log_sum(&terms).to_f64();
            let want: f64 = vals.iter().sum();
            prop_assert!((got - want).abs() <= 1e-12 * vals.iter().map(|v| v.abs()).sum::<f64>().max(1e-12));
        }
    }

    #[test]
    fn conv1d_identities() {
        // unit impulse at m = 0 reproduces the factor table
        let factor: Vec<f64> = (0..7).map(|i| i as f64 + 1.0).collect(); // offsets -3..3
        let mut impulse = vec![0.0; 5]; // indices -2..2
        impulse[2] = 1.0;
        for k in -2..=2i64 {
            let v = conv1d(&factor, &impulse, -2, k);
            assert_eq!(v, factor[(k + 3) as usize]);
        }
        // constant factor windowed sums
        let ones = vec![1.0; 7];
        let density = vec![1.0, 2.0, 3.0];
        let v = conv1d(&ones, &density, 0, 1);
        assert_eq!(v, 6.0);
        // out-of-window contributions are dropped
        let v = conv1d(&ones, &density, 100, 0); // offsets -100.. all beyond 3
        assert_eq!(v, 0.0);
    }

    #[test]
    fn conv1d_matches_riemann_gaussian_convolution() {
        // Gaussian factor against Gaussian density approximates the
        // continuous convolution ∫ e^{-(x-y)²/σ²} e^{-y²} dy = √(πσ²/(1+σ²)) e^{-x²/(1+σ²)}
        let h = 0.02;
        let sigma2 = 0.5;
        let m_max = 600;
        let factor: Vec<f64> = (-(m_max as i64)..=m_max as i64)
            .map(|m| (-(m as f64 * h).powi(2) / sigma2).exp())
            .collect();
        let grid_half = 300i64;
        let density: Vec<f64> = (-grid_half..=grid_half)
            .map(|m| (-(m as f64 * h).powi(2)).exp())
            .collect();
        for &k in &[0i64, 25, 100] {
            let x = k as f64 * h;
            let discrete = h * conv1d(&factor, &density, -grid_half, k);
            let exact = (std::f64::consts::PI * sigma2 / (1.0 + sigma2)).sqrt()
                * (-x * x / (1.0 + sigma2)).exp();
            assert!(
                (discrete - exact).abs() < 1e-10 * exact,
                "k={k}: {discrete} vs {exact}"
            );
        }
    }

    #[test]
    fn build_kernel_m1_single_node_gaussian_table() {
        // Newton, M = 1, τ = 0, D = 1: F[m] = e^{-m²}
        let params = CubatureParams::new(3, 1.0, 1.0, 1).unwrap();
        let quad = single_node_set(0.0, 1.0);
        let kernel = build_kernel(PotentialKind::Newton, params, &quad, 1).unwrap();
        assert_eq!(kernel.nodes.len(), 1);
        let table = &kernel.nodes[0].tables[0];
        for (i, &f) in table.iter().enumerate() {
            let m = i as i64 - 1;
            let expect = (-(m * m) as f64).exp(); // (1+0)^{-1/2} = 1
            assert!((f - expect).abs() < 1e-15, "m={m}");
        }
    }

    #[test]
    fn build_kernel_table_length_matches_experiment_shape() {
        // h = 0.05 on [-6, 6] needs offsets up to 240: tables of length 481
        let params = CubatureParams::new(3, 0.05, 3.5, 4).unwrap();
        let rule = TrapezoidRule::new(0.02, -35, 80).unwrap();
        let quad = build_nodes(
            DoubleExpSubstitution::WaldvogelTriple { a: 2.0, b: 2.0 },
            rule,
            |_| 0.25,
        );
        let kernel = build_kernel(PotentialKind::Newton, params, &quad, 240).unwrap();
        assert_eq!(kernel.nodes[0].tables[0].len(), 481);
        // drift-free symmetry F[m] = F[-m]
        for node in &kernel.nodes {
            let t = &node.tables[0];
            for i in 0..t.len() / 2 {
                assert_eq!(t[i], t[t.len() - 1 - i]);
            }
        }
    }

    fn newton_kernel_and_density(
        n: usize,
        h: f64,
        d: f64,
        m: usize,
        spec: DensitySpec,
        layout: SlotLayout,
    ) -> (SeparatedKernel, SeparatedDensity) {
        let params = CubatureParams::new(n, h, d, m).unwrap();
        let grid = GridSpec::symmetric(h, 6.0).unwrap();
        let rule = TrapezoidRule::new(0.02, -135, 120).unwrap();
        let quad = build_nodes(
            DoubleExpSubstitution::WaldvogelTriple { a: 2.0, b: 2.0 },
            rule,
            |_| 0.25,
        );
        let m_max = 2 * grid.index_max as usize;
        let kernel = build_kernel(PotentialKind::Newton, params, &quad, m_max).unwrap();
        let density = sample_density(spec, grid, n, layout).unwrap();
        (kernel, density)
    }

    #[test]
    fn evaluate_reproduces_gaussian_potential_n3() {
        let (kernel, density) =
            newton_kernel_and_density(3, 0.05, 3.5, 4, DensitySpec::Gaussian, SlotLayout::AxisFirst);
        let points: Vec<Vec<i64>> = vec![vec![0, 0], vec![20, 0], vec![60, 0]];
        let vals = evaluate(&kernel, &density, &points).unwrap();
        for (p, v) in points.iter().zip(&vals) {
            let r = p[0] as f64 * 0.05;
            let exact = kernels::newton_gaussian_exact(3, r).unwrap();
            let rel = (v.value - exact).abs() / exact;
            assert!(rel < 2e-9, "x1={r}: rel={rel:.3e}");
        }
    }

    #[test]
    fn evaluate_laplacian_gaussian_high_dimension() {
        // n = 10^4, h = 0.025 reproduces -e^{-x1²} well below 1e-6 relative
        // with the widened-window rule (the h^{2M} term dominates otherwise).
        let (kernel, density) = newton_kernel_and_density(
            10_000,
            0.025,
            3.5,
            4,
            DensitySpec::LaplacianGaussian,
            SlotLayout::AxisFirst,
        );
        let vals = evaluate(&kernel, &density, &[vec![40, 0]]).unwrap();
        let exact = kernels::laplacian_gaussian_potential(1.0);
        let rel = (vals[0].value - exact).abs() / exact.abs();
        assert!(rel < 1e-6, "rel={rel:.3e} value={}", vals[0].value);
    }

    #[test]
    fn evaluate_linear_in_density_coefficients() {
        let (kernel, mut density) =
            newton_kernel_and_density(5, 0.1, 3.0, 2, DensitySpec::Gaussian, SlotLayout::AxisFirst);
        let points = vec![vec![3, 0]];
        let v1 = evaluate(&kernel, &density, &points).unwrap()[0].value;
        density.terms[0].coefficient = -2.5;
        let v2 = evaluate(&kernel, &density, &points).unwrap()[0].value;
        assert!((v2 + 2.5 * v1).abs() <= 1e-15 * v1.abs().max(1e-300));
    }

    #[test]
    fn evaluate_symmetric_in_sign_of_point() {
        // reflection reverses the conv summation order, so agreement is to
        // rounding, not bitwise
        let (kernel, density) =
            newton_kernel_and_density(4, 0.1, 3.0, 3, DensitySpec::Gaussian, SlotLayout::AxisFirst);
        let v = evaluate(&kernel, &density, &[vec![17, 0], vec![-17, 0]]).unwrap();
        assert!((v[0].value - v[1].value).abs() <= 1e-14 * v[0].value.abs());
    }

    #[test]
    fn evaluate_permutation_of_groups_bit_identical() {
        // permuting the dimension-group list leaves output bit-identical
        let (kernel, density) = newton_kernel_and_density(
            6,
            0.1,
            3.0,
            2,
            DensitySpec::LaplacianGaussian,
            SlotLayout::AxisFirst,
        );
        let mut permuted = density.clone();
        for term in &mut permuted.terms {
            term.groups.reverse();
        }
        let a = evaluate(&kernel, &density, &[vec![5, 0]]).unwrap();
        let b = evaluate(&kernel, &permuted, &[vec![5, 0]]).unwrap();
        assert_eq!(a[0].value.to_bits(), b[0].value.to_bits());
    }

    #[test]
    fn evaluate_deterministic_across_thread_counts() {
        let (kernel, density) = newton_kernel_and_density(
            100,
            0.1,
            3.0,
            4,
            DensitySpec::LaplacianGaussian,
            SlotLayout::AxisFirst,
        );
        let points: Vec<Vec<i64>> = (0..8).map(|i| vec![i * 7, 0]).collect();
        let pool1 = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let v1 = pool1.install(|| evaluate(&kernel, &density, &points).unwrap());
        let v4 = pool4.install(|| evaluate(&kernel, &density, &points).unwrap());
        for (a, b) in v1.iter().zip(&v4) {
            assert_eq!(a.value.to_bits(), b.value.to_bits());
        }
    }

    #[test]
    fn evaluate_rejects_mismatches() {
        let (kernel, density) =
            newton_kernel_and_density(3, 0.1, 3.0, 2, DensitySpec::Gaussian, SlotLayout::AxisFirst);
        // wrong slot count
        assert!(evaluate(&kernel, &density, &[vec![0]]).is_err());
        // out-of-grid point
        assert!(evaluate(&kernel, &density, &[vec![1000, 0]]).is_err());
        // density/kernel h mismatch
        let other_grid = GridSpec::symmetric(0.2, 6.0).unwrap();
        let other = sample_density(DensitySpec::Gaussian, other_grid, 3, SlotLayout::AxisFirst)
            .unwrap();
        assert!(evaluate(&kernel, &other, &[vec![0, 0]]).is_err());
        // n mismatch
        let other = sample_density(
            DensitySpec::Gaussian,
            GridSpec::symmetric(0.1, 6.0).unwrap(),
            4,
            SlotLayout::AxisFirst,
        )
        .unwrap();
        assert!(evaluate(&kernel, &other, &[vec![0, 0]]).is_err());
    }

    #[test]
    fn laplacian_gaussian_density_decomposition_is_exact() {
        // the separated terms reproduce (4|x|²-2n)e^{-|x|²} at grid points of
        // the axis form the slots encode: x = (x1, s, s, …, s)
        let n = 5;
        let grid = GridSpec::symmetric(0.1, 6.0).unwrap();
        let density =
            sample_density(DensitySpec::LaplacianGaussian, grid, n, SlotLayout::AxisFirst)
                .unwrap();
        for &(k1, k2) in &[(0i64, 0i64), (7, 0), (13, -5), (-60, 60)] {
            let mut total = 0.0;
            for term in &density.terms {
                let mut prod = term.coefficient * term.multiplier;
                for g in &term.groups {
                    let k = if g.slot == 0 { k1 } else { k2 };
                    let idx = (k - grid.index_min) as usize;
                    prod *= density.sample_pool[g.samples][idx].powi(g.multiplicity as i32);
                }
                total += prod;
            }
            let x1 = k1 as f64 * 0.1;
            let xt = k2 as f64 * 0.1;
            let r2 = x1 * x1 + (n - 1) as f64 * xt * xt;
            let expect = kernels::laplacian_gaussian_density(n, r2.sqrt());
            assert!(
                (total - expect).abs() < 1e-12 * expect.abs().max(1e-12),
                "k1={k1} k2={k2}: {total} vs {expect}"
            );
        }
    }

    #[test]
    fn density_multiplicities_sum_to_n() {
        for n in [1usize, 2, 3, 17, 1000] {
            let grid = GridSpec::symmetric(0.5, 3.0).unwrap();
            for spec in [DensitySpec::Gaussian, DensitySpec::LaplacianGaussian] {
                let d = sample_density(spec, grid, n, SlotLayout::AxisFirst).unwrap();
                for t in &d.terms {
                    let s: usize = t.groups.iter().map(|g| g.multiplicity).sum();
                    assert_eq!(s, n);
                }
            }
        }
    }

    #[test]
    fn export_import_roundtrip() {
        let (kernel, _) =
            newton_kernel_and_density(3, 0.1, 3.0, 2, DensitySpec::Gaussian, SlotLayout::AxisFirst);
        let mut buf = Vec::new();
        export_binary(&kernel, &mut buf).unwrap();
        let expect_len = 4 + 4 + 8 + 8 + 8 + 8 + 8
            + kernel.nodes.len() * 8 * (1 + 2 * kernel.m_max + 1);
        assert_eq!(buf.len(), expect_len);
        let imported = import_binary(&mut buf.as_slice()).unwrap();
        assert_eq!(imported.kind_code, 0);
        assert_eq!(imported.m, 2);
        assert_eq!(imported.n, 3);
        assert_eq!(imported.rank as usize, kernel.nodes.len());
        for (node, (w, table)) in kernel.nodes.iter().zip(&imported.nodes) {
            assert_eq!(node.weight.to_bits(), w.to_bits());
            for (a, b) in node.tables[0].iter().zip(table) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        let mut csv = Vec::new();
        export_csv(&kernel, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("node,t,weight,offset,factor"));
        assert_eq!(
            text.lines().count(),
            1 + kernel.nodes.len() * (2 * kernel.m_max + 1)
        );
    }
}
