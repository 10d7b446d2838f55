//! Space-time cubature for the non-homogeneous heat equation
//! f_t - ν Δf = u, f(·, 0) = 0: second order in time (S = 1), order 2M in
//! space. The time integral K₂ is mapped to the real line by the sigmoid
//! substitution λ = t/(1+e^{-ξ}) and evaluated with the trapezoidal rule;
//! spatial factors reuse the separated-kernel machinery with log-space
//! products, so the assembly stays finite for large n.

use rayon::prelude::*;

use crate::kernels::CubatureParams;
use crate::quadrature::{
    self, DoubleExpSubstitution, IntegrandFamily, TrapezoidRule, TuneOptions,
};
use crate::separated::{
    build_kernel, conv1d, signed_log_sum, GridSpec, PotentialKind, SeparatedDensity,
    SeparatedKernel, SignedLogValue,
};
use crate::{Error, Result};

/// Parameters of the space-time cubature. The time half-order S is fixed at
/// 1 (second order in time).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatParams {
    /// Diffusivity ν > 0.
    pub nu: f64,
    /// Time scaling parameter.
    pub d0: f64,
    /// Time step τ.
    pub tau: f64,
    /// Final time T.
    pub t_final: f64,
    /// Spatial half-order M.
    pub m: usize,
    /// Spatial scaling parameter.
    pub d: f64,
    /// Spatial grid step.
    pub h: f64,
    /// Space dimension.
    pub n: usize,
}

impl HeatParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        nu: f64,
        d0: f64,
        tau: f64,
        t_final: f64,
        m: usize,
        d: f64,
        h: f64,
        n: usize,
    ) -> Result<Self> {
        if !(nu > 0.0) || !(d0 > 0.0) || !(tau > 0.0) || !(t_final > 0.0) {
            return Err(Error::InvalidParams(format!(
                "heat parameters must be positive: nu={nu}, d0={d0}, tau={tau}, T={t_final}"
            )));
        }
        // reuse the spatial validation
        CubatureParams::new(n, h, d, m)?;
        Ok(Self {
            nu,
            d0,
            tau,
            t_final,
            m,
            d,
            h,
            n,
        })
    }

    fn spatial(&self) -> CubatureParams {
        CubatureParams {
            n: self.n,
            h: self.h,
            d: self.d,
            m: self.m,
        }
    }
}

/// K₂(x, t, τi) = ∫₀ᵗ e^{-(t-λ-τi)²/(D₀τ²)} e^{-|x|²/(Dh²+4νλ)}
/// (Dh²+4νλ)^{-n/2} dλ, with x given as compressed per-group offsets
/// (offset value, multiplicity), Σ multiplicities = n.
///
/// Evaluated through the sigmoid substitution with the given trapezoid rule;
/// the n-fold spatial factor is assembled in log space.
pub fn k2(x_offsets: &[(f64, usize)], t: f64, i: i64, p: &HeatParams, rule: &TrapezoidRule) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let n: usize = x_offsets.iter().map(|&(_, m)| m).sum();
    debug_assert_eq!(n, p.n);
    let dh2 = p.d * p.h * p.h;
    let d0t2 = p.d0 * p.tau * p.tau;
    let center = p.tau * i as f64;
    let sub = DoubleExpSubstitution::HeatSigmoid { t };
    let mut max_log = f64::NEG_INFINITY;
    let mut logs = Vec::with_capacity(rule.node_count());
    for k in rule.n0..=rule.n1 {
        let pt = sub.substitute(k as f64 * rule.step);
        if pt.saturated || pt.jacobian == 0.0 {
            continue;
        }
        let lam = pt.t;
        let sigma2 = dh2 + 4.0 * p.nu * lam;
        let time_arg = t - lam - center;
        let mut lg = rule.step.ln() + pt.jacobian.ln() - time_arg * time_arg / d0t2
            - (n as f64) / 2.0 * sigma2.ln();
        for &(x, mult) in x_offsets {
            lg -= mult as f64 * x * x / sigma2;
        }
        if lg > max_log {
            max_log = lg;
        }
        logs.push(lg);
    }
    if max_log == f64::NEG_INFINITY {
        return 0.0;
    }
    let sum: f64 = logs.iter().map(|lg| (lg - max_log).exp()).sum();
    (max_log + sum.ln()).exp()
}

/// One space-time potential value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatValue {
    pub value: f64,
    /// The time-index sum was clipped by the end of the density's time
    /// profile while the time Gaussian still carried weight.
    pub time_truncated: bool,
}

/// Evaluate f_{h,τ}(hk, τℓ) at the given (spatial slots, time index) points.
///
/// The density must carry a time profile on every term (samples at τi,
/// i = 0 … i_max). `rule` is the ξ-quadrature; when absent a rule is tuned
/// per distinct evaluation time with target 1e-10.
pub fn solve(
    density: &SeparatedDensity,
    p: &HeatParams,
    points: &[(Vec<i64>, i64)],
    rule: Option<&TrapezoidRule>,
) -> Result<Vec<HeatValue>> {
    let i_max = match density
        .terms
        .iter()
        .map(|t| t.time_profile.as_ref().map(|v| v.len()))
        .collect::<Option<Vec<_>>>()
    {
        Some(lens) if !lens.is_empty() => {
            let l0 = lens[0];
            if lens.iter().any(|&l| l != l0) || l0 == 0 {
                return Err(Error::InvalidParams(
                    "all density terms need time profiles of one common nonzero length".into(),
                ));
            }
            l0 as i64 - 1
        }
        _ => {
            return Err(Error::InvalidParams(
                "heat solve needs a space-time density (time_profile on every term)".into(),
            ))
        }
    };
    if density.n != p.n || (density.grid.h - p.h).abs() > 1e-15 * p.h {
        return Err(Error::GridMismatch(
            "density grid incompatible with heat parameters".into(),
        ));
    }
    for (k, ell) in points {
        if *ell < 0 || p.tau * *ell as f64 > p.t_final * (1.0 + 1e-12) {
            return Err(Error::InvalidParams(format!(
                "time index {ell} outside [0, T/tau]"
            )));
        }
        if k.len() != density.slot_count() {
            return Err(Error::InvalidParams(format!(
                "point has {} slots, density expects {}",
                k.len(),
                density.slot_count()
            )));
        }
    }

    let grid_extent = (density.grid.index_max - density.grid.index_min) as usize;
    let m_max = grid_extent;
    let cutoff = 8.0 * p.d0.sqrt();
    let per_dim_log = p.h.ln() - 0.5 * std::f64::consts::PI.ln();
    let global = 1.0 / (std::f64::consts::PI * p.d0).sqrt();

    // distinct evaluation times
    let mut ells: Vec<i64> = points.iter().map(|(_, l)| *l).collect();
    ells.sort_unstable();
    ells.dedup();

    let mut results = vec![
        HeatValue {
            value: 0.0,
            time_truncated: false
        };
        points.len()
    ];
    for &ell in &ells {
        let t = p.tau * ell as f64;
        if t <= 0.0 {
            continue; // value 0 at t = 0
        }
        let tuned;
        let xi_rule = match rule {
            Some(r) => *r,
            None => {
                let k_bound = (grid_extent as f64) * p.h;
                tuned = quadrature::tune(
                    IntegrandFamily::HeatTime {
                        n: p.n,
                        nu: p.nu,
                        d: p.d,
                        h: p.h,
                        d0_tau2: p.d0 * p.tau * p.tau,
                        t,
                        center_max: p.tau * i_max as f64,
                    },
                    DoubleExpSubstitution::HeatSigmoid { t },
                    1e-10,
                    k_bound,
                    TuneOptions::default(),
                )?;
                tuned.rule
            }
        };
        // spatial factor tables at the λ nodes; weights carry step·dλ/dξ
        let quad = quadrature::build_nodes(
            DoubleExpSubstitution::HeatSigmoid { t },
            xi_rule,
            |_| 1.0,
        );
        let kernel: SeparatedKernel =
            build_kernel(PotentialKind::Heat { nu: p.nu }, p.spatial(), &quad, m_max)?;

        // each node needs its sigmoid center ℓ/(1+e^{ξ}) for the time sum
        let centers: Vec<f64> = {
            let mut cs = Vec::with_capacity(kernel.nodes.len());
            let mut idx = 0usize;
            for k in xi_rule.n0..=xi_rule.n1 {
                let pt = DoubleExpSubstitution::HeatSigmoid { t }.substitute(k as f64 * xi_rule.step);
                if pt.saturated {
                    continue;
                }
                // node order in `quad` matches this scan
                cs.push(ell as f64 / (1.0 + (k as f64 * xi_rule.step).exp()));
                idx += 1;
            }
            debug_assert_eq!(idx, kernel.nodes.len());
            cs
        };

        let point_results: Vec<(usize, HeatValue)> = points
            .par_iter()
            .enumerate()
            .filter(|(_, (_, l))| *l == ell)
            .map(|(pi, (kslots, _))| {
                let mut terms: Vec<SignedLogValue> = Vec::new();
                let mut truncated = false;
                let mut conv_cache: Vec<((usize, usize), f64)> = Vec::new();
                for (node, &center) in kernel.nodes.iter().zip(&centers) {
                    conv_cache.clear();
                    let w = SignedLogValue::from_f64(node.weight);
                    if w.is_zero() {
                        continue;
                    }
                    let i_lo = ((center - cutoff).ceil() as i64).max(0);
                    let i_hi_wanted = (center + cutoff).floor() as i64;
                    let i_hi = i_hi_wanted.min(i_max);
                    if i_hi_wanted > i_max {
                        truncated = true;
                    }
                    for term in &density.terms {
                        // product over groups in canonical order
                        let mut fs: Vec<((usize, usize, usize), SignedLogValue)> = Vec::new();
                        for g in &term.groups {
                            let key = (g.samples, g.slot);
                            let conv = match conv_cache.iter().find(|(k, _)| *k == key) {
                                Some(&(_, v)) => v,
                                None => {
                                    let v = conv1d(
                                        &node.tables[0],
                                        &density.sample_pool[g.samples],
                                        density.grid.index_min,
                                        kslots[g.slot],
                                    );
                                    conv_cache.push((key, v));
                                    v
                                }
                            };
                            let f = if conv == 0.0 {
                                SignedLogValue::zero()
                            } else {
                                SignedLogValue {
                                    sign: if conv > 0.0 { 1 } else { -1 },
                                    log_mag: conv.abs().ln() + per_dim_log,
                                }
                            };
                            fs.push(((g.samples, g.slot, g.multiplicity), f.powi(g.multiplicity)));
                        }
                        fs.sort_by_key(|(k, _)| *k);
                        let mut space = SignedLogValue {
                            sign: 1,
                            log_mag: 0.0,
                        };
                        for (_, f) in &fs {
                            space = space * *f;
                        }
                        let base =
                            w * SignedLogValue::from_f64(term.coefficient * term.multiplier) * space;
                        if base.is_zero() {
                            continue;
                        }
                        let profile = term.time_profile.as_ref().unwrap();
                        for i in i_lo..=i_hi {
                            let u_t = profile[i as usize];
                            if u_t == 0.0 {
                                continue;
                            }
                            let darg = center - i as f64;
                            let time_log = -darg * darg / p.d0;
                            let term_log = base
                                * SignedLogValue::from_f64(u_t)
                                * SignedLogValue {
                                    sign: 1,
                                    log_mag: time_log,
                                };
                            terms.push(term_log);
                        }
                    }
                }
                let total = signed_log_sum(&terms);
                (
                    pi,
                    HeatValue {
                        value: global * total.to_f64(),
                        time_truncated: truncated,
                    },
                )
            })
            .collect();
        for (pi, v) in point_results {
            results[pi] = v;
        }
    }
    Ok(results)
}

/// Separated space-time density for the manufactured problem
/// f(x, t) = t² e^{-|x|²}:  u = f_t - νΔf = e^{-|x|²}(2t - νt²(4|x|²-2n)).
/// Time profiles are sampled at τi, i = 0 … i_max.
///
/// Evaluating at the horizon t = T needs samples past T (the time
/// quasi-interpolant reads u within ~8√D₀ steps of every emission time), so
/// pass i_max ≈ T/τ + ceil(8√D₀) + 1; u's closed form extends analytically.
pub fn manufactured_density(
    grid: GridSpec,
    n: usize,
    i_max: usize,
    tau: f64,
    nu: f64,
) -> Result<SeparatedDensity> {
    use crate::separated::{DensityTerm, DimensionGroup};
    let sample = |f: &dyn Fn(f64) -> f64| -> Vec<f64> {
        (grid.index_min..=grid.index_max)
            .map(|m| f(m as f64 * grid.h))
            .collect()
    };
    let gauss = sample(&crate::kernels::gaussian_density);
    let special = sample(&|x| crate::kernels::laplacian_gaussian_density(1, x));
    let times_linear: Vec<f64> = (0..=i_max).map(|i| 2.0 * tau * i as f64).collect();
    let times_quadratic: Vec<f64> = (0..=i_max).map(|i| (tau * i as f64).powi(2)).collect();

    let gauss_tail = |mult: usize, slot: usize| DimensionGroup {
        samples: 0,
        multiplicity: mult,
        slot,
        drift: 0.0,
    };
    let mut terms = vec![DensityTerm {
        coefficient: 1.0,
        multiplier: 1.0,
        groups: if n == 1 {
            vec![gauss_tail(1, 0)]
        } else {
            vec![gauss_tail(1, 0), gauss_tail(n - 1, 1)]
        },
        time_profile: Some(times_linear),
    }];
    // -ν t² (4x_1²-2)·gauss-rest
    let mut groups_b = vec![DimensionGroup {
        samples: 1,
        multiplicity: 1,
        slot: 0,
        drift: 0.0,
    }];
    if n > 1 {
        groups_b.push(gauss_tail(n - 1, 1));
    }
    terms.push(DensityTerm {
        coefficient: -nu,
        multiplier: 1.0,
        groups: groups_b,
        time_profile: Some(times_quadratic.clone()),
    });
    if n >= 2 {
        let mut groups_c = vec![
            gauss_tail(1, 0),
            DimensionGroup {
                samples: 1,
                multiplicity: 1,
                slot: 1,
                drift: 0.0,
            },
        ];
        if n > 2 {
            groups_c.push(gauss_tail(n - 2, 1));
        }
        terms.push(DensityTerm {
            coefficient: -nu,
            multiplier: (n - 1) as f64,
            groups: groups_c,
            time_profile: Some(times_quadratic),
        });
    }
    Ok(SeparatedDensity {
        grid,
        n,
        sample_pool: vec![gauss, special],
        terms,
    })
}

/// Exact solution of the manufactured problem, t² e^{-r²}.
pub fn manufactured_solution(r2: f64, t: f64) -> f64 {
    t * t * (-r2).exp()
}
