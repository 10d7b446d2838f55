//! The experiment runners behind each subcommand. Each returns a [`Report`];
//! wall-clock timings are printed to stderr so reports stay byte-identical
//! across reruns.

use std::time::Instant;

use volpot::kernels::{self, AdvectionDiffusionParams, CubatureParams};
use volpot::quadrature::{
    build_nodes, integrate, tune, DoubleExpSubstitution, IntegrandFamily, TrapezoidRule,
    TuneOptions,
};
use volpot::separated::{
    self, build_kernel, export_binary, export_csv, sample_density, DensitySpec, GridSpec,
    PotentialKind, SeparatedKernel, SlotLayout,
};
use volpot::{heat, Error as VpError};

use crate::config::{Config, ConfigError};
use crate::report::{fmt_float, Report};

pub enum CliError {
    Config(String),
    TunerBudget(String),
    Other(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

impl From<VpError> for CliError {
    fn from(e: VpError) -> Self {
        match e {
            VpError::TunerBudget { .. } => CliError::TunerBudget(e.to_string()),
            VpError::InvalidParams(_) | VpError::Domain(_) | VpError::GridMismatch(_) => {
                CliError::Config(e.to_string())
            }
            other => CliError::Other(other.to_string()),
        }
    }
}

type CmdResult = Result<Report, CliError>;

/// Substitution from the `sub` key: two comma values -> the triple-composed
/// map with (a, b); one value -> the single-exponential map.
fn parse_sub(cfg: &Config, default: &str) -> Result<DoubleExpSubstitution, CliError> {
    let raw = cfg.get("sub").unwrap_or(default);
    let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
    let parse = |s: &str| -> Result<f64, CliError> {
        s.parse()
            .map_err(|_| CliError::Config(format!("sub: cannot parse `{s}`")))
    };
    match parts.as_slice() {
        [a, b] => Ok(DoubleExpSubstitution::WaldvogelTriple {
            a: parse(a)?,
            b: parse(b)?,
        }),
        [b] => Ok(DoubleExpSubstitution::SingleExp { b: parse(b)? }),
        _ => Err(CliError::Config(format!(
            "sub: expected `a,b` or `b`, got `{raw}`"
        ))),
    }
}

fn parse_rule(cfg: &Config, default: &str) -> Result<TrapezoidRule, CliError> {
    let raw = cfg.get("rule").unwrap_or(default);
    let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(CliError::Config(format!(
            "rule: expected `step,n0,n1`, got `{raw}`"
        )));
    }
    let step: f64 = parts[0]
        .parse()
        .map_err(|_| CliError::Config(format!("rule step: `{}`", parts[0])))?;
    let n0: i64 = parts[1]
        .parse()
        .map_err(|_| CliError::Config(format!("rule n0: `{}`", parts[1])))?;
    let n1: i64 = parts[2]
        .parse()
        .map_err(|_| CliError::Config(format!("rule n1: `{}`", parts[2])))?;
    TrapezoidRule::new(step, n0, n1).map_err(CliError::from)
}

fn parse_density(cfg: &Config) -> Result<DensitySpec, CliError> {
    match cfg.get("density").unwrap_or("u1") {
        "u1" | "gaussian" => Ok(DensitySpec::Gaussian),
        "u2" | "laplacian-gaussian" => Ok(DensitySpec::LaplacianGaussian),
        other => Err(CliError::Config(format!(
            "density: expected u1|u2, got `{other}`"
        ))),
    }
}

fn exact_potential(spec: DensitySpec, n: usize, r: f64) -> Result<f64, CliError> {
    Ok(match spec {
        DensitySpec::Gaussian => kernels::newton_gaussian_exact(n, r).map_err(CliError::from)?,
        DensitySpec::LaplacianGaussian => kernels::laplacian_gaussian_potential(r),
        DensitySpec::GaussianPower { .. } => {
            return Err(CliError::Config(
                "no closed-form reference for the custom density".into(),
            ))
        }
    })
}

fn newton_kernel_for(
    cfg: &Config,
    n: usize,
    h: f64,
    d: f64,
    m: usize,
    half_width: f64,
) -> Result<(SeparatedKernel, std::time::Duration), CliError> {
    let sub = parse_sub(cfg, "2,2")?;
    let rule = parse_rule(cfg, "0.02,-135,120")?;
    let params = CubatureParams::new(n, h, d, m).map_err(CliError::from)?;
    let quad = build_nodes(sub, rule, |_| 0.25);
    let m_max = 2 * (half_width / h).round() as usize;
    let t0 = Instant::now();
    let kernel = build_kernel(PotentialKind::Newton, params, &quad, m_max).map_err(CliError::from)?;
    Ok((kernel, t0.elapsed()))
}

/// `newton-table`: exact vs separated-cubature values of the Newton
/// potential at axis points, one row per (n, x1).
pub fn newton_table(cfg: &Config) -> CmdResult {
    let ns: Vec<usize> = cfg.parse_list_or("n", &[3usize, 10])?;
    let h: f64 = cfg.parse_or("h", 0.05)?;
    let m: usize = cfg.parse_or("M", 4)?;
    let d: f64 = cfg.parse_or("D", 3.5)?;
    let a: f64 = cfg.parse_or("A", 6.0)?;
    let spec = parse_density(cfg)?;
    let points: Vec<f64> = cfg.parse_list_or("points", &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0])?;
    let grid = GridSpec::symmetric(h, a).map_err(CliError::from)?;

    let mut report = Report::new(
        cfg.echo(),
        vec![
            "density", "n", "x1", "exact", "approx", "abs_err", "rel_err",
        ],
    );
    for &n in &ns {
        let (kernel, build_time) = newton_kernel_for(cfg, n, h, d, m, a)?;
        let density = sample_density(spec, grid, n, SlotLayout::AxisFirst)
            .map_err(CliError::from)?;
        let pts: Vec<Vec<i64>> = points
            .iter()
            .map(|&x| {
                let k = (x / h).round() as i64;
                if n == 1 {
                    vec![k]
                } else {
                    vec![k, 0]
                }
            })
            .collect();
        let t0 = Instant::now();
        let vals = separated::evaluate(&kernel, &density, &pts).map_err(CliError::from)?;
        let eval_time = t0.elapsed();
        eprintln!(
            "newton-table n={n}: kernel build {:.3}s, {} point evals {:.3}s",
            build_time.as_secs_f64(),
            pts.len(),
            eval_time.as_secs_f64()
        );
        for (&x1, v) in points.iter().zip(&vals) {
            let exact = exact_potential(spec, n, x1)?;
            let abs = (v.value - exact).abs();
            report.push(vec![
                match spec {
                    DensitySpec::Gaussian => "u1".into(),
                    _ => "u2".into(),
                },
                n.to_string(),
                fmt_float(x1),
                fmt_float(exact),
                fmt_float(v.value),
                fmt_float(abs),
                fmt_float(abs / exact.abs()),
            ]);
        }
    }
    Ok(report)
}

/// `convergence`: error ladder over h = h0·2^{-k} with observed rates;
/// plateau rows are flagged, not suppressed.
pub fn convergence(cfg: &Config) -> CmdResult {
    let n: usize = cfg.parse_or("n", 3)?;
    let m: usize = cfg.parse_or("M", 4)?;
    let d: f64 = cfg.parse_or("D", 5.0)?;
    let a: f64 = cfg.parse_or("A", 6.0)?;
    let h0: f64 = cfg.parse_or("h0", 0.2)?;
    let levels: usize = cfg.parse_or("levels", 4)?;
    let points: Vec<f64> = cfg.parse_list_or("points", &[1.0])?;
    let spec = match cfg.get("density").unwrap_or("u2") {
        "u1" => DensitySpec::Gaussian,
        "u2" => DensitySpec::LaplacianGaussian,
        other => {
            return Err(CliError::Config(format!(
                "density: expected u1|u2, got `{other}`"
            )))
        }
    };
    if levels < 2 {
        return Err(CliError::Config("levels must be >= 2".into()));
    }
    // table-convergence default rule: the a=6, b=5 fine preset
    let sub = parse_sub(cfg, "6,5")?;
    let rule = parse_rule(cfg, "0.003,39,250")?;

    let mut report = Report::new(
        cfg.echo(),
        vec![
            "n", "M", "h", "x1", "exact", "approx", "abs_err", "rel_err", "rate", "note",
        ],
    );
    let mut prev_err: Vec<Option<f64>> = vec![None; points.len()];
    for k in 0..levels {
        let h = h0 / (1 << k) as f64;
        let params = CubatureParams::new(n, h, d, m).map_err(CliError::from)?;
        let quad = build_nodes(sub, rule, |_| 0.25);
        let grid = GridSpec::symmetric(h, a).map_err(CliError::from)?;
        let m_max = 2 * grid.index_max as usize;
        let t0 = Instant::now();
        let kernel =
            build_kernel(PotentialKind::Newton, params, &quad, m_max).map_err(CliError::from)?;
        let density =
            sample_density(spec, grid, n, SlotLayout::AxisFirst).map_err(CliError::from)?;
        let pts: Vec<Vec<i64>> = points
            .iter()
            .map(|&x1| {
                let point = (x1 / h).round() as i64;
                if n == 1 {
                    vec![point]
                } else {
                    vec![point, 0]
                }
            })
            .collect();
        let vals = separated::evaluate(&kernel, &density, &pts).map_err(CliError::from)?;
        eprintln!(
            "convergence level {k} (h = {h}): {:.3}s",
            t0.elapsed().as_secs_f64()
        );
        for (i, (&x1, v)) in points.iter().zip(&vals).enumerate() {
            let exact = exact_potential(spec, n, x1)?;
            let abs = (v.value - exact).abs();
            let rate = prev_err[i].map(|p| (p / abs).log2());
            let note = match rate {
                Some(r) if r < 1.0 => "plateau",
                _ => "",
            };
            report.push(vec![
                n.to_string(),
                m.to_string(),
                fmt_float(h),
                fmt_float(x1),
                fmt_float(exact),
                fmt_float(v.value),
                fmt_float(abs),
                fmt_float(abs / exact.abs()),
                rate.map(fmt_float).unwrap_or_default(),
                note.into(),
            ]);
            prev_err[i] = Some(abs);
        }
    }
    Ok(report)
}

/// `tune-quad`: minimal-node trapezoid rules for the separable integrand
/// families, one row per requested target.
pub fn tune_quad(cfg: &Config) -> CmdResult {
    let m: usize = cfg.parse_or("M", 1)?;
    let n: usize = cfg.parse_or("n", 3)?;
    let k_bound: f64 = cfg.parse_or("K", 1e3)?;
    let budget: usize = cfg.parse_or("budget", 10_000)?;
    let seed: u64 = cfg.parse_or("seed", 0)?;
    let targets: Vec<f64> = cfg.parse_list_or("target", &[1e-5, 1e-7, 1e-9, 1e-11])?;
    let family_name = cfg.get("family").unwrap_or("newton");
    let (family, default_sub) = match family_name {
        "newton" | "i" => (IntegrandFamily::Newton { m, n }, "1,1"),
        "screened" | "k" => {
            let a2: f64 = cfg.parse_or("a2", 1.0)?;
            (
                IntegrandFamily::ModifiedHelmholtz {
                    m,
                    n,
                    a_squared: a2,
                },
                "1",
            )
        }
        other => {
            return Err(CliError::Config(format!(
                "family: expected newton|screened, got `{other}`"
            )))
        }
    };
    let sub = parse_sub(cfg, default_sub)?;

    // optional raw-integrand dump for external plotting: u, t(u), and the
    // transformed integrand at radii {0, K/100, K}
    if let Some(path) = cfg.get("dump-integrand") {
        let radii = [0.0, k_bound / 100.0, k_bound];
        let mut f = std::fs::File::create(path)
            .map_err(|e| CliError::Other(format!("cannot create {path}: {e}")))?;
        use std::io::Write as _;
        writeln!(f, "u,t,f_r0,f_r1,f_r2").map_err(|e| CliError::Other(e.to_string()))?;
        for k in -800..=800 {
            let u = k as f64 * 0.01;
            let pt = sub.substitute(u);
            if pt.saturated {
                continue;
            }
            let vals: Vec<String> = radii
                .iter()
                .map(|&r| {
                    let shared = match family {
                        IntegrandFamily::ModifiedHelmholtz { a_squared, .. } => {
                            (-a_squared * pt.t / 4.0).exp()
                        }
                        _ => 1.0,
                    } * (1.0 + pt.t).powf(-(n as f64) / 2.0);
                    let g0 = kernels::g_newton(m, 0.0, pt.t);
                    let v = pt.jacobian
                        * shared
                        * kernels::g_newton(m, r, pt.t)
                        * g0.powi(n as i32 - 1);
                    fmt_float(v)
                })
                .collect();
            writeln!(f, "{},{},{}", fmt_float(u), fmt_float(pt.t), vals.join(","))
                .map_err(|e| CliError::Other(e.to_string()))?;
        }
    }

    let mut report = Report::new(
        cfg.echo(),
        vec![
            "family", "M", "n", "target", "step", "n0", "n1", "nodes", "achieved",
        ],
    );
    for &target in &targets {
        let t0 = Instant::now();
        let result = tune(
            family,
            sub,
            target,
            k_bound,
            TuneOptions {
                node_budget: budget,
                seed,
            },
        )
        .map_err(CliError::from)?;
        eprintln!(
            "tune {family_name} target {target:.0e}: {:.3}s",
            t0.elapsed().as_secs_f64()
        );
        report.push(vec![
            family_name.to_string(),
            m.to_string(),
            n.to_string(),
            fmt_float(target),
            fmt_float(result.rule.step),
            result.rule.n0.to_string(),
            result.rule.n1.to_string(),
            result.node_count.to_string(),
            fmt_float(result.achieved),
        ]);
    }
    Ok(report)
}

/// `advdiff`: separated quadrature of the screened-operator kernel applied
/// to the Gaussian vs the closed form, at n = 3 and zero drift.
pub fn advdiff(cfg: &Config) -> CmdResult {
    let cs: Vec<f64> = cfg.parse_list_or("c", &[0.01, 1.0, 4.0])?;
    let points: Vec<f64> = cfg.parse_list_or("points", &[0.0, 0.5, 1.0, 2.0, 5.0])?;
    let target: f64 = cfg.parse_or("target", 1e-9)?;
    let k_bound: f64 = cfg.parse_or("K", 10.0)?;
    let m: usize = cfg.parse_or("M", 1)?;
    let sub = parse_sub(cfg, "1")?;

    let mut report = Report::new(
        cfg.echo(),
        vec!["c", "nodes", "x1", "exact", "approx", "abs_err", "rel_err"],
    );
    for &c in &cs {
        let tuned = tune(
            IntegrandFamily::ModifiedHelmholtz {
                m,
                n: 3,
                a_squared: c,
            },
            sub,
            target,
            k_bound,
            TuneOptions::default(),
        )
        .map_err(CliError::from)?;
        let nodes = build_nodes(sub, tuned.rule, |t| 0.25 * (-c * t / 4.0).exp());
        for &r in &points {
            let approx = integrate(&nodes, |t| {
                let share = (1.0 + t).powf(-0.5);
                let f1 = kernels::g_newton(m, r, t) * share;
                let f0 = kernels::g_newton(m, 0.0, t) * share;
                f1 * f0 * f0
            });
            let exact =
                kernels::advdiff_exact_n3(&[0.0; 3], c, &[r, 0.0, 0.0]).map_err(CliError::from)?;
            let abs = (approx - exact).abs();
            report.push(vec![
                fmt_float(c),
                tuned.node_count.to_string(),
                fmt_float(r),
                fmt_float(exact),
                fmt_float(approx),
                fmt_float(abs),
                fmt_float(abs / exact.abs()),
            ]);
        }
    }
    Ok(report)
}

/// `heat`: manufactured-solution table with space-time convergence rates,
/// halving (h, τ) jointly per level.
pub fn heat_cmd(cfg: &Config) -> CmdResult {
    let n: usize = cfg.parse_or("n", 1)?;
    let m: usize = cfg.parse_or("M", 1)?;
    let nu: f64 = cfg.parse_or("nu", 0.25)?;
    let d: f64 = cfg.parse_or("D", 2.0)?;
    let d0: f64 = cfg.parse_or("D0", 2.0)?;
    let t_final: f64 = cfg.parse_or("T", 1.0)?;
    let h0: f64 = cfg.parse_or("h0", 0.25)?;
    let levels: usize = cfg.parse_or("levels", 3)?;
    let a: f64 = cfg.parse_or("A", 5.0)?;
    let points: Vec<f64> = cfg.parse_list_or("points", &[0.0, 0.5])?;

    let mut report = Report::new(
        cfg.echo(),
        vec![
            "n", "M", "h", "tau", "x1", "exact", "approx", "abs_err", "rel_err", "rate",
        ],
    );
    let mut prev: Vec<Option<f64>> = vec![None; points.len()];
    for k in 0..levels {
        let h = h0 / (1 << k) as f64;
        let tau = h;
        let p =
            heat::HeatParams::new(nu, d0, tau, t_final, m, d, h, n).map_err(CliError::from)?;
        let grid = GridSpec::symmetric(h, a).map_err(CliError::from)?;
        let ell = (t_final / tau).round() as i64;
        let pad = (8.0 * d0.sqrt()).ceil() as usize + 1;
        let density = heat::manufactured_density(grid, n, ell as usize + pad, tau, nu)
            .map_err(CliError::from)?;
        let slots = density.slot_count();
        let pts: Vec<(Vec<i64>, i64)> = points
            .iter()
            .map(|&x| {
                let mut v = vec![0i64; slots];
                v[0] = (x / h).round() as i64;
                (v, ell)
            })
            .collect();
        let t0 = Instant::now();
        let vals = heat::solve(&density, &p, &pts, None).map_err(CliError::from)?;
        eprintln!(
            "heat level {k} (h = tau = {h}): {:.3}s",
            t0.elapsed().as_secs_f64()
        );
        for (i, (&x1, v)) in points.iter().zip(&vals).enumerate() {
            let exact = heat::manufactured_solution(x1 * x1, t_final);
            let abs = (v.value - exact).abs();
            let rate = prev[i].map(|p| (p / abs).log2());
            report.push(vec![
                n.to_string(),
                m.to_string(),
                fmt_float(h),
                fmt_float(tau),
                fmt_float(x1),
                fmt_float(exact),
                fmt_float(v.value),
                fmt_float(abs),
                fmt_float(abs / exact.abs().max(f64::MIN_POSITIVE)),
                rate.map(fmt_float).unwrap_or_default(),
            ]);
            prev[i] = Some(abs);
        }
    }
    Ok(report)
}

/// `export-kernel`: build a separated kernel table and write it to `out` —
/// flat binary, or the long inspection CSV when the path ends in `.csv`.
pub fn export_kernel(cfg: &Config, out: &std::path::Path) -> Result<(), CliError> {
    let csv = out.extension().is_some_and(|e| e == "csv");
    let n: usize = cfg.parse_or("n", 3)?;
    let h: f64 = cfg.parse_or("h", 0.05)?;
    let m: usize = cfg.parse_or("M", 4)?;
    let d: f64 = cfg.parse_or("D", 3.5)?;
    let a: f64 = cfg.parse_or("A", 6.0)?;
    let kind_name = cfg.get("kind").unwrap_or("newton");
    let params = CubatureParams::new(n, h, d, m).map_err(CliError::from)?;
    let m_max = 2 * (a / h).round() as usize;
    let (kind, quad) = match kind_name {
        "newton" => {
            let sub = parse_sub(cfg, "2,2")?;
            let rule = parse_rule(cfg, "0.02,-135,120")?;
            (PotentialKind::Newton, build_nodes(sub, rule, |_| 0.25))
        }
        "advdiff" => {
            let c: f64 = cfg.parse_or("c", 1.0)?;
            let b: Vec<f64> = cfg.parse_list_or("b", &vec![0.0; n])?;
            let ad = AdvectionDiffusionParams::new(b, c, n).map_err(CliError::from)?;
            let sub = parse_sub(cfg, "1")?;
            let rule = parse_rule(cfg, "0.1,-60,120")?;
            let dh2c = d * h * h * ad.c;
            (
                PotentialKind::AdvectionDiffusion(ad),
                build_nodes(sub, rule, move |t| 0.5 * (-dh2c * t / 2.0).exp()),
            )
        }
        other => {
            return Err(CliError::Config(format!(
                "kind: expected newton|advdiff, got `{other}`"
            )))
        }
    };
    let kernel = build_kernel(kind, params, &quad, m_max).map_err(CliError::from)?;
    let mut file = std::fs::File::create(out)
        .map_err(|e| CliError::Other(format!("cannot create {}: {e}", out.display())))?;
    if csv {
        export_csv(&kernel, &mut file).map_err(CliError::from)?;
    } else {
        export_binary(&kernel, &mut file).map_err(CliError::from)?;
    }
    eprintln!(
        "export-kernel: rank {} tables of length {} written to {}",
        kernel.rank(),
        2 * kernel.m_max + 1,
        out.display()
    );
    Ok(())
}
