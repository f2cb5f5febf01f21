//! Deterministic verification of the diffusion scaling limits, plus
//! statistical stationarity testing of simulated trajectories.
//!
//! The chain's one-step conditional moments have exact closed forms in the
//! sampling probabilities: with `mu = N (p_k(j) - x_k)`,
//!
//! ```text
//! d_kl = -p_k p_l + mu_k mu_l / N          (same locus, k != l)
//! d_kk = p_k (1 - p_k) + mu_k^2 / N
//! cross-locus d = mu_{i,k} mu_{j,l} / N    (conditional independence)
//! e4   = (m4 + 4 b m3 + 6 b^2 m2 + b^4) / N^3,  b = mu,
//! ```
//!
//! where `m2..m4` are central moments of `Binomial(N, p_k)`. Each quantity
//! converges to its diffusion coefficient at rate `1/N`, so the error decay
//! across an `N` grid has log-log slope -1; no sampling is involved, which
//! turns the scaling-limit statements into machine-checkable decay rates.
//!
//! Frequencies are snapped to the nearest lattice point `j/N` before
//! evaluation so the closed forms apply exactly; the snap distance is
//! reported.

use crate::chain::{chain_params_from_diffusion, sampling_probabilities, ChainParams};
use crate::error::{Error, Result};
use crate::fitness::drift_limit_full;
use crate::model::{occupancy_to_frequency, FrequencyState, OccupancyState, ValidatedModel};
use crate::stationary::gauss::gauss_legendre_on;
use crate::stationary::log_unnormalized_aug;
use crate::trajectory::format_f64;

// ── Lattice snapping ─────────────────────────────────────────────────────────

/// Rounds `x` to the nearest occupancy `j/N` (per-locus sums fixed up by
/// largest remainder). Returns the state and the max coordinate distance.
pub fn snap_to_lattice(x: &FrequencyState, n: u64) -> (OccupancyState, f64) {
    let mut per_locus = Vec::with_capacity(x.num_loci());
    let mut distance = 0.0f64;
    for i in 0..x.num_loci() {
        let xi = x.locus(i);
        let raw: Vec<f64> = xi.iter().map(|v| v * n as f64).collect();
        let mut counts: Vec<i64> = raw.iter().map(|v| v.round() as i64).collect();
        let mut diff = n as i64 - counts.iter().sum::<i64>();
        while diff != 0 {
            // Move one unit at the coordinate with the largest rounding debt.
            let mut best = 0usize;
            let mut best_res = f64::NEG_INFINITY;
            for (k, (&r, &c)) in raw.iter().zip(&counts).enumerate() {
                let res = if diff > 0 { r - c as f64 } else { c as f64 - r };
                if res > best_res && (diff > 0 || c > 0) {
                    best_res = res;
                    best = k;
                }
            }
            counts[best] += diff.signum();
            diff -= diff.signum();
        }
        for (&c, &v) in counts.iter().zip(xi) {
            distance = distance.max((c as f64 / n as f64 - v).abs());
        }
        per_locus.push(counts.into_iter().map(|c| c as u64).collect());
    }
    (
        OccupancyState::new(per_locus, n).expect("largest-remainder fixup preserves the sum"),
        distance,
    )
}

// ── Exact conditional moments ────────────────────────────────────────────────

/// Scaled conditional increment means `mu_{i,k} = N (p_k(j) - x_k)`, full
/// length `M_i` per locus. Exact; converges to the drift as `N` grows.
pub fn exact_increment_mean(params: &ChainParams<'_>, j: &OccupancyState) -> Vec<Vec<f64>> {
    let n = params.population_size() as f64;
    let x = occupancy_to_frequency(j);
    let p = sampling_probabilities(params, &x);
    p.iter()
        .enumerate()
        .map(|(i, pi)| {
            pi.iter()
                .zip(x.locus(i))
                .map(|(&pk, &xk)| n * (pk - xk))
                .collect()
        })
        .collect()
}

/// Exact scaled conditional increment covariances.
#[derive(Debug, Clone)]
pub struct IncrementCovariance {
    /// `within[i][(k, l)]`, full `M_i x M_i` per locus.
    pub within: Vec<nalgebra::DMatrix<f64>>,
    /// `cross[(i, j)][(k, l)]` for locus pairs `i < j`.
    pub cross: Vec<((usize, usize), nalgebra::DMatrix<f64>)>,
}

pub fn exact_increment_cov(params: &ChainParams<'_>, j: &OccupancyState) -> IncrementCovariance {
    let n = params.population_size() as f64;
    let x = occupancy_to_frequency(j);
    let p = sampling_probabilities(params, &x);
    let mu = exact_increment_mean(params, j);
    let within = p
        .iter()
        .enumerate()
        .map(|(i, pi)| {
            let m = pi.len();
            nalgebra::DMatrix::from_fn(m, m, |k, l| {
                if k == l {
                    pi[k] * (1.0 - pi[k]) + mu[i][k] * mu[i][k] / n
                } else {
                    -pi[k] * pi[l] + mu[i][k] * mu[i][l] / n
                }
            })
        })
        .collect();
    let mut cross = Vec::new();
    for i in 0..p.len() {
        for jl in (i + 1)..p.len() {
            let (mi, mj) = (p[i].len(), p[jl].len());
            cross.push((
                (i, jl),
                nalgebra::DMatrix::from_fn(mi, mj, |k, l| mu[i][k] * mu[jl][l] / n),
            ));
        }
    }
    IncrementCovariance { within, cross }
}

/// Exact scaled fourth moment `e4_{i,k}` via binomial central moments.
pub fn exact_fourth_moment(
    params: &ChainParams<'_>,
    j: &OccupancyState,
    locus: usize,
    allele: usize,
) -> f64 {
    let n = params.population_size() as f64;
    let x = occupancy_to_frequency(j);
    let p = sampling_probabilities(params, &x)[locus][allele];
    let q = 1.0 - p;
    let b = n * (p - x.locus(locus)[allele]);
    let m2 = n * p * q;
    let m3 = n * p * q * (1.0 - 2.0 * p);
    let m4 = n * p * q * (1.0 + 3.0 * (n - 2.0) * p * q);
    (m4 + 4.0 * b * m3 + 6.0 * b * b * m2 + b.powi(4)) / n.powi(3)
}

// ── Moment report over an N grid ─────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct MomentRow {
    pub n: u64,
    pub quantity: String,
    pub exact: f64,
    pub limit: f64,
    pub abs_error: f64,
}

#[derive(Debug, Clone)]
pub struct MomentReport {
    pub rows: Vec<MomentRow>,
    /// Snap distance per grid point.
    pub snaps: Vec<(u64, f64)>,
}

/// Evaluates every exact moment against its diffusion limit over the `N`
/// grid, snapping `x` to each lattice.
pub fn moment_report(
    model: &ValidatedModel,
    x: &FrequencyState,
    n_grid: &[u64],
) -> Result<MomentReport> {
    let mut rows = Vec::new();
    let mut snaps = Vec::new();
    for &n in n_grid {
        let params = chain_params_from_diffusion(model, n)?;
        let (j, snap) = snap_to_lattice(x, n);
        snaps.push((n, snap));
        let xn = occupancy_to_frequency(&j);
        let mu = exact_increment_mean(&params, &j);
        let mu_limit = drift_limit_full(model, &xn);
        let cov = exact_increment_cov(&params, &j);
        for i in 0..model.num_loci() {
            let xi = xn.locus(i);
            for k in 0..xi.len() {
                rows.push(MomentRow {
                    n,
                    quantity: format!("mu[{},{}]", i + 1, k + 1),
                    exact: mu[i][k],
                    limit: mu_limit[i][k],
                    abs_error: (mu[i][k] - mu_limit[i][k]).abs(),
                });
                let dv = cov.within[i][(k, k)];
                let dv_limit = xi[k] * (1.0 - xi[k]);
                rows.push(MomentRow {
                    n,
                    quantity: format!("dvar[{},{}]", i + 1, k + 1),
                    exact: dv,
                    limit: dv_limit,
                    abs_error: (dv - dv_limit).abs(),
                });
                let e4 = exact_fourth_moment(&params, &j, i, k);
                rows.push(MomentRow {
                    n,
                    quantity: format!("e4[{},{}]", i + 1, k + 1),
                    exact: e4,
                    limit: 0.0,
                    abs_error: e4.abs(),
                });
                for l in (k + 1)..xi.len() {
                    let dc = cov.within[i][(k, l)];
                    let dc_limit = -xi[k] * xi[l];
                    rows.push(MomentRow {
                        n,
                        quantity: format!("dcov[{},{},{}]", i + 1, k + 1, l + 1),
                        exact: dc,
                        limit: dc_limit,
                        abs_error: (dc - dc_limit).abs(),
                    });
                }
            }
        }
        for ((i, jl), mat) in &cov.cross {
            for k in 0..mat.nrows() {
                for l in 0..mat.ncols() {
                    rows.push(MomentRow {
                        n,
                        quantity: format!("dx[{},{};{},{}]", i + 1, k + 1, jl + 1, l + 1),
                        exact: mat[(k, l)],
                        limit: 0.0,
                        abs_error: mat[(k, l)].abs(),
                    });
                }
            }
        }
    }
    Ok(MomentReport { rows, snaps })
}

impl MomentReport {
    /// CSV with one row per (N, quantity).
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("N,quantity,exact,limit,abs_error\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.n,
                r.quantity,
                format_f64(r.exact),
                format_f64(r.limit),
                format_f64(r.abs_error)
            ));
        }
        out
    }

    /// Least-squares log-log slope of `abs_error` vs `N` per quantity.
    /// Quantities whose error at the smallest `N` is below `min_error` are
    /// skipped: their limit holds exactly (or to rounding) and no decay
    /// rate is defined.
    pub fn decay_slopes(&self, min_error: f64) -> Vec<(String, f64)> {
        use std::collections::BTreeMap;
        let mut series: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
        for r in &self.rows {
            series
                .entry(&r.quantity)
                .or_default()
                .push((r.n as f64, r.abs_error));
        }
        let mut out = Vec::new();
        for (name, points) in series {
            let smallest =
                points
                    .iter()
                    .cloned()
                    .fold((f64::INFINITY, 0.0), |a, p| if p.0 < a.0 { p } else { a });
            if smallest.1 < min_error || points.iter().any(|&(_, e)| e <= 0.0) {
                continue;
            }
            out.push((name.to_string(), fit_loglog_slope(&points)));
        }
        out
    }
}

/// Least-squares slope of `ln e` against `ln n`.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (lx, ly) = (x.ln(), y.ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

// ── Ensemble statistics ──────────────────────────────────────────────────────

/// Per-coordinate mean and variance of an ensemble of final states, with
/// Monte Carlo standard errors (the variance SE uses the fourth central
/// moment, no normality assumption).
#[derive(Debug, Clone)]
pub struct EnsembleMoments {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub mean_se: Vec<f64>,
    pub variance_se: Vec<f64>,
    pub replicates: usize,
}

pub fn ensemble_moments(states: &[FrequencyState]) -> Result<EnsembleMoments> {
    if states.len() < 2 {
        return Err(Error::EmptyInput(
            "ensemble moments need at least 2 replicates".into(),
        ));
    }
    let n = states.len() as f64;
    let dim = states[0].augmented().len();
    let mut mean = vec![0.0; dim];
    for s in states {
        for (m, v) in mean.iter_mut().zip(s.augmented()) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let (mut m2, mut m4) = (vec![0.0; dim], vec![0.0; dim]);
    for s in states {
        for (k, v) in s.augmented().into_iter().enumerate() {
            let d = v - mean[k];
            m2[k] += d * d;
            m4[k] += d * d * d * d;
        }
    }
    let variance: Vec<f64> = m2.iter().map(|v| v / (n - 1.0)).collect();
    let mean_se: Vec<f64> = variance.iter().map(|v| (v / n).sqrt()).collect();
    let variance_se: Vec<f64> = variance
        .iter()
        .zip(&m4)
        .map(|(&s2, &q)| {
            let central4 = q / n;
            ((central4 - s2 * s2 * (n - 3.0) / (n - 1.0)) / n)
                .max(0.0)
                .sqrt()
        })
        .collect();
    Ok(EnsembleMoments {
        mean,
        variance,
        mean_se,
        variance_se,
        replicates: states.len(),
    })
}

/// Largest discrepancy between two ensembles in combined-standard-error
/// units, for means and variances separately.
pub fn max_moment_discrepancy(a: &EnsembleMoments, b: &EnsembleMoments) -> (f64, f64) {
    let mut mean_z = 0.0f64;
    let mut var_z = 0.0f64;
    for k in 0..a.mean.len() {
        let se = (a.mean_se[k].powi(2) + b.mean_se[k].powi(2)).sqrt();
        mean_z = mean_z.max((a.mean[k] - b.mean[k]).abs() / se);
        let se = (a.variance_se[k].powi(2) + b.variance_se[k].powi(2)).sqrt();
        var_z = var_z.max((a.variance[k] - b.variance[k]).abs() / se);
    }
    (mean_z, var_z)
}

// ── Stationarity testing ─────────────────────────────────────────────────────

/// Result of comparing samples against the analytic stationary density.
#[derive(Debug, Clone)]
pub struct StationarityReport {
    /// Total-variation distance between the joint histogram and analytic
    /// cell probabilities.
    pub tv: f64,
    /// Kolmogorov-Smirnov statistic per locus (first coordinate).
    pub ks: Vec<f64>,
    /// Integrated autocorrelation time of the first coordinate, in samples.
    pub iat: f64,
    /// Effective sample size `n / iat`.
    pub ess: f64,
    pub samples: usize,
    pub bins: usize,
}

fn require_biallelic_joint(model: &ValidatedModel) -> Result<()> {
    if model.shape().iter().any(|&m| m != 2) {
        return Err(Error::UnsupportedModelShape(
            "stationarity binning is defined for biallelic loci".into(),
        ));
    }
    if model.num_loci() > 3 {
        return Err(Error::UnsupportedModelShape(
            "joint stationarity binning supports at most three loci".into(),
        ));
    }
    Ok(())
}

/// Per-axis Gauss-Legendre tables in `theta` space (`x = sin^2 theta`),
/// one (x, weight) list per cell of the `bins` partition of `[0, 1]`.
fn cell_tables(
    model: &ValidatedModel,
    locus: usize,
    bins: usize,
    nodes: usize,
) -> Vec<Vec<(f64, f64)>> {
    let u = &model.locus(locus).mutation_rates;
    (0..bins)
        .map(|b| {
            let lo = (b as f64 / bins as f64).sqrt().asin();
            let hi = (((b + 1) as f64) / bins as f64).sqrt().asin();
            let (theta, w) = gauss_legendre_on(nodes, lo, hi);
            theta
                .iter()
                .zip(&w)
                .map(|(t, wt)| {
                    let (s, c) = (t.sin(), t.cos());
                    (
                        s * s,
                        wt * 2.0 * s.powf(4.0 * u[0] - 1.0) * c.powf(4.0 * u[1] - 1.0),
                    )
                })
                .collect()
        })
        .collect()
}

/// Analytic cell probabilities of the stationary law on the `bins^L` grid
/// over per-locus first coordinates, self-normalized so `Z` is not needed.
pub fn analytic_cell_probabilities(model: &ValidatedModel, bins: usize) -> Result<Vec<f64>> {
    require_biallelic_joint(model)?;
    if !model.is_parent_independent() {
        return Err(Error::UnsupportedModelShape(
            "stationarity testing requires parent-independent mutation".into(),
        ));
    }
    let l = model.num_loci();
    let nodes = 16;
    let tables: Vec<_> = (0..l).map(|i| cell_tables(model, i, bins, nodes)).collect();
    let cells = bins.pow(l as u32);
    let mut out = vec![0.0; cells];
    let mut aug = vec![0.0; 2 * l];
    for (cell, mass) in out.iter_mut().enumerate() {
        let mut cell_idx = vec![0usize; l];
        let mut rem = cell;
        for i in (0..l).rev() {
            cell_idx[i] = rem % bins;
            rem /= bins;
        }
        // Tensor quadrature within the cell. The Dirichlet part rides in
        // the per-axis weights; only e^{2V} is left under the integral.
        let mut node_idx = vec![0usize; l];
        let mut total = 0.0;
        loop {
            let mut weight = 1.0;
            for i in 0..l {
                let (x, w) = tables[i][cell_idx[i]][node_idx[i]];
                aug[2 * i] = x;
                aug[2 * i + 1] = 1.0 - x;
                weight *= w;
            }
            total += weight * (2.0 * crate::fitness::potential_augmented(model, &aug)).exp();
            let mut pos = l;
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                node_idx[pos] += 1;
                if node_idx[pos] < nodes {
                    break;
                }
                node_idx[pos] = 0;
            }
            if node_idx.iter().all(|&v| v == 0) {
                break;
            }
        }
        *mass = total;
    }
    let z: f64 = out.iter().sum();
    for v in out.iter_mut() {
        *v /= z;
    }
    Ok(out)
}

/// Analytic marginal CDF of the first coordinate at one locus, tabulated on
/// `grid + 1` equally spaced points of `[0, 1]` (in the `sin^2` variable).
fn marginal_cdf_table(model: &ValidatedModel, locus: usize, grid: usize) -> Vec<f64> {
    let l = model.num_loci();
    let inner_nodes = 48;
    let outer_nodes = 8;
    // Tables for the integrated-out axes.
    let other: Vec<(usize, Vec<(f64, f64)>)> = (0..l)
        .filter(|&i| i != locus)
        .map(|i| {
            let u = &model.locus(i).mutation_rates;
            let (theta, w) = gauss_legendre_on(inner_nodes, 0.0, std::f64::consts::FRAC_PI_2);
            let table = theta
                .iter()
                .zip(&w)
                .map(|(t, wt)| {
                    let (s, c) = (t.sin(), t.cos());
                    (
                        s * s,
                        wt * 2.0 * s.powf(4.0 * u[0] - 1.0) * c.powf(4.0 * u[1] - 1.0),
                    )
                })
                .collect();
            (i, table)
        })
        .collect();
    let u = &model.locus(locus).mutation_rates;
    let mut cdf = vec![0.0; grid + 1];
    let mut aug = vec![0.0; 2 * l];
    for g in 0..grid {
        let lo = (g as f64 / grid as f64).sqrt().asin();
        let hi = ((g as f64 + 1.0) / grid as f64).sqrt().asin();
        let (theta, w) = gauss_legendre_on(outer_nodes, lo, hi);
        let mut mass = 0.0;
        for (t, wt) in theta.iter().zip(&w) {
            let (s, c) = (t.sin(), t.cos());
            let x = s * s;
            let w_axis = wt * 2.0 * s.powf(4.0 * u[0] - 1.0) * c.powf(4.0 * u[1] - 1.0);
            aug[2 * locus] = x;
            aug[2 * locus + 1] = 1.0 - x;
            // Integrate out the remaining axes.
            let mut inner = 0.0;
            let mut idx = vec![0usize; other.len()];
            loop {
                let mut weight = 1.0;
                for (pos, (i, table)) in other.iter().enumerate() {
                    let (xo, wo) = table[idx[pos]];
                    aug[2 * i] = xo;
                    aug[2 * i + 1] = 1.0 - xo;
                    weight *= wo;
                }
                inner += weight * (2.0 * crate::fitness::potential_augmented(model, &aug)).exp();
                let mut pos = other.len();
                loop {
                    if pos == 0 {
                        break;
                    }
                    pos -= 1;
                    idx[pos] += 1;
                    if idx[pos] < inner_nodes {
                        break;
                    }
                    idx[pos] = 0;
                }
                if idx.iter().all(|&v| v == 0) {
                    break;
                }
            }
            mass += w_axis * inner;
        }
        cdf[g + 1] = cdf[g] + mass;
    }
    let z = cdf[grid];
    for v in cdf.iter_mut() {
        *v /= z;
    }
    cdf
}

fn ks_statistic(samples: &mut [f64], cdf: &[f64]) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).expect("finite sample"));
    let grid = cdf.len() - 1;
    let n = samples.len() as f64;
    let mut d = 0.0f64;
    for (i, &s) in samples.iter().enumerate() {
        let pos = (s * grid as f64).clamp(0.0, grid as f64);
        let cell = (pos as usize).min(grid - 1);
        let frac = pos - cell as f64;
        let f = cdf[cell] + frac * (cdf[cell + 1] - cdf[cell]);
        d = d.max(f - i as f64 / n);
        d = d.max((i + 1) as f64 / n - f);
    }
    d
}

/// Integrated autocorrelation time by summing the empirical autocorrelation
/// until it first turns non-positive.
pub fn integrated_autocorrelation(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 4 {
        return 1.0;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let var: f64 = series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if var == 0.0 {
        return 1.0;
    }
    let mut tau = 1.0;
    for lag in 1..n / 3 {
        let mut acf = 0.0;
        for t in 0..n - lag {
            acf += (series[t] - mean) * (series[t + lag] - mean);
        }
        acf /= (n - lag) as f64 * var;
        if acf <= 0.0 {
            break;
        }
        tau += 2.0 * acf;
    }
    tau
}

/// Bins the samples over per-locus first coordinates, compares against the
/// analytic cell probabilities (total variation) and analytic marginals
/// (Kolmogorov-Smirnov), and estimates the effective sample size.
pub fn stationarity_test(
    model: &ValidatedModel,
    states: &[FrequencyState],
    bins: usize,
) -> Result<StationarityReport> {
    if states.is_empty() {
        return Err(Error::EmptyInput("stationarity test got no samples".into()));
    }
    let analytic = analytic_cell_probabilities(model, bins)?;
    let l = model.num_loci();
    let mut histogram = vec![0.0f64; analytic.len()];
    for s in states {
        let mut cell = 0usize;
        for i in 0..l {
            let x = s.locus(i)[0];
            let b = ((x * bins as f64) as usize).min(bins - 1);
            cell = cell * bins + b;
        }
        histogram[cell] += 1.0;
    }
    let n = states.len() as f64;
    let tv = 0.5
        * histogram
            .iter()
            .zip(&analytic)
            .map(|(h, a)| (h / n - a).abs())
            .sum::<f64>();

    let mut ks = Vec::with_capacity(l);
    for i in 0..l {
        let cdf = marginal_cdf_table(model, i, 2048);
        let mut coords: Vec<f64> = states.iter().map(|s| s.locus(i)[0]).collect();
        ks.push(ks_statistic(&mut coords, &cdf));
    }

    let first: Vec<f64> = states.iter().map(|s| s.locus(0)[0]).collect();
    let iat = integrated_autocorrelation(&first);
    Ok(StationarityReport {
        tv,
        ks,
        iat,
        ess: n / iat,
        samples: states.len(),
        bins,
    })
}

/// Log-density grid evaluator for biallelic models: rows of
/// (first coordinates per locus, unnormalized log density) over the tensor
/// midpoint grid with `points` per axis.
pub fn density_grid(model: &ValidatedModel, points: usize) -> Result<Vec<(Vec<f64>, f64)>> {
    if model.shape().iter().any(|&m| m != 2) {
        return Err(Error::UnsupportedModelShape(
            "density grids are defined for biallelic loci".into(),
        ));
    }
    if !model.is_parent_independent() {
        return Err(Error::UnsupportedModelShape(
            "density evaluation requires parent-independent mutation".into(),
        ));
    }
    let l = model.num_loci();
    let axis: Vec<f64> = (0..points)
        .map(|j| (j as f64 + 0.5) / points as f64)
        .collect();
    let mut out = Vec::with_capacity(points.pow(l as u32));
    let mut idx = vec![0usize; l];
    let mut aug = vec![0.0; 2 * l];
    loop {
        let coords: Vec<f64> = idx.iter().map(|&j| axis[j]).collect();
        for (i, &x) in coords.iter().enumerate() {
            aug[2 * i] = x;
            aug[2 * i + 1] = 1.0 - x;
        }
        out.push((coords, log_unnormalized_aug(model, &aug)));
        let mut pos = l;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < points {
                break;
            }
            idx[pos] = 0;
        }
    }
}
