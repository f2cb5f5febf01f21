//! The explicit stationary density of the coupled diffusion and its
//! normalization.
//!
//! Under parent-independent mutation the stationary law is
//! `P(x) = pi(x) e^{2 V(x)} / Z`, where `pi` is a product of unnormalized
//! Dirichlet factors with parameters `2 u_k` and `V` is the fitness
//! potential. Both facts are checked here rather than assumed: the
//! probability flow `J_k = p_k P - (1/2) sum_l d/dx_l (d_kl P)` is evaluated
//! with fully analytic derivatives and must vanish identically
//! ([`flow_residual`]).
//!
//! The normalizer `Z` has three routes:
//!
//! - [`normalizer_closed_2x2`]: the two-locus biallelic single-coupling
//!   closed form, a Kummer-function series in gamma factors;
//! - [`normalizer_quadrature`]: tensor Gauss-Legendre after mapping each
//!   biallelic axis through `x = sin^2 t`, which absorbs the `x^{2u-1}`
//!   endpoint behavior for `u >= 1/2`;
//! - [`normalizer_mc`]: exact Dirichlet importance sampling,
//!   `Z = (prod_i B(2u^(i))) E[e^{2V}]`, which handles the `pi`
//!   singularities for any shape and any `u > 0`.
//!
//! All density work is done in log space; `Z` assembly exponentiates under
//! a running scale so gamma factors cannot overflow.

pub mod gauss;
mod kummer;
mod special;

pub use kummer::kummer_m;
pub use special::{log_beta, log_gamma};

use std::sync::OnceLock;

use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::exec;
use crate::fitness::potential_augmented;
use crate::model::{FrequencyState, ValidatedModel};
use crate::seeds::stream_rng;

fn require_parent_independent(model: &ValidatedModel) -> Result<()> {
    if model.is_parent_independent() {
        Ok(())
    } else {
        Err(Error::UnsupportedModelShape(
            "stationary density requires parent-independent mutation".into(),
        ))
    }
}

// ── Density evaluation ───────────────────────────────────────────────────────

/// `log pi(x) = sum_i sum_k (2 u_k - 1) log x_k`, the product-Dirichlet
/// factor. Returns `-inf` where a positive exponent meets a zero
/// coordinate; a negative exponent there makes the density non-integrable
/// pointwise and is an error.
pub fn log_pi(model: &ValidatedModel, x: &FrequencyState) -> Result<f64> {
    require_parent_independent(model)?;
    let mut total = 0.0f64;
    for (i, locus) in model.loci().iter().enumerate() {
        let xi = x.locus(i);
        for (k, &u) in locus.mutation_rates.iter().enumerate() {
            let e = 2.0 * u - 1.0;
            if xi[k] == 0.0 {
                if e > 0.0 {
                    return Ok(f64::NEG_INFINITY);
                }
                if e < 0.0 {
                    return Err(Error::NonIntegrableEvaluation(format!(
                        "exponent {e} at zero coordinate (locus {}, allele {})",
                        i + 1,
                        k + 1
                    )));
                }
            } else if e != 0.0 {
                total += e * xi[k].ln();
            }
        }
    }
    Ok(total)
}

/// `log P~(x) = log pi(x) + 2 V(x)` (unnormalized).
pub fn log_density_unnormalized(model: &ValidatedModel, x: &FrequencyState) -> Result<f64> {
    let lp = log_pi(model, x)?;
    Ok(lp + 2.0 * crate::fitness::potential(model, x))
}

/// Interior fast path on a stacked augmented vector; no boundary checks.
pub(crate) fn log_unnormalized_aug(model: &ValidatedModel, aug: &[f64]) -> f64 {
    let layout = model.layout();
    let mut total = 2.0 * potential_augmented(model, aug);
    for (i, locus) in model.loci().iter().enumerate() {
        let off = layout.full_offset(i);
        for (k, &u) in locus.mutation_rates.iter().enumerate() {
            let e = 2.0 * u - 1.0;
            if e != 0.0 {
                total += e * aug[off + k].ln();
            }
        }
    }
    total
}

// ── Closed-form normalizer (two biallelic loci, single coupling) ─────────────

fn single_scalar_coupling(model: &ValidatedModel) -> Result<f64> {
    if model.num_loci() != 2 || model.shape() != [2, 2] {
        return Err(Error::UnsupportedModelShape(
            "closed-form normalizer needs exactly two biallelic loci".into(),
        ));
    }
    if model.field_vector().iter().any(|&h| h != 0.0) {
        return Err(Error::UnsupportedModelShape(
            "closed-form normalizer needs zero single-locus fields".into(),
        ));
    }
    match model.couplings() {
        [] => Ok(0.0),
        [block] => {
            let v = &block.values;
            if v[(0, 1)] != 0.0 || v[(1, 0)] != 0.0 || v[(1, 1)] != 0.0 {
                return Err(Error::UnsupportedModelShape(
                    "closed-form normalizer needs a single scalar coupling J(1,1)".into(),
                ));
            }
            Ok(v[(0, 0)])
        }
        _ => Err(Error::UnsupportedModelShape(
            "closed-form normalizer needs at most one coupling block".into(),
        )),
    }
}

/// Closed-form `Z` for two biallelic loci with one scalar coupling `h`:
/// a Kummer series integrated term by term against the first-locus Beta
/// weight, all gamma factors in log space.
pub fn normalizer_closed_2x2(model: &ValidatedModel) -> Result<f64> {
    require_parent_independent(model)?;
    let h = single_scalar_coupling(model)?;
    let a1 = 2.0 * model.locus(0).mutation_rates[0];
    let c1 = 2.0 * model.locus(0).mutation_rates[1];
    let a2 = 2.0 * model.locus(1).mutation_rates[0];
    let c2 = 2.0 * model.locus(1).mutation_rates[1];
    let (b1, b2) = (a1 + c1, a2 + c2);

    let prefactor = log_gamma(a2)? + log_gamma(c2)? - log_gamma(b2)?;
    let z2h = 2.0 * h;
    let sign_step = if z2h < 0.0 { -1.0 } else { 1.0 };
    let log_abs_2h = if z2h == 0.0 {
        f64::NEG_INFINITY
    } else {
        z2h.abs().ln()
    };

    // Term n: (a2)_n (2h)^n / ((b2)_n n!) * G(a1 + n) G(c1) / G(b1 + n).
    let mut log_term = log_gamma(a1)? + log_gamma(c1)? - log_gamma(b1)?;
    let mut sign = 1.0f64;
    let mut shift = log_term;
    let mut acc = 0.0f64;
    for n in 0..10_000usize {
        if log_term > shift {
            acc *= (shift - log_term).exp();
            shift = log_term;
        }
        let scaled = (log_term - shift).exp();
        acc += sign * scaled;
        if (n > 0 && scaled <= 1e-16 * acc.abs()) || z2h == 0.0 {
            if acc <= 0.0 {
                return Err(Error::Domain(
                    "normalizer series summed to a non-positive value".into(),
                ));
            }
            return Ok((prefactor + shift).exp() * acc);
        }
        let nf = n as f64;
        log_term += (a2 + nf).ln() - (b2 + nf).ln() + log_abs_2h - (nf + 1.0).ln() + (a1 + nf).ln()
            - (b1 + nf).ln();
        sign *= sign_step;
    }
    Err(Error::NoConvergence { max_terms: 10_000 })
}

// ── Monte Carlo normalizer ───────────────────────────────────────────────────

/// Monte Carlo estimate of `Z` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub z: f64,
    pub standard_error: f64,
    pub samples: u64,
}

const MC_BLOCK: u64 = 1 << 14;

/// Log of the product-Dirichlet normalization `prod_i B(2 u^(i))`.
fn log_dirichlet_normalizer(model: &ValidatedModel) -> Result<f64> {
    let mut total = 0.0;
    for locus in model.loci() {
        let mut sum = 0.0;
        for &u in &locus.mutation_rates {
            total += log_gamma(2.0 * u)?;
            sum += 2.0 * u;
        }
        total -= log_gamma(sum)?;
    }
    Ok(total)
}

/// One block of `e^{2V}` draws under `x ~ prod_i Dirichlet(2 u^(i))`;
/// returns (count, mean, sum of squared deviations).
fn mc_block(model: &ValidatedModel, seed: u64, block: u64, count: u64) -> (u64, f64, f64) {
    let mut rng = stream_rng(seed, block);
    let gammas: Vec<Vec<Gamma<f64>>> = model
        .loci()
        .iter()
        .map(|l| {
            l.mutation_rates
                .iter()
                .map(|&u| Gamma::new(2.0 * u, 1.0).expect("positive shape"))
                .collect()
        })
        .collect();
    let layout = model.layout();
    let mut aug = vec![0.0; layout.total_full()];
    let (mut n, mut mean, mut m2) = (0u64, 0.0f64, 0.0f64);
    for _ in 0..count {
        for (i, locus_gammas) in gammas.iter().enumerate() {
            let off = layout.full_offset(i);
            let mut sum = 0.0;
            for (k, g) in locus_gammas.iter().enumerate() {
                let draw: f64 = g.sample(&mut rng);
                aug[off + k] = draw;
                sum += draw;
            }
            for k in 0..locus_gammas.len() {
                aug[off + k] /= sum;
            }
        }
        let value = (2.0 * potential_augmented(model, &aug)).exp();
        n += 1;
        let delta = value - mean;
        mean += delta / n as f64;
        m2 += delta * (value - mean);
    }
    (n, mean, m2)
}

fn mc_combine(blocks: Vec<(u64, f64, f64)>) -> (u64, f64, f64) {
    let mut acc = (0u64, 0.0f64, 0.0f64);
    for (n, mean, m2) in blocks {
        if acc.0 == 0 {
            acc = (n, mean, m2);
        } else {
            let total = acc.0 + n;
            let delta = mean - acc.1;
            let combined_mean = acc.1 + delta * n as f64 / total as f64;
            let combined_m2 = acc.2 + m2 + delta * delta * acc.0 as f64 * n as f64 / total as f64;
            acc = (total, combined_mean, combined_m2);
        }
    }
    acc
}

fn mc_estimate(
    model: &ValidatedModel,
    samples: u64,
    seed: u64,
    parallel: bool,
) -> Result<McEstimate> {
    require_parent_independent(model)?;
    if samples < 2 {
        return Err(Error::EmptyInput(
            "Monte Carlo normalizer needs at least 2 samples".into(),
        ));
    }
    let blocks = samples.div_ceil(MC_BLOCK);
    let counts: Vec<u64> = (0..blocks)
        .map(|b| MC_BLOCK.min(samples - b * MC_BLOCK))
        .collect();
    let results = if parallel {
        exec::map_indexed(blocks as usize, |b| {
            mc_block(model, seed, b as u64, counts[b])
        })
    } else {
        exec::map_indexed_seq(blocks as usize, |b| {
            mc_block(model, seed, b as u64, counts[b])
        })
    };
    let (n, mean, m2) = mc_combine(results);
    let dir = log_dirichlet_normalizer(model)?.exp();
    let variance = m2 / (n - 1) as f64;
    Ok(McEstimate {
        z: dir * mean,
        standard_error: dir * (variance / n as f64).sqrt(),
        samples: n,
    })
}

/// Dirichlet-importance-sampled `Z`, parallel over sample blocks with
/// per-block generator streams; the block merge is deterministic.
pub fn normalizer_mc(model: &ValidatedModel, samples: u64, seed: u64) -> Result<McEstimate> {
    mc_estimate(model, samples, seed, true)
}

/// Sequential twin of [`normalizer_mc`]; identical output.
pub fn normalizer_mc_seq(model: &ValidatedModel, samples: u64, seed: u64) -> Result<McEstimate> {
    mc_estimate(model, samples, seed, false)
}

// ── Tensor quadrature normalizer ─────────────────────────────────────────────

/// Quadrature estimate of `Z` with the node-doubling refinement delta.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureEstimate {
    pub z: f64,
    /// Relative change when doubling the per-axis node count.
    pub refinement_delta: f64,
}

const QUAD_NODES: usize = 200;

fn quadrature_pass(model: &ValidatedModel, nodes: usize) -> f64 {
    // Per-axis tables after x = sin^2 t: weight absorbs the Jacobian and
    // the Beta-type endpoint factors, exponents 4u - 1 >= 1 for u >= 1/2.
    let l = model.num_loci();
    let (theta, w) = gauss::gauss_legendre_on(nodes, 0.0, std::f64::consts::FRAC_PI_2);
    let axis: Vec<(Vec<f64>, Vec<f64>)> = (0..l)
        .map(|i| {
            let u = &model.locus(i).mutation_rates;
            let mut xs = Vec::with_capacity(nodes);
            let mut ws = Vec::with_capacity(nodes);
            for (t, wt) in theta.iter().zip(&w) {
                let (s, c) = (t.sin(), t.cos());
                xs.push(s * s);
                ws.push(wt * 2.0 * s.powf(4.0 * u[0] - 1.0) * c.powf(4.0 * u[1] - 1.0));
            }
            (xs, ws)
        })
        .collect();

    // Tensor sum, parallel over the first axis; slice sums are combined in
    // index order, and compensated summation keeps the refinement delta
    // meaningful at the 1e-10 level.
    let slice_sums = exec::map_indexed(nodes, |j0| {
        let mut aug = vec![0.0; 2 * l];
        aug[0] = axis[0].0[j0];
        aug[1] = 1.0 - aug[0];
        let w0 = axis[0].1[j0];
        let mut idx = vec![0usize; l];
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        loop {
            let mut weight = w0;
            for i in 1..l {
                let j = idx[i];
                aug[2 * i] = axis[i].0[j];
                aug[2 * i + 1] = 1.0 - axis[i].0[j];
                weight *= axis[i].1[j];
            }
            let f = (2.0 * potential_augmented(model, &aug)).exp();
            let y = weight * f - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
            // Odometer over axes 1..l.
            let mut pos = l;
            loop {
                if pos == 1 {
                    return sum;
                }
                pos -= 1;
                idx[pos] += 1;
                if idx[pos] < nodes {
                    break;
                }
                idx[pos] = 0;
            }
        }
    });
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for s in slice_sums {
        let y = s - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Tensor Gauss-Legendre `Z` for all-biallelic models with `L <= 3` and
/// every `u_k >= 1/2` (bounded integrand after substitution). Singular
/// models belong to the Monte Carlo route instead.
pub fn normalizer_quadrature(model: &ValidatedModel) -> Result<QuadratureEstimate> {
    require_parent_independent(model)?;
    if model.shape().iter().any(|&m| m != 2) || model.num_loci() > 3 {
        return Err(Error::UnsupportedModelShape(
            "quadrature normalizer needs at most three biallelic loci".into(),
        ));
    }
    for (i, locus) in model.loci().iter().enumerate() {
        for (k, &u) in locus.mutation_rates.iter().enumerate() {
            if u < 0.5 {
                return Err(Error::NonIntegrableEvaluation(format!(
                    "u = {u} < 1/2 at locus {}, allele {}; use the Monte Carlo normalizer",
                    i + 1,
                    k + 1
                )));
            }
        }
    }
    let coarse = quadrature_pass(model, QUAD_NODES);
    let fine = quadrature_pass(model, 2 * QUAD_NODES);
    Ok(QuadratureEstimate {
        z: fine,
        refinement_delta: ((fine - coarse) / fine).abs(),
    })
}

// ── Probability flow ─────────────────────────────────────────────────────────

/// Relative probability flow `J_k^(i) / P~(x)` at an interior point, from
/// fully analytic derivatives:
///
/// ```text
/// J_k / P~ = p_k(x) - (1/2) [ sum_l dd_kl/dx_l
///                             + sum_l d_kl (dlog pi/dx_l + 2 dV/dx_l) ]
/// ```
///
/// For the stationary density this vanishes identically; the residual
/// isolates formula errors rather than finite-difference truncation.
/// Returned in stacked reduced coordinates.
pub fn flow_residual(model: &ValidatedModel, x: &FrequencyState) -> Result<Vec<f64>> {
    require_parent_independent(model)?;
    for i in 0..model.num_loci() {
        for (k, &v) in x.locus(i).iter().enumerate() {
            if v <= 0.0 {
                return Err(Error::SingularAtBoundary {
                    locus: i + 1,
                    coordinate: k + 1,
                    value: v,
                });
            }
        }
    }
    let drift = crate::fitness::full_drift(model, x);
    let grad = crate::fitness::potential_gradient(model, x);
    let layout = model.layout();
    let mut out = vec![0.0; layout.total_reduced()];
    for i in 0..layout.num_loci() {
        let m = layout.alleles(i);
        let roff = layout.reduced_offset(i);
        let xi = x.locus(i);
        let u = &model.locus(i).mutation_rates;
        let last_term = (2.0 * u[m - 1] - 1.0) / xi[m - 1];
        // d log pi / dx_l in reduced coordinates.
        let dlogpi: Vec<f64> = (0..m - 1)
            .map(|l| (2.0 * u[l] - 1.0) / xi[l] - last_term)
            .collect();
        for k in 0..m - 1 {
            // sum_l dd_kl/dx_l = 1 - M_i x_k.
            let div_d = 1.0 - m as f64 * xi[k];
            let mut coupled = 0.0;
            for l in 0..m - 1 {
                let d = if k == l {
                    xi[k] * (1.0 - xi[k])
                } else {
                    -xi[k] * xi[l]
                };
                coupled += d * (dlogpi[l] + 2.0 * grad[roff + l]);
            }
            out[roff + k] = drift[roff + k] - 0.5 * (div_d + coupled);
        }
    }
    Ok(out)
}

// ── Normalized density handle ────────────────────────────────────────────────

/// How a normalizer was produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormalizerMethod {
    ClosedForm,
    Quadrature { refinement_delta: f64 },
    MonteCarlo { standard_error: f64, samples: u64 },
}

impl NormalizerMethod {
    pub fn name(&self) -> &'static str {
        match self {
            NormalizerMethod::ClosedForm => "closed-form",
            NormalizerMethod::Quadrature { .. } => "quadrature",
            NormalizerMethod::MonteCarlo { .. } => "monte-carlo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalizer {
    pub log_z: f64,
    pub method: NormalizerMethod,
}

/// The normalized stationary density with a lazily computed normalizer:
/// closed form when the model shape allows it, then quadrature, then
/// Dirichlet Monte Carlo.
#[derive(Debug)]
pub struct StationaryDensity<'a> {
    model: &'a ValidatedModel,
    normalizer: OnceLock<Normalizer>,
    mc_samples: u64,
    seed: u64,
}

impl<'a> StationaryDensity<'a> {
    pub fn new(model: &'a ValidatedModel) -> Result<Self> {
        require_parent_independent(model)?;
        Ok(StationaryDensity {
            model,
            normalizer: OnceLock::new(),
            mc_samples: 1 << 20,
            seed: 0,
        })
    }

    /// Settings for the Monte Carlo fallback route.
    pub fn with_mc_settings(mut self, samples: u64, seed: u64) -> Self {
        self.mc_samples = samples;
        self.seed = seed;
        self
    }

    pub fn model(&self) -> &'a ValidatedModel {
        self.model
    }

    fn compute_normalizer(&self) -> Result<Normalizer> {
        if let Ok(z) = normalizer_closed_2x2(self.model) {
            return Ok(Normalizer {
                log_z: z.ln(),
                method: NormalizerMethod::ClosedForm,
            });
        }
        match normalizer_quadrature(self.model) {
            Ok(q) => Ok(Normalizer {
                log_z: q.z.ln(),
                method: NormalizerMethod::Quadrature {
                    refinement_delta: q.refinement_delta,
                },
            }),
            Err(Error::UnsupportedModelShape(_)) | Err(Error::NonIntegrableEvaluation(_)) => {
                let mc = normalizer_mc(self.model, self.mc_samples, self.seed)?;
                Ok(Normalizer {
                    log_z: mc.z.ln(),
                    method: NormalizerMethod::MonteCarlo {
                        standard_error: mc.standard_error,
                        samples: mc.samples,
                    },
                })
            }
            Err(e) => Err(e),
        }
    }

    pub fn normalizer(&self) -> Result<Normalizer> {
        if let Some(n) = self.normalizer.get() {
            return Ok(*n);
        }
        let computed = self.compute_normalizer()?;
        Ok(*self.normalizer.get_or_init(|| computed))
    }

    /// Normalized log-density `log P(x)`.
    pub fn log_density(&self, x: &FrequencyState) -> Result<f64> {
        let n = self.normalizer()?;
        Ok(log_density_unnormalized(self.model, x)? - n.log_z)
    }
}
