//! Haplotype fitness, mean fitnesses, the fitness potential `V`, and the
//! drift field of the limiting diffusion.
//!
//! A haplotype `s` assigns one allele per locus and has fitness
//! `m_s = 1 + sum_r h_r(s_r) + sum_{r<s} J_{rs}(s_r, s_s)`: single-locus
//! fields plus pairwise couplings, nothing higher. Population means `m_bar`
//! and per-allele means `m_bar_k` have closed forms in the allele
//! frequencies; brute-force enumeration twins are kept as oracles.
//!
//! The selection part of the drift has two algebraically equal routes:
//!
//! 1. `D(x) * grad V(x)` with `V = h . x + x' A x / 2` on the augmented
//!    frequency vector (the gradient-flow form), and
//! 2. `x_k (m_bar_k - m_bar)` from the fitness means.
//!
//! Route 1 is the primary implementation; route 2 is retained as a
//! cross-check. Each route uses its own arithmetic (the coupling matrix for
//! route 1, per-block sums for route 2), so agreement is a real consistency
//! test, not a tautology.

use crate::error::{Error, Result};
use crate::model::{FrequencyState, ValidatedModel};

/// Enumeration oracles refuse models with more haplotypes than this; they
/// exist for verification, not production.
pub const BRUTE_FORCE_LIMIT: f64 = 1e6;

// ── Haplotype-level quantities ───────────────────────────────────────────────

/// Fitness `m_s` of one haplotype (0-based allele indices, one per locus).
pub fn haplotype_fitness(model: &ValidatedModel, haplotype: &[usize]) -> f64 {
    assert_eq!(haplotype.len(), model.num_loci(), "haplotype length");
    let mut m = 1.0;
    for (i, &allele) in haplotype.iter().enumerate() {
        m += model.locus(i).fields[allele];
    }
    for block in model.couplings() {
        let (i, j) = block.pair;
        m += block.values[(haplotype[i], haplotype[j])];
    }
    m
}

/// Population fraction of a haplotype: the product of its allele frequencies.
pub fn haplotype_frequency(x: &FrequencyState, haplotype: &[usize]) -> f64 {
    haplotype
        .iter()
        .enumerate()
        .map(|(i, &allele)| x.locus(i)[allele])
        .product()
}

/// Conditional haplotype fraction given allele `k` at locus `i`:
/// `delta(s_i, k) * prod_{j != i} x_{s_j}`. Zero by convention when the
/// conditioning frequency vanishes.
pub fn conditional_haplotype_frequency(
    x: &FrequencyState,
    haplotype: &[usize],
    locus: usize,
    allele: usize,
) -> f64 {
    if haplotype[locus] != allele {
        return 0.0;
    }
    haplotype
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != locus)
        .map(|(j, &a)| x.locus(j)[a])
        .product()
}

// ── Closed-form population means ─────────────────────────────────────────────

/// Mean fitness `m_bar(x)` in closed form.
pub fn mean_fitness(model: &ValidatedModel, x: &FrequencyState) -> f64 {
    let mut m = 1.0;
    for (i, locus) in model.loci().iter().enumerate() {
        let xi = x.locus(i);
        for (k, &h) in locus.fields.iter().enumerate() {
            m += h * xi[k];
        }
    }
    for block in model.couplings() {
        let (i, j) = block.pair;
        let (xi, xj) = (x.locus(i), x.locus(j));
        for (t, &xt) in xi.iter().enumerate() {
            for (n, &xn) in xj.iter().enumerate() {
                m += block.values[(t, n)] * xt * xn;
            }
        }
    }
    m
}

/// Mean fitness `m_bar_k(x)` of allele `k` at locus `i` in closed form:
/// own field, other-locus field means, the couplings of locus `i` pinned at
/// allele `k`, and the couplings not touching locus `i`.
pub fn allele_mean_fitness(
    model: &ValidatedModel,
    x: &FrequencyState,
    locus: usize,
    allele: usize,
) -> f64 {
    let mut m = 1.0 + model.locus(locus).fields[allele];
    for (r, spec) in model.loci().iter().enumerate() {
        if r == locus {
            continue;
        }
        let xr = x.locus(r);
        for (t, &h) in spec.fields.iter().enumerate() {
            m += h * xr[t];
        }
    }
    for block in model.couplings() {
        let (i, j) = block.pair;
        if i == locus {
            for (t, &xt) in x.locus(j).iter().enumerate() {
                m += block.values[(allele, t)] * xt;
            }
        } else if j == locus {
            for (t, &xt) in x.locus(i).iter().enumerate() {
                m += block.values[(t, allele)] * xt;
            }
        } else {
            let (xi, xj) = (x.locus(i), x.locus(j));
            for (t, &xt) in xi.iter().enumerate() {
                for (n, &xn) in xj.iter().enumerate() {
                    m += block.values[(t, n)] * xt * xn;
                }
            }
        }
    }
    m
}

// ── Brute-force oracles ──────────────────────────────────────────────────────

/// Visits every haplotype in mixed-radix order.
pub fn for_each_haplotype<F: FnMut(&[usize])>(model: &ValidatedModel, mut f: F) -> Result<()> {
    let total = model.num_haplotypes();
    if total > BRUTE_FORCE_LIMIT {
        return Err(Error::ModelTooLarge {
            haplotypes: total,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let shape = model.shape();
    let mut sigma = vec![0usize; shape.len()];
    loop {
        f(&sigma);
        let mut pos = shape.len();
        loop {
            if pos == 0 {
                return Ok(());
            }
            pos -= 1;
            sigma[pos] += 1;
            if sigma[pos] < shape[pos] {
                break;
            }
            sigma[pos] = 0;
        }
    }
}

fn kahan_add(sum: &mut f64, comp: &mut f64, value: f64) {
    let y = value - *comp;
    let t = *sum + y;
    *comp = (t - *sum) - y;
    *sum = t;
}

/// `sum_s f(s) m_s` by full enumeration; the oracle for [`mean_fitness`].
pub fn mean_fitness_bruteforce(model: &ValidatedModel, x: &FrequencyState) -> Result<f64> {
    let (mut sum, mut comp) = (0.0, 0.0);
    for_each_haplotype(model, |sigma| {
        kahan_add(
            &mut sum,
            &mut comp,
            haplotype_frequency(x, sigma) * haplotype_fitness(model, sigma),
        );
    })?;
    Ok(sum)
}

/// `sum_s f_k(s) m_s` by full enumeration; the oracle for
/// [`allele_mean_fitness`] (agrees wherever `x_k > 0`).
pub fn allele_mean_fitness_bruteforce(
    model: &ValidatedModel,
    x: &FrequencyState,
    locus: usize,
    allele: usize,
) -> Result<f64> {
    let (mut sum, mut comp) = (0.0, 0.0);
    for_each_haplotype(model, |sigma| {
        kahan_add(
            &mut sum,
            &mut comp,
            conditional_haplotype_frequency(x, sigma, locus, allele)
                * haplotype_fitness(model, sigma),
        );
    })?;
    Ok(sum)
}

// ── Potential and gradient ───────────────────────────────────────────────────

/// `V = h . x + x' A x / 2` evaluated on a stacked augmented vector (all
/// `M_i` coordinates per locus).
pub fn potential_augmented(model: &ValidatedModel, augmented: &[f64]) -> f64 {
    let a = model.coupling_matrix().matrix();
    let h = model.field_vector();
    let n = augmented.len();
    debug_assert_eq!(n, model.layout().total_full());
    let mut linear = 0.0;
    let mut quad = 0.0;
    for r in 0..n {
        linear += h[r] * augmented[r];
        let mut row = 0.0;
        for c in 0..n {
            row += a[(r, c)] * augmented[c];
        }
        quad += augmented[r] * row;
    }
    linear + 0.5 * quad
}

/// The fitness potential `V(x)`.
pub fn potential(model: &ValidatedModel, x: &FrequencyState) -> f64 {
    potential_augmented(model, &x.augmented())
}

/// Scratch space for the drift evaluations; reuse across steps in hot loops.
#[derive(Debug, Clone)]
pub struct DriftBuffer {
    /// `h + A x` on the augmented vector.
    htilde: Vec<f64>,
}

impl DriftBuffer {
    pub fn new(model: &ValidatedModel) -> Self {
        DriftBuffer {
            htilde: vec![0.0; model.layout().total_full()],
        }
    }
}

fn htilde_into(model: &ValidatedModel, augmented: &[f64], out: &mut [f64]) {
    let a = model.coupling_matrix().matrix();
    let h = model.field_vector();
    let n = augmented.len();
    for r in 0..n {
        let mut s = h[r];
        for c in 0..n {
            s += a[(r, c)] * augmented[c];
        }
        out[r] = s;
    }
}

pub(crate) fn potential_gradient_into(
    model: &ValidatedModel,
    augmented: &[f64],
    buf: &mut DriftBuffer,
    out: &mut [f64],
) {
    htilde_into(model, augmented, &mut buf.htilde);
    let layout = model.layout();
    for i in 0..layout.num_loci() {
        let m = layout.alleles(i);
        let foff = layout.full_offset(i);
        let roff = layout.reduced_offset(i);
        let last = buf.htilde[foff + m - 1];
        for l in 0..m - 1 {
            out[roff + l] = buf.htilde[foff + l] - last;
        }
    }
}

/// Gradient of `V` in reduced coordinates: per locus, the partial derivative
/// with respect to `x_l` after eliminating the last coordinate, which is the
/// augmented-gradient component `l` minus component `M_i`.
pub fn potential_gradient(model: &ValidatedModel, x: &FrequencyState) -> Vec<f64> {
    let mut buf = DriftBuffer::new(model);
    let mut out = vec![0.0; model.layout().total_reduced()];
    potential_gradient_into(model, &x.augmented(), &mut buf, &mut out);
    out
}

pub(crate) fn selection_drift_into(
    model: &ValidatedModel,
    augmented: &[f64],
    buf: &mut DriftBuffer,
    out: &mut [f64],
) {
    potential_gradient_into(model, augmented, buf, out);
    let layout = model.layout();
    // Multiply the per-locus gradient by D^(i)(x) in place, back to front so
    // the gradient entries are still unmodified when each row is formed.
    let mut row = [0.0f64; 0].to_vec();
    for i in 0..layout.num_loci() {
        let m = layout.alleles(i);
        let foff = layout.full_offset(i);
        let roff = layout.reduced_offset(i);
        let xi = &augmented[foff..foff + m];
        row.clear();
        row.resize(m - 1, 0.0);
        for k in 0..m - 1 {
            let mut s = 0.0;
            for l in 0..m - 1 {
                let d = if k == l {
                    xi[k] * (1.0 - xi[k])
                } else {
                    -xi[k] * xi[l]
                };
                s += d * out[roff + l];
            }
            row[k] = s;
        }
        out[roff..roff + m - 1].copy_from_slice(&row);
    }
}

/// Selection drift, primary route: `G^(i) = D^(i)(x) grad_i V(x)` per locus,
/// stacked reduced coordinates.
pub fn selection_drift(model: &ValidatedModel, x: &FrequencyState) -> Vec<f64> {
    let mut buf = DriftBuffer::new(model);
    let mut out = vec![0.0; model.layout().total_reduced()];
    selection_drift_into(model, &x.augmented(), &mut buf, &mut out);
    out
}

/// Selection drift, cross-check route: `G_k = x_k (m_bar_k - m_bar)` from
/// the closed-form fitness means.
pub fn selection_drift_mean_fitness(model: &ValidatedModel, x: &FrequencyState) -> Vec<f64> {
    let layout = model.layout();
    let mbar = mean_fitness(model, x);
    let mut out = vec![0.0; layout.total_reduced()];
    for i in 0..layout.num_loci() {
        let roff = layout.reduced_offset(i);
        let xi = x.locus(i);
        for k in 0..layout.alleles(i) - 1 {
            out[roff + k] = xi[k] * (allele_mean_fitness(model, x, i, k) - mbar);
        }
    }
    out
}

pub(crate) fn mutation_drift_into(model: &ValidatedModel, augmented: &[f64], out: &mut [f64]) {
    let layout = model.layout();
    for i in 0..layout.num_loci() {
        let m = layout.alleles(i);
        let foff = layout.full_offset(i);
        let roff = layout.reduced_offset(i);
        let xi = &augmented[foff..foff + m];
        let locus = model.locus(i);
        match &locus.mutation_matrix {
            None => {
                let ubar: f64 = locus.mutation_rates.iter().sum();
                for k in 0..m - 1 {
                    out[roff + k] = locus.mutation_rates[k] - ubar * xi[k];
                }
            }
            Some(mat) => {
                for k in 0..m - 1 {
                    let mut s = 0.0;
                    for l in 0..m {
                        if l != k {
                            s += mat[(l, k)] * xi[l] - mat[(k, l)] * xi[k];
                        }
                    }
                    out[roff + k] = s;
                }
            }
        }
    }
}

/// Mutation drift in reduced coordinates. Parent-independent loci use
/// `u_k - u_bar x_k`; loci with a rate matrix use the balance
/// `sum_{l != k} (u_{lk} x_l - u_{kl} x_k)`.
pub fn mutation_drift(model: &ValidatedModel, x: &FrequencyState) -> Vec<f64> {
    let mut out = vec![0.0; model.layout().total_reduced()];
    mutation_drift_into(model, &x.augmented(), &mut out);
    out
}

pub(crate) fn full_drift_into(
    model: &ValidatedModel,
    augmented: &[f64],
    buf: &mut DriftBuffer,
    out: &mut [f64],
) {
    selection_drift_into(model, augmented, buf, out);
    let layout = model.layout();
    for i in 0..layout.num_loci() {
        let m = layout.alleles(i);
        let foff = layout.full_offset(i);
        let roff = layout.reduced_offset(i);
        let xi = &augmented[foff..foff + m];
        let locus = model.locus(i);
        match &locus.mutation_matrix {
            None => {
                let ubar: f64 = locus.mutation_rates.iter().sum();
                for k in 0..m - 1 {
                    out[roff + k] += locus.mutation_rates[k] - ubar * xi[k];
                }
            }
            Some(mat) => {
                for k in 0..m - 1 {
                    let mut s = 0.0;
                    for l in 0..m {
                        if l != k {
                            s += mat[(l, k)] * xi[l] - mat[(k, l)] * xi[k];
                        }
                    }
                    out[roff + k] += s;
                }
            }
        }
    }
}

/// Full drift `mu(x) + D(x) grad V(x)` in stacked reduced coordinates.
pub fn full_drift(model: &ValidatedModel, x: &FrequencyState) -> Vec<f64> {
    let mut buf = DriftBuffer::new(model);
    let mut out = vec![0.0; model.layout().total_reduced()];
    full_drift_into(model, &x.augmented(), &mut buf, &mut out);
    out
}

/// Drift limit over all `M_i` coordinates per locus (the reduced form plus
/// the implied last component), used by the scaling-limit checks.
pub fn drift_limit_full(model: &ValidatedModel, x: &FrequencyState) -> Vec<Vec<f64>> {
    let mbar = mean_fitness(model, x);
    (0..model.num_loci())
        .map(|i| {
            let xi = x.locus(i);
            let locus = model.locus(i);
            (0..locus.num_alleles)
                .map(|k| {
                    let mutation = match &locus.mutation_matrix {
                        None => {
                            let ubar: f64 = locus.mutation_rates.iter().sum();
                            locus.mutation_rates[k] - ubar * xi[k]
                        }
                        Some(mat) => (0..locus.num_alleles)
                            .filter(|&l| l != k)
                            .map(|l| mat[(l, k)] * xi[l] - mat[(k, l)] * xi[k])
                            .sum(),
                    };
                    mutation + xi[k] * (allele_mean_fitness(model, x, i, k) - mbar)
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_model, CouplingBlock, LocusSpec, ModelSpec};
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;
    use rand::Rng;

    fn pair_model(j11: f64) -> ValidatedModel {
        let spec = ModelSpec {
            loci: vec![
                LocusSpec::neutral(vec![0.5, 0.5]),
                LocusSpec::neutral(vec![0.5, 0.5]),
            ],
            couplings: vec![CouplingBlock {
                pair: (0, 1),
                values: dmatrix![j11, 0.0; 0.0, 0.0],
            }],
        };
        validate_model(&spec).unwrap()
    }

    fn state(per_locus: Vec<Vec<f64>>) -> FrequencyState {
        FrequencyState::new(per_locus).unwrap()
    }

    fn random_model(rng: &mut impl Rng, max_loci: usize, max_alleles: usize) -> ValidatedModel {
        let l = rng.random_range(1..=max_loci);
        let loci: Vec<LocusSpec> = (0..l)
            .map(|_| {
                let m = rng.random_range(2..=max_alleles);
                LocusSpec {
                    num_alleles: m,
                    mutation_rates: (0..m).map(|_| rng.random_range(0.05..2.0)).collect(),
                    fields: (0..m).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    mutation_matrix: None,
                }
            })
            .collect();
        let mut couplings = Vec::new();
        for i in 0..l {
            for j in (i + 1)..l {
                if rng.random_bool(0.7) {
                    let (mi, mj) = (loci[i].num_alleles, loci[j].num_alleles);
                    couplings.push(CouplingBlock {
                        pair: (i, j),
                        values: nalgebra::DMatrix::from_fn(mi, mj, |_, _| {
                            rng.random_range(-1.0..1.0)
                        }),
                    });
                }
            }
        }
        validate_model(&ModelSpec { loci, couplings }).unwrap()
    }

    fn random_interior(rng: &mut impl Rng, shape: &[usize]) -> FrequencyState {
        let per_locus = shape
            .iter()
            .map(|&m| {
                let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
                let sum: f64 = raw.iter().sum();
                // Mix toward uniform so every coordinate stays >= 0.05/M.
                let delta = 0.05;
                raw.iter()
                    .map(|v| (1.0 - delta * m as f64) * v / sum + delta)
                    .collect()
            })
            .collect();
        FrequencyState::new(per_locus).unwrap()
    }

    #[test]
    fn haplotype_fitness_examples() {
        let neutral = validate_model(&ModelSpec {
            loci: vec![
                LocusSpec::neutral(vec![0.5, 0.5]),
                LocusSpec::neutral(vec![0.5, 0.5]),
            ],
            couplings: vec![],
        })
        .unwrap();
        assert_eq!(haplotype_fitness(&neutral, &[0, 0]), 1.0);
        assert_eq!(haplotype_fitness(&neutral, &[1, 1]), 1.0);

        let mut spec = ModelSpec {
            loci: vec![
                LocusSpec::neutral(vec![0.5, 0.5]),
                LocusSpec::neutral(vec![0.5, 0.5]),
            ],
            couplings: vec![],
        };
        spec.loci[0].fields[0] = 0.2;
        let fielded = validate_model(&spec).unwrap();
        assert_abs_diff_eq!(haplotype_fitness(&fielded, &[0, 1]), 1.2);

        let coupled = pair_model(1.0);
        assert_eq!(haplotype_fitness(&coupled, &[0, 0]), 2.0);
        assert_eq!(haplotype_fitness(&coupled, &[1, 0]), 1.0);
    }

    #[test]
    fn haplotype_frequency_is_product_and_normalized() {
        let x = state(vec![vec![0.7, 0.3], vec![0.4, 0.6]]);
        assert_abs_diff_eq!(haplotype_frequency(&x, &[0, 1]), 0.42);

        let model = pair_model(0.0);
        let mut total = 0.0;
        for_each_haplotype(&model, |s| total += haplotype_frequency(&x, s)).unwrap();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-15);

        let boundary = state(vec![vec![0.0, 1.0], vec![0.4, 0.6]]);
        assert_eq!(haplotype_frequency(&boundary, &[0, 1]), 0.0);
    }

    #[test]
    fn conditional_frequency_examples() {
        let x = state(vec![vec![0.7, 0.3], vec![0.4, 0.6]]);
        assert_eq!(conditional_haplotype_frequency(&x, &[1, 0], 0, 0), 0.0);
        assert_abs_diff_eq!(conditional_haplotype_frequency(&x, &[0, 1], 0, 0), 0.6);

        // Conditional fractions sum to one over haplotypes with s_i = k.
        let model = random_model(&mut crate::seeds::stream_rng(3, 0), 3, 3);
        let x = random_interior(&mut crate::seeds::stream_rng(3, 1), model.shape());
        for i in 0..model.num_loci() {
            for k in 0..model.shape()[i] {
                let mut total = 0.0;
                for_each_haplotype(&model, |s| {
                    total += conditional_haplotype_frequency(&x, s, i, k);
                })
                .unwrap();
                assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn mean_fitness_examples() {
        let x = state(vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
        assert_eq!(mean_fitness(&pair_model(0.0), &x), 1.0);
        assert_abs_diff_eq!(mean_fitness(&pair_model(1.0), &x), 1.25);
        assert_abs_diff_eq!(mean_fitness_bruteforce(&pair_model(1.0), &x).unwrap(), 1.25);
        assert_abs_diff_eq!(allele_mean_fitness(&pair_model(1.0), &x, 0, 0), 1.5);
        assert_abs_diff_eq!(
            allele_mean_fitness_bruteforce(&pair_model(1.0), &x, 0, 0).unwrap(),
            1.5
        );
    }

    #[test]
    fn single_locus_mean_fitness() {
        let mut spec = ModelSpec {
            loci: vec![LocusSpec::neutral(vec![0.5, 0.5])],
            couplings: vec![],
        };
        spec.loci[0].fields = vec![0.4, -0.3];
        let model = validate_model(&spec).unwrap();
        let p = 0.3;
        let x = state(vec![vec![p, 1.0 - p]]);
        let expected = 1.0 + 0.4 * p - 0.3 * (1.0 - p);
        assert_abs_diff_eq!(mean_fitness(&model, &x), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(
            mean_fitness_bruteforce(&model, &x).unwrap(),
            expected,
            epsilon = 1e-15
        );
    }

    #[test]
    fn closed_forms_match_bruteforce_on_random_models() {
        let mut rng = crate::seeds::stream_rng(11, 0);
        for _ in 0..100 {
            let model = random_model(&mut rng, 4, 3);
            let x = random_interior(&mut rng, model.shape());
            let direct = mean_fitness(&model, &x);
            let brute = mean_fitness_bruteforce(&model, &x).unwrap();
            assert_abs_diff_eq!(direct, brute, epsilon = 1e-12);
            for i in 0..model.num_loci() {
                for k in 0..model.shape()[i] {
                    assert_abs_diff_eq!(
                        allele_mean_fitness(&model, &x, i, k),
                        allele_mean_fitness_bruteforce(&model, &x, i, k).unwrap(),
                        epsilon = 1e-12
                    );
                }
            }
        }
    }

    #[test]
    fn allele_means_average_to_mean_fitness() {
        let mut rng = crate::seeds::stream_rng(12, 0);
        for _ in 0..50 {
            let model = random_model(&mut rng, 4, 4);
            let x = random_interior(&mut rng, model.shape());
            let mbar = mean_fitness(&model, &x);
            for i in 0..model.num_loci() {
                let total: f64 = (0..model.shape()[i])
                    .map(|k| x.locus(i)[k] * (allele_mean_fitness(&model, &x, i, k) - mbar))
                    .sum();
                assert_abs_diff_eq!(total, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn potential_examples() {
        let x = state(vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
        assert_abs_diff_eq!(potential(&pair_model(2.0), &x), 0.5);
        assert_eq!(potential(&pair_model(0.0), &x), 0.0);
    }

    #[test]
    fn potential_matches_pairwise_products_on_four_loci() {
        // All-biallelic four-locus model with J(1,1)-only couplings: V is the
        // sum of h_ij x_i x_j over the coupled pairs.
        let hs = [
            ((0usize, 1usize), 0.4),
            ((0, 2), -0.2),
            ((0, 3), 0.9),
            ((1, 2), 0.7),
            ((1, 3), -1.1),
            ((2, 3), 0.3),
        ];
        let couplings = hs
            .iter()
            .map(|&((i, j), h)| CouplingBlock {
                pair: (i, j),
                values: dmatrix![h, 0.0; 0.0, 0.0],
            })
            .collect();
        let spec = ModelSpec {
            loci: (0..4).map(|_| LocusSpec::neutral(vec![0.5, 0.5])).collect(),
            couplings,
        };
        let model = validate_model(&spec).unwrap();
        let xs = [0.3, 0.8, 0.55, 0.15];
        let x = state(xs.iter().map(|&v| vec![v, 1.0 - v]).collect());
        let expected: f64 = hs.iter().map(|&((i, j), h)| h * xs[i] * xs[j]).sum();
        assert_abs_diff_eq!(potential(&model, &x), expected, epsilon = 1e-15);
    }

    #[test]
    fn gradient_examples() {
        let h = 2.0;
        let model = pair_model(h);
        let x = state(vec![vec![0.3, 0.7], vec![0.8, 0.2]]);
        let g = potential_gradient(&model, &x);
        assert_abs_diff_eq!(g[0], h * 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], h * 0.3, epsilon = 1e-15);

        let zero = pair_model(0.0);
        assert!(potential_gradient(&zero, &x).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = crate::seeds::stream_rng(13, 0);
        let step = 1e-6;
        for _ in 0..50 {
            let model = random_model(&mut rng, 4, 4);
            let x = random_interior(&mut rng, model.shape());
            let grad = potential_gradient(&model, &x);
            let layout = model.layout();
            let aug = x.augmented();
            for i in 0..layout.num_loci() {
                let m = layout.alleles(i);
                for l in 0..m - 1 {
                    let mut plus = aug.clone();
                    let mut minus = aug.clone();
                    let idx = layout.full_offset(i) + l;
                    let last = layout.full_offset(i) + m - 1;
                    plus[idx] += step;
                    plus[last] -= step;
                    minus[idx] -= step;
                    minus[last] += step;
                    let fd = (potential_augmented(&model, &plus)
                        - potential_augmented(&model, &minus))
                        / (2.0 * step);
                    let g = grad[layout.reduced_offset(i) + l];
                    assert!(
                        (fd - g).abs() <= 1e-6 * g.abs().max(1.0),
                        "fd {fd} vs analytic {g}"
                    );
                }
            }
        }
    }

    #[test]
    fn selection_drift_examples() {
        // h x (1-x) y at the symmetric point.
        let x = state(vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
        let g = selection_drift(&pair_model(2.0), &x);
        assert_abs_diff_eq!(g[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], 0.25, epsilon = 1e-15);

        let g = selection_drift(&pair_model(1.0), &x);
        let g2 = selection_drift_mean_fitness(&pair_model(1.0), &x);
        assert_abs_diff_eq!(g[0], 0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(g2[0], 0.125, epsilon = 1e-15);
    }

    #[test]
    fn selection_drift_vanishes_at_fixation() {
        let model = pair_model(1.5);
        let x = state(vec![vec![1.0, 0.0], vec![0.4, 0.6]]);
        let g = selection_drift(&model, &x);
        assert_eq!(g[0], 0.0);
    }

    #[test]
    fn selection_drift_routes_agree() {
        let mut rng = crate::seeds::stream_rng(14, 0);
        for _ in 0..100 {
            let model = random_model(&mut rng, 4, 4);
            let x = random_interior(&mut rng, model.shape());
            let m1 = selection_drift(&model, &x);
            let m2 = selection_drift_mean_fitness(&model, &x);
            for (a, b) in m1.iter().zip(&m2) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn diffusion_times_gradient_identity() {
        // sum_l d_kl V'_l = x_k (V'_k - sum_l x_l V'_l) for any V.
        let mut rng = crate::seeds::stream_rng(15, 0);
        for _ in 0..50 {
            let model = random_model(&mut rng, 3, 4);
            let x = random_interior(&mut rng, model.shape());
            let grad = potential_gradient(&model, &x);
            let drift = selection_drift(&model, &x);
            let layout = model.layout();
            for i in 0..layout.num_loci() {
                let m = layout.alleles(i);
                let roff = layout.reduced_offset(i);
                let xi = x.locus(i);
                let dot: f64 = (0..m - 1).map(|l| xi[l] * grad[roff + l]).sum();
                for k in 0..m - 1 {
                    let rhs = xi[k] * (grad[roff + k] - dot);
                    assert_abs_diff_eq!(drift[roff + k], rhs, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn mutation_drift_examples() {
        let mut spec = ModelSpec {
            loci: vec![LocusSpec::neutral(vec![0.5, 0.5])],
            couplings: vec![],
        };
        let model = validate_model(&spec).unwrap();
        let x = state(vec![vec![0.5, 0.5]]);
        assert_eq!(mutation_drift(&model, &x)[0], 0.0);

        spec.loci[0].mutation_rates = vec![1.0, 2.0];
        let model = validate_model(&spec).unwrap();
        let x = state(vec![vec![0.25, 0.75]]);
        assert_abs_diff_eq!(mutation_drift(&model, &x)[0], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn parent_dependent_reduces_to_parent_independent() {
        let mut rng = crate::seeds::stream_rng(16, 0);
        for _ in 0..20 {
            let m = rng.random_range(2..=4usize);
            let rates: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..2.0)).collect();
            let matrix = nalgebra::DMatrix::from_fn(m, m, |_, to| rates[to]);
            let pi = validate_model(&ModelSpec {
                loci: vec![LocusSpec::neutral(rates.clone())],
                couplings: vec![],
            })
            .unwrap();
            let pd = validate_model(&ModelSpec {
                loci: vec![LocusSpec {
                    num_alleles: m,
                    mutation_rates: rates,
                    fields: vec![0.0; m],
                    mutation_matrix: Some(matrix),
                }],
                couplings: vec![],
            })
            .unwrap();
            let x = random_interior(&mut rng, pi.shape());
            let a = mutation_drift(&pi, &x);
            let b = mutation_drift(&pd, &x);
            for (u, v) in a.iter().zip(&b) {
                assert_abs_diff_eq!(u, v, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn full_drift_examples() {
        let model = pair_model(1.0);
        let x = state(vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
        let drift = full_drift(&model, &x);
        assert_abs_diff_eq!(drift[0], 0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(drift[1], 0.125, epsilon = 1e-15);
    }

    #[test]
    fn full_drift_matches_two_locus_sde_form() {
        // u1 - (u1 + u2) x + h x (1 - x) y, componentwise for both loci.
        let h = 0.8;
        let spec = ModelSpec {
            loci: vec![
                LocusSpec::neutral(vec![0.3, 0.9]),
                LocusSpec::neutral(vec![1.2, 0.4]),
            ],
            couplings: vec![CouplingBlock {
                pair: (0, 1),
                values: dmatrix![h, 0.0; 0.0, 0.0],
            }],
        };
        let model = validate_model(&spec).unwrap();
        for &(p, q) in &[(0.2, 0.7), (0.5, 0.5), (0.9, 0.1)] {
            let x = state(vec![vec![p, 1.0 - p], vec![q, 1.0 - q]]);
            let drift = full_drift(&model, &x);
            let expect0 = 0.3 - (0.3 + 0.9) * p + h * p * (1.0 - p) * q;
            let expect1 = 1.2 - (1.2 + 0.4) * q + h * q * (1.0 - q) * p;
            assert_abs_diff_eq!(drift[0], expect0, epsilon = 1e-14);
            assert_abs_diff_eq!(drift[1], expect1, epsilon = 1e-14);
        }
    }

    #[test]
    fn drift_limit_full_conserves_total_frequency() {
        let mut rng = crate::seeds::stream_rng(17, 0);
        for _ in 0..20 {
            let model = random_model(&mut rng, 3, 4);
            let x = random_interior(&mut rng, model.shape());
            let full = drift_limit_full(&model, &x);
            let reduced = full_drift(&model, &x);
            let layout = model.layout();
            for (i, locus_drift) in full.iter().enumerate() {
                let total: f64 = locus_drift.iter().sum();
                assert_abs_diff_eq!(total, 0.0, epsilon = 1e-12);
                for k in 0..layout.alleles(i) - 1 {
                    assert_abs_diff_eq!(
                        locus_drift[k],
                        reduced[layout.reduced_offset(i) + k],
                        epsilon = 1e-12
                    );
                }
            }
        }
    }

    #[test]
    fn bruteforce_guard_rejects_huge_models() {
        let loci: Vec<LocusSpec> = (0..21)
            .map(|_| LocusSpec::neutral(vec![0.5, 0.5]))
            .collect();
        let model = validate_model(&ModelSpec {
            loci,
            couplings: vec![],
        })
        .unwrap();
        let x = FrequencyState::uniform(model.shape());
        assert!(matches!(
            mean_fitness_bruteforce(&model, &x),
            Err(Error::ModelTooLarge { .. })
        ));
    }
}
