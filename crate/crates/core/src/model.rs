//! Model parameterization and validation.
//!
//! A model is a list of loci (allele count, mutation rates, selection fields)
//! plus pairwise coupling blocks between loci. Validation enforces the three
//! standing assumptions: strictly positive mutation rates, transpose symmetry
//! of coupling blocks, and shape consistency. A [`ValidatedModel`] is the
//! handle every other module takes; it is immutable and freely shareable
//! across threads.
//!
//! Locus and allele indices are 0-based everywhere in the API. Model files
//! and all other user-facing I/O are 1-based.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};

/// Tolerance for the per-locus sum of a frequency vector.
pub const SIMPLEX_SUM_TOL: f64 = 1e-12;

// ── Raw specification ────────────────────────────────────────────────────────

/// One locus: `M_i >= 2` alleles, diffusion-scaled mutation rates `u_k > 0`,
/// and a selection field `h_i(k)` per allele.
#[derive(Debug, Clone, PartialEq)]
pub struct LocusSpec {
    pub num_alleles: usize,
    /// Target-allele mutation rates (parent-independent, dimensionless).
    pub mutation_rates: Vec<f64>,
    /// Single-locus selection strengths, one per allele.
    pub fields: Vec<f64>,
    /// Optional parent-dependent mutation rates `u[from][to]` for chain mode.
    /// The diagonal is ignored; off-diagonal entries must be non-negative.
    pub mutation_matrix: Option<DMatrix<f64>>,
}

impl LocusSpec {
    /// Neutral locus: given mutation rates, zero field, parent-independent.
    pub fn neutral(mutation_rates: Vec<f64>) -> Self {
        let m = mutation_rates.len();
        LocusSpec {
            num_alleles: m,
            mutation_rates,
            fields: vec![0.0; m],
            mutation_matrix: None,
        }
    }
}

/// A pairwise coupling block `J_{ij}(k, m)` between two distinct loci,
/// as provided by the user (either orientation).
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingBlock {
    /// Locus pair `(i, j)`, 0-based; `values` has shape `M_i x M_j`.
    pub pair: (usize, usize),
    pub values: DMatrix<f64>,
}

/// The raw, unvalidated model: loci plus coupling blocks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelSpec {
    pub loci: Vec<LocusSpec>,
    pub couplings: Vec<CouplingBlock>,
}

// ── JSON model files ─────────────────────────────────────────────────────────

#[derive(Serialize, Deserialize)]
struct LocusFile {
    alleles: usize,
    mutation: Vec<f64>,
    h: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mutation_matrix: Option<Vec<Vec<f64>>>,
}

#[derive(Serialize, Deserialize)]
struct CouplingFile {
    i: usize,
    j: usize,
    #[serde(rename = "J")]
    block: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    loci: Vec<LocusFile>,
    #[serde(default)]
    couplings: Vec<CouplingFile>,
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(nrows, ncols, |r, c| {
        rows[r].get(c).copied().unwrap_or(f64::NAN)
    })
}

impl ModelSpec {
    /// Parse a JSON model document. Locus indices in the file are 1-based.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        let loci = file
            .loci
            .into_iter()
            .map(|l| LocusSpec {
                num_alleles: l.alleles,
                mutation_rates: l.mutation,
                fields: l.h,
                mutation_matrix: l.mutation_matrix.as_deref().map(rows_to_matrix),
            })
            .collect();
        let couplings = file
            .couplings
            .into_iter()
            .map(|c| {
                let i = c.i.checked_sub(1).ok_or(Error::Domain(
                    "locus indices in model files are 1-based".into(),
                ))?;
                let j = c.j.checked_sub(1).ok_or(Error::Domain(
                    "locus indices in model files are 1-based".into(),
                ))?;
                Ok(CouplingBlock {
                    pair: (i, j),
                    values: rows_to_matrix(&c.block),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ModelSpec { loci, couplings })
    }

    pub fn from_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> String {
        let file = ModelFile {
            loci: self
                .loci
                .iter()
                .map(|l| LocusFile {
                    alleles: l.num_alleles,
                    mutation: l.mutation_rates.clone(),
                    h: l.fields.clone(),
                    mutation_matrix: l.mutation_matrix.as_ref().map(|m| {
                        (0..m.nrows())
                            .map(|r| m.row(r).iter().copied().collect())
                            .collect()
                    }),
                })
                .collect(),
            couplings: self
                .couplings
                .iter()
                .map(|c| CouplingFile {
                    i: c.pair.0 + 1,
                    j: c.pair.1 + 1,
                    block: (0..c.values.nrows())
                        .map(|r| c.values.row(r).iter().copied().collect())
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("model serialization cannot fail")
    }
}

// ── States ───────────────────────────────────────────────────────────────────

/// Allele frequencies on the product of simplices: one probability vector of
/// length `M_i` per locus. All `M_i` coordinates are stored; reduced views
/// (dropping the last coordinate per locus) are derived on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyState {
    per_locus: Vec<Vec<f64>>,
}

impl FrequencyState {
    /// Checks every coordinate lies in `[0, 1]` and each locus sums to 1
    /// within [`SIMPLEX_SUM_TOL`].
    pub fn new(per_locus: Vec<Vec<f64>>) -> Result<Self> {
        for (i, x) in per_locus.iter().enumerate() {
            if x.len() < 2 {
                return Err(Error::InvalidState(format!(
                    "locus {} has {} coordinate(s)",
                    i + 1,
                    x.len()
                )));
            }
            if x.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::InvalidState(format!(
                    "locus {} has a coordinate outside [0, 1]",
                    i + 1
                )));
            }
            let sum: f64 = x.iter().sum();
            if (sum - 1.0).abs() > SIMPLEX_SUM_TOL {
                return Err(Error::InvalidState(format!(
                    "locus {} coordinates sum to {sum}, expected 1",
                    i + 1
                )));
            }
        }
        Ok(FrequencyState { per_locus })
    }

    /// Uniform frequencies `1/M_i` at every locus.
    pub fn uniform(shape: &[usize]) -> Self {
        FrequencyState {
            per_locus: shape.iter().map(|&m| vec![1.0 / m as f64; m]).collect(),
        }
    }

    pub(crate) fn from_raw_unchecked(per_locus: Vec<Vec<f64>>) -> Self {
        FrequencyState { per_locus }
    }

    pub fn num_loci(&self) -> usize {
        self.per_locus.len()
    }

    pub fn locus(&self, i: usize) -> &[f64] {
        &self.per_locus[i]
    }

    pub fn per_locus(&self) -> &[Vec<f64>] {
        &self.per_locus
    }

    pub fn shape(&self) -> Vec<usize> {
        self.per_locus.iter().map(Vec::len).collect()
    }

    /// Stacked vector of all `M_i` coordinates, locus by locus.
    pub fn augmented(&self) -> Vec<f64> {
        self.per_locus.iter().flatten().copied().collect()
    }

    /// Stacked vector of the first `M_i - 1` coordinates per locus.
    pub fn reduced(&self) -> Vec<f64> {
        self.per_locus
            .iter()
            .flat_map(|x| x[..x.len() - 1].iter().copied())
            .collect()
    }
}

/// Integer allele counts per locus, each locus summing to the population
/// size `N`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancyState {
    per_locus: Vec<Vec<u64>>,
    population_size: u64,
}

impl OccupancyState {
    pub fn new(per_locus: Vec<Vec<u64>>, population_size: u64) -> Result<Self> {
        for (i, counts) in per_locus.iter().enumerate() {
            let got: u64 = counts.iter().sum();
            if got != population_size {
                return Err(Error::CountSumMismatch {
                    locus: i + 1,
                    got,
                    expected: population_size,
                });
            }
        }
        Ok(OccupancyState {
            per_locus,
            population_size,
        })
    }

    /// The most even split of `n` individuals over each locus, remainders
    /// assigned to the lowest allele indices.
    pub fn even(shape: &[usize], n: u64) -> Self {
        let per_locus = shape
            .iter()
            .map(|&m| {
                let base = n / m as u64;
                let extra = (n % m as u64) as usize;
                (0..m)
                    .map(|k| base + u64::from(k < extra))
                    .collect::<Vec<_>>()
            })
            .collect();
        OccupancyState {
            per_locus,
            population_size: n,
        }
    }

    pub fn population_size(&self) -> u64 {
        self.population_size
    }

    pub fn num_loci(&self) -> usize {
        self.per_locus.len()
    }

    pub fn locus(&self, i: usize) -> &[u64] {
        &self.per_locus[i]
    }

    pub fn per_locus(&self) -> &[Vec<u64>] {
        &self.per_locus
    }
}

/// Exact division `j_k / N` per coordinate.
pub fn occupancy_to_frequency(j: &OccupancyState) -> FrequencyState {
    let n = j.population_size() as f64;
    FrequencyState {
        per_locus: j
            .per_locus
            .iter()
            .map(|counts| counts.iter().map(|&c| c as f64 / n).collect())
            .collect(),
    }
}

// ── Layout ───────────────────────────────────────────────────────────────────

/// Offsets of each locus inside the stacked full (`sum M_i`) and reduced
/// (`sum (M_i - 1)`) coordinate vectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    shape: Vec<usize>,
    full_offsets: Vec<usize>,
    reduced_offsets: Vec<usize>,
    total_full: usize,
    total_reduced: usize,
}

impl Layout {
    pub fn new(shape: Vec<usize>) -> Self {
        let mut full_offsets = Vec::with_capacity(shape.len());
        let mut reduced_offsets = Vec::with_capacity(shape.len());
        let (mut f, mut r) = (0, 0);
        for &m in &shape {
            full_offsets.push(f);
            reduced_offsets.push(r);
            f += m;
            r += m - 1;
        }
        Layout {
            shape,
            full_offsets,
            reduced_offsets,
            total_full: f,
            total_reduced: r,
        }
    }

    pub fn num_loci(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn alleles(&self, locus: usize) -> usize {
        self.shape[locus]
    }

    pub fn full_offset(&self, locus: usize) -> usize {
        self.full_offsets[locus]
    }

    pub fn reduced_offset(&self, locus: usize) -> usize {
        self.reduced_offsets[locus]
    }

    pub fn total_full(&self) -> usize {
        self.total_full
    }

    pub fn total_reduced(&self) -> usize {
        self.total_reduced
    }
}

// ── Coupling matrix and interaction graph ────────────────────────────────────

/// The symmetric `sum M_i x sum M_i` block matrix `A`: block `(i, j)` holds
/// `J_{ij}`, diagonal blocks are identically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    matrix: DMatrix<f64>,
    layout: Layout,
}

impl CouplingMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn block(&self, i: usize, j: usize) -> DMatrix<f64> {
        let (fi, fj) = (self.layout.full_offset(i), self.layout.full_offset(j));
        self.matrix
            .view((fi, fj), (self.layout.alleles(i), self.layout.alleles(j)))
            .into_owned()
    }

    /// Exact (bitwise) zero test on the stored block.
    pub fn block_is_zero(&self, i: usize, j: usize) -> bool {
        let (fi, fj) = (self.layout.full_offset(i), self.layout.full_offset(j));
        self.matrix
            .view((fi, fj), (self.layout.alleles(i), self.layout.alleles(j)))
            .iter()
            .all(|&v| v == 0.0)
    }
}

/// Undirected locus interaction graph: edge `(i, j)` iff block `J_{ij}` has
/// any nonzero entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionGraph {
    num_nodes: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl InteractionGraph {
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Edges as ordered pairs `(i, j)` with `i < j`, 0-based.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        let key = (i.min(j), i.max(j));
        self.edges.contains(&key)
    }

    /// Graphviz DOT text with 1-based locus labels. All nodes are listed so
    /// isolated loci stay visible.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("graph G {\n");
        for v in 0..self.num_nodes {
            let _ = writeln!(out, "  \"{}\";", v + 1);
        }
        for &(i, j) in &self.edges {
            let _ = writeln!(out, "  \"{}\" -- \"{}\";", i + 1, j + 1);
        }
        out.push_str("}\n");
        out
    }
}

// ── Validation ───────────────────────────────────────────────────────────────

/// A model that passed [`validate_model`]. Couplings are held once per
/// unordered pair with the transpose implicit, so the block symmetry cannot
/// be violated afterwards. The assembled coupling matrix and stacked field
/// vector are precomputed for the drift evaluations downstream.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedModel {
    loci: Vec<LocusSpec>,
    /// Canonical blocks keyed by `(i, j)` with `i < j`.
    couplings: Vec<CouplingBlock>,
    layout: Layout,
    coupling_matrix: CouplingMatrix,
    field_vector: DVector<f64>,
}

impl ValidatedModel {
    pub fn num_loci(&self) -> usize {
        self.loci.len()
    }

    pub fn shape(&self) -> &[usize] {
        self.layout.shape()
    }

    pub fn locus(&self, i: usize) -> &LocusSpec {
        &self.loci[i]
    }

    pub fn loci(&self) -> &[LocusSpec] {
        &self.loci
    }

    /// Canonical coupling blocks, one per unordered pair, `i < j`.
    pub fn couplings(&self) -> &[CouplingBlock] {
        &self.couplings
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn coupling_matrix(&self) -> &CouplingMatrix {
        &self.coupling_matrix
    }

    /// Stacked field vector `h`, one entry per (locus, allele).
    pub fn field_vector(&self) -> &DVector<f64> {
        &self.field_vector
    }

    /// Total mutation rate `u_bar = sum_k u_k` at one locus.
    pub fn total_mutation_rate(&self, locus: usize) -> f64 {
        self.loci[locus].mutation_rates.iter().sum()
    }

    /// True when no locus carries a parent-dependent mutation matrix.
    pub fn is_parent_independent(&self) -> bool {
        self.loci.iter().all(|l| l.mutation_matrix.is_none())
    }

    /// Number of haplotypes `prod M_i` as a float (may overflow usize).
    pub fn num_haplotypes(&self) -> f64 {
        self.shape().iter().map(|&m| m as f64).product()
    }
}

/// Checks every standing assumption and returns a handle, or the full list
/// of violations.
pub fn validate_model(spec: &ModelSpec) -> Result<ValidatedModel> {
    let mut violations = Vec::new();
    for (i, locus) in spec.loci.iter().enumerate() {
        if locus.num_alleles < 2 {
            violations.push(Violation::TooFewAlleles {
                locus: i + 1,
                alleles: locus.num_alleles,
            });
        }
        if locus.mutation_rates.len() != locus.num_alleles {
            violations.push(Violation::DimensionMismatch {
                what: "mutation rate vector",
                i: i + 1,
                j: i + 1,
                rows: locus.mutation_rates.len(),
                cols: 1,
                want_rows: locus.num_alleles,
                want_cols: 1,
            });
        }
        if locus.fields.len() != locus.num_alleles {
            violations.push(Violation::DimensionMismatch {
                what: "field vector",
                i: i + 1,
                j: i + 1,
                rows: locus.fields.len(),
                cols: 1,
                want_rows: locus.num_alleles,
                want_cols: 1,
            });
        }
        for (k, &u) in locus.mutation_rates.iter().enumerate() {
            if u <= 0.0 || u.is_nan() {
                violations.push(Violation::NonPositiveMutation {
                    locus: i + 1,
                    allele: k + 1,
                    value: u,
                });
            }
        }
        if let Some(mat) = &locus.mutation_matrix {
            if mat.nrows() != locus.num_alleles || mat.ncols() != locus.num_alleles {
                violations.push(Violation::DimensionMismatch {
                    what: "parent-dependent mutation matrix",
                    i: i + 1,
                    j: i + 1,
                    rows: mat.nrows(),
                    cols: mat.ncols(),
                    want_rows: locus.num_alleles,
                    want_cols: locus.num_alleles,
                });
            } else {
                for from in 0..mat.nrows() {
                    for to in 0..mat.ncols() {
                        if from != to && mat[(from, to)] < 0.0 {
                            violations.push(Violation::NegativeParentDependentRate {
                                locus: i + 1,
                                from: from + 1,
                                to: to + 1,
                                value: mat[(from, to)],
                            });
                        }
                    }
                }
            }
        }
    }

    // Group the raw blocks by unordered pair; both orientations may be given
    // and must then be mutual transposes.
    let num_loci = spec.loci.len();
    let mut canonical: Vec<CouplingBlock> = Vec::new();
    let mut seen: BTreeSet<(usize, usize)> = BTreeSet::new();
    for block in &spec.couplings {
        let (i, j) = block.pair;
        if i >= num_loci || j >= num_loci {
            violations.push(Violation::DimensionMismatch {
                what: "coupling block (locus index out of range)",
                i: i + 1,
                j: j + 1,
                rows: block.values.nrows(),
                cols: block.values.ncols(),
                want_rows: 0,
                want_cols: 0,
            });
            continue;
        }
        if i == j {
            violations.push(Violation::SelfCoupling { locus: i + 1 });
            continue;
        }
        let (mi, mj) = (spec.loci[i].num_alleles, spec.loci[j].num_alleles);
        if block.values.nrows() != mi || block.values.ncols() != mj {
            violations.push(Violation::DimensionMismatch {
                what: "coupling block",
                i: i + 1,
                j: j + 1,
                rows: block.values.nrows(),
                cols: block.values.ncols(),
                want_rows: mi,
                want_cols: mj,
            });
            continue;
        }
        let key = (i.min(j), i.max(j));
        let forward = if i < j {
            block.values.clone()
        } else {
            block.values.transpose()
        };
        if let Some(existing) = canonical.iter().find(|c| c.pair == key) {
            if seen.contains(&block.pair) {
                violations.push(Violation::DuplicateCoupling {
                    i: key.0 + 1,
                    j: key.1 + 1,
                });
                continue;
            }
            // Opposite orientation of an already-stored pair: must agree
            // entrywise with the transpose.
            let mut symmetric = true;
            'outer: for k in 0..existing.values.nrows() {
                for m in 0..existing.values.ncols() {
                    let (a, b) = (existing.values[(k, m)], forward[(k, m)]);
                    if a != b {
                        violations.push(Violation::AsymmetricCoupling {
                            i: key.0 + 1,
                            j: key.1 + 1,
                            k: k + 1,
                            m: m + 1,
                            forward: a,
                            backward: b,
                        });
                        symmetric = false;
                        break 'outer;
                    }
                }
            }
            if !symmetric {
                continue;
            }
        } else {
            canonical.push(CouplingBlock {
                pair: key,
                values: forward,
            });
        }
        seen.insert(block.pair);
    }

    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }

    let layout = Layout::new(spec.loci.iter().map(|l| l.num_alleles).collect());
    let field_vector = DVector::from_iterator(
        layout.total_full(),
        spec.loci.iter().flat_map(|l| l.fields.iter().copied()),
    );
    let validated_couplings = canonical;
    let coupling_matrix = assemble_coupling_matrix(&layout, &validated_couplings);
    Ok(ValidatedModel {
        loci: spec.loci.clone(),
        couplings: validated_couplings,
        layout,
        coupling_matrix,
        field_vector,
    })
}

fn assemble_coupling_matrix(layout: &Layout, couplings: &[CouplingBlock]) -> CouplingMatrix {
    let n = layout.total_full();
    let mut a = DMatrix::zeros(n, n);
    for block in couplings {
        let (i, j) = block.pair;
        let (fi, fj) = (layout.full_offset(i), layout.full_offset(j));
        for k in 0..block.values.nrows() {
            for m in 0..block.values.ncols() {
                let v = block.values[(k, m)];
                a[(fi + k, fj + m)] = v;
                a[(fj + m, fi + k)] = v;
            }
        }
    }
    CouplingMatrix {
        matrix: a,
        layout: layout.clone(),
    }
}

/// Assembles the symmetric block matrix `A` from the canonical couplings.
pub fn build_coupling_matrix(model: &ValidatedModel) -> CouplingMatrix {
    assemble_coupling_matrix(&model.layout, &model.couplings)
}

/// Edge `(i, j)` present iff block `J_{ij}` has any nonzero stored entry.
pub fn interaction_graph(a: &CouplingMatrix) -> InteractionGraph {
    let l = a.layout().num_loci();
    let mut edges = BTreeSet::new();
    for i in 0..l {
        for j in (i + 1)..l {
            if !a.block_is_zero(i, j) {
                edges.insert((i, j));
            }
        }
    }
    InteractionGraph {
        num_nodes: l,
        edges,
    }
}

/// Builds a coupling set from an explicit edge list `(i, j, block)`. The
/// block is stored once for the unordered pair; its transpose serves the
/// reversed pair, so symmetry holds by construction.
pub fn graph_to_couplings(
    loci: &[LocusSpec],
    edges: &[(usize, usize, DMatrix<f64>)],
) -> Result<Vec<CouplingBlock>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(edges.len());
    for (i, j, block) in edges {
        let (i, j) = (*i, *j);
        if i == j {
            return Err(Error::Validation(vec![Violation::SelfCoupling {
                locus: i + 1,
            }]));
        }
        let key = (i.min(j), i.max(j));
        if !seen.insert(key) {
            return Err(Error::DuplicateEdge {
                i: key.0 + 1,
                j: key.1 + 1,
            });
        }
        let (mi, mj) = (loci[i].num_alleles, loci[j].num_alleles);
        if block.nrows() != mi || block.ncols() != mj {
            return Err(Error::Validation(vec![Violation::DimensionMismatch {
                what: "coupling block",
                i: i + 1,
                j: j + 1,
                rows: block.nrows(),
                cols: block.ncols(),
                want_rows: mi,
                want_cols: mj,
            }]));
        }
        let values = if i < j {
            block.clone()
        } else {
            block.transpose()
        };
        out.push(CouplingBlock { pair: key, values });
    }
    Ok(out)
}
