//! The genetic-drift (diffusion) matrix and the Euler-Maruyama integrator
//! for the limiting SDE `dX = mu dt + D grad V dt + D^{1/2} dW`.
//!
//! Per locus, in reduced coordinates, `d_kk = x_k (1 - x_k)` and
//! `d_kl = -x_k x_l`; the full diffusion matrix is block diagonal over loci.
//! The law of the SDE only fixes `B B' = D`, so any factor works; we use a
//! Cholesky factor with non-positive pivots clamped to zero, which stays
//! defined on the simplex boundary where `D` is singular.
//!
//! The integrator steps the reduced coordinates and rebuilds the last
//! coordinate per locus. A step can overshoot the simplex; negative
//! coordinates are clamped to zero and the locus renormalized, and the
//! number of clamped coordinates is counted so an overly large `dt` shows
//! up in the trajectory report.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::exec;
use crate::fitness::{full_drift_into, DriftBuffer};
use crate::model::{FrequencyState, ValidatedModel};
use crate::seeds::stream_rng;
use crate::trajectory::Trajectory;

/// Reduced-coordinate diffusion block `D^(i)(x)` of one locus.
pub fn diffusion_matrix(x: &FrequencyState, locus: usize) -> DMatrix<f64> {
    let xi = x.locus(locus);
    let m = xi.len() - 1;
    DMatrix::from_fn(m, m, |k, l| {
        if k == l {
            xi[k] * (1.0 - xi[k])
        } else {
            -xi[k] * xi[l]
        }
    })
}

/// Explicit inverse `(D^(i))^{-1}` with entries `delta_kl / x_l + 1 / x_M`.
/// Exists only away from the simplex facets.
pub fn diffusion_matrix_inverse(x: &FrequencyState, locus: usize) -> Result<DMatrix<f64>> {
    let xi = x.locus(locus);
    for (k, &v) in xi.iter().enumerate() {
        if v <= 0.0 {
            return Err(Error::SingularAtBoundary {
                locus: locus + 1,
                coordinate: k + 1,
                value: v,
            });
        }
    }
    let m = xi.len() - 1;
    let last = 1.0 / xi[m];
    Ok(DMatrix::from_fn(m, m, |k, l| {
        if k == l {
            1.0 / xi[k] + last
        } else {
            last
        }
    }))
}

/// In-place lower Cholesky with non-positive pivots clamped to zero;
/// columns with a clamped pivot are zeroed. Input must be symmetric.
fn cholesky_clamped(a: &mut [f64], n: usize) {
    for j in 0..n {
        let mut pivot = a[j * n + j];
        for k in 0..j {
            pivot -= a[j * n + k] * a[j * n + k];
        }
        if pivot > 0.0 {
            let root = pivot.sqrt();
            a[j * n + j] = root;
            for i in (j + 1)..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= a[i * n + k] * a[j * n + k];
                }
                a[i * n + j] = s / root;
            }
        } else {
            a[j * n + j] = 0.0;
            for i in (j + 1)..n {
                a[i * n + j] = 0.0;
            }
        }
        for i in 0..j {
            a[i * n + j] = 0.0;
        }
    }
}

/// Lower-triangular `B` with `B B' = D^(i)(x)` up to clamping of rounding
/// noise at the boundary.
pub fn diffusion_matrix_factor(x: &FrequencyState, locus: usize) -> DMatrix<f64> {
    let d = diffusion_matrix(x, locus);
    let m = d.nrows();
    let mut buf: Vec<f64> = (0..m * m).map(|i| d[(i / m, i % m)]).collect();
    cholesky_clamped(&mut buf, m);
    DMatrix::from_fn(m, m, |k, l| buf[k * m + l])
}

/// Result of one integrator step.
#[derive(Debug, Clone)]
pub struct EmStep {
    pub state: FrequencyState,
    /// Coordinates clamped back to zero during the simplex projection.
    pub clamped: u64,
}

/// Reusable scratch for the integrator.
struct Stepper<'a> {
    model: &'a ValidatedModel,
    dt: f64,
    sqrt_dt: f64,
    drift_buf: DriftBuffer,
    drift: Vec<f64>,
    /// Per-locus Cholesky scratch, sized for the largest locus.
    chol: Vec<f64>,
    kick: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(model: &'a ValidatedModel, dt: f64) -> Self {
        assert!(dt > 0.0, "dt must be positive");
        let max_m = model.shape().iter().copied().max().unwrap_or(2);
        Stepper {
            model,
            dt,
            sqrt_dt: dt.sqrt(),
            drift_buf: DriftBuffer::new(model),
            drift: vec![0.0; model.layout().total_reduced()],
            chol: vec![0.0; (max_m - 1) * (max_m - 1)],
            kick: vec![0.0; max_m - 1],
        }
    }

    /// Advances `aug` (stacked full coordinates) by one step; `noise` holds
    /// one standard normal per reduced coordinate. Returns the number of
    /// clamped coordinates.
    fn advance(&mut self, aug: &mut [f64], noise: &[f64]) -> Result<u64> {
        full_drift_into(self.model, aug, &mut self.drift_buf, &mut self.drift);
        let layout = self.model.layout();
        let mut clamped = 0u64;
        for i in 0..layout.num_loci() {
            let m = layout.alleles(i);
            let foff = layout.full_offset(i);
            let roff = layout.reduced_offset(i);
            let red = m - 1;
            {
                let xi = &aug[foff..foff + m];
                for k in 0..red {
                    for l in 0..red {
                        self.chol[k * red + l] = if k == l {
                            xi[k] * (1.0 - xi[k])
                        } else {
                            -xi[k] * xi[l]
                        };
                    }
                }
            }
            cholesky_clamped(&mut self.chol, red);
            for k in 0..red {
                let mut s = 0.0;
                for l in 0..=k {
                    s += self.chol[k * red + l] * noise[roff + l];
                }
                self.kick[k] = s;
            }
            let mut sum = 0.0;
            for k in 0..red {
                let v =
                    aug[foff + k] + self.drift[roff + k] * self.dt + self.kick[k] * self.sqrt_dt;
                aug[foff + k] = v;
                sum += v;
            }
            aug[foff + m - 1] = 1.0 - sum;

            let locus = &mut aug[foff..foff + m];
            if locus.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteState);
            }
            if locus.iter().any(|&v| v < 0.0) {
                let mut total = 0.0;
                for v in locus.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                        clamped += 1;
                    }
                    total += *v;
                }
                for v in locus.iter_mut() {
                    *v /= total;
                }
            }
        }
        Ok(clamped)
    }
}

fn split_state(model: &ValidatedModel, aug: &[f64]) -> FrequencyState {
    let layout = model.layout();
    let per_locus = (0..layout.num_loci())
        .map(|i| {
            let off = layout.full_offset(i);
            aug[off..off + layout.alleles(i)].to_vec()
        })
        .collect();
    FrequencyState::from_raw_unchecked(per_locus)
}

/// One Euler-Maruyama step with an injected noise vector (one standard
/// normal per reduced coordinate); deterministic, for tests and replay.
pub fn em_step_with_noise(
    model: &ValidatedModel,
    x: &FrequencyState,
    dt: f64,
    noise: &[f64],
) -> Result<EmStep> {
    assert_eq!(noise.len(), model.layout().total_reduced(), "noise length");
    let mut stepper = Stepper::new(model, dt);
    let mut aug = x.augmented();
    let clamped = stepper.advance(&mut aug, noise)?;
    Ok(EmStep {
        state: split_state(model, &aug),
        clamped,
    })
}

/// One Euler-Maruyama step with sampled noise.
pub fn em_step(
    model: &ValidatedModel,
    x: &FrequencyState,
    dt: f64,
    rng: &mut impl Rng,
) -> Result<EmStep> {
    let noise: Vec<f64> = (0..model.layout().total_reduced())
        .map(|_| rng.sample(StandardNormal))
        .collect();
    em_step_with_noise(model, x, dt, &noise)
}

fn simulate_core(
    model: &ValidatedModel,
    init: &FrequencyState,
    t_end: f64,
    dt: f64,
    thin: Option<u64>,
    rng: &mut impl Rng,
) -> Result<(Trajectory, Vec<f64>)> {
    assert!(t_end >= 0.0, "t_end must be non-negative");
    let steps = (t_end / dt).round() as u64;
    let mut stepper = Stepper::new(model, dt);
    let mut aug = init.augmented();
    let mut noise = vec![0.0; model.layout().total_reduced()];
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut clamp_events = 0u64;
    if let Some(thin) = thin {
        times.push(0.0);
        states.push(init.clone());
        for step in 1..=steps {
            for n in noise.iter_mut() {
                *n = rng.sample(StandardNormal);
            }
            clamp_events += stepper.advance(&mut aug, &noise)?;
            if step % thin == 0 {
                times.push(step as f64 * dt);
                states.push(split_state(model, &aug));
            }
        }
    } else {
        for _ in 0..steps {
            for n in noise.iter_mut() {
                *n = rng.sample(StandardNormal);
            }
            clamp_events += stepper.advance(&mut aug, &noise)?;
        }
    }
    Ok((
        Trajectory {
            times,
            states,
            clamp_events,
        },
        aug,
    ))
}

/// Integrates to `t_end` with step `dt`, recording every `thin` steps
/// (including the initial state) at times `k dt`.
pub fn simulate_sde(
    model: &ValidatedModel,
    init: &FrequencyState,
    t_end: f64,
    dt: f64,
    thin: u64,
    rng: &mut impl Rng,
) -> Result<Trajectory> {
    assert!(thin >= 1, "thin must be at least 1");
    Ok(simulate_core(model, init, t_end, dt, Some(thin), rng)?.0)
}

fn run_replicate(
    model: &ValidatedModel,
    init: &FrequencyState,
    t_end: f64,
    dt: f64,
    seed: u64,
    index: u64,
) -> Result<FrequencyState> {
    let mut rng = stream_rng(seed, index);
    let (_, aug) = simulate_core(model, init, t_end, dt, None, &mut rng)?;
    Ok(split_state(model, &aug))
}

/// Final states of independent SDE replicates, replicate `r` driven by the
/// generator stream `(seed, r)`.
pub fn simulate_ensemble(
    model: &ValidatedModel,
    init: &FrequencyState,
    t_end: f64,
    dt: f64,
    replicates: usize,
    seed: u64,
) -> Result<Vec<FrequencyState>> {
    exec::map_indexed(replicates, |r| {
        run_replicate(model, init, t_end, dt, seed, r as u64)
    })
    .into_iter()
    .collect()
}

/// Sequential twin of [`simulate_ensemble`]; identical output.
pub fn simulate_ensemble_seq(
    model: &ValidatedModel,
    init: &FrequencyState,
    t_end: f64,
    dt: f64,
    replicates: usize,
    seed: u64,
) -> Result<Vec<FrequencyState>> {
    exec::map_indexed_seq(replicates, |r| {
        run_replicate(model, init, t_end, dt, seed, r as u64)
    })
    .into_iter()
    .collect()
}
