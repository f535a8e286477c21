//! Time evolution under the Markovian generator.
//!
//! Density matrices evolve by the Schrödinger-picture predual
//!
//! ```text
//!   dρ/dt = L_*(ρ) = -i[H_eff, ρ] + Σ γ (L ρ L* - ½{L*L, ρ})
//! ```
//!
//! integrated with an adaptive embedded Runge-Kutta 5(4) scheme.  Trace is
//! never renormalized; its drift is logged in the diagnostics instead.
//! Steady states come from the null space of the vectorized predual.
//!
//! Quantum trajectories unravel the same generator with jump operators
//! √γ⁻ F_R and √γ⁺ F*_R.  For this model the effective Hamiltonian and
//! every L*L are diagonal in the configuration basis, so the no-jump
//! propagation is closed-form per component and waiting times are sampled
//! *exactly*: bisect the monotone norm decay Σ_c |ψ_c|² e^{-Γ_c s} to the
//! drawn uniform.  Trajectory streams derive from (seed, index) through a
//! counter-based ChaCha12 generator, so ensembles are reproducible
//! bit-for-bit and trajectories are independent work units.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::generator::{DenseGenerator, GeneratorBundle};
use crate::lattice::{CouplingGraph, SpinConfiguration};
use crate::operator::{LocalOperator, Pauli};

/// Dense-state paths cap the lattice size here.
pub const MAX_DENSE_SITES: usize = 12;

/// Dense null-space extraction caps the lattice size here (the vectorized
/// generator is a 4^N square matrix).
pub const MAX_STEADY_SITES: usize = 5;

/// Identifier of the trajectory RNG scheme, recorded in run metadata.
pub const RNG_ID: &str = "chacha12-streams-v1";

/// A validated density matrix on 2^n_sites dimensions.
#[derive(Debug, Clone)]
pub struct DensityOperator {
    mat: DMatrix<Complex64>,
    n_sites: usize,
}

impl DensityOperator {
    pub fn new(n_sites: usize, mat: DMatrix<Complex64>) -> Result<Self> {
        if n_sites > MAX_DENSE_SITES {
            return Err(Error::SizeGuard {
                what: "dense density operator",
                n: n_sites,
                max: MAX_DENSE_SITES,
            });
        }
        let dim = 1usize << n_sites;
        if mat.nrows() != dim || mat.ncols() != dim {
            return Err(Error::NonPhysicalState(format!(
                "matrix is {}x{}, expected {dim}x{dim}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let herm = (&mat - mat.adjoint()).norm();
        if herm > 1e-10 {
            return Err(Error::NonPhysicalState(format!(
                "not self-adjoint (residual {herm:.3e})"
            )));
        }
        let tr = mat.trace();
        if (tr - Complex64::new(1.0, 0.0)).norm() > 1e-10 {
            return Err(Error::NonPhysicalState(format!("trace {tr} != 1")));
        }
        let min = min_eigenvalue(&mat);
        if min < -1e-8 {
            return Err(Error::NonPhysicalState(format!(
                "negative eigenvalue {min:.3e}"
            )));
        }
        Ok(DensityOperator { mat, n_sites })
    }

    pub fn from_pure(n_sites: usize, psi: &DVector<Complex64>) -> Result<Self> {
        let dim = 1usize << n_sites;
        if psi.len() != dim {
            return Err(Error::NonPhysicalState(format!(
                "state vector length {} != {dim}",
                psi.len()
            )));
        }
        let norm = psi.norm();
        if norm == 0.0 {
            return Err(Error::NonPhysicalState("zero state vector".into()));
        }
        let psi = psi / Complex64::new(norm, 0.0);
        Self::new(n_sites, &psi * psi.adjoint())
    }

    /// Projector onto a basis configuration.
    pub fn basis(n_sites: usize, config: &SpinConfiguration) -> Result<Self> {
        Self::from_pure(n_sites, &basis_vector(n_sites, config))
    }

    pub fn maximally_mixed(n_sites: usize) -> Result<Self> {
        let dim = 1usize << n_sites;
        let mat = DMatrix::from_diagonal_element(
            dim,
            dim,
            Complex64::new(1.0 / dim as f64, 0.0),
        );
        Self::new(n_sites, mat)
    }

    /// Diagonal state from a probability vector over configurations.
    pub fn from_diagonal(n_sites: usize, probs: &[f64]) -> Result<Self> {
        let dim = 1usize << n_sites;
        if probs.len() != dim {
            return Err(Error::NonPhysicalState(format!(
                "probability vector length {} != {dim}",
                probs.len()
            )));
        }
        let mut mat = DMatrix::zeros(dim, dim);
        for (i, &p) in probs.iter().enumerate() {
            mat[(i, i)] = Complex64::new(p, 0.0);
        }
        Self::new(n_sites, mat)
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.mat
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }
}

/// Basis vector of a spin configuration.
pub fn basis_vector(n_sites: usize, config: &SpinConfiguration) -> DVector<Complex64> {
    assert_eq!(config.len(), n_sites);
    let dim = 1usize << n_sites;
    let mut v = DVector::zeros(dim);
    v[config.index()] = Complex64::new(1.0, 0.0);
    v
}

/// Product state with every spin along +x: uniform amplitudes.
pub fn plus_x_vector(n_sites: usize) -> DVector<Complex64> {
    let dim = 1usize << n_sites;
    DVector::from_element(dim, Complex64::new(1.0 / (dim as f64).sqrt(), 0.0))
}

fn min_eigenvalue(mat: &DMatrix<Complex64>) -> f64 {
    let eig = nalgebra::SymmetricEigen::new(mat.clone());
    eig.eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v))
}

/// Integrator bookkeeping; trace drift is recorded, never corrected.
#[derive(Debug, Clone, Copy, Default)]
pub struct MasterDiagnostics {
    pub steps: usize,
    pub rejected: usize,
    pub max_trace_drift: f64,
    pub max_herm_residual: f64,
    pub min_eigenvalue: f64,
}

/// Density-matrix trajectory on a uniform sample grid.
#[derive(Debug, Clone)]
pub struct MasterTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<DMatrix<Complex64>>,
    pub diagnostics: MasterDiagnostics,
}

/// Uniform grid over [0, t_final] with n points (n >= 1).
pub fn sample_grid(t_final: f64, n_samples: usize) -> Vec<f64> {
    if t_final <= 0.0 || n_samples < 2 {
        return vec![0.0];
    }
    (0..n_samples)
        .map(|i| t_final * i as f64 / (n_samples - 1) as f64)
        .collect()
}

// Dormand-Prince 5(4) tableau.
const DP_A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn integrate_predual<F>(
    dense: &DenseGenerator,
    rho0: &DMatrix<Complex64>,
    times: &[f64],
    tol: f64,
    mut on_sample: F,
) -> Result<MasterDiagnostics>
where
    F: FnMut(usize, &DMatrix<Complex64>) -> Result<()>,
{
    if tol <= 0.0 {
        return Err(Error::InvariantViolation("tolerance must be positive".into()));
    }
    let mut diag = MasterDiagnostics {
        min_eigenvalue: f64::INFINITY,
        ..Default::default()
    };
    let mut rho = rho0.clone();
    let mut t = times[0];
    on_sample(0, &rho)?;
    let t_final = *times.last().unwrap();
    if t_final <= t {
        diag.min_eigenvalue = min_eigenvalue(&rho);
        return Ok(diag);
    }
    let mut h = (t_final - t) * 1e-3;
    let mut sample_idx = 1usize;
    let h_min = 1e-13 * t_final.max(1.0);
    let mut k: Vec<DMatrix<Complex64>> = Vec::with_capacity(7);
    while sample_idx < times.len() {
        let target = times[sample_idx];
        h = h.min(target - t);
        if h < h_min {
            return Err(Error::StepSizeUnderflow(t));
        }
        // one embedded step
        k.clear();
        k.push(dense.apply_predual(&rho));
        for s in 0..6 {
            let mut y = rho.clone();
            for (j, kj) in k.iter().enumerate() {
                let a = DP_A[s][j];
                if a != 0.0 {
                    y += kj * Complex64::new(a * h, 0.0);
                }
            }
            k.push(dense.apply_predual(&y));
        }
        let mut y5 = rho.clone();
        for (j, kj) in k.iter().take(6).enumerate() {
            let b = DP_A[5][j];
            if b != 0.0 {
                y5 += kj * Complex64::new(b * h, 0.0);
            }
        }
        // the 5th-order solution uses the last A row; the embedded 4th-order
        // weights give the error estimate
        let mut y4 = rho.clone();
        for (j, kj) in k.iter().enumerate() {
            let b = DP_B4[j];
            if b != 0.0 {
                y4 += kj * Complex64::new(b * h, 0.0);
            }
        }
        let err = (&y5 - &y4).norm();
        if err <= tol {
            t += h;
            rho = y5;
            diag.steps += 1;
            let trace_drift = (rho.trace() - Complex64::new(1.0, 0.0)).norm();
            let herm = (&rho - rho.adjoint()).norm();
            diag.max_trace_drift = diag.max_trace_drift.max(trace_drift);
            diag.max_herm_residual = diag.max_herm_residual.max(herm);
            if trace_drift > 10.0 * tol.max(1e-12) {
                return Err(Error::InvariantViolation(format!(
                    "trace drift {trace_drift:.3e} beyond 10x tolerance at t = {t}"
                )));
            }
            if herm > 10.0 * tol.max(1e-12) {
                return Err(Error::InvariantViolation(format!(
                    "hermiticity residual {herm:.3e} beyond 10x tolerance at t = {t}"
                )));
            }
            if (t - target).abs() < 1e-14 * t_final.max(1.0) {
                let min = min_eigenvalue(&rho);
                diag.min_eigenvalue = diag.min_eigenvalue.min(min);
                if min < -1e-8 {
                    return Err(Error::InvariantViolation(format!(
                        "negative eigenvalue {min:.3e} at sample t = {t}"
                    )));
                }
                on_sample(sample_idx, &rho)?;
                sample_idx += 1;
            }
        } else {
            diag.rejected += 1;
        }
        let scale = if err == 0.0 {
            5.0
        } else {
            (0.9 * (tol / err).powf(0.2)).clamp(0.2, 5.0)
        };
        h *= scale;
    }
    if diag.min_eigenvalue == f64::INFINITY {
        diag.min_eigenvalue = min_eigenvalue(&rho);
    }
    Ok(diag)
}

/// Integrate the master equation and return the states on a uniform grid.
pub fn evolve_master(
    bundle: &GeneratorBundle,
    rho0: &DensityOperator,
    t_final: f64,
    tol: f64,
    n_samples: usize,
) -> Result<MasterTrajectory> {
    if bundle.n_sites() > 8 {
        return Err(Error::SizeGuard {
            what: "stored master trajectory",
            n: bundle.n_sites(),
            max: 8,
        });
    }
    let dense = DenseGenerator::new(bundle)?;
    let times = sample_grid(t_final, n_samples);
    let mut states: Vec<DMatrix<Complex64>> = Vec::with_capacity(times.len());
    let diagnostics = integrate_predual(&dense, rho0.matrix(), &times, tol, |_, rho| {
        states.push(rho.clone());
        Ok(())
    })?;
    Ok(MasterTrajectory {
        times,
        states,
        diagnostics,
    })
}

/// Integrate the master equation, recording observable expectations only.
pub fn evolve_observables(
    bundle: &GeneratorBundle,
    rho0: &DensityOperator,
    t_final: f64,
    tol: f64,
    n_samples: usize,
    observables: &[(String, LocalOperator)],
) -> Result<(Vec<f64>, Vec<Vec<f64>>, MasterDiagnostics)> {
    let dense = DenseGenerator::new(bundle)?;
    let times = sample_grid(t_final, n_samples);
    let full = bundle.full_support();
    let obs_dense: Vec<DMatrix<Complex64>> = observables
        .iter()
        .map(|(_, op)| op.embed(&full).map(|o| o.to_dense()))
        .collect::<Result<_>>()?;
    let mut series = vec![vec![0.0; times.len()]; observables.len()];
    let diagnostics = integrate_predual(&dense, rho0.matrix(), &times, tol, |i, rho| {
        for (o, od) in obs_dense.iter().enumerate() {
            series[o][i] = (od * rho).trace().re;
        }
        Ok(())
    })?;
    Ok((times, series, diagnostics))
}

/// Heisenberg-picture expectation tr(X ρ(t)) on the sample grid.
pub fn heisenberg_expectation(
    bundle: &GeneratorBundle,
    x: &LocalOperator,
    rho0: &DensityOperator,
    t_final: f64,
    tol: f64,
    n_samples: usize,
) -> Result<(Vec<f64>, Vec<Complex64>)> {
    let dense = DenseGenerator::new(bundle)?;
    let times = sample_grid(t_final, n_samples);
    let xd = x.embed(&bundle.full_support())?.to_dense();
    let mut values = vec![Complex64::ZERO; times.len()];
    integrate_predual(&dense, rho0.matrix(), &times, tol, |i, rho| {
        values[i] = (&xd * rho).trace();
        Ok(())
    })?;
    Ok((times, values))
}

/// Dual route: evolve X under the Heisenberg generator and trace against
/// the fixed initial state.  Available as an independent cross-check of
/// [`heisenberg_expectation`] for small lattices.
pub fn heisenberg_dual_expectation(
    bundle: &GeneratorBundle,
    x: &LocalOperator,
    rho0: &DensityOperator,
    t_final: f64,
    tol: f64,
    n_samples: usize,
) -> Result<(Vec<f64>, Vec<Complex64>)> {
    if bundle.n_sites() > 6 {
        return Err(Error::SizeGuard {
            what: "Heisenberg-picture dense evolution",
            n: bundle.n_sites(),
            max: 6,
        });
    }
    let dense = DenseGenerator::new(bundle)?;
    let times = sample_grid(t_final, n_samples);
    let x0 = x.embed(&bundle.full_support())?.to_dense();
    let rho = rho0.matrix().clone();
    // same integrator, with the Heisenberg right-hand side; observables in
    // the Heisenberg picture need no state validity checks
    let mut values = vec![Complex64::ZERO; times.len()];
    let mut xt = x0;
    let mut t = times[0];
    values[0] = (&xt * &rho).trace();
    let t_final_eff = *times.last().unwrap();
    if t_final_eff > t {
        let mut h = (t_final_eff - t) * 1e-3;
        let h_min = 1e-13 * t_final_eff.max(1.0);
        let mut sample_idx = 1usize;
        let mut k: Vec<DMatrix<Complex64>> = Vec::with_capacity(7);
        while sample_idx < times.len() {
            let target = times[sample_idx];
            h = h.min(target - t);
            if h < h_min {
                return Err(Error::StepSizeUnderflow(t));
            }
            k.clear();
            k.push(dense.apply_heisenberg(&xt));
            for s in 0..6 {
                let mut y = xt.clone();
                for (j, kj) in k.iter().enumerate() {
                    let a = DP_A[s][j];
                    if a != 0.0 {
                        y += kj * Complex64::new(a * h, 0.0);
                    }
                }
                k.push(dense.apply_heisenberg(&y));
            }
            let mut y5 = xt.clone();
            for (j, kj) in k.iter().take(6).enumerate() {
                let b = DP_A[5][j];
                if b != 0.0 {
                    y5 += kj * Complex64::new(b * h, 0.0);
                }
            }
            let mut y4 = xt.clone();
            for (j, kj) in k.iter().enumerate() {
                let b = DP_B4[j];
                if b != 0.0 {
                    y4 += kj * Complex64::new(b * h, 0.0);
                }
            }
            let err = (&y5 - &y4).norm();
            if err <= tol {
                t += h;
                xt = y5;
                if (t - target).abs() < 1e-14 * t_final_eff.max(1.0) {
                    values[sample_idx] = (&xt * &rho).trace();
                    sample_idx += 1;
                }
            }
            let scale = if err == 0.0 {
                5.0
            } else {
                (0.9 * (tol / err).powf(0.2)).clamp(0.2, 5.0)
            };
            h *= scale;
        }
    }
    Ok((times, values))
}

/// Null space of the vectorized predual.
#[derive(Debug)]
pub struct SteadyState {
    pub null_dim: usize,
    /// More than one stationary direction: the dynamics is reducible
    /// (expected whenever blocked channels split the configuration space).
    pub reducible: bool,
    /// Devectorized right-null basis.
    pub basis: Vec<DMatrix<Complex64>>,
    /// Positive unit-trace representatives extracted from the basis.
    pub states: Vec<DensityOperator>,
    /// Residual ||L(state)|| per extracted state.
    pub residuals: Vec<f64>,
}

/// Compute the stationary states as the smallest singular vectors of the
/// vectorized generator.  Dense; guarded at [`MAX_STEADY_SITES`] sites.
pub fn steady_state(bundle: &GeneratorBundle) -> Result<SteadyState> {
    let n = bundle.n_sites();
    if n > MAX_STEADY_SITES {
        return Err(Error::SizeGuard {
            what: "dense steady-state solve",
            n,
            max: MAX_STEADY_SITES,
        });
    }
    let dense = DenseGenerator::new(bundle)?;
    let d = 1usize << n;
    let d2 = d * d;
    let mut superop = DMatrix::<Complex64>::zeros(d2, d2);
    for c in 0..d {
        for r in 0..d {
            let mut unit = DMatrix::<Complex64>::zeros(d, d);
            unit[(r, c)] = Complex64::new(1.0, 0.0);
            let image = dense.apply_predual(&unit);
            let col = c * d + r;
            for cc in 0..d {
                for rr in 0..d {
                    superop[(cc * d + rr, col)] = image[(rr, cc)];
                }
            }
        }
    }
    let svd = superop.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let smax = svd.singular_values.iter().fold(0.0f64, |m, &s| m.max(s));
    let tol = if smax == 0.0 { f64::INFINITY } else { smax * 1e-10 };
    let mut basis = Vec::new();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s <= tol {
            let row = v_t.row(i);
            let mut mat = DMatrix::<Complex64>::zeros(d, d);
            for c in 0..d {
                for r in 0..d {
                    mat[(r, c)] = row[c * d + r].conj();
                }
            }
            basis.push(mat);
        }
    }
    let null_dim = basis.len();
    let mut states = Vec::new();
    let mut residuals = Vec::new();
    for k in &basis {
        let herm = (k + k.adjoint()) * Complex64::new(0.5, 0.0);
        let anti = (k - k.adjoint()) * Complex64::new(0.0, 0.5);
        for cand in [herm, anti] {
            let tr = cand.trace();
            if tr.norm() <= 1e-8 * cand.norm().max(1e-300) {
                continue;
            }
            let rho = &cand / tr;
            if let Ok(state) = DensityOperator::new(n, rho) {
                let residual = dense.apply_predual(state.matrix()).norm();
                states.push(state);
                residuals.push(residual);
            }
        }
    }
    Ok(SteadyState {
        null_dim,
        reducible: null_dim > 1,
        basis,
        states,
        residuals,
    })
}

/// Options of a trajectory ensemble run.
#[derive(Debug, Clone, Copy)]
pub struct TrajectoryOptions {
    pub n_traj: usize,
    pub seed: u64,
    pub t_final: f64,
    pub n_samples: usize,
}

/// Mean and standard error of one observable over the ensemble.
#[derive(Debug, Clone)]
pub struct ObservableSeries {
    pub name: String,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// Ensemble averages; reproducible bit-exactly from (seed, n_traj, grid).
#[derive(Debug, Clone)]
pub struct TrajectoryEnsemble {
    pub n_traj: usize,
    pub seed: u64,
    pub times: Vec<f64>,
    pub series: Vec<ObservableSeries>,
    pub rng_id: &'static str,
    pub total_jumps: u64,
}

fn stream_rng(seed: u64, index: u64, domain: &[u8; 8]) -> ChaCha12Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&index.to_le_bytes());
    key[16..24].copy_from_slice(domain);
    ChaCha12Rng::from_seed(key)
}

/// Per-trajectory stream: independent for each (seed, index) pair.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha12Rng {
    stream_rng(seed, index, b"sb-traj\0")
}

/// Stream used by the kinetic Monte Carlo sampler.
pub fn kmc_rng(seed: u64) -> ChaCha12Rng {
    stream_rng(seed, 0, b"sb-kmc\0\0")
}

struct JumpMap {
    /// target row and amplitude per source column, or annihilation
    map: Vec<Option<(usize, Complex64)>>,
    rate: f64,
}

/// Monte Carlo wave-function unraveling of the bundle.
///
/// Requires a nonempty jump list or a nonzero effective Hamiltonian, and
/// the structural properties the flip channels guarantee: diagonal
/// effective Hamiltonian and diagonal L*L for every jump.
pub fn run_trajectories(
    bundle: &GeneratorBundle,
    psi0: &DVector<Complex64>,
    opts: &TrajectoryOptions,
    observables: &[(String, LocalOperator)],
) -> Result<TrajectoryEnsemble> {
    let n = bundle.n_sites();
    if n > MAX_DENSE_SITES {
        return Err(Error::SizeGuard {
            what: "trajectory unraveling",
            n,
            max: MAX_DENSE_SITES,
        });
    }
    let dim = 1usize << n;
    if psi0.len() != dim {
        return Err(Error::NonPhysicalState(format!(
            "state vector length {} != {dim}",
            psi0.len()
        )));
    }
    if psi0.norm() < 1e-12 {
        return Err(Error::NonPhysicalState("zero initial state".into()));
    }
    let full = bundle.full_support();
    let h_op = bundle.effective_hamiltonian().embed(&full)?;
    if bundle.jumps().is_empty() && h_op.frobenius_norm() == 0.0 {
        return Err(Error::Unsupported(
            "bundle has neither jump channels nor an effective Hamiltonian".into(),
        ));
    }
    if !h_op.is_diagonal(1e-12) {
        return Err(Error::Unsupported(
            "trajectory unraveling needs a diagonal effective Hamiltonian".into(),
        ));
    }
    let h_diag: Vec<f64> = h_op.diagonal_values().iter().map(|z| z.re).collect();

    let mut jump_maps = Vec::with_capacity(bundle.jumps().len());
    let mut gamma_diag = vec![0.0f64; dim];
    for jump in bundle.jumps() {
        let op = jump.op.embed(&full)?;
        if !op.adjoint().mul(&op).is_diagonal(0.0) {
            return Err(Error::Unsupported(
                "trajectory unraveling needs partial-isometry jump operators".into(),
            ));
        }
        let mut map = vec![None; dim];
        for c in 0..dim {
            let col = op.column(c);
            match col.len() {
                0 => {}
                1 => {
                    map[c] = Some(col[0]);
                    gamma_diag[c] += jump.rate * col[0].1.norm_sqr();
                }
                _ => {
                    return Err(Error::Unsupported(
                        "jump operator with more than one entry per column".into(),
                    ))
                }
            }
        }
        jump_maps.push(JumpMap {
            map,
            rate: jump.rate,
        });
    }

    let obs_ops: Vec<LocalOperator> = observables
        .iter()
        .map(|(_, op)| op.embed(&full))
        .collect::<Result<_>>()?;
    let times = sample_grid(opts.t_final, opts.n_samples);

    let mut mean = vec![vec![0.0f64; times.len()]; observables.len()];
    let mut m2 = vec![vec![0.0f64; times.len()]; observables.len()];
    let mut total_jumps = 0u64;

    let norm0 = psi0.norm();
    let psi_init: Vec<Complex64> = psi0.iter().map(|z| z / norm0).collect();

    for traj in 0..opts.n_traj {
        let mut rng = trajectory_rng(opts.seed, traj as u64);
        let mut psi = psi_init.clone();
        let mut t = 0.0f64;
        let mut sample_idx = 0usize;

        // value of every observable in the (unnormalized) propagated state
        let record =
            |psi_t: &[Complex64], sample_idx: usize, mean: &mut [Vec<f64>], m2: &mut [Vec<f64>], count: f64| {
                let norm_sq: f64 = psi_t.iter().map(|z| z.norm_sqr()).sum();
                for (o, op) in obs_ops.iter().enumerate() {
                    let mut acc = Complex64::ZERO;
                    for c in 0..psi_t.len() {
                        if psi_t[c] == Complex64::ZERO {
                            continue;
                        }
                        for &(r, z) in op.column(c) {
                            acc += psi_t[r].conj() * z * psi_t[c];
                        }
                    }
                    let val = acc.re / norm_sq;
                    let delta = val - mean[o][sample_idx];
                    mean[o][sample_idx] += delta / count;
                    m2[o][sample_idx] += delta * (val - mean[o][sample_idx]);
                }
            };

        let count = (traj + 1) as f64;
        'segments: loop {
            // renormalize at segment start and draw the decay target
            let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            for z in psi.iter_mut() {
                *z /= norm;
            }
            let u: f64 = loop {
                let u: f64 = rng.random();
                if u > 0.0 {
                    break u;
                }
            };
            let norm_sq_at = |psi: &[Complex64], s: f64| -> f64 {
                psi.iter()
                    .zip(&gamma_diag)
                    .map(|(z, &g)| z.norm_sqr() * (-g * s).exp())
                    .sum()
            };
            let frozen_mass: f64 = psi
                .iter()
                .zip(&gamma_diag)
                .filter(|&(_, &g)| g == 0.0)
                .map(|(z, _)| z.norm_sqr())
                .sum();

            let propagate = |psi: &[Complex64], s: f64| -> Vec<Complex64> {
                psi.iter()
                    .enumerate()
                    .map(|(c, z)| {
                        z * Complex64::from_polar((-0.5 * gamma_diag[c] * s).exp(), -h_diag[c] * s)
                    })
                    .collect()
            };

            if u <= frozen_mass {
                // no jump will ever fire; sample out the remaining grid
                while sample_idx < times.len() {
                    let psi_t = propagate(&psi, times[sample_idx] - t);
                    record(&psi_t, sample_idx, &mut mean, &mut m2, count);
                    sample_idx += 1;
                }
                break 'segments;
            }

            // exact waiting time: bisect the monotone norm decay
            let mut hi = 1.0f64;
            let mut guard = 0;
            while norm_sq_at(&psi, hi) > u {
                hi *= 2.0;
                guard += 1;
                if guard > 400 {
                    break;
                }
            }
            let mut lo = if hi > 1.0 { hi / 2.0 } else { 0.0 };
            if guard > 400 {
                // numerically frozen; treat as no jump
                while sample_idx < times.len() {
                    let psi_t = propagate(&psi, times[sample_idx] - t);
                    record(&psi_t, sample_idx, &mut mean, &mut m2, count);
                    sample_idx += 1;
                }
                break 'segments;
            }
            while hi - lo > 1e-10 * hi.max(1.0) {
                let mid = 0.5 * (lo + hi);
                if norm_sq_at(&psi, mid) > u {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let s_jump = 0.5 * (lo + hi);

            // samples strictly inside the no-jump segment
            while sample_idx < times.len() && times[sample_idx] < t + s_jump {
                let psi_t = propagate(&psi, times[sample_idx] - t);
                record(&psi_t, sample_idx, &mut mean, &mut m2, count);
                sample_idx += 1;
            }
            if sample_idx >= times.len() {
                break 'segments;
            }

            // jump: select a channel by its weight in the decayed state
            let decayed = propagate(&psi, s_jump);
            let weights: Vec<f64> = jump_maps
                .iter()
                .map(|j| {
                    j.rate
                        * decayed
                            .iter()
                            .enumerate()
                            .filter_map(|(c, z)| j.map[c].map(|(_, a)| (z * a).norm_sqr()))
                            .sum::<f64>()
                })
                .collect();
            let total_w: f64 = weights.iter().sum();
            if total_w <= 0.0 {
                // the decay target was met by pure phase damping noise;
                // continue deterministically
                while sample_idx < times.len() {
                    let psi_t = propagate(&psi, times[sample_idx] - t);
                    record(&psi_t, sample_idx, &mut mean, &mut m2, count);
                    sample_idx += 1;
                }
                break 'segments;
            }
            let draw: f64 = rng.random::<f64>() * total_w;
            let mut acc = 0.0;
            let mut chosen = weights.len() - 1;
            for (j, &w) in weights.iter().enumerate() {
                acc += w;
                if draw < acc {
                    chosen = j;
                    break;
                }
            }
            let mut next = vec![Complex64::ZERO; dim];
            for (c, z) in decayed.iter().enumerate() {
                if let Some((r, a)) = jump_maps[chosen].map[c] {
                    next[r] += a * z;
                }
            }
            psi = next;
            t += s_jump;
            total_jumps += 1;
        }
    }

    let n_traj = opts.n_traj;
    let series = observables
        .iter()
        .enumerate()
        .map(|(o, (name, _))| ObservableSeries {
            name: name.clone(),
            mean: mean[o].clone(),
            stderr: m2[o]
                .iter()
                .map(|&s| {
                    if n_traj > 1 {
                        (s / (n_traj as f64 - 1.0)).sqrt() / (n_traj as f64).sqrt()
                    } else {
                        0.0
                    }
                })
                .collect(),
        })
        .collect();

    Ok(TrajectoryEnsemble {
        n_traj,
        seed: opts.seed,
        times,
        series,
        rng_id: RNG_ID,
        total_jumps,
    })
}

/// Build named observables: `magnetization`, `magnetization:<site>`,
/// `corr:<i>,<j>`, `energy`.
pub fn observables(graph: &CouplingGraph, names: &[String]) -> Result<Vec<(String, LocalOperator)>> {
    let n = graph.n_sites();
    let mut out = Vec::with_capacity(names.len());
    for name in names {
        let op = if name == "magnetization" {
            let mut sum = LocalOperator::zero(vec![]);
            for r in 0..n {
                sum = sum.add(&LocalOperator::pauli(Pauli::Z, r));
            }
            sum.scale(Complex64::new(1.0 / n as f64, 0.0))
        } else if let Some(site) = name.strip_prefix("magnetization:") {
            let r: usize = site
                .parse()
                .map_err(|_| Error::UnknownObservable(name.clone()))?;
            if r >= n {
                return Err(Error::UnknownObservable(name.clone()));
            }
            LocalOperator::pauli(Pauli::Z, r)
        } else if let Some(pair) = name.strip_prefix("corr:") {
            let parts: Vec<&str> = pair.split(',').collect();
            if parts.len() != 2 {
                return Err(Error::UnknownObservable(name.clone()));
            }
            let i: usize = parts[0]
                .trim()
                .parse()
                .map_err(|_| Error::UnknownObservable(name.clone()))?;
            let j: usize = parts[1]
                .trim()
                .parse()
                .map_err(|_| Error::UnknownObservable(name.clone()))?;
            if i >= n || j >= n || i == j {
                return Err(Error::UnknownObservable(name.clone()));
            }
            LocalOperator::pauli(Pauli::Z, i).mul(&LocalOperator::pauli(Pauli::Z, j))
        } else if name == "energy" {
            if n > MAX_DENSE_SITES {
                return Err(Error::SizeGuard {
                    what: "energy observable",
                    n,
                    max: MAX_DENSE_SITES,
                });
            }
            let dim = 1usize << n;
            let mut diag = Vec::with_capacity(dim);
            for bits in 0..dim {
                let config = SpinConfiguration::from_bits(bits as u64, n);
                diag.push(Complex64::new(graph.system_energy(&config)?, 0.0));
            }
            LocalOperator::diagonal((0..n).collect(), &diag)
        } else {
            return Err(Error::UnknownObservable(name.clone()));
        };
        out.push((name.clone(), op));
    }
    Ok(out)
}
