//! The Markovian generator induced by the bath on the spin lattice.
//!
//! Every channel R = (r, σ(r)) contributes its flip operator F_R and its
//! susceptibility pair (g|g)^±_R.  The Heisenberg-picture generator is
//!
//! ```text
//!   θ₀(X) = Σ_R [ -i Im(g|g)⁻ [X, F*F] + i Im(g|g)⁺ [X, FF*]
//!                 + Re(g|g)⁻ κ₁(X) + Re(g|g)⁺ κ₋₁(X) ]
//! ```
//!
//! with the dissipation forms κ₁(X) = 2F*XF - {X, F*F} and
//! κ₋₁(X) = 2FXF* - {X, FF*} and the noise derivations
//! θ₋₁(X) = -i[X, F*], θ₊₁(X) = -i[X, F].  The imaginary (Lamb shift)
//! terms run over *all* channels; only channels with E > 0 carry nonzero
//! rates γ^∓ = 2 Re (g|g)^∓ and hence jump operators.
//!
//! The maps satisfy, exactly,
//!
//! ```text
//!   κ_i(XY) = κ_i(X) Y + X κ_i(Y) + 2 θ_{-i}(X) θ_i(Y)
//!   θ_α(XY) = θ_α(X) Y + X θ_α(Y) + Σ c_α^{βγ} θ_β(X) θ_γ(Y)
//! ```
//!
//! where the structure constants c come from the Ito table
//! dB dB* = γ⁻ dt, dB* dB = γ⁺ dt.  [`check_lemma1`] and
//! [`check_theorem1`] measure the floating-point residuals of these
//! identities.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::bath::{BathModel, PvWarning, Susceptibility};
use crate::error::{Error, Result};
use crate::lattice::{Channel, CouplingGraph, SignClass};
use crate::operator::LocalOperator;

/// One channel with its flip operator and susceptibilities.
#[derive(Debug, Clone)]
pub struct BundleEntry {
    pub channel: Channel,
    pub f: LocalOperator,
    pub susc: Susceptibility,
}

/// Whether a jump operator emits into or absorbs from the bath.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpKind {
    /// √γ⁻ F_R: the flip that lowers the system energy.
    Emission,
    /// √γ⁺ F*_R: the thermally activated reverse flip.
    Absorption,
}

/// A jump operator of the Schrödinger-picture unraveling, stored as the
/// bare operator plus its rate.
#[derive(Debug, Clone)]
pub struct Jump {
    pub op: LocalOperator,
    pub rate: f64,
    pub channel: usize,
    pub kind: JumpKind,
}

/// Drift, effective Hamiltonian and jump channels of the generator;
/// immutable after assembly.
#[derive(Debug, Clone)]
pub struct GeneratorBundle {
    n_sites: usize,
    entries: Vec<BundleEntry>,
    drift: LocalOperator,
    h_eff: LocalOperator,
    jumps: Vec<Jump>,
    pv_warnings: Vec<(usize, PvWarning)>,
}

impl GeneratorBundle {
    /// Assemble the generator for a lattice and bath: enumerate channels,
    /// build flip operators, evaluate susceptibilities (cached per distinct
    /// energy) and collect drift, Lamb shifts and jumps.
    ///
    /// Lamb-shift quadratures that fail to converge (divergent for some
    /// density/μ corner cases) are zeroed and surfaced through
    /// [`Self::pv_warnings`]; rates are never affected.
    pub fn assemble(graph: &CouplingGraph, bath: &BathModel) -> Result<Self> {
        let channels = graph.enumerate_channels(bath.null_tol)?;
        let mut cache: std::collections::HashMap<u64, (Susceptibility, Vec<PvWarning>)> =
            std::collections::HashMap::new();
        let mut entries = Vec::with_capacity(channels.len());
        let mut pv_warnings = Vec::new();
        for channel in channels {
            let (susc, warns) = match cache.get(&channel.energy.to_bits()) {
                Some(cached) => cached.clone(),
                None => {
                    let computed = bath.susceptibility_lenient(channel.energy)?;
                    cache.insert(channel.energy.to_bits(), computed.clone());
                    computed
                }
            };
            for w in warns {
                pv_warnings.push((entries.len(), w));
            }
            let f = LocalOperator::build_f(graph, channel.site, &channel.neighborhood)?;
            entries.push(BundleEntry { channel, f, susc });
        }
        let mut bundle = Self::from_parts(graph.n_sites(), entries)?;
        bundle.pv_warnings = pv_warnings;
        Ok(bundle)
    }

    /// Build a bundle from explicit parts; used by the assembly above and by
    /// synthetic setups (single hand-made channels) in tests and oracles.
    pub fn from_parts(n_sites: usize, entries: Vec<BundleEntry>) -> Result<Self> {
        let mut drift = LocalOperator::zero(vec![]);
        let mut h_eff = LocalOperator::zero(vec![]);
        let mut jumps = Vec::new();
        for (idx, entry) in entries.iter().enumerate() {
            if let Some(&max_site) = entry.f.support().last() {
                if max_site >= n_sites {
                    return Err(Error::Unsupported(format!(
                        "channel {idx} acts on site {max_site}, beyond n_sites = {n_sites}"
                    )));
                }
            }
            let ff_lower = entry.f.adjoint().mul(&entry.f); // F*F
            let ff_raise = entry.f.mul(&entry.f.adjoint()); // FF*
            let s = entry.susc;
            drift = drift
                .add(&ff_lower.scale(s.minus))
                .add(&ff_raise.scale(s.plus.conj()));
            h_eff = h_eff
                .add(&ff_lower.scale(Complex64::new(s.minus.im, 0.0)))
                .add(&ff_raise.scale(Complex64::new(-s.plus.im, 0.0)));
            let (gm, gp) = (s.gamma_minus(), s.gamma_plus());
            if gm < 0.0 || gp < 0.0 {
                return Err(Error::NonPhysicalState(format!(
                    "negative rate on channel {idx}: gamma- = {gm}, gamma+ = {gp}"
                )));
            }
            if gm > 0.0 {
                jumps.push(Jump {
                    op: entry.f.clone(),
                    rate: gm,
                    channel: idx,
                    kind: JumpKind::Emission,
                });
            }
            if gp > 0.0 {
                jumps.push(Jump {
                    op: entry.f.adjoint(),
                    rate: gp,
                    channel: idx,
                    kind: JumpKind::Absorption,
                });
            }
        }
        let bundle = GeneratorBundle {
            n_sites,
            entries,
            drift,
            h_eff,
            jumps,
            pv_warnings: Vec::new(),
        };
        // the imaginary parts are real and F*F, FF* self-adjoint, so any
        // asymmetry here means a corrupted entry
        let asym = bundle.h_eff.sub(&bundle.h_eff.adjoint()).frobenius_norm();
        if asym > 1e-12 {
            return Err(Error::InvariantViolation(format!(
                "effective Hamiltonian not self-adjoint (residual {asym:.3e})"
            )));
        }
        Ok(bundle)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn entries(&self) -> &[BundleEntry] {
        &self.entries
    }

    /// The drift G = Σ_R [ F*F (g|g)⁻ + FF* conj((g|g)⁺) ].
    pub fn drift(&self) -> &LocalOperator {
        &self.drift
    }

    /// Effective Hamiltonian Σ_R [ Im(g|g)⁻ F*F - Im(g|g)⁺ FF* ]; its
    /// commutator reproduces the imaginary terms of the generator.
    pub fn effective_hamiltonian(&self) -> &LocalOperator {
        &self.h_eff
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    /// Channels whose Lamb-shift quadrature did not converge (the affected
    /// imaginary parts were zeroed), with residual estimates.
    pub fn pv_warnings(&self) -> &[(usize, PvWarning)] {
        &self.pv_warnings
    }

    /// Indices of channels in the positive sign class.
    pub fn positive_channels(&self) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.channel.sign == SignClass::Positive)
            .map(|(i, _)| i)
            .collect()
    }

    /// Channels grouped by bit-identical energy, sorted by energy; the
    /// degeneracy diagnostic for symmetric lattices.
    pub fn energy_classes(&self) -> Vec<(f64, Vec<usize>)> {
        let mut groups: std::collections::BTreeMap<u64, (f64, Vec<usize>)> =
            std::collections::BTreeMap::new();
        for (i, e) in self.entries.iter().enumerate() {
            groups
                .entry(e.channel.energy.to_bits())
                .or_insert((e.channel.energy, Vec::new()))
                .1
                .push(i);
        }
        let mut classes: Vec<(f64, Vec<usize>)> = groups.into_values().collect();
        classes.sort_by(|a, b| a.0.total_cmp(&b.0));
        classes
    }

    /// Full lattice site list, the embedding target for dense work.
    pub fn full_support(&self) -> Vec<usize> {
        (0..self.n_sites).collect()
    }
}

fn supports_disjoint(a: &[usize], b: &[usize]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return false,
        }
    }
    true
}

/// Noise derivations θ₋₁(X) = -i[X, F*], θ₊₁(X) = -i[X, F].
pub fn theta(direction: i8, f: &LocalOperator, x: &LocalOperator) -> LocalOperator {
    let minus_i = Complex64::new(0.0, -1.0);
    match direction {
        -1 => x.commutator(&f.adjoint()).scale(minus_i),
        1 => x.commutator(f).scale(minus_i),
        _ => panic!("theta direction must be +1 or -1"),
    }
}

/// Dissipation forms κ₁(X) = 2F*XF - {X, F*F}, κ₋₁(X) = 2FXF* - {X, FF*}.
pub fn kappa(sign: i8, f: &LocalOperator, x: &LocalOperator) -> LocalOperator {
    let two = Complex64::new(2.0, 0.0);
    match sign {
        1 => {
            let fs = f.adjoint();
            fs.mul(x)
                .mul(f)
                .scale(two)
                .sub(&x.anticommutator(&fs.mul(f)))
        }
        -1 => {
            let fs = f.adjoint();
            f.mul(x)
                .mul(&fs)
                .scale(two)
                .sub(&x.anticommutator(&f.mul(&fs)))
        }
        _ => panic!("kappa sign must be +1 or -1"),
    }
}

/// The Heisenberg-picture Markovian generator θ₀ applied to X.
///
/// Imaginary (Lamb shift) terms run over every channel overlapping X;
/// rate terms are nonzero only for channels of positive energy.  Channels
/// with support disjoint from X contribute exactly zero and are skipped,
/// which keeps the result local.
pub fn theta_zero(bundle: &GeneratorBundle, x: &LocalOperator) -> LocalOperator {
    let mut acc = LocalOperator::zero(x.support().to_vec());
    for entry in &bundle.entries {
        if supports_disjoint(entry.f.support(), x.support()) {
            continue;
        }
        let s = entry.susc;
        let f = &entry.f;
        if s.minus.im != 0.0 {
            let p = f.adjoint().mul(f);
            acc = acc.add(&x.commutator(&p).scale(Complex64::new(0.0, -s.minus.im)));
        }
        if s.plus.im != 0.0 {
            let p = f.mul(&f.adjoint());
            acc = acc.add(&x.commutator(&p).scale(Complex64::new(0.0, s.plus.im)));
        }
        if s.minus.re != 0.0 {
            acc = acc.add(&kappa(1, f, x).scale(Complex64::new(s.minus.re, 0.0)));
        }
        if s.plus.re != 0.0 {
            acc = acc.add(&kappa(-1, f, x).scale(Complex64::new(s.plus.re, 0.0)));
        }
    }
    acc
}

/// The drift operator of the normally ordered evolution equation,
/// Σ_R [ F*F (g|g)⁻ + FF* conj((g|g)⁺) ], summed over all channels.
pub fn drift_operator(bundle: &GeneratorBundle) -> LocalOperator {
    bundle.drift.clone()
}

/// Index of a stochastic differential in the Ito table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseIndex {
    /// dB_R(t), paired with θ₋₁; the argument is the bundle channel index.
    Annihilator(usize),
    /// dB*_R(t), paired with θ₊₁.
    Creator(usize),
    /// dt, paired with θ₀.
    Time,
}

impl NoiseIndex {
    /// Conjugation rule (dB)* = dB*; together with θ_α(X*) = (θ_α'(X))*
    /// this makes the flow a *-flow.
    pub fn conjugate(self) -> Self {
        match self {
            NoiseIndex::Annihilator(r) => NoiseIndex::Creator(r),
            NoiseIndex::Creator(r) => NoiseIndex::Annihilator(r),
            NoiseIndex::Time => NoiseIndex::Time,
        }
    }
}

/// One nonvanishing product dM^β dM^γ = coefficient · dM^α.
#[derive(Debug, Clone, Copy)]
pub struct ItoEntry {
    pub left: NoiseIndex,
    pub right: NoiseIndex,
    pub result: NoiseIndex,
    pub coefficient: f64,
}

/// Structure constants of the quantum stochastic differentials.
#[derive(Debug, Clone)]
pub struct ItoTable {
    entries: Vec<ItoEntry>,
}

impl ItoTable {
    pub fn entries(&self) -> &[ItoEntry] {
        &self.entries
    }

    /// The product dM^left dM^right, or `None` when it vanishes.
    pub fn product(&self, left: NoiseIndex, right: NoiseIndex) -> Option<(NoiseIndex, f64)> {
        self.entries
            .iter()
            .find(|e| e.left == left && e.right == right)
            .map(|e| (e.result, e.coefficient))
    }
}

/// The Ito table of the bundle: dB_R dB*_R = γ⁻_R dt and
/// dB*_R dB_R = γ⁺_R dt for channels of positive energy; every other
/// product of differentials vanishes.
pub fn ito_table(bundle: &GeneratorBundle) -> ItoTable {
    let mut entries = Vec::new();
    for idx in bundle.positive_channels() {
        let s = &bundle.entries()[idx].susc;
        entries.push(ItoEntry {
            left: NoiseIndex::Annihilator(idx),
            right: NoiseIndex::Creator(idx),
            result: NoiseIndex::Time,
            coefficient: s.gamma_minus(),
        });
        entries.push(ItoEntry {
            left: NoiseIndex::Creator(idx),
            right: NoiseIndex::Annihilator(idx),
            result: NoiseIndex::Time,
            coefficient: s.gamma_plus(),
        });
    }
    ItoTable { entries }
}

/// Residuals of the derivation identity of the dissipation forms,
/// maximized over i = ±1.
#[derive(Debug, Clone, Copy)]
pub struct Lemma1Residual {
    /// Frobenius norm divided by the matrix dimension.
    pub scaled_frobenius: f64,
    /// Spectral norm.
    pub operator_norm: f64,
}

/// Residual of κ_i(XY) - κ_i(X)Y - Xκ_i(Y) - 2θ_{-i}(X)θ_i(Y) for i = ±1.
pub fn check_lemma1(f: &LocalOperator, x: &LocalOperator, y: &LocalOperator) -> Lemma1Residual {
    let xy = x.mul(y);
    let mut res = Lemma1Residual {
        scaled_frobenius: 0.0,
        operator_norm: 0.0,
    };
    for i in [1i8, -1i8] {
        let lhs = kappa(i, f, &xy);
        let rhs = kappa(i, f, x)
            .mul(y)
            .add(&x.mul(&kappa(i, f, y)))
            .add(&theta(-i, f, x).mul(&theta(i, f, y)).scale(Complex64::new(2.0, 0.0)));
        let diff = lhs.sub(&rhs);
        res.scaled_frobenius = res.scaled_frobenius.max(diff.scaled_frobenius_norm());
        res.operator_norm = res.operator_norm.max(diff.operator_norm());
    }
    res
}

/// Residuals of the structure equation and of the *-flow conjugation rule.
#[derive(Debug, Clone, Copy)]
pub struct Theorem1Residual {
    /// Max over α of the scaled Frobenius residual of
    /// θ_α(XY) - θ_α(X)Y - Xθ_α(Y) - Σ c_α^{βγ} θ_β(X)θ_γ(Y).
    pub max_structure: f64,
    /// Max residual of θ_α(X*) = (θ_α'(X))* over the conjugate index pairs.
    pub conjugation: f64,
}

/// Verify the structure equation for all α ∈ {(±1, R) : R positive} ∪ {0}
/// with the Ito constants of the bundle, plus the conjugation rule.
pub fn check_theorem1(
    bundle: &GeneratorBundle,
    x: &LocalOperator,
    y: &LocalOperator,
) -> Theorem1Residual {
    let xy = x.mul(y);
    let mut max_structure = 0.0f64;
    let mut conjugation = 0.0f64;
    let two = Complex64::new(2.0, 0.0);
    let _ = two;

    // α = (±1, R): plain derivations, no Ito correction
    for idx in bundle.positive_channels() {
        let f = &bundle.entries()[idx].f;
        for dir in [-1i8, 1i8] {
            let resid = theta(dir, f, &xy)
                .sub(&theta(dir, f, x).mul(y))
                .sub(&x.mul(&theta(dir, f, y)));
            max_structure = max_structure.max(resid.scaled_frobenius_norm());
        }
        // conjugation pairs θ₋₁ <-> θ₊₁
        let c1 = theta(-1, f, &x.adjoint()).sub(&theta(1, f, x).adjoint());
        let c2 = theta(1, f, &x.adjoint()).sub(&theta(-1, f, x).adjoint());
        conjugation = conjugation.max(c1.scaled_frobenius_norm());
        conjugation = conjugation.max(c2.scaled_frobenius_norm());
    }

    // α = 0: Leibniz defect equals the Ito-weighted product of derivations
    let mut rhs = theta_zero(bundle, x).mul(y).add(&x.mul(&theta_zero(bundle, y)));
    for idx in bundle.positive_channels() {
        let entry = &bundle.entries()[idx];
        let f = &entry.f;
        let (gm, gp) = (entry.susc.gamma_minus(), entry.susc.gamma_plus());
        if gm != 0.0 {
            rhs = rhs.add(
                &theta(-1, f, x)
                    .mul(&theta(1, f, y))
                    .scale(Complex64::new(gm, 0.0)),
            );
        }
        if gp != 0.0 {
            rhs = rhs.add(
                &theta(1, f, x)
                    .mul(&theta(-1, f, y))
                    .scale(Complex64::new(gp, 0.0)),
            );
        }
    }
    let resid = theta_zero(bundle, &xy).sub(&rhs);
    max_structure = max_structure.max(resid.scaled_frobenius_norm());

    let c0 = theta_zero(bundle, &x.adjoint()).sub(&theta_zero(bundle, x).adjoint());
    conjugation = conjugation.max(c0.scaled_frobenius_norm());

    Theorem1Residual {
        max_structure,
        conjugation,
    }
}

/// Dense form of the generator on the full lattice, shared by the
/// Schrödinger predual and the Heisenberg dual.
#[derive(Debug, Clone)]
pub struct DenseGenerator {
    pub dim: usize,
    pub h_eff: DMatrix<Complex64>,
    /// (L, L*L, rate) triples with L the bare jump operator.
    pub jumps: Vec<(DMatrix<Complex64>, DMatrix<Complex64>, f64)>,
}

impl DenseGenerator {
    pub fn new(bundle: &GeneratorBundle) -> Result<Self> {
        let full = bundle.full_support();
        let h_eff = bundle.effective_hamiltonian().embed(&full)?.to_dense();
        let mut jumps = Vec::with_capacity(bundle.jumps().len());
        for j in bundle.jumps() {
            let l = j.op.embed(&full)?.to_dense();
            let ll = l.adjoint() * &l;
            jumps.push((l, ll, j.rate));
        }
        Ok(DenseGenerator {
            dim: 1 << bundle.n_sites(),
            h_eff,
            jumps,
        })
    }

    /// L_*(ρ) = -i[H, ρ] + Σ γ (L ρ L* - ½{L*L, ρ}).
    pub fn apply_predual(&self, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let i = Complex64::new(0.0, 1.0);
        let mut out = (&self.h_eff * rho - rho * &self.h_eff) * (-i);
        for (l, ll, rate) in &self.jumps {
            let g = Complex64::new(*rate, 0.0);
            let half_g = Complex64::new(0.5 * rate, 0.0);
            out += (l * rho * l.adjoint()) * g;
            out -= (ll * rho + rho * ll) * half_g;
        }
        out
    }

    /// θ₀(X) = i[H, X] + Σ γ (L* X L - ½{L*L, X}); the trace dual of the
    /// predual above.
    pub fn apply_heisenberg(&self, x: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let i = Complex64::new(0.0, 1.0);
        let mut out = (&self.h_eff * x - x * &self.h_eff) * i;
        for (l, ll, rate) in &self.jumps {
            let g = Complex64::new(*rate, 0.0);
            let half_g = Complex64::new(0.5 * rate, 0.0);
            out += (l.adjoint() * x * l) * g;
            out -= (ll * x + x * ll) * half_g;
        }
        out
    }
}

/// Schrödinger-picture generator applied to a density matrix, with the
/// state checked for self-adjointness and unit trace.
pub fn schrodinger_generator(
    bundle: &GeneratorBundle,
    rho: &DMatrix<Complex64>,
) -> Result<DMatrix<Complex64>> {
    let dim = 1usize << bundle.n_sites();
    if rho.nrows() != dim || rho.ncols() != dim {
        return Err(Error::NonPhysicalState(format!(
            "state dimension {}x{} does not match 2^{}",
            rho.nrows(),
            rho.ncols(),
            bundle.n_sites()
        )));
    }
    let herm = (rho - rho.adjoint()).norm();
    if herm > 1e-10 {
        return Err(Error::NonPhysicalState(format!(
            "state not self-adjoint (residual {herm:.3e})"
        )));
    }
    let tr = rho.trace();
    if (tr - Complex64::new(1.0, 0.0)).norm() > 1e-10 {
        return Err(Error::NonPhysicalState(format!("state trace {tr} != 1")));
    }
    Ok(DenseGenerator::new(bundle)?.apply_predual(rho))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::SpectralDensity;
    use crate::lattice::{classify_channel, SpinConfiguration, DEFAULT_NULL_TOL};
    use crate::operator::Pauli;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn flat_bath() -> BathModel {
        BathModel::new(1.0, 0.0, SpectralDensity::Flat { height: 1.0, cutoff: 10.0 }).unwrap()
    }

    fn ring4_bundle() -> GeneratorBundle {
        let graph = CouplingGraph::ring(4, 1.0).unwrap();
        GeneratorBundle::assemble(&graph, &flat_bath()).unwrap()
    }

    fn random_local(rng: &mut ChaCha12Rng, n_sites: usize, max_support: usize) -> LocalOperator {
        let k = rng.random_range(1..=max_support.min(n_sites));
        let mut sites: Vec<usize> = (0..n_sites).collect();
        for i in 0..k {
            let j = rng.random_range(i..n_sites);
            sites.swap(i, j);
        }
        let mut support: Vec<usize> = sites[..k].to_vec();
        support.sort_unstable();
        let dim = 1usize << k;
        let mat = DMatrix::from_fn(dim, dim, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        LocalOperator::from_dense(support, &mat)
    }

    /// Independent dense construction of a flip operator by Kronecker
    /// products in site order (site 0 is the least significant bit).
    fn dense_f_oracle(graph: &CouplingGraph, ch: &Channel, n: usize) -> DMatrix<Complex64> {
        let one = Complex64::new(1.0, 0.0);
        let id2 = DMatrix::identity(2, 2);
        let d = DMatrix::from_fn(2, 2, |r, c| if r == 1 && c == 0 { one } else { Complex64::ZERO });
        let proj = |spin: i8| {
            let k = usize::from(spin == 1);
            DMatrix::from_fn(2, 2, |r, c| if r == k && c == k { one } else { Complex64::ZERO })
        };
        let build = |center: &DMatrix<Complex64>, sign: i8| {
            let sigma = graph.sigma(ch.site);
            let mut acc = DMatrix::identity(1, 1);
            for site in (0..n).rev() {
                let m = if site == ch.site {
                    center.clone()
                } else if let Some(k) = sigma.iter().position(|&s| s == site) {
                    proj(sign * ch.neighborhood.spin(k))
                } else {
                    id2.clone()
                };
                acc = acc.kronecker(&m);
            }
            acc
        };
        build(&d, 1) + build(&d.adjoint(), -1)
    }

    #[test]
    fn flip_operators_match_dense_kron_oracle() {
        let graph = CouplingGraph::ring(4, 1.0).unwrap();
        let full: Vec<usize> = (0..4).collect();
        for ch in graph.enumerate_channels(DEFAULT_NULL_TOL).unwrap() {
            let f = LocalOperator::build_f(&graph, ch.site, &ch.neighborhood)
                .unwrap()
                .embed(&full)
                .unwrap()
                .to_dense();
            let oracle = dense_f_oracle(&graph, &ch, 4);
            assert_eq!((f - oracle).norm(), 0.0);
        }
    }

    #[test]
    fn theta_on_identity_vanishes() {
        let bundle = ring4_bundle();
        let id = LocalOperator::identity(vec![0, 1, 2, 3]);
        for idx in bundle.positive_channels() {
            let f = &bundle.entries()[idx].f;
            assert_eq!(theta(1, f, &id).frobenius_norm(), 0.0);
            assert_eq!(theta(-1, f, &id).frobenius_norm(), 0.0);
        }
        assert!(theta_zero(&bundle, &id).frobenius_norm() < 1e-14);
    }

    #[test]
    fn theta_adjoint_swap_rule() {
        let bundle = ring4_bundle();
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..20 {
            let x = random_local(&mut rng, 4, 2);
            for idx in bundle.positive_channels() {
                let f = &bundle.entries()[idx].f;
                let lhs = theta(-1, f, &x.adjoint());
                let rhs = theta(1, f, &x).adjoint();
                assert!(lhs.sub(&rhs).frobenius_norm() < 1e-12);
            }
        }
    }

    #[test]
    fn theta_matches_dense_commutator_oracle() {
        let bundle = ring4_bundle();
        let full: Vec<usize> = (0..4).collect();
        let idx = bundle.positive_channels()[0];
        let f = &bundle.entries()[idx].f;
        let x = f.adjoint().mul(f);
        let lhs = theta(1, f, &x).embed(&full).unwrap().to_dense();
        let fd = f.embed(&full).unwrap().to_dense();
        let xd = x.embed(&full).unwrap().to_dense();
        let rhs = (&xd * &fd - &fd * &xd) * Complex64::new(0.0, -1.0);
        assert!((lhs - rhs).norm() < 1e-13);
    }

    #[test]
    fn kappa_annihilates_identity() {
        let bundle = ring4_bundle();
        let id = LocalOperator::identity(vec![0, 1, 2, 3]);
        for entry in bundle.entries() {
            assert_eq!(kappa(1, &entry.f, &id).frobenius_norm(), 0.0);
            assert_eq!(kappa(-1, &entry.f, &id).frobenius_norm(), 0.0);
        }
    }

    #[test]
    fn kappa_commutes_with_adjoint() {
        let bundle = ring4_bundle();
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let f = &bundle.entries()[bundle.positive_channels()[0]].f;
        for _ in 0..20 {
            let x = random_local(&mut rng, 4, 2);
            for sign in [1i8, -1i8] {
                let lhs = kappa(sign, f, &x).adjoint();
                let rhs = kappa(sign, f, &x.adjoint());
                assert!(lhs.sub(&rhs).frobenius_norm() < 1e-12);
            }
        }
    }

    #[test]
    fn kappa_dissipation_is_positive() {
        // κ_i(X*X) - κ_i(X*)X - X*κ_i(X) = 2 θ_{-i}(X*) θ_i(X) >= 0
        let bundle = ring4_bundle();
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let full: Vec<usize> = (0..4).collect();
        let f = &bundle.entries()[bundle.positive_channels()[1]].f;
        for _ in 0..10 {
            let x = random_local(&mut rng, 4, 2);
            for i in [1i8, -1i8] {
                let form = kappa(i, f, &x.adjoint().mul(&x))
                    .sub(&kappa(i, f, &x.adjoint()).mul(&x))
                    .sub(&x.adjoint().mul(&kappa(i, f, &x)));
                let dense = form.embed(&full).unwrap().to_dense();
                let eig = nalgebra::SymmetricEigen::new(dense);
                let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v));
                assert!(min > -1e-10, "dissipation form has eigenvalue {min}");
            }
        }
    }

    #[test]
    fn lemma1_residual_is_floating_point_noise() {
        let bundle = ring4_bundle();
        let mut rng = ChaCha12Rng::seed_from_u64(14);
        let id = LocalOperator::identity(vec![0]);
        for idx in bundle.positive_channels() {
            let f = &bundle.entries()[idx].f;
            let r = check_lemma1(f, &id, &id);
            assert_eq!(r.scaled_frobenius, 0.0);
            for _ in 0..10 {
                let x = random_local(&mut rng, 4, 2);
                let y = random_local(&mut rng, 4, 2);
                let r = check_lemma1(f, &x, &y);
                assert!(r.scaled_frobenius < 1e-12);
                assert!(r.operator_norm < 1e-11);
            }
        }
    }

    #[test]
    fn lemma1_holds_with_distant_supports() {
        let graph = CouplingGraph::path(6, 1.0).unwrap();
        let bundle = GeneratorBundle::assemble(&graph, &flat_bath()).unwrap();
        let f = &bundle.entries()[bundle.positive_channels()[0]].f;
        let x = LocalOperator::pauli(Pauli::X, 0);
        let y = LocalOperator::pauli(Pauli::Y, 5);
        let r = check_lemma1(f, &x, &y);
        assert!(r.scaled_frobenius < 1e-13);
    }

    #[test]
    fn theorem1_residual_is_floating_point_noise() {
        let bundle = ring4_bundle();
        let mut rng = ChaCha12Rng::seed_from_u64(15);
        let id = LocalOperator::identity(vec![0]);
        let r = check_theorem1(&bundle, &id, &id);
        assert!(r.max_structure < 1e-14);
        for _ in 0..10 {
            let x = random_local(&mut rng, 4, 2);
            let y = random_local(&mut rng, 4, 2);
            let r = check_theorem1(&bundle, &x, &y);
            assert!(r.max_structure < 1e-11, "structure residual {}", r.max_structure);
            assert!(r.conjugation < 1e-12, "conjugation residual {}", r.conjugation);
        }
    }

    #[test]
    fn theta_zero_adjoint_preservation() {
        let bundle = ring4_bundle();
        let mut rng = ChaCha12Rng::seed_from_u64(16);
        for _ in 0..20 {
            let x = random_local(&mut rng, 4, 2);
            let lhs = theta_zero(&bundle, &x.adjoint());
            let rhs = theta_zero(&bundle, &x).adjoint();
            assert!(lhs.sub(&rhs).frobenius_norm() < 1e-12);
        }
    }

    #[test]
    fn theta_zero_matches_pure_dissipator_oracle() {
        // single synthetic channel, imaginary parts forced to zero
        let f = LocalOperator::flip_raise(0).adjoint();
        let susc = Susceptibility {
            minus: Complex64::new(0.4, 0.0),
            plus: Complex64::new(0.1, 0.0),
            energy: 1.0,
        };
        let entry = BundleEntry {
            channel: Channel {
                site: 0,
                neighborhood: SpinConfiguration::all_down(0),
                energy: 1.0,
                sign: classify_channel(1.0, DEFAULT_NULL_TOL),
            },
            f: f.clone(),
            susc,
        };
        let bundle = GeneratorBundle::from_parts(1, vec![entry]).unwrap();
        let x = LocalOperator::pauli(Pauli::X, 0).add(&LocalOperator::pauli(Pauli::Z, 0));
        let lhs = theta_zero(&bundle, &x).to_dense();
        let fd = f.to_dense();
        let xd = x.to_dense();
        let gm = Complex64::new(2.0 * 0.4, 0.0);
        let gp = Complex64::new(2.0 * 0.1, 0.0);
        let half = Complex64::new(0.5, 0.0);
        let rhs = (fd.adjoint() * &xd * &fd - (fd.adjoint() * &fd * &xd + &xd * fd.adjoint() * &fd) * half) * gm
            + (&fd * &xd * fd.adjoint() - (&fd * fd.adjoint() * &xd + &xd * &fd * fd.adjoint()) * half) * gp;
        assert!((lhs - rhs).norm() < 1e-13);
    }

    #[test]
    fn theta_zero_stays_local() {
        let graph = CouplingGraph::path(5, 1.0).unwrap();
        let bundle = GeneratorBundle::assemble(&graph, &flat_bath()).unwrap();
        let x = LocalOperator::pauli(Pauli::Z, 0);
        let out = theta_zero(&bundle, &x);
        // channels overlapping site 0 live on sites {0, 1} and {0, 1, 2}
        assert!(out.support().iter().all(|&s| s <= 2), "support {:?}", out.support());
    }

    #[test]
    fn drift_hermitian_part_is_total_jump_strength() {
        let bundle = ring4_bundle();
        let g = drift_operator(&bundle);
        let lhs = g.add(&g.adjoint());
        let mut rhs = LocalOperator::zero(vec![]);
        for e in bundle.entries() {
            let gm = Complex64::new(e.susc.gamma_minus(), 0.0);
            let gp = Complex64::new(e.susc.gamma_plus(), 0.0);
            rhs = rhs
                .add(&e.f.adjoint().mul(&e.f).scale(gm))
                .add(&e.f.mul(&e.f.adjoint()).scale(gp));
        }
        assert!(lhs.sub(&rhs).frobenius_norm() < 1e-12);
    }

    #[test]
    fn zero_temperature_drift_loses_absorption() {
        let graph = CouplingGraph::ring(4, 1.0).unwrap();
        let cold = BathModel::new(700.0, 0.0, SpectralDensity::Flat { height: 1.0, cutoff: 10.0 })
            .unwrap();
        let bundle = GeneratorBundle::assemble(&graph, &cold).unwrap();
        for e in bundle.entries() {
            assert_eq!(e.susc.gamma_plus(), 0.0);
        }
        assert!(bundle.jumps().iter().all(|j| j.kind == JumpKind::Emission));
    }

    #[test]
    fn empty_bundle_has_zero_drift() {
        let bundle = GeneratorBundle::from_parts(2, vec![]).unwrap();
        assert_eq!(drift_operator(&bundle).frobenius_norm(), 0.0);
        assert_eq!(bundle.jumps().len(), 0);
    }

    #[test]
    fn drift_reconstructs_from_parts() {
        let bundle = ring4_bundle();
        let mut rebuilt = LocalOperator::zero(vec![]);
        for e in bundle.entries() {
            rebuilt = rebuilt
                .add(&e.f.adjoint().mul(&e.f).scale(e.susc.minus))
                .add(&e.f.mul(&e.f.adjoint()).scale(e.susc.plus.conj()));
        }
        assert!(rebuilt.sub(bundle.drift()).frobenius_norm() < 1e-12);
    }

    #[test]
    fn effective_hamiltonian_is_self_adjoint_and_only_s_minus_dressed() {
        let bundle = ring4_bundle();
        let h = bundle.effective_hamiltonian();
        assert!(h.sub(&h.adjoint()).frobenius_norm() < 1e-12);
        // jump list holds positive channels only
        for j in bundle.jumps() {
            assert_eq!(bundle.entries()[j.channel].channel.sign, SignClass::Positive);
            assert!(j.rate > 0.0);
        }
    }

    #[test]
    fn ito_table_entries() {
        let bundle = ring4_bundle();
        let table = ito_table(&bundle);
        let pos = bundle.positive_channels();
        assert_eq!(table.entries().len(), 2 * pos.len());
        let idx = pos[0];
        let s = &bundle.entries()[idx].susc;
        let (res, coeff) = table
            .product(NoiseIndex::Annihilator(idx), NoiseIndex::Creator(idx))
            .unwrap();
        assert_eq!(res, NoiseIndex::Time);
        assert_eq!(coeff, s.gamma_minus());
        let (_, coeff) = table
            .product(NoiseIndex::Creator(idx), NoiseIndex::Annihilator(idx))
            .unwrap();
        assert_eq!(coeff, s.gamma_plus());
        // normally ordered pairs vanish
        assert!(table
            .product(NoiseIndex::Annihilator(idx), NoiseIndex::Annihilator(idx))
            .is_none());
        assert_eq!(NoiseIndex::Annihilator(3).conjugate(), NoiseIndex::Creator(3));
    }

    #[test]
    fn duality_between_pictures() {
        let graph = CouplingGraph::ring(3, 1.0).unwrap();
        let bundle = GeneratorBundle::assemble(&graph, &flat_bath()).unwrap();
        let dense = DenseGenerator::new(&bundle).unwrap();
        let full: Vec<usize> = (0..3).collect();
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        for _ in 0..10 {
            let x = random_local(&mut rng, 3, 2);
            let a = DMatrix::from_fn(8, 8, |_, _| {
                Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            let rho = {
                let p = &a * a.adjoint();
                let tr = p.trace();
                p / tr
            };
            let lhs = (theta_zero(&bundle, &x).embed(&full).unwrap().to_dense() * &rho).trace();
            let rhs = (x.embed(&full).unwrap().to_dense() * dense.apply_predual(&rho)).trace();
            assert!((lhs - rhs).norm() < 1e-12, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn predual_preserves_trace() {
        let graph = CouplingGraph::ring(3, 1.0).unwrap();
        let bundle = GeneratorBundle::assemble(&graph, &flat_bath()).unwrap();
        let dense = DenseGenerator::new(&bundle).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(18);
        for _ in 0..20 {
            let a = DMatrix::from_fn(8, 8, |_, _| {
                Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            let rho = {
                let p = &a * a.adjoint();
                let tr = p.trace();
                p / tr
            };
            assert!(dense.apply_predual(&rho).trace().norm() < 1e-13);
        }
    }

    #[test]
    fn balanced_rates_make_the_maximally_mixed_state_stationary() {
        // with gamma+ = gamma- forced equal the dissipator is unital:
        // L(1/2^N) = (gamma- - gamma+)(FF* - F*F)/2^N = 0
        let graph = CouplingGraph::ring(3, 1.0).unwrap();
        let bath = flat_bath();
        let mut entries = Vec::new();
        for ch in graph.enumerate_channels(bath.null_tol).unwrap() {
            let s = bath.susceptibility_lenient(ch.energy).unwrap().0;
            let re = 0.5 * (s.minus.re + s.plus.re);
            let f = LocalOperator::build_f(&graph, ch.site, &ch.neighborhood).unwrap();
            entries.push(BundleEntry {
                channel: ch,
                f,
                susc: Susceptibility {
                    minus: Complex64::new(re, s.minus.im),
                    plus: Complex64::new(re, s.plus.im),
                    energy: s.energy,
                },
            });
        }
        let bundle = GeneratorBundle::from_parts(3, entries).unwrap();
        let dense = DenseGenerator::new(&bundle).unwrap();
        let mixed = DMatrix::from_diagonal_element(8, 8, Complex64::new(0.125, 0.0));
        assert!(dense.apply_predual(&mixed).norm() < 1e-14);
    }

    #[test]
    fn schrodinger_generator_validates_the_state() {
        let graph = CouplingGraph::ring(3, 1.0).unwrap();
        let bundle = GeneratorBundle::assemble(&graph, &flat_bath()).unwrap();
        let bad = DMatrix::from_diagonal_element(8, 8, Complex64::new(1.0, 0.0));
        assert!(matches!(
            schrodinger_generator(&bundle, &bad),
            Err(Error::NonPhysicalState(_))
        ));
        let good = DMatrix::from_diagonal_element(8, 8, Complex64::new(0.125, 0.0));
        assert!(schrodinger_generator(&bundle, &good).is_ok());
    }

    #[test]
    fn short_time_map_is_completely_positive() {
        // Choi matrix of id + dt L_* on two sites.  The Euler map dips
        // negative at second order in dt * (total rate), so weak coupling
        // keeps that artifact far below the bound being probed.
        let graph = CouplingGraph::path(2, 1.0).unwrap();
        let weak = BathModel::new(1.0, 0.0, SpectralDensity::Flat { height: 1e-3, cutoff: 10.0 })
            .unwrap();
        let bundle = GeneratorBundle::assemble(&graph, &weak).unwrap();
        let dense = DenseGenerator::new(&bundle).unwrap();
        let d = 4usize;
        let dt = Complex64::new(1e-3, 0.0);
        let mut choi = DMatrix::<Complex64>::zeros(d * d, d * d);
        for i in 0..d {
            for j in 0..d {
                let mut unit = DMatrix::<Complex64>::zeros(d, d);
                unit[(i, j)] = Complex64::new(1.0, 0.0);
                let mapped = &unit + dense.apply_predual(&unit) * dt;
                for r in 0..d {
                    for s in 0..d {
                        choi[(i * d + r, j * d + s)] = mapped[(r, s)];
                    }
                }
            }
        }
        let herm = (&choi - choi.adjoint()).norm();
        assert!(herm < 1e-12);
        let eig = nalgebra::SymmetricEigen::new(choi);
        let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v));
        assert!(min >= -1e-8, "Choi minimum eigenvalue {min}");
    }
}
