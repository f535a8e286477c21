//! Sparse complex operators on the spin configuration space.
//!
//! A [`LocalOperator`] acts on the 2^|support| dimensional space spanned by
//! the configurations of an explicit, ordered set of sites.  Storage is by
//! column; the flip operators built here (D, G, F) have at most one nonzero
//! per column, which [`LocalOperator::apply_basis`] exploits.
//!
//! The building blocks of the dissipative dynamics are
//!
//! ```text
//!   D_r       = |+1><-1|  at site r            (raises the spin)
//!   G_{r,σ}   = D_r Π_{s ∈ Σ(r)} |ε_s><ε_s|    (raise, neighbourhood = σ)
//!   F_{r,σ}   = G*_{r,-σ} + G_{r,σ}            (flip or annihilate)
//! ```
//!
//! F_{r,σ} is a partial isometry: F*F and FF* are diagonal 0/1 projections
//! in the configuration basis.  Note F_{r,-σ} = F*_{r,σ}.
//!
//! All values are immutable after construction; algebra operations return
//! new operators, unifying supports by tensoring with the identity first.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::{CouplingGraph, SpinConfiguration};

/// Pauli axis label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pauli {
    X,
    Y,
    Z,
}

/// Result of applying a flip-type operator to a basis configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum BasisAction {
    Annihilated,
    Mapped {
        config: SpinConfiguration,
        amplitude: Complex64,
    },
}

/// Result of applying a general operator to a basis configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum ApplyOutcome {
    Action(BasisAction),
    Column(Vec<(SpinConfiguration, Complex64)>),
}

/// Binary algebra operations on operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgebraKind {
    Product,
    Commutator,
    Anticommutator,
}

/// Sparse complex operator with an explicit site support.
#[derive(Clone)]
pub struct LocalOperator {
    support: Vec<usize>,
    cols: Vec<Vec<(usize, Complex64)>>,
    tag: String,
}

impl fmt::Debug for LocalOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "LocalOperator(tag={}, support={:?}, nnz={})",
            self.tag,
            self.support,
            self.nnz()
        )
    }
}

fn assert_support(support: &[usize]) {
    assert!(
        support.windows(2).all(|w| w[0] < w[1]),
        "operator support must be strictly sorted"
    );
    assert!(support.len() < usize::BITS as usize, "support too large");
}

impl LocalOperator {
    pub fn zero(support: Vec<usize>) -> Self {
        assert_support(&support);
        let dim = 1usize << support.len();
        LocalOperator {
            support,
            cols: vec![Vec::new(); dim],
            tag: String::new(),
        }
    }

    pub fn identity(support: Vec<usize>) -> Self {
        let mut op = Self::zero(support);
        for c in 0..op.dim() {
            op.cols[c].push((c, Complex64::new(1.0, 0.0)));
        }
        op.tag = "identity".into();
        op
    }

    /// Diagonal operator from explicit diagonal values.
    pub fn diagonal(support: Vec<usize>, values: &[Complex64]) -> Self {
        let mut op = Self::zero(support);
        assert_eq!(values.len(), op.dim());
        for (c, &v) in values.iter().enumerate() {
            if v != Complex64::ZERO {
                op.cols[c].push((c, v));
            }
        }
        op
    }

    pub fn from_entries(support: Vec<usize>, entries: &[(usize, usize, Complex64)]) -> Self {
        let mut op = Self::zero(support);
        for &(row, col, z) in entries {
            assert!(row < op.dim() && col < op.dim());
            if z != Complex64::ZERO {
                op.cols[col].push((row, z));
            }
        }
        for col in op.cols.iter_mut() {
            col.sort_by_key(|&(r, _)| r);
        }
        op
    }

    pub fn from_dense(support: Vec<usize>, mat: &DMatrix<Complex64>) -> Self {
        let mut op = Self::zero(support);
        assert_eq!(mat.nrows(), op.dim());
        assert_eq!(mat.ncols(), op.dim());
        for c in 0..op.dim() {
            for r in 0..op.dim() {
                let z = mat[(r, c)];
                if z != Complex64::ZERO {
                    op.cols[c].push((r, z));
                }
            }
        }
        op
    }

    /// Standard Pauli matrix at a single site.
    pub fn pauli(axis: Pauli, site: usize) -> Self {
        let one = Complex64::new(1.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        // basis index 0 is spin -1, index 1 is spin +1
        let entries: Vec<(usize, usize, Complex64)> = match axis {
            Pauli::X => vec![(1, 0, one), (0, 1, one)],
            Pauli::Y => vec![(1, 0, -i), (0, 1, i)],
            Pauli::Z => vec![(0, 0, -one), (1, 1, one)],
        };
        let mut op = Self::from_entries(vec![site], &entries);
        op.tag = format!("sigma_{:?}({site})", axis).to_lowercase();
        op
    }

    /// D_r = |+1><-1|: raises the spin at `site` or annihilates.
    pub fn flip_raise(site: usize) -> Self {
        let mut op = Self::from_entries(vec![site], &[(1, 0, Complex64::new(1.0, 0.0))]);
        op.tag = format!("D({site})");
        op
    }

    /// Projector |ε><ε| at a single site.
    pub fn projector(site: usize, spin: i8) -> Self {
        let idx = usize::from(spin == 1);
        let mut op = Self::from_entries(vec![site], &[(idx, idx, Complex64::new(1.0, 0.0))]);
        op.tag = format!("P({site},{})", if spin == 1 { '+' } else { '-' });
        op
    }

    /// G_{r,σ} = D_r Π_{s ∈ Σ(r)} |ε_s><ε_s|: raises the spin at `r` when the
    /// neighbourhood matches `sigma`, otherwise annihilates.
    pub fn build_g(graph: &CouplingGraph, r: usize, sigma: &SpinConfiguration) -> Result<Self> {
        let neighbors = graph.sigma(r);
        if sigma.len() != neighbors.len() {
            return Err(Error::IncompleteConfiguration {
                context: format!("neighbourhood of site {r}"),
                needed: neighbors.len(),
                found: sigma.len(),
            });
        }
        let mut support: Vec<usize> = neighbors.clone();
        support.push(r);
        support.sort_unstable();
        let center_pos = support.binary_search(&r).unwrap();
        // bit pattern the neighbourhood must match, in support-local positions
        let mut required: usize = 0;
        let mut neighbor_mask: usize = 0;
        for (k, &s) in neighbors.iter().enumerate() {
            let pos = support.binary_search(&s).unwrap();
            neighbor_mask |= 1 << pos;
            if sigma.spin(k) == 1 {
                required |= 1 << pos;
            }
        }
        let mut op = Self::zero(support);
        let center_bit = 1usize << center_pos;
        for c in 0..op.dim() {
            if c & neighbor_mask == required && c & center_bit == 0 {
                op.cols[c].push((c | center_bit, Complex64::new(1.0, 0.0)));
            }
        }
        op.tag = format!("G({r},{sigma})");
        Ok(op)
    }

    /// F_{r,σ} = G*_{r,-σ} + G_{r,σ}: flips the spin at `r` (raise when the
    /// neighbourhood is σ, lower when it is -σ) or annihilates.
    pub fn build_f(graph: &CouplingGraph, r: usize, sigma: &SpinConfiguration) -> Result<Self> {
        let raise = Self::build_g(graph, r, sigma)?;
        let lower = Self::build_g(graph, r, &sigma.negated())?.adjoint();
        let mut op = raise.add(&lower);
        op.tag = format!("F({r},{sigma})");
        Ok(op)
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn dim(&self) -> usize {
        1usize << self.support.len()
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = tag.into();
        self
    }

    pub fn nnz(&self) -> usize {
        self.cols.iter().map(Vec::len).sum()
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.cols[col]
            .iter()
            .find(|&&(r, _)| r == row)
            .map_or(Complex64::ZERO, |&(_, z)| z)
    }

    pub fn column(&self, col: usize) -> &[(usize, Complex64)] {
        &self.cols[col]
    }

    /// Hermitian adjoint.
    pub fn adjoint(&self) -> Self {
        let mut out = Self::zero(self.support.clone());
        for (c, col) in self.cols.iter().enumerate() {
            for &(r, z) in col {
                out.cols[r].push((c, z.conj()));
            }
        }
        for col in out.cols.iter_mut() {
            col.sort_by_key(|&(r, _)| r);
        }
        out.tag = format!("{}*", self.tag);
        out
    }

    pub fn scale(&self, z: Complex64) -> Self {
        let mut out = self.clone();
        if z == Complex64::ZERO {
            return Self::zero(self.support.clone());
        }
        for col in out.cols.iter_mut() {
            for e in col.iter_mut() {
                e.1 *= z;
            }
        }
        out
    }

    fn union_support(&self, other: &Self) -> Vec<usize> {
        let mut s: Vec<usize> = self
            .support
            .iter()
            .chain(other.support.iter())
            .copied()
            .collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Tensor with the identity so the operator acts on `target` sites.
    pub fn embed(&self, target: &[usize]) -> Result<Self> {
        assert_support(target);
        if target == self.support.as_slice() {
            return Ok(self.clone());
        }
        let mut positions = Vec::with_capacity(self.support.len());
        for &s in &self.support {
            match target.binary_search(&s) {
                Ok(p) => positions.push(p),
                Err(_) => {
                    return Err(Error::SupportNotContained(
                        self.support.clone(),
                        target.to_vec(),
                    ))
                }
            }
        }
        let mut support_mask: usize = 0;
        for &p in &positions {
            support_mask |= 1 << p;
        }
        let place = |local: usize| -> usize {
            let mut out = 0usize;
            for (k, &p) in positions.iter().enumerate() {
                out |= ((local >> k) & 1) << p;
            }
            out
        };
        let gather = |global: usize| -> usize {
            let mut out = 0usize;
            for (k, &p) in positions.iter().enumerate() {
                out |= ((global >> p) & 1) << k;
            }
            out
        };
        let mut out = Self::zero(target.to_vec());
        for ct in 0..out.dim() {
            let off = ct & !support_mask;
            let c_local = gather(ct);
            for &(r_local, z) in &self.cols[c_local] {
                out.cols[ct].push((place(r_local) | off, z));
            }
            out.cols[ct].sort_by_key(|&(r, _)| r);
        }
        out.tag = self.tag.clone();
        Ok(out)
    }

    /// Embed both operators onto the union of their supports.
    pub fn aligned(&self, other: &Self) -> (Self, Self) {
        let union = self.union_support(other);
        (
            self.embed(&union).expect("subset by construction"),
            other.embed(&union).expect("subset by construction"),
        )
    }

    pub fn add(&self, other: &Self) -> Self {
        let (a, b) = self.aligned(other);
        let mut out = Self::zero(a.support.clone());
        for c in 0..out.dim() {
            out.cols[c] = merge_columns(&a.cols[c], &b.cols[c], Complex64::new(1.0, 0.0));
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let (a, b) = self.aligned(other);
        let mut out = Self::zero(a.support.clone());
        for c in 0..out.dim() {
            out.cols[c] = merge_columns(&a.cols[c], &b.cols[c], Complex64::new(-1.0, 0.0));
        }
        out
    }

    /// Matrix product self · other on the union support.
    pub fn mul(&self, other: &Self) -> Self {
        let (a, b) = self.aligned(other);
        let mut out = Self::zero(a.support.clone());
        let mut scratch: Vec<(usize, Complex64)> = Vec::new();
        for c in 0..out.dim() {
            scratch.clear();
            for &(k, zb) in &b.cols[c] {
                for &(r, za) in &a.cols[k] {
                    scratch.push((r, za * zb));
                }
            }
            scratch.sort_by_key(|&(r, _)| r);
            let mut merged: Vec<(usize, Complex64)> = Vec::with_capacity(scratch.len());
            for &(r, z) in scratch.iter() {
                match merged.last_mut() {
                    Some(last) if last.0 == r => last.1 += z,
                    _ => merged.push((r, z)),
                }
            }
            merged.retain(|&(_, z)| z != Complex64::ZERO);
            out.cols[c] = merged;
        }
        out
    }

    pub fn commutator(&self, other: &Self) -> Self {
        self.mul(other).sub(&other.mul(self))
    }

    pub fn anticommutator(&self, other: &Self) -> Self {
        self.mul(other).add(&other.mul(self))
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim()).map(|c| self.entry(c, c)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.cols
            .iter()
            .flatten()
            .map(|&(_, z)| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Frobenius norm divided by the matrix dimension; the residual measure
    /// used by the identity checks.
    pub fn scaled_frobenius_norm(&self) -> f64 {
        self.frobenius_norm() / self.dim() as f64
    }

    /// Spectral norm via a dense SVD; intended for small supports only.
    pub fn operator_norm(&self) -> f64 {
        if self.nnz() == 0 {
            return 0.0;
        }
        let svd = self.to_dense().svd(false, false);
        svd.singular_values.iter().fold(0.0f64, |m, &s| m.max(s))
    }

    pub fn max_offdiag(&self) -> f64 {
        let mut m = 0.0f64;
        for (c, col) in self.cols.iter().enumerate() {
            for &(r, z) in col {
                if r != c {
                    m = m.max(z.norm());
                }
            }
        }
        m
    }

    pub fn is_diagonal(&self, tol: f64) -> bool {
        self.max_offdiag() <= tol
    }

    pub fn diagonal_values(&self) -> Vec<Complex64> {
        (0..self.dim()).map(|c| self.entry(c, c)).collect()
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        for (c, col) in self.cols.iter().enumerate() {
            for &(r, z) in col {
                m[(r, c)] = z;
            }
        }
        m
    }

    /// Apply to a basis configuration given on the full lattice (or any
    /// superset of the support, indexed by global site).
    ///
    /// Returns a [`BasisAction`] when the image has at most one basis
    /// component (the flip-operator fast path), otherwise the full column.
    pub fn apply_basis(&self, config: &SpinConfiguration) -> Result<ApplyOutcome> {
        if let Some(&max_site) = self.support.last() {
            if config.len() <= max_site {
                return Err(Error::IncompleteConfiguration {
                    context: format!("application of {}", self.tag),
                    needed: max_site + 1,
                    found: config.len(),
                });
            }
        }
        let mut c_local = 0usize;
        for (k, &s) in self.support.iter().enumerate() {
            if config.spin(s) == 1 {
                c_local |= 1 << k;
            }
        }
        let col = &self.cols[c_local];
        let rebuild = |row: usize| {
            let mut out = config.clone();
            for (k, &s) in self.support.iter().enumerate() {
                out.set_spin(s, if (row >> k) & 1 == 1 { 1 } else { -1 });
            }
            out
        };
        match col.len() {
            0 => Ok(ApplyOutcome::Action(BasisAction::Annihilated)),
            1 => Ok(ApplyOutcome::Action(BasisAction::Mapped {
                config: rebuild(col[0].0),
                amplitude: col[0].1,
            })),
            _ => Ok(ApplyOutcome::Column(
                col.iter().map(|&(r, z)| (rebuild(r), z)).collect(),
            )),
        }
    }
}

fn merge_columns(
    a: &[(usize, Complex64)],
    b: &[(usize, Complex64)],
    b_scale: Complex64,
) -> Vec<(usize, Complex64)> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&(ra, za)), Some(&(rb, zb))) => {
                if ra < rb {
                    i += 1;
                    (ra, za)
                } else if rb < ra {
                    j += 1;
                    (rb, zb * b_scale)
                } else {
                    i += 1;
                    j += 1;
                    (ra, za + zb * b_scale)
                }
            }
            (Some(&(ra, za)), None) => {
                i += 1;
                (ra, za)
            }
            (None, Some(&(rb, zb))) => {
                j += 1;
                (rb, zb * b_scale)
            }
            (None, None) => unreachable!(),
        };
        if next.1 != Complex64::ZERO {
            out.push(next);
        }
    }
    out
}

/// Binary algebra entry point matching the operation table.
pub fn algebra(a: &LocalOperator, b: &LocalOperator, kind: AlgebraKind) -> LocalOperator {
    match kind {
        AlgebraKind::Product => a.mul(b),
        AlgebraKind::Commutator => a.commutator(b),
        AlgebraKind::Anticommutator => a.anticommutator(b),
    }
}
