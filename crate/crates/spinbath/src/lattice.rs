//! Finite spin lattices with symmetric finite-range couplings.
//!
//! A [`CouplingGraph`] holds a finite set of sites Λ ⊂ Z^d and the coupling
//! matrix J_rs of the Ising-type Hamiltonian
//!
//! ```text
//!   H_S = -(1/2) Σ_{r,s} J_rs σ^z_r σ^z_s ,   J_rs = J_sr, J_rr = 0 .
//! ```
//!
//! A flip *channel* is a pair R = (r, σ(r)) of a site together with a spin
//! configuration of its coupled neighbourhood Σ(r) = {s : J_rs ≠ 0}.  Its
//! energy
//!
//! ```text
//!   E(r, σ(r)) = Σ_{s ∈ Σ(r)} J_rs ε_s
//! ```
//!
//! determines whether a thermal bath dissipates through the channel
//! (E > 0, sign class `Positive`), merely dresses it with a Lamb shift
//! (E < 0, `Negative`), or leaves it inert (E = 0, `Null`).
//!
//! Sites are d-tuples of integers ordered lexicographically; configuration
//! bit i corresponds to the i-th site in that order, with bit 1 meaning
//! spin +1.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Default tolerance below which a channel energy counts as zero.
pub const DEFAULT_NULL_TOL: f64 = 1e-12;

/// Guard for operations that enumerate all 2^N spin configurations.
pub const ENUMERATION_GUARD: usize = 24;

/// A lattice site: a d-tuple of integer coordinates.
pub type Site = Vec<i64>;

/// Sign class of a channel energy relative to the null tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SignClass {
    Positive,
    Negative,
    Null,
}

impl fmt::Display for SignClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SignClass::Positive => write!(f, "positive"),
            SignClass::Negative => write!(f, "negative"),
            SignClass::Null => write!(f, "null"),
        }
    }
}

/// Classify a channel energy: `Positive` if above `null_tol`, `Negative`
/// if below `-null_tol`, `Null` otherwise.
pub fn classify_channel(energy: f64, null_tol: f64) -> SignClass {
    assert!(null_tol >= 0.0, "null tolerance must be nonnegative");
    if energy > null_tol {
        SignClass::Positive
    } else if energy < -null_tol {
        SignClass::Negative
    } else {
        SignClass::Null
    }
}

/// A spin configuration: one ±1 value per position, bit-packed.
///
/// The positions it refers to (full lattice, operator support, or the
/// neighbourhood Σ(r) of a site) are a property of the context; this type
/// only stores the ordered spin values.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SpinConfiguration {
    words: Vec<u64>,
    len: usize,
}

impl SpinConfiguration {
    pub fn all_up(len: usize) -> Self {
        let mut c = Self::all_down(len);
        for w in c.words.iter_mut() {
            *w = u64::MAX;
        }
        c.mask_tail();
        c
    }

    pub fn all_down(len: usize) -> Self {
        SpinConfiguration {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    /// Build from the low `len` bits of `bits`; bit 1 means spin +1.
    pub fn from_bits(bits: u64, len: usize) -> Self {
        assert!(len <= 64, "from_bits supports at most 64 spins");
        let mut c = Self::all_down(len);
        if len > 0 {
            c.words[0] = bits & Self::low_mask(len);
        }
        c
    }

    /// Build from explicit ±1 values.
    pub fn from_spins(spins: &[i8]) -> Result<Self> {
        let mut c = Self::all_down(spins.len());
        for (i, &s) in spins.iter().enumerate() {
            match s {
                1 => c.set_spin(i, 1),
                -1 => {}
                other => {
                    return Err(Error::NonPhysicalState(format!(
                        "spin value {other} is not +1 or -1"
                    )))
                }
            }
        }
        Ok(c)
    }

    fn low_mask(len: usize) -> u64 {
        if len >= 64 {
            u64::MAX
        } else {
            (1u64 << len) - 1
        }
    }

    fn mask_tail(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Spin at position i as ±1.
    #[inline]
    pub fn spin(&self, i: usize) -> i8 {
        debug_assert!(i < self.len);
        if (self.words[i / 64] >> (i % 64)) & 1 == 1 {
            1
        } else {
            -1
        }
    }

    #[inline]
    pub fn set_spin(&mut self, i: usize, spin: i8) {
        debug_assert!(i < self.len);
        let (w, b) = (i / 64, i % 64);
        match spin {
            1 => self.words[w] |= 1u64 << b,
            _ => self.words[w] &= !(1u64 << b),
        }
    }

    #[inline]
    pub fn flip(&mut self, i: usize) {
        debug_assert!(i < self.len);
        self.words[i / 64] ^= 1u64 << (i % 64);
    }

    /// All spins reversed.
    pub fn negated(&self) -> Self {
        let mut c = self.clone();
        for w in c.words.iter_mut() {
            *w = !*w;
        }
        c.mask_tail();
        c
    }

    /// Sum of all ±1 values.
    pub fn magnetization_sum(&self) -> i64 {
        let ups: u32 = self.words.iter().map(|w| w.count_ones()).sum();
        2 * ups as i64 - self.len as i64
    }

    /// The configuration as a basis index (requires len <= 64).
    #[inline]
    pub fn index(&self) -> usize {
        assert!(self.len <= usize::BITS as usize);
        self.words.first().copied().unwrap_or(0) as usize
    }

    /// Restrict to the given positions, in the order listed.
    pub fn restrict(&self, positions: &[usize]) -> Self {
        let mut c = Self::all_down(positions.len());
        for (k, &p) in positions.iter().enumerate() {
            if self.spin(p) == 1 {
                c.set_spin(k, 1);
            }
        }
        c
    }
}

impl fmt::Display for SpinConfiguration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len {
            write!(f, "{}", if self.spin(i) == 1 { '+' } else { '-' })?;
        }
        Ok(())
    }
}

impl fmt::Debug for SpinConfiguration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SpinConfiguration({self})")
    }
}

/// A flip channel R = (site, neighbourhood configuration) with its energy
/// and sign class.
///
/// The neighbourhood configuration is ordered like
/// [`CouplingGraph::sigma`] for the channel's site.  Channels produced by
/// [`CouplingGraph::enumerate_channels`] always satisfy
/// `energy == energy_difference(site, neighborhood)`.
#[derive(Debug, Clone)]
pub struct Channel {
    pub site: usize,
    pub neighborhood: SpinConfiguration,
    pub energy: f64,
    pub sign: SignClass,
}

/// Finite lattice with symmetric couplings; immutable after construction.
#[derive(Debug, Clone)]
pub struct CouplingGraph {
    dimension: usize,
    sites: Vec<Site>,
    /// Adjacency per site, sorted by neighbour index; lists only J ≠ 0.
    neighbors: Vec<Vec<(usize, f64)>>,
}

impl CouplingGraph {
    /// Build a graph from an explicit site list and coupling entries.
    ///
    /// Each unordered pair may appear at most once; self-couplings are
    /// rejected.  Entries with J = 0 are dropped.
    pub fn new(dimension: usize, sites: Vec<Site>, couplings: &[(Site, Site, f64)]) -> Result<Self> {
        for s in &sites {
            if s.len() != dimension {
                return Err(Error::DimensionMismatch(s.clone(), s.len(), dimension));
            }
        }
        let mut sorted = sites;
        sorted.sort();
        for w in sorted.windows(2) {
            if w[0] == w[1] {
                return Err(Error::DuplicateSite(w[0].clone()));
            }
        }
        let index: HashMap<&Site, usize> = sorted.iter().enumerate().map(|(i, s)| (s, i)).collect();
        let mut pair_j: HashMap<(usize, usize), f64> = HashMap::new();
        for (r, s, j) in couplings {
            let &ri = index.get(r).ok_or_else(|| Error::UnknownSite(r.clone()))?;
            let &si = index.get(s).ok_or_else(|| Error::UnknownSite(s.clone()))?;
            if ri == si {
                return Err(Error::SelfCoupling(r.clone()));
            }
            let key = (ri.min(si), ri.max(si));
            if let Some(&prev) = pair_j.get(&key) {
                return Err(Error::DuplicateCoupling(r.clone(), s.clone(), prev, *j));
            }
            pair_j.insert(key, *j);
        }
        let mut neighbors = vec![Vec::new(); sorted.len()];
        for (&(a, b), &j) in &pair_j {
            if j != 0.0 {
                neighbors[a].push((b, j));
                neighbors[b].push((a, j));
            }
        }
        for list in neighbors.iter_mut() {
            list.sort_by_key(|&(i, _)| i);
        }
        Ok(CouplingGraph {
            dimension,
            sites: sorted,
            neighbors,
        })
    }

    /// One-dimensional ring of `n >= 3` sites with uniform coupling `j`.
    pub fn ring(n: usize, j: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::Unsupported(format!(
                "a ring needs at least 3 sites (got {n}); use a path instead"
            )));
        }
        let sites: Vec<Site> = (0..n).map(|i| vec![i as i64]).collect();
        let couplings: Vec<(Site, Site, f64)> = (0..n)
            .map(|i| (vec![i as i64], vec![((i + 1) % n) as i64], j))
            .collect();
        Self::new(1, sites, &couplings)
    }

    /// One-dimensional open chain of `n >= 1` sites with uniform coupling `j`.
    pub fn path(n: usize, j: f64) -> Result<Self> {
        let sites: Vec<Site> = (0..n).map(|i| vec![i as i64]).collect();
        let couplings: Vec<(Site, Site, f64)> = (0..n.saturating_sub(1))
            .map(|i| (vec![i as i64], vec![(i + 1) as i64], j))
            .collect();
        Self::new(1, sites, &couplings)
    }

    /// d-dimensional open grid with nearest-neighbour coupling `j`.
    pub fn grid(extent: &[usize], j: f64) -> Result<Self> {
        if extent.is_empty() || extent.iter().any(|&e| e == 0) {
            return Err(Error::Unsupported(
                "grid extent must be a nonempty list of positive integers".into(),
            ));
        }
        let d = extent.len();
        let mut sites: Vec<Site> = vec![vec![0; d]];
        for (axis, &e) in extent.iter().enumerate() {
            let mut next = Vec::with_capacity(sites.len() * e);
            for s in &sites {
                for v in 0..e {
                    let mut t = s.clone();
                    t[axis] = v as i64;
                    next.push(t);
                }
            }
            sites = next;
        }
        let mut couplings = Vec::new();
        for s in &sites {
            for axis in 0..d {
                if s[axis] + 1 < extent[axis] as i64 {
                    let mut t = s.clone();
                    t[axis] += 1;
                    couplings.push((s.clone(), t, j));
                }
            }
        }
        Self::new(d, sites, &couplings)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn site(&self, i: usize) -> &Site {
        &self.sites[i]
    }

    pub fn site_index(&self, site: &Site) -> Option<usize> {
        self.sites.binary_search(site).ok()
    }

    /// Coupled neighbours of site `r` with their couplings, sorted by index.
    pub fn neighbors(&self, r: usize) -> &[(usize, f64)] {
        &self.neighbors[r]
    }

    /// The neighbourhood Σ(r): indices of sites coupled to `r`.
    pub fn sigma(&self, r: usize) -> Vec<usize> {
        self.neighbors[r].iter().map(|&(s, _)| s).collect()
    }

    pub fn coupling(&self, r: usize, s: usize) -> f64 {
        self.neighbors[r]
            .iter()
            .find(|&&(i, _)| i == s)
            .map_or(0.0, |&(_, j)| j)
    }

    /// Channel energy E(r, σ(r)) = Σ_{s ∈ Σ(r)} J_rs ε_s for a neighbourhood
    /// configuration ordered like [`Self::sigma`].
    pub fn energy_difference(&self, r: usize, sigma: &SpinConfiguration) -> Result<f64> {
        let needed = self.neighbors[r].len();
        if sigma.len() != needed {
            return Err(Error::IncompleteConfiguration {
                context: format!("neighbourhood of site {r}"),
                needed,
                found: sigma.len(),
            });
        }
        Ok(self.neighbors[r]
            .iter()
            .enumerate()
            .map(|(k, &(_, j))| j * f64::from(sigma.spin(k)))
            .sum())
    }

    /// Channel energy at site `r` inside a full lattice configuration.
    pub fn energy_difference_at(&self, r: usize, config: &SpinConfiguration) -> f64 {
        self.neighbors[r]
            .iter()
            .map(|&(s, j)| j * f64::from(config.spin(s)))
            .sum()
    }

    /// One channel per (site, neighbourhood configuration), with energies
    /// and sign classes filled in.  Ordered by site, then by neighbourhood
    /// bits ascending.
    pub fn enumerate_channels(&self, null_tol: f64) -> Result<Vec<Channel>> {
        let mut channels = Vec::new();
        for r in 0..self.n_sites() {
            let deg = self.neighbors[r].len();
            if deg >= ENUMERATION_GUARD {
                return Err(Error::SizeGuard {
                    what: "channel enumeration (neighbourhood size)",
                    n: deg,
                    max: ENUMERATION_GUARD - 1,
                });
            }
            for bits in 0..(1u64 << deg) {
                let neighborhood = SpinConfiguration::from_bits(bits, deg);
                let energy = self.energy_difference(r, &neighborhood)?;
                channels.push(Channel {
                    site: r,
                    neighborhood,
                    energy,
                    sign: classify_channel(energy, null_tol),
                });
            }
        }
        Ok(channels)
    }

    /// Total energy H_S(σ) = -(1/2) Σ_{r,s} J_rs ε_r ε_s.
    pub fn system_energy(&self, config: &SpinConfiguration) -> Result<f64> {
        if config.len() != self.n_sites() {
            return Err(Error::IncompleteConfiguration {
                context: "system energy".into(),
                needed: self.n_sites(),
                found: config.len(),
            });
        }
        let mut sum = 0.0;
        for r in 0..self.n_sites() {
            let er = f64::from(config.spin(r));
            for &(s, j) in &self.neighbors[r] {
                sum += j * er * f64::from(config.spin(s));
            }
        }
        Ok(-0.5 * sum)
    }

    /// Gibbs weights p(σ) ∝ exp(-β H_S(σ)) over all 2^N configurations,
    /// indexed by configuration bits.  Computed with a max shift so large β
    /// cannot overflow.
    pub fn gibbs_distribution(&self, beta: f64) -> Result<Vec<f64>> {
        if beta <= 0.0 {
            return Err(Error::InvalidBeta(beta));
        }
        let n = self.n_sites();
        if n > ENUMERATION_GUARD {
            return Err(Error::SizeGuard {
                what: "Gibbs distribution",
                n,
                max: ENUMERATION_GUARD,
            });
        }
        let dim = 1usize << n;
        let mut exponents = Vec::with_capacity(dim);
        for bits in 0..dim {
            let config = SpinConfiguration::from_bits(bits as u64, n);
            exponents.push(-beta * self.system_energy(&config)?);
        }
        let max = exponents.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut weights: Vec<f64> = exponents.iter().map(|&x| (x - max).exp()).collect();
        let norm: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= norm;
        }
        Ok(weights)
    }

    /// Convenience wrapper returning an `Arc` for shared ownership.
    pub fn into_shared(self) -> Arc<Self> {
        Arc::new(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring4() -> CouplingGraph {
        CouplingGraph::ring(4, 1.0).unwrap()
    }

    #[test]
    fn ring_has_two_neighbors_per_site() {
        let g = ring4();
        for r in 0..4 {
            assert_eq!(g.neighbors(r).len(), 2);
        }
    }

    #[test]
    fn empty_coupling_list_gives_no_channels_with_nonzero_energy() {
        let sites: Vec<Site> = (0..3).map(|i| vec![i]).collect();
        let g = CouplingGraph::new(1, sites, &[]).unwrap();
        for r in 0..3 {
            assert!(g.sigma(r).is_empty());
        }
        let channels = g.enumerate_channels(DEFAULT_NULL_TOL).unwrap();
        assert_eq!(channels.len(), 3); // one per site, empty neighbourhood
        assert!(channels.iter().all(|c| c.energy == 0.0 && c.sign == SignClass::Null));
    }

    #[test]
    fn contradictory_duplicate_coupling_rejected() {
        let sites = vec![vec![0], vec![1]];
        let couplings = vec![
            (vec![0], vec![1], 1.0),
            (vec![1], vec![0], 2.0),
        ];
        let err = CouplingGraph::new(1, sites, &couplings).unwrap_err();
        assert!(matches!(err, Error::DuplicateCoupling(..)));
    }

    #[test]
    fn self_coupling_rejected() {
        let sites = vec![vec![0], vec![1]];
        let err = CouplingGraph::new(1, sites, &[(vec![0], vec![0], 1.0)]).unwrap_err();
        assert!(matches!(err, Error::SelfCoupling(..)));
    }

    #[test]
    fn nearest_neighbor_energy_difference() {
        let g = ring4();
        // neighbours of site 0 are sites 1 and 3, J = 1 each
        let pp = SpinConfiguration::from_spins(&[1, 1]).unwrap();
        let pm = SpinConfiguration::from_spins(&[1, -1]).unwrap();
        assert_eq!(g.energy_difference(0, &pp).unwrap(), 2.0);
        assert_eq!(g.energy_difference(0, &pm).unwrap(), 0.0);
    }

    #[test]
    fn energy_difference_missing_site_is_error() {
        let g = ring4();
        let short = SpinConfiguration::from_spins(&[1]).unwrap();
        assert!(g.energy_difference(0, &short).is_err());
    }

    #[test]
    fn classify_channel_examples() {
        assert_eq!(classify_channel(2.0, 1e-12), SignClass::Positive);
        assert_eq!(classify_channel(-2.0, 1e-12), SignClass::Negative);
        assert_eq!(classify_channel(0.0, 1e-12), SignClass::Null);
    }

    #[test]
    fn ring4_channel_census() {
        let g = ring4();
        let channels = g.enumerate_channels(DEFAULT_NULL_TOL).unwrap();
        assert_eq!(channels.len(), 16);
        let positive: Vec<_> = channels
            .iter()
            .filter(|c| c.sign == SignClass::Positive)
            .collect();
        assert_eq!(positive.len(), 4);
        for c in positive {
            // only the ++ neighbourhood survives
            assert_eq!(c.energy, 2.0);
            assert_eq!(c.neighborhood.to_string(), "++");
        }
    }

    #[test]
    fn channel_count_matches_combinatorics() {
        let g = CouplingGraph::grid(&[2, 3], 0.7).unwrap();
        let channels = g.enumerate_channels(DEFAULT_NULL_TOL).unwrap();
        let expected: usize = (0..g.n_sites()).map(|r| 1usize << g.neighbors(r).len()).sum();
        assert_eq!(channels.len(), expected);
    }

    #[test]
    fn channel_antisymmetry_and_partition() {
        let g = CouplingGraph::grid(&[2, 2], -0.6).unwrap();
        let channels = g.enumerate_channels(DEFAULT_NULL_TOL).unwrap();
        let mut n_pos = 0;
        let mut n_neg = 0;
        for c in &channels {
            let e_flip = g.energy_difference(c.site, &c.neighborhood.negated()).unwrap();
            // same sum with flipped signs, so exactly the negation bit for bit
            assert_eq!(e_flip, -c.energy);
            match c.sign {
                SignClass::Positive => n_pos += 1,
                SignClass::Negative => n_neg += 1,
                SignClass::Null => {}
            }
        }
        assert_eq!(n_pos, n_neg);
    }

    #[test]
    fn system_energy_all_up_ring() {
        let g = ring4();
        let up = SpinConfiguration::all_up(4);
        // 8 ordered bonds of strength 1, times -1/2
        assert_eq!(g.system_energy(&up).unwrap(), -4.0);
        // global Z2 symmetry
        let down = SpinConfiguration::all_down(4);
        assert_eq!(g.system_energy(&down).unwrap(), -4.0);
    }

    #[test]
    fn system_energy_no_couplings_is_zero() {
        let g = CouplingGraph::new(1, vec![vec![0], vec![1]], &[]).unwrap();
        let c = SpinConfiguration::from_bits(0b01, 2);
        assert_eq!(g.system_energy(&c).unwrap(), 0.0);
    }

    #[test]
    fn flip_energy_is_twice_the_channel_energy() {
        // The spectral gap of H_S across a single flip is 2 E(r, sigma);
        // the uniform multiple is reported, never silently rescaled.
        let g = CouplingGraph::grid(&[3, 2], 0.8).unwrap();
        for bits in 0..(1u64 << 6) {
            let config = SpinConfiguration::from_bits(bits, 6);
            for r in 0..6 {
                let e = g.energy_difference_at(r, &config);
                let mut flipped = config.clone();
                flipped.flip(r);
                let dh = g.system_energy(&flipped).unwrap() - g.system_energy(&config).unwrap();
                // flipping spin eps_r changes H_S by 2 eps_r E
                let expected = 2.0 * f64::from(config.spin(r)) * e;
                assert!((dh - expected).abs() < 1e-12, "dh={dh} expected={expected}");
            }
        }
    }

    #[test]
    fn gibbs_single_free_site_is_uniform() {
        let g = CouplingGraph::new(1, vec![vec![0]], &[]).unwrap();
        let p = g.gibbs_distribution(1.0).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn gibbs_high_temperature_limit_is_uniform() {
        let g = ring4();
        let p = g.gibbs_distribution(1e-12).unwrap();
        for &w in &p {
            assert!((w - 1.0 / 16.0).abs() < 1e-9);
        }
    }

    #[test]
    fn gibbs_matches_brute_force_oracle() {
        let g = ring4();
        let beta = 1.0;
        // independent oracle: unordered bond list of the ring
        let bonds = [(0usize, 1usize), (1, 2), (2, 3), (3, 0)];
        let mut weights = Vec::new();
        for bits in 0..16u64 {
            let c = SpinConfiguration::from_bits(bits, 4);
            let h: f64 = bonds
                .iter()
                .map(|&(a, b)| -f64::from(c.spin(a)) * f64::from(c.spin(b)))
                .sum();
            weights.push((-beta * h).exp());
        }
        let norm: f64 = weights.iter().sum();
        let p = g.gibbs_distribution(beta).unwrap();
        for (computed, expected) in p.iter().zip(weights.iter().map(|w| w / norm)) {
            assert!((computed - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn gibbs_survives_extreme_beta_via_the_max_shift() {
        let g = ring4();
        let p = g.gibbs_distribution(700.0).unwrap();
        assert!(p.iter().all(|w| w.is_finite()));
        // only the two aligned ground states survive
        let up = SpinConfiguration::all_up(4).index();
        let down = SpinConfiguration::all_down(4).index();
        assert!((p[up] - 0.5).abs() < 1e-12);
        assert!((p[down] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn gibbs_guards() {
        let g = ring4();
        assert!(matches!(g.gibbs_distribution(0.0), Err(Error::InvalidBeta(_))));
        assert!(matches!(g.gibbs_distribution(-1.0), Err(Error::InvalidBeta(_))));
    }

    #[test]
    fn spin_configuration_basics() {
        let mut c = SpinConfiguration::from_bits(0b0101, 4);
        assert_eq!(c.to_string(), "+-+-");
        assert_eq!(c.spin(0), 1);
        assert_eq!(c.spin(1), -1);
        assert_eq!(c.magnetization_sum(), 0);
        c.flip(1);
        assert_eq!(c.to_string(), "+++-");
        assert_eq!(c.negated().to_string(), "---+");
        assert_eq!(c.restrict(&[0, 3]).to_string(), "+-");
    }

    #[test]
    fn large_configuration_across_word_boundary() {
        let mut c = SpinConfiguration::all_down(130);
        c.set_spin(0, 1);
        c.set_spin(64, 1);
        c.set_spin(129, 1);
        assert_eq!(c.magnetization_sum(), 3 - 127);
        assert_eq!(c.spin(64), 1);
        c.flip(64);
        assert_eq!(c.spin(64), -1);
    }
}
