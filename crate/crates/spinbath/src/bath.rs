//! Thermal boson bath: spectral density, Bose occupation, and the
//! generalized susceptibilities that feed the Markovian generator.
//!
//! The bath enters the dynamics only through one function of energy,
//! the spectral density I(E) >= 0 supported on E > 0, together with the
//! inverse temperature β and chemical potential μ.  For each channel
//! energy E the pair of susceptibilities is
//!
//! ```text
//!   (g|g)^-  =  ∫ dω I(ω) [ π δ(ω-E) - i PV 1/(ω-E) ] (1 + n(ω))
//!   (g|g)^+  =  ∫ dω I(ω) [ π δ(ω-E) - i PV 1/(ω-E) ] n(ω)
//! ```
//!
//! with n(ω) = 1/(e^{β(ω-μ)} - 1).  Real parts are transition rates
//! (times 1/2) and vanish unless E > 0 lies in the support of I; imaginary
//! parts are Lamb shifts and are generically nonzero for every sign of E.
//! The convention is fixed so that the drift reads
//! Σ_R [ F*F (g|g)^- + FF* conj((g|g)^+) ]; see `docs/derivations.md`.
//!
//! Principal values are computed by symmetric pole exclusion plus an
//! odd-part correction, Richardson-extrapolated over the ladder
//! (ε, ε/2, ε/4).

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::DEFAULT_NULL_TOL;

/// Default number of quadrature panels across the support.
pub const DEFAULT_PV_PANELS: usize = 4096;

/// Gauss-Legendre points per panel.
const GL_POINTS: usize = 12;

/// Bath spectral density I(E); zero outside its support.
#[derive(Debug, Clone, PartialEq)]
pub enum SpectralDensity {
    /// Constant `height` on (0, cutoff].
    Flat { height: f64, cutoff: f64 },
    /// η E e^{-E/cutoff} on E > 0.
    Ohmic { eta: f64, cutoff: f64 },
    /// Tabulated (energy, density) pairs, linearly interpolated, zero
    /// outside the grid.
    Table { points: Vec<(f64, f64)> },
}

impl SpectralDensity {
    pub fn value(&self, e: f64) -> f64 {
        match self {
            SpectralDensity::Flat { height, cutoff } => {
                if e > 0.0 && e <= *cutoff {
                    *height
                } else {
                    0.0
                }
            }
            SpectralDensity::Ohmic { eta, cutoff } => {
                if e > 0.0 {
                    eta * e * (-e / cutoff).exp()
                } else {
                    0.0
                }
            }
            SpectralDensity::Table { points } => {
                if points.is_empty() {
                    return 0.0;
                }
                let (lo, hi) = (points[0].0, points[points.len() - 1].0);
                if e < lo || e > hi {
                    return 0.0;
                }
                let k = points.partition_point(|&(x, _)| x <= e);
                if k == 0 {
                    return points[0].1;
                }
                if k == points.len() {
                    return points[points.len() - 1].1;
                }
                let (x0, y0) = points[k - 1];
                let (x1, y1) = points[k];
                y0 + (y1 - y0) * (e - x0) / (x1 - x0)
            }
        }
    }

    /// Integration domain covering the support.
    pub fn support(&self) -> (f64, f64) {
        match self {
            SpectralDensity::Flat { cutoff, .. } => (0.0, *cutoff),
            // e^{-45} times any polynomial prefactor is below double noise
            SpectralDensity::Ohmic { cutoff, .. } => (0.0, 45.0 * cutoff),
            SpectralDensity::Table { points } => {
                if points.is_empty() {
                    (0.0, 0.0)
                } else {
                    (points[0].0, points[points.len() - 1].0)
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            SpectralDensity::Flat { height, cutoff } => {
                if *height < 0.0 || !cutoff.is_finite() || *cutoff <= 0.0 {
                    return Err(Error::InvalidBath(format!(
                        "flat density needs height >= 0 and cutoff > 0 (got {height}, {cutoff})"
                    )));
                }
            }
            SpectralDensity::Ohmic { eta, cutoff } => {
                if *eta < 0.0 || !cutoff.is_finite() || *cutoff <= 0.0 {
                    return Err(Error::InvalidBath(format!(
                        "ohmic density needs eta >= 0 and cutoff > 0 (got {eta}, {cutoff})"
                    )));
                }
            }
            SpectralDensity::Table { points } => {
                if points.len() < 2 {
                    return Err(Error::InvalidBath(
                        "tabulated density needs at least two points".into(),
                    ));
                }
                for w in points.windows(2) {
                    if w[1].0 <= w[0].0 {
                        return Err(Error::InvalidBath(
                            "tabulated energies must be strictly increasing".into(),
                        ));
                    }
                }
                if points.iter().any(|&(e, i)| e <= 0.0 || i < 0.0) {
                    return Err(Error::InvalidBath(
                        "tabulated density needs energies > 0 and values >= 0".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Equilibrium boson bath at inverse temperature β and chemical potential μ.
#[derive(Debug, Clone)]
pub struct BathModel {
    pub beta: f64,
    pub mu: f64,
    pub density: SpectralDensity,
    /// Half-width of the principal-value pole exclusion; `None` means
    /// 1e-3 times the support width.
    pub pv_epsilon: Option<f64>,
    pub pv_panels: usize,
    /// Keep the principal-value (Lamb shift) contribution of channels with
    /// |E| <= null_tol.  Off by default.
    pub include_null_pv: bool,
    pub null_tol: f64,
}

impl BathModel {
    pub fn new(beta: f64, mu: f64, density: SpectralDensity) -> Result<Self> {
        let bath = BathModel {
            beta,
            mu,
            density,
            pv_epsilon: None,
            pv_panels: DEFAULT_PV_PANELS,
            include_null_pv: false,
            null_tol: DEFAULT_NULL_TOL,
        };
        bath.validate()?;
        Ok(bath)
    }

    pub fn with_pv(mut self, epsilon: Option<f64>, panels: usize) -> Result<Self> {
        self.pv_epsilon = epsilon;
        self.pv_panels = panels;
        self.validate()?;
        Ok(self)
    }

    pub fn with_null_handling(mut self, null_tol: f64, include_null_pv: bool) -> Result<Self> {
        self.null_tol = null_tol;
        self.include_null_pv = include_null_pv;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::InvalidBeta(self.beta));
        }
        self.density.validate()?;
        let (lo, _) = self.density.support();
        // the Bose weight must stay finite on the support
        if self.mu > 0.0 && self.mu >= lo {
            return Err(Error::InvalidBath(format!(
                "chemical potential {} reaches the spectral support starting at {lo}; \
                 the Bose weights diverge there",
                self.mu
            )));
        }
        if self.pv_panels < 8 {
            return Err(Error::InvalidBath("pv panels must be >= 8".into()));
        }
        if let Some(eps) = self.pv_epsilon {
            if !(eps > 0.0) {
                return Err(Error::InvalidBath("pv epsilon must be > 0".into()));
            }
        }
        if self.null_tol < 0.0 {
            return Err(Error::InvalidBath("null tolerance must be >= 0".into()));
        }
        Ok(())
    }

    /// Bose occupation n(E) = 1/(e^{β(E-μ)} - 1); underflows cleanly to 0
    /// at large β(E-μ).
    pub fn bose_occupation(&self, e: f64) -> Result<f64> {
        bose_occupation(self.beta, self.mu, e)
    }

    fn occupation_weight(&self, omega: f64) -> f64 {
        // n(ω), finite on the support by the validation rule
        1.0 / (self.beta * (omega - self.mu)).exp_m1()
    }

    fn emission_weight(&self, omega: f64) -> f64 {
        // 1 + n(ω) = 1/(1 - e^{-β(ω-μ)})
        -1.0 / (-self.beta * (omega - self.mu)).exp_m1()
    }

    fn pv_epsilon_for(&self) -> f64 {
        let (lo, hi) = self.density.support();
        self.pv_epsilon.unwrap_or(1e-3 * (hi - lo))
    }

    /// Susceptibility pair for a channel of energy `e`.
    ///
    /// Errors if either Lamb-shift quadrature fails to converge.  That
    /// happens for genuinely divergent integrals, e.g. a density with
    /// I > 0 at a support edge sitting exactly on the chemical potential
    /// (flat density with μ = 0), where the Bose weight has a
    /// non-integrable 1/ω tail.
    pub fn susceptibility(&self, e: f64) -> Result<Susceptibility> {
        let (susc, warnings) = self.susceptibility_lenient(e)?;
        if let Some(w) = warnings.first() {
            return Err(Error::PvNonConverged {
                value: w.value,
                residual: w.residual,
            });
        }
        Ok(susc)
    }

    /// Like [`Self::susceptibility`], but a non-convergent Lamb-shift
    /// quadrature zeroes that imaginary part and is reported as a warning
    /// instead of failing.  Rates (the real parts) are never affected.
    pub fn susceptibility_lenient(&self, e: f64) -> Result<(Susceptibility, Vec<PvWarning>)> {
        let null = e.abs() <= self.null_tol;
        let (mut re_minus, mut re_plus) = (0.0, 0.0);
        if e > self.null_tol {
            let i_e = self.density.value(e);
            if i_e > 0.0 {
                let n = self.bose_occupation(e)?;
                re_minus = std::f64::consts::PI * i_e * (1.0 + n);
                re_plus = std::f64::consts::PI * i_e * n;
            }
        }
        let (mut im_minus, mut im_plus) = (0.0, 0.0);
        let mut warnings = Vec::new();
        if !null || self.include_null_pv {
            let (lo, hi) = self.density.support();
            if hi > lo {
                let eps = self.pv_epsilon_for();
                let minus = pv_integral(
                    &|w| self.density.value(w) * self.emission_weight(w),
                    lo,
                    hi,
                    e,
                    eps,
                    self.pv_panels,
                );
                let plus = pv_integral(
                    &|w| self.density.value(w) * self.occupation_weight(w),
                    lo,
                    hi,
                    e,
                    eps,
                    self.pv_panels,
                );
                for (part, r) in [(SusceptibilityPart::Minus, &minus), (SusceptibilityPart::Plus, &plus)] {
                    if !r.converged {
                        warnings.push(PvWarning {
                            part,
                            energy: e,
                            value: r.value,
                            residual: r.residual,
                        });
                    }
                }
                if minus.converged {
                    im_minus = -minus.value;
                }
                if plus.converged {
                    im_plus = -plus.value;
                }
            }
        }
        Ok((
            Susceptibility {
                minus: Complex64::new(re_minus, im_minus),
                plus: Complex64::new(re_plus, im_plus),
                energy: e,
            },
            warnings,
        ))
    }
}

/// Which susceptibility a principal-value warning refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SusceptibilityPart {
    Minus,
    Plus,
}

/// A Lamb-shift quadrature that did not converge; the affected imaginary
/// part was set to zero.
#[derive(Debug, Clone, Copy)]
pub struct PvWarning {
    pub part: SusceptibilityPart,
    pub energy: f64,
    pub value: f64,
    pub residual: f64,
}

/// Free-standing Bose occupation with a domain check on the pole.
pub fn bose_occupation(beta: f64, mu: f64, e: f64) -> Result<f64> {
    let x = beta * (e - mu);
    if x <= 0.0 {
        return Err(Error::BoseDomain { energy: e, mu });
    }
    Ok(1.0 / x.exp_m1())
}

/// Susceptibility pair of a single channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Susceptibility {
    pub minus: Complex64,
    pub plus: Complex64,
    pub energy: f64,
}

impl Susceptibility {
    /// Emission rate γ⁻ = 2 Re (g|g)⁻.
    pub fn gamma_minus(&self) -> f64 {
        2.0 * self.minus.re
    }

    /// Absorption rate γ⁺ = 2 Re (g|g)⁺.
    pub fn gamma_plus(&self) -> f64 {
        2.0 * self.plus.re
    }
}

/// The dt-coefficients of dB dB* and dB* dB: (γ⁻, γ⁺) = 2 Re (g|g)^∓.
pub fn ito_coefficients(s: &Susceptibility) -> (f64, f64) {
    (s.gamma_minus(), s.gamma_plus())
}

/// Outcome of a principal-value quadrature.
#[derive(Debug, Clone, Copy)]
pub struct PvResult {
    pub value: f64,
    pub residual: f64,
    pub converged: bool,
}

/// PV ∫_a^b f(ω)/(ω - pole) dω.
///
/// When the pole lies inside (a, b): symmetric exclusion of (pole-ε, pole+ε)
/// with Gauss-Legendre panels, plus the odd-part correction
/// ∫_0^ε [f(pole+u) - f(pole-u)]/u du, Richardson-extrapolated over the
/// ladder (ε, ε/2, ε/4).  Outside, a plain panel quadrature.
pub fn pv_integral(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    pole: f64,
    eps: f64,
    panels: usize,
) -> PvResult {
    assert!(b > a, "empty integration domain");
    assert!(eps > 0.0, "pole exclusion must be positive");
    let gl = gauss_legendre(GL_POINTS);
    let integrand = |w: f64| f(w) / (w - pole);

    if pole <= a || pole >= b {
        let coarse = panel_integrate(&integrand, a, b, panels.div_ceil(2).max(8), &gl);
        let fine = panel_integrate(&integrand, a, b, panels.max(8), &gl);
        let residual = (fine - coarse).abs();
        return PvResult {
            value: fine,
            residual,
            converged: residual <= 1e-6 * (1.0 + fine.abs()),
        };
    }

    // The far field is integrated on one fixed grid for the whole ladder,
    // so the ladder residual measures pole handling only.
    let margin = (pole - a).min(b - pole);
    let eps0 = eps.min(0.225 * margin);
    let band = 4.0 * eps0;
    let width = b - a;
    let left_panels = ((panels as f64) * (pole - band - a) / width).ceil() as usize;
    let right_panels = ((panels as f64) * (b - pole - band) / width).ceil() as usize;
    let far = panel_integrate(&integrand, a, pole - band, left_panels.max(8), &gl)
        + panel_integrate(&integrand, pole + band, b, right_panels.max(8), &gl);

    let mut ladder = [0.0f64; 3];
    for (k, v) in ladder.iter_mut().enumerate() {
        let e_k = eps0 / f64::from(1u32 << k);
        // geometric slices from the exclusion edge out to the band edge
        let slices = 24;
        let mut near = 0.0;
        let mut lo = e_k;
        for j in 1..=slices {
            let hi = if j == slices {
                band
            } else {
                e_k * (band / e_k).powf(j as f64 / slices as f64)
            };
            near += panel_integrate(&integrand, pole + lo, pole + hi, 1, &gl);
            near += panel_integrate(&integrand, pole - hi, pole - lo, 1, &gl);
            lo = hi;
        }
        let odd = |u: f64| (f(pole + u) - f(pole - u)) / u;
        let correction = panel_integrate(&odd, 0.0, e_k, 16, &gl);
        *v = far + near + correction;
    }
    // remaining eps dependence comes from the correction quadrature, O(eps^2)
    let r1 = ladder[1] + (ladder[1] - ladder[0]) / 3.0;
    let r2 = ladder[2] + (ladder[2] - ladder[1]) / 3.0;
    let value = r2 + (r2 - r1) / 15.0;
    let residual = (r2 - r1).abs().max((value - ladder[2]).abs());
    PvResult {
        value,
        residual,
        converged: residual <= 1e-6 * (1.0 + value.abs()),
    }
}

fn panel_integrate(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    panels: usize,
    gl: &(Vec<f64>, Vec<f64>),
) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (nodes, weights) = gl;
    let h = (b - a) / panels as f64;
    let mut sum = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        let half = 0.5 * h;
        let mut local = 0.0;
        for (x, w) in nodes.iter().zip(weights) {
            local += w * f(mid + half * x);
        }
        sum += local * half;
    }
    sum
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}
