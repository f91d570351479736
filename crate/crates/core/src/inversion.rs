//! CDF and density of a scalar law from its characteristic function:
//!
//! ```text
//! F(x) = 1/2 - (1/π) ∫₀^∞ Im[e^{-itx} φ(t)] / t dt
//! p(x) =       (1/π) ∫₀^∞ Re[e^{-itx} φ(t)]     dt
//! ```
//!
//! Both integrands are produced by one batch evaluation per panel. The
//! frequency axis is normalised by the law's spread `s` (the integration
//! runs in `τ = s·t`), which keeps the adaptive partition independent of the
//! units of `x`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::dist::Distribution;
use crate::quadrature::{integrate_semi_infinite, BatchIntegrand, Counters, SemiInfinite, Tolerances};
use crate::{Error, Result};

/// Anything that can evaluate a characteristic function on a batch of
/// frequencies.
pub trait CfProvider {
    fn cf_batch_into(&self, ts: &[f64], out: &mut [Complex64]) -> Result<()>;

    /// Typical spread of the law, used to normalise frequencies.
    fn scale_hint(&self) -> f64;

    /// Oscillation structure of the CF (see [`PhaseTerm`]).
    fn phase_terms(&self) -> Vec<PhaseTerm>;
}

/// One additive term of a CF, shaped like
/// `e^{i·location·t} · Π_k sinc(half_widths[k]·t) · (non-oscillating envelope)`.
/// A term oscillates at the frequencies `|location ± h_1 ± h_2 ...|`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTerm {
    pub location: f64,
    pub half_widths: Vec<f64>,
}

const MAX_TERMS: usize = 256;

impl PhaseTerm {
    fn scaled(&self, c: f64) -> Self {
        Self { location: c * self.location, half_widths: self.half_widths.iter().map(|h| c.abs() * h).collect() }
    }

    fn frequencies(&self, shift: f64, out: &mut Vec<f64>) {
        let d = self.location - shift;
        let k = self.half_widths.len().min(10);
        for signs in 0..1u32 << k {
            let offset: f64 =
                (0..k).map(|b| if signs >> b & 1 == 1 { self.half_widths[b] } else { -self.half_widths[b] }).sum();
            out.push((d + offset).abs());
        }
    }
}

/// Phase terms of `Σ_j c_j·w_j`: every combination of one term per factor.
/// Past [`MAX_TERMS`] combinations the factors are collapsed to their
/// weighted centres, which keeps the largest frequency but may miss slow
/// beats.
pub(crate) fn product_terms<'a>(factors: impl Iterator<Item = (f64, &'a Distribution)> + Clone) -> Vec<PhaseTerm> {
    let mut out = vec![PhaseTerm { location: 0.0, half_widths: vec![] }];
    for (c, d) in factors.clone() {
        let terms: Vec<PhaseTerm> = d.phase_terms().iter().map(|t| t.scaled(c)).collect();
        if out.len() * terms.len() > MAX_TERMS {
            let mut location = 0.0;
            let mut width = 0.0;
            for (c, d) in factors {
                let centre = d.phase_location();
                location += c * centre;
                width += c.abs()
                    * d.phase_terms()
                        .iter()
                        .map(|t| (t.location - centre).abs() + t.half_widths.iter().sum::<f64>())
                        .fold(0.0, f64::max);
            }
            return vec![PhaseTerm { location, half_widths: vec![width] }];
        }
        out = out
            .iter()
            .flat_map(|a| {
                terms.iter().map(move |b| PhaseTerm {
                    location: a.location + b.location,
                    half_widths: a.half_widths.iter().chain(&b.half_widths).copied().collect(),
                })
            })
            .collect();
    }
    out
}

/// `(ω_max, ω_tail)` for an integrand `e^{-it·shift}φ(t)`: the largest
/// oscillation frequency, used to align the initial partition, and the
/// slowest one not below `ω_max/1000`, used as the tail cycle length.
pub(crate) fn oscillation_band(terms: &[PhaseTerm], shift: f64) -> (f64, f64) {
    let mut freqs = Vec::new();
    for t in terms {
        t.frequencies(shift, &mut freqs);
    }
    let max = freqs.iter().copied().fold(0.0, f64::max);
    let floor = 1e-3 * max;
    let slow = freqs.iter().copied().filter(|&f| f >= floor).fold(max, f64::min);
    (max, slow)
}

impl CfProvider for Distribution {
    fn cf_batch_into(&self, ts: &[f64], out: &mut [Complex64]) -> Result<()> {
        Distribution::cf_batch_into(self, ts, out)
    }

    fn scale_hint(&self) -> f64 {
        self.spread()
    }

    fn phase_terms(&self) -> Vec<PhaseTerm> {
        Distribution::phase_terms(self)
    }
}

/// The law of `Σ_j c_j·w_j` for independent `w_j`; its CF is
/// `Π_j φ_j(c_j t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductCf {
    terms: Vec<(f64, Distribution)>,
}

impl ProductCf {
    pub fn new(terms: Vec<(f64, Distribution)>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidArgument("a sum needs at least one term".into()));
        }
        if let Some((c, _)) = terms.iter().find(|(c, _)| !c.is_finite()) {
            return Err(Error::NonFiniteInput(*c));
        }
        if terms.iter().all(|(c, _)| *c == 0.0) {
            return Err(Error::InvalidArgument("all coefficients are zero; the sum is a point mass".into()));
        }
        Ok(Self { terms })
    }

    pub fn terms(&self) -> &[(f64, Distribution)] {
        &self.terms
    }
}

impl CfProvider for ProductCf {
    fn cf_batch_into(&self, ts: &[f64], out: &mut [Complex64]) -> Result<()> {
        out.fill(Complex64::new(1.0, 0.0));
        let mut scaled = vec![0.0; ts.len()];
        let mut part = vec![Complex64::new(0.0, 0.0); ts.len()];
        for (c, d) in &self.terms {
            if *c == 0.0 {
                continue;
            }
            for (s, &t) in scaled.iter_mut().zip(ts) {
                *s = c * t;
            }
            d.cf_batch_into(&scaled, &mut part)?;
            for (o, p) in out.iter_mut().zip(&part) {
                *o *= p;
            }
        }
        Ok(())
    }

    fn scale_hint(&self) -> f64 {
        self.terms.iter().map(|(c, d)| (c * d.spread()).powi(2)).sum::<f64>().sqrt()
    }

    fn phase_terms(&self) -> Vec<PhaseTerm> {
        product_terms(self.terms.iter().filter(|(c, _)| *c != 0.0).map(|(c, d)| (*c, d)))
    }
}

/// Returns the end of the significant frequency range in mapped `u` units:
/// the first `τ = 2^k` beyond which `|φ(τ/scale)|` stays below `1e-18` for
/// three consecutive doublings, or 1 when the CF decays too slowly.
pub(crate) fn decay_horizon(mut modulus: impl FnMut(&[f64]) -> Result<Vec<f64>>, scale: f64) -> Result<f64> {
    let taus: Vec<f64> = (0..64).map(|k| 2f64.powi(k)).collect();
    let ts: Vec<f64> = taus.iter().map(|t| t / scale).collect();
    let m = modulus(&ts)?;
    for k in 0..taus.len() - 2 {
        if m[k..k + 3].iter().all(|&v| v < 1e-18) {
            return Ok(taus[k] / (1.0 + taus[k]));
        }
    }
    Ok(1.0)
}

/// CDF and density at one point, with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Inversion {
    pub cdf: f64,
    pub pdf: f64,
    /// Values before clamping to `[0, 1]` and `[0, ∞)`.
    pub cdf_raw: f64,
    pub pdf_raw: f64,
    pub error_estimate: f64,
    pub counters: Counters,
}

struct Integrand<'a, C: ?Sized> {
    cf: &'a C,
    x: f64,
    scale: f64,
    ts: Vec<f64>,
    phi: Vec<Complex64>,
}

impl<C: CfProvider + ?Sized> BatchIntegrand for Integrand<'_, C> {
    fn components(&self) -> usize {
        2
    }

    fn evaluate(&mut self, taus: &[f64], out: &mut [f64]) -> Result<()> {
        self.ts.clear();
        self.ts.extend(taus.iter().map(|tau| tau / self.scale));
        self.phi.resize(taus.len(), Complex64::new(0.0, 0.0));
        self.cf.cf_batch_into(&self.ts, &mut self.phi)?;
        for (i, (&tau, &t)) in taus.iter().zip(&self.ts).enumerate() {
            let v = Complex64::from_polar(1.0, -t * self.x) * self.phi[i];
            out[2 * i] = v.im / tau;
            out[2 * i + 1] = v.re / self.scale;
        }
        Ok(())
    }
}

fn finish(raw: &[f64]) -> (f64, f64) {
    (0.5 - raw[0] / PI, raw[1] / PI)
}

/// Invert `cf` at `x`, returning both CDF and density.
///
/// On a tolerance failure the error carries `[cdf_raw, pdf_raw]`.
pub fn invert<C: CfProvider + ?Sized>(cf: &C, x: f64, tol: &Tolerances) -> Result<Inversion> {
    if !x.is_finite() {
        return Err(Error::NonFiniteInput(x));
    }
    let scale = cf.scale_hint();
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidArgument(format!("scale hint must be positive, got {scale}")));
    }
    let u_max = decay_horizon(
        |ts| {
            let mut phi = vec![Complex64::new(0.0, 0.0); ts.len()];
            cf.cf_batch_into(ts, &mut phi)?;
            Ok(phi.iter().map(|p| p.norm()).collect())
        },
        scale,
    )?;
    let (omega, tail_omega) = oscillation_band(&cf.phase_terms(), x);
    let opts = SemiInfinite { tol: *tol, omega: omega / scale, tail_omega: tail_omega / scale, u_max };
    let mut f = Integrand { cf, x, scale, ts: Vec::with_capacity(15), phi: Vec::with_capacity(15) };
    let r = match integrate_semi_infinite(&mut f, &opts) {
        Ok(r) => r,
        Err(Error::ToleranceNotMet { value, error }) => {
            let (c, p) = finish(&value);
            return Err(Error::ToleranceNotMet { value: vec![c, p], error: error / PI });
        }
        Err(e) => return Err(e),
    };
    let (cdf_raw, pdf_raw) = finish(&r.value);
    Ok(Inversion {
        cdf: cdf_raw.clamp(0.0, 1.0),
        pdf: pdf_raw.max(0.0),
        cdf_raw,
        pdf_raw,
        error_estimate: r.error_estimate / PI,
        counters: r.counters,
    })
}

pub fn cdf<C: CfProvider + ?Sized>(cf: &C, x: f64, tol: &Tolerances) -> Result<f64> {
    invert(cf, x, tol).map(|r| r.cdf)
}

pub fn pdf<C: CfProvider + ?Sized>(cf: &C, x: f64, tol: &Tolerances) -> Result<f64> {
    invert(cf, x, tol).map(|r| r.pdf)
}
