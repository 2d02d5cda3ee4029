//! Orthonormal bases: trigonometric on `[ℓ, r]` and Hermite functions on ℝ.
//!
//! Trigonometric layout (`m` odd):
//! index 0 is the constant `(r−ℓ)^{-1/2}`, index `2k−1` is
//! `√(2/(r−ℓ)) cos(2πk(x−ℓ)/(r−ℓ))` and index `2k` the matching sine,
//! for `k = 1..=(m−1)/2`. All functions vanish outside `[ℓ, r]`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

/// Lower edge of the probe grid used for Hermite sup-quantities.
pub const HERMITE_PROBE_HALF_WIDTH: f64 = 12.0;
pub const HERMITE_PROBE_POINTS: usize = 4097;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BasisKind {
    Trigonometric { lo: f64, hi: f64 },
    Hermite,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BasisSpec {
    kind: BasisKind,
    dim: usize,
}

impl BasisSpec {
    /// Trigonometric basis on `[lo, hi]`. An even `dim` is lowered to the
    /// next odd value.
    pub fn trigonometric(lo: f64, hi: f64, dim: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Domain(format!("need ℓ < r, got [{lo}, {hi}]")));
        }
        if dim == 0 {
            return Err(Error::Domain("basis dimension must be at least 1".into()));
        }
        let dim = if dim.is_multiple_of(2) { dim - 1 } else { dim };
        Ok(Self { kind: BasisKind::Trigonometric { lo, hi }, dim })
    }

    pub fn hermite(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("basis dimension must be at least 1".into()));
        }
        Ok(Self { kind: BasisKind::Hermite, dim })
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Same family with another dimension.
    pub fn with_dim(&self, dim: usize) -> Result<Self> {
        match self.kind {
            BasisKind::Trigonometric { lo, hi } => Self::trigonometric(lo, hi, dim),
            BasisKind::Hermite => Self::hermite(dim),
        }
    }

    /// Compact support `[ℓ, r]`, or `None` for ℝ.
    pub fn support(&self) -> Option<(f64, f64)> {
        match self.kind {
            BasisKind::Trigonometric { lo, hi } => Some((lo, hi)),
            BasisKind::Hermite => None,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        match self.kind {
            BasisKind::Trigonometric { lo, hi } => (lo..=hi).contains(&x),
            BasisKind::Hermite => true,
        }
    }

    /// Writes `φ_0(x), …, φ_{m−1}(x)` into `out`.
    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        match self.kind {
            BasisKind::Trigonometric { lo, hi } => {
                if !(lo..=hi).contains(&x) {
                    out.fill(0.0);
                    return;
                }
                let width = hi - lo;
                out[0] = width.powf(-0.5);
                let amp = (2.0 / width).sqrt();
                let phase = 2.0 * PI * (x - lo) / width;
                for k in 1..=(self.dim - 1) / 2 {
                    let (s, c) = (k as f64 * phase).sin_cos();
                    out[2 * k - 1] = amp * c;
                    out[2 * k] = amp * s;
                }
            }
            BasisKind::Hermite => hermite_functions(x, out),
        }
    }

    /// Writes `φ_0'(x), …, φ_{m−1}'(x)` into `out`.
    pub fn eval_deriv_into(&self, x: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        match self.kind {
            BasisKind::Trigonometric { lo, hi } => {
                out.fill(0.0);
                if !(lo..=hi).contains(&x) {
                    return;
                }
                let width = hi - lo;
                let amp = (2.0 / width).sqrt();
                let phase = 2.0 * PI * (x - lo) / width;
                for k in 1..=(self.dim - 1) / 2 {
                    let omega = 2.0 * PI * k as f64 / width;
                    let (s, c) = (k as f64 * phase).sin_cos();
                    out[2 * k - 1] = -amp * omega * s;
                    out[2 * k] = amp * omega * c;
                }
            }
            BasisKind::Hermite => {
                let mut h = vec![0.0; self.dim + 1];
                hermite_functions(x, &mut h);
                for j in 0..self.dim {
                    let down = if j > 0 { (j as f64 / 2.0).sqrt() * h[j - 1] } else { 0.0 };
                    out[j] = down - ((j as f64 + 1.0) / 2.0).sqrt() * h[j + 1];
                }
            }
        }
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(x, &mut out);
        out
    }

    pub fn eval_deriv(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_deriv_into(x, &mut out);
        out
    }

    /// `∫_ℓ^x φ_j(y) dy` for each `j`; trigonometric bases only.
    pub fn antiderivative_into(&self, x: f64, out: &mut [f64]) -> Result<()> {
        let BasisKind::Trigonometric { lo, hi } = self.kind else {
            return Err(Error::Domain("antiderivative requires a compactly supported basis".into()));
        };
        let x = x.clamp(lo, hi);
        let width = hi - lo;
        out[0] = (x - lo) / width.sqrt();
        let amp = (2.0 / width).sqrt();
        let phase = 2.0 * PI * (x - lo) / width;
        for k in 1..=(self.dim - 1) / 2 {
            let omega = 2.0 * PI * k as f64 / width;
            let (s, c) = (k as f64 * phase).sin_cos();
            out[2 * k - 1] = amp * s / omega;
            out[2 * k] = amp * (1.0 - c) / omega;
        }
        Ok(())
    }

    /// `Σ_j θ_j φ_j(x)`.
    pub fn combine(&self, coeffs: &[f64], x: f64) -> f64 {
        let mut buf = vec![0.0; self.dim];
        self.eval_into(x, &mut buf);
        buf.iter().zip(coeffs).map(|(p, c)| p * c).sum()
    }
}

impl fmt::Display for BasisSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            BasisKind::Trigonometric { lo, hi } => write!(f, "trig({lo},{hi},{})", self.dim),
            BasisKind::Hermite => write!(f, "hermite({})", self.dim),
        }
    }
}

impl FromStr for BasisSpec {
    type Err = Error;

    /// Accepts `trig(l,r,m)` or `hermite(m)`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Domain(format!("invalid basis `{s}`; expected trig(l,r,m) or hermite(m)"));
        let s_trim: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let (name, rest) = s_trim.split_once('(').ok_or_else(bad)?;
        let args = rest.strip_suffix(')').ok_or_else(bad)?;
        let parts: Vec<&str> = args.split(',').collect();
        match (name, parts.as_slice()) {
            ("trig", [l, r, m]) => {
                let lo = l.parse::<f64>().map_err(|_| bad())?;
                let hi = r.parse::<f64>().map_err(|_| bad())?;
                let m = m.parse::<usize>().map_err(|_| bad())?;
                Self::trigonometric(lo, hi, m)
            }
            ("hermite", [m]) => Self::hermite(m.parse::<usize>().map_err(|_| bad())?),
            _ => Err(bad()),
        }
    }
}

/// Normalized Hermite functions `h_0(x), …, h_{len−1}(x)` by the recurrence
/// `h_{j+1} = x √(2/(j+1)) h_j − √(j/(j+1)) h_{j−1}`.
pub fn hermite_functions(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = PI.powf(-0.25) * (-0.5 * x * x).exp();
    if out.len() > 1 {
        out[1] = std::f64::consts::SQRT_2 * x * out[0];
    }
    for j in 1..out.len().saturating_sub(1) {
        let jf = j as f64;
        out[j + 1] = x * (2.0 / (jf + 1.0)).sqrt() * out[j] - (jf / (jf + 1.0)).sqrt() * out[j - 1];
    }
}

/// Probe grid for Hermite sup-quantities: `HERMITE_PROBE_POINTS` points on
/// `[-12, 12]`.
pub fn default_probe_grid() -> Vec<f64> {
    let n = HERMITE_PROBE_POINTS - 1;
    (0..=n).map(|i| -HERMITE_PROBE_HALF_WIDTH + 2.0 * HERMITE_PROBE_HALF_WIDTH * i as f64 / n as f64).collect()
}

/// `L(m) = sup Σ φ_j²` and `R(m) = sup Σ φ_j'²`.
///
/// Exact for the trigonometric basis, where both sums are constant on
/// `[ℓ, r]`: `L(m) = m / (r − ℓ)`. For Hermite they are maxima over
/// `probe`, hence lower bounds of the true suprema.
pub fn stability_quantities(spec: &BasisSpec, probe: &[f64]) -> (f64, f64) {
    match spec.kind {
        BasisKind::Trigonometric { lo, hi } => {
            let width = hi - lo;
            let pairs = ((spec.dim - 1) / 2) as f64;
            let sum_k2 = pairs * (pairs + 1.0) * (2.0 * pairs + 1.0) / 6.0;
            (spec.dim as f64 / width, 2.0 * (2.0 * PI).powi(2) / width.powi(3) * sum_k2)
        }
        BasisKind::Hermite => {
            let mut v = vec![0.0; spec.dim];
            let mut d = vec![0.0; spec.dim];
            let (mut l, mut r) = (0.0f64, 0.0f64);
            for &x in probe {
                spec.eval_into(x, &mut v);
                spec.eval_deriv_into(x, &mut d);
                l = l.max(v.iter().map(|a| a * a).sum());
                r = r.max(d.iter().map(|a| a * a).sum());
            }
            (l, r)
        }
    }
}
