//! Karhunen–Loève expansion of the separable exponential covariance
//! exp(-|x₁-y₁|/ℓ₁ - |x₂-y₂|/ℓ₂) on a rectangle.
//!
//! The 1-D factor exp(-|x-y|/ℓ) on [-a, a] has closed-form eigenpairs: with
//! c = 1/ℓ, even modes cos(ωx)/√(a + sin(2ωa)/(2ω)) where ω solves
//! c = ω tan(ωa), odd modes sin(ωx)/√(a - sin(2ωa)/(2ω)) where ω solves
//! ω = -c tan(ωa), both with λ = 2c/(ω² + c²). Roots are bracketed between
//! consecutive poles of tan and bisected. 2-D eigenpairs are products of the
//! 1-D pairs, re-sorted by descending eigenvalue.
//!
//! A realization of the field is
//!
//!   η_N(x, ξ) = η̄(x) + κ Σ_{k=1..N} √λ_k φ_k(x) ξ_k,
//!
//! with ξ_k independent Uniform[-√3, √3].

use crate::error::{Error, Result};
use crate::fields::ScalarField;
use crate::mesh::Rect;
use std::f64::consts::PI;

/// One eigenpair of the 1-D exponential kernel on [-a, a], in coordinates
/// relative to the interval center.
#[derive(Debug, Clone, Copy)]
pub struct Mode1d {
    pub omega: f64,
    pub lambda: f64,
    pub even: bool,
    /// L² normalization denominator √(a ± sin(2ωa)/(2ω)).
    norm: f64,
}

impl Mode1d {
    /// Evaluate the unit-norm eigenfunction at x ∈ [-a, a].
    pub fn eval(&self, x: f64) -> f64 {
        let t = self.omega * x;
        if self.even { t.cos() / self.norm } else { t.sin() / self.norm }
    }
}

/// First `count` eigenpairs of exp(-|x-y|/ℓ) on [-a, a], eigenvalues
/// strictly descending. Parities interlace even, odd, even, … because the
/// even root of branch k lies in (kπ/a, (k+½)π/a) and the odd root of
/// branch k in ((k-½)π/a, kπ/a).
pub fn solve_1d_eigenpairs(half_width: f64, correlation_length: f64, count: usize) -> Result<Vec<Mode1d>> {
    if half_width <= 0.0 || correlation_length <= 0.0 {
        return Err(Error::contract(format!(
            "eigenproblem needs positive half-width and correlation length, got a={half_width}, l={correlation_length}"
        )));
    }
    let a = half_width;
    let c = 1.0 / correlation_length;
    let mut modes = Vec::with_capacity(count);
    for m in 0..count {
        let even = m % 2 == 0;
        let branch = m.div_ceil(2); // even_0, odd_1, even_1, odd_2, ...
        let k = branch as f64;
        // Pole-free residual forms with a guaranteed sign change:
        //   even: ω sin(ωa) - c cos(ωa) on (kπ/a, (k+½)π/a)
        //   odd:  c sin(ωa) + ω cos(ωa) on ((k-½)π/a, kπ/a)
        let (lo, hi, f): (f64, f64, Box<dyn Fn(f64) -> f64>) = if even {
            (
                k * PI / a,
                (k + 0.5) * PI / a,
                Box::new(move |w: f64| w * (w * a).sin() - c * (w * a).cos()),
            )
        } else {
            (
                (k - 0.5) * PI / a,
                k * PI / a,
                Box::new(move |w: f64| c * (w * a).sin() + w * (w * a).cos()),
            )
        };
        let omega = bisect_root(&*f, lo, hi, c)?;
        let lambda = 2.0 * c / (omega * omega + c * c);
        let s = (2.0 * omega * a).sin() / (2.0 * omega);
        let norm = if even { (a + s).sqrt() } else { (a - s).sqrt() };
        modes.push(Mode1d { omega, lambda, even, norm });
    }
    Ok(modes)
}

/// Bisection to machine width, then a relative-residual check
/// |f(ω)|/(ω + c) < 1e-12.
fn bisect_root(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64, c: f64) -> Result<f64> {
    let (flo, fhi) = (f(lo), f(hi));
    if flo == 0.0 {
        return Ok(lo);
    }
    if flo * fhi > 0.0 {
        return Err(Error::numeric(format!(
            "root bracket [{lo}, {hi}] has no sign change: f = [{flo}, {fhi}]"
        )));
    }
    let mut flo = flo;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break; // interval at machine resolution
        }
        let fmid = f(mid);
        if fmid == 0.0 {
            return Ok(mid);
        }
        if flo * fmid < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            flo = fmid;
        }
    }
    let omega = 0.5 * (lo + hi);
    let residual = f(omega).abs() / (omega + c);
    if residual < 1e-12 {
        Ok(omega)
    } else {
        Err(Error::numeric(format!(
            "bisection stalled on bracket [{lo}, {hi}]: relative residual {residual:.3e}"
        )))
    }
}

/// One 2-D eigenpair: a product of 1-D modes in each direction.
#[derive(Debug, Clone, Copy)]
struct Mode2d {
    lambda: f64,
    pair: (usize, usize),
    x: Mode1d,
    y: Mode1d,
}

/// Truncated KL expansion of a random field on a rectangle.
pub struct KlField {
    domain: Rect,
    mean: Box<dyn ScalarField + Send>,
    /// Fluctuation amplitude κ.
    pub kappa: f64,
    /// Correlation lengths per direction.
    pub lengths: [f64; 2],
    modes: Vec<Mode2d>,
}

impl KlField {
    /// Build the top-`n_modes` expansion. The candidate pool starts at
    /// ⌈√N⌉+3 1-D modes per direction and grows until the pool provably
    /// contains the N largest products.
    pub fn new(
        domain: Rect,
        mean: impl ScalarField + Send + 'static,
        kappa: f64,
        lengths: [f64; 2],
        n_modes: usize,
    ) -> Result<KlField> {
        domain.validate()?;
        if kappa < 0.0 {
            return Err(Error::contract(format!("kappa must be >= 0, got {kappa}")));
        }
        let (ax, ay) = (0.5 * domain.width(), 0.5 * domain.height());
        let mut modes = Vec::new();
        if n_modes > 0 {
            let mut pool = (n_modes as f64).sqrt().ceil() as usize + 3;
            loop {
                let mx = solve_1d_eigenpairs(ax, lengths[0], pool + 1)?;
                let my = solve_1d_eigenpairs(ay, lengths[1], pool + 1)?;
                let mut candidates = Vec::with_capacity(pool * pool);
                for i in 0..pool {
                    for j in 0..pool {
                        candidates.push(Mode2d {
                            lambda: mx[i].lambda * my[j].lambda,
                            pair: (i, j),
                            x: mx[i],
                            y: my[j],
                        });
                    }
                }
                candidates.sort_by(|a, b| {
                    b.lambda.partial_cmp(&a.lambda).unwrap().then(a.pair.cmp(&b.pair))
                });
                if candidates.len() >= n_modes {
                    // Every product outside the pool has one index ≥ pool, so
                    // it is bounded by the best such product.
                    let outside =
                        (mx[pool].lambda * my[0].lambda).max(mx[0].lambda * my[pool].lambda);
                    if outside < candidates[n_modes - 1].lambda {
                        candidates.truncate(n_modes);
                        modes = candidates;
                        break;
                    }
                }
                pool += (n_modes as f64).sqrt().ceil() as usize + 1;
                if pool > 4096 {
                    return Err(Error::numeric(
                        "candidate pool for KL mode ordering failed to stabilize",
                    ));
                }
            }
        }
        Ok(KlField { domain, mean: Box::new(mean), kappa, lengths, modes })
    }

    pub fn truncation(&self) -> usize {
        self.modes.len()
    }

    pub fn eigenvalue(&self, k: usize) -> f64 {
        self.modes[k].lambda
    }

    /// 1-D mode indices (i, j) behind 2-D mode k.
    pub fn mode_pair(&self, k: usize) -> (usize, usize) {
        self.modes[k].pair
    }

    /// κ√λ_k, the coefficient multiplying φ_k ξ_k in the expansion.
    pub fn amplitude(&self, k: usize) -> f64 {
        self.kappa * self.modes[k].lambda.sqrt()
    }

    /// Unit-norm product eigenfunction φ_k at an absolute point.
    pub fn mode_eval(&self, k: usize, x: [f64; 2]) -> f64 {
        let m = &self.modes[k];
        let cx = 0.5 * (self.domain.x0 + self.domain.x1);
        let cy = 0.5 * (self.domain.y0 + self.domain.y1);
        m.x.eval(x[0] - cx) * m.y.eval(x[1] - cy)
    }

    pub fn mean_eval(&self, x: [f64; 2]) -> f64 {
        self.mean.eval(x)
    }

    /// Realize the field at x for a sample ξ of length N.
    pub fn evaluate(&self, x: [f64; 2], xi: &[f64]) -> Result<f64> {
        if xi.len() != self.modes.len() {
            return Err(Error::contract(format!(
                "sample has {} coordinates, field has {} modes",
                xi.len(),
                self.modes.len()
            )));
        }
        let mut v = self.mean.eval(x);
        for (k, &x_k) in xi.iter().enumerate() {
            v += self.amplitude(k) * self.mode_eval(k, x) * x_k;
        }
        Ok(v)
    }

    /// Smallest field value over the given points under the worst-case
    /// sign pattern ξ_k = ±√3. Positive return certifies a positive
    /// realization range on those points.
    pub fn worst_case_min(&self, points: impl Iterator<Item = [f64; 2]>) -> f64 {
        let mut min = f64::INFINITY;
        for x in points {
            let spread: f64 =
                (0..self.modes.len()).map(|k| (self.amplitude(k) * self.mode_eval(k, x)).abs()).sum();
            min = min.min(self.mean.eval(x) - 3f64.sqrt() * spread);
        }
        min
    }

    /// The k-th fluctuation component κ√λ_k φ_k as a standalone field.
    pub fn mode_field(&self, k: usize) -> KlModeField {
        KlModeField {
            scale: self.amplitude(k),
            center: [
                0.5 * (self.domain.x0 + self.domain.x1),
                0.5 * (self.domain.y0 + self.domain.y1),
            ],
            x: self.modes[k].x,
            y: self.modes[k].y,
        }
    }
}

/// κ√λ_k φ_k(x) as an owned scalar field.
#[derive(Debug, Clone, Copy)]
pub struct KlModeField {
    scale: f64,
    center: [f64; 2],
    x: Mode1d,
    y: Mode1d,
}

impl ScalarField for KlModeField {
    fn eval(&self, x: [f64; 2]) -> f64 {
        self.scale * self.x.eval(x[0] - self.center[0]) * self.y.eval(x[1] - self.center[1])
    }
}
