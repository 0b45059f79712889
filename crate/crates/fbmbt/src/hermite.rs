//! Probabilists' Hermite polynomials, Gaussian moments and the constants that
//! drive the limit theorems: the Hermite-expansion coefficients of odd and
//! even monomials, the summed-autocorrelation constants `alpha_r`, and the
//! derived scale constants `beta_{2r-1}` and `gamma_{2r}`.
//!
//! The expansion coefficients are computed by exact integer expansion of
//! monomials in the Hermite basis (the three-term recurrence inverted), not
//! from closed forms; the pointwise-reconstruction tests certify them.

use crate::error::Error;
use crate::gaussian::{fgn_autocorr, Hurst};
use crate::Result;

/// Largest degree the coefficient table supports.
pub const MAX_DEGREE: u32 = 32;

/// Literature constant for the cubic-variation limit at the critical
/// roughness 1/6; used only by the qualitative sanity check there.
pub const CUBIC_LIMIT_KAPPA3: f64 = 2.322;

/// Exact monomial-basis coefficient table for `H_0 .. H_max`.
#[derive(Debug, Clone)]
pub struct HermiteBasis {
    coeffs: Vec<Vec<i128>>,
}

impl HermiteBasis {
    pub fn new(max_degree: u32) -> Result<Self> {
        if max_degree > MAX_DEGREE {
            return Err(Error::DegreeOverflow {
                requested: max_degree,
                max: MAX_DEGREE,
            });
        }
        // H_0 = 1, H_1 = x, H_{p+1} = x H_p - p H_{p-1}.
        let mut coeffs: Vec<Vec<i128>> = vec![vec![1], vec![0, 1]];
        for p in 1..max_degree as usize {
            let mut next = vec![0i128; p + 2];
            for (k, c) in coeffs[p].iter().enumerate() {
                next[k + 1] += c;
            }
            for (k, c) in coeffs[p - 1].iter().enumerate() {
                next[k] -= p as i128 * c;
            }
            coeffs.push(next);
        }
        coeffs.truncate(max_degree as usize + 1);
        Ok(HermiteBasis { coeffs })
    }

    pub fn max_degree(&self) -> u32 {
        (self.coeffs.len() - 1) as u32
    }

    /// Coefficient of `x^k` in `H_p`.
    pub fn coefficient(&self, p: u32, k: u32) -> Result<i128> {
        let row = self
            .coeffs
            .get(p as usize)
            .ok_or(Error::DegreeOverflow {
                requested: p,
                max: self.max_degree(),
            })?;
        Ok(row.get(k as usize).copied().unwrap_or(0))
    }

    /// Expands `x^m = sum_k c_k H_k(x)`; returns the exact integer `c_k`.
    ///
    /// Back-substitution against the (monic, lower-triangular in degree)
    /// coefficient table keeps everything in integer arithmetic.
    pub fn monomial_in_hermite(&self, m: u32) -> Result<Vec<i128>> {
        if m > self.max_degree() {
            return Err(Error::DegreeOverflow {
                requested: m,
                max: self.max_degree(),
            });
        }
        let m = m as usize;
        let mut residual = vec![0i128; m + 1];
        residual[m] = 1;
        let mut out = vec![0i128; m + 1];
        for k in (0..=m).rev() {
            let c = residual[k]; // H_k is monic
            out[k] = c;
            if c != 0 {
                for (j, hc) in self.coeffs[k].iter().enumerate() {
                    residual[j] -= c * hc;
                }
            }
        }
        debug_assert!(residual.iter().all(|&r| r == 0));
        Ok(out)
    }
}

/// Evaluates the probabilists' Hermite polynomial by the three-term
/// recurrence.
pub fn hermite_eval(p: u32, x: f64) -> Result<f64> {
    if p > MAX_DEGREE {
        return Err(Error::DegreeOverflow {
            requested: p,
            max: MAX_DEGREE,
        });
    }
    Ok(hermite_eval_raw(p, x))
}

/// Recurrence evaluation without the degree guard, for hot loops with small
/// fixed orders.
#[inline]
pub(crate) fn hermite_eval_raw(p: u32, x: f64) -> f64 {
    match p {
        0 => 1.0,
        1 => x,
        _ => {
            let mut prev = 1.0;
            let mut curr = x;
            for k in 1..p {
                let next = x * curr - k as f64 * prev;
                prev = curr;
                curr = next;
            }
            curr
        }
    }
}

/// `mu_p = E[N^p]` for standard Gaussian `N`: zero for odd `p`, `(p-1)!!` for
/// even `p`.
pub fn gaussian_moment(p: u32) -> f64 {
    if p % 2 == 1 {
        return 0.0;
    }
    let mut acc: i128 = 1;
    let mut k = p as i128 - 1;
    while k > 1 {
        acc *= k;
        k -= 2;
    }
    acc as f64
}

fn shared_basis() -> &'static HermiteBasis {
    use std::sync::OnceLock;
    static BASIS: OnceLock<HermiteBasis> = OnceLock::new();
    BASIS.get_or_init(|| HermiteBasis::new(MAX_DEGREE).expect("static table within cap"))
}

/// Coefficient of `H_{2i-1}` in the expansion of `x^{2r-1}`, `1 <= i <= r`.
pub fn kappa_coeff(r: u32, i: u32) -> Result<f64> {
    if i == 0 || i > r || r == 0 {
        return Err(Error::InvalidConfig(format!(
            "kappa index out of range: need 1 <= i <= r, got r={r}, i={i}"
        )));
    }
    let expansion = shared_basis().monomial_in_hermite(2 * r - 1)?;
    Ok(expansion[(2 * i - 1) as usize] as f64)
}

/// Coefficient of `H_{2a}` in the expansion of `x^{2r}`, `1 <= a <= r`.
pub fn b_coeff(r: u32, a: u32) -> Result<f64> {
    if a == 0 || a > r || r == 0 {
        return Err(Error::InvalidConfig(format!(
            "b index out of range: need 1 <= a <= r, got r={r}, a={a}"
        )));
    }
    let expansion = shared_basis().monomial_in_hermite(2 * r)?;
    Ok(expansion[(2 * a) as usize] as f64)
}

/// Truncation policy for the summed-autocorrelation constants.
#[derive(Debug, Clone, Copy)]
pub struct AlphaOptions {
    /// Starting number of one-sided terms.
    pub initial_terms: u64,
    /// Work cap; the sum grows geometrically up to this many terms and then
    /// signals `Unconverged` rather than silently truncating.
    pub max_terms: u64,
    /// Relative tail tolerance.
    pub rel_tol: f64,
}

impl Default for AlphaOptions {
    fn default() -> Self {
        AlphaOptions {
            initial_terms: 1 << 14,
            max_terms: 1 << 26,
            rel_tol: 1e-10,
        }
    }
}

/// Raw truncated value `sqrt(m! * sum_{|a| <= K} rho(a)^m)`, no tail control.
pub fn alpha_truncated(hurst: Hurst, m: u32, terms: u64) -> f64 {
    let mut s = 1.0f64; // rho(0)^m
    for a in 1..=terms as i64 {
        s += 2.0 * fgn_autocorr(hurst, a).powi(m as i32);
    }
    (factorial_f64(m) * s).sqrt()
}

fn factorial_f64(m: u32) -> f64 {
    (1..=m as i128).product::<i128>() as f64
}

/// Integral-comparison bound on the absolute tail `2 sum_{a > K} |rho(a)|^m`,
/// using `|rho(a)| <= |H(2H-1)| (a-1)^{2H-2}` for `a >= 2`.
fn alpha_tail_bound(hurst: Hurst, m: u32, k: u64) -> f64 {
    let h = hurst.value();
    let c = (h * (2.0 * h - 1.0)).abs();
    let decay = (2.0 - 2.0 * h) * m as f64; // > 1 on the convergent range
    2.0 * c.powi(m as i32) * ((k - 1) as f64).powf(1.0 - decay) / (decay - 1.0)
}

/// `alpha_m = sqrt(m! sum_{a in Z} rho(a)^m)`, extended until the tail bound
/// is below `rel_tol` relative.
///
/// Finite iff `H < 1 - 1/(2m)`; the case `H = 1/2` is exact (`rho` vanishes
/// off zero), and for `m = 1, H < 1/2` the second differences telescope to
/// zero exactly.
pub fn alpha_constant(hurst: Hurst, m: u32) -> Result<f64> {
    alpha_constant_with(hurst, m, AlphaOptions::default())
}

pub fn alpha_constant_with(hurst: Hurst, m: u32, opts: AlphaOptions) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidConfig("alpha order must be >= 1".into()));
    }
    let h = hurst.value();
    if h == 0.5 {
        // rho(a) = 0 for a != 0, so the series is exactly 1.
        return Ok(factorial_f64(m).sqrt());
    }
    if h >= 1.0 - 1.0 / (2.0 * m as f64) {
        return Err(Error::AlphaDiverges {
            hurst: h,
            order: m,
        });
    }
    if m == 1 {
        // sum_{|a| <= K} rho(a) = (K+1)^{2H} - K^{2H} -> 0 for H < 1/2.
        return Ok(0.0);
    }

    let mut sum = 1.0f64; // rho(0)^m
    let mut next_a: u64 = 1;
    let mut k = opts.initial_terms;
    loop {
        for a in next_a..=k {
            sum += 2.0 * fgn_autocorr(hurst, a as i64).powi(m as i32);
        }
        next_a = k + 1;
        let tail = alpha_tail_bound(hurst, m, k);
        if tail <= opts.rel_tol * sum.abs().max(f64::MIN_POSITIVE) {
            let val = factorial_f64(m) * sum;
            if val < 0.0 {
                return Err(Error::CovarianceNotPd(format!(
                    "truncated alpha series went negative ({val}) at H={h}, m={m}"
                )));
            }
            return Ok(val.sqrt());
        }
        if k >= opts.max_terms {
            return Err(Error::Unconverged {
                hurst: h,
                order: m,
                cap: opts.max_terms,
            });
        }
        k = (k * 2).min(opts.max_terms);
    }
}

/// `beta_{2r-1} = sqrt(sum_{l=2..r} kappa_{r,l}^2 alpha_{2l-1}^2)`, the noise
/// scale of the odd-order fluctuation limit (`r >= 2`).
pub fn beta_odd(hurst: Hurst, r: u32) -> Result<f64> {
    if r < 2 {
        return Err(Error::InvalidConfig(format!(
            "beta is defined for r >= 2, got r={r}"
        )));
    }
    let mut acc = 0.0;
    for l in 2..=r {
        let kappa = kappa_coeff(r, l)?;
        let alpha = alpha_constant(hurst, 2 * l - 1)?;
        acc += kappa * kappa * alpha * alpha;
    }
    Ok(acc.sqrt())
}

/// `gamma_{2r} = sqrt(sum_{a=1..r} b_{2r,a}^2 alpha_{2a}^2)`, the noise scale
/// of the even-order fluctuation limit.
pub fn gamma_even(hurst: Hurst, r: u32) -> Result<f64> {
    if r == 0 {
        return Err(Error::InvalidConfig("gamma requires r >= 1".into()));
    }
    let mut acc = 0.0;
    for a in 1..=r {
        let b = b_coeff(r, a)?;
        let alpha = alpha_constant(hurst, 2 * a)?;
        acc += b * b * alpha * alpha;
    }
    Ok(acc.sqrt())
}

/// Bundle of every constant the experiments need for a given `(H, r)`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct LimitConstants {
    pub hurst: f64,
    pub r: u32,
    /// `mu[p]` for `p = 0..=4r`.
    pub mu: Vec<f64>,
    /// `kappa[i-1]` for `i = 1..=r`.
    pub kappa: Vec<f64>,
    /// `b[a-1]` for `a = 1..=r`.
    pub b: Vec<f64>,
    /// `alpha[m-1]` for `m = 1..=2r`; `None` where the series diverges.
    pub alpha: Vec<Option<f64>>,
    pub beta_odd: Option<f64>,
    pub gamma_even: Option<f64>,
}

pub fn limit_constants(hurst: Hurst, r: u32) -> Result<LimitConstants> {
    if r == 0 {
        return Err(Error::InvalidConfig("r must be >= 1".into()));
    }
    let mu = (0..=4 * r).map(gaussian_moment).collect();
    let kappa = (1..=r).map(|i| kappa_coeff(r, i)).collect::<Result<_>>()?;
    let b = (1..=r).map(|a| b_coeff(r, a)).collect::<Result<_>>()?;
    let alpha = (1..=2 * r)
        .map(|m| match alpha_constant(hurst, m) {
            Ok(v) => Ok(Some(v)),
            Err(Error::AlphaDiverges { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    let beta = if r >= 2 {
        match beta_odd(hurst, r) {
            Ok(v) => Some(v),
            Err(Error::AlphaDiverges { .. }) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    let gamma = match gamma_even(hurst, r) {
        Ok(v) => Some(v),
        Err(Error::AlphaDiverges { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(LimitConstants {
        hurst: hurst.value(),
        r,
        mu,
        kappa,
        b,
        alpha,
        beta_odd: beta,
        gamma_even: gamma,
    })
}
