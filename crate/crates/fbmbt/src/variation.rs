//! Weighted power-variation statistics of the iterated process along the
//! crossing scheme, and the exact algebraic identities relating them.
//!
//! Everything routes through the stopping-time representation: the statistic
//! over the walk is re-expressed as a lattice sum over the outer process
//! weighted by crossing counts, which is what makes the asymptotics tractable
//! and gives exact (integer-weight) identities to test against. The raw
//! dyadic-time form is provided for completeness in path-coupled mode only;
//! its discretization bias (nearest-grid sampling of the outer process) is
//! inherent to that form.
//!
//! Sums are accumulated with compensated summation: the identity checks
//! compare independently computed sides at 1e-9 relative over ~10^5 terms.

use crate::crossing::{walk_step_count, CrossingRecord, WalkMode};
use crate::error::Error;
use crate::gaussian::{increment_scale, FbmGrid};
use crate::hermite::{gaussian_moment, hermite_eval_raw, kappa_coeff};
use crate::sum::CompensatedSum;
use crate::Result;

/// Closed registry of weight functions.
///
/// The registry only admits functions that are bounded together with their
/// derivatives ("one" is admitted with primitive F(x) = x). Adding a
/// function requires supplying bounded-derivative evidence in the docs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Weight {
    /// f(x) = 1, F(x) = x.
    One,
    /// f(x) = cos x, F(x) = sin x.
    Cos,
    /// f(x) = 1/(1+x^2), F(x) = arctan x.
    Rational,
}

impl Weight {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "one" => Ok(Weight::One),
            "cos" => Ok(Weight::Cos),
            "rational" => Ok(Weight::Rational),
            other => Err(Error::InvalidConfig(format!(
                "unknown weight function `{other}`; registry: one, cos, rational"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Weight::One => "one",
            Weight::Cos => "cos",
            Weight::Rational => "rational",
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Weight::One => 1.0,
            Weight::Cos => x.cos(),
            Weight::Rational => 1.0 / (1.0 + x * x),
        }
    }

    /// Derivative of order `0..=4`.
    pub fn derivative(&self, order: u32, x: f64) -> Result<f64> {
        if order > 4 {
            return Err(Error::MissingDerivative {
                name: self.name(),
                order,
            });
        }
        Ok(match self {
            Weight::One => {
                if order == 0 {
                    1.0
                } else {
                    0.0
                }
            }
            Weight::Cos => match order % 4 {
                0 => x.cos(),
                1 => -x.sin(),
                2 => -x.cos(),
                _ => x.sin(),
            },
            Weight::Rational => {
                let d = 1.0 + x * x;
                match order {
                    0 => 1.0 / d,
                    1 => -2.0 * x / d.powi(2),
                    2 => (6.0 * x * x - 2.0) / d.powi(3),
                    3 => 24.0 * x * (1.0 - x * x) / d.powi(4),
                    _ => 24.0 * (5.0 * x.powi(4) - 10.0 * x * x + 1.0) / d.powi(5),
                }
            }
        })
    }

    /// Closed-form primitive.
    pub fn primitive(&self, x: f64) -> Result<f64> {
        Ok(match self {
            Weight::One => x,
            Weight::Cos => x.sin(),
            Weight::Rational => x.atan(),
        })
    }
}

fn check_alignment(grid: &FbmGrid, record: &CrossingRecord) -> Result<()> {
    if grid.level() != record.level() {
        return Err(Error::GridMismatch(format!(
            "grid level {} != walk level {}",
            grid.level(),
            record.level()
        )));
    }
    let h = grid.spacing();
    let lo = record.min_position();
    let hi = record.max_position();
    if lo < grid.min_index() || hi + 1 > grid.max_index() {
        return Err(Error::SpanExceeded {
            needed: ((-lo).max(hi + 1)) as f64 * h,
            span: grid.span(),
        });
    }
    Ok(())
}

/// Core of the stopped weighted variation, generic in the weight so that
/// derivative-shifted weights reuse the same accumulation.
fn weighted_variation_fn<F: Fn(f64) -> f64>(
    grid: &FbmGrid,
    record: &CrossingRecord,
    f: F,
    order: u32,
    horizon: f64,
) -> Result<f64> {
    check_alignment(grid, record)?;
    let k = walk_step_count(record.level(), horizon);
    if k > record.steps().len() as u64 {
        return Err(Error::InvalidConfig(format!(
            "horizon {horizon} needs {k} walk steps but the record has {}",
            record.steps().len()
        )));
    }
    let scale = increment_scale(grid.hurst(), grid.level());
    let mu = gaussian_moment(order);
    let positions = record.positions();
    let mut acc = CompensatedSum::new();
    for step in 0..k as usize {
        let za = grid.value_fast(positions[step]);
        let zb = grid.value_fast(positions[step + 1]);
        let weight = 0.5 * (f(za) + f(zb));
        acc.add(weight * ((scale * (zb - za)).powi(order as i32) - mu));
    }
    Ok(acc.value())
}

/// Weighted variation of order `r` sampled along the crossing times:
/// `sum_k 1/2 (f(Z_k) + f(Z_{k+1})) [ (2^{nH/2} (Z_{k+1} - Z_k))^r - mu_r ]`
/// with `Z_k` the outer process at the walk position after `k` steps.
pub fn weighted_variation(
    grid: &FbmGrid,
    record: &CrossingRecord,
    weight: Weight,
    order: u32,
    horizon: f64,
) -> Result<f64> {
    weighted_variation_fn(grid, record, |x| weight.eval(x), order, horizon)
}

/// Odd-order Hermite variation over grid cells of one side of the lattice.
///
/// `cells` is the number of cells summed; the negative side reads the grid at
/// mirrored indices. This integer-count form is what the decomposition
/// identity needs (the walk endpoint is an exact cell count).
pub fn hermite_variation_cells(
    grid: &FbmGrid,
    weight: Weight,
    order: u32,
    cells: u64,
    negative_side: bool,
) -> Result<f64> {
    if cells == 0 {
        return Ok(0.0);
    }
    let last = cells as i64;
    let needed = if negative_side {
        -grid.min_index()
    } else {
        grid.max_index()
    };
    if last > needed {
        return Err(Error::SpanExceeded {
            needed: last as f64 * grid.spacing(),
            span: grid.span(),
        });
    }
    let scale = increment_scale(grid.hurst(), grid.level());
    let mut acc = CompensatedSum::new();
    for j in 0..last {
        let (ja, jb) = if negative_side { (-j, -j - 1) } else { (j, j + 1) };
        let xa = grid.value_fast(ja);
        let xb = grid.value_fast(jb);
        let w = 0.5 * (weight.eval(xa) + weight.eval(xb));
        acc.add(w * hermite_eval_raw(order, scale * (xb - xa)));
    }
    Ok(acc.value())
}

/// Hermite variation `W_n` of odd order at a signed horizon: the side is
/// chosen by the sign, and the cell count is `floor(2^{n/2} |t|)`.
pub fn hermite_variation(
    grid: &FbmGrid,
    weight: Weight,
    order: u32,
    t_signed: f64,
) -> Result<f64> {
    let cells = (2f64.powf(grid.level() as f64 / 2.0) * t_signed.abs()).floor() as u64;
    hermite_variation_cells(grid, weight, order, cells, t_signed < 0.0)
}

/// Lattice form of the weighted variation: the same sum re-expressed over
/// grid cells with up/down crossing counts,
/// `sum_j 1/2 (f(X_j) + f(X_{j+1})) [ (2^{nH/2} dX_j)^r - mu_r ] (U_j + (-1)^r D_j)`.
pub fn lattice_variation(
    grid: &FbmGrid,
    record: &CrossingRecord,
    weight: Weight,
    order: u32,
) -> Result<f64> {
    check_alignment(grid, record)?;
    let scale = increment_scale(grid.hurst(), grid.level());
    let mu = gaussian_moment(order);
    let odd = order % 2 == 1;
    let mut acc = CompensatedSum::new();
    for j in record.min_position()..=record.max_position() {
        let up = record.up(j);
        let down = record.down(j);
        if up == 0 && down == 0 {
            continue;
        }
        let xa = grid.value_fast(j);
        let xb = grid.value_fast(j + 1);
        let w = 0.5 * (weight.eval(xa) + weight.eval(xb));
        let base = (scale * (xb - xa)).powi(order as i32) - mu;
        let count = if odd {
            up as f64 - down as f64
        } else {
            (up + down) as f64
        };
        acc.add(w * base * count);
    }
    Ok(acc.value())
}

/// Absolute discrepancy between the stopped sum and its lattice form, both
/// computed independently. Exact identity: the contract is
/// `gap <= 1e-9 * (1 + |lhs|)`.
pub fn separation_identity_gap(
    grid: &FbmGrid,
    record: &CrossingRecord,
    weight: Weight,
    order: u32,
    horizon: f64,
) -> Result<f64> {
    let k = walk_step_count(record.level(), horizon);
    if k != record.steps().len() as u64 {
        return Err(Error::InvalidConfig(
            "identity check runs over the full record horizon".into(),
        ));
    }
    let lhs = weighted_variation(grid, record, weight, order, horizon)?;
    let rhs = lattice_variation(grid, record, weight, order)?;
    Ok((lhs - rhs).abs())
}

/// Absolute discrepancy of the odd-monomial decomposition: the stopped
/// variation of order `2r-1` against the kappa-weighted Hermite variations
/// evaluated at the walk endpoint.
pub fn hermite_decomposition_gap(
    grid: &FbmGrid,
    record: &CrossingRecord,
    weight: Weight,
    r: u32,
    horizon: f64,
) -> Result<f64> {
    let lhs = weighted_variation(grid, record, weight, 2 * r - 1, horizon)?;
    let endpoint = record.j_star();
    let mut rhs = CompensatedSum::new();
    for i in 1..=r {
        let coeff = kappa_coeff(r, i)?;
        let w = hermite_variation_cells(
            grid,
            weight,
            2 * i - 1,
            endpoint.unsigned_abs(),
            endpoint < 0,
        )?;
        rhs.add(coeff * w);
    }
    Ok((lhs - rhs.value()).abs())
}

/// `E|N|^q` for standard Gaussian `N`.
fn abs_gaussian_moment(q: f64) -> f64 {
    2f64.powf(q / 2.0) * statrs::function::gamma::gamma((q + 1.0) / 2.0)
        / std::f64::consts::PI.sqrt()
}

/// Centering term of the raw dyadic-time variation:
/// `E[(Z_{(k+1)2^-n} - Z_{k 2^-n})^p]`, evaluated by conditioning on the
/// inner increment (`mu_p E|N|^{pH} 2^{-npH/2}`); zero for odd `p`.
pub fn raw_increment_moment(hurst: crate::gaussian::Hurst, level: u32, p: u32) -> f64 {
    if p % 2 == 1 {
        return 0.0;
    }
    let q = p as f64 * hurst.value();
    gaussian_moment(p) * abs_gaussian_moment(q) * 2f64.powf(-(level as f64) * q / 2.0)
}

fn raw_variation_core(
    grid: &FbmGrid,
    record: &CrossingRecord,
    weight: Weight,
    p: u32,
    horizon: f64,
    center: f64,
) -> Result<f64> {
    if record.mode() != WalkMode::PathCoupled {
        return Err(Error::InvalidConfig(
            "raw dyadic-time variation requires a path-coupled record".into(),
        ));
    }
    if grid.level() != record.level() {
        return Err(Error::GridMismatch(format!(
            "grid level {} != record level {}",
            grid.level(),
            record.level()
        )));
    }
    let path = record.y_path().expect("path-coupled record carries a path");
    let k = walk_step_count(record.level(), horizon);
    let dyadic = 2f64.powi(-(record.level() as i32));
    let mut acc = CompensatedSum::new();
    let mut z_prev = grid.value_at(path.value_at_time(0.0))?;
    for step in 1..=k {
        let z_next = grid.value_at(path.value_at_time(step as f64 * dyadic))?;
        let w = 0.5 * (weight.eval(z_prev) + weight.eval(z_next));
        acc.add(w * ((z_next - z_prev).powi(p as i32) - center));
        z_prev = z_next;
    }
    Ok(acc.value())
}

/// Raw dyadic-time weighted `p`-variation, centered at the conditional
/// moment and scaled by `2^{n kappa_exp}`. Path-coupled mode only; the outer
/// process is read at the nearest grid point of the inner path.
pub fn raw_variation(
    grid: &FbmGrid,
    record: &CrossingRecord,
    weight: Weight,
    p: u32,
    kappa_exp: f64,
    horizon: f64,
) -> Result<f64> {
    let center = raw_increment_moment(grid.hurst(), record.level(), p);
    let sum = raw_variation_core(grid, record, weight, p, horizon, center)?;
    Ok(2f64.powf(record.level() as f64 * kappa_exp) * sum)
}

/// Uncentered raw weighted `p`-variation (no normalization).
pub fn raw_variation_uncentered(
    grid: &FbmGrid,
    record: &CrossingRecord,
    weight: Weight,
    p: u32,
    horizon: f64,
) -> Result<f64> {
    raw_variation_core(grid, record, weight, p, horizon, 0.0)
}

/// Stopped variation with the outer normalization `2^{-n kappa}`; algebraic
/// rearrangement of [`weighted_variation`].
pub fn stopped_variation_normalized(
    grid: &FbmGrid,
    record: &CrossingRecord,
    weight: Weight,
    p: u32,
    kappa_tilde: f64,
    horizon: f64,
) -> Result<f64> {
    let v = weighted_variation(grid, record, weight, p, horizon)?;
    Ok(2f64.powf(-(record.level() as f64) * kappa_tilde) * v)
}

/// Statistic family tags for series output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticKind {
    /// Stopped weighted variation of order `r`.
    Stopped,
    /// Odd-order Hermite variation.
    Hermite,
    /// Raw dyadic-time centered variation.
    Raw,
    /// Raw dyadic-time uncentered variation.
    RawUncentered,
}

impl StatisticKind {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "v" | "stopped" => Ok(StatisticKind::Stopped),
            "w" | "hermite" => Ok(StatisticKind::Hermite),
            "s" | "raw" => Ok(StatisticKind::Raw),
            "r" | "raw-uncentered" => Ok(StatisticKind::RawUncentered),
            other => Err(Error::InvalidConfig(format!(
                "unknown statistic `{other}`; expected one of v, w, s, r"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            StatisticKind::Stopped => "v",
            StatisticKind::Hermite => "w",
            StatisticKind::Raw => "s",
            StatisticKind::RawUncentered => "r",
        }
    }
}

/// One statistic's value per dyadic level for a single path realization.
#[derive(Debug, Clone, serde::Serialize)]
pub struct VariationSeries {
    pub kind: StatisticKind,
    pub order: u32,
    pub weight: Weight,
    pub hurst: f64,
    pub horizon: f64,
    pub values: std::collections::BTreeMap<u32, f64>,
}
