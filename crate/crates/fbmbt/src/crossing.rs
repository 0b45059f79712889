//! The dyadic level-crossing scheme for the inner Brownian motion: successive
//! hitting times of the lattice `{j 2^(-n/2)}`, the embedded simple random
//! walk, up/down crossing counts per cell and the crossing-based local-time
//! estimator.
//!
//! Two modes are supported. `walk-only` simulates the embedded walk directly,
//! which is exact in law for the walk, the crossing counts and the endpoint;
//! it is what every outer-process statistic needs and is by far the cheapest.
//! `path-coupled` simulates the inner motion on a much finer time grid and
//! detects the lattice hits on it; it is required whenever a limit references
//! the inner path itself (its value at the horizon, or its local time) jointly
//! with the statistic. Crossing detection on a discrete path misses sub-grid
//! excursions; the oversampling requirement `m >= n + 6` plus the optional
//! Brownian-bridge resampling between fine-grid points keep the effect small,
//! and the residual bias is documented rather than corrected.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Error;
use crate::gaussian::grid_spacing;
use crate::Result;

/// Simulation mode of a crossing record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WalkMode {
    WalkOnly,
    PathCoupled,
}

/// Number of walk steps observed before the horizon: `floor(2^n t)`.
#[inline]
pub fn walk_step_count(level: u32, horizon: f64) -> u64 {
    (2f64.powi(level as i32) * horizon).floor() as u64
}

/// Fine-grid inner path used by the path-coupled mode.
#[derive(Debug, Clone)]
pub struct FinePath {
    dt: f64,
    values: Vec<f64>,
}

impl FinePath {
    #[inline]
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Path value at the fine-grid point nearest to `t`.
    pub fn value_at_time(&self, t: f64) -> f64 {
        let idx = ((t / self.dt).round() as usize).min(self.values.len() - 1);
        self.values[idx]
    }

    /// Occupation-density local time estimate at the lattice points of the
    /// given level: counts fine-grid samples within `bandwidth` of each point,
    /// normalized to integrate to the elapsed time.
    ///
    /// Test oracle only; the statistics never consume it.
    pub fn occupation_local_time(
        &self,
        horizon: f64,
        level: u32,
        bandwidth: f64,
    ) -> BTreeMap<i64, f64> {
        let h = grid_spacing(level);
        let steps = ((horizon / self.dt).round() as usize).min(self.values.len());
        let weight = self.dt / (2.0 * bandwidth);
        let mut out = BTreeMap::new();
        for &y in &self.values[..steps] {
            let lo = ((y - bandwidth) / h).ceil() as i64;
            let hi = ((y + bandwidth) / h).floor() as i64;
            for j in lo..=hi {
                *out.entry(j).or_insert(0.0) += weight;
            }
        }
        out
    }
}

/// One realization of the level-`n` crossing scheme.
#[derive(Debug, Clone)]
pub struct CrossingRecord {
    level: u32,
    horizon: f64,
    steps: Vec<i8>,
    positions: Vec<i64>,
    up_counts: BTreeMap<i64, u64>,
    down_counts: BTreeMap<i64, u64>,
    j_star: i64,
    mode: WalkMode,
    hitting_times: Option<Vec<f64>>,
    y_path: Option<FinePath>,
}

impl CrossingRecord {
    /// Builds a record from explicit `+-1` steps (replay / test input).
    pub fn from_steps(level: u32, horizon: f64, steps: Vec<i8>) -> Result<Self> {
        if steps.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidConfig(
                "walk steps must be +1 or -1".into(),
            ));
        }
        if steps.len() as u64 != walk_step_count(level, horizon) {
            return Err(Error::InvalidConfig(format!(
                "expected floor(2^{level} * {horizon}) = {} steps, got {}",
                walk_step_count(level, horizon),
                steps.len()
            )));
        }
        Ok(Self::assemble(
            level, horizon, steps, WalkMode::WalkOnly, None, None,
        ))
    }

    fn assemble(
        level: u32,
        horizon: f64,
        steps: Vec<i8>,
        mode: WalkMode,
        hitting_times: Option<Vec<f64>>,
        y_path: Option<FinePath>,
    ) -> Self {
        let mut positions = Vec::with_capacity(steps.len() + 1);
        positions.push(0i64);
        let mut pos = 0i64;
        let mut min_pos = 0i64;
        let mut max_pos = 0i64;
        for &s in &steps {
            pos += s as i64;
            positions.push(pos);
            min_pos = min_pos.min(pos);
            max_pos = max_pos.max(pos);
        }

        // Cells are indexed by their lower endpoint; every step crosses
        // exactly one cell.
        let n_cells = (max_pos - min_pos) as usize;
        let mut up = vec![0u64; n_cells.max(1)];
        let mut down = vec![0u64; n_cells.max(1)];
        for (k, &s) in steps.iter().enumerate() {
            if s == 1 {
                up[(positions[k] - min_pos) as usize] += 1;
            } else {
                down[(positions[k + 1] - min_pos) as usize] += 1;
            }
        }
        let mut up_counts = BTreeMap::new();
        let mut down_counts = BTreeMap::new();
        for (idx, &c) in up.iter().enumerate() {
            if c > 0 {
                up_counts.insert(min_pos + idx as i64, c);
            }
        }
        for (idx, &c) in down.iter().enumerate() {
            if c > 0 {
                down_counts.insert(min_pos + idx as i64, c);
            }
        }

        CrossingRecord {
            level,
            horizon,
            j_star: pos,
            steps,
            positions,
            up_counts,
            down_counts,
            mode,
            hitting_times,
            y_path,
        }
    }

    #[inline]
    pub fn level(&self) -> u32 {
        self.level
    }

    #[inline]
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> &[i8] {
        &self.steps
    }

    /// Walk positions in lattice units, `positions[0] = 0`.
    pub fn positions(&self) -> &[i64] {
        &self.positions
    }

    pub fn up_counts(&self) -> &BTreeMap<i64, u64> {
        &self.up_counts
    }

    pub fn down_counts(&self) -> &BTreeMap<i64, u64> {
        &self.down_counts
    }

    /// Endpoint index: the walk position after `floor(2^n t)` steps.
    #[inline]
    pub fn j_star(&self) -> i64 {
        self.j_star
    }

    /// Walk endpoint in real units, `j* 2^(-n/2)`.
    #[inline]
    pub fn endpoint(&self) -> f64 {
        self.j_star as f64 * grid_spacing(self.level)
    }

    pub fn mode(&self) -> WalkMode {
        self.mode
    }

    pub fn hitting_times(&self) -> Option<&[f64]> {
        self.hitting_times.as_deref()
    }

    pub fn y_path(&self) -> Option<&FinePath> {
        self.y_path.as_ref()
    }

    pub fn min_position(&self) -> i64 {
        *self.positions.iter().min().unwrap()
    }

    pub fn max_position(&self) -> i64 {
        *self.positions.iter().max().unwrap()
    }

    /// Up count of the cell `[j, j+1]` in lattice units.
    #[inline]
    pub fn up(&self, j: i64) -> u64 {
        self.up_counts.get(&j).copied().unwrap_or(0)
    }

    #[inline]
    pub fn down(&self, j: i64) -> u64 {
        self.down_counts.get(&j).copied().unwrap_or(0)
    }

    /// Verifies the exact integer invariants: every step is one crossing and
    /// the up/down imbalance per cell matches the endpoint indicator.
    pub fn check_integrity(&self) -> Result<()> {
        let total: u64 = self.up_counts.values().sum::<u64>()
            + self.down_counts.values().sum::<u64>();
        if total != self.steps.len() as u64 {
            return Err(Error::InvalidConfig(format!(
                "crossing total {total} != step count {}",
                self.steps.len()
            )));
        }
        let lo = self.min_position() - 1;
        let hi = self.max_position() + 1;
        for j in lo..=hi {
            let diff = self.up(j) as i64 - self.down(j) as i64;
            let expected = if self.j_star > 0 && (0..self.j_star).contains(&j) {
                1
            } else if self.j_star < 0 && (self.j_star..0).contains(&j) {
                -1
            } else {
                0
            };
            if diff != expected {
                return Err(Error::InvalidConfig(format!(
                    "U-D imbalance at cell {j}: {diff} != {expected} (j*={})",
                    self.j_star
                )));
            }
        }
        Ok(())
    }
}

/// Simulates the embedded walk directly (exact in law, no inner path).
pub fn simulate_walk<R: Rng>(level: u32, horizon: f64, rng: &mut R) -> Result<CrossingRecord> {
    let k = walk_step_count(level, horizon);
    if k == 0 {
        return Err(Error::EmptyWalk { level, horizon });
    }
    let mut steps = Vec::with_capacity(k as usize);
    let mut bits: u64 = 0;
    for i in 0..k {
        if i % 64 == 0 {
            bits = rng.gen();
        }
        steps.push(if bits & 1 == 1 { 1i8 } else { -1i8 });
        bits >>= 1;
    }
    Ok(CrossingRecord::assemble(
        level,
        horizon,
        steps,
        WalkMode::WalkOnly,
        None,
        None,
    ))
}

/// Options for the path-coupled simulation.
#[derive(Debug, Clone, Copy)]
pub struct CoupledOptions {
    /// Brownian-bridge resampling of sub-grid crossings (on by default).
    pub bridge_resampling: bool,
    /// Reject the realization once the walk leaves `|j| > bound` (lattice
    /// units). The harness reacts by doubling the outer-process span.
    pub position_bound: Option<i64>,
}

impl Default for CoupledOptions {
    fn default() -> Self {
        CoupledOptions {
            bridge_resampling: true,
            position_bound: None,
        }
    }
}

/// Simulates the inner motion on the fine grid `2^(-m)` and reads the walk
/// off the detected lattice hits. Requires `m >= n + 6` of oversampling.
pub fn simulate_coupled<R: Rng>(
    level: u32,
    horizon: f64,
    fine_level: u32,
    rng: &mut R,
    opts: CoupledOptions,
) -> Result<CrossingRecord> {
    if fine_level < level + 6 {
        return Err(Error::InvalidConfig(format!(
            "fine level {fine_level} must be at least n + 6 = {}",
            level + 6
        )));
    }
    let k_target = walk_step_count(level, horizon);
    if k_target == 0 {
        return Err(Error::EmptyWalk { level, horizon });
    }

    let h = grid_spacing(level);
    let dt = 2f64.powi(-(fine_level as i32));
    let sdt = dt.sqrt();
    let horizon_idx = (horizon / dt).round() as usize;
    // ~64x the expected number of fine steps; unreachable in practice.
    let budget = 64 * (horizon_idx + (k_target as usize) * (dt.recip() as usize >> level) + 1024);

    let mut path = Vec::with_capacity(horizon_idx + 1);
    path.push(0.0f64);
    let mut hitting_times = Vec::with_capacity(k_target as usize + 1);
    hitting_times.push(0.0);
    let mut steps: Vec<i8> = Vec::with_capacity(k_target as usize);

    let mut y = 0.0f64;
    let mut g = 0i64; // current walk lattice index
    let mut i = 0usize;
    while (steps.len() as u64) < k_target || i < horizon_idx {
        i += 1;
        if i > budget {
            return Err(Error::InvalidConfig(
                "fine-path step budget exhausted; inner path did not complete its crossings"
                    .into(),
            ));
        }
        let z: f64 = rng.sample(StandardNormal);
        let y_next = y + sdt * z;
        if !y_next.is_finite() {
            return Err(Error::InvalidConfig("inner path became non-finite".into()));
        }
        path.push(y_next);

        if (steps.len() as u64) < k_target {
            let t_now = i as f64 * dt;
            // Direct attainments first; a single fine step can in principle
            // jump several levels.
            loop {
                let upper = (g + 1) as f64 * h;
                let lower = (g - 1) as f64 * h;
                let dir = if y_next >= upper {
                    1i8
                } else if y_next <= lower {
                    -1i8
                } else {
                    break;
                };
                g += dir as i64;
                steps.push(dir);
                hitting_times.push(t_now);
                if steps.len() as u64 == k_target {
                    break;
                }
            }
            // Bridge resampling: the path may have touched a level between
            // the two fine-grid points even though both endpoints are inside
            // the cell. P(unseen hit) = exp(-2 a b / dt).
            if opts.bridge_resampling && (steps.len() as u64) < k_target {
                let upper = (g + 1) as f64 * h;
                let lower = (g - 1) as f64 * h;
                if y < upper && y_next < upper && y > lower && y_next > lower {
                    let p_up = (-2.0 * (upper - y) * (upper - y_next) / dt).exp();
                    let p_down = (-2.0 * (y - lower) * (y_next - lower) / dt).exp();
                    let u: f64 = rng.gen();
                    if u < p_up {
                        g += 1;
                        steps.push(1);
                        hitting_times.push(t_now);
                    } else if u < p_up + p_down {
                        g -= 1;
                        steps.push(-1);
                        hitting_times.push(t_now);
                    }
                }
            }
            if let Some(bound) = opts.position_bound {
                if g.abs() > bound {
                    return Err(Error::SpanExceeded {
                        needed: g.abs() as f64 * h,
                        span: bound as f64 * h,
                    });
                }
            }
        }
        y = y_next;
    }

    Ok(CrossingRecord::assemble(
        level,
        horizon,
        steps,
        WalkMode::PathCoupled,
        Some(hitting_times),
        Some(FinePath { dt, values: path }),
    ))
}

/// Crossing-based local time: `j -> 2^(-n/2) (U_j + D_j)`.
#[derive(Debug, Clone)]
pub struct LocalTimeEstimate {
    level: u32,
    horizon: f64,
    values: BTreeMap<i64, f64>,
}

impl LocalTimeEstimate {
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn values(&self) -> &BTreeMap<i64, f64> {
        &self.values
    }

    #[inline]
    pub fn value(&self, j: i64) -> f64 {
        self.values.get(&j).copied().unwrap_or(0.0)
    }

    /// Exactly `2^(-n/2) floor(2^n t)` by the counting identity.
    pub fn total_mass(&self) -> f64 {
        self.values.values().sum()
    }
}

pub fn local_time_estimate(record: &CrossingRecord) -> LocalTimeEstimate {
    let scale = grid_spacing(record.level());
    let mut values = BTreeMap::new();
    for (&j, &u) in record.up_counts() {
        *values.entry(j).or_insert(0.0) += scale * u as f64;
    }
    for (&j, &d) in record.down_counts() {
        *values.entry(j).or_insert(0.0) += scale * d as f64;
    }
    LocalTimeEstimate {
        level: record.level(),
        horizon: record.horizon(),
        values,
    }
}

/// Monte Carlo estimate of `E[(Y at the final hitting time)^order]` from
/// walk-only replications on the streams `(master_seed, walk domain, i)`.
pub fn walk_moment(
    level: u32,
    horizon: f64,
    order: u32,
    replications: usize,
    master_seed: u64,
) -> Result<f64> {
    if replications < 100 {
        return Err(Error::InsufficientReplications {
            required: 100,
            got: replications,
        });
    }
    let h = grid_spacing(level);
    let mut acc = 0.0;
    for rep in 0..replications {
        let mut rng = crate::rng::stream_rng(master_seed, crate::rng::DOMAIN_WALK, rep as u64);
        let record = simulate_walk(level, horizon, &mut rng)?;
        acc += (record.j_star() as f64 * h).powi(order as i32);
    }
    Ok(acc / replications as f64)
}

/// Exact `E|S_K|` for a simple symmetric random walk of `K` steps:
/// `K 2^(1-K) C(K-1, floor((K-1)/2))`, evaluated in log space.
pub fn exact_abs_walk_mean(steps: u64) -> f64 {
    if steps == 0 {
        return 0.0;
    }
    let k = steps as f64;
    let half = ((steps - 1) / 2) as f64;
    let ln_choose = statrs::function::gamma::ln_gamma(k)
        - statrs::function::gamma::ln_gamma(half + 1.0)
        - statrs::function::gamma::ln_gamma(k - half);
    (k.ln() + (1.0 - k) * std::f64::consts::LN_2 + ln_choose).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, DOMAIN_ORACLE, DOMAIN_WALK};
    use crate::stats;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Exhaustive moment of the K-step walk endpoint by enumerating all 2^K
    /// step sequences; independent of the simulation code.
    fn enumerated_walk_moment(k: u32, order: u32) -> f64 {
        assert!(k <= 16);
        let mut total: i128 = 0;
        for mask in 0u32..(1 << k) {
            let sum: i64 = (0..k)
                .map(|b| if mask >> b & 1 == 1 { 1i64 } else { -1 })
                .sum();
            total += (sum as i128).pow(order);
        }
        total as f64 / 2f64.powi(k as i32)
    }

    #[test]
    fn hand_traced_toy_walk() {
        // 4 steps +1,+1,-1,+1: positions 0,1,2,1,2; U0=1, U1=2, D1=1; j*=2.
        let rec = CrossingRecord::from_steps(2, 1.0, vec![1, 1, -1, 1]).unwrap();
        assert_eq!(rec.positions(), &[0, 1, 2, 1, 2]);
        assert_eq!(rec.up(0), 1);
        assert_eq!(rec.up(1), 2);
        assert_eq!(rec.down(1), 1);
        assert_eq!(rec.down(0), 0);
        assert_eq!(rec.j_star(), 2);
        rec.check_integrity().unwrap();

        // Local time: cell 0 crossed once, cell 1 three times.
        let lt = local_time_estimate(&rec);
        let h = grid_spacing(2);
        assert_relative_eq!(lt.value(0), h, epsilon = 1e-15);
        assert_relative_eq!(lt.value(1), 3.0 * h, epsilon = 1e-15);
        assert_relative_eq!(lt.total_mass(), 4.0 * h, epsilon = 1e-15);
    }

    #[test]
    fn every_step_is_exactly_one_crossing() {
        for rep in 0..50u64 {
            let mut rng = stream_rng(8, DOMAIN_WALK, rep);
            let rec = simulate_walk(10, 1.0, &mut rng).unwrap();
            let total: u64 =
                rec.up_counts().values().sum::<u64>() + rec.down_counts().values().sum::<u64>();
            assert_eq!(total, walk_step_count(10, 1.0));
            rec.check_integrity().unwrap();
        }
    }

    proptest! {
        #[test]
        fn crossing_identities_hold_for_arbitrary_step_sequences(
            steps in proptest::collection::vec(prop_oneof![Just(1i8), Just(-1i8)], 1..200)
        ) {
            // Use a horizon that matches the length exactly: t = len / 2^n.
            let level = 8u32;
            let horizon = steps.len() as f64 / 2f64.powi(level as i32);
            let rec = CrossingRecord::from_steps(level, horizon, steps.clone()).unwrap();
            rec.check_integrity().unwrap();
            prop_assert_eq!(rec.j_star(), *rec.positions().last().unwrap());
            let lt = local_time_estimate(&rec);
            let expected_mass = steps.len() as f64 * grid_spacing(level);
            prop_assert!((lt.total_mass() - expected_mass).abs() < 1e-12);
        }
    }

    #[test]
    fn walk_is_deterministic_per_seed() {
        let a = simulate_walk(12, 1.0, &mut stream_rng(3, DOMAIN_WALK, 9)).unwrap();
        let b = simulate_walk(12, 1.0, &mut stream_rng(3, DOMAIN_WALK, 9)).unwrap();
        assert_eq!(a.steps(), b.steps());
    }

    #[test]
    fn second_moment_matches_step_variance() {
        // E[(2^{-n/2} j*)^2] = floor(2^n t) 2^{-n} exactly; MC within 4 se.
        let (level, horizon, reps) = (8u32, 1.0, 4000usize);
        let k = walk_step_count(level, horizon);
        let expected = k as f64 * 2f64.powi(-(level as i32));
        let h = grid_spacing(level);
        let vals: Vec<f64> = (0..reps)
            .map(|rep| {
                let mut rng = stream_rng(21, DOMAIN_WALK, rep as u64);
                let rec = simulate_walk(level, horizon, &mut rng).unwrap();
                (rec.j_star() as f64 * h).powi(2)
            })
            .collect();
        let mc = stats::mean(&vals);
        let se = (stats::variance(&vals) / reps as f64).sqrt();
        assert!(
            (mc - expected).abs() <= 4.0 * se,
            "second moment {mc} vs {expected} (4 se = {:.3e})",
            4.0 * se
        );
    }

    #[test]
    fn fourth_moment_matches_exhaustive_oracle() {
        // K = floor(2^3 * 1.2) = 9 <= 12: enumerate all 512 sequences.
        let (level, horizon) = (3u32, 1.2);
        let k = walk_step_count(level, horizon) as u32;
        assert_eq!(k, 9);
        let oracle = enumerated_walk_moment(k, 4);
        // The enumeration agrees exactly with 3K^2 - 2K.
        assert_eq!(oracle, 3.0 * (k as f64).powi(2) - 2.0 * k as f64);

        let scale = 2f64.powi(-(level as i32)); // (2^{-n/2})^2 per squared step
        let expected = oracle * scale * scale;
        let reps = 4000;
        let h = grid_spacing(level);
        let vals: Vec<f64> = (0..reps)
            .map(|rep| {
                let mut rng = stream_rng(22, DOMAIN_WALK, rep as u64);
                let rec = simulate_walk(level, horizon, &mut rng).unwrap();
                (rec.j_star() as f64 * h).powi(4)
            })
            .collect();
        let mc = stats::mean(&vals);
        let se = (stats::variance(&vals) / reps as f64).sqrt();
        assert!(
            (mc - expected).abs() <= 4.0 * se,
            "fourth moment {mc} vs {expected} (4 se = {:.3e})",
            4.0 * se
        );
    }

    #[test]
    fn even_moments_stay_bounded_in_the_level() {
        // Boundedness witness: the MC moment stays below twice the Gaussian
        // moment mu_{2k} t^k for every level up to 16.
        for k in [1u32, 2] {
            let bound = 2.0 * crate::hermite::gaussian_moment(2 * k);
            for level in [4u32, 8, 12, 16] {
                let m = walk_moment(level, 1.0, 2 * k, 500, 5150).unwrap();
                assert!(
                    m < bound,
                    "moment of order {} at level {level} is {m}, bound {bound}",
                    2 * k
                );
            }
        }
    }

    #[test]
    fn walk_moment_requires_enough_replications() {
        assert!(matches!(
            walk_moment(8, 1.0, 2, 50, 1),
            Err(Error::InsufficientReplications { .. })
        ));
    }

    #[test]
    fn exact_abs_mean_matches_enumeration() {
        for k in 1..=12u32 {
            let enumerated = {
                let mut total: i128 = 0;
                for mask in 0u32..(1 << k) {
                    let sum: i64 = (0..k)
                        .map(|b| if mask >> b & 1 == 1 { 1i64 } else { -1 })
                        .sum();
                    total += sum.unsigned_abs() as i128;
                }
                total as f64 / 2f64.powi(k as i32)
            };
            assert_relative_eq!(
                exact_abs_walk_mean(k as u64),
                enumerated,
                epsilon = 1e-10
            );
        }
        // Large-K asymptote sqrt(2K/pi).
        let k = 1u64 << 16;
        let asymptote = (2.0 * k as f64 / std::f64::consts::PI).sqrt();
        assert_relative_eq!(
            exact_abs_walk_mean(k),
            asymptote,
            max_relative = 1e-4
        );
    }

    #[test]
    fn coupled_path_structure() {
        let mut rng = stream_rng(14, DOMAIN_WALK, 0);
        let rec = simulate_coupled(6, 1.0, 12, &mut rng, CoupledOptions::default()).unwrap();
        rec.check_integrity().unwrap();
        assert_eq!(rec.mode(), WalkMode::PathCoupled);
        let times = rec.hitting_times().unwrap();
        assert_eq!(times.len(), rec.steps().len() + 1);
        assert_eq!(times[0], 0.0);
        for w in times.windows(2) {
            assert!(w[1] > w[0], "hitting times must be strictly increasing");
        }
        assert_eq!(rec.j_star(), *rec.positions().last().unwrap());
        assert!(rec.y_path().is_some());
    }

    #[test]
    fn coupled_endpoint_is_centered() {
        let reps = 2000;
        let vals: Vec<f64> = (0..reps)
            .map(|rep| {
                let mut rng = stream_rng(15, DOMAIN_WALK, rep as u64);
                let rec =
                    simulate_coupled(6, 1.0, 12, &mut rng, CoupledOptions::default()).unwrap();
                rec.y_path().unwrap().value_at_time(1.0)
            })
            .collect();
        let mc = stats::mean(&vals);
        let se = (stats::variance(&vals) / reps as f64).sqrt();
        assert!(
            mc.abs() <= 3.0 * se,
            "E[Y_t] = {mc} not within 3 se ({:.3e}) of 0",
            3.0 * se
        );
    }

    #[test]
    fn final_hitting_time_approaches_horizon() {
        // median |T_K - t| decreases with the level.
        let mut medians = Vec::new();
        for level in [4u32, 8, 12] {
            let devs: Vec<f64> = (0..60)
                .map(|rep| {
                    let mut rng = stream_rng(16, DOMAIN_WALK, rep as u64);
                    let rec = simulate_coupled(
                        level,
                        1.0,
                        level + 6,
                        &mut rng,
                        CoupledOptions::default(),
                    )
                    .unwrap();
                    (rec.hitting_times().unwrap().last().unwrap() - 1.0).abs()
                })
                .collect();
            medians.push(stats::median(&devs));
        }
        assert!(
            medians[0] > medians[1] && medians[1] > medians[2],
            "median |T_K - t| not decreasing: {medians:?}"
        );
    }

    #[test]
    fn sampled_endpoint_tracks_horizon_value() {
        // corr(Y_{T_K}, Y_t) grows toward 1 with the level.
        let mut corrs = Vec::new();
        for level in [4u32, 10] {
            let mut ends = Vec::new();
            let mut horizons = Vec::new();
            for rep in 0..400 {
                let mut rng = stream_rng(17, DOMAIN_WALK, rep as u64);
                let rec =
                    simulate_coupled(level, 1.0, level + 6, &mut rng, CoupledOptions::default())
                        .unwrap();
                ends.push(rec.endpoint());
                horizons.push(rec.y_path().unwrap().value_at_time(1.0));
            }
            corrs.push(stats::correlation(&ends, &horizons));
        }
        assert!(
            corrs[1] > corrs[0] && corrs[1] > 0.98,
            "endpoint correlation should approach 1: {corrs:?}"
        );
    }

    #[test]
    fn crossing_local_time_mean_matches_brownian_local_time() {
        // E[L_1^0(Y)] = sqrt(2/pi); the crossing estimate at the origin cell
        // should be within 5% at level 12 (walk-only is exact in law).
        let reps = 3000;
        let vals: Vec<f64> = (0..reps)
            .map(|rep| {
                let mut rng = stream_rng(18, DOMAIN_WALK, rep as u64);
                let rec = simulate_walk(12, 1.0, &mut rng).unwrap();
                local_time_estimate(&rec).value(0)
            })
            .collect();
        let mc = stats::mean(&vals);
        let expected = (2.0 / std::f64::consts::PI).sqrt();
        assert!(
            (mc / expected - 1.0).abs() < 0.05,
            "E[local time at 0] = {mc} vs {expected}"
        );
    }

    #[test]
    fn occupation_oracle_agrees_with_crossing_estimate_in_mean() {
        // Both estimators target L_1^0(Y); their means agree within 5% at n=12.
        let reps = 400;
        let (mut crossing_sum, mut occupation_sum) = (0.0, 0.0);
        for rep in 0..reps {
            let mut rng = stream_rng(19, DOMAIN_WALK, rep as u64);
            let rec = simulate_coupled(12, 1.0, 18, &mut rng, CoupledOptions::default()).unwrap();
            crossing_sum += local_time_estimate(&rec).value(0);
            let bandwidth = 4.0 * 2f64.powf(-9.0);
            occupation_sum += rec
                .y_path()
                .unwrap()
                .occupation_local_time(1.0, 12, bandwidth)
                .get(&0)
                .copied()
                .unwrap_or(0.0);
        }
        let expected = (2.0 / std::f64::consts::PI).sqrt();
        let crossing_mean = crossing_sum / reps as f64;
        let occupation_mean = occupation_sum / reps as f64;
        assert!(
            (crossing_mean / expected - 1.0).abs() < 0.05,
            "crossing mean {crossing_mean} vs {expected}"
        );
        assert!(
            (occupation_mean / expected - 1.0).abs() < 0.05,
            "occupation mean {occupation_mean} vs {expected}"
        );
    }

    #[test]
    fn local_time_moment_bound_holds_on_grid() {
        // E[(L_t^x)^p] <= 2 E[(L_1^0)^p] t^{p/2} exp(-x^2/(2t)) with
        // E[L_1^0] = sqrt(2/pi), E[(L_1^0)^2] = 1. Checked on a grid of (x, t)
        // with p in {1, 2}; tolerated violations: < 1% of points.
        let level = 10u32;
        let fine = level + 6;
        let reps = 1200;
        let bandwidth = 4.0 * 2f64.powf(-(fine as f64) / 2.0);
        let h = grid_spacing(level);

        let oracles: Vec<BTreeMap<i64, f64>> = (0..reps)
            .map(|rep| {
                let mut rng = stream_rng(20, DOMAIN_ORACLE, rep as u64);
                let rec =
                    simulate_coupled(level, 1.0, fine, &mut rng, CoupledOptions::default())
                        .unwrap();
                let mut by_t = BTreeMap::new();
                for (key, t) in [(0i64, 0.5f64), (1, 1.0)] {
                    let lt = rec.y_path().unwrap().occupation_local_time(t, level, bandwidth);
                    by_t.insert(key, lt);
                }
                // flatten: store (t_key * big + j) -> value
                let mut flat = BTreeMap::new();
                for (tk, lt) in by_t {
                    for (j, v) in lt {
                        flat.insert(tk * 1_000_000 + j, v);
                    }
                }
                flat
            })
            .collect();

        let e_l0 = (2.0 / std::f64::consts::PI).sqrt();
        let mut checked = 0usize;
        let mut violations = 0usize;
        for (tk, t) in [(0i64, 0.5f64), (1, 1.0)] {
            let xs: Vec<i64> = [-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5]
                .iter()
                .map(|x| ((x * t.sqrt()) / h).round() as i64)
                .collect();
            for &j in &xs {
                let x = j as f64 * h;
                for p in [1u32, 2] {
                    let moment: f64 = oracles
                        .iter()
                        .map(|flat| flat.get(&(tk * 1_000_000 + j)).copied().unwrap_or(0.0))
                        .map(|l| l.powi(p as i32))
                        .sum::<f64>()
                        / reps as f64;
                    let base = if p == 1 { e_l0 } else { 1.0 };
                    let bound =
                        2.0 * base * t.powf(p as f64 / 2.0) * (-x * x / (2.0 * t)).exp();
                    checked += 1;
                    if moment > bound {
                        violations += 1;
                    }
                }
            }
        }
        assert!(
            (violations as f64) < 0.01 * checked as f64 + 1e-9,
            "{violations}/{checked} local-time moment bound violations"
        );
    }

    #[test]
    fn crossing_estimate_converges_to_occupation_density() {
        // median over replications of max_j |crossing - occupation| falls
        // with the level, consistent with the n 2^{-n/4} envelope up to a
        // calibrated constant.
        let mut medians = Vec::new();
        let levels = [6u32, 8, 10];
        for &level in &levels {
            let fine = level + 6;
            let bandwidth = 4.0 * 2f64.powf(-(fine as f64) / 2.0);
            let devs: Vec<f64> = (0..30)
                .map(|rep| {
                    let mut rng = stream_rng(23, DOMAIN_WALK, rep as u64);
                    let rec =
                        simulate_coupled(level, 1.0, fine, &mut rng, CoupledOptions::default())
                            .unwrap();
                    let crossing = local_time_estimate(&rec);
                    let occupation =
                        rec.y_path().unwrap().occupation_local_time(1.0, level, bandwidth);
                    let mut worst = 0.0f64;
                    for j in rec.min_position() - 1..=rec.max_position() + 1 {
                        let c = crossing.value(j);
                        let o = occupation.get(&j).copied().unwrap_or(0.0);
                        worst = worst.max((c - o).abs());
                    }
                    worst
                })
                .collect();
            medians.push(stats::median(&devs));
        }
        assert!(
            medians[0] > medians[1] && medians[1] > medians[2],
            "medians not decreasing: {medians:?}"
        );
        // Envelope constant calibrated on this fixture; the rate carries the
        // n 2^{-n/4} factor.
        for (&level, &med) in levels.iter().zip(&medians) {
            let envelope = level as f64 * 2f64.powf(-(level as f64) / 4.0);
            assert!(
                med <= 0.5 * envelope,
                "median deviation {med} exceeds envelope {envelope} at level {level}"
            );
        }
    }
}
