//! Table lookup for one lane change and recursive composition for several.
//!
//! For a single change the probability comes straight from the normalized
//! table. For `k > 1` changes the distance `x` consumed by the first `k − 1`
//! changes is a random variable whose CDF is the `k − 1`-change probability
//! as a function of distance budget; total probability then gives
//!
//! ```text
//! P_k(d) = ∫ P_1(d − x, last lane) dF_{k−1}(x)
//! ```
//!
//! evaluated as a midpoint Riemann–Stieltjes sum over a uniform grid of the
//! CDF — no differentiation of the interpolated surface, so Monte Carlo
//! noise is not amplified.

use super::table::BaseCaseTable;
use super::{straddling_gap_clearance, GoalQuery, LaneParams};

/// Default number of quadrature intervals for the Stieltjes sum.
pub const DEFAULT_QUADRATURE_NODES: usize = 200;
/// Coarsest resolution callers may request.
pub const MIN_QUADRATURE_NODES: usize = 50;

/// Adjacent-lane speed adjustment: when the next lane's average speed falls
/// inside the closed interval `v_prev ± v_l`, use `v_prev + v_l` instead.
/// Near-zero relative speed would otherwise collapse the swept distance and
/// underestimate the probability of finding a gap.
pub fn clamp_adjacent_speed(v_prev: f64, v_next: f64, v_l: f64) -> f64 {
    debug_assert!(v_l > 0.0, "speed window must be positive");
    if (v_next - v_prev).abs() <= v_l {
        v_prev + v_l
    } else {
        v_next
    }
}

/// One lane's query constants, hoisted so repeated lookups against the same
/// lane (the quadrature inner loops) stay cheap. Construction collapses the
/// log-residual-failure surface over the fixed (g_hat, sigma, t_hat)
/// coordinates into a line over d_hat, then samples the finished
/// probability curve onto a dense uniform grid so each call is a clamp and
/// one linear blend.
struct StageLookup {
    ego_speed: f64,
    change_time: f64,
    /// Zero relative speed: frozen-gap limit.
    frozen: bool,
    /// Deterministic spacings: the straddling gap decides everything.
    degenerate_sigma: bool,
    clearance: f64,
    /// |Δv| / (v1 · median): converts distance to the d_hat coordinate.
    d_hat_per_meter: f64,
    /// Probability sampled uniformly over `d_hat` in `[grid_x0, grid_x1]`.
    grid: Vec<f64>,
    grid_x0: f64,
    grid_x1: f64,
    inv_step: f64,
}

/// Dense sampling resolution of one stage's probability curve. The curve is
/// smooth and monotone past the feasibility cliff; at this resolution the
/// re-sampling error is far below the table's own Monte Carlo noise.
const STAGE_GRID_POINTS: usize = 512;

impl StageLookup {
    fn new(table: &BaseCaseTable, ego_speed: f64, lane: &LaneParams) -> Self {
        debug_assert!(ego_speed > 0.0);
        let drift = lane.v - ego_speed;
        let median = lane.headway.median();
        let frozen = drift == 0.0;
        let degenerate_sigma = lane.headway.sigma == 0.0;
        let clearance = straddling_gap_clearance(&lane.headway, lane.g);

        let mut lookup = Self {
            ego_speed,
            change_time: lane.t,
            frozen,
            degenerate_sigma,
            clearance,
            d_hat_per_meter: drift.abs() / (ego_speed * median),
            grid: Vec::new(),
            grid_x0: 0.0,
            grid_x1: 0.0,
            inv_step: 0.0,
        };
        if frozen || degenerate_sigma {
            return lookup;
        }

        let t_hat = lane.t * drift.abs() / median;
        let (line, axis) = table.collapse_failure_line(lane.g / median, lane.headway.sigma, t_hat);
        // The curve is constant at the clearance below the cliff (residual
        // zero) and flat beyond the last axis node, so the dense grid only
        // needs to span in between.
        let x0 = t_hat.min(*axis.last().unwrap());
        let x1 = *axis.last().unwrap();
        let span = (x1 - x0).max(1e-9);
        let step = span / (STAGE_GRID_POINTS - 1) as f64;
        lookup.grid = (0..STAGE_GRID_POINTS)
            .map(|k| {
                let d_hat = x0 + step * k as f64;
                let log_failure = interp_line(&axis, &line, d_hat);
                let failure = log_failure.exp().clamp(0.0, 1.0);
                (clearance + (1.0 - clearance) * (1.0 - failure)).clamp(0.0, 1.0)
            })
            .collect();
        lookup.grid_x0 = x0;
        lookup.grid_x1 = x1;
        lookup.inv_step = 1.0 / step;
        lookup
    }

    /// Single-change probability with `d` meters of headroom.
    ///
    /// Exact zero at `d <= 0` and whenever the time budget cannot fit the
    /// change itself. Past that cliff the immediate-acceptance share enters
    /// in closed form; the remaining mass comes from the sampled curve.
    fn probability(&self, d: f64) -> f64 {
        if d <= 0.0 || d / self.ego_speed < self.change_time {
            return 0.0;
        }
        if self.frozen || self.degenerate_sigma {
            // Frozen gap pattern, or deterministic spacings where every gap
            // equals the median: the straddling gap decides everything.
            return self.clearance;
        }
        let d_hat = d * self.d_hat_per_meter;
        if d_hat <= self.grid_x0 {
            return self.grid[0];
        }
        if d_hat >= self.grid_x1 {
            return self.grid[self.grid.len() - 1];
        }
        let pos = (d_hat - self.grid_x0) * self.inv_step;
        let lo = pos as usize;
        let w = pos - lo as f64;
        self.grid[lo] + w * (self.grid[lo + 1] - self.grid[lo])
    }
}

/// Linear interpolation over an increasing axis with boundary clamping.
fn interp_line(axis: &[f64], values: &[f64], x: f64) -> f64 {
    let n = axis.len();
    if x <= axis[0] {
        return values[0];
    }
    if x >= axis[n - 1] {
        return values[n - 1];
    }
    let hi = axis.partition_point(|&a| a <= x);
    let lo = hi - 1;
    let w = (x - axis[lo]) / (axis[hi] - axis[lo]);
    values[lo] + w * (values[hi] - values[lo])
}

impl BaseCaseTable {
    /// Single-change probability for `d` meters of headroom at ego speed
    /// `v1`. Exact zero at `d <= 0`. Zero relative speed is the frozen-gap
    /// limit: the straddling gap never changes, so success means it already
    /// clears `g` and there is time to complete the change.
    pub fn lookup(&self, d: f64, v1: f64, lane: &LaneParams) -> f64 {
        StageLookup::new(self, v1, lane).probability(d)
    }
}

/// Reach probability for a full query at the default quadrature resolution.
pub fn reach_probability(query: &GoalQuery, table: &BaseCaseTable) -> f64 {
    reach_probability_with_nodes(query, table, DEFAULT_QUADRATURE_NODES)
}

/// Reach probability with an explicit number of quadrature intervals.
pub fn reach_probability_with_nodes(
    query: &GoalQuery,
    table: &BaseCaseTable,
    nodes: usize,
) -> f64 {
    assert!(
        nodes >= MIN_QUADRATURE_NODES,
        "need at least {MIN_QUADRATURE_NODES} quadrature intervals"
    );
    // One stage context per lane. The ego speed entering lane i is the
    // query speed for the first change and the previous lane's average
    // afterwards, independent of recursion depth.
    let stages: Vec<StageLookup> = query
        .lanes
        .iter()
        .enumerate()
        .map(|(i, lane)| {
            let ego = if i == 0 { query.v1 } else { query.lanes[i - 1].v };
            StageLookup::new(table, ego, lane)
        })
        .collect();
    eval(query.d, &stages, nodes)
}

fn eval(d: f64, stages: &[StageLookup], m: usize) -> f64 {
    if d <= 0.0 {
        return 0.0;
    }
    let last = &stages[stages.len() - 1];
    if stages.len() == 1 {
        return last.probability(d);
    }
    let sub = &stages[..stages.len() - 1];

    let mut total = 0.0;
    let mut cdf_prev = 0.0; // F(0) = 0
    for k in 0..m {
        let x_hi = d * (k + 1) as f64 / m as f64;
        let x_mid = d * (k as f64 + 0.5) / m as f64;
        let cdf_next = eval(x_hi, sub, m);
        let mass = (cdf_next - cdf_prev).max(0.0);
        if mass > 0.0 {
            total += last.probability(d - x_mid) * mass;
        }
        cdf_prev = cdf_next;
    }
    total.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::headway::LogNormalHeadway;
    use crate::probability::{chained_monte_carlo, TableGrids};
    use once_cell::sync::Lazy;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // A moderately sized table shared across tests; default grids but fewer
    // trials than a production build.
    static TABLE: Lazy<BaseCaseTable> = Lazy::new(|| {
        BaseCaseTable::build(TableGrids::default_grids(), 20_000, 4242)
            .unwrap()
            .0
    });

    fn lane(v: f64, mu: f64, sigma: f64, g: f64, t: f64) -> LaneParams {
        LaneParams {
            v,
            headway: LogNormalHeadway::new(mu, sigma),
            g,
            t,
        }
    }

    #[test]
    fn clamp_examples() {
        assert_eq!(clamp_adjacent_speed(25.0, 26.0, 4.0), 29.0);
        assert_eq!(clamp_adjacent_speed(25.0, 35.0, 4.0), 35.0);
        assert_eq!(clamp_adjacent_speed(25.0, 21.0, 4.0), 29.0);
    }

    #[test]
    fn lookup_zero_distance_short_circuits() {
        let l = lane(30.0, 3.4, 0.6, 41.0, 3.0);
        assert_eq!(TABLE.lookup(0.0, 25.0, &l), 0.0);
        assert_eq!(TABLE.lookup(-10.0, 25.0, &l), 0.0);
    }

    #[test]
    fn single_lane_reach_equals_lookup() {
        let l = lane(30.0, 3.4, 0.6, 41.0, 3.0);
        let q = GoalQuery::new(1500.0, 25.0, vec![l]);
        assert_eq!(reach_probability(&q, &TABLE), TABLE.lookup(1500.0, 25.0, &l));
    }

    #[test]
    fn reach_zero_distance_is_zero() {
        let l = lane(30.0, 3.4, 0.6, 41.0, 3.0);
        let q = GoalQuery {
            d: 0.0,
            v1: 25.0,
            lanes: vec![l, l],
        };
        assert_eq!(reach_probability(&q, &TABLE), 0.0);
    }

    #[test]
    fn zero_drift_uses_frozen_gap_limit() {
        // Same speed in both lanes: probability equals the straddling-gap
        // clearance whenever there is time to complete the change.
        let l = lane(25.0, 3.4, 0.6, 35.0, 3.0);
        let p = TABLE.lookup(2000.0, 25.0, &l);
        let expected = straddling_gap_clearance(&l.headway, l.g);
        assert!((p - expected).abs() < 1e-12);
        // and zero when the horizon is shorter than the change itself
        assert_eq!(TABLE.lookup(50.0, 25.0, &l), 0.0);
    }

    #[test]
    fn monotone_in_distance() {
        let l = lane(30.0, 3.4, 0.6, 41.0, 3.0);
        let mut last = 0.0;
        for d in [100.0, 300.0, 700.0, 1500.0, 3000.0] {
            let q = GoalQuery::new(d, 25.0, vec![l, l]);
            let p = reach_probability(&q, &TABLE);
            assert!(p >= last - 1e-9, "p({d}) = {p} < {last}");
            last = p;
        }
    }

    #[test]
    fn monotone_in_critical_gap() {
        let mut last = 1.0;
        for g in [20.0, 30.0, 41.0, 55.0] {
            let l = lane(30.0, 3.4, 0.6, g, 3.0);
            let q = GoalQuery::new(1500.0, 25.0, vec![l, l]);
            let p = reach_probability(&q, &TABLE);
            assert!(p <= last + 1e-9, "p(g={g}) = {p} > {last}");
            last = p;
        }
    }

    #[test]
    fn extra_identical_lane_never_easier() {
        let l = lane(30.0, 3.4, 0.6, 41.0, 3.0);
        let p1 = reach_probability(&GoalQuery::new(1500.0, 25.0, vec![l]), &TABLE);
        let p2 = reach_probability(&GoalQuery::new(1500.0, 25.0, vec![l, l]), &TABLE);
        let p3 = reach_probability(&GoalQuery::new(1500.0, 25.0, vec![l, l, l]), &TABLE);
        assert!(p2 <= p1 + 1e-9);
        assert!(p3 <= p2 + 1e-9);
    }

    #[test]
    fn quadrature_resolution_converges() {
        let l = lane(30.0, 3.4, 0.6, 41.0, 3.0);
        let q = GoalQuery::new(1500.0, 25.0, vec![l, l]);
        let coarse = reach_probability_with_nodes(&q, &TABLE, 200);
        let fine = reach_probability_with_nodes(&q, &TABLE, 400);
        assert!((coarse - fine).abs() <= 0.005, "{coarse} vs {fine}");
    }

    #[test]
    fn three_lane_query_matches_direct_simulation() {
        // Spec-pinned configuration: two identical adjacent lanes.
        let l = lane(30.0, 3.4, 0.6, 41.0, 3.0);
        let q = GoalQuery::new(1500.0, 25.0, vec![l, l]);
        let model = reach_probability(&q, &TABLE);
        let mut rng = ChaCha8Rng::seed_from_u64(1766);
        let direct = chained_monte_carlo(&q, 100_000, &mut rng);
        assert!(
            (model - direct).abs() <= 0.04,
            "model {model} vs direct {direct}"
        );
    }
}
