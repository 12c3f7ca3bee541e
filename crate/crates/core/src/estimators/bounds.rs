//! Inequality suite on exactly computed quantities.
//!
//! Each check records `lhs ≤ rhs` trials. Failures are counted, never
//! dropped; checks whose hypotheses are not met are counted as skipped.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::mean_se;
use crate::env::{cut_count, lambda_good_at, ClusterBall, ClusterSource, Environment, LazyCluster, NodeIdx};
use crate::error::{Error, Result};
use crate::gw::{sample_tree, OffspringLaw, TreeKind};
use crate::resist::{
    effective_resistance, heat_kernel_rows, interior_mask, mean_exit_times, verify_on_diagonal_bound,
    verify_power_bound, GreenSolver, WeightedTree,
};
use crate::stream::{derive_stream, Purpose};
use crate::walk::{stopping_time, StopTarget};

pub const CHECKS: [&str; 16] = [
    "on_diagonal_upper",
    "on_diagonal_power",
    "kernel_continuity",
    "green_resistance_identity",
    "green_sandwich_lower",
    "green_sandwich_upper",
    "green_sandwich_upper_closed",
    "exit_time_upper",
    "exit_time_lower",
    "survival_lower",
    "diagonal_lower",
    "exit_time_monte_carlo",
    "good_exit_time_upper",
    "good_exit_time_lower",
    "good_kernel_upper",
    "good_displacement_lower",
];

#[derive(Clone, Copy)]
#[repr(usize)]
enum Check {
    OnDiagonalUpper,
    OnDiagonalPower,
    KernelContinuity,
    GreenResistance,
    GreenSandwichLower,
    GreenSandwichUpper,
    /// The upper bound with the extra edge a closed ball needs to escape.
    GreenSandwichUpperClosed,
    ExitUpper,
    ExitLower,
    SurvivalLower,
    DiagonalLower,
    ExitMonteCarlo,
    GoodExitUpper,
    GoodExitLower,
    GoodKernelUpper,
    GoodDisplacementLower,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckTally {
    pub name: String,
    pub trials: u64,
    pub failures: u64,
    pub skipped: u64,
    /// Smallest `(rhs - lhs) / |rhs|` seen.
    pub worst_margin: f64,
}

impl CheckTally {
    fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            trials: 0,
            failures: 0,
            skipped: 0,
            worst_margin: f64::INFINITY,
        }
    }

    fn merge(&mut self, other: &CheckTally) {
        self.trials += other.trials;
        self.failures += other.failures;
        self.skipped += other.skipped;
        self.worst_margin = self.worst_margin.min(other.worst_margin);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub checks: Vec<CheckTally>,
    /// Smallest certified goodness level per good-ball sample (`None` if uncertified).
    pub certified_lambdas: Vec<Option<f64>>,
}

impl BoundReport {
    fn empty() -> Self {
        Self {
            checks: CHECKS.iter().map(|n| CheckTally::new(n)).collect(),
            certified_lambdas: Vec::new(),
        }
    }

    fn record(&mut self, c: Check, lhs: f64, rhs: f64, slack: f64) {
        let t = &mut self.checks[c as usize];
        t.trials += 1;
        if !(lhs <= rhs + slack) {
            t.failures += 1;
        }
        let scale = rhs.abs().max(slack).max(f64::MIN_POSITIVE);
        t.worst_margin = t.worst_margin.min((rhs + slack - lhs) / scale);
    }

    fn skip(&mut self, c: Check) {
        self.checks[c as usize].skipped += 1;
    }

    fn merge(mut self, other: BoundReport) -> BoundReport {
        for (a, b) in self.checks.iter_mut().zip(&other.checks) {
            a.merge(b);
        }
        self.certified_lambdas.extend(other.certified_lambdas);
        self
    }

    pub fn get(&self, name: &str) -> Option<&CheckTally> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn total_failures(&self) -> u64 {
        self.checks.iter().map(|c| c.failures).sum()
    }

    pub fn all_passed(&self) -> bool {
        self.total_failures() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundSuiteSpec {
    pub n0: u32,
    pub master_seed: u64,
    /// Finite GW trees for the whole-graph kernel checks.
    pub trees: usize,
    pub tree_depth: usize,
    /// Cluster balls for the Green and exit-time checks.
    pub balls: usize,
    pub radii: Vec<u32>,
    /// Balls on which exit times are also simulated.
    pub exit_balls: usize,
    pub exit_radii: Vec<u32>,
    pub exit_replicas: usize,
    /// Balls tested for goodness along `lambda_ladder`.
    pub good_balls: usize,
    pub good_radius: u32,
    pub lambda_ladder: Vec<f64>,
    pub kernel_tol: f64,
}

impl Default for BoundSuiteSpec {
    fn default() -> Self {
        Self {
            n0: 2,
            master_seed: 0,
            trees: 500,
            tree_depth: 12,
            balls: 100,
            radii: vec![16, 32, 64],
            exit_balls: 20,
            exit_radii: vec![4, 8],
            exit_replicas: 10_000,
            good_balls: 20,
            good_radius: 128,
            lambda_ladder: vec![64.0, 128.0, 256.0, 512.0, 1024.0],
            kernel_tol: 1e-10,
        }
    }
}

const TREES: u64 = 0;
const BALLS: u64 = 1;
const EXITS: u64 = 2;
const GOOD: u64 = 3;

fn sample_env(spec: &BoundSuiteSpec, family: u64, k: u64) -> Result<Environment> {
    Environment::new(
        spec.n0,
        derive_stream(spec.master_seed, Purpose::Environment, k).child(family).seed64(),
    )
}

fn sample_rng(spec: &BoundSuiteSpec, family: u64, k: u64) -> rand_chacha::ChaCha8Rng {
    derive_stream(spec.master_seed, Purpose::Conditioning, k).child(family).rng()
}

/// A centre drawn uniformly from `B(0, r)`.
fn sample_centre<S: ClusterSource + ?Sized, R: Rng>(cluster: &mut LazyCluster<'_, S>, r: u32, rng: &mut R) -> NodeIdx {
    let around = cluster.explore_ball(0, r);
    around.vertices()[rng.random_range(0..around.len())].node
}

fn tree_checks(spec: &BoundSuiteSpec, k: u64) -> Result<BoundReport> {
    let mut rep = BoundReport::empty();
    let mut rng = sample_rng(spec, TREES, k);
    let law = OffspringLaw::new(spec.n0)?;
    let depth = rng.random_range(1..=spec.tree_depth.max(1));
    let tree = loop {
        let t = sample_tree(law, TreeKind::Plain, depth, &mut rng);
        if t.level.last().copied() == Some(depth as u32) {
            break t;
        }
    };
    let w = WeightedTree::from_finite_tree(&tree)?;
    let x = rng.random_range(0..w.len());
    let r = rng.random_range(1..=depth) as f64;
    let tol = spec.kernel_tol;
    let c = verify_on_diagonal_bound(&w, x, r, tol)?;
    rep.record(Check::OnDiagonalUpper, c.kernel, c.bound, tol);
    let c = verify_power_bound(&w, x, r, tol)?;
    rep.record(Check::OnDiagonalPower, c.kernel, c.bound, tol);
    let whole = vec![true; w.len()];
    let d = w.hop_distances(x);
    let times = [0.5, r, 2.0 * r * w.ball_volume(x, r)];
    let rows = heat_kernel_rows(&w, &whole, x, &times, tol)?;
    for (row, &t) in rows.rows.iter().zip(&times) {
        let fx = row[x];
        for y in 0..w.len() {
            let lhs = (row[y] / fx - 1.0).powi(2);
            let rhs = d[y] as f64 / (t * fx);
            rep.record(Check::KernelContinuity, lhs, rhs, 1e-6 * rhs.max(1.0));
        }
    }
    Ok(rep)
}

struct BallData {
    ball: ClusterBall,
    tree: WeightedTree,
    alive: Vec<bool>,
    exit: Vec<f64>,
}

fn ball_data<S: ClusterSource + ?Sized>(cluster: &mut LazyCluster<'_, S>, x0: NodeIdx, r: u32) -> Result<BallData> {
    let ball = cluster.explore_ball(x0, r);
    let tree = WeightedTree::from_ball(&ball)?;
    let alive = interior_mask(tree.len(), ball.len());
    let exit = mean_exit_times(&tree, &alive)?;
    Ok(BallData { ball, tree, alive, exit })
}

fn ball_checks(spec: &BoundSuiteSpec, k: u64) -> Result<BoundReport> {
    let mut rep = BoundReport::empty();
    let env = sample_env(spec, BALLS, k)?;
    let mut rng = sample_rng(spec, BALLS, k);
    let r = spec.radii[k as usize % spec.radii.len()];
    let rf = r as f64;
    let mut cluster = LazyCluster::new(&env);
    let x0 = sample_centre(&mut cluster, r, &mut rng);
    let label = cluster.label(x0);
    let m = cut_count(&mut cluster, &label, rf)? as f64;
    let BallData { ball, tree, alive, exit } = ball_data(&mut cluster, x0, r)?;
    let solver = GreenSolver::new(&tree, &alive)?;
    let boundary: Vec<usize> = (ball.len()..tree.len()).collect();
    let v = ball.volume_within(r) as f64;
    let inner = rf / (32.0 * m);
    let v1 = ball.volume_within(inner.floor() as u32) as f64;
    for (i, bv) in ball.vertices().iter().enumerate() {
        let g = solver.green(i, i);
        let res = effective_resistance(&tree, i, &boundary)?;
        rep.record(Check::GreenResistance, (g - res).abs(), 0.0, 1e-9);
        if bv.dist as f64 <= rf / 8.0 {
            rep.record(Check::GreenSandwichLower, rf / (8.0 * m), g, 1e-9);
            rep.record(Check::GreenSandwichUpper, g, 9.0 * rf / 8.0, 1e-9);
            rep.record(Check::GreenSandwichUpperClosed, g, 9.0 * rf / 8.0 + 1.0, 1e-9);
        }
        rep.record(Check::ExitUpper, exit[i], 2.0 * rf * v, 1e-9 * v);
        if bv.dist as f64 <= inner {
            rep.record(Check::ExitLower, rf * v1 / (32.0 * m), exit[i], 1e-9);
        }
    }
    let t_hi = rf * v1 / (64.0 * m);
    let times = [t_hi / 2.0, t_hi, t_hi * 2.0, t_hi * 4.0];
    let rows = heat_kernel_rows(&tree, &alive, 0, &times, spec.kernel_tol)?;
    for j in 0..2 {
        let (t, s) = (times[j], rows.survival[j]);
        rep.record(Check::SurvivalLower, (rf * v1 / (32.0 * m) - t) / (2.0 * rf * v), s, spec.kernel_tol);
        rep.record(Check::DiagonalLower, s * s / v, rows.rows[j + 1][0], spec.kernel_tol);
    }
    Ok(rep)
}

fn exit_checks(spec: &BoundSuiteSpec, k: u64) -> Result<BoundReport> {
    let mut rep = BoundReport::empty();
    let env = sample_env(spec, EXITS, k)?;
    let mut rng = sample_rng(spec, EXITS, k);
    let r = spec.exit_radii[k as usize % spec.exit_radii.len()];
    let mut cluster = LazyCluster::new(&env);
    let x0 = sample_centre(&mut cluster, r, &mut rng);
    let data = ball_data(&mut cluster, x0, r)?;
    let exact = data.exit[0];
    let walk_key = derive_stream(spec.master_seed, Purpose::Walk, k).child(EXITS);
    let target = StopTarget::ExitBall(r);
    let samples: Vec<f64> = (0..spec.exit_replicas as u64)
        .map(|j| {
            let mut wr = walk_key.child(j).rng();
            stopping_time(&mut cluster, x0, &mut wr, &target, f64::INFINITY).map(|s| s.time)
        })
        .collect::<Result<_>>()?;
    let (mean, se) = mean_se(&samples);
    rep.record(Check::ExitMonteCarlo, (mean - exact).abs(), 4.0 * se, 0.0);
    Ok(rep)
}

fn good_checks(spec: &BoundSuiteSpec, k: u64) -> Result<BoundReport> {
    let mut rep = BoundReport::empty();
    let env = sample_env(spec, GOOD, k)?;
    let mut rng = sample_rng(spec, GOOD, k);
    let r = spec.good_radius;
    let rf = r as f64;
    let mut cluster = LazyCluster::new(&env);
    let x0 = sample_centre(&mut cluster, r, &mut rng);
    let mut lambda = None;
    for &l in &spec.lambda_ladder {
        if lambda_good_at(&mut cluster, x0, rf, l)?.good() {
            lambda = Some(l);
            break;
        }
    }
    rep.certified_lambdas.push(lambda);
    let Some(l) = lambda else {
        for c in [Check::GoodExitUpper, Check::GoodExitLower, Check::GoodKernelUpper, Check::GoodDisplacementLower] {
            rep.skip(c);
        }
        return Ok(rep);
    };
    let data = ball_data(&mut cluster, x0, r)?;
    let r3 = rf.powi(3);
    for (i, bv) in data.ball.vertices().iter().enumerate() {
        if bv.dist as f64 > rf / l {
            break;
        }
        rep.record(Check::GoodExitUpper, data.exit[i], 2.0 * l * r3, 1e-9);
        rep.record(Check::GoodExitLower, r3 / l.powi(5), data.exit[i], 1e-9);
    }
    let interval = [r3 / l.powi(6), r3 / l.powi(5)];
    let doubled = [2.0 * interval[0], 2.0 * interval[1]];
    let rows = heat_kernel_rows(&data.tree, &data.alive, 0, &doubled, spec.kernel_tol)?;
    for (j, &t) in interval.iter().enumerate() {
        let escape = (1.0 - rows.survival[j]).max(0.0);
        for (i, bv) in data.ball.vertices().iter().enumerate() {
            if bv.dist as f64 > t.cbrt() {
                break;
            }
            rep.record(Check::GoodKernelUpper, rows.rows[j][i] + escape, 2.0 * t.powf(-2.0 / 3.0) * l.powi(3), spec.kernel_tol);
        }
    }
    let inner = rf / l.powi(5);
    if lambda_good_at(&mut cluster, x0, inner, l)?.good() {
        for j in 0..2 {
            let mean_d: f64 = data.ball.vertices().iter().enumerate()
                .map(|(i, bv)| rows.rows[j][i] * data.tree.measure(i) * bv.dist as f64)
                .sum();
            rep.record(Check::GoodDisplacementLower, 0.5 * inner, mean_d, spec.kernel_tol);
        }
    } else {
        rep.skip(Check::GoodDisplacementLower);
    }
    Ok(rep)
}

fn validate(spec: &BoundSuiteSpec) -> Result<()> {
    if spec.radii.is_empty() || spec.radii.contains(&0) || spec.exit_radii.is_empty() || spec.exit_radii.contains(&0) {
        return Err(Error::domain("radius lists must be non-empty and positive"));
    }
    if spec.lambda_ladder.iter().any(|&l| !(l >= 1.0)) || spec.good_radius == 0 {
        return Err(Error::domain("goodness levels must be >= 1 and the good radius positive"));
    }
    if !(spec.kernel_tol > 0.0) || spec.tree_depth == 0 {
        return Err(Error::domain("kernel tolerance and tree depth must be positive"));
    }
    Ok(())
}

/// Run every check family and pool the tallies.
pub fn verify_bound_suite(spec: &BoundSuiteSpec) -> Result<BoundReport> {
    validate(spec)?;
    let jobs: Vec<(u64, u64)> = (0..spec.trees as u64).map(|k| (TREES, k))
        .chain((0..spec.balls as u64).map(|k| (BALLS, k)))
        .chain((0..spec.exit_balls as u64).map(|k| (EXITS, k)))
        .chain((0..spec.good_balls as u64).map(|k| (GOOD, k)))
        .collect();
    let parts: Vec<BoundReport> = jobs
        .par_iter()
        .map(|&(family, k)| match family {
            TREES => tree_checks(spec, k),
            BALLS => ball_checks(spec, k),
            EXITS => exit_checks(spec, k),
            _ => good_checks(spec, k),
        })
        .collect::<Result<_>>()?;
    Ok(parts.into_iter().fold(BoundReport::empty(), BoundReport::merge))
}
