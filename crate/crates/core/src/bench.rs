//! Benchmark problems and the θ-versus-x comparison harness.

use std::collections::BTreeMap;
use std::f64::consts::{E, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exec::{identity_loss, run_forward, run_inverse, values_to_json};
use crate::graph::{Graph, GraphBuilder, NodeId};
use crate::primitives::PrimitiveKind::{self, *};
use crate::solve::{prepare_inverse, solve_theta, solve_x_baseline, Objective, SolveConfig, UserLoss};
use crate::value::Value;

/// Planar arm with `links` unit-length links. Inputs `phi1..phiN`,
/// outputs `x` and `y`.
pub fn chain_graph(links: usize) -> Graph {
    assert!(links >= 1);
    let mut b = GraphBuilder::new();
    let phis: Vec<NodeId> = (1..=links).map(|i| b.input(&format!("phi{i}"))).collect();
    let mut angle = phis[0];
    let mut angles = vec![angle];
    for &p in &phis[1..] {
        angle = b.op1(Add, &[angle, p]);
        angles.push(angle);
    }
    let sum = |kind: PrimitiveKind, b: &mut GraphBuilder| {
        let terms: Vec<NodeId> = angles.iter().map(|&a| b.op1(kind.clone(), &[a])).collect();
        terms[1..].iter().fold(terms[0], |acc, &t| b.op1(Add, &[acc, t]))
    };
    let x = sum(Cos, &mut b);
    let y = sum(Sin, &mut b);
    b.output(x, "x");
    b.output(y, "y");
    b.finish().expect("chain graph is well formed")
}

pub fn ik3_graph() -> Graph {
    chain_graph(3)
}

/// Tip position of a unit-link planar chain.
pub fn chain_tip(phi: &[f64]) -> (f64, f64) {
    let mut a = 0.0;
    let (mut x, mut y) = (0.0, 0.0);
    for p in phi {
        a += p;
        x += a.cos();
        y += a.sin();
    }
    (x, y)
}

pub fn angles_input(phi: &[f64]) -> BTreeMap<String, Value> {
    phi.iter()
        .enumerate()
        .map(|(i, &p)| (format!("phi{}", i + 1), Value::Real(p)))
        .collect()
}

pub fn xy_target(x: f64, y: f64) -> BTreeMap<String, Value> {
    BTreeMap::from([("x".to_string(), Value::Real(x)), ("y".to_string(), Value::Real(y))])
}

/// Reachable targets for a chain, obtained by forward-sampling angles
/// uniformly in [-π, π).
pub fn ik_targets(links: usize, count: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let phi: Vec<f64> = (0..links).map(|_| rng.random_range(-PI..PI)).collect();
            chain_tip(&phi)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec {
    pub seed: u64,
    pub min_ops: usize,
    pub max_ops: usize,
    pub inputs: usize,
    /// Probability that an argument reuses an already consumed value.
    pub reuse_prob: f64,
    /// Relative weights of the real-valued kinds.
    pub weights: Vec<(PrimitiveKind, f64)>,
    /// Mix in comparisons, boolean connectives and select.
    pub booleans: bool,
}

pub const MAX_REJECTIONS: usize = 1000;

/// Largest magnitude a generated graph may produce on its sample.
const MAGNITUDE_LIMIT: f64 = 1e6;

impl Default for GenSpec {
    fn default() -> Self {
        let weights = [
            (Add, 3.0),
            (Sub, 2.0),
            (Mul, 2.0),
            (Div, 1.0),
            (Neg, 1.0),
            (Sqr, 1.0),
            (Abs, 1.0),
            (Exp, 1.0),
            (Log, 0.5),
            (Pow, 0.5),
            (Sin, 1.0),
            (Cos, 1.0),
            (Tan, 0.5),
            (Min, 0.5),
            (Max, 0.5),
        ];
        GenSpec {
            seed: 0,
            min_ops: 2,
            max_ops: 8,
            inputs: 2,
            reuse_prob: 0.3,
            weights: weights.into_iter().collect(),
            booleans: false,
        }
    }
}

impl GenSpec {
    pub fn with_seed(seed: u64) -> GenSpec {
        GenSpec { seed, ..GenSpec::default() }
    }

    fn validate(&self) -> Result<()> {
        let weights_ok = !self.weights.is_empty()
            && self.weights.iter().all(|(_, w)| *w >= 0.0 && w.is_finite())
            && self.weights.iter().any(|(_, w)| *w > 0.0);
        if self.min_ops == 0
            || self.min_ops > self.max_ops
            || self.inputs == 0
            || !(0.0..=1.0).contains(&self.reuse_prob)
            || !weights_ok
        {
            return Err(Error::InvalidConfig(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Real inputs drawn uniformly from [-2, 2].
pub fn sample_inputs<R: Rng + ?Sized>(g: &Graph, rng: &mut R) -> BTreeMap<String, Value> {
    g.inputs()
        .into_iter()
        .map(|(_, name)| (name.to_string(), Value::Real(rng.random_range(-2.0..2.0))))
        .collect()
}

#[derive(Clone, Copy, PartialEq)]
enum Ty {
    Real,
    Bool,
}

struct Pool {
    values: Vec<(NodeId, Ty)>,
    used: Vec<bool>,
}

impl Pool {
    fn pick<R: Rng>(&mut self, rng: &mut R, ty: Ty, reuse_prob: f64) -> Option<NodeId> {
        let of_ty: Vec<usize> = (0..self.values.len()).filter(|&i| self.values[i].1 == ty).collect();
        if of_ty.is_empty() {
            return None;
        }
        let fresh: Vec<usize> = of_ty.iter().copied().filter(|&i| !self.used[i]).collect();
        let reuse = fresh.is_empty() || rng.random_bool(reuse_prob);
        let from = if reuse { &of_ty } else { &fresh };
        let i = from[rng.random_range(0..from.len())];
        self.used[i] = true;
        Some(self.values[i].0)
    }

    fn push(&mut self, v: NodeId, ty: Ty) {
        self.values.push((v, ty));
        self.used.push(false);
    }
}

fn signature(kind: &PrimitiveKind) -> (Vec<Ty>, Ty) {
    match kind {
        Gt | Lt => (vec![Ty::Real, Ty::Real], Ty::Bool),
        And | Or | Xor => (vec![Ty::Bool, Ty::Bool], Ty::Bool),
        Select => (vec![Ty::Real, Ty::Real, Ty::Bool], Ty::Real),
        k => (vec![Ty::Real; k.arity().0], Ty::Real),
    }
}

fn candidate(spec: &GenSpec, rng: &mut ChaCha8Rng) -> Graph {
    let mut kinds = spec.weights.clone();
    if spec.booleans {
        kinds.extend([(Gt, 1.0), (Lt, 1.0), (And, 0.5), (Or, 0.5), (Xor, 0.5), (Select, 1.0)]);
    }
    let total: f64 = kinds.iter().map(|(_, w)| w).sum();
    let n_ops = rng.random_range(spec.min_ops..=spec.max_ops);
    let mut b = GraphBuilder::new();
    let mut pool = Pool { values: vec![], used: vec![] };
    for i in 0..spec.inputs {
        let v = b.input(&format!("x{i}"));
        pool.push(v, Ty::Real);
    }
    let mut made = 0;
    while made < n_ops {
        let mut r = rng.random_range(0.0..total);
        let mut kind = kinds[0].0.clone();
        for (k, w) in &kinds {
            if r < *w {
                kind = k.clone();
                break;
            }
            r -= w;
        }
        let (arg_tys, out_ty) = signature(&kind);
        if arg_tys.iter().any(|t| !pool.values.iter().any(|v| v.1 == *t)) {
            continue;
        }
        let args: Vec<NodeId> = arg_tys
            .iter()
            .map(|&t| pool.pick(rng, t, spec.reuse_prob).unwrap())
            .collect();
        let out = b.op1(kind, &args);
        pool.push(out, out_ty);
        made += 1;
    }
    // Unused inputs feed one final sum so every input is live.
    let idle: Vec<NodeId> = (0..spec.inputs).filter(|&i| !pool.used[i]).map(|i| pool.values[i].0).collect();
    let mut sinks: Vec<(NodeId, Ty)> = (spec.inputs..pool.values.len())
        .filter(|&i| !pool.used[i])
        .map(|i| pool.values[i])
        .collect();
    if !idle.is_empty() {
        match sinks.iter().rposition(|s| s.1 == Ty::Real) {
            Some(at) => {
                let folded = idle.iter().fold(sinks[at].0, |acc, &v| b.op1(Add, &[acc, v]));
                sinks[at].0 = folded;
            }
            None => {
                let first = b.op1(Neg, &[idle[0]]);
                let folded = idle[1..].iter().fold(first, |acc, &v| b.op1(Add, &[acc, v]));
                sinks.push((folded, Ty::Real));
            }
        }
    }
    for (i, (v, _)) in sinks.into_iter().enumerate() {
        b.output(v, &format!("y{i}"));
    }
    b.finish().expect("generated graph is well formed")
}

fn acceptable(g: &Graph, x: &BTreeMap<String, Value>) -> bool {
    let Ok((_, trace)) = run_forward(g, x) else { return false };
    trace.iter().flatten().all(|v| match v {
        Value::Real(r) => r.is_finite() && r.abs() <= MAGNITUDE_LIMIT && (*r == 0.0 || r.abs() >= 1e-6),
        Value::Undefined => false,
        _ => true,
    })
}

/// Random graph together with the input sample it was accepted on.
pub fn gen_random_with_inputs(spec: &GenSpec) -> Result<(Graph, BTreeMap<String, Value>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for _ in 0..MAX_REJECTIONS {
        let g = candidate(spec, &mut rng);
        let x = sample_inputs(&g, &mut rng);
        if acceptable(&g, &x) {
            return Ok((g, x));
        }
    }
    Err(Error::GenerationExhausted(MAX_REJECTIONS))
}

/// Random composition of primitives, deterministic in `spec.seed`. A
/// candidate is kept once a forward run on sampled inputs is free of ⊥.
pub fn gen_random(spec: &GenSpec) -> Result<Graph> {
    gen_random_with_inputs(spec).map(|(g, _)| g)
}

pub const RENDER_DT: f64 = 1.0;

/// Discretized emission-absorption along one ray:
/// `C = Σᵢ cᵢ · Πⱼ≤ᵢ exp(−κⱼ·Δt)`. Inputs `c1..cn`, `k1..kn`; output `C`.
pub fn render1d_graph(n_samples: usize) -> Result<Graph> {
    if !(2..=8).contains(&n_samples) {
        return Err(Error::InvalidConfig(format!("n_samples must be in [2, 8], got {n_samples}")));
    }
    let mut b = GraphBuilder::new();
    let cs: Vec<NodeId> = (1..=n_samples).map(|i| b.input(&format!("c{i}"))).collect();
    let ks: Vec<NodeId> = (1..=n_samples).map(|i| b.input(&format!("k{i}"))).collect();
    let mut transmittance: Option<NodeId> = None;
    let mut total: Option<NodeId> = None;
    for (&c, &k) in cs.iter().zip(&ks) {
        let dt = b.constant(RENDER_DT);
        let depth = b.op1(Mul, &[k, dt]);
        let neg = b.op1(Neg, &[depth]);
        let base = b.constant(E);
        let atten = b.op1(Pow, &[base, neg]);
        let t = match transmittance {
            Some(prev) => b.op1(Mul, &[prev, atten]),
            None => atten,
        };
        transmittance = Some(t);
        let term = b.op1(Mul, &[c, t]);
        total = Some(match total {
            Some(acc) => b.op1(Add, &[acc, term]),
            None => term,
        });
    }
    b.output(total.unwrap(), "C");
    b.finish()
}

/// Loop oracle for [`render1d_graph`].
pub fn render1d_direct(c: &[f64], k: &[f64]) -> f64 {
    let mut t = 1.0;
    let mut sum = 0.0;
    for (ci, ki) in c.iter().zip(k) {
        t *= E.powf(-(ki * RENDER_DT));
        sum += ci * t;
    }
    sum
}

pub fn render1d_inputs(c: &[f64], k: &[f64]) -> BTreeMap<String, Value> {
    let mut m = BTreeMap::new();
    for (i, (ci, ki)) in c.iter().zip(k).enumerate() {
        m.insert(format!("c{}", i + 1), Value::Real(*ci));
        m.insert(format!("k{}", i + 1), Value::Real(*ki));
    }
    m
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub name: String,
    pub graph: Graph,
    pub y: BTreeMap<String, Value>,
    pub loss: UserLoss,
}

pub fn ik_problems(count: usize, seed: u64) -> Vec<Problem> {
    let g = ik3_graph();
    ik_targets(3, count, seed)
        .into_iter()
        .enumerate()
        .map(|(i, (x, y))| Problem {
            name: format!("ik3-{i:02}"),
            graph: g.clone(),
            y: xy_target(x, y),
            loss: UserLoss::AbsSum,
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct CompareConfig {
    pub solve: SolveConfig,
    /// Initial-loss samples per method.
    pub samples: usize,
    pub reduce: bool,
    /// Identity loss below which a final result counts as a success.
    pub success_tol: f64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            solve: SolveConfig::default(),
            samples: 10,
            reduce: true,
            success_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub problem: String,
    pub method: String,
    pub phase: String,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub problems: usize,
    pub successes: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
    pub summary: Vec<SummaryRow>,
    /// Per-problem final results as JSON, in problem order.
    pub results: Vec<serde_json::Value>,
}

pub const METHOD_THETA: &str = "theta";
pub const METHOD_X: &str = "x";

fn fmt_loss(x: f64) -> String {
    format!("{x:e}")
}

impl CompareReport {
    pub fn csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["problem", "method", "phase", "loss"]).unwrap();
        for r in &self.rows {
            w.write_record([&r.problem, &r.method, &r.phase, &fmt_loss(r.loss)]).unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }

    pub fn summary_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["method", "problems", "successes", "success_rate"]).unwrap();
        for s in &self.summary {
            let rate = if s.problems == 0 { 0.0 } else { s.successes as f64 / s.problems as f64 };
            w.write_record([&s.method, &s.problems.to_string(), &s.successes.to_string(), &rate.to_string()])
                .unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }
}

struct ProblemOutcome {
    rows: Vec<CompareRow>,
    theta_ok: bool,
    x_ok: bool,
    result: serde_json::Value,
}

fn run_problem(p: &Problem, index: usize, cfg: &CompareConfig) -> Result<ProblemOutcome> {
    let ip = prepare_inverse(&p.graph, cfg.reduce, true)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.solve.seed);
    rng.set_stream(index as u64 + (1 << 32));
    let row = |method: &str, phase: &str, loss: f64| CompareRow {
        problem: p.name.clone(),
        method: method.into(),
        phase: phase.into(),
        loss,
    };
    let mut rows = Vec::new();
    let spaces = ip.layout.slot_spaces();
    for _ in 0..cfg.samples {
        let theta: Vec<f64> = spaces.iter().map(|s| s.sample(&mut rng, cfg.solve.int_bound)).collect();
        let loss = run_inverse(&ip, &p.y, &theta).map_or(f64::INFINITY, |r| r.identity_loss);
        rows.push(row(METHOD_THETA, "init", loss));
    }
    for _ in 0..cfg.samples {
        let x: BTreeMap<String, Value> = p
            .graph
            .inputs()
            .into_iter()
            .map(|(_, name)| (name.to_string(), Value::Real(rng.sample(StandardNormal))))
            .collect();
        rows.push(row(METHOD_X, "init", identity_loss(&ip, &p.y, &x)));
    }
    let obj = Objective::new(p.loss.clone(), p.y.clone());
    let th = solve_theta(&ip, &obj, &cfg.solve)?;
    let bx = solve_x_baseline(&p.graph, &obj, &cfg.solve)?;
    for (method, r) in [(METHOD_THETA, &th), (METHOD_X, &bx)] {
        rows.push(row(method, "final", r.identity_loss));
        rows.push(row(method, "final_objective", r.objective));
    }
    Ok(ProblemOutcome {
        rows,
        theta_ok: th.identity_loss < cfg.success_tol,
        x_ok: bx.identity_loss < cfg.success_tol,
        result: serde_json::json!({
            "problem": p.name,
            "y": values_to_json(&p.y),
            "theta": th.to_json(),
            "x": bx.to_json(),
        }),
    })
}

/// Initial-loss samples over random θ and random x, then final losses of
/// [`solve_theta`] and [`solve_x_baseline`] under equal budgets. Rows are
/// sorted by (problem, method, phase).
pub fn compare_harness(problems: &[Problem], cfg: &CompareConfig) -> Result<CompareReport> {
    let outcomes: Vec<ProblemOutcome> = problems
        .par_iter()
        .enumerate()
        .map(|(i, p)| run_problem(p, i, cfg))
        .collect::<Result<_>>()?;
    let mut report = CompareReport::default();
    let (mut theta_ok, mut x_ok) = (0, 0);
    for o in outcomes {
        report.rows.extend(o.rows);
        theta_ok += o.theta_ok as usize;
        x_ok += o.x_ok as usize;
        report.results.push(o.result);
    }
    report
        .rows
        .sort_by(|a, b| (&a.problem, &a.method, &a.phase).cmp(&(&b.problem, &b.method, &b.phase)));
    if !problems.is_empty() {
        report.summary = vec![
            SummaryRow {
                method: METHOD_THETA.into(),
                problems: problems.len(),
                successes: theta_ok,
            },
            SummaryRow {
                method: METHOD_X.into(),
                problems: problems.len(),
                successes: x_ok,
            },
        ];
    }
    Ok(report)
}
