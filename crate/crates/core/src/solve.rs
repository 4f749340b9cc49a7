//! Multi-start mixed pattern search over θ, and the same search over the
//! forward inputs as a baseline.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde_json::json;

use crate::error::{Error, Result};
use crate::exec::{eval_inverse, identity_loss, metric_many, run_forward, values_to_json};
use crate::graph::{Graph, Label, NodeId};
use crate::inversion::{invert_graph, InverseProgram, ThetaVec};
use crate::space::ParamSpace;
use crate::value::Value;

/// User loss `L(x)` on recovered inputs.
#[derive(Debug, Clone, PartialEq)]
pub enum UserLoss {
    Zero,
    /// Σ |xᵢ| over every element of every input.
    AbsSum,
    /// Distance to a reference assignment.
    Target(BTreeMap<String, Value>),
}

impl UserLoss {
    pub fn eval(&self, x: &BTreeMap<String, Value>) -> f64 {
        match self {
            UserLoss::Zero => 0.0,
            UserLoss::AbsSum => x
                .values()
                .map(|v| match v.elements() {
                    Some(e) => e.iter().map(|a| a.abs()).sum(),
                    None => f64::INFINITY,
                })
                .sum(),
            UserLoss::Target(t) => {
                let mut a = Vec::new();
                let mut b = Vec::new();
                for (k, v) in t {
                    let Some(p) = x.get(k) else { return f64::INFINITY };
                    a.push(p.clone());
                    b.push(v.clone());
                }
                metric_many(&a, &b).unwrap_or(f64::INFINITY)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub loss: UserLoss,
    pub lambda_dm: f64,
    pub y: BTreeMap<String, Value>,
}

impl Objective {
    pub fn new(loss: UserLoss, y: BTreeMap<String, Value>) -> Objective {
        Objective { loss, lambda_dm: 1.0, y }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig {
    pub restarts: usize,
    /// Objective evaluations per restart.
    pub max_evals: usize,
    pub initial_step: f64,
    pub min_step: f64,
    /// Relative finite-difference step.
    pub fd_h: f64,
    /// Unbounded integer slots are searched in [-K, K].
    pub int_bound: i64,
    pub seed: u64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            restarts: 16,
            max_evals: 5000,
            initial_step: 1.0,
            min_step: 1e-10,
            fd_h: 1e-6,
            int_bound: crate::space::DEFAULT_INT_BOUND,
            seed: 0,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.restarts > 0
            && self.max_evals > 0
            && self.initial_step > 0.0
            && self.min_step > 0.0
            && self.fd_h > 0.0
            && self.int_bound > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    /// θ* for inverse solves, the flattened inputs for the baseline.
    pub theta: ThetaVec,
    pub x: BTreeMap<String, Value>,
    pub objective: f64,
    pub user_loss: f64,
    pub identity_loss: f64,
    pub domain_loss: f64,
    pub evals: usize,
    /// (evaluations so far, best objective so far), restarts in index order.
    pub trajectory: Vec<(usize, f64)>,
}

fn num(x: f64) -> serde_json::Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(x.to_string())
    }
}

impl SolveResult {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "theta": self.theta.iter().map(|&t| num(t)).collect::<Vec<_>>(),
            "x": values_to_json(&self.x),
            "objective": num(self.objective),
            "user_loss": num(self.user_loss),
            "identity_loss": num(self.identity_loss),
            "domain_loss": num(self.domain_loss),
            "evals": self.evals,
            "trajectory": self.trajectory.iter().map(|&(e, f)| json!([e, num(f)])).collect::<Vec<_>>(),
        })
    }
}

struct Budget<'a, F> {
    f: &'a F,
    used: usize,
    max: usize,
}

impl<F: Fn(&[f64]) -> f64> Budget<'_, F> {
    fn eval(&mut self, p: &[f64]) -> Option<f64> {
        if self.used >= self.max {
            return None;
        }
        self.used += 1;
        let v = (self.f)(p);
        Some(if v.is_nan() { f64::INFINITY } else { v })
    }
}

struct Run {
    best: Vec<f64>,
    best_f: f64,
    evals: usize,
    trajectory: Vec<(usize, f64)>,
}

struct Search<'a, F> {
    budget: Budget<'a, F>,
    spaces: &'a [ParamSpace],
    members: Vec<Option<Vec<f64>>>,
    cfg: &'a SolveConfig,
    rng: ChaCha8Rng,
    best: Vec<f64>,
    best_f: f64,
    trajectory: Vec<(usize, f64)>,
}

impl<F: Fn(&[f64]) -> f64> Search<'_, F> {
    fn project(&self, p: &mut [f64]) {
        for (x, s) in p.iter_mut().zip(self.spaces) {
            *x = s.contract(*x);
        }
    }

    fn init(&mut self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.spaces.len());
        for m in &self.members {
            p.push(match m {
                Some(m) => m[self.rng.random_range(0..m.len())],
                None => self.rng.sample(StandardNormal),
            });
        }
        self.project(&mut p);
        p
    }

    fn eval(&mut self, p: &[f64]) -> Option<f64> {
        let f = self.budget.eval(p)?;
        if f < self.best_f {
            self.best_f = f;
            self.best = p.to_vec();
            self.trajectory.push((self.budget.used, f));
        }
        Some(f)
    }

    /// Try `x + t·d`; returns the improved value if any.
    fn try_move(&mut self, x: &[f64], fx: f64, d: &[f64], t: f64) -> Option<Option<(Vec<f64>, f64)>> {
        let mut c: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + t * b).collect();
        self.project(&mut c);
        if c == x {
            return Some(None);
        }
        let fc = self.eval(&c)?;
        Some((fc < fx).then_some((c, fc)))
    }

    fn run(&mut self) -> Option<()> {
        let n = self.spaces.len();
        let continuous: Vec<usize> = (0..n).filter(|&i| self.members[i].is_none()).collect();
        let discrete: Vec<usize> = (0..n).filter(|&i| self.members[i].is_some()).collect();
        let mut x = self.init();
        let mut fx = self.eval(&x)?;
        if n == 0 {
            return Some(());
        }
        let mut step = self.cfg.initial_step;
        loop {
            let mut improved = false;

            for &i in &discrete {
                let options = self.members[i].clone().unwrap();
                for m in options {
                    if m == x[i] {
                        continue;
                    }
                    let mut c = x.clone();
                    c[i] = m;
                    let fc = self.eval(&c)?;
                    if fc < fx {
                        x = c;
                        fx = fc;
                        improved = true;
                    }
                }
            }

            if !continuous.is_empty() {
                let mut grad = vec![0.0; n];
                for &i in &continuous {
                    let h = self.cfg.fd_h * x[i].abs().max(1.0);
                    let mut c = x.clone();
                    c[i] += h;
                    let fc = self.eval(&c)?;
                    grad[i] = (fc - fx) / h;
                }
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm.is_finite() && norm > 0.0 {
                    let d: Vec<f64> = grad.iter().map(|g| -g / norm).collect();
                    let mut t = 2.0 * step;
                    for _ in 0..4 {
                        if let Some((c, fc)) = self.try_move(&x, fx, &d, t)? {
                            x = c;
                            fx = fc;
                            improved = true;
                            break;
                        }
                        t *= 0.25;
                    }
                }
            }

            if !improved {
                'poll: for &i in &continuous {
                    for sign in [1.0, -1.0] {
                        let mut d = vec![0.0; n];
                        d[i] = sign;
                        if let Some((c, fc)) = self.try_move(&x, fx, &d, step)? {
                            x = c;
                            fx = fc;
                            improved = true;
                            break 'poll;
                        }
                    }
                }
            }

            if !improved && continuous.len() > 1 {
                'random: for _ in 0..continuous.len() {
                    let mut d = vec![0.0; n];
                    for &i in &continuous {
                        d[i] = self.rng.sample(StandardNormal);
                    }
                    let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm == 0.0 {
                        continue;
                    }
                    d.iter_mut().for_each(|v| *v /= norm);
                    for sign in [1.0, -1.0] {
                        if let Some((c, fc)) = self.try_move(&x, fx, &d, sign * step)? {
                            x = c;
                            fx = fc;
                            improved = true;
                            break 'random;
                        }
                    }
                }
            }

            if improved {
                step = (step * 2.0).min(self.cfg.initial_step);
            } else {
                step *= 0.5;
            }
            if step < self.cfg.min_step || continuous.is_empty() && !improved {
                // Converged: restart locally around the incumbent.
                x = self.best.clone();
                for &i in &continuous {
                    let kick: f64 = self.rng.sample(StandardNormal);
                    x[i] += kick;
                }
                for &i in &discrete {
                    let m = self.members[i].as_ref().unwrap();
                    x[i] = m[self.rng.random_range(0..m.len())];
                }
                self.project(&mut x);
                fx = self.eval(&x)?;
                step = self.cfg.initial_step;
            }
        }
    }
}

fn minimize<F>(f: &F, spaces: &[ParamSpace], cfg: &SolveConfig, restart: usize) -> Run
where
    F: Fn(&[f64]) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(restart as u64);
    let mut s = Search {
        budget: Budget { f, used: 0, max: cfg.max_evals },
        spaces,
        members: spaces.iter().map(|s| s.members(cfg.int_bound)).collect(),
        cfg,
        rng,
        best: vec![],
        best_f: f64::INFINITY,
        trajectory: vec![],
    };
    s.run();
    if s.best.is_empty() && !spaces.is_empty() {
        s.best = s.init();
    }
    Run {
        best: s.best,
        best_f: s.best_f,
        evals: s.budget.used,
        trajectory: s.trajectory,
    }
}

/// Run every restart (in parallel) and reduce in restart order.
fn multistart<F>(f: &F, spaces: &[ParamSpace], cfg: &SolveConfig) -> (Vec<f64>, f64, usize, Vec<(usize, f64)>)
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let runs: Vec<Run> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| minimize(f, spaces, cfg, r))
        .collect();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut offset = 0;
    let mut trajectory: Vec<(usize, f64)> = Vec::new();
    for run in runs {
        for &(e, v) in &run.trajectory {
            if trajectory.last().is_none_or(|&(_, b)| v < b) {
                trajectory.push((offset + e, v));
            }
        }
        if best.as_ref().is_none_or(|(_, b)| run.best_f < *b) {
            best = Some((run.best, run.best_f));
        }
        offset += run.evals;
    }
    let (best, best_f) = best.unwrap_or((Vec::new(), f64::INFINITY));
    (best, best_f, offset, trajectory)
}

/// Invert `g`, then optionally reduce parameters and totalize.
pub fn prepare_inverse(g: &Graph, reduce: bool, totalize: bool) -> Result<InverseProgram> {
    let mut ip = invert_graph(g)?;
    if reduce {
        ip = crate::constraints::reduce(&ip)?.0;
    }
    if totalize {
        ip = crate::totalization::totalize(&ip);
    }
    Ok(ip)
}

/// Total objective of an inverse program at θ.
pub fn theta_objective(ip: &InverseProgram, obj: &Objective, theta: &[f64]) -> f64 {
    match eval_inverse(ip, &obj.y, theta) {
        Ok(ev) => obj.loss.eval(&ev.outputs) + obj.lambda_dm * ev.domain_loss(),
        Err(_) => f64::INFINITY,
    }
}

/// Minimize `L(f̂⁻¹(y; θ)) + λ·L_dm` over θ.
pub fn solve_theta(ip: &InverseProgram, obj: &Objective, cfg: &SolveConfig) -> Result<SolveResult> {
    cfg.validate()?;
    if !ip.totalized {
        let at = ip.graph.topo_order().first().copied().unwrap_or(NodeId(0));
        return Err(Error::NotTotalized(at));
    }
    let spaces = ip.layout.slot_spaces();
    let f = |t: &[f64]| theta_objective(ip, obj, t);
    let (theta, objective, evals, trajectory) = multistart(&f, &spaces, cfg);
    let ev = eval_inverse(ip, &obj.y, &theta)?;
    if let Some(bad) = ev.first_undefined() {
        return Err(Error::NotTotalized(bad));
    }
    Ok(SolveResult {
        user_loss: obj.loss.eval(&ev.outputs),
        identity_loss: identity_loss(ip, &obj.y, &ev.outputs),
        domain_loss: ev.domain_loss(),
        x: ev.outputs,
        theta,
        objective,
        evals,
        trajectory,
    })
}

fn input_slots(g: &Graph) -> Vec<(String, Vec<usize>)> {
    g.value_ids()
        .filter_map(|v| match g.label(v) {
            Some(Label::Input { name, shape }) => Some((name.clone(), shape.clone())),
            _ => None,
        })
        .collect()
}

fn unflatten(slots: &[(String, Vec<usize>)], p: &[f64]) -> BTreeMap<String, Value> {
    let mut out = BTreeMap::new();
    let mut at = 0;
    for (name, shape) in slots {
        let n: usize = shape.iter().product();
        out.insert(name.clone(), Value::from_elements(shape, p[at..at + n].to_vec()));
        at += n;
    }
    out
}

fn forward_residual(g: &Graph, y: &BTreeMap<String, Value>, x: &BTreeMap<String, Value>) -> f64 {
    let Ok((fx, _)) = run_forward(g, x) else {
        return f64::INFINITY;
    };
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (_, name) in g.outputs() {
        let (Some(p), Some(q)) = (fx.get(name), y.get(name)) else {
            return f64::INFINITY;
        };
        a.push(p.clone());
        b.push(q.clone());
    }
    metric_many(&a, &b).unwrap_or(f64::INFINITY)
}

/// Minimize `d(f(x), y) + L(x)` directly over the inputs with the same
/// search and budget as [`solve_theta`].
pub fn solve_x_baseline(g: &Graph, obj: &Objective, cfg: &SolveConfig) -> Result<SolveResult> {
    cfg.validate()?;
    let slots = input_slots(g);
    let dim: usize = slots.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
    let spaces = vec![ParamSpace::RealLine; dim];
    let f = |p: &[f64]| {
        let x = unflatten(&slots, p);
        forward_residual(g, &obj.y, &x) + obj.loss.eval(&x)
    };
    let (theta, objective, evals, trajectory) = multistart(&f, &spaces, cfg);
    let x = unflatten(&slots, &theta);
    Ok(SolveResult {
        user_loss: obj.loss.eval(&x),
        identity_loss: forward_residual(g, &obj.y, &x),
        domain_loss: 0.0,
        x,
        theta,
        objective,
        evals,
        trajectory,
    })
}
