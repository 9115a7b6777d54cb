//! Hanging chain: `n` balls joined by `n + 1` springs between a fixed anchor
//! at the origin and a velocity-controlled actuator.
//!
//! State layout: ball positions (`3n`), ball velocities (`3n`), actuator
//! position (`3`).

use std::cell::RefCell;

use crate::boxset::BoxSet;
use crate::error::{check_len, Error, Result};
use crate::problem::{Problem, ProblemSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct ChainParams {
    pub n_balls: usize,
    /// spring constant `D` in N/m
    pub spring_const: f64,
    /// spring rest length in m
    pub rest_length: f64,
    /// ball mass in kg
    pub ball_mass: f64,
    /// sampling time of the RK4 discretization in s
    pub dt: f64,
    /// bound on each actuator velocity component
    pub v_max: f64,
    /// coefficients of the floor `z >= c (x - a)^3 + d (x - a) + b`
    pub floor_a: f64,
    pub floor_b: f64,
    pub floor_c: f64,
    pub floor_d: f64,
    pub horizon: usize,
    /// weight on the actuator distance to `x_end`
    pub alpha: f64,
    /// weight on squared ball speeds
    pub beta: f64,
    /// weight on squared inputs
    pub gamma_w: f64,
    pub x_end: [f64; 3],
    pub gravity: [f64; 3],
}

impl Default for ChainParams {
    fn default() -> Self {
        Self {
            n_balls: 6,
            spring_const: 1.6,
            rest_length: 0.0055,
            ball_mass: 0.03,
            dt: 0.05,
            v_max: 1.0,
            floor_a: 0.6,
            floor_b: -1.4,
            floor_c: 5.0,
            floor_d: 2.2,
            horizon: 40,
            alpha: 25.0,
            beta: 1.0,
            gamma_w: 0.01,
            x_end: [1.0, 0.0, 0.0],
            gravity: [0.0, 0.0, -9.81],
        }
    }
}

impl ChainParams {
    pub fn without_gravity(self) -> Self {
        Self { gravity: [0.0; 3], ..self }
    }

    pub fn state_dim(&self) -> usize {
        6 * self.n_balls + 3
    }

    /// Constraints per time step: every ball plus the actuator.
    pub fn points(&self) -> usize {
        self.n_balls + 1
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("spring_const", self.spring_const),
            ("ball_mass", self.ball_mass),
            ("dt", self.dt),
            ("v_max", self.v_max),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive")));
            }
        }
        if !(self.rest_length >= 0.0) {
            return Err(Error::InvalidParameter("rest_length must be nonnegative".into()));
        }
        if self.n_balls == 0 || self.horizon == 0 {
            return Err(Error::InvalidParameter("n_balls and horizon must be at least 1".into()));
        }
        Ok(())
    }

    fn floor(&self, px: f64, pz: f64) -> f64 {
        let t = px - self.floor_a;
        pz - self.floor_c * t * t * t - self.floor_d * t - self.floor_b
    }

    fn floor_dx(&self, px: f64) -> f64 {
        let t = px - self.floor_a;
        -3.0 * self.floor_c * t * t - self.floor_d
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    n_balls: usize,
    data: Vec<f64>,
}

impl ChainState {
    pub fn new(n_balls: usize, data: Vec<f64>) -> Result<Self> {
        check_len(6 * n_balls + 3, data.len())?;
        Ok(Self { n_balls, data })
    }

    pub fn zeros(n_balls: usize) -> Self {
        Self { n_balls, data: vec![0.0; 6 * n_balls + 3] }
    }

    pub fn n_balls(&self) -> usize {
        self.n_balls
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn position(&self, ball: usize) -> [f64; 3] {
        read3(&self.data, 3 * ball)
    }

    pub fn velocity(&self, ball: usize) -> [f64; 3] {
        read3(&self.data, 3 * (self.n_balls + ball))
    }

    pub fn actuator(&self) -> [f64; 3] {
        read3(&self.data, 6 * self.n_balls)
    }

    pub fn set_position(&mut self, ball: usize, p: [f64; 3]) {
        self.data[3 * ball..3 * ball + 3].copy_from_slice(&p);
    }

    pub fn set_velocity(&mut self, ball: usize, v: [f64; 3]) {
        let o = 3 * (self.n_balls + ball);
        self.data[o..o + 3].copy_from_slice(&v);
    }

    pub fn set_actuator(&mut self, p: [f64; 3]) {
        let o = 6 * self.n_balls;
        self.data[o..o + 3].copy_from_slice(&p);
    }
}

fn read3(v: &[f64], o: usize) -> [f64; 3] {
    [v[o], v[o + 1], v[o + 2]]
}

/// Balls spaced evenly on the x-axis between the origin and the actuator at
/// `(1, 0, 0)`, all at rest.
pub fn equidistant_chain(params: &ChainParams) -> ChainState {
    let n = params.n_balls;
    let mut s = ChainState::zeros(n);
    for i in 0..n {
        s.set_position(i, [(i + 1) as f64 / (n + 1) as f64, 0.0, 0.0]);
    }
    s.set_actuator([1.0, 0.0, 0.0]);
    s
}

/// Point `j` of the chain: 0 is the anchor, `n + 1` the actuator.
fn point(x: &[f64], n: usize, j: usize) -> [f64; 3] {
    if j == 0 {
        [0.0; 3]
    } else if j <= n {
        read3(x, 3 * (j - 1))
    } else {
        read3(x, 6 * n)
    }
}

/// Offset of point `j` in the state, `None` for the fixed anchor.
fn point_offset(n: usize, j: usize) -> Option<usize> {
    match j {
        0 => None,
        j if j <= n => Some(3 * (j - 1)),
        _ => Some(6 * n),
    }
}

/// `d_j = P_j - P_{j-1}` and its length.
fn spring(x: &[f64], n: usize, j: usize) -> Result<([f64; 3], f64)> {
    let (a, b) = (point(x, n, j - 1), point(x, n, j));
    let d = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    if r == 0.0 {
        return Err(Error::SingularSpring(j));
    }
    Ok((d, r))
}

fn ode_into(p: &ChainParams, x: &[f64], u: &[f64], out: &mut [f64]) -> Result<()> {
    let n = p.n_balls;
    let mut force = vec![[0.0; 3]; n + 2];
    for (j, fj) in force.iter_mut().enumerate().skip(1) {
        let (d, r) = spring(x, n, j)?;
        let s = p.spring_const * (1.0 - p.rest_length / r);
        *fj = [s * d[0], s * d[1], s * d[2]];
    }
    for i in 1..=n {
        for c in 0..3 {
            out[3 * (i - 1) + c] = x[3 * (n + i - 1) + c];
            out[3 * (n + i - 1) + c] = (force[i + 1][c] - force[i][c]) / p.ball_mass + p.gravity[c];
        }
    }
    out[6 * n..6 * n + 3].copy_from_slice(&u[..3]);
    Ok(())
}

/// Adds `lam^T d(ode)/dx` to `xbar` and `lam^T d(ode)/du` to `ubar`.
fn ode_vjp(p: &ChainParams, x: &[f64], lam: &[f64], xbar: &mut [f64], ubar: &mut [f64]) -> Result<()> {
    let n = p.n_balls;
    for i in 0..3 * n {
        xbar[3 * n + i] += lam[i];
    }
    for c in 0..3 {
        ubar[c] += lam[6 * n + c];
    }
    let mu = |i: usize, c: usize| lam[3 * (n + i - 1) + c] / p.ball_mass;
    for j in 1..=n + 1 {
        let mut fbar = [0.0; 3];
        for (c, fb) in fbar.iter_mut().enumerate() {
            if j <= n {
                *fb -= mu(j, c);
            }
            if j >= 2 {
                *fb += mu(j - 1, c);
            }
        }
        let (d, r) = spring(x, n, j)?;
        let s = p.spring_const * (1.0 - p.rest_length / r);
        let t = p.spring_const * p.rest_length / (r * r * r) * (d[0] * fbar[0] + d[1] * fbar[1] + d[2] * fbar[2]);
        let dbar = [s * fbar[0] + t * d[0], s * fbar[1] + t * d[1], s * fbar[2] + t * d[2]];
        if let Some(o) = point_offset(n, j) {
            for c in 0..3 {
                xbar[o + c] += dbar[c];
            }
        }
        if let Some(o) = point_offset(n, j - 1) {
            for c in 0..3 {
                xbar[o + c] -= dbar[c];
            }
        }
    }
    Ok(())
}

/// Time derivative of the chain state under actuator velocity `u`.
pub fn chain_ode(state: &ChainState, u: &[f64; 3], params: &ChainParams) -> Result<ChainState> {
    check_len(params.n_balls, state.n_balls)?;
    let mut out = vec![0.0; state.data.len()];
    ode_into(params, &state.data, u, &mut out)?;
    Ok(ChainState { n_balls: state.n_balls, data: out })
}

/// One classical RK4 step of `x' = rhs(x)`. When `stages` is given it
/// receives the four stage evaluation points.
pub fn rk4_step<F>(rhs: F, x: &[f64], dt: f64, stages: Option<&mut [Vec<f64>; 4]>) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()>,
{
    let n = x.len();
    let mut k = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut z = [x.to_vec(), vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    rhs(&z[0], &mut k[0])?;
    for s in 1..4 {
        let h = if s == 3 { dt } else { 0.5 * dt };
        z[s] = (0..n).map(|i| x[i] + h * k[s - 1][i]).collect();
        rhs(&z[s], &mut k[s])?;
    }
    let next = (0..n).map(|i| x[i] + dt / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i])).collect();
    if let Some(out) = stages {
        *out = z;
    }
    Ok(next)
}

pub fn chain_step_rk4(state: &ChainState, u: &[f64; 3], params: &ChainParams) -> Result<ChainState> {
    check_len(params.n_balls, state.n_balls)?;
    let data = rk4_step(|x, out| ode_into(params, x, u, out), &state.data, params.dt, None)?;
    Ok(ChainState { n_balls: state.n_balls, data })
}

/// Pulls the cotangent `lam` of `x_{k+1}` back through one RK4 step,
/// returning the cotangent of `x_k` and adding the input part to `ubar`.
fn rk4_vjp(p: &ChainParams, stages: &[Vec<f64>; 4], lam: &[f64], ubar: &mut [f64]) -> Result<Vec<f64>> {
    let n = lam.len();
    let dt = p.dt;
    let mut xbar = lam.to_vec();
    let mut kbar = [
        lam.iter().map(|v| dt / 6.0 * v).collect::<Vec<_>>(),
        lam.iter().map(|v| dt / 3.0 * v).collect(),
        lam.iter().map(|v| dt / 3.0 * v).collect(),
        lam.iter().map(|v| dt / 6.0 * v).collect(),
    ];
    for s in (0..4).rev() {
        let mut zbar = vec![0.0; n];
        ode_vjp(p, &stages[s], &kbar[s], &mut zbar, ubar)?;
        for i in 0..n {
            xbar[i] += zbar[i];
        }
        if s > 0 {
            let h = if s == 3 { dt } else { 0.5 * dt };
            for i in 0..n {
                kbar[s - 1][i] += h * zbar[i];
            }
        }
    }
    Ok(xbar)
}

struct Rollout {
    u: Vec<f64>,
    /// `x_0 .. x_N`
    states: Vec<Vec<f64>>,
    stages: Vec<[Vec<f64>; 4]>,
}

/// Single-shooting optimal control problem over the inputs `u_0 .. u_{N-1}`.
struct ChainOcp {
    params: ChainParams,
    x_init: Vec<f64>,
    box_c: BoxSet,
    box_d: BoxSet,
    cache: RefCell<Option<Result<Rollout>>>,
}

impl ChainOcp {
    fn simulate(&self, u: &[f64]) -> Result<Rollout> {
        let p = &self.params;
        let mut states = vec![self.x_init.clone()];
        let mut stages = Vec::with_capacity(p.horizon);
        for k in 0..p.horizon {
            let uk = &u[3 * k..3 * k + 3];
            let mut st = Default::default();
            let next = rk4_step(|x, out| ode_into(p, x, uk, out), &states[k], p.dt, Some(&mut st))?;
            states.push(next);
            stages.push(st);
        }
        Ok(Rollout { u: u.to_vec(), states, stages })
    }

    fn with_rollout<T>(&self, u: &[f64], f: impl FnOnce(&Rollout) -> T) -> Option<T> {
        let mut cache = self.cache.borrow_mut();
        let fresh = match cache.as_ref() {
            Some(Ok(r)) => r.u != u,
            Some(Err(_)) | None => true,
        };
        if fresh {
            *cache = Some(self.simulate(u));
        }
        match cache.as_ref() {
            Some(Ok(r)) => Some(f(r)),
            _ => None,
        }
    }

    /// Reverse sweep with cotangent `seed(k, x_k, lam)` injected at each
    /// state `x_k`, `k = 1..N`.
    fn adjoint(&self, r: &Rollout, seed: impl Fn(usize, &[f64], &mut [f64]), ubar: &mut [f64]) -> Result<()> {
        let p = &self.params;
        let mut lam = vec![0.0; p.state_dim()];
        for k in (1..=p.horizon).rev() {
            seed(k, &r.states[k], &mut lam);
            lam = rk4_vjp(p, &r.stages[k - 1], &lam, &mut ubar[3 * (k - 1)..3 * k])?;
        }
        Ok(())
    }
}

impl Problem for ChainOcp {
    fn box_c(&self) -> &BoxSet {
        &self.box_c
    }

    fn box_d(&self) -> &BoxSet {
        &self.box_d
    }

    fn f(&self, u: &[f64]) -> f64 {
        let p = &self.params;
        let n = p.n_balls;
        self.with_rollout(u, |r| {
            let mut cost = 0.0;
            for k in 1..=p.horizon {
                let x = &r.states[k];
                cost += (0..3).map(|c| p.alpha * (x[6 * n + c] - p.x_end[c]).powi(2)).sum::<f64>();
                cost += p.beta * x[3 * n..6 * n].iter().map(|v| v * v).sum::<f64>();
                cost += p.gamma_w * u[3 * (k - 1)..3 * k].iter().map(|v| v * v).sum::<f64>();
            }
            cost
        })
        .unwrap_or(f64::NAN)
    }

    fn grad_f(&self, u: &[f64], grad: &mut [f64]) {
        let p = &self.params;
        let n = p.n_balls;
        let ok = self.with_rollout(u, |r| {
            grad.fill(0.0);
            let seed = |_: usize, x: &[f64], lam: &mut [f64]| {
                for c in 0..3 {
                    lam[6 * n + c] += 2.0 * p.alpha * (x[6 * n + c] - p.x_end[c]);
                }
                for i in 3 * n..6 * n {
                    lam[i] += 2.0 * p.beta * x[i];
                }
            };
            self.adjoint(r, seed, grad)
        });
        if matches!(ok, Some(Ok(()))) {
            for (g, ui) in grad.iter_mut().zip(u) {
                *g += 2.0 * p.gamma_w * ui;
            }
        } else {
            grad.fill(f64::NAN);
        }
    }

    fn g(&self, u: &[f64], gx: &mut [f64]) {
        let p = &self.params;
        let n = p.n_balls;
        let ok = self.with_rollout(u, |r| {
            for k in 1..=p.horizon {
                let x = &r.states[k];
                for j in 1..=n + 1 {
                    let pt = point(x, n, j);
                    gx[(k - 1) * (n + 1) + j - 1] = p.floor(pt[0], pt[2]);
                }
            }
        });
        if ok.is_none() {
            gx.fill(f64::NAN);
        }
    }

    fn grad_g_prod(&self, u: &[f64], v: &[f64], out: &mut [f64]) {
        let p = &self.params;
        let n = p.n_balls;
        let ok = self.with_rollout(u, |r| {
            out.fill(0.0);
            let seed = |k: usize, x: &[f64], lam: &mut [f64]| {
                for j in 1..=n + 1 {
                    let w = v[(k - 1) * (n + 1) + j - 1];
                    let o = point_offset(n, j).expect("constrained points are movable");
                    lam[o] += w * p.floor_dx(x[o]);
                    lam[o + 2] += w;
                }
            };
            self.adjoint(r, seed, out)
        });
        if !matches!(ok, Some(Ok(()))) {
            out.fill(f64::NAN);
        }
    }
}

/// Builds the single-shooting control problem from the current state.
/// Inputs are boxed by `v_max` and every ball and the actuator must stay
/// above the floor at every step `k = 1..N`.
pub fn chain_ocp(params: &ChainParams, x_init: &ChainState) -> Result<ProblemSpec> {
    params.validate()?;
    check_len(params.n_balls, x_init.n_balls)?;
    let n_u = 3 * params.horizon;
    let m = params.horizon * params.points();
    Ok(ProblemSpec::new(ChainOcp {
        params: params.clone(),
        x_init: x_init.data.clone(),
        box_c: BoxSet::uniform(n_u, -params.v_max, params.v_max)?,
        box_d: BoxSet::new(vec![0.0; m], vec![f64::INFINITY; m])?,
        cache: RefCell::new(None),
    }))
}
