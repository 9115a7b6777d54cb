//! Receding-horizon control of the hanging chain.

use super::chain::{chain_ocp, chain_step_rk4, equidistant_chain, ChainParams, ChainState};
use crate::alm::{alm_solve, AlmParams, SolveReport};
use crate::error::{Error, Result};
use crate::lbfgs::DEFAULT_MEMORY;
use crate::panoc::PanocParams;
use crate::problem::SolveStatus;
use crate::variant::SolverVariant;

/// Input applied open loop before the controller starts.
pub const PERTURBATION: [f64; 3] = [-0.5, 0.5, 0.5];
pub const PERTURBATION_STEPS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct MpcConfig {
    pub variant: SolverVariant,
    pub alm: AlmParams,
    pub panoc: PanocParams,
    pub memory: usize,
}

impl MpcConfig {
    pub fn new(variant: SolverVariant) -> Self {
        Self { variant, alm: AlmParams::default(), panoc: PanocParams::default(), memory: DEFAULT_MEMORY }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcStep {
    pub step: usize,
    pub report: SolveReport,
    /// input sent to the plant, zero after a failed solve
    pub applied: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcRun {
    pub prelude_inputs: Vec<[f64; 3]>,
    pub initial_state: ChainState,
    pub steps: Vec<MpcStep>,
    pub final_state: ChainState,
}

impl MpcRun {
    pub fn total_inner_iterations(&self) -> usize {
        self.steps.iter().map(|s| s.report.inner_iterations).sum()
    }
}

/// Equidistant chain at rest, driven by [`PERTURBATION`] for
/// [`PERTURBATION_STEPS`] samples.
pub fn perturbed_initial_state(params: &ChainParams) -> Result<(ChainState, Vec<[f64; 3]>)> {
    params.validate()?;
    let mut state = equidistant_chain(params);
    let inputs = vec![PERTURBATION; PERTURBATION_STEPS];
    for u in &inputs {
        state = chain_step_rk4(&state, u, params)?;
    }
    Ok((state, inputs))
}

/// Drops the first block of `block` entries and refills the tail.
fn shift(v: &[f64], block: usize, repeat_last: bool) -> Vec<f64> {
    let mut out = v[block..].to_vec();
    if repeat_last {
        out.extend_from_slice(&v[v.len() - block..]);
    } else {
        out.resize(v.len(), 0.0);
    }
    out
}

pub fn mpc_simulate(params: &ChainParams, config: &MpcConfig, n_steps: usize, warm_start: bool) -> Result<MpcRun> {
    if n_steps == 0 {
        return Err(Error::InvalidParameter("n_steps must be at least 1".into()));
    }
    let (initial_state, prelude_inputs) = perturbed_initial_state(params)?;
    let inner = config.variant.inner_solver(&config.panoc, config.memory);
    let n_u = 3 * params.horizon;
    let m = params.horizon * params.points();

    let mut state = initial_state.clone();
    let mut u_guess = vec![0.0; n_u];
    let mut y_guess = vec![0.0; m];
    let mut steps = Vec::with_capacity(n_steps);
    for step in 0..n_steps {
        let problem = chain_ocp(params, &state)?;
        let (x0, y0) = if warm_start { (u_guess.clone(), y_guess.clone()) } else { (vec![0.0; n_u], vec![0.0; m]) };
        let out = alm_solve(&problem, &x0, &y0, &config.alm, &inner)?;
        let applied =
            if out.report.status == SolveStatus::Converged { [out.x[0], out.x[1], out.x[2]] } else { [0.0; 3] };
        state = chain_step_rk4(&state, &applied, params)?;
        u_guess = shift(&out.x, 3, true);
        y_guess = shift(&out.y, params.points(), false);
        steps.push(MpcStep { step, report: out.report, applied });
    }
    Ok(MpcRun { prelude_inputs, initial_state, steps, final_state: state })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shift_rules() {
        assert_eq!(shift(&[1.0, 2.0, 3.0, 4.0], 2, true), vec![3.0, 4.0, 3.0, 4.0]);
        assert_eq!(shift(&[1.0, 2.0, 3.0, 4.0], 2, false), vec![3.0, 4.0, 0.0, 0.0]);
    }

    #[test]
    fn prelude_replays_perturbation() {
        let p = ChainParams { n_balls: 3, horizon: 5, ..Default::default() };
        let (state, inputs) = perturbed_initial_state(&p).unwrap();
        assert_eq!(inputs, vec![[-0.5, 0.5, 0.5]; 3]);
        let a = state.actuator();
        let expected = [1.0 - 0.5 * 0.15, 0.5 * 0.15, 0.5 * 0.15];
        for c in 0..3 {
            assert!((a[c] - expected[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn single_cold_step_converges() {
        let p = ChainParams { n_balls: 3, horizon: 10, ..Default::default() };
        let run = mpc_simulate(&p, &MpcConfig::new(SolverVariant::PanocIls), 1, false).unwrap();
        assert_eq!(run.steps.len(), 1);
        assert_eq!(run.steps[0].report.status, SolveStatus::Converged, "{:?}", run.steps[0].report);
    }

    #[test]
    fn zero_steps_rejected() {
        let p = ChainParams::default();
        assert!(mpc_simulate(&p, &MpcConfig::new(SolverVariant::Panoc), 0, true).is_err());
    }
}
