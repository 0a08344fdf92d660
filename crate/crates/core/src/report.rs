use serde::Serialize;

use crate::layers::LayeredGraph;
use crate::mdp::MdpInstance;
use crate::solver::{Algorithm, Solution};

/// Summary of one solver run, printed by the command-line driver.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub algorithm: Algorithm,
    pub mode: String,
    pub eps: f64,
    pub gamma: usize,
    pub psi_inclusive: usize,
    pub psi_exclusive: usize,
    pub value: f64,
    pub discretized_value: f64,
    pub risk_or_cost: f64,
    pub budget: f64,
    pub feasible: bool,
    pub u_max: f64,
    pub table_cells: usize,
    pub wall_time_ms: f64,
    pub oracle_value: Option<f64>,
    /// `value / oracle_value`, when the oracle value is positive.
    pub ratio: Option<f64>,
}

impl RunReport {
    pub fn new(inst: &MdpInstance, g: &LayeredGraph, sol: &Solution, eps: f64, wall_time_ms: f64) -> Self {
        RunReport {
            algorithm: sol.algorithm,
            mode: inst.mode.to_string(),
            eps,
            gamma: g.gamma,
            psi_inclusive: g.psi_inclusive,
            psi_exclusive: g.psi_exclusive,
            value: sol.eval.value,
            discretized_value: sol.discretized_value,
            risk_or_cost: sol.eval.risk_or_cost,
            budget: inst.budget,
            feasible: sol.eval.feasible,
            u_max: sol.u_max,
            table_cells: sol.table_cells,
            wall_time_ms,
            oracle_value: None,
            ratio: None,
        }
    }

    pub fn with_oracle(mut self, optimum: f64) -> Self {
        self.oracle_value = Some(optimum);
        self.ratio = (optimum > 0.0).then(|| self.value / optimum);
        self
    }

    /// `key=value` lines in field order.
    pub fn to_text(&self) -> String {
        let opt = |x: Option<f64>| x.map_or_else(|| "none".to_string(), |v| v.to_string());
        let risk_key = if self.mode == "c" { "cost" } else { "risk" };
        let mut out = String::new();
        out += &format!("algorithm={}\n", self.algorithm);
        out += &format!("mode={}\n", self.mode);
        out += &format!("eps={}\n", self.eps);
        out += &format!("gamma={}\n", self.gamma);
        out += &format!("psi_inclusive={}\n", self.psi_inclusive);
        out += &format!("psi_exclusive={}\n", self.psi_exclusive);
        out += &format!("value={}\n", self.value);
        out += &format!("discretized_value={}\n", self.discretized_value);
        out += &format!("{risk_key}={}\n", self.risk_or_cost);
        out += &format!("budget={}\n", self.budget);
        out += &format!("feasible={}\n", self.feasible);
        out += &format!("u_max={}\n", self.u_max);
        out += &format!("table_cells={}\n", self.table_cells);
        out += &format!("wall_time_ms={:.3}\n", self.wall_time_ms);
        out += &format!("oracle_value={}\n", opt(self.oracle_value));
        out += &format!("ratio={}\n", opt(self.ratio));
        out
    }
}
