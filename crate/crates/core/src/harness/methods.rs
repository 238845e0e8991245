use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::{aop, rop, wop};
use crate::branching::Preset;
use crate::error::{Error, Result};
use crate::ffbd::{self, Mode};
use crate::ibba;
use crate::model::{validate_solution, Solution, SystemInstance, DEFAULT_TOLERANCE};
use crate::oracle::enumerate_optimum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "WOP")]
    Wop,
    #[serde(rename = "AOP")]
    Aop,
    #[serde(rename = "ROP")]
    Rop,
    #[serde(rename = "IBBA-LFC")]
    IbbaLfc,
    #[serde(rename = "IBBA-LCF")]
    IbbaLcf,
    #[serde(rename = "FFBD-S")]
    FfbdS,
    #[serde(rename = "FFBD-F")]
    FfbdF,
    #[serde(rename = "ROP-FFBD-S")]
    RopFfbdS,
    #[serde(rename = "ROP-FFBD-F")]
    RopFfbdF,
    #[serde(rename = "ORACLE")]
    Oracle,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::Wop,
        Method::Aop,
        Method::Rop,
        Method::IbbaLfc,
        Method::IbbaLcf,
        Method::FfbdS,
        Method::FfbdF,
        Method::RopFfbdS,
        Method::RopFfbdF,
        Method::Oracle,
    ];

    /// Methods that return the energy optimum.
    pub fn is_exact(self) -> bool {
        matches!(
            self,
            Method::IbbaLfc
                | Method::IbbaLcf
                | Method::FfbdS
                | Method::FfbdF
                | Method::RopFfbdS
                | Method::RopFfbdF
                | Method::Oracle
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Wop => "WOP",
            Method::Aop => "AOP",
            Method::Rop => "ROP",
            Method::IbbaLfc => "IBBA-LFC",
            Method::IbbaLcf => "IBBA-LCF",
            Method::FfbdS => "FFBD-S",
            Method::FfbdF => "FFBD-F",
            Method::RopFfbdS => "ROP-FFBD-S",
            Method::RopFfbdF => "ROP-FFBD-F",
            Method::Oracle => "ORACLE",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_uppercase().replace('_', "-");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

/// One method applied to one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodRun {
    pub method: Method,
    /// `None` when the method reports the instance infeasible.
    pub solution: Option<Solution>,
    pub error_rate: f64,
    pub mean_delay: Option<f64>,
    pub wall_time_ms: f64,
    pub intermediate_problems: usize,
    pub mp_iterations: usize,
    pub standard_solver_calls: usize,
    pub fast_detection_fraction: f64,
}

impl MethodRun {
    fn new(
        method: Method,
        instance: &SystemInstance,
        solution: Option<Solution>,
        start: Instant,
    ) -> Self {
        let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
        let error_rate = solution
            .as_ref()
            .map(|s| validate_solution(s, instance, DEFAULT_TOLERANCE).error_rate())
            .unwrap_or(0.0);
        let mean_delay = solution.as_ref().map(Solution::mean_delay);
        Self {
            method,
            solution,
            error_rate,
            mean_delay,
            wall_time_ms,
            intermediate_problems: 0,
            mp_iterations: 0,
            standard_solver_calls: 0,
            fast_detection_fraction: 0.0,
        }
    }

    pub fn energy(&self) -> Option<f64> {
        self.solution.as_ref().map(|s| s.total_energy)
    }
}

pub fn run_method(instance: &SystemInstance, method: Method) -> Result<MethodRun> {
    let start = Instant::now();
    Ok(match method {
        Method::Wop => MethodRun::new(method, instance, wop(instance).solution, start),
        Method::Aop => {
            let r = aop(instance)?;
            let mut run = MethodRun::new(method, instance, r.result.solution, start);
            run.intermediate_problems = r.stats.convex_solves;
            run
        }
        Method::Rop => {
            let r = rop(instance)?;
            let mut run = MethodRun::new(method, instance, r.result.solution, start);
            run.intermediate_problems = r.stats.relaxed_solves + r.stats.solver_calls;
            run.standard_solver_calls = r.stats.solver_calls;
            run
        }
        Method::IbbaLfc | Method::IbbaLcf => {
            let preset = if method == Method::IbbaLfc {
                Preset::Lfc
            } else {
                Preset::Lcf
            };
            let r = ibba::solve(instance, preset)?;
            let mut run = MethodRun::new(method, instance, r.solution, start);
            run.intermediate_problems = r.stats.relaxed_solves;
            run.standard_solver_calls = r.stats.relaxed_solves + r.stats.verification_solves;
            run
        }
        Method::FfbdS | Method::FfbdF | Method::RopFfbdS | Method::RopFfbdF => {
            let mode = if matches!(method, Method::FfbdS | Method::RopFfbdS) {
                Mode::S
            } else {
                Mode::F
            };
            let warm = if matches!(method, Method::RopFfbdS | Method::RopFfbdF) {
                rop(instance)?.result.solution
            } else {
                None
            };
            let r = ffbd::run(instance, mode, warm.as_ref())?;
            let mut run = MethodRun::new(method, instance, r.solution, start);
            run.intermediate_problems = r.stats.intermediate_problems();
            run.mp_iterations = r.stats.mp_iterations;
            run.standard_solver_calls = r.stats.standard_solver_calls;
            run.fast_detection_fraction = r.stats.fast_detection_fraction();
            run
        }
        Method::Oracle => {
            let r = enumerate_optimum(instance)?;
            let mut run = MethodRun::new(method, instance, r.solution, start);
            run.intermediate_problems = r.evaluated;
            run
        }
    })
}
