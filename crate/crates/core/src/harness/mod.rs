//! Experiment generation, orchestration and result tables.

mod methods;
mod report;
mod scenario;

pub use methods::{run_method, Method, MethodRun};
pub use report::{
    read_csv, read_json, run_suite, write_csv, write_json, Format, ResultRow, RunStatus,
    SuiteOptions,
};
pub use scenario::{
    alpha_of, generate, table_one, table_one_cloud, table_one_nodes, table_one_profile, Range,
    ScenarioKind, ScenarioSpec,
};
