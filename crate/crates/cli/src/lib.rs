//! Batch front end for `cmrp`: scenario files, task dispatch and report output.

pub mod report;
pub mod run;
pub mod scenario;

pub use run::{run, Outcome, Status, Task};
pub use scenario::{parse_scenario, Format, Scenario, ScenarioErrors};

/// Shipped scenario for each `example` argument.
pub fn example_scenario(which: &str) -> Option<&'static str> {
    Some(match which {
        "1" => include_str!("../scenarios/example1.toml"),
        "2" => include_str!("../scenarios/example2.toml"),
        "2cou" => include_str!("../scenarios/example2-cou.toml"),
        "3" => include_str!("../scenarios/example3.toml"),
        "ruin" => include_str!("../scenarios/exp-exp-ruin.toml"),
        _ => return None,
    })
}
