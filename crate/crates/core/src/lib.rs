pub mod allocation;
pub mod costs;
pub mod oracle;
pub mod pipeline;
pub mod program;
pub mod scenario;
pub mod schedule;
pub mod solver;
