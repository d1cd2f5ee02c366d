use serde::Serialize;
use serde_json::Value;

use dwellcert::analysis::SdpStats;

use crate::problem::Options;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Feasible,
    Infeasible,
    Stable,
    Unstable,
    Pass,
    Fail,
    Ok,
    NumericalFailure,
    InputError,
}

impl Status {
    pub fn exit_code(self) -> u8 {
        match self {
            Status::Feasible | Status::Stable | Status::Pass | Status::Ok => 0,
            Status::Infeasible | Status::Unstable | Status::Fail => 1,
            Status::NumericalFailure => 2,
            Status::InputError => 3,
        }
    }
}

/// Self-contained record of one run.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub task: String,
    pub input_sha256: String,
    /// The problem as read, before command-line overrides.
    pub problem: Value,
    /// Effective method and options after defaults and overrides.
    pub settings: Settings,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residuals: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counts: Option<SdpStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variable_counts: Option<Value>,
    pub seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub controller: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checks: Option<Value>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Settings {
    pub method: Option<Value>,
    pub options: Options,
    pub sdp: dwellcert::sdp::SdpOptions,
}

impl Report {
    pub fn new(task: &str, input_sha256: String, problem: Value, settings: Settings) -> Self {
        Report {
            tool: "dwellcert",
            version: env!("CARGO_PKG_VERSION"),
            task: task.into(),
            input_sha256,
            problem,
            settings,
            status: Status::Ok,
            error: None,
            bounds: None,
            margin: None,
            residuals: None,
            counts: None,
            variable_counts: None,
            seconds: 0.0,
            certificate: None,
            controller: None,
            checks: None,
            warnings: Vec::new(),
        }
    }
}
