use serde::{Deserialize, Serialize};

use dwellcert::analysis::{AnalysisOptions, DwellSpec, Form, ImpulsiveSystem, PolytopicSystem, DEFAULT_BISECT_TOL};
use dwellcert::sampled_data::{PolytopicSampledData, SampledDataSystem};
use dwellcert::sos::Encoder;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Analyze,
    Search,
    Synthesize,
    Verify,
    Simulate,
    Count,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default)]
    pub system: Option<ImpulsiveSystem>,
    #[serde(default)]
    pub polytope: Option<PolytopicSystem>,
    #[serde(default)]
    pub sampled_data: Option<SampledDataSystem>,
    #[serde(default)]
    pub sampled_polytope: Option<PolytopicSampledData>,
    #[serde(default)]
    pub dwell: Option<DwellSpec>,
    #[serde(default)]
    pub method: Option<Encoder>,
    #[serde(default)]
    pub task: Option<Task>,
    #[serde(default)]
    pub options: Options,
}

/// Every tunable with its default; the effective values are echoed in the
/// report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Options {
    pub bisect_tol: f64,
    pub grid: usize,
    pub seed: u64,
    pub k2_zero: bool,
    pub margin_threshold: f64,
    pub verify_tol: f64,
    pub max_trace_scale: f64,
    pub form: Form,
    /// Starting dwell time of range searches.
    pub search_seed: Option<f64>,
    /// Keep the lower end of a range search fixed.
    pub fixed_t_min: Option<f64>,
    /// Upper end of closed-loop sweep checks for minimum dwell time.
    pub horizon: Option<f64>,
    pub impulses: usize,
    pub step: f64,
    pub x0: Option<Vec<f64>>,
    /// Randomized falsification trials for polytopic designs.
    pub trials: usize,
    /// Degree of the looped-functional matrix in `count`.
    pub looped_degree: usize,
}

impl Default for Options {
    fn default() -> Self {
        let a = AnalysisOptions::default();
        Options {
            bisect_tol: DEFAULT_BISECT_TOL,
            grid: a.grid,
            seed: 0,
            k2_zero: false,
            margin_threshold: a.margin_threshold,
            verify_tol: a.verify_tol,
            max_trace_scale: a.max_trace_scale,
            form: Form::D,
            search_seed: None,
            fixed_t_min: None,
            horizon: None,
            impulses: 30,
            step: 1e-3,
            x0: None,
            trials: 1000,
            looped_degree: 3,
        }
    }
}

impl Options {
    pub fn analysis(&self) -> AnalysisOptions {
        AnalysisOptions {
            margin_threshold: self.margin_threshold,
            grid: self.grid,
            verify_tol: self.verify_tol,
            max_trace_scale: self.max_trace_scale,
            ..AnalysisOptions::default()
        }
    }
}

/// Command-line overrides of file settings.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub degree: Option<usize>,
    pub segments: Option<usize>,
    pub grid: Option<usize>,
    pub tol: Option<f64>,
}

pub enum SystemForm {
    Impulsive(ImpulsiveSystem),
    Polytope(PolytopicSystem),
    SampledData(SampledDataSystem),
    SampledPolytope(PolytopicSampledData),
}

impl ProblemFile {
    pub fn parse(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("problem file, line {} column {}: {e}", e.line(), e.column()))
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), String> {
        if o.degree.is_some() && o.segments.is_some() {
            return Err("--degree and --segments are mutually exclusive".into());
        }
        if let Some(d) = o.degree {
            self.method = Some(Encoder::sos(d));
        }
        if let Some(s) = o.segments {
            self.method = Some(Encoder::discretization(s));
        }
        if let Some(g) = o.grid {
            self.options.grid = g;
        }
        if let Some(t) = o.tol {
            self.options.bisect_tol = t;
        }
        if let Some(s) = o.seed {
            self.options.seed = s;
        }
        Ok(())
    }

    pub fn system_form(&self) -> Result<SystemForm, String> {
        let count = [
            self.system.is_some(),
            self.polytope.is_some(),
            self.sampled_data.is_some(),
            self.sampled_polytope.is_some(),
        ]
        .iter()
        .filter(|b| **b)
        .count();
        if count != 1 {
            return Err(format!(
                "exactly one of system, polytope, sampled_data, sampled_polytope must be given ({count} found)"
            ));
        }
        let invalid = |e: dwellcert::Error| format!("system: {e}");
        Ok(if let Some(s) = &self.system {
            s.validate().map_err(invalid)?;
            SystemForm::Impulsive(s.clone())
        } else if let Some(p) = &self.polytope {
            p.validate().map_err(invalid)?;
            SystemForm::Polytope(p.clone())
        } else if let Some(s) = &self.sampled_data {
            s.validate().map_err(invalid)?;
            SystemForm::SampledData(s.clone())
        } else {
            let p = self.sampled_polytope.clone().unwrap();
            PolytopicSampledData::new(p.a.clone(), p.b.clone()).map_err(invalid)?;
            SystemForm::SampledPolytope(p)
        })
    }

    pub fn dwell(&self) -> Result<DwellSpec, String> {
        let d = self.dwell.ok_or("dwell: missing")?;
        d.validate().map_err(|e| format!("dwell: {e}"))?;
        Ok(d)
    }

    pub fn encoder(&self) -> Result<Encoder, String> {
        let e = self.method.unwrap_or(Encoder::sos(DEFAULT_DEGREE));
        e.validate().map_err(|e| format!("method: {e}"))?;
        Ok(e)
    }
}

pub const DEFAULT_DEGREE: usize = 4;
