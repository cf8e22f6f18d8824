//! JSON config schemas and their translation into solver objects.

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use tripd::distributed::{AgentGraph, AgentSpec, EdgeConstraint};
use tripd::linmap::LinearMap;
use tripd::metric::Metric;
use tripd::problem::{ProblemSpec, SmoothTerm};
use tripd::prox::{prox_box, prox_conjugate, prox_l1, ProxFunction};

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrVec {
    Scalar(f64),
    Vec(Vec<f64>),
}

impl ScalarOrVec {
    pub fn to_metric(&self, dim: usize, what: &str) -> Result<Metric, String> {
        match self {
            ScalarOrVec::Scalar(v) => Ok(Metric::scaled_identity(dim, *v)),
            ScalarOrVec::Vec(vs) => {
                if vs.len() != dim {
                    return Err(format!(
                        "{what}: expected {dim} entries, found {}",
                        vs.len()
                    ));
                }
                Ok(Metric::from_diagonal(DVector::from_vec(vs.clone())))
            }
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SmoothConfig {
    Zero,
    /// f(x) = 1/2 x' H x + c' x with H symmetric positive semidefinite
    Quadratic {
        hessian: Vec<Vec<f64>>,
        #[serde(default)]
        linear: Option<Vec<f64>>,
    },
}

impl SmoothConfig {
    pub fn build(&self, n: usize) -> Result<SmoothTerm, String> {
        match self {
            SmoothConfig::Zero => Ok(SmoothTerm::zero(n)),
            SmoothConfig::Quadratic { hessian, linear } => {
                let rows = hessian.len();
                if rows != n || hessian.iter().any(|r| r.len() != n) {
                    return Err(format!("f.hessian: expected {n}x{n}"));
                }
                let flat: Vec<f64> = hessian.iter().flatten().copied().collect();
                let h = DMatrix::from_row_slice(n, n, &flat);
                let c = match linear {
                    Some(v) if v.len() == n => DVector::from_vec(v.clone()),
                    Some(v) => {
                        return Err(format!("f.linear: expected {n} entries, found {}", v.len()))
                    }
                    None => DVector::zeros(n),
                };
                SmoothTerm::quadratic(h, c).map_err(|e| format!("f: {e}"))
            }
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NonsmoothConfig {
    Zero,
    L1 { weight: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl NonsmoothConfig {
    /// Prox of the function itself (used for g).
    pub fn build_prox(&self, n: usize, what: &str) -> Result<ProxFunction, String> {
        match self {
            NonsmoothConfig::Zero => Ok(ProxFunction::zero(n)),
            NonsmoothConfig::L1 { weight } => Ok(prox_l1(n, *weight)),
            NonsmoothConfig::Box { lo, hi } => {
                if lo.len() != n || hi.len() != n {
                    return Err(format!("{what}: box bounds must have {n} entries"));
                }
                prox_box(DVector::from_vec(lo.clone()), DVector::from_vec(hi.clone()))
                    .map_err(|e| format!("{what}: {e}"))
            }
        }
    }

    /// Prox of the conjugate (used for h, which enters through h*).
    pub fn build_conjugate_prox(&self, r: usize, what: &str) -> Result<ProxFunction, String> {
        match self {
            // h == 0 has conjugate indicator of the origin
            NonsmoothConfig::Zero => Ok(ProxFunction::point_indicator(r)),
            // (w ||.||_1)* is the indicator of the sup-norm ball of radius w
            NonsmoothConfig::L1 { weight } => Ok(prox_box(
                DVector::from_element(r, -*weight),
                DVector::from_element(r, *weight),
            )
            .map_err(|e| format!("{what}: {e}"))?),
            NonsmoothConfig::Box { .. } => Ok(prox_conjugate(self.build_prox(r, what)?)),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapConfig {
    Zero,
    Identity,
    Diagonal { diag: Vec<f64> },
    Dense { rows: Vec<Vec<f64>> },
}

impl MapConfig {
    pub fn build(&self, out_dim: usize, in_dim: usize, what: &str) -> Result<LinearMap, String> {
        match self {
            MapConfig::Zero => Ok(LinearMap::zero(out_dim, in_dim)),
            MapConfig::Identity => {
                if out_dim != in_dim {
                    return Err(format!("{what}: identity needs square dimensions"));
                }
                Ok(LinearMap::identity(in_dim))
            }
            MapConfig::Diagonal { diag } => {
                if out_dim != in_dim || diag.len() != in_dim {
                    return Err(format!(
                        "{what}: diagonal needs {in_dim} entries and square dims"
                    ));
                }
                Ok(LinearMap::diagonal(DVector::from_vec(diag.clone())))
            }
            MapConfig::Dense { rows } => {
                if rows.len() != out_dim || rows.iter().any(|r| r.len() != in_dim) {
                    return Err(format!("{what}: expected {out_dim}x{in_dim} matrix"));
                }
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                Ok(LinearMap::dense(DMatrix::from_row_slice(
                    out_dim, in_dim, &flat,
                )))
            }
        }
    }
}

/// Structured problem for the solve/bc commands.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub n: usize,
    pub r: usize,
    pub f: SmoothConfig,
    pub g: NonsmoothConfig,
    pub h: NonsmoothConfig,
    pub l: MapConfig,
    pub sigma: ScalarOrVec,
    pub gamma: ScalarOrVec,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub u0: Option<Vec<f64>>,
    /// coordinate blocks over the stacked (u, x) vector, for the bc command
    #[serde(default)]
    pub blocks: Option<Vec<Vec<usize>>>,
    /// per-block activation probabilities, for the bc command
    #[serde(default)]
    pub probabilities: Option<Vec<f64>>,
}

impl ProblemConfig {
    pub fn build(&self) -> Result<(ProblemSpec, Metric, Metric), String> {
        let f = self.f.build(self.n)?;
        let g = self.g.build_prox(self.n, "g")?;
        let h = self.h.build_conjugate_prox(self.r, "h")?;
        let l = self.l.build(self.r, self.n, "l")?;
        let problem = ProblemSpec::new(f, g, h, l).map_err(|e| e.to_string())?;
        let sigma = self.sigma.to_metric(self.r, "sigma")?;
        let gamma = self.gamma.to_metric(self.n, "gamma")?;
        Ok((problem, sigma, gamma))
    }

    pub fn initial_point(&self) -> Result<tripd::problem::PrimalDualPoint, String> {
        let u = match &self.u0 {
            Some(v) if v.len() == self.r => DVector::from_vec(v.clone()),
            Some(v) => {
                return Err(format!(
                    "u0: expected {} entries, found {}",
                    self.r,
                    v.len()
                ))
            }
            None => DVector::zeros(self.r),
        };
        let x = match &self.x0 {
            Some(v) if v.len() == self.n => DVector::from_vec(v.clone()),
            Some(v) => {
                return Err(format!(
                    "x0: expected {} entries, found {}",
                    self.n,
                    v.len()
                ))
            }
            None => DVector::zeros(self.n),
        };
        Ok(tripd::problem::PrimalDualPoint::new(u, x))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub n: usize,
    pub r: usize,
    pub f: SmoothConfig,
    pub g: NonsmoothConfig,
    pub h: NonsmoothConfig,
    pub l: MapConfig,
    pub sigma: f64,
    pub tau: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeConfig {
    pub i: usize,
    pub j: usize,
    pub a_ij: MapConfig,
    pub a_ji: MapConfig,
    pub b: Vec<f64>,
    pub kappa: f64,
}

/// Multi-agent graph description for the dist/check-stepsizes commands.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub agents: Vec<AgentConfig>,
    pub edges: Vec<EdgeConfig>,
    #[serde(default)]
    pub x0: Option<Vec<Vec<f64>>>,
}

impl GraphConfig {
    pub fn build(&self) -> Result<AgentGraph, String> {
        let mut agents = Vec::with_capacity(self.agents.len());
        for (id, a) in self.agents.iter().enumerate() {
            agents.push(AgentSpec {
                id,
                n: a.n,
                r: a.r,
                f: a.f.build(a.n)?,
                g_prox: a.g.build_prox(a.n, "g")?,
                h_conj_prox: a.h.build_conjugate_prox(a.r, "h")?,
                l: a.l.build(a.r, a.n, "l")?,
                sigma: a.sigma,
                tau: a.tau,
            });
        }
        let mut edges = Vec::with_capacity(self.edges.len());
        for e in &self.edges {
            let ni = self
                .agents
                .get(e.i)
                .ok_or(format!("edge references missing agent {}", e.i))?
                .n;
            let nj = self
                .agents
                .get(e.j)
                .ok_or(format!("edge references missing agent {}", e.j))?
                .n;
            edges.push(EdgeConstraint {
                i: e.i,
                j: e.j,
                a_ij: e.a_ij.build(e.b.len(), ni, "a_ij")?,
                a_ji: e.a_ji.build(e.b.len(), nj, "a_ji")?,
                b: DVector::from_vec(e.b.clone()),
                kappa: e.kappa,
            });
        }
        AgentGraph::new(agents, edges).map_err(|e| e.to_string())
    }

    pub fn initial_x(&self) -> Result<Option<Vec<DVector<f64>>>, String> {
        match &self.x0 {
            None => Ok(None),
            Some(xs) => {
                if xs.len() != self.agents.len() {
                    return Err("x0 must hold one vector per agent".into());
                }
                Ok(Some(
                    xs.iter().map(|v| DVector::from_vec(v.clone())).collect(),
                ))
            }
        }
    }
}

/// Formation benchmark description.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormationConfig {
    pub m: usize,
    pub horizon: usize,
    #[serde(default = "default_modes")]
    pub modes: Vec<String>,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_budget")]
    pub max_transmissions: u64,
    #[serde(default = "default_target")]
    pub target_dist: f64,
    #[serde(default = "default_ref_eps")]
    pub reference_eps: f64,
    #[serde(default = "default_baseline_scale")]
    pub baseline_stepsize_scale: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_modes() -> Vec<String> {
    vec!["sync".into(), "async".into(), "baseline".into()]
}
fn default_p() -> f64 {
    0.5
}
fn default_budget() -> u64 {
    50_000
}
fn default_target() -> f64 {
    1e-6
}
fn default_ref_eps() -> f64 {
    1e-12
}
fn default_baseline_scale() -> f64 {
    10.0
}
