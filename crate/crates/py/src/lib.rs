//! Python bindings: layouts, the environment, memory parameters, trained
//! policies, statistics and benchmark runs.

use std::collections::BTreeMap;
use std::sync::Arc;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use scentnav::agent::load_checkpoint;
use scentnav::conditions::{generate_benchmark_layout, ConditionSpec, Study};
use scentnav::embedding::{scent_from_embeddings, EmbeddingTable};
use scentnav::experiments::{ExperimentConfig, Lab, Report};
use scentnav::metrics;
use scentnav::{Action, ConditionKind, Focus};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "MemoryParams", from_py_object)]
#[derive(Clone)]
struct PyMemoryParams {
    inner: scentnav::MemoryParams,
}

#[pymethods]
impl PyMemoryParams {
    #[new]
    #[pyo3(signature = (lambda_=None, b=None, a_s=None, a_v=None, a_c=None, theta=None, k_glob=None, sigma=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        lambda_: Option<f64>,
        b: Option<f64>,
        a_s: Option<f64>,
        a_v: Option<f64>,
        a_c: Option<f64>,
        theta: Option<f64>,
        k_glob: Option<usize>,
        sigma: Option<f64>,
    ) -> PyResult<Self> {
        let d = scentnav::MemoryParams::default();
        let inner = scentnav::MemoryParams {
            lambda: lambda_.unwrap_or(d.lambda),
            b: b.unwrap_or(d.b),
            a_s: a_s.unwrap_or(d.a_s),
            a_v: a_v.unwrap_or(d.a_v),
            a_c: a_c.unwrap_or(d.a_c),
            theta: theta.unwrap_or(d.theta),
            k_glob: k_glob.unwrap_or(d.k_glob),
            sigma: sigma.unwrap_or(d.sigma),
        };
        inner.validate().map_err(value_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn lambda_(&self) -> f64 {
        self.inner.lambda
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.inner.theta
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma
    }

    #[getter]
    fn k_glob(&self) -> usize {
        self.inner.k_glob
    }

    fn as_dict(&self) -> BTreeMap<&'static str, f64> {
        let p = &self.inner;
        BTreeMap::from([
            ("lambda", p.lambda),
            ("b", p.b),
            ("a_s", p.a_s),
            ("a_v", p.a_v),
            ("a_c", p.a_c),
            ("theta", p.theta),
            ("K_glob", p.k_glob as f64),
            ("sigma", p.sigma),
        ])
    }

    /// Strength of a trace with the given counts, age and true scent.
    fn strength(&self, views: u32, clicks: u32, age: u32, true_scent: f64) -> f64 {
        let t = scentnav::MemoryTrace {
            node: 0,
            last_seen: 0,
            views,
            clicks,
            revealed_scent: None,
        };
        t.strength(age, &self.inner, true_scent)
    }

    fn __repr__(&self) -> String {
        format!("MemoryParams({:?})", self.inner)
    }
}

#[pyclass(name = "Layout", frozen)]
struct PyLayout {
    inner: Arc<scentnav::Layout>,
}

#[pymethods]
impl PyLayout {
    #[staticmethod]
    #[pyo3(signature = (text, n_max=12))]
    fn from_json(text: &str, n_max: usize) -> PyResult<Self> {
        let inner = scentnav::Layout::from_json(text, n_max).map_err(value_err)?;
        Ok(Self { inner: Arc::new(inner) })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn target(&self) -> u32 {
        self.inner.target()
    }

    #[getter]
    fn root(&self) -> Vec<u32> {
        self.inner.root().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.nodes().len()
    }

    fn children(&self, node: u32) -> PyResult<Vec<u32>> {
        self.inner
            .node(node)
            .map(|n| n.children.clone())
            .ok_or_else(|| value_err(format!("node {node} not found")))
    }

    fn true_scent(&self, node: u32) -> PyResult<f64> {
        self.inner
            .node(node)
            .map(|n| n.true_scent)
            .ok_or_else(|| value_err(format!("node {node} not found")))
    }

    /// Fewest actions that leave `to` focused, starting from the layer
    /// opened by `path` with `focused` highlighted.
    #[pyo3(signature = (to, path=Vec::new(), focused=None))]
    fn action_path_cost(&self, to: u32, path: Vec<u32>, focused: Option<u32>) -> PyResult<u32> {
        self.inner
            .action_path_cost(&Focus { path, focused }, to)
            .map_err(value_err)
    }
}

/// Benchmark layout for a condition name such as `"low_scent"` or
/// `"depth:4x4x4"`.
#[pyfunction]
#[pyo3(signature = (condition, goal=0, seed=0))]
fn generate_layout(condition: &str, goal: u8, seed: u64) -> PyResult<PyLayout> {
    let kind: ConditionKind = condition.parse().map_err(value_err)?;
    let layout = generate_benchmark_layout(&ConditionSpec {
        kind,
        goal_index: goal,
        seed,
    })
    .map_err(value_err)?;
    Ok(PyLayout {
        inner: Arc::new(layout),
    })
}

#[pyclass(name = "Env")]
struct PyEnv {
    inner: scentnav::Env,
}

#[pymethods]
impl PyEnv {
    #[new]
    #[pyo3(signature = (layout, params=None, t_max=100))]
    fn new(layout: &PyLayout, params: Option<PyMemoryParams>, t_max: u32) -> Self {
        let cfg = scentnav::EnvConfig {
            t_max,
            n_max: layout.inner.n_max(),
            ..Default::default()
        };
        let p = params.map_or_else(scentnav::MemoryParams::default, |p| p.inner);
        Self {
            inner: scentnav::Env::new(layout.inner.clone(), cfg, p),
        }
    }

    /// Starts an episode and returns the observation features.
    #[pyo3(signature = (seed=0))]
    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.inner.reset(seed).features()
    }

    fn legal_actions(&self) -> Vec<bool> {
        self.inner.legal_actions()
    }

    #[getter]
    fn n_actions(&self) -> usize {
        Action::count(self.inner.config().n_max)
    }

    /// Applies an action index; returns `(features, reward, done, success)`.
    fn step(&mut self, action: usize) -> PyResult<(Vec<f64>, f64, bool, bool)> {
        let a = Action::from_index(action, self.inner.config().n_max)
            .ok_or_else(|| value_err(format!("action index {action} out of range")))?;
        let out = self.inner.step(a).map_err(value_err)?;
        Ok((out.observation.features(), out.reward, out.done, out.info.success))
    }
}

#[pyclass(name = "Policy", frozen)]
struct PyPolicy {
    inner: scentnav::Policy,
}

#[pymethods]
impl PyPolicy {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let ck = load_checkpoint(std::path::Path::new(path)).map_err(|e| PyIOError::new_err(e.to_string()))?;
        Ok(Self { inner: ck.policy })
    }

    /// Action probabilities and state value.
    fn forward(&self, features: Vec<f64>, mask: Vec<bool>) -> PyResult<(Vec<f64>, f64)> {
        self.inner.forward(&features, &mask).map_err(value_err)
    }

    /// Most probable legal action.
    fn greedy(&self, features: Vec<f64>, mask: Vec<bool>) -> PyResult<usize> {
        let (probs, _) = self.inner.forward(&features, &mask).map_err(value_err)?;
        Ok(probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("non-empty action space"))
    }
}

#[pyfunction]
fn lostness(total: usize, distinct: usize, required: usize) -> PyResult<f64> {
    metrics::lostness(total, distinct, required).map_err(value_err)
}

/// Two-sided Mann-Whitney U test; returns `{"u", "z", "p_value"}`.
#[pyfunction]
fn mann_whitney(a: Vec<f64>, b: Vec<f64>) -> PyResult<BTreeMap<&'static str, f64>> {
    let c = metrics::mann_whitney(&a, &b).map_err(value_err)?;
    Ok(BTreeMap::from([("u", c.u), ("z", c.z), ("p_value", c.p_value)]))
}

/// Cosine scent between two labels of an embedding file's JSON text.
#[pyfunction]
fn embedding_scent(embeddings_json: &str, goal: &str, option: &str) -> PyResult<f64> {
    let table = EmbeddingTable::from_json(embeddings_json).map_err(value_err)?;
    scent_from_embeddings(goal, option, &table).map_err(value_err)
}

/// Trains and evaluates one study. Returns mean steps and success rate per
/// condition.
#[pyfunction]
#[pyo3(signature = (study, config_toml=None, episodes=None, seed=None))]
fn run_benchmark(
    py: Python<'_>,
    study: &str,
    config_toml: Option<&str>,
    episodes: Option<usize>,
    seed: Option<u64>,
) -> PyResult<BTreeMap<String, (f64, f64)>> {
    let study: Study = study.parse().map_err(value_err)?;
    let mut cfg = match config_toml {
        Some(t) => ExperimentConfig::from_toml(t).map_err(value_err)?,
        None => ExperimentConfig::default(),
    };
    if let Some(n) = episodes {
        cfg.study.episodes = n;
    }
    if let Some(s) = seed {
        cfg.study.seed = s;
        cfg.train.seed = s;
    }
    let report = py
        .detach(|| {
            let cells = Lab::new(cfg).run_study(study)?;
            Report::from_cells(study, &cells)
        })
        .map_err(value_err)?;
    Ok(study
        .conditions()
        .into_iter()
        .map(|k| {
            (
                k.name().to_owned(),
                (
                    report.mean(k, "steps").unwrap_or(f64::NAN),
                    report.mean(k, "success").unwrap_or(f64::NAN),
                ),
            )
        })
        .collect())
}

#[pymodule]
#[pyo3(name = "scentnav")]
fn scentnav_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMemoryParams>()?;
    m.add_class::<PyLayout>()?;
    m.add_class::<PyEnv>()?;
    m.add_class::<PyPolicy>()?;
    m.add_function(wrap_pyfunction!(generate_layout, m)?)?;
    m.add_function(wrap_pyfunction!(lostness, m)?)?;
    m.add_function(wrap_pyfunction!(mann_whitney, m)?)?;
    m.add_function(wrap_pyfunction!(embedding_scent, m)?)?;
    m.add_function(wrap_pyfunction!(run_benchmark, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
