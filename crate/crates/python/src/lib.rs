//! Python bindings. Rationals cross the boundary as `fractions.Fraction`;
//! inputs also accept ints and `"num/den"` or decimal strings.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use hetfl_core::audit::{approximation_ratio, audit_group_strategyproof, DeviationSpace, Ratio};
use hetfl_core::io::{instance_digest, instance_from_json, instance_to_json};
use hetfl_core::search::{rd_closedform_ratio as closed_form, WorstCaseParams};
use hetfl_core::{corpus, reproduce as repro};
use hetfl_core::{
    expected_welfare, optimal_choice, Agent, InformationSetting, Instance, Lottery, Mechanism, Outcome, Preference,
    Rational, UtilityClass,
};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn fraction<'py>(py: Python<'py>, r: Rational) -> PyResult<Bound<'py, PyAny>> {
    py.import("fractions")?.getattr("Fraction")?.call1((r.numer(), r.denom()))
}

/// A ratio as a Fraction, or `math.inf`.
fn ratio<'py>(py: Python<'py>, r: Ratio) -> PyResult<Bound<'py, PyAny>> {
    match r {
        Ratio::Finite(v) => fraction(py, v),
        Ratio::Infinite => py.import("math")?.getattr("inf"),
    }
}

fn rational(obj: &Bound<'_, PyAny>) -> PyResult<Rational> {
    if let Ok(s) = obj.extract::<String>() {
        return s.parse().map_err(value_error);
    }
    if let Ok(i) = obj.extract::<i128>() {
        return Ok(Rational::from_integer(i));
    }
    if obj.hasattr("numerator")? && obj.hasattr("denominator")? {
        let n: i128 = obj.getattr("numerator")?.extract()?;
        let d: i128 = obj.getattr("denominator")?.extract()?;
        return Rational::try_new(n, d).ok_or_else(|| value_error("zero denominator"));
    }
    Err(value_error("expected a Fraction, an int or a rational string (floats are not exact)"))
}

fn mechanism(spec: &str) -> PyResult<Mechanism> {
    spec.parse().map_err(value_error)
}

fn outcome<'py>(py: Python<'py>, o: &Outcome) -> PyResult<Bound<'py, PyList>> {
    let items = o
        .placements()
        .iter()
        .map(|&(j, y)| Ok((j, fraction(py, y)?)))
        .collect::<PyResult<Vec<_>>>()?;
    PyList::new(py, items)
}

fn lottery<'py>(py: Python<'py>, l: &Lottery) -> PyResult<Bound<'py, PyList>> {
    let items = l
        .support()
        .iter()
        .map(|(p, o)| Ok((fraction(py, *p)?, outcome(py, o)?)))
        .collect::<PyResult<Vec<_>>>()?;
    PyList::new(py, items)
}

/// An instance: agents on [0, 1] approving subsets of `m` facilities, `k`
/// of which are built.
#[pyclass(name = "Instance", module = "hetfl", frozen)]
struct PyInstance {
    inner: Instance,
}

#[pymethods]
impl PyInstance {
    /// `agents` is a list of `(position, [approved facilities])`.
    #[new]
    #[pyo3(signature = (agents, m = 2, k = 1, utility_class = "sum"))]
    fn new(agents: Vec<(Bound<'_, PyAny>, Vec<usize>)>, m: usize, k: usize, utility_class: &str) -> PyResult<Self> {
        let class: UtilityClass = utility_class.parse().map_err(value_error)?;
        let agents = agents
            .iter()
            .map(|(x, approve)| {
                let pref = Preference::new(approve.iter().copied()).map_err(value_error)?;
                Agent::new(rational(x)?, pref).map_err(value_error)
            })
            .collect::<PyResult<Vec<_>>>()?;
        Ok(PyInstance { inner: Instance::new(agents, m, k, class).map_err(value_error)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyInstance { inner: instance_from_json(text).map_err(value_error)? })
    }

    /// A named construction, e.g. `"fig2"` or `"km-nongsp:5:2"`.
    #[staticmethod]
    fn corpus(name: &str) -> PyResult<Self> {
        Ok(PyInstance { inner: corpus::resolve(name).map_err(value_error)? })
    }

    fn to_json(&self) -> String {
        instance_to_json(&self.inner)
    }

    fn digest(&self) -> String {
        instance_digest(&self.inner)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn utility_class(&self) -> String {
        self.inner.utility_class().to_string()
    }

    /// `[(position, [facilities]), ...]`
    #[getter]
    fn agents<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyList>> {
        let items = self
            .inner
            .agents()
            .iter()
            .map(|a| Ok((fraction(py, a.position)?, a.preference.facilities().collect::<Vec<_>>())))
            .collect::<PyResult<Vec<_>>>()?;
        PyList::new(py, items)
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("Instance({})", instance_to_json(&self.inner))
    }
}

/// Lottery and expected welfare: `{"lottery": [(p, [(facility, y)])], "expected_welfare": W}`.
#[pyfunction]
fn evaluate<'py>(py: Python<'py>, mechanism_name: &str, instance: &PyInstance) -> PyResult<Bound<'py, PyDict>> {
    let mech = mechanism(mechanism_name)?;
    let l = mech.apply(&instance.inner).map_err(value_error)?;
    let w = expected_welfare(&instance.inner, &l).map_err(value_error)?;
    let d = PyDict::new(py);
    d.set_item("mechanism", mech.to_string())?;
    d.set_item("lottery", lottery(py, &l)?)?;
    d.set_item("expected_welfare", fraction(py, w)?)?;
    Ok(d)
}

/// `(welfare, [(facility, y)])` of an optimal placement.
#[pyfunction]
fn optimal<'py>(py: Python<'py>, instance: &PyInstance) -> PyResult<(Bound<'py, PyAny>, Bound<'py, PyList>)> {
    let best = optimal_choice(&instance.inner);
    Ok((fraction(py, best.welfare)?, outcome(py, &best.outcome)?))
}

/// Optimal over expected welfare; `math.inf` when the mechanism gets 0.
#[pyfunction]
#[pyo3(name = "ratio")]
fn ratio_of<'py>(py: Python<'py>, mechanism_name: &str, instance: &PyInstance) -> PyResult<Bound<'py, PyDict>> {
    let mech = mechanism(mechanism_name)?;
    let report = approximation_ratio(&mech, &instance.inner).map_err(value_error)?;
    let d = PyDict::new(py);
    d.set_item("ratio", ratio(py, report.ratio)?)?;
    d.set_item("mechanism_welfare", fraction(py, report.mechanism_welfare)?)?;
    d.set_item("optimal_welfare", fraction(py, report.optimal_welfare)?)?;
    d.set_item("within_bound", mech.proven_bound().map(|b| report.within(b)))?;
    Ok(d)
}

/// Misreport enumeration. Agents in violations are numbered from 1.
#[pyfunction]
#[pyo3(signature = (mechanism_name, instance, setting = "general", grid = 10, max_coalition = 1))]
fn audit<'py>(
    py: Python<'py>,
    mechanism_name: &str,
    instance: &PyInstance,
    setting: &str,
    grid: u32,
    max_coalition: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let mech = mechanism(mechanism_name)?;
    let setting: InformationSetting = setting.parse().map_err(value_error)?;
    if grid == 0 || max_coalition == 0 {
        return Err(value_error("grid and max_coalition must be positive"));
    }
    let space = DeviationSpace::new(setting, grid);
    let report = py
        .detach(|| audit_group_strategyproof(&mech, &instance.inner, &space, max_coalition))
        .map_err(value_error)?;
    let violations = report
        .violations
        .iter()
        .map(|v| {
            let d = PyDict::new(py);
            d.set_item("coalition", v.coalition.iter().map(|i| i + 1).collect::<Vec<_>>())?;
            let reports = v
                .misreports
                .iter()
                .map(|a| Ok((fraction(py, a.position)?, a.preference.facilities().collect::<Vec<_>>())))
                .collect::<PyResult<Vec<_>>>()?;
            d.set_item("misreports", reports)?;
            let before = v.truthful_utilities.iter().map(|u| fraction(py, *u)).collect::<PyResult<Vec<_>>>()?;
            let after = v.deviant_utilities.iter().map(|u| fraction(py, *u)).collect::<PyResult<Vec<_>>>()?;
            d.set_item("utility_before", before)?;
            d.set_item("utility_after", after)?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    let d = PyDict::new(py);
    d.set_item("verdict", report.verdict.to_string())?;
    d.set_item("deviations_checked", report.deviations_checked)?;
    d.set_item("violations", violations)?;
    Ok(d)
}

/// RD's ratio on the worst-case family with the given agent counts.
#[pyfunction]
fn rd_closedform_ratio<'py>(
    py: Python<'py>,
    alpha0: u32,
    alphax: u32,
    alpha1: u32,
    beta0: u32,
    beta1: u32,
    x: Bound<'py, PyAny>,
) -> PyResult<Bound<'py, PyAny>> {
    let params = WorstCaseParams::new(alpha0, alphax, alpha1, beta0, beta1, rational(&x)?);
    fraction(py, closed_form(&params).map_err(value_error)?)
}

/// Check table of a corpus construction: a list of dicts.
#[pyfunction]
fn reproduce<'py>(py: Python<'py>, name: &str) -> PyResult<Bound<'py, PyList>> {
    let rep = repro::reproduce(name).map_err(value_error)?;
    let rows = rep
        .checks
        .iter()
        .map(|c| {
            let d = PyDict::new(py);
            d.set_item("quantity", &c.quantity)?;
            d.set_item("relation", c.relation.to_string())?;
            d.set_item("expected", ratio(py, c.expected)?)?;
            d.set_item("computed", ratio(py, c.computed)?)?;
            d.set_item("holds", c.holds)?;
            d.set_item("note", c.note.clone())?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    PyList::new(py, rows)
}

#[pymodule]
fn hetfl(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInstance>()?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(optimal, m)?)?;
    m.add_function(wrap_pyfunction!(ratio_of, m)?)?;
    m.add_function(wrap_pyfunction!(audit, m)?)?;
    m.add_function(wrap_pyfunction!(rd_closedform_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(reproduce, m)?)?;
    m.add("CORPUS", corpus::NAMES.to_vec())?;
    Ok(())
}
