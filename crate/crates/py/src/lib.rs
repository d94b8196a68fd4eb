//! Python bindings. Reports come back as plain dicts (via JSON), batches as
//! lists of rows, so the module needs nothing beyond the standard library.

use cascade::conditions::{check_alpha_moment, check_complex, check_harmonic, exponential_profile};
use cascade::engine::{Caps, SampleBatch, Simulator, DEFAULT_POPULATION_CAP};
use cascade::estimate::{
    batch_mean, decay_curve, estimate_harmonic, estimate_moment, fit_power_decay,
    fit_stretched_exponential, fixed_point_check, laplace_ray, FixedPointVariant, Target,
};
use cascade::mbrw::{build_cascade_from_mbrw, MbrwSpec};
use cascade::{fixtures, spectral, CascadeModel, Field, Matrix};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

fn err(e: cascade::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn matrix_from(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    Matrix::from_rows(&rows)
        .ok_or_else(|| PyValueError::new_err("matrix must be square and non-empty"))
}

/// A cascade model: the law of `(N, A_1, A_2, …)`.
#[pyclass(name = "Model", frozen)]
struct PyModel {
    inner: CascadeModel,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        CascadeModel::from_json_str(text)
            .map(|inner| PyModel { inner })
            .map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        cascade::load_model(path)
            .map(|inner| PyModel { inner })
            .map_err(err)
    }

    /// One of `"a"`, `"b"`, `"c"`, `"d2"`, `"e"`, `"random-phase"`.
    #[staticmethod]
    fn builtin(name: &str) -> PyResult<Self> {
        let inner = match name.to_ascii_lowercase().as_str() {
            "a" => fixtures::model_a(),
            "b" => fixtures::model_b(),
            "c" => fixtures::model_c(),
            "d2" => fixtures::model_d2(),
            "e" => fixtures::model_e(),
            "random-phase" => fixtures::random_phase_model(),
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown builtin model {other:?}"
                )))
            }
        };
        Ok(PyModel { inner })
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p()
    }

    #[getter]
    fn is_complex(&self) -> bool {
        self.inner.field() == Field::Complex
    }

    fn to_json(&self) -> String {
        self.inner.to_json_string()
    }

    fn mean_matrix(&self) -> Vec<Vec<f64>> {
        self.inner.mean_matrix().0.rows()
    }

    fn normalized(&self) -> PyResult<Self> {
        cascade::normalize_model(&self.inner)
            .map(|inner| PyModel { inner })
            .map_err(err)
    }

    fn validate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &cascade::validate_model(&self.inner))
    }

    fn moment_matrix(&self, t: f64) -> PyResult<Vec<Vec<f64>>> {
        spectral::moment_matrix(&self.inner, t)
            .map(|m| m.rows())
            .map_err(err)
    }

    #[pyo3(signature = (t, n))]
    fn n_step_moment_matrix(&self, t: f64, n: usize) -> PyResult<Vec<Vec<f64>>> {
        spectral::n_step_moment_matrix(&self.inner, t, n)
            .map(|m| m.rows())
            .map_err(err)
    }

    fn rho(&self, t: f64) -> PyResult<f64> {
        spectral::rho(&self.inner, t).map_err(err)
    }

    #[pyo3(signature = (alpha, n_max=3))]
    fn check_alpha_moment<'py>(
        &self,
        py: Python<'py>,
        alpha: f64,
        n_max: usize,
    ) -> PyResult<Bound<'py, PyAny>> {
        to_py(
            py,
            &check_alpha_moment(&self.inner, alpha, n_max).map_err(err)?,
        )
    }

    fn check_harmonic<'py>(&self, py: Python<'py>, lambda_: f64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &check_harmonic(&self.inner, lambda_).map_err(err)?)
    }

    fn exponential_profile<'py>(
        &self,
        py: Python<'py>,
        epsilon: f64,
    ) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &exponential_profile(&self.inner, epsilon).map_err(err)?)
    }

    #[pyo3(signature = (alpha, beta_grid=vec![1.5, 2.0]))]
    fn check_complex<'py>(
        &self,
        py: Python<'py>,
        alpha: f64,
        beta_grid: Vec<f64>,
    ) -> PyResult<Bound<'py, PyAny>> {
        to_py(
            py,
            &check_complex(&self.inner, alpha, &beta_grid).map_err(err)?,
        )
    }

    /// Draws `replicates` copies of `Y_n`; `tilt` switches to the tilted martingale.
    #[pyo3(signature = (n, replicates, seed, cap=DEFAULT_POPULATION_CAP, tilt=None))]
    fn simulate(
        &self,
        py: Python<'_>,
        n: usize,
        replicates: usize,
        seed: u64,
        cap: usize,
        tilt: Option<f64>,
    ) -> PyResult<Batch> {
        let caps = Caps { population: cap };
        let model = &self.inner;
        let batch = py
            .detach(|| match (model.field(), tilt) {
                (Field::Complex, None) => Simulator::complex(model)?
                    .with_caps(caps)
                    .batch(n, replicates, seed),
                (Field::Complex, Some(_)) => Err(cascade::Error::InvalidArgument(
                    "tilted runs need a real model".into(),
                )),
                (_, Some(t)) => Simulator::tilted(model, t)?
                    .with_caps(caps)
                    .batch(n, replicates, seed),
                (_, None) => Simulator::new(model)?
                    .with_caps(caps)
                    .batch(n, replicates, seed),
            })
            .map_err(err)?;
        Ok(Batch { inner: batch })
    }

    #[pyo3(signature = (n, replicates, seed, mutate=false))]
    fn fixed_point_check<'py>(
        &self,
        py: Python<'py>,
        n: usize,
        replicates: usize,
        seed: u64,
        mutate: bool,
    ) -> PyResult<Bound<'py, PyAny>> {
        let variant = if mutate {
            FixedPointVariant::SkipRootWeights
        } else {
            FixedPointVariant::Correct
        };
        let model = &self.inner;
        let report = py
            .detach(|| fixed_point_check(model, n, replicates, seed, Caps::default(), variant))
            .map_err(err)?;
        to_py(py, &report)
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(p={}, id={})",
            self.inner.p(),
            &self.inner.model_id()[..12]
        )
    }
}

/// Replicated draws of `Y_n`.
#[pyclass(name = "Batch", frozen)]
struct Batch {
    inner: SampleBatch,
}

#[pymethods]
impl Batch {
    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn replicates(&self) -> usize {
        self.inner.replicates()
    }

    #[getter]
    fn extinct(&self) -> usize {
        self.inner.extinct_count()
    }

    #[getter]
    fn cap_breaches(&self) -> usize {
        self.inner.cap_breaches()
    }

    /// Usable rows; complex entries come back as Python complex numbers.
    fn rows<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        match self.inner.field() {
            Field::Complex => {
                let rows: Vec<Vec<num_complex::Complex64>> = self
                    .inner
                    .complex_rows()
                    .map_err(err)?
                    .into_iter()
                    .map(<[_]>::to_vec)
                    .collect();
                rows.into_pyobject(py).map(Bound::into_any)
            }
            _ => {
                let rows: Vec<Vec<f64>> = self
                    .inner
                    .real_rows()
                    .map_err(err)?
                    .into_iter()
                    .map(<[_]>::to_vec)
                    .collect();
                rows.into_pyobject(py).map(Bound::into_any)
            }
        }
    }

    /// `[(mean, stderr), …]` per coordinate (real batches).
    fn mean(&self) -> PyResult<Vec<(f64, f64)>> {
        batch_mean(&self.inner).map_err(err)
    }

    fn moment<'py>(&self, py: Python<'py>, alpha: f64) -> PyResult<Bound<'py, PyAny>> {
        to_py(
            py,
            &estimate_moment(&self.inner, alpha, Target::Norm).map_err(err)?,
        )
    }

    fn harmonic<'py>(
        &self,
        py: Python<'py>,
        lambda_: f64,
        y: Vec<f64>,
    ) -> PyResult<Bound<'py, PyAny>> {
        to_py(
            py,
            &estimate_harmonic(&self.inner, lambda_, &y).map_err(err)?,
        )
    }

    /// `[(‖t‖₁, φ̂)]` along the ray `s·y`.
    fn laplace(&self, y: Vec<f64>, s_grid: Vec<f64>) -> PyResult<Vec<(f64, f64)>> {
        laplace_ray(&self.inner, &y, &s_grid)
            .map(|c| decay_curve(&c))
            .map_err(err)
    }

    /// Power and stretched-exponential fits of a Laplace curve.
    fn decay_fits<'py>(
        &self,
        py: Python<'py>,
        y: Vec<f64>,
        s_grid: Vec<f64>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let curve = decay_curve(&laplace_ray(&self.inner, &y, &s_grid).map_err(err)?);
        let r = self.inner.replicates() - self.inner.cap_breaches();
        let out = PyDict::new(py);
        for (name, fit) in [
            ("power", fit_power_decay(&curve, r)),
            ("stretched", fit_stretched_exponential(&curve, r)),
        ] {
            match fit {
                Ok(f) => out.set_item(name, to_py(py, &f)?)?,
                Err(e) => out.set_item(name, e.to_string())?,
            }
        }
        Ok(out)
    }

    fn write_dir(&self, path: &str) -> PyResult<()> {
        self.inner.write_dir(path).map_err(err)
    }
}

/// Perron root and normalized eigenvectors of a primitive nonnegative matrix.
#[pyfunction]
fn perron(rows: Vec<Vec<f64>>) -> PyResult<(f64, Vec<f64>, Vec<f64>)> {
    let t = spectral::perron(&matrix_from(rows)?).map_err(err)?;
    Ok((t.rho, t.u, t.v))
}

/// Cascade of a multitype branching random walk spec (JSON text) tilted at `t`.
#[pyfunction]
fn mbrw_cascade(spec_json: &str, t: f64) -> PyResult<PyModel> {
    let spec = MbrwSpec::from_json_str(spec_json).map_err(err)?;
    build_cascade_from_mbrw(&spec, t)
        .map(|inner| PyModel { inner })
        .map_err(err)
}

#[pymodule]
#[pyo3(name = "mcascade")]
fn mcascade_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<Batch>()?;
    m.add_function(wrap_pyfunction!(perron, m)?)?;
    m.add_function(wrap_pyfunction!(mbrw_cascade, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
