import json

import numpy as np
import pytest

import sosctl


def scalar_config(a, b):
    vertex = {"F": [[a]], "G": [[b]]}
    return {
        "system": {
            "dx": 1,
            "z": [[1]],
            "weights": {"kind": "bilinear-corner", "lower": [0], "upper": [1]},
            "vertices": [vertex, vertex],
            "theta": {"points": [[0.5]]},
            "x0": {"points": [[1.0]]},
        },
        "cost": {"q": [{"c": 1.0, "e": [2]}], "R": [[1.0]], "phi": [[2]], "Z": [[0]], "zeta": [[0]]},
        "measure": {"lo": -1.0, "hi": 1.0, "step": 0.25},
    }


@pytest.fixture(scope="module")
def benchmark():
    return sosctl.Session()


def test_vectorization_round_trips():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(3, 4))
    assert np.array_equal(sosctl.inv_vec(sosctl.vec(a), 3, 4), a)
    s = a[:, :3] + a[:, :3].T
    assert np.array_equal(sosctl.inv_vech(sosctl.vech(s)), s)
    with pytest.raises(sosctl.AsymmetricInput):
        sosctl.vech(np.array([[1.0, 2.0], [3.0, 4.0]]))


def test_benchmark_model():
    assert np.allclose(sosctl.benchmark_weights([0.1, 0.9]), [0.09, 0.81, 0.01, 0.09])
    assert np.allclose(sosctl.benchmark_drift([0.0, 0.0], [0.5, 0.5]), 0.0)


def test_initialization_is_certified(benchmark):
    assert benchmark.eps1 > 0 and benchmark.eps2 > 0
    assert np.linalg.eigvalsh(benchmark.P0).min() > 0
    assert benchmark.w0.shape == (12,)


def test_zero_iterations_return_initial_gain(benchmark):
    res = benchmark.synthesize("proposed", N=0)
    assert np.array_equal(res.controller.w, benchmark.w0)
    assert res.controller.has_certificate
    assert res.summary["iterations"] == 0


def test_short_run_and_simulation(benchmark):
    res = benchmark.synthesize("proposed", N=5)
    g = res.objective
    assert len(g) >= 2 and np.all(np.diff(g) <= 0)
    assert all(h["wolfe"] and h["p_pd"] and h["t_pd"] for h in res.history)
    u = res.controller(np.array([1.0, -1.0]))
    assert u.shape == (1,)
    again = sosctl.Controller(res.controller.to_json())
    assert np.array_equal(again(np.array([1.0, -1.0])), u)
    sim = benchmark.simulate(res, T=0.5)
    assert sim["n_cells"] == 128
    assert sim["n_diverged"] == 0


def test_custom_scalar_system():
    s = sosctl.Session(scalar_config(1.0, 1.0))
    res = s.synthesize("no-opt")
    # The certified gain places the closed-loop pole in the left half-plane.
    assert 1.0 + res.controller.w[0] < 0
    sim = s.simulate(res, T=20.0)
    assert sim["n_cells"] == 1 and sim["n_converged"] == 1


def test_errors_map_to_python_exceptions():
    with pytest.raises(sosctl.ConfigError):
        sosctl.Session({"optimizer": {"bogus": 1}})
    with pytest.raises(sosctl.Infeasible):
        sosctl.Session(scalar_config(1.0, 0.0))
    with pytest.raises(sosctl.ConfigError):
        sosctl.Session().synthesize("fastest")
    with pytest.raises(sosctl.SosctlError):
        sosctl.Controller(json.dumps({"format": "other"}))
