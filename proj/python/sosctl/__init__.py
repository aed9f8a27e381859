"""Python front end for the sosctl controller-synthesis toolkit."""

from __future__ import annotations

import json
from typing import Any

import numpy as np

from ._sosctl import (
    AsymmetricInput,
    ConfigError,
    Controller,
    DimensionMismatch,
    Infeasible,
    InfeasiblePoint,
    SosctlError,
    benchmark_drift,
    benchmark_weights,
    inv_vec,
    inv_vech,
    vec,
    vech,
)
from ._sosctl import _Session

MODES = ("proposed", "no-opt", "no-optimality", "no-stability")

__all__ = [
    "MODES",
    "AsymmetricInput",
    "ConfigError",
    "Controller",
    "DimensionMismatch",
    "Infeasible",
    "InfeasiblePoint",
    "Session",
    "SosctlError",
    "SynthesisResult",
    "benchmark_drift",
    "benchmark_weights",
    "inv_vec",
    "inv_vech",
    "vec",
    "vech",
]


class SynthesisResult:
    """Controller, run summary and per-iteration history of one mode."""

    def __init__(self, payload: dict[str, Any]):
        self.controller = Controller(json.dumps(payload["controller"]))
        self.controller_json: dict[str, Any] = payload["controller"]
        self.summary: dict[str, Any] = payload["summary"]
        self.history: list[dict[str, Any]] = payload["history"]

    @property
    def objective(self) -> np.ndarray:
        return np.array([h["g"] for h in self.history])


class Session:
    """Moments and initialization for one problem, shared across modes.

    ``config`` takes the same sections as the CLI configuration file; an
    empty config selects the built-in two-state benchmark.
    """

    def __init__(self, config: dict[str, Any] | None = None, moment_cache: str = ""):
        self._s = _Session(json.dumps(config or {}), moment_cache)

    @property
    def eps1(self) -> float:
        return self._s.eps1

    @property
    def eps2(self) -> float:
        return self._s.eps2

    @property
    def w0(self) -> np.ndarray:
        return self._s.w0

    @property
    def P0(self) -> np.ndarray:
        return self._s.P0

    @property
    def r0(self) -> np.ndarray:
        return self._s.r0

    def synthesize(self, mode: str = "proposed", N: int | None = None) -> SynthesisResult:
        return SynthesisResult(json.loads(self._s.synthesize(mode, N)))

    def simulate(self, controller: Controller | SynthesisResult, T: float | None = None) -> dict[str, Any]:
        if isinstance(controller, SynthesisResult):
            controller = controller.controller
        return json.loads(self._s.simulate(controller.to_json(), T))
