"""Reusable numerical check harnesses (gradient check, inequality property suite)."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .blowup import build_test_function, test_function_params
from .errors import MTLabError
from .fields import random_bandlimited
from .functional import ProblemSpec, el_residual, eval_J, mt_ratio
from .green import green_expansion
from .surface import ScalarField, integrate

SHARP = 1.0 / (16.0 * np.pi)


@dataclass(frozen=True)
class GradientCheck:
    exact: float
    steps: tuple
    fd: tuple
    rel_errors: tuple

    @property
    def orders(self) -> np.ndarray:
        """Observed convergence orders between successive steps."""
        e = np.asarray(self.rel_errors)
        t = np.asarray(self.steps)
        return np.log(e[:-1] / e[1:]) / np.log(t[:-1] / t[1:])


def gradient_check(
    spec: ProblemSpec, u: ScalarField, v: ScalarField, eps: float,
    steps: Sequence[float] = (1e-2, 1e-3, 1e-4),
) -> GradientCheck:
    """Central differences of ``J_eps`` along ``v`` against ``<grad J_eps, v>``."""
    exact = integrate(spec.mesh, el_residual(spec, u, eps) * v)
    fd, err = [], []
    for t in steps:
        d = (eval_J(spec, u + t * v, eps).J - eval_J(spec, u - t * v, eps).J) / (2.0 * t)
        fd.append(d)
        err.append(abs(d - exact) / abs(exact))
    return GradientCheck(exact, tuple(steps), tuple(fd), tuple(err))


@dataclass
class MTSuite:
    random_values: np.ndarray
    bubble_eps: list
    bubble_values: list  # nan where the construction failed
    weakened_values: list
    errors: dict = field(default_factory=dict)

    @property
    def bound(self) -> float:
        """Largest observed ratio (the recorded constant ``B``)."""
        vals = np.concatenate([self.random_values, np.asarray(self.bubble_values, dtype=float)])
        return float(np.nanmax(vals))

    @property
    def weakened_increments(self) -> np.ndarray:
        """Growth of the weakened ratio per decade of ``eps``."""
        e = np.log10(np.asarray(self.bubble_eps))
        w = np.asarray(self.weakened_values, dtype=float)
        return (w[1:] - w[:-1]) / (e[:-1] - e[1:])

    def rows(self):
        for i, v in enumerate(self.random_values):
            yield ("random", i, float("nan"), float(v), float("nan"), "")
        for i, (e, v, w) in enumerate(zip(self.bubble_eps, self.bubble_values, self.weakened_values)):
            yield ("bubble", i, e, v, w, self.errors.get(e, ""))


def mt_suite(
    spec: ProblemSpec,
    num_fields: int = 1000,
    amplitude: float = 5.0,
    bandlimit: int = 4,
    eps_list: Sequence[float] = (1e-2, 1e-3, 1e-4, 1e-5),
    seed: int = 0,
    point: int = 0,
    weakening: float = 1.1,
) -> MTSuite:
    """Moser-Trudinger ratio over random fields and the test-function family.

    Failed test-function constructions (e.g. a neck wider than the chart)
    are recorded with ``nan`` and the error message.
    """
    rng = np.random.default_rng(seed)
    rand = np.array([
        mt_ratio(spec, random_bandlimited(spec.mesh, rng, amplitude * rng.uniform(), bandlimit))
        for _ in range(num_fields)
    ])
    G, ex = green_expansion(spec.mesh, spec.psi, point)
    bv, wv, errs = [], [], {}
    for e in eps_list:
        try:
            u = build_test_function(spec, test_function_params(spec, point, e, G, ex))
        except MTLabError as exc:
            errs[float(e)] = f"{type(exc).__name__}: {exc}"
            bv.append(float("nan"))
            wv.append(float("nan"))
            continue
        bv.append(mt_ratio(spec, u))
        wv.append(mt_ratio(spec, u, SHARP / weakening))
    return MTSuite(rand, [float(e) for e in eps_list], bv, wv, errs)
