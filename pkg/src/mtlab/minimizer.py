"""Projected, preconditioned descent for ``J_eps`` and the ``eps -> 0`` continuation."""
from __future__ import annotations

import csv
import enum
import io
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidArgumentError, MTLabError, StagnationError
from .functional import (
    EIGHT_PI,
    ProblemSpec,
    el_residual,
    eval_J,
    residual_norm,
    tilde_mean,
)
from .green import robin_field
from .surface import (
    ScalarField,
    apply_laplacian,
    dirichlet_energy,
    distances_from,
    gradient_lq_norm,
    solve_shifted,
)

Q_NORMS = (1.2, 1.5, 1.8)
STABLE_RTOL = 0.02
WINDOW = 3


@dataclass(frozen=True)
class MinimizeOptions:
    tol_grad: float = 1e-8
    max_iter: int = 500
    step0: float = 1.0
    kappa: float = 1.0
    armijo_c: float = 1e-4
    min_step: float = 1e-16


@dataclass(frozen=True, eq=False)
class MinimizerResult:
    u: ScalarField
    J: float
    eps: float
    residual_norm: float
    iterations: int
    converged: bool
    line_search_backtracks: int
    J_history: tuple = ()

    def as_dict(self) -> dict:
        return {
            "J": self.J, "eps": self.eps, "residual_norm": self.residual_norm,
            "iterations": self.iterations, "converged": self.converged,
            "line_search_backtracks": self.line_search_backtracks,
        }


def project(spec: ProblemSpec, u: ScalarField) -> ScalarField:
    """Shift ``u`` onto the constraint set ``u~ = 0``."""
    return u - tilde_mean(spec, u)


def _delta_J(spec, u, lap_u, he, d, t, eps):
    """``J(u + t d) - J(u)`` without cancellation.

    ``he`` is ``h e^(u - max u)`` normalized to unit integral.
    """
    w = spec.mesh.area_weights
    coef = EIGHT_PI * (1.0 - eps)
    dir_ = -t * np.dot(lap_u * d, w) + 0.5 * t * t * dirichlet_energy(spec.mesh, spec.mesh.field(d))
    lin = coef * t * np.dot(spec.psi.values * d, w) / spec.psi_integral
    td = t * d
    shift = float(np.max(td))
    # log int he e^{td}, split so the exponent never overflows
    if shift > 1.0:
        log_ratio = shift + np.log(np.dot(he * np.exp(td - shift), w))
    else:
        log_ratio = np.log1p(np.dot(he * np.expm1(td), w))
    return float(dir_ + lin - coef * log_ratio)


def minimize(
    spec: ProblemSpec,
    eps: float,
    init: Optional[ScalarField] = None,
    opts: MinimizeOptions = MinimizeOptions(),
) -> MinimizerResult:
    """Minimize ``J_eps`` over ``{u~ = 0}``.

    Each step solves ``(-Delta + kappa) d = -grad J`` and backtracks (halving)
    from ``step0`` until the Armijo condition holds.

    Raises
    ------
    StagnationError
        If the step falls below ``opts.min_step``; ``best`` holds the last
        accepted iterate as a :class:`MinimizerResult`.
    """
    if not 0.0 < eps < 1.0:
        raise InvalidArgumentError(f"eps must lie in (0, 1), got {eps}")
    mesh = spec.mesh
    u = project(spec, mesh.constant(0.0) if init is None else init)
    w = mesh.area_weights
    J = eval_J(spec, u, eps).J
    hist = [J]
    backtracks = 0
    it = 0
    while True:
        g = el_residual(spec, u, eps)
        rn = residual_norm(spec, g)
        if rn <= opts.tol_grad or it >= opts.max_iter:
            break
        d = -solve_shifted(mesh, g.values, opts.kappa)
        slope = float(np.dot(g.values * d, w))
        uv = u.values
        he = spec.h.values * np.exp(uv - np.max(uv))
        he = he / np.dot(he, w)
        lap_u = apply_laplacian(mesh, u).values
        t = opts.step0
        while _delta_J(spec, u, lap_u, he, d, t, eps) > opts.armijo_c * t * slope:
            t *= 0.5
            backtracks += 1
            if t < opts.min_step:
                best = MinimizerResult(u, J, eps, rn, it, False, backtracks, tuple(hist))
                raise StagnationError(
                    f"line search failed at iteration {it} (residual {rn:.3e})", best
                )
        u = project(spec, u + t * d)
        J = eval_J(spec, u, eps).J
        hist.append(J)
        it += 1
    return MinimizerResult(u, J, eps, rn, it, rn <= opts.tol_grad, backtracks, tuple(hist))


# ---------------------------------------------------------------- continuation


class Verdict(str, enum.Enum):
    ATTAINED = "Attained"
    BLOWUP = "Blowup"
    UNDECIDED = "Undecided"


def blowup_infimum(M: float) -> float:
    """``-8 pi - 8 pi log pi - 4 pi M``."""
    return -8.0 * np.pi - 8.0 * np.pi * np.log(np.pi) - 4.0 * np.pi * M


def attainment_gap(spec: ProblemSpec, result: MinimizerResult, M: float) -> float:
    """Blowup value minus the attained energy; positive means the minimizer beats blowup."""
    if not result.converged:
        raise InvalidArgumentError("attainment gap needs a converged minimizer")
    return blowup_infimum(M) - result.J


def mass_radius(spec: ProblemSpec, u: ScalarField, center: int, fraction: float = 0.5) -> float:
    """Smallest geodesic radius about ``center`` holding ``fraction`` of ``int h e^u``."""
    uv = spec.mesh.check(u)
    d = distances_from(spec.mesh, center)
    m = spec.h.values * np.exp(uv - np.max(uv)) * spec.mesh.area_weights
    order = np.argsort(d, kind="stable")
    cum = np.cumsum(m[order])
    k = int(np.searchsorted(cum, fraction * cum[-1]))
    return float(d[order][min(k, d.size - 1)])


@dataclass
class EpsRecord:
    eps: float
    J: float = float("nan")
    c_eps: float = float("nan")
    x_eps: int = -1
    lambda_eps: float = float("nan")
    grad_l2_sq: float = float("nan")
    grad_q_norms: dict = field(default_factory=dict)
    mass_radius: float = float("nan")
    residual_norm: float = float("nan")
    iterations: int = 0
    converged: bool = False
    error: Optional[str] = None

    def as_dict(self) -> dict:
        out = dict(self.__dict__)
        out["grad_q_norms"] = {format(q, "g"): v for q, v in self.grad_q_norms.items()}
        return out


CSV_COLUMNS = (
    "eps", "J", "c_eps", "lambda_eps", "grad_l2_sq",
    "grad_q_1_2", "grad_q_1_5", "grad_q_1_8", "mass_radius", "converged",
)


def _g17(x) -> str:
    return format(float(x), ".17g")


@dataclass
class ContinuationReport:
    records: list
    verdict: Verdict
    M: float
    blowup_infimum: float
    resolution: int
    policy: dict

    def to_json(self) -> str:
        doc = {
            "records": [r.as_dict() for r in self.records],
            "verdict": self.verdict.value,
            "M": self.M,
            "blowup_infimum": self.blowup_infimum,
            "resolution": self.resolution,
            "policy": self.policy,
        }
        return json.dumps(doc, sort_keys=True, indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(CSV_COLUMNS)
        for r in self.records:
            q = [r.grad_q_norms.get(k, float("nan")) for k in Q_NORMS]
            wr.writerow(
                [_g17(r.eps), _g17(r.J), _g17(r.c_eps), _g17(r.lambda_eps), _g17(r.grad_l2_sq),
                 *map(_g17, q), _g17(r.mass_radius), int(r.converged)]
            )
        return buf.getvalue()


def classify(records: Sequence[EpsRecord], tol_grad: float) -> Verdict:
    """Finite-eps reading of the attained/blowup dichotomy.

    Attained: ``grad_l2_sq`` of the last three records agree within 2% and the
    final record is converged. Blowup: ``grad_l2_sq`` strictly increasing and
    ``mass_radius`` strictly decreasing over the last three records.
    """
    ok = [r for r in records if r.error is None]
    if len(ok) < WINDOW or len(ok) != len(records):
        return Verdict.UNDECIDED
    last = ok[-WINDOW:]
    g = np.array([r.grad_l2_sq for r in last])
    rad = np.array([r.mass_radius for r in last])
    if np.ptp(g) <= STABLE_RTOL * np.max(np.abs(g)) + 1e-12 and last[-1].residual_norm <= tol_grad:
        return Verdict.ATTAINED
    if np.all(np.diff(g) > 0) and np.all(np.diff(rad) < 0):
        return Verdict.BLOWUP
    return Verdict.UNDECIDED


def make_record(spec: ProblemSpec, res: MinimizerResult) -> EpsRecord:
    u = res.u
    uv = u.values
    x = int(np.argmax(uv))
    fv = eval_J(spec, u, res.eps)
    return EpsRecord(
        eps=res.eps,
        J=res.J,
        c_eps=float(uv[x]),
        x_eps=x,
        lambda_eps=fv.lam,
        grad_l2_sq=dirichlet_energy(spec.mesh, u),
        grad_q_norms={q: gradient_lq_norm(spec.mesh, u, q) for q in Q_NORMS},
        mass_radius=mass_radius(spec, u, x),
        residual_norm=res.residual_norm,
        iterations=res.iterations,
        converged=res.converged,
    )


def continuation(
    spec: ProblemSpec,
    eps_schedule: Sequence[float],
    opts: MinimizeOptions = MinimizeOptions(),
    init: Optional[ScalarField] = None,
    M: Optional[float] = None,
    threads: int = 1,
) -> ContinuationReport:
    """Warm-started minimization along a strictly decreasing ``eps`` schedule.

    ``M`` (the maximum of ``2 log h + A_y``) is computed with
    :func:`mtlab.green.robin_field` on its default samples when not given.
    """
    sched = [float(e) for e in eps_schedule]
    if not sched or any(not 0.0 < e < 1.0 for e in sched) or any(
        b >= a for a, b in zip(sched, sched[1:])
    ):
        raise InvalidArgumentError("eps schedule must be strictly decreasing in (0, 1)")
    records = []
    u = init
    for e in sched:
        try:
            res = minimize(spec, e, u, opts)
        except MTLabError as exc:
            rec = EpsRecord(eps=e, error=f"{type(exc).__name__}: {exc}")
            best = getattr(exc, "best", None)
            if best is not None:
                u = best.u
            records.append(rec)
            continue
        records.append(make_record(spec, res))
        u = res.u
    if M is None:
        M = robin_field(spec.mesh, spec.psi, spec.h, h_zero_tol=spec.h_zero_tol, threads=threads).max_value
    policy = {"window": WINDOW, "stable_rtol": STABLE_RTOL, "tol_grad": opts.tol_grad}
    return ContinuationReport(
        records, classify(records, opts.tol_grad), float(M), blowup_infimum(M),
        spec.mesh.resolution, policy,
    )
