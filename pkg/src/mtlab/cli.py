"""Config-driven command line front end.

Usage::

    mtlab run --config cfg.json [--set minimize.eps=0.05] [--out DIR] [--threads N]
    mtlab minimize --config cfg.json

A config holds ``surface``, ``psi``, ``h``, optional ``seed`` and
``output_dir``, and exactly one command block (``green``, ``robin_map``,
``minimize``, ``continuation``, ``sweep``, ``mt_check``, ``condition``,
``bubble_check``). Exit codes: 0 success, 2 configuration error, 3 numerical
failure; errors are also written to stderr as JSON.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .blowup import (
    asymptotic_bracket,
    blowup_constant,
    bubble_mass,
    bubble_mass_quadrature,
    bubble_pde_residual,
    condition_margin,
    observed_orders,
    point_data,
    sweep,
)
from .checks import mt_suite
from .errors import InvalidArgumentError
from .expr import expression_eval, expression_grid_eval
from .fields import random_bandlimited
from .functional import ProblemSpec, el_residual, residual_norm
from .green import default_samples, green_expansion, robin_field
from .minimizer import MinimizeOptions, blowup_infimum, continuation, minimize
from .surface import Backend, build_icosphere, build_torus, integrate
from .surface.mesh import _is_power_of_two, torus_coordinates

COMMANDS = (
    "green", "robin-map", "minimize", "continuation", "sweep", "mt-check", "condition", "bubble-check",
)
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(InvalidArgumentError):
    pass


def _block_name(cmd: str) -> str:
    return cmd.replace("-", "_")


def _g17(x) -> str:
    return format(float(x), ".17g")


# ------------------------------------------------------------------- config


def parse_override(text: str):
    if "=" not in text:
        raise ConfigError(f"--set expects key=value, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        val = json.loads(raw)
    except json.JSONDecodeError:
        val = raw
    return key.strip(), val


def apply_overrides(cfg: dict, overrides) -> dict:
    cfg = copy.deepcopy(cfg)
    for text in overrides or ():
        key, val = parse_override(text)
        parts = key.split(".")
        node = cfg
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot set {key!r}: {p!r} is not a block")
        node[parts[-1]] = val
    return cfg


def command_of(cfg: dict) -> str:
    present = [c for c in COMMANDS if _block_name(c) in cfg]
    if len(present) != 1:
        raise ConfigError(f"config must contain exactly one command block, found {present or 'none'}")
    return present[0]


def build_mesh(surface: dict):
    backend = surface.get("backend", Backend.SPECTRAL_TORUS.value)
    if backend in (Backend.SPECTRAL_TORUS.value, "torus"):
        n = surface.get("n", 64)
        phi = surface.get("phi_c", "0")
        if not isinstance(n, int):
            raise ConfigError("surface.n must be an integer")
        if not _is_power_of_two(n) or n < 16:
            raise ConfigError(f"grid size must be a power of two >= 16, got {n!r}")
        X, Y = torus_coordinates(n)
        return build_torus(n, expression_grid_eval(str(phi), X, Y))
    if backend in (Backend.TRIANGLE_MESH.value, "icosphere"):
        return build_icosphere(surface.get("level", 4))
    raise ConfigError(f"unknown surface backend {backend!r}")


def build_spec(cfg: dict) -> ProblemSpec:
    if "surface" not in cfg:
        raise ConfigError("config needs a surface block")
    mesh = build_mesh(cfg["surface"])
    psi = expression_eval(str(cfg.get("psi", "1")), mesh)
    h = expression_eval(str(cfg.get("h", "1")), mesh)
    return ProblemSpec(mesh, psi, h, cfg.get("h_zero_tol"))


def inputs_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


# ----------------------------------------------------------------- commands


class Outputs:
    """Collects artifact files so the manifest can list every one of them."""

    def __init__(self, root: Path):
        self.root = root
        self.files = []
        root.mkdir(parents=True, exist_ok=True)

    def write(self, name: str, text: str):
        with open(self.root / name, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        self.files.append(name)

    def json(self, name: str, doc):
        self.write(name, json.dumps(doc, sort_keys=True, indent=2, allow_nan=True) + "\n")

    def csv(self, name: str, header, rows):
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([_g17(v) if isinstance(v, (float, np.floating)) else v for v in row])
        self.write(name, buf.getvalue())


def _point(spec, block, key="point") -> int:
    p = int(block.get(key, 0))
    if not 0 <= p < spec.mesh.num_nodes:
        raise ConfigError(f"{key} must be a node index in [0, {spec.mesh.num_nodes})")
    return p


def cmd_green(spec, block, out: Outputs, threads):
    poles = block.get("samples")
    poles = [int(block.get("pole", 0))] if poles is None else [int(p) for p in poles]
    exps = []
    for y in poles:
        if not 0 <= y < spec.mesh.num_nodes:
            raise ConfigError(f"pole {y} out of range")
        G, ex = green_expansion(spec.mesh, spec.psi, y, block.get("annulus"))
        exps.append(ex.as_dict() | {"psi_G_integral": integrate(spec.mesh, spec.psi * G)})
    keys = ["pole", "A", "b1", "b2", "c1", "c2", "c3", "fit_rms", "r_in", "r_out"]
    out.csv("green.csv", keys, ([e[k] for k in keys] for e in exps))
    out.json("green.json", {"expansions": exps})


def cmd_robin_map(spec, block, out: Outputs, threads):
    samples = block.get("samples")
    if samples is None:
        samples = default_samples(spec.mesh, int(block.get("per_side", 8)))
    rf = robin_field(spec.mesh, spec.psi, spec.h, samples, spec.h_zero_tol, threads)
    out.write("robin.csv", rf.to_csv(spec.mesh))
    out.json("robin.json", {
        "argmax": rf.argmax, "M": rf.max_value, "blowup_infimum": blowup_infimum(rf.max_value),
        "num_samples": int(rf.samples.size), "num_in_Z": int(np.sum(rf.in_Z)),
    })


def _options(block) -> MinimizeOptions:
    d = MinimizeOptions()
    return MinimizeOptions(
        tol_grad=float(block.get("tol_grad", d.tol_grad)),
        max_iter=int(block.get("max_iter", d.max_iter)),
        step0=float(block.get("step0", d.step0)),
    )


def cmd_minimize(spec, block, out: Outputs, threads, seed):
    if "eps" not in block:
        raise ConfigError("minimize block needs eps")
    rng = np.random.default_rng(int(block.get("seed", seed)))
    amp = float(block.get("init_amplitude", 0.1))
    init = random_bandlimited(spec.mesh, rng, amp, int(block.get("bandlimit", 4)))
    res = minimize(spec, float(block["eps"]), init, _options(block))
    check = residual_norm(spec, el_residual(spec, res.u, res.eps))
    out.json("minimize.json", res.as_dict() | {
        "residual_recheck": check, "max_u": float(np.max(res.u.values)),
    })
    out.csv("minimize_history.csv", ["iteration", "J"], enumerate(res.J_history))


def cmd_continuation(spec, block, out: Outputs, threads, seed):
    sched = block.get("eps_schedule")
    if not sched:
        raise ConfigError("continuation block needs eps_schedule")
    rng = np.random.default_rng(int(block.get("seed", seed)))
    init = random_bandlimited(spec.mesh, rng, float(block.get("init_amplitude", 0.1)), 4)
    rep = continuation(spec, sched, _options(block), init, block.get("M"), threads)
    out.write("continuation.json", rep.to_json() + "\n")
    out.write("continuation.csv", rep.to_csv())


def cmd_sweep(spec, block, out: Outputs, threads):
    eps_list = block.get("eps_list", [1e-3, 1e-4, 1e-5])
    p = _point(spec, block)
    res = sweep(spec, p, eps_list, block.get("A"), threads)
    out.write("sweep.csv", res.to_csv())
    g = np.abs(res.gaps)
    out.json("sweep.json", {"point": p, "gap_abs_monotone": bool(np.all(np.diff(g) < 0))})


def cmd_mt_check(spec, block, out: Outputs, threads, seed):
    suite = mt_suite(
        spec,
        num_fields=int(block.get("num_random_fields", 1000)),
        amplitude=float(block.get("amplitude", 5.0)),
        bandlimit=int(block.get("bandlimit", 4)),
        eps_list=block.get("eps_list", [1e-2, 1e-3, 1e-4, 1e-5]),
        seed=int(block.get("seed", seed)),
        point=_point(spec, block),
    )
    out.csv("mt_check.csv", ["family", "index", "eps", "mt_ratio", "weakened_ratio", "error"], suite.rows())
    inc = suite.weakened_increments
    out.json("mt_check.json", {
        "B": suite.bound,
        "random_max": float(np.max(suite.random_values)),
        "bubble_values": suite.bubble_values,
        "weakened_increments_per_decade": inc.tolist(),
        "errors": {_g17(k): v for k, v in suite.errors.items()},
    })


def cmd_condition(spec, block, out: Outputs, threads):
    p = _point(spec, block)
    h_jet, psi_jet, ex, K_p, _ = point_data(spec, p)
    margin = condition_margin(spec, p, h_jet, ex, K_p, psi_jet)
    ratio = psi_jet.value / spec.psi_integral
    br = asymptotic_bracket(ratio, h_jet.value, h_jet.grad, h_jet.laplacian, ex.b, K_p)
    out.json("condition.json", {
        "point": p, "margin": margin, "bracket": br, "slope_coefficient": -16 * np.pi**2 * br,
        "h_p": h_jet.value, "grad_h": list(map(float, h_jet.grad)), "lap_h": h_jet.laplacian,
        "K_p": K_p, "psi_ratio": ratio, "A_p": ex.A, "b": list(ex.b),
        "energy_constant": blowup_constant(ex.A, h_jet.value),
    })


def cmd_bubble_check(spec, block, out: Outputs, threads):
    cases = block.get("cases", [[1.0, 1.0], [1.0, 5.0], [2.0, 3.0]])
    rows = []
    for h_p, R in cases:
        q, c = bubble_mass_quadrature(h_p, R), bubble_mass(h_p, R)
        rows.append((float(h_p), float(R), q, c, abs(q - c)))
    out.csv("bubble_mass.csv", ["h_p", "R", "quadrature", "closed_form", "abs_error"], rows)
    ns = block.get("grid_sizes", [100, 200, 400, 800])
    res = [bubble_pde_residual(1.0, float(block.get("R", 2.0)), int(n)) for n in ns]
    orders = [float("nan"), *observed_orders(res)]
    out.csv("bubble_residual.csv", ["intervals", "max_residual", "observed_order"],
            ((int(n), r, o) for n, r, o in zip(ns, res, orders)))


HANDLERS = {
    "green": cmd_green, "robin-map": cmd_robin_map, "minimize": cmd_minimize,
    "continuation": cmd_continuation, "sweep": cmd_sweep, "mt-check": cmd_mt_check,
    "condition": cmd_condition, "bubble-check": cmd_bubble_check,
}
SEEDED = {"minimize", "continuation", "mt-check"}


def run_config(cfg: dict, command: str | None = None, out_dir=None, threads: int = 1) -> Path:
    """Execute one config; returns the output directory."""
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    found = command_of(cfg)
    if command is not None and command != found:
        raise ConfigError(f"command {command!r} requested but config holds a {found!r} block")
    if threads < 1:
        raise ConfigError("--threads must be positive")
    seed = cfg.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    root = Path(out_dir or cfg.get("output_dir", "out"))
    t0 = time.perf_counter()
    spec = build_spec(cfg)
    t_build = time.perf_counter() - t0
    out = Outputs(root)
    block = cfg[_block_name(found)]
    if not isinstance(block, dict):
        raise ConfigError(f"{found} block must be an object")
    handler = HANDLERS[found]
    if found in SEEDED:
        handler(spec, block, out, threads, seed)
    else:
        handler(spec, block, out, threads)
    manifest = {
        "command": found,
        "inputs_hash": inputs_hash(cfg),
        "config": cfg,
        "seed": seed,
        "threads": threads,
        "versions": {
            "mtlab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "timings": {"build_s": t_build, "total_s": time.perf_counter() - t0},
        "files": sorted(out.files),
    }
    with open(root / "manifest.json", "w", encoding="utf-8", newline="") as fh:
        fh.write(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return root


def _error(exc: BaseException, code: int) -> int:
    doc = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    offset = getattr(exc, "offset", None)
    if offset is not None:
        doc["offset"] = offset
    sys.stderr.write(json.dumps(doc, sort_keys=True) + "\n")
    return code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mtlab", description=__doc__.split("\n")[0])
    ap.add_argument("command", choices=("run",) + COMMANDS)
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config entry (dotted key, JSON value); repeatable")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", default=None, help="output directory (overrides output_dir)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    os.environ.setdefault("OMP_NUM_THREADS", str(args.threads))
    try:
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        cfg = apply_overrides(cfg, args.set)
        command = None if args.command == "run" else args.command
        run_config(cfg, command, args.out, args.threads)
    except (ValueError, KeyError, TypeError) as exc:
        return _error(exc, EXIT_CONFIG)
    except ArithmeticError as exc:
        return _error(exc, EXIT_NUMERIC)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
