"""Command-line front end: ``lyapcert <command> [system] [key=value ...]``."""

from __future__ import annotations

import argparse
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import gauge as gg
from .certificate import linear_rate_from, q_map, time_map, classical_completion
from .checker import certify
from .config import RunConfig
from .discretize import decay_envelope, run_contraction
from .errors import ConfigurationError, ConstraintError, DivergenceError, LyapcertError
from .examples import (Example42Params, OddPower, ScalarMap, build_example41, build_example42,
                       example41_system, example42_system, maximize_p)
from .expr import expression_field, expression_system
from .sampling import Sampling
from .simulate import integrate
from .system import sample_signal

EXIT_OK, EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_CONFIG = 0, 1, 2, 3


def workers() -> int:
    raw = os.environ.get("LYAPCERT_WORKERS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigurationError(f"LYAPCERT_WORKERS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigurationError("LYAPCERT_WORKERS must be at least 1")
    return n


# -- builders -------------------------------------------------------------------------------

def parse_beta(text: str):
    t = text.replace(" ", "")
    m = re.fullmatch(r"(?:(\d+(?:\.\d*)?)\*)?x(?:(?:\^|\*\*)(\d+(?:\.\d*)?))?", t)
    if m:
        return OddPower(float(m.group(1) or 1.0), float(m.group(2) or 1.0))
    import sympy as sp
    x = sp.Symbol("x", real=True)
    e = sp.sympify(text, locals={"x": x})
    if e.free_symbols - {x}:
        raise ConfigurationError(f"beta may only depend on x: {text!r}")
    return ScalarMap(sp.lambdify(x, e, "numpy"), sp.lambdify(x, sp.diff(e, x), "numpy"), name=text)


def build_system(cfg: RunConfig):
    s = cfg["system"]
    name = s["name"]
    if name == "example41":
        return example41_system(s["p"], parse_beta(s["beta"]))
    if name == "example42":
        return example42_system(s["p"])
    if name == "expr":
        box = s["box"]
        if len(box) % 2:
            raise ConfigurationError("system box needs lower/upper pairs")
        pairs = [(box[i], box[i + 1]) for i in range(0, len(box), 2)]
        return expression_system(s["states"], s["disturbances"], s["field"], pairs)
    raise ConfigurationError(f"unknown system {name!r} (expected example41, example42 or expr)")


def build_certificate(cfg: RunConfig, system):
    c, s = cfg["certificate"], cfg["system"]
    kind = c["kind"]
    if kind == "auto":
        kind = {"example41": "example41", "example42": "example42"}.get(s["name"], "classical")
    if kind == "example41":
        cert = build_example41(parse_beta(s["beta"]), s["p"], c["c1"], c["lambda"])
        return linear_rate_from(cert, c["K1"], c["K2"]) if c["linear"] else cert
    if kind == "example42":
        params = Example42Params(s["p"], c["c1"], c["c2"], c["lambda"], None if c["mu"] < 0 else c["mu"])
        return build_example42(params, strict=False, K1=c["K1"], K2=c["K2"])
    if kind == "classical":
        if not c["V"]:
            raise ConfigurationError("classical certificate needs certificate.V")
        states = s["states"] if s["name"] == "expr" else [f"x{i + 1}" for i in range(system.n)]
        cert = classical_completion(expression_field(states, c["V"]), gg.linear(c["rho"]))
        return linear_rate_from(cert, c["K1"], c["K2"]) if c["linear"] else cert
    raise ConfigurationError(f"unknown certificate kind {kind!r}")


def build_sampling(cfg: RunConfig) -> Sampling:
    s, t = cfg["sampling"], cfg["tolerances"]
    return Sampling(density=s["density"], level_range=(s["level_min"], s["level_max"]), seed=s["seed"],
                    delta_strict=t["delta_strict"], eps_region=t["eps_region"])


def initial_states(n: int, count: int, radius: float, seed: int) -> np.ndarray:
    """Uniform samples from the ball ``|x| <= radius``."""
    rng = np.random.default_rng(seed)
    u = rng.normal(size=(count, n))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return u * radius * rng.random((count, 1)) ** (1.0 / n)


# -- commands --------------------------------------------------------------------------------

def _write(out: Path, name: str, text: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / name, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def cmd_certify(cfg: RunConfig, out: Path) -> int:
    system = build_system(cfg)
    cert = build_certificate(cfg, system)
    verdict = certify(system, cert, build_sampling(cfg))
    _write(out, "certify_report.csv", verdict.report.to_csv())
    _write(out, "certify_summary.txt", verdict.summary() + "\n")
    print(verdict.summary())
    return verdict.exit_code


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    system = build_system(cfg)
    s, tol = cfg["sampling"], cfg["tolerances"]["integrator"]
    V = None
    try:
        V = build_certificate(cfg, system).V
    except LyapcertError:
        V = None
    x0s = initial_states(system.n, s["runs"], s["radius"], s["seed"])

    def one(k):
        sig = sample_signal(system, s["horizon"], s["dwell"], s["strategy"], seed=s["seed"] + k)
        try:
            return k, integrate(system, x0s[k], sig, s["horizon"], tol).to_csv(V), None
        except DivergenceError as exc:
            return k, None, str(exc)

    with ThreadPoolExecutor(workers()) as ex:
        results = sorted(ex.map(one, range(s["runs"])))
    failed = [(k, msg) for k, _, msg in results if msg is not None]
    for k, text, _ in results:
        if text is not None:
            _write(out, f"trajectory_{k:04d}.csv", text)
    lines = [f"command: simulate", f"system: {system.name}", f"runs: {len(results)}",
             f"diverged: {len(failed)}"] + [f"run {k}: {msg}" for k, msg in failed]
    _write(out, "simulate_summary.txt", "\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_FAIL if failed else EXIT_OK


def cmd_discretize(cfg: RunConfig, out: Path) -> int:
    system = build_system(cfg)
    cert = build_certificate(cfg, system)
    s, tol = cfg["sampling"], cfg["tolerances"]["integrator"]
    T, q = time_map(cert), q_map(cert)
    x0s = initial_states(system.n, s["runs"], s["radius"], s["seed"])
    probe_T = max(float(T(x)) for x in x0s[: min(8, len(x0s))]) if len(x0s) else 1.0
    horizon = max(s["horizon"], probe_T * s["steps"])

    def one(k):
        sig = sample_signal(system, horizon, s["dwell"], s["strategy"], seed=s["seed"] + k)
        return run_contraction(system, cert.V, T, q, x0s[k], sig, s["steps"], tol, run_id=k)

    with ThreadPoolExecutor(workers()) as ex:
        runs = sorted(ex.map(one, range(s["runs"])), key=lambda r: r.run_id)
    _, env = decay_envelope(runs, q)
    for r in runs:
        _write(out, f"contraction_{r.run_id:04d}.csv", r.to_csv())
    bad = [r for r in runs if not r.ok]
    lines = ["command: discretize", f"system: {system.name}", f"certificate: {cert.name}",
             f"runs: {len(runs)}", f"steps: {s['steps']}", f"failed runs: {len(bad)}",
             f"envelope: {env.summary()}"]
    lines += [f"run {r.run_id}: {r.status} at step {r.failed_step}" for r in bad]
    lines += [f"violation run={i} index={j}" for i, j in env.violations]
    _write(out, "discretize_summary.txt", "\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK if not bad and env.passed else EXIT_FAIL


def cmd_optimize(cfg: RunConfig, out: Path) -> int:
    o = cfg["optimize"]
    res = maximize_p((o["c1_min"], o["c1_max"]), (o["c2_min"], o["c2_max"]),
                     (o["lambda_min"], o["lambda_max"]), o["resolution"])
    rows = ["p,c1,c2,lambda,margin"] + [",".join(repr(float(v)) for v in row) for row in res.frontier]
    _write(out, "frontier.csv", "\n".join(rows) + "\n")
    lines = ["command: optimize", f"p_best: {res.p_best!r}", f"margin: {res.margin!r}"]
    if res.params is not None:
        lines += [f"c1: {res.params.c1!r}", f"c2: {res.params.c2!r}", f"lambda: {res.params.lam!r}"]
    _write(out, "optimize_summary.txt", "\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK if res.p_best > 0 else EXIT_FAIL


def cmd_report(cfg: RunConfig, out: Path) -> int:
    inputs = [Path(p) for p in cfg["report"]["inputs"]] or [out]
    files = []
    for p in inputs:
        if p.is_dir():
            files += sorted(p.glob("*_summary.txt"))
        elif p.is_file():
            files.append(p)
        else:
            raise ConfigurationError(f"report input {str(p)!r} does not exist")
    if not files:
        print("no summaries found")
        return EXIT_INCONCLUSIVE
    parts = []
    for f in files:
        parts.append(f"== {f.name} ==\n" + f.read_text(encoding="utf-8").rstrip() + "\n")
    text = "\n".join(parts)
    _write(out, "report.txt", text)
    print(text, end="")
    return EXIT_OK


COMMANDS = {"certify": cmd_certify, "simulate": cmd_simulate, "discretize": cmd_discretize,
            "optimize": cmd_optimize, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lyapcert", description="Lyapunov certificate toolkit")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("args", nargs="*", help="optional system name followed by key=value overrides")
    ap.add_argument("--config", "-c", help="INI configuration file")
    ap.add_argument("--out", "-o", help="output directory (overrides run.output)")
    ap.add_argument("--emit-config", action="store_true", help="print the effective config and exit")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    ns = ap.parse_args(argv)
    try:
        cfg = cfgmod.load(ns.config) if ns.config else RunConfig()
        args = list(ns.args)
        if args and "=" not in args[0]:
            cfg.set("system", "name", args.pop(0))
        cfgmod.apply_overrides(cfg, args)
        cfg.set("run", "command", ns.command)
        if ns.out:
            cfg.set("run", "output", ns.out)
        cfg.validate()
        if ns.emit_config:
            print(cfg.emit(), end="")
            return EXIT_OK
        return COMMANDS[ns.command](cfg, Path(cfg["run"]["output"]))
    except (ConfigurationError, ConstraintError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LyapcertError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INCONCLUSIVE


if __name__ == "__main__":
    sys.exit(main())
