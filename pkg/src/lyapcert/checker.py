"""Numerical verification of certificate premises and the resulting verdict.

Pointwise conditions are evaluated on a deterministic sample set (level
shells of V plus a Sobol fill) with the disturbance maximised exactly over
the box vertices when the field is affine in ``d``.  Scalar gauge
inequalities are evaluated on logarithmic level grids.  Non-strict
inequalities tolerate a relative slack of ``delta_strict``; strict ones must
beat it.
"""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .certificate import auto_dwell, contraction_time_level, log_integral
from .discretize import exponential_constants
from .errors import ConfigurationError, ConstructionError, QuadratureError, RangeError
from .sampling import Sampling, SampleSet, sample_states
from .system import UncertainSystem, max_directional_batch

PASS_EXACT = "PASS-exact"
PASS_SAMPLED = "PASS-sampled"
PASS_VACUOUS = "PASS-vacuous"
FAIL = "FAIL"
SKIPPED = "SKIPPED"

ROUTES = ("Thm3.1", "Thm3.7", "Cor3.5", "Cor3.8", "Cor3.9", "Cor3.10", "Remark3.6-auto")


@dataclass
class Entry:
    condition: str
    status: str
    margin: float | None = None
    samples: int = 0
    in_region: int = 0
    witness: dict | None = None
    required: bool = True
    note: str = ""
    values: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status.startswith("PASS")


def _natural_key(cid: str):
    return tuple(int(t) if t.isdigit() else t for t in re.split(r"(\d+)", cid))


@dataclass
class CheckReport:
    entries: list[Entry] = field(default_factory=list)

    def sort(self) -> "CheckReport":
        self.entries.sort(key=lambda e: _natural_key(e.condition))
        return self

    def entry(self, cid: str) -> Entry:
        for e in self.entries:
            if e.condition == cid:
                return e
        raise KeyError(cid)

    def __contains__(self, cid: str) -> bool:
        return any(e.condition == cid for e in self.entries)

    def merged(self, other: "CheckReport") -> "CheckReport":
        return CheckReport(self.entries + other.entries).sort()

    @property
    def required(self) -> list[Entry]:
        return [e for e in self.entries if e.required]

    def failures(self) -> list[Entry]:
        return [e for e in self.required if e.status == FAIL]

    def skipped(self) -> list[Entry]:
        return [e for e in self.required if e.status == SKIPPED]

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.required)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["condition", "status", "required", "margin", "samples", "in_region",
                    "witness_x", "witness_d", "note"])
        for e in self.entries:
            wx = wd = ""
            if e.witness is not None:
                wx = ";".join(repr(float(v)) for v in e.witness.get("x", ()))
                wd = ";".join(repr(float(v)) for v in np.ravel(e.witness.get("d", ())))
            w.writerow([e.condition, e.status, int(e.required),
                        "" if e.margin is None else repr(float(e.margin)),
                        e.samples, e.in_region, wx, wd, e.note])
        return buf.getvalue()

    def summary(self) -> str:
        lines = []
        for e in self.entries:
            m = "" if e.margin is None else f" margin={e.margin:.6g}"
            tag = "" if e.required else " (informational)"
            lines.append(f"{e.condition:<16} {e.status:<13}{m}{tag}"
                         + (f"  [{e.note}]" if e.note else ""))
            if e.witness is not None:
                x = ", ".join(f"{v:.6g}" for v in e.witness["x"])
                lines.append(f"{'':<16} witness x=({x}) lhs={e.witness['lhs']:.6g} rhs={e.witness['rhs']:.6g}")
            for key, val in e.values.items():
                lines.append(f"{'':<16} {key} = {val!r}")
        return "\n".join(lines)


@dataclass
class Verdict:
    route: str
    conclusion: str
    report: CheckReport
    constants: dict | None = None
    note: str = ""

    @property
    def exit_code(self) -> int:
        if self.conclusion in ("URGAS", "URGES"):
            return 0
        return 1 if self.report.failures() else 2

    def summary(self) -> str:
        head = [f"route: {self.route}", f"conclusion: {self.conclusion}"]
        if self.constants:
            head += [f"{k}: {v!r}" for k, v in self.constants.items()]
        if self.note:
            head.append(f"note: {self.note}")
        return "\n".join(head) + "\n\n" + self.report.summary()


# -- helpers ------------------------------------------------------------------------------

def _scale(lhs, rhs):
    return np.maximum(np.abs(lhs), np.abs(rhs))


def _ok(lhs, rhs, strict: bool, delta: float):
    slack = rhs - lhs
    tol = delta * _scale(lhs, rhs)
    return (slack > tol) if strict else (slack >= -tol)


def tau_max(B: np.ndarray, G: np.ndarray, r: np.ndarray, grid: int = 257, iters: int = 60):
    """Row-wise ``max_{tau in [0, r]} sum_i tau^i/i! B_i - G tau^(k+1)/(k+1)!``.

    Dense scan (linear plus geometric nodes) followed by golden-section
    refinement of the bracketing cell.  Returns ``(value, argmax)``.
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    N, kk = B.shape
    G = np.broadcast_to(np.asarray(G, dtype=float), (N,))
    r = np.broadcast_to(np.asarray(r, dtype=float), (N,))
    fact = np.array([math.factorial(i) for i in range(kk + 1)], dtype=float)

    def poly(tau):
        shape = (N,) + (1,) * (tau.ndim - 1)
        out = np.zeros_like(tau)
        for i in range(kk):
            out = out + tau**i / fact[i] * B[:, i].reshape(shape)
        return out - G.reshape(shape) * tau**kk / fact[kk]

    u = np.unique(np.concatenate([np.linspace(0.0, 1.0, grid), np.geomspace(1e-6, 1.0, 64)]))
    tau = r[:, None] * u[None, :]
    vals = poly(tau)
    j = np.argmax(vals, axis=1)
    best = vals[np.arange(N), j]
    arg = tau[np.arange(N), j]
    a = r * u[np.maximum(j - 1, 0)]
    b = r * u[np.minimum(j + 1, len(u) - 1)]
    phi = (math.sqrt(5) - 1) / 2
    for _ in range(iters):
        c = b - phi * (b - a)
        d = a + phi * (b - a)
        left = poly(c) >= poly(d)
        b = np.where(left, d, b)
        a = np.where(left, a, c)
    m = 0.5 * (a + b)
    fm = poly(m)
    better = fm > best
    return np.where(better, fm, best), np.where(better, m, arg)


def _ids(cert):
    phi = cert.phi is not None
    if cert.flavor == "linear":
        return dict(decay="3.35" if phi else "3.26", chain="3.36" if phi else "3.27", bound="3.28",
                    last="3.37" if phi else "3.29", band="3.30", gt="3.45")
    return dict(decay="3.22" if phi else "3.1", chain="3.23" if phi else "3.2", bound="3.3",
                last="3.24" if phi else "3.4", band="3.5", gt="3.38")


def route_of(cert) -> str:
    if cert.flavor == "linear":
        if cert.g_tilde is not None:
            return "Cor3.10"
        return "Cor3.8" if cert.phi is not None else "Thm3.7"
    if cert.classical:
        return "Remark3.6-auto"
    if cert.g_tilde is not None:
        return "Cor3.9"
    return "Cor3.5" if cert.phi is not None else "Thm3.1"


# -- pointwise stage ------------------------------------------------------------------------

def pointwise_terms(system: UncertainSystem, cert, X: np.ndarray) -> dict:
    """Left/right sides, region masks and maximisers of every pointwise condition at ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    view = cert.view()
    ids = _ids(cert)
    k = cert.k
    Vx = np.asarray(cert.V.fn(X), dtype=float)
    gV = cert.V.gradient(X)
    W = [np.asarray(Wi.fn(X), dtype=float) * np.ones(X.shape[0]) for Wi in cert.chain]
    gW = [Wi.gradient(X) for Wi in cert.chain]
    ph = np.ones(X.shape[0]) if cert.phi is None else np.asarray(cert.phi.fn(X), dtype=float)
    mV = max_directional_batch(system, gV, X)
    mW = [max_directional_batch(system, g, X) for g in gW]
    c1v = np.asarray(view.c1(Vx), dtype=float)
    c2v = np.asarray(view.c2(Vx), dtype=float)
    A = W[0] >= c2v
    band = A & (W[0] <= c1v)
    out = {}
    out[ids["decay"]] = (mV.value, -ph * np.asarray(view.rho(Vx)) + ph * W[0], np.ones_like(A), mV.d)
    for i in range(k):
        out[f"{ids['chain']}[i={i}]"] = (mW[i].value, ph * W[i + 1], A, mW[i].d)
    for i in range(k + 1):
        out[f"{ids['bound']}[i={i}]"] = (W[i], np.asarray(view.b[i](Vx)) * np.ones_like(Vx), A, None)
    out[ids["last"]] = (mW[k].value, -ph * np.asarray(view.g(Vx)), A, mW[k].d)
    muV = max_directional_batch(system, np.asarray(view.mu_prime(Vx))[:, None] * gV, X)
    out[ids["band"]] = (mW[0].value + muV.value, np.zeros_like(Vx), band,
                        np.concatenate([mW[0].d, muV.d], axis=1))
    if view.g_tilde is not None and k >= 1:
        Wmax = np.max(np.vstack(W[1:]), axis=0)
        out[ids["gt"]] = (mW[k].value, -ph * np.asarray(view.g_tilde(Vx)), A & (Wmax >= 0), mW[k].d)
    return {"terms": out, "V": Vx, "W": W, "c2": c2v, "exact": mV.exact}


def _structurally_empty(cert, c2v) -> bool:
    return bool(cert.chain[0].is_zero and np.all(c2v > 0))


def check_pointwise(system: UncertainSystem, cert, sampling: Sampling | None = None,
                    samples: SampleSet | None = None) -> CheckReport:
    sampling = Sampling() if sampling is None else sampling
    if samples is None:
        samples = sample_states(cert.V, system.n, sampling)
    X = samples.points
    data = pointwise_terms(system, cert, X)
    exact = data["exact"]
    entries = []
    for cid, (lhs, rhs, mask, dmax) in data["terms"].items():
        lhs = np.asarray(lhs, dtype=float) * np.ones(X.shape[0])
        rhs = np.asarray(rhs, dtype=float) * np.ones(X.shape[0])
        mask = np.asarray(mask, dtype=bool)
        nin = int(np.count_nonzero(mask))
        if nin == 0:
            if _structurally_empty(cert, data["c2"]):
                entries.append(Entry(cid, PASS_VACUOUS, None, len(X), 0,
                                     note="region reduces to {0} (W0 = 0, c2 positive definite)"))
            else:
                entries.append(Entry(cid, SKIPPED, None, len(X), 0,
                                     note=f"no sample in region (0/{len(X)}); densify sampling"))
            continue
        slack = rhs - lhs
        ok = _ok(lhs, rhs, False, sampling.delta_strict)
        margin = float(np.min(slack[mask]))
        bad = mask & ~ok
        if not np.any(bad):
            entries.append(Entry(cid, PASS_EXACT if exact else PASS_SAMPLED, margin, len(X), nin))
            continue
        rel = np.where(bad, slack / np.maximum(_scale(lhs, rhs), 1e-300), np.inf)
        j = int(np.argmin(rel))
        wit = {"x": X[j].tolist(), "d": [] if dmax is None else np.ravel(dmax[j]).tolist(),
               "lhs": float(lhs[j]), "rhs": float(rhs[j]), "V": float(data["V"][j])}
        entries.append(Entry(cid, FAIL, margin, len(X), nin, wit,
                             note=f"{int(np.count_nonzero(bad))} violating samples"))
    return CheckReport(entries).sort()


def recheck_witness(system: UncertainSystem, cert, entry: Entry) -> float:
    """Re-evaluate a pointwise FAIL witness; returns the slack ``rhs - lhs``."""
    if entry.witness is None:
        raise ValueError("entry carries no witness")
    data = pointwise_terms(system, cert, np.asarray(entry.witness["x"])[None, :])
    lhs, rhs, mask, _ = data["terms"][entry.condition]
    return float(np.ravel(rhs)[0] - np.ravel(lhs)[0])


# -- scalar stage -------------------------------------------------------------------------------

def _scalar_entry(cid, lhs, rhs, strict, sampling, status_pass, levels=None, required=True, note=""):
    lhs = np.atleast_1d(np.asarray(lhs, dtype=float))
    rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
    slack = rhs - lhs
    ok = _ok(lhs, rhs, strict, sampling.delta_strict) & np.isfinite(slack)
    finite = np.isfinite(slack)
    margin = float(np.min(slack[finite])) if np.any(finite) else -math.inf
    if np.all(ok):
        return Entry(cid, status_pass, margin, len(lhs), len(lhs), required=required, note=note)
    j = int(np.argmin(np.where(ok, np.inf, np.where(finite, slack, -np.inf))))
    wit = {"x": [] if levels is None else [float(np.atleast_1d(levels)[j])], "d": [],
           "lhs": float(lhs[j]), "rhs": float(rhs[j])}
    return Entry(cid, FAIL, margin, len(lhs), len(lhs), wit, required=required,
                 note=(note + "; " if note else "") + f"{int(np.count_nonzero(~ok))} violating levels")


def _premise_entries(cert, sampling) -> list[Entry]:
    out = []
    for p in cert.premises:
        e = _scalar_entry(p.id, p.lhs, p.rhs, p.strict, sampling, PASS_EXACT, note=p.note)
        out.append(e)
    return out


def _poly_coeffs(view, s):
    return np.stack([np.asarray(bi(s), dtype=float) * np.ones_like(s) for bi in view.b], axis=1)


def _check_scalar_general(cert, sampling, samples) -> list[Entry]:
    entries = []
    L = sampling.levels()
    c1, c2, rho, lam = cert.c1(L), cert.c2(L), cert.rho(L), cert.lam(L)
    entries.append(_scalar_entry("S.rho>c1", c1, rho, True, sampling, PASS_SAMPLED, L))
    entries.append(_scalar_entry("S.c1>=c2", c2, c1, False, sampling, PASS_SAMPLED, L))
    entries.append(_scalar_entry("S.lambda<s", lam, L, True, sampling, PASS_SAMPLED, L))
    kappa = c1 + np.asarray(cert.mu(L))
    entries.append(_scalar_entry("S.kappa", kappa[:-1], kappa[1:], False, sampling, PASS_SAMPLED, L[1:],
                                 note="c1 + mu nondecreasing"))
    try:
        view = cert.view()
        if cert.r is None:
            entries.append(Entry("R3.2", PASS_SAMPLED, None, 61, 61, note="dwell limsup trends bounded"))
    except ConstructionError as exc:
        entries.append(Entry("R3.2", FAIL, None, 61, 61, note=str(exc)))
        return entries
    k = cert.k
    lamL = np.asarray(view.lam(L))
    gamL = np.asarray(view.gamma(L))
    # (3.6)
    lhs = np.asarray(view.c1(lamL)) + np.asarray(view.mu(lamL))
    rhs = np.asarray(view.c2(gamL)) + np.asarray(view.mu(gamL))
    entries.append(_scalar_entry("3.6", rhs, lhs, True, sampling, PASS_SAMPLED, L))
    # (3.7)
    rL = np.asarray(view.r(L))
    B = _poly_coeffs(view, L)
    gl = np.asarray(view.g(lamL))
    fact = [math.factorial(i) for i in range(k + 2)]
    left = np.asarray(view.c2(lamL)) + gl * rL ** (k + 1) / fact[k + 1]
    right = sum(rL**i / fact[i] * B[:, i] for i in range(k + 1))
    entries.append(_scalar_entry("3.7", right, left, True, sampling, PASS_SAMPLED, L))
    # (3.8) max-form
    route = cert.route_gamma
    M, _ = tau_max(B, gl, rL)
    try:
        inv = np.asarray(view.rho_inv(np.maximum(M, 0.0)))
        rhs8 = np.maximum(L, inv)
        e8 = _scalar_entry("3.8", rhs8, gamL, False, sampling, PASS_SAMPLED, L,
                           required=(route == "max"))
    except RangeError as exc:
        e8 = Entry("3.8", FAIL, None, len(L), len(L), required=(route == "max"), note=str(exc))
    entries.append(e8)
    # (3.39) min-form over the level shells of the sample set
    if cert.g_tilde is not None and cert.k >= 1 and samples is not None:
        entries.append(_check_339(cert, view, sampling, samples, required=(route == "min")))
    # (3.9) bounded trend near zero
    entries.append(_check_39(view, sampling))
    # sufficient test rho >= c1 + K s near zero (informational)
    Z = sampling.near_zero()
    Khat = float(np.min((np.asarray(view.rho(Z)) - np.asarray(view.c1(Z))) / Z))
    entries.append(Entry("R3.3", PASS_SAMPLED if Khat > 0 else FAIL, Khat, len(Z), len(Z), required=False,
                         note="sufficient test rho(s) >= c1(s) + K s near 0", values={"K": Khat}))
    return entries


def _check_39(view, sampling) -> Entry:
    Z = sampling.near_zero()
    try:
        I = np.array([log_integral(view, float(view.lam(np.asarray(s))), float(view.gamma(np.asarray(s))))
                      for s in Z])
    except QuadratureError as exc:
        return Entry("3.9", FAIL, None, len(Z), len(Z), note=str(exc))
    if not np.all(np.isfinite(I)):
        return Entry("3.9", FAIL, None, len(Z), len(Z), note="integral not finite near 0")
    i_lo = float(I[0])
    i_ref = float(np.interp(np.log(Z[0] * 100), np.log(Z), I))
    growth = i_lo - i_ref
    ok = growth <= 1e-3 * max(1.0, abs(i_lo))
    return Entry("3.9", PASS_SAMPLED if ok else FAIL, float(np.max(I)), len(Z), len(Z),
                 note="sampled limsup trend" + ("" if ok else " increasing toward 0"),
                 values={"I(s_min)": i_lo, "I(100 s_min)": i_ref})


def _check_339(cert, view, sampling, samples: SampleSet, required: bool) -> Entry:
    k = cert.k
    shell = ~np.isnan(samples.shell_levels)
    X = samples.points[shell]
    lev = samples.shell_levels[shell]
    levels = np.unique(lev)
    W = np.stack([np.asarray(Wi.fn(X), dtype=float) * np.ones(len(X)) for Wi in cert.chain], axis=1)
    G = np.asarray(view.g_tilde(view.lam(lev)))
    M, _ = tau_max(W, G, np.asarray(view.r(lev)))
    Mlev = np.array([np.max(M[lev == s]) for s in levels])
    try:
        inv = np.asarray(view.rho_inv(np.maximum(Mlev, 0.0)))
    except RangeError as exc:
        return Entry("3.39", FAIL, None, len(X), len(X), required=required, note=str(exc))
    rhs = np.minimum(levels, inv)
    e = _scalar_entry("3.39", rhs, np.asarray(view.gamma(levels)), False, sampling, PASS_SAMPLED, levels,
                      required=required, note="sup over x uses the pointwise sample shells")
    e.samples = len(X)
    return e


def _check_scalar_linear(cert, sampling, samples) -> list[Entry]:
    entries = []
    for name, ok, slack in cert.structural():
        entries.append(Entry(f"S.{name}", PASS_EXACT if ok else FAIL, float(slack), 1, 1))
    if not all(ok for _, ok, _ in cert.structural()):
        return entries
    k = cert.k
    rho, c1, c2, g, lam, gam, mu = cert.rho, cert.c1, cert.c2, cert.g, cert.lam, cert.gamma, cert.mu
    b = np.asarray(cert.b, dtype=float)
    try:
        r = cert.dwell_constant()
    except ConstructionError as exc:
        entries.append(Entry("R3.2", FAIL, None, 1, 1, note=str(exc)))
        return entries
    fact = [math.factorial(i) for i in range(k + 2)]
    e = _scalar_entry("3.31", (c2 + mu) * gam, (c1 + mu) * lam, True, sampling, PASS_EXACT)
    e.values = {"(c1+mu)lambda": (c1 + mu) * lam, "(c2+mu)gamma": (c2 + mu) * gam}
    entries.append(e)
    left = c2 * lam + g * lam * r ** (k + 1) / fact[k + 1]
    right = sum(r**i / fact[i] * b[i] for i in range(k + 1))
    entries.append(_scalar_entry("3.32", right, left, True, sampling, PASS_EXACT))
    with np.errstate(over="ignore"):
        growth = float(np.exp((b[0] - rho) * r))
    M, _ = tau_max(b[None, :], g * lam, r)
    cand = float(M[0]) / rho
    route = cert.route_gamma
    e = _scalar_entry("3.33", min(growth, cand), gam, False, sampling, PASS_SAMPLED,
                      required=(route == "max"))
    e.values = {"exp((b0-rho)r)": growth, "max_tau/rho": cand, "gamma": gam}
    entries.append(e)
    if cert.g_tilde is not None and k >= 1 and samples is not None:
        X = samples.points
        Vx = np.asarray(cert.V.fn(X), dtype=float)
        W = np.stack([np.asarray(Wi.fn(X), dtype=float) * np.ones(len(X)) for Wi in cert.chain], axis=1)
        Mx, _ = tau_max(W / Vx[:, None], cert.g_tilde * lam, r)
        sup = float(np.max(Mx)) / rho
        e = _scalar_entry("3.46", min(growth, sup), gam, False, sampling, PASS_SAMPLED,
                          required=(route == "min"), note="sup over x uses the pointwise sample set")
        e.samples = len(X)
        e.values = {"exp((b0-rho)r)": growth, "sup_tau_x/rho": sup, "gamma": gam}
        entries.append(e)
    return entries


def _check_envelope(cert, samples: SampleSet, sampling) -> list[Entry]:
    out = []
    if cert.flavor != "linear" or cert.K1 is None:
        return out
    X = samples.points
    Vx = np.asarray(cert.V.fn(X), dtype=float)
    n2 = np.sum(X**2, axis=1)
    lo = _scalar_entry("env.K1", cert.K1 * n2, Vx, False, sampling, PASS_SAMPLED, required=False,
                       note="K1|x|^2 <= V(x)")
    hi = _scalar_entry("env.K2", Vx, cert.K2 * n2, False, sampling, PASS_SAMPLED, required=False,
                       note="V(x) <= K2|x|^2")
    out += [lo, hi]
    if cert.phi is not None:
        ph = np.asarray(cert.phi.fn(X), dtype=float)
        out.append(_scalar_entry("env.phi", np.full_like(ph, cert.K1), ph, False, sampling, PASS_SAMPLED,
                                 required=False, note="phi(x) >= K1"))
    return out


def check_scalar(cert, sampling: Sampling | None = None, samples: SampleSet | None = None,
                 n: int | None = None) -> CheckReport:
    """Scalar gauge conditions on level grids (and sampled suprema for the min-form gamma)."""
    sampling = Sampling() if sampling is None else sampling
    if samples is None and cert.g_tilde is not None and n is not None:
        samples = sample_states(cert.V, n, sampling)
    entries = _premise_entries(cert, sampling)
    if cert.flavor == "linear":
        entries += _check_scalar_linear(cert, sampling, samples)
    else:
        entries += _check_scalar_general(cert, sampling, samples)
    return CheckReport(entries).sort()


# -- verdict ------------------------------------------------------------------------------------

def certify(system: UncertainSystem, cert, sampling: Sampling | None = None) -> Verdict:
    """Run the scalar and pointwise stages and conclude URGAS / URGES / inconclusive."""
    sampling = Sampling() if sampling is None else sampling
    route = route_of(cert)
    if cert.flavor == "general" and cert.classical and cert.k != 0:
        raise ConfigurationError("a classical completion must have k = 0")
    from .certificate import _check_chain_zero
    _check_chain_zero(cert, system.n)
    samples = sample_states(cert.V, system.n, sampling)
    report = check_scalar(cert, sampling, samples)
    structural_ok = all(e.passed for e in report.entries if e.condition.startswith("S."))
    if structural_ok:
        report = report.merged(check_pointwise(system, cert, sampling, samples))
    report = report.merged(CheckReport(_check_envelope(cert, samples, sampling)))
    if not report.passed:
        return Verdict(route, "inconclusive", report)
    if cert.flavor != "linear" or cert.K1 is None:
        return Verdict(route, "URGAS", report)
    env = [e for e in report.entries if e.condition.startswith("env.")]
    if not all(e.passed for e in env):
        return Verdict(route, "URGAS", report, note="quadratic envelope not verified; URGES not claimed")
    T = contraction_time_level(cert, 1.0)
    with np.errstate(over="ignore"):
        M_a = float(np.exp((cert.b[0] - cert.rho) * T))
    if not math.isfinite(M_a):
        return Verdict(route, "URGAS", report, note="overshoot constant overflows; URGES not claimed")
    M, sigma = exponential_constants(max(M_a, 1.0), T, 1.0 - cert.lam, cert.K1, cert.K2)
    if cert.phi is not None:
        sigma *= cert.K1
    consts = {"M": M, "sigma": sigma, "T": T, "M_a": M_a, "K1": cert.K1, "K2": cert.K2}
    return Verdict(route, "URGES", report, consts)
