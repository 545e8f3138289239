"""Systems and scalar fields declared as symbolic expressions."""

from __future__ import annotations

import numpy as np
import sympy as sp

from .errors import ConfigurationError
from .fields import ScalarField
from .system import UncertainSystem


def _symbols(names):
    names = [n.strip() for n in names if n.strip()]
    if len(set(names)) != len(names):
        raise ConfigurationError(f"duplicate symbol names in {names}")
    return names, sp.symbols(names, real=True) if names else ()


def _parse(text: str, local: dict):
    try:
        return sp.sympify(text, locals=local)
    except (sp.SympifyError, SyntaxError, TypeError) as exc:
        raise ConfigurationError(f"cannot parse expression {text!r}: {exc}") from exc


def _check_free(expr, allowed, text):
    extra = expr.free_symbols - set(allowed)
    if extra:
        raise ConfigurationError(f"unknown symbols {sorted(map(str, extra))} in {text!r}")


def expression_system(states, disturbances, components, box, name="expr") -> UncertainSystem:
    """``x' = f(d, x)`` from component strings such as ``"x2"`` and ``"-(1+d1)*x1 - 2*x2"``."""
    xn, xs = _symbols(states)
    dn, ds = _symbols(disturbances)
    if len(components) != len(xn):
        raise ConfigurationError(f"{len(components)} field components for {len(xn)} states")
    if len(box) != len(dn):
        raise ConfigurationError(f"{len(box)} disturbance intervals for {len(dn)} disturbances")
    local = {n: s for n, s in zip(xn + dn, list(xs) + list(ds))}
    exprs = []
    for c in components:
        e = _parse(c, local)
        _check_free(e, list(xs) + list(ds), c)
        exprs.append(e)
    affine = all(sp.diff(e, d, 2) == 0 for e in exprs for d in ds)
    fns = [sp.lambdify((list(ds), list(xs)), e, "numpy") for e in exprs]

    def fld(d, x):
        x = np.asarray(x, dtype=float)
        d = np.asarray(d, dtype=float)
        dl = [d[..., j] for j in range(d.shape[-1])]
        xl = [x[..., j] for j in range(x.shape[-1])]
        shape = np.broadcast_shapes(x.shape[:-1], d.shape[:-1])
        return np.stack([np.broadcast_to(np.asarray(fn(dl, xl), dtype=float), shape) for fn in fns], axis=-1)

    return UncertainSystem(len(xn), fld, tuple((float(a), float(b)) for a, b in box), affine,
                           frozenset(), name=name)


def expression_field(states, text: str, name: str | None = None) -> ScalarField:
    """Scalar field with a symbolic gradient."""
    xn, xs = _symbols(states)
    local = {n: s for n, s in zip(xn, xs)}
    e = _parse(text, local)
    _check_free(e, xs, text)
    fn = sp.lambdify([list(xs)], e, "numpy")
    grads = [sp.lambdify([list(xs)], sp.diff(e, s), "numpy") for s in xs]

    def value(x):
        x = np.asarray(x, dtype=float)
        xl = [x[..., j] for j in range(x.shape[-1])]
        return np.broadcast_to(np.asarray(fn(xl), dtype=float), x.shape[:-1]) * 1.0

    def grad(x):
        x = np.asarray(x, dtype=float)
        xl = [x[..., j] for j in range(x.shape[-1])]
        return np.stack([np.broadcast_to(np.asarray(g(xl), dtype=float), x.shape[:-1]) for g in grads], axis=-1)

    return ScalarField(value, grad, name=name or text, is_zero=(e == 0))
