"""Constructors for the exact solution families.

Every constructor returns a :class:`FieldHandle`: an immutable
``point -> Jet2`` evaluator whose gradients and Hessians come from implicit /
inverse-function differentiation of the defining relations, never from finite
differences.  Evaluations are independent (Newton state is per call), so
handles are safe to share across threads.

Coordinate orders match the residual operators: ``(x1, x2, xb1, xb2)`` for the
four-variable equation, ``(t, x)`` for the two-field equation and Born-Infeld,
``(t, x, y)`` for the three-coordinate Euclidean equation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import jets
from .errors import (
    DegenerateRootError,
    NewtonConvergenceError,
    PoleError,
    SingularMatrixError,
)
from .exprspec import Bin, ExprSpec, Var, eval_float, eval_jet, partial
from .residuals import ResidualSample, _from_terms

_DEGENERATE_REL = 1e-10


@dataclass(frozen=True)
class ImplicitSolveConfig:
    """Newton controls for implicit solves.

    ``seed`` is the initial guess (a pair for two-dimensional solves);
    ``bracket`` enables bisection fallback for scalar constraints.
    """

    newton_tol: float = 1e-12
    max_iter: int = 50
    seed: float | tuple[float, float] = 1.0
    bracket: tuple[float, float] | None = None

    def __post_init__(self):
        if self.newton_tol <= 0:
            raise ValueError("newton_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass(frozen=True)
class LinearMap2:
    """t' = a t + b x, x' = c t + d x (must be invertible)."""

    a: float
    b: float
    c: float
    d: float

    @property
    def det(self) -> float:
        return self.a * self.d - self.b * self.c

    def matrix(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]])


class FieldHandle:
    """Contract: point -> Jet2 for a scalar field.

    ``label`` records which constructor produced the handle (including the
    chosen branch seed, for implicit constructions).
    """

    def __init__(self, eval_fn: Callable, k: int, label: str):
        self._eval = eval_fn
        self.k = k
        self.label = label

    def __call__(self, point: Sequence[float], seed=None) -> jets.Jet2:
        return self._eval(np.asarray(point, dtype=float), seed)

    def __repr__(self) -> str:
        return f"FieldHandle(k={self.k}, label={self.label!r})"


# -- scalar Newton with optional bisection fallback --------------------------------


def _newton_scalar(fun, dfun, cfg: ImplicitSolveConfig, seed=None) -> float:
    """Newton iteration, polished past the configured tolerance toward machine
    precision so downstream finite-difference probes are not noise limited."""
    x = float(cfg.seed if seed is None else seed)
    best_x, best_f = x, math.inf
    for _ in range(cfg.max_iter):
        f = fun(x)
        if abs(f) < best_f:
            best_x, best_f = x, abs(f)
        if f == 0.0:
            return x
        d = dfun(x)
        if d == 0.0 or not math.isfinite(d):
            break
        nxt = x - f / d
        if not math.isfinite(nxt):
            break
        if nxt == x:  # converged to a fixed point of the float iteration
            break
        x = nxt
    f = fun(x)
    if abs(f) < best_f:
        best_x, best_f = x, abs(f)
    if best_f <= cfg.newton_tol:
        return best_x
    if cfg.bracket is not None:
        return _bisect(fun, cfg.bracket, cfg.newton_tol)
    raise NewtonConvergenceError(f"scalar Newton did not converge (last x={x!r})")


def _bisect(fun, bracket, tol) -> float:
    lo, hi = bracket
    flo, fhi = fun(lo), fun(hi)
    if abs(flo) <= tol:
        return lo
    if abs(fhi) <= tol:
        return hi
    if flo * fhi > 0:
        raise NewtonConvergenceError("bisection bracket does not straddle a root")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = fun(mid)
        if abs(fm) <= tol or hi - lo <= 1e-15 * max(1.0, abs(mid)):
            return mid
        if flo * fm <= 0:
            hi = mid
        else:
            lo, flo = mid, fm
    raise NewtonConvergenceError("bisection stalled")


def _require_vars(spec: ExprSpec, allowed: set[str], what: str) -> None:
    extra = set(spec.vars) - allowed
    if extra:
        raise ValueError(f"{what} may only use variables {sorted(allowed)}, got {sorted(extra)}")


# -- implicit solution of the four-variable equation -------------------------------


def solve_implicit_fg(F: ExprSpec, G: ExprSpec, cfg: ImplicitSolveConfig) -> FieldHandle:
    """Field defined by F(phi; x1, x2) = G(phi; xb1, xb2).

    Jets follow from implicit differentiation of W = F - G = 0 through second
    order.  Points where dW/dphi (numerically) vanishes raise
    :class:`DegenerateRootError`.
    """
    _require_vars(F, {"phi", "x1", "x2"}, "F")
    _require_vars(G, {"phi", "xb1", "xb2"}, "G")
    dF = partial(F, "phi") if "phi" in F.vars else None
    dG = partial(G, "phi") if "phi" in G.vars else None

    def evaluate(point: np.ndarray, seed=None) -> jets.Jet2:
        x1, x2, xb1, xb2 = point
        fa = {"x1": x1, "x2": x2}
        ga = {"xb1": xb1, "xb2": xb2}

        def w(p):
            return eval_float(F, {**fa, "phi": p}) - eval_float(G, {**ga, "phi": p})

        def dw(p):
            out = 0.0
            if dF is not None:
                out += eval_float(dF, {**fa, "phi": p})
            if dG is not None:
                out -= eval_float(dG, {**ga, "phi": p})
            return out

        phi = _newton_scalar(w, dw, cfg, seed)

        # Full second-order data of F in (phi, x1, x2) and G in (phi, xb1, xb2).
        fj = eval_jet(F, {
            "phi": jets.variable(0, phi, 3),
            "x1": jets.variable(1, x1, 3),
            "x2": jets.variable(2, x2, 3),
        }, k=3)
        gj = eval_jet(G, {
            "phi": jets.variable(0, phi, 3),
            "xb1": jets.variable(1, xb1, 3),
            "xb2": jets.variable(2, xb2, 3),
        }, k=3)
        return _implicit_jet_from_split(phi, fj, gj)

    label = f"solve_implicit_fg(F={F}, G={G}, seed={cfg.seed})"
    return FieldHandle(evaluate, 4, label)


def _implicit_jet_from_split(phi: float, fj: jets.Jet2, gj: jets.Jet2) -> jets.Jet2:
    """Assemble the arity-4 jet of phi from second-order data of F and G.

    ``fj`` is F over (phi, x1, x2); ``gj`` is G over (phi, xb1, xb2).
    """
    d = fj.grad[0] - gj.grad[0]  # dW/dphi
    scale = max(1.0, abs(fj.grad[0]), abs(gj.grad[0]))
    if abs(d) <= _DEGENERATE_REL * scale:
        raise DegenerateRootError(f"dW/dphi = {d!r} below threshold")

    w_a = np.array([fj.grad[1], fj.grad[2], -gj.grad[1], -gj.grad[2]])
    w_pa = np.array([fj.hess[0, 1], fj.hess[0, 2], -gj.hess[0, 1], -gj.hess[0, 2]])
    w_pp = fj.hess[0, 0] - gj.hess[0, 0]
    w_ab = np.zeros((4, 4))
    w_ab[:2, :2] = fj.hess[1:, 1:]
    w_ab[2:, 2:] = -gj.hess[1:, 1:]

    grad = -w_a / d
    hess = -(w_ab + np.outer(w_pa, grad) + np.outer(grad, w_pa)
             + w_pp * np.outer(grad, grad)) / d
    return jets.from_parts(phi, grad, hess)


def holo_sum(f: ExprSpec, g: ExprSpec) -> FieldHandle:
    """phi = f(x1, x2) + g(xb1, xb2); cross-block second derivatives vanish."""
    _require_vars(f, {"x1", "x2"}, "f")
    _require_vars(g, {"xb1", "xb2"}, "g")

    def evaluate(point: np.ndarray, seed=None) -> jets.Jet2:
        args = {
            "x1": jets.variable(0, point[0], 4),
            "x2": jets.variable(1, point[1], 4),
            "xb1": jets.variable(2, point[2], 4),
            "xb2": jets.variable(3, point[3], 4),
        }
        return eval_jet(f, args, k=4) + eval_jet(g, args, k=4)

    return FieldHandle(evaluate, 4, f"holo_sum(f={f}, g={g})")


# -- hodograph parametric solution --------------------------------------------------


def hodograph_forward_exprs(f: ExprSpec, g: ExprSpec) -> tuple[ExprSpec, ExprSpec]:
    """Parametric formulas t(u, v), x(u, v) as expression trees.

    t = f'(u) + g'(v);  x = f(u) - u f'(u) + g(v) - v g'(v).
    """
    _require_vars(f, {"u"}, "f")
    _require_vars(g, {"v"}, "g")
    df, dg = partial(f, "u"), partial(g, "v")
    t_ast = Bin("+", df.ast, dg.ast)
    x_ast = Bin(
        "+",
        Bin("-", f.ast, Bin("*", Var("u"), df.ast)),
        Bin("-", g.ast, Bin("*", Var("v"), dg.ast)),
    )
    return ExprSpec(t_ast, ("u", "v")), ExprSpec(x_ast, ("u", "v"))


def hodograph_forward(f: ExprSpec, g: ExprSpec, u: float, v: float) -> tuple[float, float]:
    t_expr, x_expr = hodograph_forward_exprs(f, g)
    args = {"u": u, "v": v}
    return eval_float(t_expr, args), eval_float(x_expr, args)


class HodographSolver:
    def __init__(self, f: ExprSpec, g: ExprSpec, cfg: ImplicitSolveConfig):
        _require_vars(f, {"u"}, "f")
        _require_vars(g, {"v"}, "g")
        self.cfg = cfg
        self.d1f = partial(f, "u")
        self.d2f = partial(self.d1f, "u")
        self.d3f = partial(self.d2f, "u")
        self.d1g = partial(g, "v")
        self.d2g = partial(self.d1g, "v")
        self.d3g = partial(self.d2g, "v")
        self.f, self.g = f, g

    def _forward(self, u: float, v: float) -> tuple[float, float]:
        fu = eval_float(self.f, {"u": u})
        f1 = eval_float(self.d1f, {"u": u})
        gv = eval_float(self.g, {"v": v})
        g1 = eval_float(self.d1g, {"v": v})
        return f1 + g1, fu - u * f1 + gv - v * g1

    def solve(self, t: float, x: float, seed=None) -> tuple[float, float]:
        s = self.cfg.seed if seed is None else seed
        try:
            u, v = float(s[0]), float(s[1])
        except TypeError:
            raise ValueError("hodograph solves need a (u, v) seed pair") from None
        tol = self.cfg.newton_tol * max(1.0, abs(t), abs(x))
        best = (u, v)
        best_r = math.inf
        for _ in range(self.cfg.max_iter):
            tc, xc = self._forward(u, v)
            r1, r2 = tc - t, xc - x
            rmax = max(abs(r1), abs(r2))
            if rmax < best_r:
                best, best_r = (u, v), rmax
            if rmax == 0.0:
                return u, v
            f2 = eval_float(self.d2f, {"u": u})
            g2 = eval_float(self.d2g, {"v": v})
            # J = [[f'', g''], [-u f'', -v g'']]
            det = f2 * g2 * (u - v)
            scale = abs(f2 * g2 * v) + abs(g2 * f2 * u)
            if abs(det) <= _DEGENERATE_REL * max(scale, 1e-30):
                if best_r <= tol:
                    return best
                raise SingularMatrixError("hodograph fold: J = f''g''(u - v) ~ 0")
            du = (-v * g2 * r1 - g2 * r2) / det
            dv = (u * f2 * r1 + f2 * r2) / det
            un, vn = u - du, v - dv
            if not (math.isfinite(un) and math.isfinite(vn)):
                raise NewtonConvergenceError("hodograph Newton diverged")
            if un == u and vn == v:
                break
            u, v = un, vn
        tc, xc = self._forward(u, v)
        if max(abs(tc - t), abs(xc - x)) < best_r:
            best, best_r = (u, v), max(abs(tc - t), abs(xc - x))
        if best_r <= tol:
            return best
        raise NewtonConvergenceError("hodograph Newton did not converge")

    def jets_uv(self, t: float, x: float, seed=None):
        """(u, v) and their first/second derivative arrays with respect to (t, x)."""
        u, v = self.solve(t, x, seed)
        f2 = eval_float(self.d2f, {"u": u})
        f3 = eval_float(self.d3f, {"u": u})
        g2 = eval_float(self.d2g, {"v": v})
        g3 = eval_float(self.d3g, {"v": v})
        jac = np.array([[f2, g2], [-u * f2, -v * g2]])
        det = f2 * g2 * (u - v)
        scale = abs(f2 * g2 * v) + abs(g2 * f2 * u)
        if abs(det) <= _DEGENERATE_REL * max(scale, 1e-30):
            raise SingularMatrixError("hodograph fold: J = f''g''(u - v) ~ 0")
        first = np.linalg.solve(jac, np.eye(2))  # rows: derivative eqn, cols (t, x)
        du = first[0]  # (u_t, u_x)
        dv = first[1]
        # Second derivatives: J (u_ab, v_ab)^T = -(second-order forward terms)
        t2 = {"uu": f3, "uv": 0.0, "vv": g3}
        x2 = {"uu": -f2 - u * f3, "uv": 0.0, "vv": -g2 - v * g3}
        hu = np.zeros((2, 2))
        hv = np.zeros((2, 2))
        for a in range(2):
            for b in range(a, 2):
                quad_t = (t2["uu"] * du[a] * du[b]
                          + t2["uv"] * (du[a] * dv[b] + dv[a] * du[b])
                          + t2["vv"] * dv[a] * dv[b])
                quad_x = (x2["uu"] * du[a] * du[b]
                          + x2["uv"] * (du[a] * dv[b] + dv[a] * du[b])
                          + x2["vv"] * dv[a] * dv[b])
                sec = np.linalg.solve(jac, -np.array([quad_t, quad_x]))
                hu[a, b] = hu[b, a] = sec[0]
                hv[a, b] = hv[b, a] = sec[1]
        return u, v, du, dv, hu, hv


def parametric_hodograph(
    f: ExprSpec, g: ExprSpec, cfg: ImplicitSolveConfig
) -> tuple[FieldHandle, FieldHandle]:
    """Invert the parametric solution; returns (phi, phibar) = (v-field, u-field)."""
    solver = HodographSolver(f, g, cfg)

    def eval_phi(point: np.ndarray, seed=None) -> jets.Jet2:
        _, v, _, dv, _, hv = solver.jets_uv(point[0], point[1], seed)
        return jets.from_parts(v, dv, hv)

    def eval_phibar(point: np.ndarray, seed=None) -> jets.Jet2:
        u, _, du, _, hu, _ = solver.jets_uv(point[0], point[1], seed)
        return jets.from_parts(u, du, hu)

    base = f"parametric_hodograph(f={f}, g={g}, seed={cfg.seed})"
    return (FieldHandle(eval_phi, 2, base + "[phi=v]"),
            FieldHandle(eval_phibar, 2, base + "[phibar=u]"))


def hodograph_identity_residuals(
    f: ExprSpec, g: ExprSpec, u: float, v: float
) -> tuple[ResidualSample, ResidualSample]:
    """x_v + v t_v and x_u + u t_u evaluated through symbolic partials."""
    t_expr, x_expr = hodograph_forward_exprs(f, g)
    args = {"u": u, "v": v}
    x_v = eval_float(partial(x_expr, "v"), args)
    t_v = eval_float(partial(t_expr, "v"), args)
    x_u = eval_float(partial(x_expr, "u"), args)
    t_u = eval_float(partial(t_expr, "u"), args)
    return _from_terms((x_v, v * t_v)), _from_terms((x_u, u * t_u))


# -- covariance machinery -----------------------------------------------------------


def moebius_transform(uv: tuple[float, float], m: LinearMap2) -> tuple[float, float]:
    """Speed transform induced by (t, x) -> (a t + b x, c t + d x):

    u' = (d u - c) / (a - b u), likewise for v.
    """
    out = []
    for s in uv:
        den = m.a - m.b * s
        if abs(den) <= 1e-13 * max(1.0, abs(m.a), abs(m.b * s)):
            raise PoleError(f"moebius pole: a - b*u = {den!r}")
        out.append((m.d * s - m.c) / den)
    return out[0], out[1]


def transform_solution(
    pair: tuple[FieldHandle, FieldHandle], m: LinearMap2
) -> tuple[FieldHandle, FieldHandle]:
    """Pull both fields back along the inverse linear map (chain rule on jets)."""
    det = m.det
    if abs(det) <= 1e-14 * max(1.0, abs(m.a * m.d), abs(m.b * m.c)):
        raise ValueError("linear map is not invertible")
    minv = np.array([[m.d, -m.b], [-m.c, m.a]]) / det

    def make(handle: FieldHandle) -> FieldHandle:
        def evaluate(point: np.ndarray, seed=None) -> jets.Jet2:
            q = minv @ point
            base = handle(q, seed=seed)
            grad = minv.T @ base.grad
            hess = minv.T @ base.hess @ minv
            return jets.from_parts(base.value, grad, hess)

        return FieldHandle(evaluate, handle.k, f"pullback({handle.label})")

    return make(pair[0]), make(pair[1])


def reparametrize(handle: FieldHandle, h: ExprSpec) -> FieldHandle:
    """Compose a single-variable expression with the field: h(phi)."""
    if len(h.vars) != 1:
        raise ValueError("reparametrization must use exactly one variable")
    var = h.vars[0]

    def evaluate(point: np.ndarray, seed=None) -> jets.Jet2:
        return eval_jet(h, {var: handle(point, seed=seed)})

    return FieldHandle(evaluate, handle.k, f"{h}∘({handle.label})")


# -- Born-Infeld gradient field -------------------------------------------------------


def _born_infeld_uv_jets(u_val: float, v_val: float, lam: float):
    """(phi_t, phi_x) as arity-2 jets over (u, v)."""
    if u_val <= 0.0 or v_val <= 0.0:
        raise DegenerateRootError(f"born-infeld needs u, v > 0, got {u_val, v_val}")
    su, sv = math.sqrt(u_val), math.sqrt(v_val)
    if abs(su - sv) <= 1e-12 * max(su, sv):
        raise SingularMatrixError("born-infeld: sqrt(u) = sqrt(v)")
    uj = jets.variable(0, u_val, 2)
    vj = jets.variable(1, v_val, 2)
    denom = jets.sqrt(uj) - jets.sqrt(vj)
    phi_x = math.sqrt(lam) / denom
    phi_t = jets.sqrt(uj * vj * lam) / denom
    return phi_t, phi_x


def born_infeld_point(u_val: float, v_val: float, lam: float) -> tuple[float, float]:
    """(phi_t, phi_x) values for given (u, v)."""
    phi_t, phi_x = _born_infeld_uv_jets(u_val, v_val, lam)
    return phi_t.value, phi_x.value


def born_infeld_field(u: FieldHandle, v: FieldHandle, lam: float) -> FieldHandle:
    """Gradient-level field: returns a jet with grad = (phi_t, phi_x) and the
    corresponding second derivatives; the scalar value is 0 by convention (phi
    is defined only up to a constant and is never materialized).
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")

    def evaluate(point: np.ndarray, seed=None) -> jets.Jet2:
        uj = u(point, seed=seed)
        vj = v(point, seed=seed)
        pt, px = _born_infeld_uv_jets(uj.value, vj.value, lam)
        # Chain through (u, v)(t, x); cross derivative symmetrized, the two
        # estimates agree when (u, v) solve the hydrodynamic pair.
        d_pt = pt.grad[0] * uj.grad + pt.grad[1] * vj.grad  # (d_t phi_t, d_x phi_t)
        d_px = px.grad[0] * uj.grad + px.grad[1] * vj.grad
        cross = 0.5 * (d_pt[1] + d_px[0])
        hess = np.array([[d_pt[0], cross], [cross, d_px[1]]])
        return jets.from_parts(0.0, np.array([pt.value, px.value]), hess)

    return FieldHandle(evaluate, 2, f"born_infeld(lam={lam}, u={u.label}, v={v.label})")


def born_infeld_cross_residual(
    u: FieldHandle, v: FieldHandle, lam: float, point: Sequence[float]
) -> ResidualSample:
    """Integrability check d_t(phi_x) - d_x(phi_t) for the substitution."""
    pt_arr = np.asarray(point, dtype=float)
    uj = u(pt_arr)
    vj = v(pt_arr)
    pt, px = _born_infeld_uv_jets(uj.value, vj.value, lam)
    d_t_phix = px.grad[0] * uj.grad[0] + px.grad[1] * vj.grad[0]
    d_x_phit = pt.grad[0] * uj.grad[1] + pt.grad[1] * vj.grad[1]
    return _from_terms((d_t_phix, -d_x_phit))


# -- implicit solutions of the three-coordinate equation -----------------------------


def implicit_3d(
    F: ExprSpec, G: ExprSpec, K: ExprSpec, const_c: float, cfg: ImplicitSolveConfig
) -> FieldHandle:
    """Field defined by t F(phi) + x G(phi) + y K(phi) = const_c."""
    for spec, name in ((F, "F"), (G, "G"), (K, "K")):
        _require_vars(spec, {"phi"}, name)
    d1 = [partial(s, "phi") if "phi" in s.vars else None for s in (F, G, K)]
    d2 = [partial(d, "phi") if d is not None else None for d in d1]

    def evaluate(point: np.ndarray, seed=None) -> jets.Jet2:
        coeffs = point  # (t, x, y)

        def vals(specs, p):
            return [eval_float(s, {"phi": p}) if s is not None else 0.0 for s in specs]

        def w(p):
            return float(np.dot(coeffs, vals((F, G, K), p))) - const_c

        def dw(p):
            return float(np.dot(coeffs, vals(d1, p)))

        phi = _newton_scalar(w, dw, cfg, seed)

        f0 = np.array(vals((F, G, K), phi))
        f1 = np.array(vals(d1, phi))
        f2 = np.array(vals(d2, phi))
        w_p = float(np.dot(coeffs, f1))
        scale = max(1.0, float(np.abs(coeffs * f1).sum()))
        if abs(w_p) <= _DEGENERATE_REL * scale:
            raise DegenerateRootError(f"dW/dphi = {w_p!r} below threshold")
        grad = -f0 / w_p  # W_a = F_a(phi) per coordinate a
        w_pa = f1
        w_pp = float(np.dot(coeffs, f2))
        hess = -(np.outer(w_pa, grad) + np.outer(grad, w_pa)
                 + w_pp * np.outer(grad, grad)) / w_p
        return jets.from_parts(phi, grad, hess)

    label = f"implicit_3d(F={F}, G={G}, K={K}, c={const_c}, seed={cfg.seed})"
    return FieldHandle(evaluate, 3, label)


# -- grid sampling with seed continuation ---------------------------------------------


def eval_grid(
    handle: FieldHandle,
    t_nodes: np.ndarray,
    x_nodes: np.ndarray,
    seed=None,
) -> np.ndarray:
    """Field values on the tensor grid, reusing each solved value to seed its
    right neighbour (and each row start to seed the next row)."""
    nt, nx = len(t_nodes), len(x_nodes)
    out = np.empty((nt, nx))
    row_seed = seed
    for i, t in enumerate(t_nodes):
        s = row_seed
        for j, x in enumerate(x_nodes):
            jet = handle(np.array([t, x]), seed=s)
            out[i, j] = jet.value
            if not isinstance(s, (tuple, list, np.ndarray)) and s is not None:
                s = jet.value
            if j == 0:
                row_seed = s
    return out


def hodograph_grid(
    f: ExprSpec,
    g: ExprSpec,
    cfg: ImplicitSolveConfig,
    t_nodes: np.ndarray,
    x_nodes: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """(phi, phibar) = (v, u) values on a tensor grid, with (u, v) seed
    continuation along each row and down the first column."""
    solver = HodographSolver(f, g, cfg)
    nt, nx = len(t_nodes), len(x_nodes)
    phi = np.empty((nt, nx))
    phibar = np.empty((nt, nx))
    row_seed = cfg.seed
    for i, t in enumerate(t_nodes):
        s = row_seed
        for j, x in enumerate(x_nodes):
            u, v = solver.solve(t, x, seed=s)
            phibar[i, j] = u
            phi[i, j] = v
            s = (u, v)
            if j == 0:
                row_seed = s
    return phi, phibar
