"""Generalized Nehari-manifold reduction for ``E(u, v) = E1(u) + 1/2 <L_u v, v> - b(u, v)``.

Vectors ``v`` are ambient coefficient arrays; internally they are moved to the
eigen-coordinates of the spectral model of ``L_u``, where the W-pairing is
Euclidean.  For fixed ``u`` and ``v`` with ``v^+ != 0`` the fermionic energy
has a unique maximizer ``g_u(v)`` on the half-space ``R^+ v + V^-``; the
reduced functional ``E~(u, v) = E(u, g_u(v))`` is bounded below and its
critical points are critical points of ``E``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DegenerateDirectionError
from .spectral import SpectralModel, SplitVector, v_norm

log = logging.getLogger(__name__)

DEGENERATE_NORM = 1e-12


@dataclass
class ProblemContext:
    """Callables describing one strongly indefinite problem.

    ``grad_b``/``hess_b`` are Euclidean partials in the ambient coordinates;
    ``grad_u`` returns the partials of ``E1 + E2`` in ``u`` at fixed ``v``.
    ``precondition_u`` maps those partials to the descent metric of ``u``.
    ``growth`` returns ``sup f`` with ``<grad_b(u,v), h> <= sup f |v| |h|``.
    """

    model: Callable[[np.ndarray], SpectralModel]
    e1: Callable[[np.ndarray], float]
    b: Callable[[np.ndarray, np.ndarray], float]
    grad_b: Callable[[np.ndarray, np.ndarray], np.ndarray]
    grad_u: Callable[[np.ndarray, np.ndarray], np.ndarray]
    hess_b: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    precondition_u: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    retract_u: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    growth: Callable[[np.ndarray, np.ndarray], float] | None = None
    u_independent_model: bool = False

    def precond_u(self, u, g):
        return g if self.precondition_u is None else self.precondition_u(u, g)

    def retract(self, u, step):
        return u + step if self.retract_u is None else self.retract_u(u, step)

    def hessian_b(self, u, x, h=1e-6):
        if self.hess_b is not None:
            return self.hess_b(u, x)
        n = x.shape[0]
        out = np.empty((n, n))
        for i in range(n):
            e = np.zeros(n)
            e[i] = h
            out[:, i] = (self.grad_b(u, x + e) - self.grad_b(u, x - e)) / (2 * h)
        return 0.5 * (out + out.T)


@dataclass
class MaximizerOptions:
    tol: float = 1e-10
    max_outer: int = 500
    max_inner: int = 100
    multistart: int = 0
    seed: int = 0


@dataclass
class MaximizerResult:
    g: np.ndarray
    coeffs: np.ndarray
    t: float
    ray_scale: float
    w_minus: np.ndarray
    energy: float
    r_scalar: float
    r_minus: float
    iterations: int
    converged: bool
    model: SpectralModel
    multistart_distance: float = 0.0
    method: str = "alternating"

    @property
    def split(self) -> SplitVector:
        return SplitVector(self.coeffs, self.model)


@dataclass
class NehariPoint:
    u: np.ndarray
    v: np.ndarray
    r_scalar: float
    r_minus: float
    energy: float
    e2: float
    model: SpectralModel

    def is_member(self, tol: float) -> bool:
        plus = SplitVector(self.model.coords(self.v), self.model).plus
        return max(abs(self.r_scalar), self.r_minus) <= tol and v_norm(plus) > DEGENERATE_NORM


class _Local:
    """E2 restricted to eigen-coordinates for a fixed u."""

    def __init__(self, ctx: ProblemContext, u, model: SpectralModel):
        self.ctx, self.u, self.m = ctx, u, model
        self.lam = model.eigenvalues

    def x(self, a):
        return self.m.ambient(a)

    def energy(self, a):
        return 0.5 * float(np.sum(self.lam * a * a)) - self.ctx.b(self.u, self.x(a))

    def gradb(self, a):
        return self.m.dual_coords(self.ctx.grad_b(self.u, self.x(a))).real

    def grad(self, a):
        return self.lam * a - self.gradb(a)

    def hess(self, a):
        hb = self.ctx.hessian_b(self.u, self.x(a))
        phi = self.m.basis
        return np.diag(self.lam) - (phi.T @ hb @ phi)


def _coords(ctx, u, v, model):
    return model.coords(np.asarray(v, dtype=float)).real


def residual_certificates(model: SpectralModel, a, grad) -> tuple[float, float]:
    """``(r_scalar, r_minus)`` from eigen-coordinates and ``L a - grad_b``."""
    r_scalar = float(np.dot(grad, a))
    neg = model.index_nonpositive
    pm = np.zeros_like(grad)
    pm[neg] = grad[neg] / (1.0 + np.abs(model.eigenvalues[neg]))
    return r_scalar, v_norm(SplitVector(pm, model))


def e2_energy(ctx: ProblemContext, u, v) -> float:
    model = ctx.model(u)
    return _Local(ctx, u, model).energy(_coords(ctx, u, v, model))


def nehari_residuals(ctx: ProblemContext, u, v) -> tuple[float, float]:
    model = ctx.model(u)
    loc = _Local(ctx, u, model)
    a = _coords(ctx, u, v, model)
    return residual_certificates(model, a, loc.grad(a))


class _HalfSpace:
    """Coordinates ``z = (t, w)`` on ``F_u(v) = R^+ e + V^-`` with ``||e||_V = 1``."""

    def __init__(self, loc: _Local, e):
        self.loc = loc
        self.e = e
        self.neg = loc.m.index_nonpositive

    def point(self, t, w):
        a = t * self.e
        a[self.neg] += w
        return a

    def reduced(self, a):
        gr = self.loc.grad(a)
        return np.concatenate([[gr @ self.e], gr[self.neg]])

    def hess(self, a):
        h = self.loc.hess(a)
        cols = np.column_stack([self.e, np.eye(h.shape[0])[:, self.neg]])
        return cols.T @ h @ cols


def _inner_ascent(hs: _HalfSpace, t, w, tol, max_iter):
    """Newton ascent of the strictly concave map ``w -> E2(t e + w)``."""
    loc = hs.loc
    neg = hs.neg
    if neg.size == 0:
        return w, 0
    for it in range(1, max_iter + 1):
        a = hs.point(t, w)
        gw = loc.grad(a)[neg]
        if np.linalg.norm(gw) <= tol:
            return w, it
        hw = loc.hess(a)[np.ix_(neg, neg)]
        step = np.linalg.solve(hw, -gw)
        f0 = loc.energy(a)
        slope = gw @ step
        alpha = 1.0
        while alpha > 1e-12:
            w_new = w + alpha * step
            if loc.energy(hs.point(t, w_new)) >= f0 + 1e-4 * alpha * slope - 1e-15 * abs(f0):
                break
            alpha *= 0.5
        w = w_new
    return w, max_iter


def _outer_derivatives(hs: _HalfSpace, t, w):
    a = hs.point(t, w)
    gr = hs.loc.grad(a)
    hp = float(gr @ hs.e)
    h = hs.hess(a)
    hpp = h[0, 0]
    if h.shape[0] > 1:
        hpp -= h[0, 1:] @ np.linalg.solve(h[1:, 1:], h[1:, 0])
    return hp, float(hpp)


def _alternating(hs: _HalfSpace, t0, w0, opts: MaximizerOptions):
    """Safeguarded Newton/bisection on ``h'(t) = 0`` with exact inner solves."""
    inner_tol = 0.1 * opts.tol
    its = 0
    t = max(float(t0), 1e-8)
    w = np.array(w0, dtype=float)
    w, k = _inner_ascent(hs, t, w, inner_tol, opts.max_inner)
    its += k
    hp, hpp = _outer_derivatives(hs, t, w)
    lo, hi = 0.0, np.inf
    for _ in range(opts.max_outer):
        if hp > 0:
            lo = t
        else:
            hi = t
        if abs(hp) <= inner_tol:
            return t, w, its, True
        if np.isfinite(hi) and hi - lo <= 1e-15 * hi:
            return t, w, its, abs(hp) <= opts.tol
        cand = t - hp / hpp if hpp < 0 else np.nan
        if not (lo < cand < hi):
            cand = 2.0 * t if not np.isfinite(hi) else 0.5 * (lo + hi)
        t = cand
        w, k = _inner_ascent(hs, t, w, inner_tol, opts.max_inner)
        its += k
        hp, hpp = _outer_derivatives(hs, t, w)
    return t, w, its, False


def _joint_newton(hs: _HalfSpace, t, w, opts: MaximizerOptions, max_iter=30):
    for it in range(1, max_iter + 1):
        a = hs.point(t, w)
        r = hs.reduced(a)
        if np.linalg.norm(r) <= 0.1 * opts.tol:
            h = hs.hess(a)
            try:
                np.linalg.cholesky(-h)
            except np.linalg.LinAlgError:
                return t, w, it, False
            return t, w, it, t > 0
        h = hs.hess(a)
        try:
            dz = np.linalg.solve(h, -r)
        except np.linalg.LinAlgError:
            return t, w, it, False
        t, w = t + dz[0], w + dz[1:]
        if not np.isfinite(t) or t <= 0:
            return t, w, it, False
    return t, w, max_iter, False


def maximize_on_halfspace(ctx: ProblemContext, u, v, opts: MaximizerOptions | None = None,
                          warm_start=None) -> MaximizerResult:
    """Unique maximizer ``g_u(v)`` of ``E2(u, .)`` on ``R^+ v + V^-``.

    ``warm_start`` (an ambient vector near the answer) enables a joint Newton
    fast path; the alternating ascent/root-find is the fallback.
    """
    opts = opts or MaximizerOptions()
    model = ctx.model(u)
    loc = _Local(ctx, u, model)
    a = _coords(ctx, u, v, model)
    plus = model.index_plus
    nplus = float(np.sqrt(np.sum(model.weights[plus] * a[plus] ** 2)))
    if nplus < DEGENERATE_NORM:
        raise DegenerateDirectionError(f"||v+||_V = {nplus:.3e}: point lies in H^-")
    e = np.zeros_like(a)
    e[plus] = a[plus] / nplus
    hs = _HalfSpace(loc, e)
    wplus = model.weights[plus]

    done = False
    method = "alternating"
    its = 0
    t_start = 1.0
    if warm_start is not None:
        aw = _coords(ctx, u, warm_start, model)
        t0 = float(np.sum(wplus * aw[plus] * e[plus]))
        if t0 > 0:
            t_start = t0
            t, w, its, done = _joint_newton(hs, t0, aw[hs.neg].copy(), opts)
            method = "newton"
    if not done:
        t, w, k, done = _alternating(hs, t_start, np.zeros(hs.neg.size), opts)
        its += k
        method = "alternating"
        if done:
            tp, wp, k, ok = _joint_newton(hs, t, w, opts, max_iter=3)
            its += k
            if ok:
                t, w = tp, wp
    coeffs = hs.point(t, w)
    grad = loc.grad(coeffs)
    r_s, r_m = residual_certificates(model, coeffs, grad)
    converged = bool(done and max(abs(r_s), r_m) <= opts.tol)

    spread = 0.0
    if opts.multistart:
        ss = np.random.default_rng(opts.seed)
        for _ in range(opts.multistart):
            t1 = float(ss.uniform(0.05, 3.0)) * max(t, 1e-3)
            w1 = ss.standard_normal(hs.neg.size) / np.sqrt(model.weights[hs.neg]) * max(t, 1e-3)
            tk, wk, _, _ = _alternating(hs, t1, w1, opts)
            other = hs.point(tk, wk)
            spread = max(spread, v_norm(SplitVector(other - coeffs, model)))

    return MaximizerResult(
        g=model.ambient(coeffs).real,
        coeffs=coeffs,
        t=float(t),
        ray_scale=float(t / nplus),
        w_minus=w,
        energy=loc.energy(coeffs),
        r_scalar=r_s,
        r_minus=r_m,
        iterations=its,
        converged=converged,
        model=model,
        multistart_distance=spread,
        method=method,
    )


def reduced_energy(ctx: ProblemContext, u, v, opts=None, result: MaximizerResult | None = None) -> float:
    res = result or maximize_on_halfspace(ctx, u, v, opts)
    return ctx.e1(u) + res.energy


@dataclass
class ReducedGradient:
    grad_u: np.ndarray
    grad_v: np.ndarray
    precond_u: np.ndarray
    precond_v: np.ndarray
    norm_u: float
    norm_v: float
    ray_scale: float
    result: MaximizerResult


def reduced_gradient(ctx: ProblemContext, u, v, opts=None, result: MaximizerResult | None = None) -> ReducedGradient:
    """Gradients of ``E~`` at ``(u, v)``.

    ``grad_v = t_u(v) * dE2(u, g_u(v))`` and ``grad_u = dE1(u) + d_u E2(u, g_u(v))``
    as raw partials in the ambient coordinates; ``precond_*`` are the descent
    directions (``(1+|L|)^{-1}`` on ``V^+`` for ``v``, ``ctx.precondition_u``
    for ``u``) and ``norm_*`` the associated dual norms.
    """
    res = result or maximize_on_halfspace(ctx, u, v, opts)
    model = res.model
    loc = _Local(ctx, u, model)
    rho = loc.grad(res.coeffs)
    t = res.ray_scale
    phi = model.basis
    g_dual = model.gram @ phi if model.gram is not None else phi
    # rho holds partials w.r.t. eigen-coordinates; a = phi^T G x
    grad_v = t * (g_dual @ rho)
    plus = model.index_plus
    pv = np.zeros_like(rho)
    pv[plus] = t * rho[plus] / (1.0 + np.abs(model.eigenvalues[plus]))
    norm_v = float(np.sqrt(np.sum(t * rho[plus] * pv[plus])))
    gu = np.asarray(ctx.grad_u(u, res.g), dtype=float)
    pu = np.asarray(ctx.precond_u(u, gu), dtype=float)
    norm_u = float(np.sqrt(max(float(gu @ pu), 0.0)))
    return ReducedGradient(gu, grad_v, pu, model.ambient(pv).real, norm_u, norm_v, t, res)


def psi_residual(model: SpectralModel, coeffs, rho) -> float:
    """V-norm of ``(1+|L|)^{-1}(L v - grad_b)``."""
    return v_norm(SplitVector(rho / (1.0 + np.abs(model.eigenvalues)), model))


@dataclass
class MinimizeOptions:
    tol: float = 1e-9
    max_iter: int = 5000
    armijo: float = 1e-4
    max_halvings: int = 60
    maximizer: MaximizerOptions = field(default_factory=MaximizerOptions)
    callback: Callable | None = None


@dataclass
class MinimizeResult:
    point: NehariPoint
    converged: bool
    status: str
    iterations: int
    trace: list
    residual_u: float
    residual_v: float
    maximizer: MaximizerResult


def _evaluate(ctx, u, v, mopts, warm):
    res = maximize_on_halfspace(ctx, u, v, mopts, warm_start=warm)
    return res, ctx.e1(u) + res.energy


def _bb_step(prev, du, dv, alpha, lo=1e-4, hi=1e3):
    # Barzilai-Borwein length from the last joint step and the change in the
    # preconditioned direction; falls back to doubling when curvature is not positive.
    if prev is None:
        return min(2.0 * alpha, 4.0)
    su, sv, du_old, dv_old = prev
    yu = du_old - du
    yv = dv_old - dv
    ss = float(np.vdot(su, su).real + np.vdot(sv, sv).real)
    sy = float(np.vdot(su, yu).real + np.vdot(sv, yv).real)
    if not (sy > 0 and np.isfinite(ss / sy)):
        return min(2.0 * alpha, 4.0)
    return float(np.clip(ss / sy, lo, hi))


def minimize_reduced(ctx: ProblemContext, u0, v0, opts: MinimizeOptions | None = None) -> MinimizeResult:
    """Preconditioned descent on ``E~`` with Armijo backtracking.

    The representative ``v`` is reset to the current Nehari point each step
    (``t_u(v) = 1`` there), so the ``v``-update moves the ray within ``V^+``.
    Joint steps that fail the line search fall back to ``v``-only and then
    ``u``-only steps before reporting a line-search failure.
    """
    opts = opts or MinimizeOptions()
    mopts = opts.maximizer
    u = np.asarray(u0, dtype=float).copy()
    res, energy = _evaluate(ctx, u, v0, mopts, None)
    trace = []
    alpha = 1.0
    prev = None
    status = "max_iter"
    converged = False
    it = 0
    for it in range(opts.max_iter + 1):
        if not res.converged:
            status = "maximizer_failure"
            break
        rg = reduced_gradient(ctx, u, res.g, result=res)
        loc_rho = _Local(ctx, u, res.model).grad(res.coeffs)
        res_v = psi_residual(res.model, res.coeffs, loc_rho)
        res_u = rg.norm_u
        rec = {
            "iter": it,
            "energy": energy,
            "r_scalar": res.r_scalar,
            "r_minus": res.r_minus,
            "grad_u": res_u,
            "grad_v": res_v,
            "step": 0.0 if it == 0 else alpha,
        }
        if max(res_u, res_v, abs(res.r_scalar), res.r_minus) <= opts.tol:
            trace.append(rec)
            converged = True
            status = "converged"
            break
        if it == opts.max_iter:
            trace.append(rec)
            break
        du = -rg.precond_u
        dv = -rg.precond_v
        slope = -(rg.norm_u**2 + rg.norm_v**2)
        accepted = False
        alpha = _bb_step(prev, du, dv, alpha)
        for mode in ("joint", "v", "u"):
            su = du if mode != "v" else np.zeros_like(du)
            sv = dv if mode != "u" else np.zeros_like(dv)
            sl = slope if mode == "joint" else -(rg.norm_v**2 if mode == "v" else rg.norm_u**2)
            if sl == 0.0:
                continue
            a = alpha
            for _ in range(opts.max_halvings):
                u_try = ctx.retract(u, a * su) if su.size else u
                v_try = res.g + a * sv
                try:
                    res_try, e_try = _evaluate(ctx, u_try, v_try, mopts, v_try)
                except DegenerateDirectionError:
                    a *= 0.5
                    continue
                slack = 1e-14 * max(abs(energy), 1.0)
                if res_try.converged and e_try <= energy + opts.armijo * a * sl + slack:
                    accepted = True
                    break
                a *= 0.5
            if accepted:
                alpha = a
                break
        rec["step"] = alpha if accepted else 0.0
        trace.append(rec)
        if opts.callback is not None:
            opts.callback(rec)
        if not accepted:
            status = "line_search_failure"
            break
        prev = (a * su, a * sv, du, dv) if mode == "joint" else None
        u, res, energy = u_try, res_try, e_try
    model = res.model
    point = NehariPoint(u, res.g, res.r_scalar, res.r_minus, energy, res.energy, model)
    rg_last = trace[-1] if trace else {"grad_u": np.inf, "grad_v": np.inf}
    return MinimizeResult(point, converged, status, it, trace, rg_last["grad_u"], rg_last["grad_v"], res)
