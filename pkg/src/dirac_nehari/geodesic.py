"""Per-homotopy-class solver for the perturbed Dirac-geodesic energy on the circle.

The reduction works on real vectors: ``u`` is the flattened periodic part of
the loop (winding held fixed), ``v`` the realified spinor coefficients
``[Re c; Im c]``.  The twisted Dirac matrix and its Gram matrix are realified,
so every eigenvalue of the complex operator appears twice.
"""

from __future__ import annotations

import logging
from collections import OrderedDict
from dataclasses import dataclass, field, replace

import numpy as np

from . import circle
from .charts import chart_from_name
from .circle import CircleDomain, LoopMap, Nonlinearity, SpinorField, loop_norms, realify
from .errors import ConfigError, DegenerateDirectionError
from .nehari import (
    MaximizerOptions,
    MinimizeOptions,
    ProblemContext,
    maximize_on_halfspace,
    minimize_reduced,
    nehari_residuals,
)
from .spectral import SpectralModel, SplitVector, build_spectral_model, v_norm

log = logging.getLogger(__name__)

TRIVIAL_PLUS_NORM = 1e-6
_CACHE_SIZE = 16


@dataclass(frozen=True)
class GeodesicConfig:
    k_max: int = 16
    m_phi: int | None = None
    n_grid: int | None = None
    chart: str = "flat_torus"
    n_fiber: int = 1
    p: float = 3.0
    b_cos: tuple = (1.0,)
    b_sin: tuple = ()
    winding: tuple = (0,)
    tol: float = 1e-9
    max_iter: int = 5000
    seed: int = 0
    multistart: int = 1
    maximizer_tol: float = 1e-10
    phi_init_scale: float = 0.1
    clifford_sign: int = 1

    def __post_init__(self):
        if self.m_phi is None:
            object.__setattr__(self, "m_phi", self.k_max)
        object.__setattr__(self, "b_cos", tuple(float(x) for x in np.atleast_1d(self.b_cos)))
        object.__setattr__(self, "b_sin", tuple(float(x) for x in np.atleast_1d(self.b_sin)))
        object.__setattr__(self, "winding", tuple(int(x) for x in np.atleast_1d(self.winding)))
        if self.m_phi < 0:
            raise ConfigError("m_phi must be non-negative")
        if self.multistart < 1:
            raise ConfigError("multistart must be at least 1")
        if self.tol <= 0 or self.maximizer_tol <= 0:
            raise ConfigError("tolerances must be positive")
        if len(self.winding) != self.n_fiber:
            raise ConfigError(f"winding has {len(self.winding)} entries, expected n_fiber={self.n_fiber}")
        if not self.b_cos:
            raise ConfigError("b_cos needs at least the constant coefficient")

    def domain(self) -> CircleDomain:
        try:
            return CircleDomain(self.k_max, self.n_fiber, self.n_grid, self.clifford_sign)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def b_function(self, s):
        s = np.asarray(s, dtype=float)
        out = np.full_like(s, self.b_cos[0])
        for m, c in enumerate(self.b_cos[1:], start=1):
            out = out + c * np.cos(m * s)
        for m, c in enumerate(self.b_sin, start=1):
            out = out + c * np.sin(m * s)
        return out

    def nonlinearity(self, domain: CircleDomain | None = None) -> Nonlinearity:
        domain = domain or self.domain()
        try:
            return Nonlinearity.from_function(self.p, self.b_function, domain)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def make_chart(self):
        try:
            return chart_from_name(self.chart, self.n_fiber)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass
class GeodesicProblem:
    """A configured problem: the reduction context plus the maps between vectors and fields."""

    cfg: GeodesicConfig
    domain: CircleDomain
    chart: object
    nl: Nonlinearity
    winding: np.ndarray
    ctx: ProblemContext = field(init=False)

    def __post_init__(self):
        self._cache: OrderedDict = OrderedDict()
        self._norms = loop_norms(self.cfg.m_phi)
        self.ctx = ProblemContext(
            model=self.model,
            e1=lambda u: circle.phi_energy(self.loop(u), self.domain),
            b=lambda u, x: circle.k_value(self.nl, self.spinor(x), self.loop(u)),
            grad_b=self._grad_b,
            grad_u=self._grad_u,
            hess_b=lambda u, x: circle.k_hessian_real(self.nl, self.spinor(x), self.loop(u)),
            precondition_u=lambda u, g: (g.reshape(self.u_shape) / self._norms[:, None]).reshape(-1),
            growth=self._growth,
            u_independent_model=self.chart.is_flat,
        )

    @property
    def u_shape(self):
        return (2 * self.cfg.m_phi + 1, self.chart.n)

    @property
    def u_size(self) -> int:
        return int(np.prod(self.u_shape))

    @property
    def v_size(self) -> int:
        return 2 * self.domain.n_coeffs

    def loop(self, u) -> LoopMap:
        return LoopMap(self.winding, np.reshape(u, self.u_shape), self.chart)

    def spinor(self, x) -> SpinorField:
        return SpinorField.from_real(x, self.domain)

    def model(self, u) -> SpectralModel:
        key = b"flat" if self.chart.is_flat else np.ascontiguousarray(u, dtype=float).tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            self._cache.move_to_end(key)
            return hit
        mat, gram = circle.assemble_twisted_dirac(self.domain, self.loop(u))
        gram_r = None if self.chart.is_flat else realify(gram)
        m = build_spectral_model(realify(mat), gram_r)
        self._cache[key] = m
        if len(self._cache) > _CACHE_SIZE:
            self._cache.popitem(last=False)
        return m

    def _grad_b(self, u, x):
        z = circle.k_gradient(self.nl, self.spinor(x), self.loop(u)).coeffs.reshape(-1)
        return np.concatenate([z.real, z.imag])

    def _grad_u(self, u, x):
        g = circle.phi_gradient(self.loop(u), self.spinor(x), self.nl, precondition=False)
        return g.reshape(-1)

    def _growth(self, u, x):
        # pointwise factor of grad K against the g-weighted pairing, so no metric norm enters
        pn = self.spinor(x).nodes()
        if self.chart.is_flat:
            q = np.sum(np.abs(pn) ** 2, axis=1)
        else:
            y, _ = circle.phi_nodes(self.domain, self.loop(u))
            q = np.real(np.einsum("ja,jab,jb->j", pn.conj(), self.chart.metric(y), pn))
        return float(np.max(self.nl.b_values * q ** ((self.nl.p - 1) / 2)))

    def initial_point(self, rng: np.random.Generator):
        """Pure winding plus a small random periodic part; unit-V-norm spinor in V^+."""
        mp = self.cfg.m_phi
        tail = 1.0 / (1.0 + np.arange(1, mp + 1) ** 2)
        decay = np.concatenate([[1.0], tail, tail])
        u = self.cfg.phi_init_scale * rng.standard_normal(self.u_shape) * decay[:, None]
        if not self.chart.is_flat:
            u[0] = 0.0
        u = u.reshape(-1)
        model = self.model(u)
        a = np.zeros(model.dim)
        plus = model.index_plus
        a[plus] = rng.standard_normal(plus.size) / np.sqrt(model.weights[plus])
        a /= v_norm(SplitVector(a, model))
        return u, model.ambient(a).real


def build_problem(cfg: GeodesicConfig, winding=None) -> GeodesicProblem:
    winding = np.asarray(cfg.winding if winding is None else winding, dtype=int).reshape(-1)
    chart = cfg.make_chart()
    if np.any(winding != 0) and not chart.supports_winding:
        raise ConfigError(f"chart {chart.name} carries no winding classes")
    domain = cfg.domain()
    return GeodesicProblem(cfg, domain, chart, cfg.nonlinearity(domain), winding)


def build_context(cfg: GeodesicConfig) -> ProblemContext:
    return build_problem(cfg).ctx


@dataclass
class EnergyParts:
    total: float
    kinetic: float
    dirac: float
    potential: float


def energy_parts(phi: LoopMap, psi: SpinorField, nl: Nonlinearity) -> EnergyParts:
    dom = psi.domain
    kin = circle.phi_energy(phi, dom)
    dirac = 0.5 * circle.dirac_form(dom, phi, psi)
    pot = circle.k_value(nl, psi, phi)
    return EnergyParts(kin + dirac - pot, kin, dirac, pot)


def total_energy(prob: GeodesicProblem, u, x) -> float:
    return energy_parts(prob.loop(u), prob.spinor(x), prob.nl).total


def el_residual(prob: GeodesicProblem, u, x) -> tuple[float, float]:
    """H^1 norm of the loop gradient and V-norm of ``(1+|D|)^{-1}(D psi - grad K)``."""
    gu = prob.ctx.grad_u(u, x)
    res_phi = float(np.sqrt(gu @ prob.ctx.precond_u(u, gu)))
    model = prob.model(u)
    a = model.coords(x).real
    rho = model.eigenvalues * a - model.dual_coords(prob.ctx.grad_b(u, x)).real
    res_psi = v_norm(SplitVector(rho / (1.0 + np.abs(model.eigenvalues)), model))
    return res_phi, res_psi


@dataclass
class SolveReport:
    converged: bool
    status: str
    energy: float
    energy_kinetic: float
    energy_dirac: float
    energy_potential: float
    residual_phi: float
    residual_psi: float
    r_scalar: float
    r_minus: float
    psi_norm: float
    psi_plus: float
    psi_minus: float
    iterations: int
    seed: int
    start: int
    k_max: int
    m_phi: int
    n_grid: int
    winding: tuple
    u: np.ndarray
    v: np.ndarray
    trivial: bool = False
    z2_energy_gap: float = np.nan
    z2_spinor_gap: float = np.nan
    z2_converged: bool | None = None
    trace: list = field(default_factory=list, repr=False)
    starts: list = field(default_factory=list, repr=False)

    def phi(self, prob: GeodesicProblem) -> LoopMap:
        return prob.loop(self.u)

    def psi(self, prob: GeodesicProblem) -> SpinorField:
        return prob.spinor(self.v)


def _report(prob: GeodesicProblem, res, idx: int, seed: int) -> SolveReport:
    u, x = res.point.u, res.point.v
    parts = energy_parts(prob.loop(u), prob.spinor(x), prob.nl)
    rp, rs = el_residual(prob, u, x)
    model = prob.model(u)
    sv = SplitVector(model.coords(x).real, model)
    r_s, r_m = nehari_residuals(prob.ctx, u, x)
    plus = v_norm(sv.plus)
    tol = prob.cfg.tol
    ok = res.converged and max(rp, rs, abs(r_s), r_m) <= 10 * tol and plus >= TRIVIAL_PLUS_NORM
    return SolveReport(
        converged=bool(ok),
        status=res.status,
        energy=parts.total,
        energy_kinetic=parts.kinetic,
        energy_dirac=parts.dirac,
        energy_potential=parts.potential,
        residual_phi=rp,
        residual_psi=rs,
        r_scalar=r_s,
        r_minus=r_m,
        psi_norm=v_norm(sv),
        psi_plus=plus,
        psi_minus=v_norm(sv.minus),
        iterations=res.iterations,
        seed=seed,
        start=idx,
        k_max=prob.domain.k_max,
        m_phi=prob.cfg.m_phi,
        n_grid=prob.domain.n_grid,
        winding=tuple(int(w) for w in prob.winding),
        u=np.array(u, dtype=float),
        v=np.array(x, dtype=float),
        trivial=plus < TRIVIAL_PLUS_NORM,
        trace=res.trace,
    )


def _options(cfg: GeodesicConfig, max_iter=None, callback=None) -> MinimizeOptions:
    return MinimizeOptions(
        tol=cfg.tol,
        max_iter=cfg.max_iter if max_iter is None else max_iter,
        maximizer=MaximizerOptions(tol=cfg.maximizer_tol),
        callback=callback,
    )


def _run(prob, u0, v0, opts):
    return minimize_reduced(prob.ctx, u0, v0, opts)


def solve_class(cfg: GeodesicConfig, winding=None, callback=None, max_restarts: int = 3,
                z2_check: bool = True) -> SolveReport:
    """Minimize the reduced energy in one homotopy class from ``cfg.multistart`` seeded starts.

    Returns the best converged report (lowest energy, then start index); its
    ``starts`` field lists every start.  Each converged start is re-solved from
    the negated spinor to measure the Z2 pairing.
    """
    prob = build_problem(cfg, winding)
    reports = []

    def opts_for(idx, run):
        if callback is None:
            return _options(cfg)
        return _options(cfg, callback=lambda rec: callback({"start": idx, "run": run, **rec}))

    for idx in range(cfg.multistart):
        rep = None
        for attempt in range(max_restarts + 1):
            rng = np.random.default_rng([cfg.seed, idx, attempt])
            u0, v0 = prob.initial_point(rng)
            try:
                res = _run(prob, u0, v0, opts_for(idx, "primary"))
            except DegenerateDirectionError:
                log.warning("start %d attempt %d collapsed into V^-", idx, attempt)
                continue
            rep = _report(prob, res, idx, cfg.seed)
            if not rep.trivial:
                break
            log.warning("start %d attempt %d collapsed to the trivial solution; restarting", idx, attempt)
        if rep is None:
            continue
        if z2_check and rep.converged:
            twin = _run(prob, u0, -v0, opts_for(idx, "z2"))
            rep.z2_energy_gap = abs(reduced_total(prob, twin) - rep.energy)
            rep.z2_spinor_gap = float(np.max(np.abs(twin.point.v + rep.v))) if twin.converged else np.inf
            rep.z2_converged = twin.converged
        reports.append(rep)
    if not reports:
        raise RuntimeError("every start degenerated")
    ordered = sorted(reports, key=lambda r: (not r.converged, r.energy, r.start))
    best = ordered[0]
    best.starts = ordered
    return best


def reduced_total(prob: GeodesicProblem, res) -> float:
    return total_energy(prob, res.point.u, res.point.v)


@dataclass
class RefineReport:
    k_values: list
    reports: list
    energy_drift: list
    norm_drift: list


def refine_check(cfg: GeodesicConfig, k_list, **kwargs) -> RefineReport:
    """Re-solve at each truncation level; drifts compare consecutive levels."""
    k_list = list(k_list)
    if not k_list or any(b <= a for a, b in zip(k_list, k_list[1:])):
        raise ConfigError("k_list must be non-empty and strictly ascending")
    reports = []
    for k in k_list:
        sub = replace(cfg, k_max=k, m_phi=k if cfg.m_phi == cfg.k_max else cfg.m_phi,
                      n_grid=None if cfg.n_grid is None else max(cfg.n_grid, 8 * k))
        reports.append(solve_class(sub, **kwargs))
    e_drift = [b.energy - a.energy for a, b in zip(reports, reports[1:])]
    n_drift = [(b.psi_norm - a.psi_norm) / a.psi_norm for a, b in zip(reports, reports[1:])]
    return RefineReport(k_list, reports, e_drift, n_drift)


def maximizer_at(prob: GeodesicProblem, u, x):
    return maximize_on_halfspace(prob.ctx, u, x, MaximizerOptions(tol=prob.cfg.maximizer_tol))
