"""Operators of the perturbed Dirac-geodesic problem on ``S^1 = R / 2 pi Z``.

Spinors use the anti-periodic spin structure: components are expanded in
``e^{iks} / sqrt(2 pi)`` with half-integer ``k``, so the untwisted operator
``D_0 = i d/ds`` has spectrum ``{-k}`` and no kernel.  Clifford
multiplication by ``d/ds`` is ``clifford_sign * i``.

Loops are ``phi(s) = winding * s + sum_m u_m B_m(s)`` with the real basis
``B = (1, cos s, ..., cos Ms, sin s, ..., sin Ms)``.

The twisted operator is assembled as the hermitian sesquilinear form

    int  1/2 i (<psi, g psi'> - <psi', g psi>) + i <psi, A psi>  ds

where ``A_ab = 1/2 (d_b g_ac - d_a g_bc) phi'^c`` is the antisymmetric part of
``g Gamma(phi')``.  Integrating the symmetric part by parts shows this equals
``int <psi, i nabla_s psi>_g``, and every quadrature of it is exactly hermitian.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .charts import Chart, FlatTorus
from .errors import ChartError, DimensionError

log = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True, eq=False)
class CircleDomain:
    k_max: int
    n_fiber: int = 1
    n_grid: int | None = None
    clifford_sign: int = 1

    def __post_init__(self):
        if self.k_max < 1 or self.n_fiber < 1:
            raise ValueError("k_max and n_fiber must be positive")
        if self.n_grid is None:
            object.__setattr__(self, "n_grid", 8 * self.k_max)
        if self.n_grid < 4 * self.k_max:
            raise ValueError(f"n_grid={self.n_grid} violates the aliasing guard n_grid >= 4 k_max")
        if self.clifford_sign not in (1, -1):
            raise ValueError("clifford_sign must be +1 or -1")

    @property
    def modes(self) -> np.ndarray:
        """Half-integer wavenumbers, ascending."""
        return np.arange(2 * self.k_max) - self.k_max + 0.5

    @property
    def n_modes(self) -> int:
        return 2 * self.k_max

    @property
    def n_coeffs(self) -> int:
        return 2 * self.k_max * self.n_fiber

    @property
    def nodes(self) -> np.ndarray:
        return TWO_PI * np.arange(self.n_grid) / self.n_grid

    @property
    def weight(self) -> float:
        return TWO_PI / self.n_grid

    @property
    def eval_matrix(self) -> np.ndarray:
        return np.exp(1j * np.outer(self.nodes, self.modes)) / np.sqrt(TWO_PI)

    @property
    def deriv_matrix(self) -> np.ndarray:
        return self.eval_matrix * (1j * self.modes)

    def refined(self, factor: int) -> "CircleDomain":
        return CircleDomain(self.k_max, self.n_fiber, self.n_grid * factor, self.clifford_sign)


@dataclass(frozen=True, eq=False)
class LoopMap:
    winding: np.ndarray
    coeffs: np.ndarray
    chart: Chart

    def __post_init__(self):
        w = np.asarray(self.winding, dtype=int).reshape(-1)
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim != 2 or c.shape[0] % 2 != 1 or c.shape[1] != self.chart.n:
            raise DimensionError(f"coefficient array must be (2M+1, {self.chart.n}), got {c.shape}")
        if w.shape != (self.chart.n,):
            raise DimensionError(f"winding must have length {self.chart.n}")
        if np.any(w != 0) and not self.chart.supports_winding:
            raise ChartError(f"chart {self.chart.name} does not carry winding classes")
        object.__setattr__(self, "winding", w)
        object.__setattr__(self, "coeffs", c)

    @property
    def m_phi(self) -> int:
        return (self.coeffs.shape[0] - 1) // 2

    @classmethod
    def constant(cls, chart, m_phi, point=None, winding=None):
        c = np.zeros((2 * m_phi + 1, chart.n))
        if point is not None:
            c[0] = point
        return cls(np.zeros(chart.n, int) if winding is None else winding, c, chart)

    def with_coeffs(self, coeffs) -> "LoopMap":
        return LoopMap(self.winding, np.reshape(coeffs, self.coeffs.shape), self.chart)


def loop_basis(m_phi: int, s):
    """Basis values and derivatives at ``s``: arrays of shape ``(len(s), 2M+1)``."""
    m = np.arange(1, m_phi + 1)
    ms = np.outer(s, m)
    val = np.hstack([np.ones((len(s), 1)), np.cos(ms), np.sin(ms)])
    der = np.hstack([np.zeros((len(s), 1)), -m * np.sin(ms), m * np.cos(ms)])
    return val, der


def loop_norms(m_phi: int) -> np.ndarray:
    """H^1 norms squared of the basis functions: ``int B^2 + B'^2``."""
    m = np.arange(1, m_phi + 1)
    return np.concatenate([[TWO_PI], np.pi * (1 + m**2), np.pi * (1 + m**2)])


def phi_nodes(domain: CircleDomain, phi: LoopMap):
    """``(phi(s_j), phi'(s_j))``, each of shape ``(n_grid, n)``."""
    s = domain.nodes
    val, der = loop_basis(phi.m_phi, s)
    y = np.outer(s, phi.winding) + val @ phi.coeffs
    ydot = phi.winding[None, :] + der @ phi.coeffs
    return y, ydot


@dataclass(frozen=True, eq=False)
class SpinorField:
    coeffs: np.ndarray
    domain: CircleDomain

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        shape = (self.domain.n_modes, self.domain.n_fiber)
        if c.shape != shape:
            raise DimensionError(f"spinor coefficients must have shape {shape}, got {c.shape}")
        object.__setattr__(self, "coeffs", c)

    def nodes(self) -> np.ndarray:
        return self.domain.eval_matrix @ self.coeffs

    def derivative_nodes(self) -> np.ndarray:
        return self.domain.deriv_matrix @ self.coeffs

    def to_real(self) -> np.ndarray:
        c = self.coeffs.reshape(-1)
        return np.concatenate([c.real, c.imag])

    @classmethod
    def from_real(cls, x, domain):
        x = np.asarray(x, dtype=float)
        m = domain.n_coeffs
        c = (x[:m] + 1j * x[m:]).reshape(domain.n_modes, domain.n_fiber)
        return cls(c, domain)

    def __neg__(self):
        return SpinorField(-self.coeffs, self.domain)


def realify(mat: np.ndarray) -> np.ndarray:
    """Real matrix of the real part of a hermitian form on ``[Re c; Im c]``."""
    re, im = mat.real, mat.imag
    return np.block([[re, -im], [im, re]])


@dataclass(frozen=True, eq=False)
class Nonlinearity:
    """``K(s, psi) = b(s) |psi|^{p+1} / (p+1)`` sampled at the quadrature nodes."""

    p: float
    b_values: np.ndarray
    p_below_two: bool = field(init=False)
    p_at_least_three: bool = field(init=False)

    def __post_init__(self):
        b = np.asarray(self.b_values, dtype=float)
        if self.p <= 1:
            raise ValueError(f"exponent p must exceed 1, got {self.p}")
        if b.ndim != 1 or np.min(b) <= 0:
            raise ValueError("b must be strictly positive at every node")
        object.__setattr__(self, "b_values", b)
        object.__setattr__(self, "p_below_two", self.p <= 2)
        object.__setattr__(self, "p_at_least_three", self.p >= 3)
        if self.p_below_two:
            log.warning("p=%g <= 2 lies outside the range p > 2 assumed for the geodesic problem", self.p)
        if self.p_at_least_three:
            log.debug("p=%g >= 3", self.p)

    @property
    def b_min(self) -> float:
        return float(np.min(self.b_values))

    @property
    def b_max(self) -> float:
        return float(np.max(self.b_values))

    @classmethod
    def from_function(cls, p, b, domain: CircleDomain):
        return cls(p, np.asarray(b(domain.nodes), dtype=float) * np.ones(domain.n_grid))

    def f(self, t, node=None):
        """Scalar profile ``f(s, t) = b(s) t^{p-1}``."""
        b = self.b_values if node is None else self.b_values[node]
        return b * np.asarray(t, dtype=float) ** (self.p - 1)


def _fiber_metric(domain, phi):
    if phi is None or phi.chart.is_flat:
        return None
    y, _ = phi_nodes(domain, phi)
    return phi.chart.metric(y)


def _sq_norm(psi_nodes, g):
    if g is None:
        return np.sum(psi_nodes.real**2 + psi_nodes.imag**2, axis=1)
    return np.real(np.einsum("ja,jab,jb->j", psi_nodes.conj(), g, psi_nodes))


def k_value(nl: Nonlinearity, psi: SpinorField, phi: LoopMap | None = None) -> float:
    dom = psi.domain
    q = _sq_norm(psi.nodes(), _fiber_metric(dom, phi))
    return float(dom.weight * np.sum(nl.b_values * q ** ((nl.p + 1) / 2)) / (nl.p + 1))


def k_gradient(nl: Nonlinearity, psi: SpinorField, phi: LoopMap | None = None) -> SpinorField:
    """L^2 gradient of ``int K``: pointwise ``b |psi|^{p-1} g psi`` projected on the modes."""
    dom = psi.domain
    g = _fiber_metric(dom, phi)
    pn = psi.nodes()
    q = _sq_norm(pn, g)
    gpsi = pn if g is None else np.einsum("jab,jb->ja", g, pn)
    pointwise = (dom.weight * nl.b_values * q ** ((nl.p - 1) / 2))[:, None] * gpsi
    return SpinorField(dom.eval_matrix.conj().T @ pointwise, dom)


def k_hessian_real(nl: Nonlinearity, psi: SpinorField, phi: LoopMap | None = None) -> np.ndarray:
    """Hessian of ``int K`` with respect to the realified coefficients."""
    dom = psi.domain
    n = dom.n_fiber
    g = _fiber_metric(dom, phi)
    if g is None:
        g = np.broadcast_to(np.eye(n), (dom.n_grid, n, n))
    e = dom.eval_matrix
    pn = e @ psi.coeffs
    q = _sq_norm(pn, g)
    p = nl.p
    alpha = dom.weight * nl.b_values * q ** ((p - 1) / 2)
    first = node_form(e, e, alpha[:, None, None] * g)
    with np.errstate(divide="ignore", invalid="ignore"):
        beta = np.where(q > 0, dom.weight * nl.b_values * (p - 1) * q ** ((p - 3) / 2), 0.0)
    gpsi = np.einsum("jab,jb->ja", g, pn)
    # z_j = E_j^H (g psi_j), realified per node
    z = np.einsum("jk,ja->jka", e.conj(), gpsi).reshape(dom.n_grid, -1)
    zr = np.hstack([z.real, z.imag])
    return realify(first) + (zr.T * beta) @ zr


def node_form(e_left, e_right, mats) -> np.ndarray:
    """``sum_j conj(e_left[j, k]) mats[j, a, b] e_right[j, k']`` indexed ``(k a), (k' b)``."""
    out = np.einsum("jk,jab,jl->kalb", e_left.conj(), mats, e_right)
    m = e_left.shape[1] * mats.shape[1]
    return out.reshape(m, m)


def untwisted_dirac(domain: CircleDomain) -> np.ndarray:
    """Matrix of ``D_0 = i d/ds`` (times the Clifford sign) in the mode basis."""
    diag = -domain.clifford_sign * np.repeat(domain.modes, domain.n_fiber)
    return np.diag(diag).astype(complex)


def _antisym_connection(dg, ydot):
    # A_ab = 1/2 (d_b g_ac - d_a g_bc) phi'^c
    return 0.5 * (np.einsum("jbac,jc->jab", dg, ydot) - np.einsum("jabc,jc->jab", dg, ydot))


def assemble_twisted_dirac(domain: CircleDomain, phi: LoopMap):
    """Return ``(matrix, gram)`` of ``D_phi`` as complex hermitian matrices."""
    if phi.chart.n != domain.n_fiber:
        raise DimensionError(f"chart dimension {phi.chart.n} != n_fiber {domain.n_fiber}")
    if phi.chart.is_flat:
        return untwisted_dirac(domain), np.eye(domain.n_coeffs, dtype=complex)
    y, ydot = phi_nodes(domain, phi)
    try:
        g = phi.chart.metric(y)
        dg = phi.chart.metric_grad(y)
    except Exception as exc:  # noqa: BLE001 - chart plug-ins are user code
        raise ChartError(f"chart evaluation failed: {exc}") from exc
    if not (np.all(np.isfinite(g)) and np.all(np.isfinite(dg))):
        raise ChartError("chart returned non-finite values at a quadrature node")
    w = domain.weight
    e, ed = domain.eval_matrix, domain.deriv_matrix
    a = _antisym_connection(dg, ydot)
    mat = 0.5j * (node_form(e, ed, w * g) - node_form(ed, e, w * g)) + 1j * node_form(e, e, w * a)
    gram = node_form(e, e, w * g)
    return domain.clifford_sign * mat, gram


def connection_matrix(domain: CircleDomain, phi: LoopMap, velocity) -> np.ndarray:
    """``i int <psi, g Gamma(phi(s))(velocity(s)) psi>``: the term linear in the velocity."""
    y, _ = phi_nodes(domain, phi)
    g = phi.chart.metric(y)
    gam = phi.chart.christoffel(y)
    b = np.einsum("jil,jlck,jc->jik", g, gam, np.asarray(velocity))
    e = domain.eval_matrix
    return domain.clifford_sign * 1j * node_form(e, e, domain.weight * b)


def hermiticity_defect(matrix) -> float:
    return float(np.abs(matrix - matrix.conj().T).max())


def dirac_form(domain, phi, psi: SpinorField) -> float:
    """``int <psi, D_phi psi>`` (real)."""
    mat, _ = assemble_twisted_dirac(domain, phi)
    c = psi.coeffs.reshape(-1)
    return float(np.real(c.conj() @ mat @ c))


def phi_energy(phi: LoopMap, domain: CircleDomain) -> float:
    y, ydot = phi_nodes(domain, phi)
    if phi.chart.is_flat:
        dens = np.sum(ydot**2, axis=1)
    else:
        dens = np.einsum("ja,jab,jb->j", ydot, phi.chart.metric(y), ydot)
    return float(0.5 * domain.weight * np.sum(dens))


def phi_gradient(phi: LoopMap, psi: SpinorField, nl: Nonlinearity, precondition: bool = True) -> np.ndarray:
    """Gradient in the loop coefficients of ``E(phi, psi)`` at fixed spinor coefficients.

    With ``precondition=True`` the partial derivatives are mapped by
    ``(-Delta + 1)^{-1}`` on the real Fourier modes (the H^1 Riesz map);
    otherwise the raw partials are returned.  Shape ``(2M+1, n)``.
    """
    dom = psi.domain
    chart = phi.chart
    if not chart.is_flat:
        for attr in ("metric_grad", "metric_hess"):
            try:
                getattr(chart, attr)(np.zeros((1, chart.n)))
            except NotImplementedError as exc:
                raise ChartError(f"chart {chart.name} lacks {attr} (curvature data)") from exc
    y, ydot = phi_nodes(dom, phi)
    val, der = loop_basis(phi.m_phi, dom.nodes)
    w = dom.weight
    if chart.is_flat:
        d_y = np.zeros_like(y)
        d_ydot = ydot.copy()
    else:
        g = chart.metric(y)
        dg = chart.metric_grad(y)
        d2g = chart.metric_hess(y)
        pn = psi.nodes()
        pd = psi.derivative_nodes()
        outer = np.einsum("ja,jb->jab", pn.conj(), pn)
        sig, pi = outer.real, outer.imag
        xi = np.einsum("ja,jb->jab", pn.conj(), pd).imag
        q = np.einsum("jab,jab->j", g, sig)
        sgn = dom.clifford_sign
        # bosonic kinetic density 1/2 g(phi', phi')
        d_y = 0.5 * np.einsum("jlab,ja,jb->jl", dg, ydot, ydot)
        d_ydot = np.einsum("jab,jb->ja", g, ydot)
        # Dirac density -1/2 sgn (g_ab Xi_ab + A_ab Pi_ab)
        dA = 0.5 * (
            np.einsum("jlbac,jc->jlab", d2g, ydot) - np.einsum("jlabc,jc->jlab", d2g, ydot)
        )
        d_y += -0.5 * sgn * (np.einsum("jlab,jab->jl", dg, xi) + np.einsum("jlab,jab->jl", dA, pi))
        dA_dv = 0.5 * (np.einsum("jbac->jcab", dg) - np.einsum("jabc->jcab", dg))
        d_ydot += -0.5 * sgn * np.einsum("jcab,jab->jc", dA_dv, pi)
        # nonlinearity density b q^{(p+1)/2} / (p+1)
        kfac = 0.5 * nl.b_values * q ** ((nl.p - 1) / 2)
        d_y -= kfac[:, None] * np.einsum("jlab,jab->jl", dg, sig)
    grad = w * (val.T @ d_y + der.T @ d_ydot)
    if precondition:
        grad = grad / loop_norms(phi.m_phi)[:, None]
    return grad


def total_energy(phi: LoopMap, psi: SpinorField, nl: Nonlinearity) -> float:
    dom = psi.domain
    return phi_energy(phi, dom) + 0.5 * dirac_form(dom, phi, psi) - k_value(nl, psi, phi)


@dataclass
class AuditReport:
    passed: bool
    c1: float
    c2: float
    samples: int
    violations: list = field(default_factory=list)


def _k_point(b, p, r):
    return b * np.sum(r * r, axis=-1) ** ((p + 1) / 2) / (p + 1)


def hypothesis_audit(nl: Nonlinearity, sample_count: int, seed: int = 0, n_fiber: int = 1) -> AuditReport:
    """Check the structural hypotheses on the power nonlinearity pointwise.

    Spinor values are sampled in ``R^{2n}`` (real and imaginary parts).
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    p = nl.p
    c2 = nl.b_min * (p - 1) / (p + 1)
    c1 = p * nl.b_max
    violations = []
    nodes = rng.integers(0, nl.b_values.shape[0], size=sample_count)
    scales = 10.0 ** rng.uniform(-3, 2, size=sample_count)
    dirs = rng.standard_normal((sample_count, 2 * n_fiber))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    r = dirs * scales[:, None]
    r[0] = 0.0
    b = nl.b_values[nodes]
    rad = np.linalg.norm(r, axis=1)
    kval = _k_point(b, p, r)
    gradk = (b * rad ** (p - 1))[:, None] * r
    pair = np.sum(gradk * r, axis=1)
    for i in range(sample_count):
        tol = 1e-12 * max(1.0, pair[i])
        if not c2 * rad[i] ** (p + 1) + 2 * kval[i] <= pair[i] + tol:
            violations.append(("H2", int(nodes[i]), float(rad[i])))
        if kval[i] < 0:
            violations.append(("H4-sign", int(nodes[i]), float(rad[i])))
        # Hessian spectrum of b|r|^{p+1}/(p+1) is b|r|^{p-1} {1, p}
        hess_max = p * b[i] * rad[i] ** (p - 1)
        if hess_max > c1 * (1 + rad[i] ** (p - 1)) * (1 + 1e-12):
            violations.append(("H1", int(nodes[i]), float(rad[i])))
        if rad[i] > 0:
            ratios = [_k_point(b[i], p, lam * r[i]) / lam**2 for lam in (1.0, 10.0, 100.0)]
            if not (ratios[0] < ratios[1] < ratios[2]):
                violations.append(("H4-growth", int(nodes[i]), float(rad[i])))
            t1, t2 = sorted(rng.uniform(0, 2 * rad[i], size=2))
            if t1 < t2 and not nl.f(t1, nodes[i]) < nl.f(t2, nodes[i]):
                violations.append(("H3", int(nodes[i]), float(rad[i])))
    if np.any(nl.f(0.0) != 0):
        violations.append(("H3-zero", -1, 0.0))
    return AuditReport(not violations, c1, c2, sample_count, violations)


def flat_loop(domain: CircleDomain, winding, m_phi=None) -> LoopMap:
    winding = np.atleast_1d(np.asarray(winding, dtype=int))
    m_phi = domain.k_max if m_phi is None else m_phi
    return LoopMap(winding, np.zeros((2 * m_phi + 1, domain.n_fiber)), FlatTorus(domain.n_fiber))
