"""Target-manifold charts.

A chart supplies the metric ``g_ij(y)`` and its first and second coordinate
derivatives, vectorized over a leading axis of points.  Christoffel symbols
and the Riemann tensor are derived from these.  Index layout:

* ``metric(Y)[j, a, b]              = g_ab(y_j)``
* ``metric_grad(Y)[j, l, a, b]      = d_l g_ab(y_j)``
* ``metric_hess(Y)[j, l, m, a, b]   = d_l d_m g_ab(y_j)``
* ``christoffel(Y)[j, i, a, b]      = Gamma^i_ab(y_j)``
* ``curvature(Y)[j, i, a, k, l]     = R^i_akl(y_j)`` (``R(d_k, d_l) d_a``)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


class Chart:
    name = "chart"
    n: int
    is_flat = False
    supports_winding = False

    def metric(self, y):
        raise NotImplementedError

    def metric_grad(self, y):
        raise NotImplementedError

    def metric_hess(self, y):
        raise NotImplementedError

    def christoffel(self, y):
        g = self.metric(y)
        dg = self.metric_grad(y)
        ginv = np.linalg.inv(g)
        # Gamma_{l,ab} = 1/2 (d_a g_lb + d_b g_la - d_l g_ab)
        low = 0.5 * (
            np.einsum("jalb->jlab", dg) + np.einsum("jbla->jlab", dg) - dg
        )
        return np.einsum("jil,jlab->jiab", ginv, low)

    def christoffel_grad(self, y):
        """``[j, m, i, a, b] = d_m Gamma^i_ab``."""
        g = self.metric(y)
        dg = self.metric_grad(y)
        d2g = self.metric_hess(y)
        ginv = np.linalg.inv(g)
        low = 0.5 * (
            np.einsum("jalb->jlab", dg) + np.einsum("jbla->jlab", dg) - dg
        )
        dlow = 0.5 * (
            np.einsum("jmalb->jmlab", d2g)
            + np.einsum("jmbla->jmlab", d2g)
            - d2g
        )
        dginv = -np.einsum("jip,jmpq,jql->jmil", ginv, dg, ginv)
        return np.einsum("jmil,jlab->jmiab", dginv, low) + np.einsum(
            "jil,jmlab->jmiab", ginv, dlow
        )

    def curvature(self, y):
        gam = self.christoffel(y)
        dgam = self.christoffel_grad(y)
        # R^i_akl = d_k Gamma^i_la - d_l Gamma^i_ka + Gamma^i_km Gamma^m_la - Gamma^i_lm Gamma^m_ka
        r = np.einsum("jkila->jiakl", dgam) - np.einsum("jlika->jiakl", dgam)
        r += np.einsum("jikm,jmla->jiakl", gam, gam) - np.einsum("jilm,jmka->jiakl", gam, gam)
        return r


@dataclass(frozen=True)
class FlatTorus(Chart):
    """``R^n / 2 pi Z^n`` with the Euclidean metric."""

    n: int

    name = "flat_torus"
    is_flat = True
    supports_winding = True

    def metric(self, y):
        y = np.atleast_2d(y)
        return np.broadcast_to(np.eye(self.n), (y.shape[0], self.n, self.n)).copy()

    def metric_grad(self, y):
        y = np.atleast_2d(y)
        return np.zeros((y.shape[0],) + (self.n,) * 3)

    def metric_hess(self, y):
        y = np.atleast_2d(y)
        return np.zeros((y.shape[0],) + (self.n,) * 4)


@dataclass(frozen=True)
class MetricChart(Chart):
    """Chart defined by user callables for ``g``, ``dg`` and ``d2g``."""

    n: int
    g: Callable
    dg: Callable
    d2g: Callable
    label: str = "metric_chart"

    @property
    def name(self):
        return self.label

    def metric(self, y):
        return self.g(np.atleast_2d(y))

    def metric_grad(self, y):
        return self.dg(np.atleast_2d(y))

    def metric_hess(self, y):
        return self.d2g(np.atleast_2d(y))


def _sphere_factor(y):
    return 1.0 + np.sum(y * y, axis=-1)


def _sphere_g(y):
    c = 4.0 / _sphere_factor(y) ** 2
    return c[:, None, None] * np.eye(2)


def _sphere_dg(y):
    r = _sphere_factor(y)
    dc = -16.0 * y / r[:, None] ** 3
    return dc[:, :, None, None] * np.eye(2)


def _sphere_d2g(y):
    r = _sphere_factor(y)
    eye = np.eye(2)
    d2c = -16.0 * eye / r[:, None, None] ** 3 + 96.0 * np.einsum("jl,jm->jlm", y, y) / r[:, None, None] ** 4
    return d2c[:, :, :, None, None] * eye


def round_sphere() -> MetricChart:
    """Unit 2-sphere in stereographic coordinates, ``g = 4 |dy|^2 / (1+|y|^2)^2``."""
    return MetricChart(2, _sphere_g, _sphere_dg, _sphere_d2g, label="round_sphere")


def chart_from_name(name: str, n_fiber: int) -> Chart:
    if name == "flat_torus":
        return FlatTorus(n_fiber)
    if name == "round_sphere":
        if n_fiber != 2:
            raise ValueError("round_sphere requires n_fiber = 2")
        return round_sphere()
    raise ValueError(f"unknown chart {name!r}")
