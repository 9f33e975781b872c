"""Flat ``key = value`` configs and the text solution format."""

from __future__ import annotations

import dataclasses
import datetime as _dt
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .geodesic import GeodesicConfig, GeodesicProblem, SolveReport

FORMAT_VERSION = 1
CIRCLE_LENGTH = 2.0 * np.pi
SPIN_STRUCTURE = "anti-periodic"

_INT_KEYS = {"k_max", "m_phi", "n_grid", "n_fiber", "max_iter", "seed", "multistart", "clifford_sign"}
_FLOAT_KEYS = {"p", "tol", "maximizer_tol", "phi_init_scale"}
_FLOAT_TUPLE_KEYS = {"b_cos", "b_sin"}
_INT_TUPLE_KEYS = {"winding"}
_STR_KEYS = {"chart"}
GEODESIC_KEYS = _INT_KEYS | _FLOAT_KEYS | _FLOAT_TUPLE_KEYS | _INT_TUPLE_KEYS | _STR_KEYS

# keys that only steer the harness
RUN_KEYS = {"out", "log_level", "sweep_axis", "sweep_values", "workers", "oracle_toys", "oracle_step"}


def fmt(x: float) -> str:
    return "%.17g" % x


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    try:
        if key in _INT_KEYS:
            return None if raw.lower() == "none" else int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in _FLOAT_TUPLE_KEYS:
            return tuple(float(t) for t in raw.split(",") if t.strip())
        if key in _INT_TUPLE_KEYS:
            return tuple(int(t) for t in raw.split(",") if t.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc
    return raw


def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ", ".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return fmt(value)
    return str(value)


def parse_key_values(lines) -> dict:
    out = {}
    for n, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"line {n}: expected 'key = value', got {line.strip()!r}")
        key, value = (t.strip() for t in text.split("=", 1))
        if key in out:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        out[key] = value
    return out


@dataclass
class RunConfig:
    geodesic: GeodesicConfig
    out: str = "."
    log_level: str = "INFO"
    sweep_axis: str | None = None
    sweep_values: list = field(default_factory=list)
    workers: int = 1
    oracle_toys: int = 20
    oracle_step: float = 1e-3


def _sweep_values(axis: str | None, raw: str | None) -> list:
    if raw is None:
        return []
    items = [t.strip() for t in raw.split(";") if t.strip()]
    try:
        if axis == "winding":
            return [tuple(int(x) for x in t.split(",")) for t in items]
        if axis == "p":
            return [float(t) for t in items]
        if axis == "k_max":
            return [int(t) for t in items]
    except ValueError as exc:
        raise ConfigError(f"bad sweep_values {raw!r}") from exc
    raise ConfigError(f"sweep_axis must be winding, p or k_max, got {axis!r}")


def run_config_from_dict(raw: dict, seed: int | None = None) -> RunConfig:
    unknown = sorted(set(raw) - GEODESIC_KEYS - RUN_KEYS)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    geo = {k: _parse_value(k, v) for k, v in raw.items() if k in GEODESIC_KEYS}
    if seed is not None:
        geo["seed"] = int(seed)
    try:
        cfg = GeodesicConfig(**geo)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    axis = raw.get("sweep_axis")
    level = raw.get("log_level", "INFO").upper()
    if level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        raise ConfigError(f"bad log_level {level!r}")
    try:
        return RunConfig(
            geodesic=cfg,
            out=raw.get("out", "."),
            log_level=level,
            sweep_axis=axis,
            sweep_values=_sweep_values(axis, raw.get("sweep_values")) if axis or "sweep_values" in raw else [],
            workers=int(raw.get("workers", 1)),
            oracle_toys=int(raw.get("oracle_toys", 20)),
            oracle_step=float(raw.get("oracle_step", 1e-3)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_run_config(path, seed: int | None = None) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return run_config_from_dict(parse_key_values(text.splitlines()), seed)


def config_items(cfg: GeodesicConfig) -> list[tuple[str, str]]:
    return [(f.name, _format_value(getattr(cfg, f.name))) for f in dataclasses.fields(cfg)]


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _signed_index(j: int, m_phi: int) -> int:
    # basis order (1, cos 1..M, sin 1..M) -> 0, +m for cos, -m for sin
    if j == 0:
        return 0
    return j if j <= m_phi else -(j - m_phi)


def _basis_index(m: int, m_phi: int) -> int:
    if abs(m) > m_phi:
        raise ConfigError(f"PHI index {m} exceeds m_phi={m_phi}")
    return m if m >= 0 else m_phi - m


def render_solution(prob: GeodesicProblem, rep: SolveReport, created: str | None = None) -> str:
    cfg = prob.cfg
    created = created or _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    lines = [
        "# dirac-nehari solution",
        f"# version = {FORMAT_VERSION}",
        f"# created = {created}",
        f"# clifford_sign = {cfg.clifford_sign}",
        f"# circle_length = {fmt(CIRCLE_LENGTH)}",
        f"# spin_structure = {SPIN_STRUCTURE}",
    ]
    lines += [f"# {k} = {v}" for k, v in config_items(cfg) if k not in ("winding", "clifford_sign")]
    for c, w in enumerate(prob.winding):
        lines.append(f"WINDING, {c}, {int(w)}")
    coeffs = np.reshape(rep.u, prob.u_shape)
    for j in range(coeffs.shape[0]):
        for c in range(coeffs.shape[1]):
            lines.append(f"PHI, {_signed_index(j, cfg.m_phi)}, {c}, {fmt(coeffs[j, c])}")
    psi = prob.spinor(rep.v).coeffs
    knum = (2 * prob.domain.modes).astype(int)
    for i, kn in enumerate(knum):
        for c in range(psi.shape[1]):
            z = psi[i, c]
            lines.append(f"PSI, {kn}, {c}, {fmt(z.real)}, {fmt(z.imag)}")
    lines += [
        f"# energy = {fmt(rep.energy)}",
        f"# residual_phi = {fmt(rep.residual_phi)}",
        f"# residual_psi = {fmt(rep.residual_psi)}",
        f"# converged = {str(rep.converged).lower()}",
    ]
    return "\n".join(lines) + "\n"


@dataclass
class SolutionData:
    header: dict
    footer: dict
    cfg: GeodesicConfig
    winding: np.ndarray
    phi_coeffs: np.ndarray
    psi_coeffs: np.ndarray


_FOOTER_KEYS = ("energy", "residual_phi", "residual_psi", "converged")
_CONVENTION_KEYS = ("version", "created", "circle_length", "spin_structure")


def parse_solution(text: str) -> SolutionData:
    """Parse a solution file; every malformation raises :class:`ConfigError`."""
    header, footer = {}, {}
    winding, phi_rows, psi_rows = {}, [], []
    for n, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            body = s[1:].strip()
            if "=" in body:
                k, v = (t.strip() for t in body.split("=", 1))
                (footer if k in _FOOTER_KEYS else header)[k] = v
            continue
        parts = [t.strip() for t in s.split(",")]
        try:
            tag = parts[0]
            if tag == "WINDING" and len(parts) == 3:
                winding[int(parts[1])] = int(parts[2])
            elif tag == "PHI" and len(parts) == 4:
                phi_rows.append((int(parts[1]), int(parts[2]), float(parts[3])))
            elif tag == "PSI" and len(parts) == 5:
                psi_rows.append((int(parts[1]), int(parts[2]), float(parts[3]), float(parts[4])))
            else:
                raise ValueError
        except ValueError as exc:
            raise ConfigError(f"line {n}: malformed row {s!r}") from exc
    missing = [k for k in _FOOTER_KEYS if k not in footer]
    if missing:
        raise ConfigError(f"truncated solution file: missing footer {', '.join(missing)}")
    if header.get("version") != str(FORMAT_VERSION):
        raise ConfigError(f"unsupported version {header.get('version')!r}")
    if header.get("spin_structure") != SPIN_STRUCTURE:
        raise ConfigError(f"unsupported spin structure {header.get('spin_structure')!r}")
    geo = {k: v for k, v in header.items() if k not in _CONVENTION_KEYS}
    geo["winding"] = ", ".join(str(winding[c]) for c in sorted(winding))
    raw_cfg = {k: _parse_value(k, v) for k, v in geo.items()}
    unknown = sorted(set(raw_cfg) - GEODESIC_KEYS)
    if unknown:
        raise ConfigError(f"unknown header key(s): {', '.join(unknown)}")
    try:
        cfg = GeodesicConfig(**raw_cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    n = cfg.n_fiber
    if sorted(winding) != list(range(n)):
        raise ConfigError("WINDING rows do not cover every component")
    phi = np.full((2 * cfg.m_phi + 1, n), np.nan)
    for m, c, val in phi_rows:
        if not 0 <= c < n:
            raise ConfigError(f"PHI component {c} out of range")
        phi[_basis_index(m, cfg.m_phi), c] = val
    modes = (2 * (np.arange(2 * cfg.k_max) - cfg.k_max + 0.5)).astype(int)
    pos = {int(k): i for i, k in enumerate(modes)}
    psi = np.full((2 * cfg.k_max, n), np.nan + 0j)
    for kn, c, re, im in psi_rows:
        if kn not in pos or not 0 <= c < n:
            raise ConfigError(f"PSI row ({kn}, {c}) out of range")
        psi[pos[kn], c] = re + 1j * im
    if np.isnan(phi).any() or np.isnan(psi.real).any():
        raise ConfigError("solution file is missing PHI or PSI rows")
    return SolutionData(header, footer, cfg, np.array([winding[c] for c in range(n)]), phi, psi)
