"""``dirac-nehari`` command-line entry point.

Exit codes: 0 ok, 2 non-convergence, 3 invalid input, 4 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import circle
from .errors import ChartError, ConfigError, DimensionError, GridTooSmallError
from .geodesic import GeodesicConfig, SolveReport, build_problem, el_residual, solve_class, total_energy
from .io import RunConfig, atomic_write, fmt, load_run_config, parse_solution, render_solution
from .nehari import MaximizerOptions, maximize_on_halfspace
from .oracles import GridSpec, Verdict, brute_force_halfspace_max, nehari_verdicts, random_toy
from .spectral import build_spectral_model

EXIT_OK, EXIT_NONCONVERGED, EXIT_INVALID, EXIT_VERIFY = 0, 2, 3, 4
THREADS_ENV = "DIRAC_NEHARI_THREADS"

log = logging.getLogger("dirac_nehari")


def _csv(header, rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _cell(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (float, np.floating)):
        return fmt(float(x))
    return x


def _emit(text: str, out_dir: Path | None, name: str):
    if out_dir is None:
        sys.stdout.write(text)
    else:
        atomic_write(out_dir / name, text)
        print(out_dir / name)


def cmd_spectrum(rc: RunConfig, out_dir):
    cfg = rc.geodesic
    prob = build_problem(cfg)
    phi = prob.loop(np.zeros(prob.u_size))
    mat, gram = circle.assemble_twisted_dirac(prob.domain, phi)
    defect = max(circle.hermiticity_defect(mat), circle.hermiticity_defect(gram))
    model = build_spectral_model(mat, None if prob.chart.is_flat else gram)
    rows = [(i, _cell(lam), _cell(defect)) for i, lam in enumerate(model.eigenvalues)]
    _emit(_csv(("index", "eigenvalue", "hermiticity_defect"), rows), out_dir, "spectrum.csv")
    return EXIT_OK


def _jsonl_logger(path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    fh = open(path, "w", encoding="utf-8")

    def write(rec):
        fh.write(json.dumps({k: (float(v) if isinstance(v, np.floating) else v) for k, v in rec.items()},
                            sort_keys=True) + "\n")

    return fh, write


def cmd_solve(rc: RunConfig, out_dir):
    out_dir = out_dir or Path(rc.out)
    cfg = rc.geodesic
    fh, write = _jsonl_logger(out_dir / "solve_log.jsonl")
    try:
        rep = solve_class(cfg, callback=write)
    finally:
        fh.close()
    prob = build_problem(cfg)
    atomic_write(out_dir / "solution.txt", render_solution(prob, rep))
    log.info("energy %.17g converged %s status %s", rep.energy, rep.converged, rep.status)
    print(out_dir / "solution.txt")
    return EXIT_OK if rep.converged else EXIT_NONCONVERGED


def verify_solution(text: str) -> list[Verdict]:
    """Recompute every invariant from the stored coefficients alone."""
    data = parse_solution(text)
    cfg = data.cfg
    prob = build_problem(cfg, data.winding)
    u = data.phi_coeffs.reshape(-1)
    psi = circle.SpinorField(data.psi_coeffs, prob.domain)
    x = psi.to_real()
    tol = max(1e-8, 10 * cfg.tol)
    out = nehari_verdicts(prob.ctx, u, x, tol=tol)
    rp, rs = el_residual(prob, u, x)
    out.append(Verdict("residual_phi", rp <= tol, rp, tol))
    out.append(Verdict("residual_psi", rs <= tol, rs, tol))
    energy = total_energy(prob, u, x)
    try:
        stored = float(data.footer["energy"])
    except ValueError as exc:
        raise ConfigError("footer energy is not a number") from exc
    gap = abs(energy - stored)
    bound = 1e-12 * max(1.0, abs(energy))
    out.append(Verdict("footer_energy", gap <= bound, gap, bound, f"recomputed {fmt(energy)}"))
    return out


def _verdict_csv(verdicts, prefix=()) -> list:
    return [tuple(prefix) + (v.name, _cell(v.passed), _cell(float(v.value)), _cell(float(v.threshold)), v.note)
            for v in verdicts]


def cmd_verify(path, out_dir):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    verdicts = verify_solution(text)
    _emit(_csv(("check", "passed", "value", "threshold", "note"), _verdict_csv(verdicts)), out_dir, "verify.csv")
    failed = [v.name for v in verdicts if not v.passed]
    if failed:
        log.error("verification failed: %s", ", ".join(failed))
        return EXIT_VERIFY
    return EXIT_OK


def _sweep_cfg(cfg: GeodesicConfig, axis: str, value) -> GeodesicConfig:
    if axis == "winding":
        return replace(cfg, winding=tuple(value))
    if axis == "p":
        return replace(cfg, p=float(value))
    k = int(value)
    return replace(cfg, k_max=k, m_phi=k if cfg.m_phi == cfg.k_max else cfg.m_phi,
                   n_grid=None if cfg.n_grid is None else max(cfg.n_grid, 8 * k))


def _sweep_point(args) -> SolveReport:
    cfg, axis, value = args
    return solve_class(_sweep_cfg(cfg, axis, value))


def cmd_sweep(rc: RunConfig, out_dir):
    if not rc.sweep_axis or not rc.sweep_values:
        raise ConfigError("sweep needs sweep_axis and a non-empty sweep_values list")
    jobs = [(rc.geodesic, rc.sweep_axis, v) for v in rc.sweep_values]
    for job in jobs:
        _sweep_cfg(*job)  # validate every row before running any
    if rc.workers > 1:
        with ProcessPoolExecutor(max_workers=rc.workers) as ex:
            reports = list(ex.map(_sweep_point, jobs))
    else:
        reports = [_sweep_point(j) for j in jobs]
    rows = []
    prev = None
    for v, r in zip(rc.sweep_values, reports):
        label = " ".join(str(t) for t in v) if isinstance(v, tuple) else v
        drift = "" if prev is None else _cell(r.energy - prev.energy)
        rows.append((label, _cell(r.converged), r.status, _cell(r.energy), _cell(r.residual_phi),
                     _cell(r.residual_psi), _cell(r.r_scalar), _cell(r.r_minus), _cell(r.psi_norm),
                     _cell(r.psi_plus), _cell(r.psi_minus), drift))
        prev = r
    header = ("axis_value", "converged", "status", "energy", "residual_phi", "residual_psi", "r_scalar",
              "r_minus", "psi_norm", "psi_plus", "psi_minus", "energy_drift")
    _emit(_csv(header, rows), out_dir or Path(rc.out), "sweep.csv")
    return EXIT_OK if any(r.converged for r in reports) else EXIT_NONCONVERGED


def oracle_verdicts(n_toys: int, seed: int, step: float = 1e-3) -> list[tuple[int, Verdict]]:
    out = []
    opts = MaximizerOptions(tol=1e-11, multistart=4, seed=seed)
    for i in range(n_toys):
        rng = np.random.default_rng([seed, i])
        toy = random_toy(rng)
        ctx = toy.context()
        v = rng.standard_normal(toy.dim)
        res = maximize_on_halfspace(ctx, np.zeros(0), v, opts)
        try:
            ora = brute_force_halfspace_max(toy, v, GridSpec(step=step))
        except GridTooSmallError as exc:
            out.append((i, Verdict("oracle_grid", False, np.nan, np.nan, str(exc))))
            continue
        d = float(np.max(np.abs(res.g - ora.g)))
        out.append((i, Verdict("oracle_agreement", d <= 10 * step, d, 10 * step)))
        out.append((i, Verdict("multistart", res.multistart_distance <= 1e-6, res.multistart_distance, 1e-6)))
        again = maximize_on_halfspace(ctx, np.zeros(0), res.g, opts)
        d = float(np.max(np.abs(again.g - res.g)))
        out.append((i, Verdict("idempotence", d <= 1e-8, d, 1e-8)))
        model = res.model
        a = model.coords(v).real
        a[model.index_nonpositive] = rng.standard_normal(model.index_nonpositive.size)
        a[model.index_plus] *= 2.5
        ray = maximize_on_halfspace(ctx, np.zeros(0), model.ambient(a), opts)
        d = float(np.max(np.abs(ray.g - res.g)))
        out.append((i, Verdict("ray_invariance", d <= 1e-8, d, 1e-8)))
        out += [(i, vd) for vd in nehari_verdicts(ctx, np.zeros(0), res.g, tol=1e-8)]
    return out


def cmd_oracle(rc: RunConfig, out_dir):
    verdicts = oracle_verdicts(rc.oracle_toys, rc.geodesic.seed, rc.oracle_step)
    rows = [(i,) + r for i, vd in verdicts for r in _verdict_csv([vd])]
    _emit(_csv(("toy", "check", "passed", "value", "threshold", "note"), rows), out_dir or Path(rc.out),
          "oracle.csv")
    return EXIT_OK if all(vd.passed for _, vd in verdicts) else EXIT_VERIFY


def _parser():
    ap = argparse.ArgumentParser(prog="dirac-nehari", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=("spectrum", "solve", "verify", "sweep", "oracle"))
    ap.add_argument("--config", required=True,
                    help="config file (for verify: the solution file to check)")
    ap.add_argument("--out", default=None, help="output directory (overrides the 'out' key)")
    ap.add_argument("--seed", type=int, default=None, help="seed override (unsigned 64-bit)")
    return ap


def _thread_limit():
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return None
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be positive")
    return n


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        limit = _thread_limit()
        out_dir = Path(args.out) if args.out else None
        with threadpool_limits(limits=limit):
            if args.command == "verify":
                return cmd_verify(args.config, out_dir)
            rc = load_run_config(args.config, args.seed)
            logging.getLogger().setLevel(rc.log_level)
            handler = {"spectrum": cmd_spectrum, "solve": cmd_solve, "sweep": cmd_sweep, "oracle": cmd_oracle}
            return handler[args.command](rc, out_dir)
    except (ConfigError, ChartError, DimensionError) as exc:
        log.error("invalid input: %s", exc)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
