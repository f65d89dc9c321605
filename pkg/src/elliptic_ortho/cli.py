"""Command-line entry point ``elliptic-ortho``.

Commands: ``curve-info``, ``ortho``, ``density``, ``rhp-verify``.  Each reads
one JSON configuration, writes deterministic data files into the output
directory and a separate ``manifest-<command>.json`` with run metadata.

Exit codes: 0 success, 2 configuration error, 3 numerical certificate
failure, 4 precision escalation required but disabled.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import platform
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .asym import (
    make_gfunction,
    make_model_matrix,
    make_szego,
    norm_asym,
    pi_asym_on_gamma,
    zero_cdf,
    zero_density,
)
from .curve import RealCurve, Side, from_roots, from_tau
from .exact import PrecisionEscalationRequired, Weight, eval_section, moments, orthogonal_section, zeros
from .rhp import (
    BelowAsymptoticRegime,
    UnsolvableRHP,
    c0,
    kernel_A,
    nonabelian_cauchy,
    omega0,
    omega0_zeta,
    reconstruct_Y11,
    solve_scalar_rhp,
    solve_R,
    tyurin,
)

log = logging.getLogger("elliptic_ortho")

EXIT_OK, EXIT_CONFIG, EXIT_CERT, EXIT_ESCALATION = 0, 2, 3, 4
THREADS_ENV = "ELLIPTIC_ORTHO_THREADS"


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"config field '{field_name}': {message}")


class CertificateFailure(ArithmeticError):
    pass


@dataclass
class RunConfig:
    curve: RealCurve
    curve_spec: dict
    divisor: float
    weight: Weight
    n_min: int = 2
    n_max: int = 12
    quadrature_n: int = 256
    precision: str = "double"
    allow_escalation: bool = True
    output_dir: Path = Path("out")
    samples: int = 256
    rhp_grid: int = 256
    histogram_bins: int = 16
    extra: dict = field(default_factory=dict)


def _num(d, key, kind=float, default=None, required=False):
    if key not in d:
        if required:
            raise ConfigError(key, "missing required field")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(key, f"expected a number, got {v!r}")
    if kind is int:
        if float(v) != int(v):
            raise ConfigError(key, f"expected an integer, got {v!r}")
        return int(v)
    return float(v)


def parse_config(raw: dict, precision: str | None = None, quadrature: int | None = None,
                 out: str | None = None) -> RunConfig:
    """Validate a configuration document; raises :class:`ConfigError` naming the field."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "configuration must be a JSON object")
    cspec = raw.get("curve")
    if not isinstance(cspec, dict):
        raise ConfigError("curve", "expected an object with 'roots' or 'tau_im'")
    try:
        if "roots" in cspec:
            r = cspec["roots"]
            if not (isinstance(r, list) and len(r) == 3 and all(
                    isinstance(x, (int, float)) and not isinstance(x, bool) for x in r)):
                raise ConfigError("curve.roots", "expected three real numbers")
            curve = from_roots(*r)
        elif "tau_im" in cspec:
            t = _num(cspec, "tau_im")
            if not t > 0:
                raise ConfigError("curve.tau_im", "must be positive")
            s = _num(cspec, "scale", default=1.0)
            if not s > 0:
                raise ConfigError("curve.scale", "must be positive")
            curve = from_tau(1j * t, s)
        else:
            raise ConfigError("curve", "expected 'roots' or 'tau_im'")
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("curve", str(exc)) from None

    d = _num(raw, "divisor", required=True)
    if not 0.0 < d < 1.0:
        raise ConfigError("divisor", f"must lie in the open interval (0, 1), got {d}")

    wspec = raw.get("weight", {})
    if not isinstance(wspec, dict):
        raise ConfigError("weight", "expected an object with 'cos' and 'sin' lists")
    coeffs = {}
    for key in ("cos", "sin"):
        v = wspec.get(key, [])
        if not (isinstance(v, list) and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v)):
            raise ConfigError(f"weight.{key}", "expected a list of real numbers")
        coeffs[key] = tuple(float(x) for x in v)
    weight = Weight(coeffs["cos"], coeffs["sin"])

    nr = raw.get("n_range", [2, 12])
    if not (isinstance(nr, list) and len(nr) == 2 and all(isinstance(x, int) and not isinstance(x, bool) for x in nr)):
        raise ConfigError("n_range", "expected [n_min, n_max] integers")
    n_min, n_max = nr
    if not 1 <= n_min <= n_max <= 16:
        raise ConfigError("n_range", "need 1 <= n_min <= n_max <= 16")

    qn = quadrature if quadrature is not None else _num(raw, "quadrature_n", int, 256)
    if qn < 64 or qn & (qn - 1):
        raise ConfigError("quadrature_n", f"must be a power of two >= 64, got {qn}")
    prec = precision or raw.get("precision", "double")
    if prec not in ("double", "extended"):
        raise ConfigError("precision", f"must be 'double' or 'extended', got {prec!r}")
    esc = raw.get("allow_escalation", True)
    if not isinstance(esc, bool):
        raise ConfigError("allow_escalation", "expected true or false")
    samples = _num(raw, "samples", int, 256)
    if samples < 8:
        raise ConfigError("samples", "must be at least 8")
    grid = _num(raw, "rhp_grid", int, 256)
    if grid < 32:
        raise ConfigError("rhp_grid", "must be at least 32")
    bins = _num(raw, "histogram_bins", int, 16)
    if bins < 1:
        raise ConfigError("histogram_bins", "must be positive")
    outdir = Path(out or raw.get("output_dir", "out"))
    return RunConfig(curve, cspec, d, weight, n_min, n_max, qn, prec, esc, outdir, samples, grid, bins)


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "0")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(THREADS_ENV, f"expected a non-negative integer, got {raw!r}") from None
    if n < 0:
        raise ConfigError(THREADS_ENV, "must be non-negative")
    return n if n > 0 else (os.cpu_count() or 1)


# ---------------------------------------------------------------- output helpers


def _fmt(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


def write_atomic(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: Path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) if not isinstance(x, str) else x for x in r])
    write_atomic(path, buf.getvalue())


def write_json(path: Path, obj):
    write_atomic(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _curve_dict(c: RealCurve) -> dict:
    return {"tau_im": c.tau_im, "e1": c.e1, "e2": c.e2, "e3": c.e3, "scale": c.scale,
            "omega1": c.omega1, "g2": c.g2, "g3": c.g3}


# ---------------------------------------------------------------- commands


def _moments(cfg: RunConfig):
    return moments(cfg.curve, cfg.divisor, cfg.weight, n_max=cfg.n_max, N=cfg.quadrature_n,
                   precision=cfg.precision, allow_escalation=cfg.allow_escalation)


def cmd_curve_info(cfg: RunConfig) -> dict:
    c = cfg.curve
    gf = make_gfunction(c)
    rep = _curve_dict(c)
    rep.update({"ell": gf.ell, "c0": c0(c, gf=gf),
                "K_squared_residual": gf.K2_residual,
                "K_squared_printed_form_residual": gf.K2_printed_residual})
    tyr = {}
    for parity in ("even", "odd"):
        mm = make_model_matrix(parity, cfg.divisor, c)
        ty = tyurin(mm)
        tyr[parity] = {"points": [[t.real, t.imag] for t in ty.points],
                       "null_vector_residuals": list(ty.residuals),
                       "abs_det_P": abs(ty.det_P)}
    rep["tyurin"] = tyr
    write_json(cfg.output_dir / "curve_info.json", rep)
    return rep


def cmd_ortho(cfg: RunConfig) -> dict:
    c, d = cfg.curve, cfg.divisor
    mom = _moments(cfg)
    gf = make_gfunction(c)
    sz = make_szego(c, cfg.weight)
    s = np.arange(cfg.samples) / cfg.samples

    def one(n):
        sec = orthogonal_section(mom, n)
        ex = eval_section(sec, c, d, s + c.tau / 2).real
        asy = pi_asym_on_gamma(n, c, d, gf, sz, make_model_matrix(n, d, c), s)
        gz, az = zeros(sec, c, d)
        na = norm_asym(n, c, d, sz, gf) if n >= 2 else None
        return n, sec, ex, asy, gz, az, na

    ns = list(range(cfg.n_min, cfg.n_max + 1))
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        results = list(pool.map(one, ns))

    zero_rows, norm_rows, max_err = [], [], {}
    for n, sec, ex, asy, gz, az, na in results:
        err = np.abs(ex - asy)
        write_csv(cfg.output_dir / f"ortho_n{n:02d}.csv", ["s", "exact", "asym", "abs_error"],
                  zip(s, ex, asy, err))
        for z in gz:
            zero_rows.append([str(n), "gamma", z])
        if az is not None:
            zero_rows.append([str(n), "alpha", az])
        norm_rows.append([str(n), sec.norm_sq, na, None if na is None else sec.norm_sq / na])
        max_err[n] = float(err.max() / np.abs(ex).max())
    write_csv(cfg.output_dir / "zeros.csv", ["n", "oval", "position"], zero_rows)
    write_csv(cfg.output_dir / "norms.csv", ["n", "exact", "asym", "ratio"], norm_rows)
    errs = [max_err[n] for n in ns]
    mono = all(b < a for a, b in zip(errs, errs[1:]))
    log.info("relative max abs_error by n: %s (strictly decreasing: %s)",
             ", ".join(f"{n}:{e:.2e}" for n, e in zip(ns, errs)), mono)
    return {"relative_max_error": {str(k): v for k, v in max_err.items()}, "monotone": mono,
            "moment_precision": mom.precision}


def cmd_density(cfg: RunConfig) -> dict:
    c, d = cfg.curve, cfg.divisor
    mom = _moments(cfg)
    sec = orthogonal_section(mom, cfg.n_max)
    gz, _ = zeros(sec, c, d)
    s = np.arange(cfg.samples) / cfg.samples
    dens = zero_density(c, s)
    hist, edges = np.histogram(gz, bins=cfg.histogram_bins, range=(0.0, 1.0))
    hist = hist / (len(gz) * np.diff(edges))
    idx = np.minimum((s * cfg.histogram_bins).astype(int), cfg.histogram_bins - 1)
    write_csv(cfg.output_dir / "density.csv", ["s", "dmu0_ds", "histogram"], zip(s, dens, hist[idx]))
    emp = np.arange(1, len(gz) + 1) / len(gz)
    cdf = zero_cdf(c, np.array(gz))
    ks = float(max(np.max(np.abs(emp - cdf)), np.max(np.abs(emp - 1 / len(gz) - cdf))))
    return {"total_mass": float(dens.mean()), "kolmogorov_distance": ks, "n": cfg.n_max}


def _cert(name, residual, threshold, cmp="<"):
    residual = float(residual)
    ok = residual < threshold if cmp == "<" else residual > threshold
    return {"name": name, "residual": residual, "threshold": threshold, "comparison": cmp, "pass": bool(ok)}


def cmd_rhp_verify(cfg: RunConfig) -> dict:
    c, d = cfg.curve, cfg.divisor
    tau = c.tau
    gf = make_gfunction(c)
    sz = make_szego(c, cfg.weight)
    certs = []
    rng = np.random.default_rng(20240601)
    p = rng.uniform(0, 1, 20) + 1j * rng.uniform(0.05, 0.95, 20) * tau.imag
    q = rng.uniform(0, 1, 20) + 1j * rng.uniform(0.05, 0.95, 20) * tau.imag
    certs.append(_cert("omega0_dual_form", np.max(np.abs(omega0(q, p, tau) - omega0_zeta(q, p, tau))), 1e-9))
    for parity in ("even", "odd"):
        mm = make_model_matrix(parity, d, c)
        ty = tyurin(mm)
        certs.append(_cert(f"tyurin_null_vectors_{parity}", max(ty.residuals), 1e-8))
        certs.append(_cert(f"tyurin_det_P_{parity}",
                           abs(ty.det_P) / np.prod(np.linalg.norm(ty.P, axis=1)), 1e-6, ">"))
        certs.append(_cert(f"kernel_A_at_zero_{parity}", np.abs(kernel_A(ty, 0j, tau)).max(), 1e-9))
        q0, h = 0.3 + 0.2j, 1e-5
        res = 0.5 * h * (nonabelian_cauchy(ty, mm, q0 + h, q0) - nonabelian_cauchy(ty, mm, q0 - h, q0))
        certs.append(_cert(f"kernel_residue_{parity}", np.abs(res - np.eye(2)).max(), 1e-8))
        certs.append(_cert(f"kernel_vanishing_{parity}",
                           np.abs(nonabelian_cauchy(ty, mm, 0.6 + 0.1j, 1e-8)).max(), 1e-6))
        for j, t in enumerate(ty.points):
            vals = [np.linalg.norm(nonabelian_cauchy(ty, mm, 0.6 + 0.1j, t + 10.0**-k * np.exp(0.7j))
                                   @ make_M(mm, t + 10.0**-k * np.exp(0.7j))) for k in range(2, 7)]
            certs.append(_cert(f"kernel_bounded_at_t{j + 1}_{parity}", max(vals) / vals[0], 1e3))
    # remainder solves and the reconstruction chain
    mom = _moments(cfg)
    po = 0.3 + 0.8j * tau.imag
    n_lo = max(cfg.n_min, 4)
    recon, rdev = {}, {}
    for n in range(n_lo, cfg.n_max + 1):
        mm = make_model_matrix(n, d, c)
        ty = tyurin(mm)
        try:
            sol = solve_R(n, ty, mm, gf, sz, grid_size=cfg.rhp_grid, estimate_norm=False)
        except BelowAsymptoticRegime as exc:
            log.warning("%s", exc)
            continue
        exact = eval_section(orthogonal_section(mom, n), c, d, po)
        recon[n] = abs(reconstruct_Y11(n, sol, mm, gf, sz, po) / exact - 1)
        rdev[n] = float(np.abs(sol.evaluate(po) - np.eye(2)).max())
        if n == cfg.n_max:
            certs.append(_cert("R_at_zero_is_identity", np.abs(sol.evaluate(0j) - np.eye(2)).max(), 1e-10))
            certs.append(_cert("integral_equation_residual", sol.residual_norm, 1e-10))
            cons, jr = sol.held_out_check()
            certs.append(_cert("R_held_out_consistency", cons, 1e-8))
            certs.append(_cert("R_jump_held_out", jr, 1e-8))
    if recon:
        certs.append(_cert("reconstruction_max_relative_error", max(recon.values()), 1e-4))
    evens = [n for n in sorted(rdev) if n % 2 == cfg.n_max % 2]
    if len(evens) >= 2:
        dec = all(rdev[b] < rdev[a] for a, b in zip(evens, evens[1:]))
        certs.append(_cert("R_minus_identity_decreasing", 0.0 if dec else 1.0, 0.5))
    # scalar problem: a solvable jump built from an analytic exponent
    cen = 0.25 + tau / 4
    sol = solve_scalar_rhp(log_jump=lambda z: 0.3 * np.sin(3 * (z - cen)) + 0.1 * (z - cen) ** 2,
                              tau=tau, center=cen)
    certs.append(_cert("scalar_rhp_jump", sol.jump_residual(), 1e-8))
    try:
        solve_scalar_rhp(log_jump=lambda z: 0.37 / (z - cen), tau=tau, center=cen)
        certs.append(_cert("scalar_rhp_unsolvable_detected", 0.0, 0.5, ">"))
    except UnsolvableRHP as exc:
        certs.append(_cert("scalar_rhp_unsolvable_detected", exc.defect, 0.3, ">"))
    report = {"certificates": certs, "all_pass": all(x["pass"] for x in certs),
              "reconstruction_error": {str(k): float(v) for k, v in recon.items()},
              "R_minus_identity": {str(k): v for k, v in rdev.items()},
              "c0": c0(c, gf=gf)}
    write_json(cfg.output_dir / "rhp_verify.json", report)
    if not report["all_pass"]:
        failed = [x["name"] for x in certs if not x["pass"]]
        raise CertificateFailure("failed certificates: " + ", ".join(failed))
    return report


def make_M(mm, p):
    from .asym import model_matrix_eval

    return model_matrix_eval(mm, p, Side.MINUS)


COMMANDS = {
    "curve-info": cmd_curve_info,
    "ortho": cmd_ortho,
    "density": cmd_density,
    "rhp-verify": cmd_rhp_verify,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="elliptic-ortho",
                                 description="Orthogonal sections on real elliptic curves")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="path to the JSON configuration")
    ap.add_argument("--out", help="output directory (overrides output_dir)")
    ap.add_argument("--precision", choices=("double", "extended"))
    ap.add_argument("--quadrature", type=int, help="trapezoid nodes (power of two >= 64)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        raw_text = Path(args.config).read_text()
        raw = json.loads(raw_text)
        cfg = parse_config(raw, args.precision, args.quadrature, args.out)
        worker_count()
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    t0 = time.perf_counter()
    status, summary, message = EXIT_OK, None, ""
    try:
        summary = COMMANDS[args.command](cfg)
    except PrecisionEscalationRequired as exc:
        status, message = EXIT_ESCALATION, str(exc)
    except (ArithmeticError, BelowAsymptoticRegime) as exc:
        status, message = EXIT_CERT, str(exc)
    if message:
        print(f"error: {message}", file=sys.stderr)
    manifest = {
        "command": args.command,
        "version": __version__,
        "config_sha256": hashlib.sha256(raw_text.encode()).hexdigest(),
        "precision": cfg.precision,
        "quadrature_n": cfg.quadrature_n,
        "workers": worker_count(),
        "exit_code": status,
        "message": message,
        "elapsed_seconds": time.perf_counter() - t0,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "summary": summary,
    }
    write_json(cfg.output_dir / f"manifest-{args.command}.json", manifest)
    if summary is not None and args.command == "curve-info":
        print(json.dumps(summary, indent=2, sort_keys=True))
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
