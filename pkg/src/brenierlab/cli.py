"""Command-line driver: ``brenierlab run <config>`` and ``brenierlab validate <config>``.

Exit codes: 0 every asserted invariant holds, 1 an invariant failed,
2 the config could not be read or validated, 3 a numerical stage failed.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ScenarioConfig, load, validate
from .errors import BrenierLabError, ConfigError, HypothesisFailure
from .hermite import certificate_chain, poincare_fd_1d, poincare_galerkin
from .measures import LogConcaveMeasure
from .splitting import align_rotation, build_candidate, detect_factors, stability_curve
from .transport import (
    EXACT_TOL,
    brenier_1d,
    contraction_defect,
    eigen_profile,
    entropic_pair,
    entropic_transport,
    monotonicity_defect,
    push_forward_residual,
    richardson,
)

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


class StageFailure(Exception):
    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class Outcome:
    results: dict = field(default_factory=dict)
    invariants: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)  # file name -> writer(path)

    def check(self, name, value, limit, ok):
        self.invariants[name] = {"value": value, "limit": limit, "ok": bool(ok)}


class _Stages:
    """Tracks the stage name so numerical failures can be attributed."""

    def __init__(self):
        self.name = "setup"

    def __call__(self, name, fn, *args, **kw):
        self.name = name
        try:
            return fn(*args, **kw)
        except (BrenierLabError, ArithmeticError) as exc:
            if isinstance(exc, HypothesisFailure):
                raise
            raise StageFailure(name, exc) from exc


def _measure(cfg: ScenarioConfig, **params) -> LogConcaveMeasure:
    return LogConcaveMeasure.from_spec(cfg.measure_spec(**params), radius=cfg.measure["radius"])


def _transport(mu, cfg: ScenarioConfig, stage: _Stages):
    """Exact map in 1D; entropic map (optionally reg-halved and extrapolated) otherwise."""
    num = cfg.numerics
    if mu.dimension == 1:
        return stage("transport", brenier_1d, mu, radius=cfg.measure["radius"]), {}
    kw = {"nodes": num["grid_nodes"], "radius": num["grid_radius"], "tol": num["sinkhorn_tol"],
          "max_iter": num["max_iter"]}
    if num["richardson"]:
        coarse, fine = stage("transport", entropic_pair, mu, num["reg"], **kw)
        return richardson(coarse, fine), {"coarse": coarse, "fine": fine}
    return stage("transport", entropic_transport, mu, num["reg"], **kw), {}


def _map_tolerance(tmap, cfg: ScenarioConfig) -> float:
    tol = cfg.numerics["tolerance"]
    return tmap.tolerance if tol is None else float(tol)


def scenario_contraction(cfg, stage) -> Outcome:
    out = Outcome()
    mu = stage("measure", _measure, cfg)
    tmap, extra = _transport(mu, cfg, stage)
    prof = stage("profile", eigen_profile, tmap, strict=False)
    upper, lower = contraction_defect(prof)
    tol = _map_tolerance(tmap, cfg)
    out.results.update({
        "provenance": tmap.provenance, "reg": tmap.reg, "defect": upper, "negative_defect": lower,
        "m_k": prof.m.tolist(), "convexity_margin": mu.convexity_margin,
        "push_forward_residual": stage("push-forward", push_forward_residual, tmap, mu),
        "monotonicity_defect": monotonicity_defect(tmap),
    })
    out.check("contraction.defect", upper, tol, upper <= tol)
    mono_tol = 1e-12 if mu.dimension == 1 else 5e-2
    out.check("contraction.monotonicity", out.results["monotonicity_defect"], mono_tol,
              out.results["monotonicity_defect"] <= mono_tol)
    if extra:
        halves = {}
        for name, m in extra.items():
            p = stage("profile", eigen_profile, m, strict=False)
            halves[name] = {"reg": m.reg, "defect": contraction_defect(p)[0], "m_k": p.m.tolist(),
                            "iterations": m.diagnostics["iterations"]}
        out.results["reg_halving"] = halves
        c, f = halves["coarse"]["defect"], halves["fine"]["defect"]
        out.check("contraction.reg_halving", f, c, f <= c + 1e-12)
    out.files["map.csv"] = tmap.to_csv
    out.files["profile.json"] = prof.to_json
    return out


def scenario_rigidity(cfg, stage) -> Outcome:
    out = Outcome()
    mu = stage("measure", _measure, cfg)
    tmap, _ = _transport(mu, cfg, stage)
    prof = stage("profile", eigen_profile, tmap)
    found = detect_factors(prof)
    expected = cfg.numerics["k"]
    out.results.update({"m_k": prof.m.tolist(), "k_detected": found, "provenance": tmap.provenance})
    if expected is not None:
        out.check("rigidity.k_detected", found, expected, found == expected)
    k = expected or found
    if k == 0:
        out.results["candidate"] = None
        return out
    rot = stage("alignment", align_rotation, prof, k) if mu.dimension > 1 else np.eye(1)
    cand = stage("split", build_candidate, mu, k, rot, cfg.numerics["cloud_order"])
    tol = _map_tolerance(tmap, cfg)
    out.results["candidate"] = {"k": k, "p": cand.p.tolist(), "rotation": cand.rotation.tolist(),
                                "gap": cand.gap, "diagnostics": cand.diagnostics}
    out.check("rigidity.gap", cand.gap, tol, cand.gap <= tol)
    out.files["rotation.csv"] = cand.to_csv
    if cand.mu2 is not None:
        out.files["mu2.csv"] = cand.mu2.to_csv
    return out


def scenario_stability(cfg, stage) -> Outcome:
    out = Outcome()
    param = cfg.sweep["parameter"]
    k = cfg.numerics["k"]
    table = stage("sweep", stability_curve, lambda t: _measure(cfg, **{param: t}), k, cfg.sweep["values"],
                  cfg.numerics["reg"], cfg.numerics["richardson"])
    gaps = table.column("gap")
    failed = [r["t"] for r in table.rows if r["error"]]
    slack = cfg.numerics["tolerance"]
    if slack is None:
        slack = EXACT_TOL if cfg.measure["dimension"] == 1 else 2e-3
    rises = float(np.max(gaps[:-1] - gaps[1:], initial=0.0)) if len(gaps) > 1 else 0.0
    ratios = table.column("ratio")
    finite = ratios[np.isfinite(ratios)]
    out.results.update({"rows": table.rows, "parameter": param, "k": k,
                        "ratio_range": [float(finite.min()), float(finite.max())] if finite.size else None})
    out.check("stability.no_failures", len(failed), 0, not failed)
    out.check("stability.gap_monotone", rises, slack, not failed and rises <= slack)
    out.files["curve.csv"] = table.to_csv
    return out


def scenario_poincare(cfg, stage) -> Outcome:
    out = Outcome()
    mu = stage("measure", _measure, cfg)
    spec = stage("galerkin", poincare_galerkin, mu, cfg.numerics["degree"], cfg.numerics["quadrature_order"])
    lam = float(spec.eigenvalues[0])
    out.results.update({"gap": lam, "eigenvalues": spec.eigenvalues[:8].tolist(), "degree": spec.degree,
                        "condition_number": spec.condition_number,
                        "orthonormality_residual": spec.orthonormality_residual})
    out.check("poincare.lower_bound", lam, 1 - 1e-6, lam >= 1 - 1e-6)
    if mu.dimension == 1:
        fd = stage("finite-difference", poincare_fd_1d, mu)
        tol = cfg.numerics["tolerance"] or 1e-4
        out.results["finite_difference_gap"] = fd
        out.check("poincare.fd_agreement", abs(lam - fd), tol, abs(lam - fd) <= tol)
    out.files["spectrum.json"] = spec.to_json
    return out


def scenario_certificate(cfg, stage) -> Outcome:
    out = Outcome()
    mu = stage("measure", _measure, cfg)
    tmap, _ = _transport(mu, cfg, stage)
    prof = stage("profile", eigen_profile, tmap)
    try:
        rep = stage("certificate", certificate_chain, mu, tmap, cfg.numerics["k"], cfg.numerics["degree"],
                    cfg.numerics["c_cert"], floor=cfg.numerics["tolerance"], profile=prof,
                    raise_on_failure=False)
    except HypothesisFailure as exc:
        out.results["hypothesis"] = str(exc)
        out.check("certificate.epsilon_hypothesis", None, 1.0, False)
        return out
    out.results.update(rep.to_dict())
    for name, s in rep.stages.items():
        out.check(f"certificate.{name}", s["value"], s["allowed"], s["ok"])
    hf = rep.stages["high_frequency"]
    out.check("certificate.high_frequency_strict", hf["value"], rep.epsilon + 1e-6, hf["strict_ok"])
    out.files["certificate.json"] = rep.to_json
    out.files["profile.json"] = prof.to_json
    return out


SCENARIO_RUNNERS = {
    "contraction": scenario_contraction,
    "rigidity": scenario_rigidity,
    "stability-curve": scenario_stability,
    "poincare": scenario_poincare,
    "certificate": scenario_certificate,
}


def _clean(obj):
    # JSON-safe plain data; non-finite floats become null
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def atomic_write(path: Path, writer) -> None:
    """Write through ``writer(tmp_path)`` and rename into place."""
    path = Path(path)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    try:
        writer(tmp)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def _dump_json(payload):
    def writer(p):
        with open(p, "w", encoding="utf-8") as fh:
            json.dump(_clean(payload), fh, sort_keys=True, indent=2, allow_nan=False)
            fh.write("\n")
    return writer


@dataclass
class RunResult:
    exit_code: int
    report: dict
    paths: list
    message: str


def run(cfg: ScenarioConfig, out_dir=None) -> RunResult:
    """Run one scenario and write its report, tables and metadata."""
    out_dir = Path(out_dir or cfg.output["dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    prefix = cfg.output["prefix"] or cfg.scenario
    stage = _Stages()
    start = time.perf_counter()
    try:
        outcome = SCENARIO_RUNNERS[cfg.scenario](cfg, stage)
        failure = None
    except StageFailure as exc:
        outcome, failure = Outcome(), exc
    elapsed = time.perf_counter() - start

    failed = [k for k, v in outcome.invariants.items() if not v["ok"]]
    if failure is not None:
        code, status = EXIT_NUMERICAL, "error"
        message = f"{cfg.scenario}: numerical failure in stage {failure.stage!r}: {failure.cause}"
    elif failed:
        code, status = EXIT_INVARIANT, "fail"
        message = f"{cfg.scenario}: invariant {failed[0]} violated" + (
            f" (+{len(failed) - 1} more)" if len(failed) > 1 else "")
    else:
        code, status = EXIT_OK, "pass"
        message = f"{cfg.scenario}: all {len(outcome.invariants)} invariants hold"

    report = {
        "version": __version__,
        "config": cfg.data,
        "scenario": cfg.scenario,
        "status": status,
        "results": outcome.results,
        "invariants": outcome.invariants,
        "failed_invariants": failed,
        "failed_stage": None if failure is None else {"stage": failure.stage, "error": str(failure.cause)},
        "files": sorted(f"{prefix}.{name}" for name in outcome.files),
    }
    paths = []
    for name, writer in outcome.files.items():
        p = out_dir / f"{prefix}.{name}"
        atomic_write(p, writer)
        paths.append(p)
    meta = {"timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"), "elapsed_seconds": elapsed,
            "config_source": cfg.source, "version": __version__}
    for name, payload in (("report.json", report), ("meta.json", meta)):
        p = out_dir / f"{prefix}.{name}"
        atomic_write(p, _dump_json(payload))
        paths.append(p)
    message += f"; report {out_dir / (prefix + '.report.json')}"
    return RunResult(code, report, paths, message)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="brenierlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "validate"):
        p = sub.add_parser(name)
        p.add_argument("config", type=Path)
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="dot-path override, e.g. numerics.reg=0.01 (repeatable)")
        p.add_argument("--quiet", action="store_true")
        if name == "run":
            p.add_argument("--out-dir", type=Path, default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    say = (lambda msg: None) if args.quiet else print
    if args.command == "validate":
        try:
            problems = validate(args.config, args.override)
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        for line in problems:
            print(line)
        if not problems:
            say(f"{args.config}: valid")
        return EXIT_CONFIG if problems else EXIT_OK
    try:
        cfg = load(args.config, args.override)
    except (OSError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    result = run(cfg, args.out_dir)
    if result.exit_code == EXIT_OK:
        say(result.message)
    else:
        print(result.message, file=sys.stderr if result.exit_code == EXIT_NUMERICAL else sys.stdout)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
