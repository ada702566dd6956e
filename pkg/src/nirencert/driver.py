"""End-to-end pipelines behind the ``certify`` and ``flow`` subcommands.

Reports are plain dicts serialized as canonical JSON (sorted keys, no
whitespace).  The content hash is the SHA-256 of that serialization with
the ``content_hash`` field removed, so identical inputs give identical
hashes.  Wall-clock times and the kernel backend are deliberately kept
out of the report.
"""
import hashlib
import json
import math

import numpy as np

from . import __version__
from . import census as cs
from . import critpoints as cpm
from . import flow as fl
from .constants import C1TildeMode, build_constants
from .errors import CertError, StageError

TOOL_NAME = "nirencert"


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def canonical_json(obj):
    return json.dumps(_clean(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)


def content_hash(report):
    body = {k: v for k, v in report.items() if k != "content_hash"}
    return hashlib.sha256(canonical_json(body).encode()).hexdigest()


def finalize(report):
    report = _clean(report)
    report["content_hash"] = content_hash(report)
    return report


class Stage:
    """Context manager tagging CertErrors with the pipeline stage name."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and isinstance(exc, CertError) and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


def critical_points(spec):
    """Detected or supplied critical points, in canonical order."""
    tol = spec.tolerances
    if spec.k_expr is not None:
        return cpm.detect(spec.expression, spec.n, grad_tol=tol.grad_tol, n_starts=spec.n_starts,
                          seed=spec.seed, consistency_tol=tol.beta_consistency_tol)
    cps = []
    for i, rec in enumerate(spec.critical_points):
        try:
            cps.append(cpm.from_record(rec, spec.n, i))
        except CertError as exc:
            raise CertError("bad-problem", f"critical point {i}: {exc}", cause=exc.code) from exc
    labels = [cp.label for cp in cps]
    if len(set(labels)) != len(labels):
        raise CertError("bad-problem", "critical point labels must be unique")
    return cps


def _census(classified, consts, spec, theorem):
    records, a1, caveats = cs.enumerate_families(
        classified, consts, spec.n, spec.sigma, max_p=spec.max_p, force=spec.force,
        degeneracy_rel_tol=spec.tolerances.degeneracy_rel_tol)
    cert = cs.evaluate_certificate(records, theorem, spec.ordered_tuples, caveats)
    return records, a1, cert


def certify(spec):
    """Run detection, classification, (A1), census and certificate.

    Returns ``(report, certificate)``; the exit code is ``certificate.exit_code``.
    """
    n, sigma = spec.n, spec.sigma
    warnings = list(spec.warnings)
    with Stage("critpoints"):
        cps = critical_points(spec)
    with Stage("classify"):
        classified = [(cp, cpm.classify(cp, n, sigma, spec.tolerances.beta_tol)) for cp in cps]
    with Stage("constants"):
        consts = build_constants(n, sigma, spec.c0, spec.c1tilde_mode)
        other_mode = (C1TildeMode.PAPER_HEADER if spec.c1tilde_mode is C1TildeMode.PROOF_STEP
                      else C1TildeMode.PROOF_STEP)
        other = build_constants(n, sigma, spec.c0, other_mode)
    with Stage("census"):
        theorem = cs.determine_regime(classified)
        records, a1, cert = _census(classified, consts, spec, theorem)
        if theorem is not cs.Theorem.NOT_APPLICABLE and any(cl.in_K_beta_critical for _, cl in classified):
            _, _, cert_other = _census(classified, other, spec, theorem)
            if cert_other.S != cert.S:
                cert.caveats.append(
                    f"verdict depends on the c1_tilde convention: S={cert.S} here, "
                    f"S={cert_other.S} under {other_mode.value}")
    if not any(cl.in_K_plus or cl.in_K_beta_critical for _, cl in classified):
        cert.notes.append("census is empty: no point lies in K+ or in the critical stratum; "
                          "a K with nondegenerate critical points on the sphere is expected to have some")
    if any(cl.in_K_beta_critical for _, cl in classified):
        cert.notes.append("rho values are in c0 units; their signs do not depend on c0")
    if spec.max_p is not None:
        cert.notes.append(f"tuples truncated at size {spec.max_p}")
    if spec.ordered_tuples:
        cert.notes.append("ordered-tuple diagnostic mode: each p-subset counted p! times")

    labels = [cp.label for cp, cl in classified if cl.in_K_beta_critical]
    pai = cs.points_at_infinity(records, theorem)
    report = {
        "tool": {"name": TOOL_NAME, "version": __version__},
        "problem": spec.to_json(),
        "constants": consts.to_json(),
        "critical_points": [cp.to_json() for cp in cps],
        "classifications": [dict(label=cp.label, **cl.to_json()) for cp, cl in classified],
        "regime": theorem.value,
        "A1": a1.to_json(labels),
        "families": [r.to_json() for r in records],
        "points_at_infinity": [r.to_json() for r in sorted(pai, key=cs.sort_key)],
        "euler_trace": cs.euler_trace(pai),
        "certificate": cert.to_json(),
        "warnings": warnings,
    }
    return finalize(report), cert


def flow_cmd(spec, points, lambdas, config_overrides=None, log_path=None):
    """Run the reduced flow from the given bubbles; returns (report, outcome)."""
    n, sigma = spec.n, spec.sigma
    with Stage("critpoints"):
        cps = critical_points(spec)
        classes = [cpm.classify(cp, n, sigma, spec.tolerances.beta_tol) for cp in cps]
    with Stage("constants"):
        consts = build_constants(n, sigma, spec.c0, spec.c1tilde_mode)
    with Stage("flow"):
        config = fl.FlowConfig(**(config_overrides or {}))
        curv = fl.Curvature(cps, spec.expression)
        if len(points) and len(points[0]) != n + 1:
            raise CertError("dimension-mismatch", f"bubble centres need {n + 1} coordinates")
        state = fl.make_state(points, lambdas, curv, n, sigma)
        flow = fl.Flow(n, sigma, consts, curv, classes, config)
        out = fl.run_to_infinity(flow, state, log_path=log_path)
    warnings = list(spec.warnings)
    if spec.expression is None:
        warnings.append("K known only near its critical points: gradient is zero elsewhere")
    report = {
        "tool": {"name": TOOL_NAME, "version": __version__},
        "problem": spec.to_json(),
        "constants": consts.to_json(),
        "critical_points": [cp.to_json() for cp in cps],
        "config": {k: getattr(config, k) for k in config.__dataclass_fields__},
        "initial": {"points": [list(map(float, p)) for p in points], "lambdas": list(lambdas)},
        "flow": out.to_json(),
        "model_note": "leading-order reduced dynamics; remainders and the v-bar correction are dropped",
        "warnings": warnings,
    }
    return finalize(report), out


def summary(report):
    """Short human-readable digest of a certify report."""
    lines = [f"{TOOL_NAME} {report['tool']['version']}",
             f"n={report['problem']['n']} sigma={report['problem']['sigma']}"]
    lines.append(f"critical points: {len(report['critical_points'])}")
    for c in report.get("classifications", []):
        lines.append(f"  {c['label']}: K+={c['in_K_plus']} critical={c['in_K_beta_critical']} "
                     f"itilde={c['itilde']} regime={c['regime']}")
    if "certificate" in report:
        cert = report["certificate"]
        lines.append(f"regime: {report['regime']}; A={cert['A']} B={cert['B']} S={cert['S']}")
        verdict = {0: "solution exists", 10: "inconclusive (S = 1)", 20: "not certified"}
        lines.append(f"verdict: {verdict[cert['exit_code']]}")
        for c in cert["caveats"]:
            lines.append(f"  caveat: {c}")
        for c in cert["notes"]:
            lines.append(f"  note: {c}")
    if "flow" in report:
        f = report["flow"]
        lines.append(f"flow: {f['outcome']} ({f['reason']}) after {f['steps']} steps, t={f['time']:.4g}")
        if f["limit_tuple"]:
            lines.append(f"  limit tuple: {f['limit_tuple']} weights {f['limit_weights']}")
    for w in report["warnings"]:
        lines.append(f"warning: {w}")
    lines.append(f"hash: {report['content_hash']}")
    return "\n".join(lines)
