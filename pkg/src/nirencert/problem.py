"""Problem files and initial-state files (JSON).

A problem file looks like::

    {"n": 3, "sigma": 0.5,
     "K": {"expr": "2 + x4"}            # or {"critical_points": [...]}
     "tolerances": {"grad_tol": 1e-7, "beta_tol": 1e-3, ...},
     "constants": {"c0": 1.0, "c1tilde_mode": "proof-step"},
     "census": {"max_p": null, "ordered_tuples": false, "force": false},
     "search": {"n_starts": 500, "seed": 42}}

Only ``n``, ``sigma`` and ``K`` are required.
"""
import json
import math
from dataclasses import dataclass, field, fields

from . import expr as ex
from .constants import C1TildeMode
from .critpoints import BETA_CONSISTENCY_TOL, BETA_TOL, GRAD_TOL
from .errors import CertError
from .flow import FlowConfig
from .interaction import DEGENERACY_REL_TOL


@dataclass(frozen=True)
class Tolerances:
    grad_tol: float = GRAD_TOL
    beta_tol: float = BETA_TOL
    beta_consistency_tol: float = BETA_CONSISTENCY_TOL
    degeneracy_rel_tol: float = DEGENERACY_REL_TOL

    def to_json(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class ProblemSpec:
    n: int
    sigma: float
    k_expr: str = None
    critical_points: list = None        # raw records when K is given pointwise
    tolerances: Tolerances = field(default_factory=Tolerances)
    c0: float = 1.0
    c1tilde_mode: C1TildeMode = C1TildeMode.PROOF_STEP
    max_p: int = None
    ordered_tuples: bool = False
    force: bool = False
    n_starts: int = 500
    seed: int = 42
    warnings: list = field(default_factory=list)

    def validate(self):
        if not isinstance(self.n, int) or isinstance(self.n, bool) or self.n < 2:
            raise CertError("bad-problem", f"n must be an integer >= 2, got {self.n!r}")
        if not 0.0 < self.sigma < 1.0:
            raise CertError("bad-problem", f"sigma must lie in (0, 1), got {self.sigma!r}")
        if (self.k_expr is None) == (self.critical_points is None):
            raise CertError("bad-problem", "K needs exactly one of 'expr' or 'critical_points'")
        if self.k_expr is not None:
            e = ex.parse(self.k_expr)
            if ex.max_variable(e) > self.n + 1:
                raise CertError("unknown-variable",
                                f"expression uses x{ex.max_variable(e)} but S^{self.n} has {self.n + 1} coordinates")
        if not self.c0 > 0:
            raise CertError("bad-problem", "c0 must be positive")
        if self.max_p is not None and self.max_p < 1:
            raise CertError("bad-problem", "max_p must be at least 1")
        if self.n_starts < 1:
            raise CertError("bad-problem", "n_starts must be at least 1")
        if not self.n - 2.0 * self.sigma > 1.0:
            msg = "n - 2 sigma <= 1: the range 1 < beta <= n - 2 sigma is empty"
            if msg not in self.warnings:
                self.warnings.append(msg)
        return self

    @property
    def expression(self):
        return ex.parse(self.k_expr) if self.k_expr is not None else None

    def to_json(self):
        K = {"expr": self.k_expr} if self.k_expr is not None else {"critical_points": self.critical_points}
        return {
            "n": self.n, "sigma": self.sigma, "K": K,
            "tolerances": self.tolerances.to_json(),
            "constants": {"c0": self.c0, "c1tilde_mode": self.c1tilde_mode.value},
            "census": {"max_p": self.max_p, "ordered_tuples": self.ordered_tuples, "force": self.force},
            "search": {"n_starts": self.n_starts, "seed": self.seed},
        }


def _section(d, name):
    sec = d.get(name) or {}
    if not isinstance(sec, dict):
        raise CertError("bad-problem", f"'{name}' must be an object")
    return sec


def _known(sec, name, allowed):
    extra = sorted(set(sec) - set(allowed))
    if extra:
        raise CertError("bad-problem", f"unknown keys in '{name}': {', '.join(extra)}")


def spec_from_dict(d):
    if not isinstance(d, dict):
        raise CertError("bad-problem", "problem must be a JSON object")
    for key in ("n", "sigma", "K"):
        if key not in d:
            raise CertError("bad-problem", f"missing field '{key}'")
    K = _section(d, "K")
    tol = _section(d, "tolerances")
    _known(tol, "tolerances", [f.name for f in fields(Tolerances)])
    cst = _section(d, "constants")
    _known(cst, "constants", ["c0", "c1tilde_mode"])
    cen = _section(d, "census")
    _known(cen, "census", ["max_p", "ordered_tuples", "force"])
    sea = _section(d, "search")
    _known(sea, "search", ["n_starts", "seed"])
    cps = K.get("critical_points")
    if cps is not None and not isinstance(cps, list):
        raise CertError("bad-problem", "'critical_points' must be a list")
    spec = ProblemSpec(
        n=d["n"], sigma=float(d["sigma"]),
        k_expr=K.get("expr"), critical_points=cps,
        tolerances=Tolerances(**{k: float(v) for k, v in tol.items()}),
        c0=float(cst.get("c0", 1.0)),
        c1tilde_mode=C1TildeMode.parse(cst.get("c1tilde_mode", "proof-step")),
        max_p=cen.get("max_p"), ordered_tuples=bool(cen.get("ordered_tuples", False)),
        force=bool(cen.get("force", False)),
        n_starts=int(sea.get("n_starts", 500)), seed=int(sea.get("seed", 42)),
    )
    return spec.validate()


def _read_json(path, what):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise CertError("missing-file", f"{what} file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise CertError("bad-json", f"{what} file {path}: {exc}") from None
    except OSError as exc:
        raise CertError("io-error", f"cannot read {what} file {path}: {exc}") from None


def load_problem(path):
    return spec_from_dict(_read_json(path, "problem"))


def initial_from_dict(d):
    """(points, lambdas, FlowConfig overrides) from an initial-state object.

    Format: ``{"bubbles": [{"a": [...], "lambda": 200.0}, ...], "config": {...}}``.
    """
    bubbles = d.get("bubbles") if isinstance(d, dict) else None
    if not bubbles:
        raise CertError("bad-initial", "initial state needs a nonempty 'bubbles' list")
    try:
        points = [[float(c) for c in b["a"]] for b in bubbles]
        lambdas = [float(b["lambda"]) for b in bubbles]
    except (KeyError, TypeError, ValueError) as exc:
        raise CertError("bad-initial", f"malformed bubble: {exc}") from None
    if not all(math.isfinite(x) for x in lambdas):
        raise CertError("bad-initial", "lambda must be finite")
    cfg = d.get("config") or {}
    known = {f.name for f in fields(FlowConfig)}
    extra = sorted(set(cfg) - known)
    if extra:
        raise CertError("bad-initial", f"unknown flow config keys: {', '.join(extra)}")
    return points, lambdas, cfg


def load_initial(path):
    return initial_from_dict(_read_json(path, "initial state"))
