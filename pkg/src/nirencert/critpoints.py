"""Critical points of K on S^n and their flatness data.

Near a critical point y the curvature is modelled as
``K(y) + sum_k b_k |v_k|^beta`` in a normal chart ``v`` centred at y.
Points come either from a multistart search over an analytic K or from
records supplied verbatim by the user.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .errors import CertError
from .geometry import (TangentFrame, exp_map, fibonacci_sphere, geodesic_distance,
                       log_map, normal_frame, sphere_point)

log = logging.getLogger(__name__)

GRAD_TOL = 1e-7
BSUM_TOL = 1e-9
BETA_TOL = 1e-3
BETA_CONSISTENCY_TOL = 0.05
DEDUP_TOL = 1e-6
DEFAULT_RADII = tuple(np.geomspace(5e-3, 5e-2, 8))


@dataclass
class CriticalPoint:
    y: np.ndarray
    frame: TangentFrame
    K_val: float
    beta: float
    b: np.ndarray
    label: str = ""
    supplied: bool = False
    fit_residual: float = 0.0

    @property
    def n(self):
        return self.frame.n

    @property
    def b_sum(self):
        return float(np.sum(self.b))

    def validate(self, bsum_tol=BSUM_TOL):
        n = self.n
        if self.b.shape != (n,):
            raise CertError("bad-critical-point", f"{self.label}: b must have {n} entries")
        if np.any(self.b == 0):
            raise CertError("axis-degenerate", f"{self.label}: every b_k must be nonzero")
        if abs(self.b_sum) <= bsum_tol:
            raise CertError("bsum-degenerate", f"{self.label}: sum of b_k is zero")
        if not 1.0 < self.beta < n:
            raise CertError("bad-beta", f"{self.label}: beta={self.beta} outside (1, {n})")
        if not self.K_val > 0:
            raise CertError("K-not-positive", f"{self.label}: K(y)={self.K_val}")
        return self

    def local_model(self, p):
        """Flatness model K(y) + sum b_k |v_k|^beta at the point ``p``."""
        v = log_map(self.frame, p)
        return self.K_val + float(np.sum(self.b * np.abs(v) ** self.beta))

    def to_json(self):
        return {
            "label": self.label,
            "y": [float(c) for c in self.y],
            "frame": self.frame.to_json(),
            "K": self.K_val,
            "beta": self.beta,
            "b": [float(c) for c in self.b],
            "b_sum": self.b_sum,
            "supplied": self.supplied,
            "fit_residual": self.fit_residual,
        }


@dataclass(frozen=True)
class Classification:
    in_K_plus: bool
    in_K_beta_critical: bool
    itilde: int
    regime: str = field(default="")   # "below", "critical" or "above" n - 2 sigma

    def to_json(self):
        return {"in_K_plus": self.in_K_plus, "in_K_beta_critical": self.in_K_beta_critical,
                "itilde": self.itilde, "regime": self.regime}


def classify(cp, n, sigma, beta_tol=BETA_TOL, exact=None):
    """Membership in K^+ and K_{n-2 sigma}, and the negative-b count.

    Fitted flatness orders are compared to n - 2 sigma with the relative
    tolerance ``beta_tol``; supplied ones exactly (up to float
    representation, 1e-12 relative).  ``exact`` overrides the choice.
    """
    crit = n - 2.0 * sigma
    exact = cp.supplied if exact is None else exact
    tol = 1e-12 if exact else beta_tol
    is_crit = abs(cp.beta - crit) <= tol * crit
    regime = "critical" if is_crit else ("below" if cp.beta < crit else "above")
    return Classification(
        in_K_plus=cp.b_sum < 0,
        in_K_beta_critical=is_crit,
        itilde=int(np.count_nonzero(cp.b < 0)),
        regime=regime,
    )


def _as_function(K):
    if callable(K):
        return lambda p: float(K(p))
    return lambda p: ex.eval_on_sphere(K, p)


def fit_flatness(K, y, frame, radii=DEFAULT_RADII, consistency_tol=BETA_CONSISTENCY_TOL):
    """Fit (beta, b, residual) of the flatness model along each chart axis.

    ``K`` is an :mod:`expr` tree or any callable of a sphere point.  Each
    axis uses the symmetrized increment (K(exp(t e_k)) + K(exp(-t e_k)))/2
    - K(y), so odd remainders cancel; beta_k is the log-log slope and b_k
    the least-squares amplitude at the common beta.
    """
    radii = np.asarray(sorted(radii), dtype=float)
    if radii.size < 6 or radii[0] < 1e-4 or radii[-1] > 0.05:
        raise CertError("bad-radii", "need >= 6 radii within [1e-4, 0.05]")
    f = _as_function(K)
    k0 = f(y)
    if not k0 > 0:
        raise CertError("K-not-positive", f"K(y)={k0}")
    n = frame.n
    incr = np.empty((n, radii.size))
    for k in range(n):
        for m, t in enumerate(radii):
            v = np.zeros(n)
            v[k] = t
            incr[k, m] = 0.5 * (f(exp_map(frame, v)) + f(exp_map(frame, -v))) - k0
    slopes = np.empty(n)
    signs = np.empty(n)
    logt = np.log(radii)
    for k in range(n):
        d = incr[k]
        if np.all(np.abs(d) < 1e-13):
            raise CertError("axis-degenerate", f"axis {k}: K is flat to rounding (b_k = 0)", axis=k)
        s = np.sign(d)
        if np.any(s == 0) or np.any(s != s[0]):
            raise CertError("not-flat", f"axis {k}: increment changes sign across radii", axis=k)
        signs[k] = s[0]
        slopes[k] = np.polyfit(logt, np.log(np.abs(d)), 1)[0]
    beta = float(np.mean(slopes))
    residual = float(np.max(np.abs(slopes - beta)))
    if residual > consistency_tol:
        raise CertError("not-flat", f"per-axis orders {slopes.round(4).tolist()} disagree",
                        residual=residual)
    tb = radii ** beta
    b = incr @ tb / np.dot(tb, tb)
    return beta, b, residual


# -- multistart search ------------------------------------------------------

def _householder_axes(P):
    """Orthonormal tangent bases at each row of P, shape (N, n, n+1)."""
    N, dim = P.shape
    e = np.zeros((N, dim))
    e[:, -1] = np.where(P[:, -1] >= 0.0, -1.0, 1.0)
    u = e - P
    uu = np.einsum("ij,ij->i", u, u)
    eye = np.eye(dim)[: dim - 1]
    return eye[None, :, :] - 2.0 * u[:, None, : dim - 1].transpose(0, 2, 1) * u[:, None, :] / uu[:, None, None]


def _exp_batch(P, axes, V):
    """exp_map for a batch: P (N, d), axes (N, n, d), V (N, m, n) -> (N, m, d)."""
    W = np.einsum("nmk,nkd->nmd", V, axes)
    r = np.linalg.norm(V, axis=-1)
    safe = np.where(r > 0, r, 1.0)
    out = np.cos(r)[..., None] * P[:, None, :] + (np.sin(r) / safe)[..., None] * W
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


def _stencil(n, h):
    pts = [np.zeros(n)]
    for k in range(n):
        for s in (1.0, -1.0):
            v = np.zeros(n)
            v[k] = s * h
            pts.append(v)
    for i in range(n):
        for j in range(i + 1, n):
            for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                v = np.zeros(n)
                v[i], v[j] = si * h, sj * h
                pts.append(v)
    return np.array(pts)


def _grad_hess_batch(f, P, h):
    N, dim = P.shape
    n = dim - 1
    axes = _householder_axes(P)
    S = _stencil(n, h)
    vals = f(_exp_batch(P, axes, np.broadcast_to(S, (N,) + S.shape)))
    f0 = vals[:, 0]
    g = np.empty((N, n))
    H = np.empty((N, n, n))
    for k in range(n):
        fp, fm = vals[:, 1 + 2 * k], vals[:, 2 + 2 * k]
        g[:, k] = (fp - fm) / (2 * h)
        H[:, k, k] = (fp - 2 * f0 + fm) / h ** 2
    col = 1 + 2 * n
    for i in range(n):
        for j in range(i + 1, n):
            pp, pm, mp, mm = (vals[:, col + q] for q in range(4))
            H[:, i, j] = H[:, j, i] = (pp - pm - mp + mm) / (4 * h * h)
            col += 4
    return g, H, axes


def _grad_batch(f, P, h):
    N, dim = P.shape
    n = dim - 1
    axes = _householder_axes(P)
    S = _stencil(n, h)[1: 1 + 2 * n]
    vals = f(_exp_batch(P, axes, np.broadcast_to(S, (N,) + S.shape)))
    return (vals[:, 0::2] - vals[:, 1::2]) / (2 * h)


def find_critical_points(K, n, grad_tol=GRAD_TOL, n_starts=500, seed=42,
                         max_iter=200, dedup_tol=DEDUP_TOL, max_points=1000):
    """Stationary points of K on S^n (any Morse index).

    Damped Gauss-Newton on |grad K|^2 in moving normal charts, run from
    ``n_starts`` quasi-uniform starts at once, then deduplicated in start
    order.  Returns a list of unit vectors, each re-verified with
    :func:`expr.sphere_gradient` at steps 1e-5 and 5e-6.
    """
    f = (lambda X: ex.evaluate(K, X)) if not callable(K) else K
    sample = fibonacci_sphere(10 * 4 ** n, n)
    kv = f(sample)
    if np.any(kv <= 0):
        raise CertError("K-not-positive", f"min K on validation sample = {kv.min():.6g}")
    gs = np.linalg.norm(_grad_batch(f, sample, 1e-5), axis=1)
    if np.all(gs < grad_tol):
        raise CertError("K-degenerate", "gradient identically below tolerance everywhere")

    P = fibonacci_sphere(n_starts, n)
    if seed:
        rng = np.random.default_rng(seed)
        q, r = np.linalg.qr(rng.standard_normal((n + 1, n + 1)))
        P = P @ (q * np.sign(np.diag(r))).T
    mu = np.full(len(P), 1e-3)
    active = np.ones(len(P), dtype=bool)
    h = 1e-4
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        g, H, axes = _grad_hess_batch(f, P[idx], h)
        gn = np.linalg.norm(g, axis=1)
        done = gn < 0.05 * grad_tol
        HtH = np.einsum("nij,nik->njk", H, H)
        rhs = -np.einsum("nij,ni->nj", H, g)
        A = HtH + (mu[idx] * np.maximum(1.0, np.einsum("nii->n", HtH)))[:, None, None] * np.eye(n)
        V = np.linalg.solve(A, rhs[..., None])[..., 0]
        vn = np.linalg.norm(V, axis=1)
        V *= np.minimum(1.0, 0.3 / np.maximum(vn, 1e-300))[:, None]
        Pn = _exp_batch(P[idx], axes, V[:, None, :])[:, 0, :]
        gn_new = np.linalg.norm(_grad_batch(f, Pn, h), axis=1)
        better = gn_new < gn
        upd = idx[better & ~done]
        P[upd] = Pn[better & ~done]
        mu[idx[better]] = np.maximum(mu[idx[better]] / 3.0, 1e-12)
        mu[idx[~better]] = mu[idx[~better]] * 4.0
        stalled = mu[idx] > 1e8
        active[idx[done | stalled]] = False

    found = []
    for p in P:
        p = _polish(K, f, p, grad_tol)
        if p is None:
            continue
        if any(geodesic_distance(p, q) < dedup_tol for q in found):
            continue
        found.append(p)
        if len(found) >= max_points:
            log.warning("critical-point cap %d reached; K may be degenerate", max_points)
            break
    if not found:
        log.warning("no multistart run converged to a critical point")
    return found


def _polish(K, f, p, grad_tol, iters=8):
    """A few Newton steps in the seed-0 normal frame, then verification."""
    n = p.size - 1
    for _ in range(iters):
        g, H, axes = _grad_hess_batch(f, p[None, :], 1e-4)
        try:
            v = -np.linalg.lstsq(H[0], g[0], rcond=None)[0]
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(v)) or np.linalg.norm(v) > 0.05:
            break
        p_new = _exp_batch(p[None, :], axes, v[None, None, :])[0, 0]
        if np.linalg.norm(_grad_batch(f, p_new[None, :], 1e-5)) >= np.linalg.norm(g):
            break
        p = p_new
    frame = normal_frame(p)
    grad = _sphere_grad(K, f, p, frame, 1e-5)
    if np.linalg.norm(grad) >= grad_tol:
        return None
    if np.linalg.norm(_sphere_grad(K, f, p, frame, 5e-6)) >= grad_tol:
        return None
    return p


def _sphere_grad(K, f, p, frame, h):
    if not callable(K):
        return ex.sphere_gradient(K, p, h, frame)
    n = frame.n
    out = np.empty(n)
    for k in range(n):
        v = np.zeros(n)
        v[k] = h
        out[k] = (f(exp_map(frame, v)[None])[0] - f(exp_map(frame, -v)[None])[0]) / (2 * h)
    return out


def detect(K, n, grad_tol=GRAD_TOL, n_starts=500, seed=42, radii=DEFAULT_RADII,
           consistency_tol=BETA_CONSISTENCY_TOL, frame_seed=0, bsum_tol=BSUM_TOL):
    """Search for critical points and fit flatness data at each one.

    Raises if a fitted point violates the flatness hypotheses (some b_k
    or their sum vanishing); such a K is outside the theory.
    """
    pts = find_critical_points(K, n, grad_tol=grad_tol, n_starts=n_starts, seed=seed)
    # canonical order: by K value descending, then coordinates
    f = (lambda X: ex.evaluate(K, X)) if not callable(K) else K
    vals = [float(f(p[None])[0]) for p in pts]
    order = sorted(range(len(pts)), key=lambda i: (-round(vals[i], 12), *np.round(pts[i], 9)))
    out = []
    for rank, i in enumerate(order):
        y = pts[i]
        frame = normal_frame(y, frame_seed)
        fn = K if not callable(K) else (lambda q, _f=f: float(_f(np.asarray(q)[None])[0]))
        beta, b, res = fit_flatness(fn, y, frame, radii, consistency_tol)
        cp = CriticalPoint(y=y, frame=frame, K_val=vals[i], beta=beta, b=b,
                           label=f"y{rank}", supplied=False, fit_residual=res)
        out.append(cp.validate(bsum_tol * max(1.0, float(np.max(np.abs(b))))))
    return out


def from_record(rec, n, index, frame_seed=0):
    """Build a supplied CriticalPoint from a problem-file record."""
    try:
        y = sphere_point(rec["y"])
        if y.size != n + 1:
            raise CertError("dimension-mismatch", f"y has {y.size} coords, n={n}")
        frame = (TangentFrame.from_axes(y, rec["frame"]) if rec.get("frame") is not None
                 else normal_frame(y, frame_seed))
        cp = CriticalPoint(y=y, frame=frame, K_val=float(rec["K"]), beta=float(rec["beta"]),
                           b=np.asarray(rec["b"], dtype=float),
                           label=rec.get("label", f"y{index}"), supplied=True)
    except KeyError as exc:
        raise CertError("bad-problem", f"critical point {index} lacks field {exc}") from None
    if not math.isfinite(cp.K_val):
        raise CertError("bad-problem", f"critical point {index}: K not finite")
    return cp.validate()
