"""Geometry of the round sphere S^n embedded in R^{n+1}.

Points are plain float arrays of length n+1 with unit norm; use
:func:`sphere_point` to validate and normalize.  A :class:`TangentFrame`
pins down the geodesic normal chart in which flatness data are read.
"""
from dataclasses import dataclass

import numpy as np

from .errors import CertError

DEGENERACY_TOL = 1e-9


def sphere_point(coords):
    """Return ``coords`` as a unit vector of R^{n+1} (n >= 2)."""
    p = np.asarray(coords, dtype=float).reshape(-1)
    if p.size < 3:
        raise CertError("bad-dimension", f"need n >= 2, got {p.size - 1}")
    norm = np.linalg.norm(p)
    if not np.isfinite(norm) or norm == 0.0:
        raise CertError("bad-point", "zero or non-finite coordinates")
    return p / norm


def pole(n, south=False):
    p = np.zeros(n + 1)
    p[-1] = -1.0 if south else 1.0
    return p


def _check_same_dim(a, b):
    if a.shape != b.shape:
        raise CertError("dimension-mismatch", f"{a.shape} vs {b.shape}")


def geodesic_distance(a, b):
    """Great-circle distance in radians, in [0, pi].

    Uses atan2 of the tangential and normal components, which stays
    accurate for nearly coincident and nearly antipodal points alike.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_same_dim(a, b)
    c = float(np.dot(a, b))
    s = float(np.linalg.norm(b - c * a))
    return float(np.arctan2(s, c))


def green_kernel(a, b, n, sigma, tol=DEGENERACY_TOL):
    """(1 - cos d(a, b))^{-(n - 2 sigma)/2}, singular on the diagonal."""
    if not 0.0 < sigma < 1.0:
        raise CertError("bad-sigma", f"sigma={sigma} outside (0, 1)")
    d = geodesic_distance(a, b)
    if d <= tol:
        raise CertError("coincident-points", "Green kernel is singular at d=0", distance=d)
    return float((1.0 - np.cos(d)) ** (-(n - 2.0 * sigma) / 2.0))


def stereographic(x):
    """F(x) = (2x / (1+|x|^2), (|x|^2 - 1) / (|x|^2 + 1))."""
    x = np.asarray(x, dtype=float).reshape(-1)
    r2 = float(np.dot(x, x))
    return np.concatenate([2.0 * x / (1.0 + r2), [(r2 - 1.0) / (r2 + 1.0)]])


def stereographic_inv(p):
    p = np.asarray(p, dtype=float).reshape(-1)
    if p[-1] >= 1.0 - 1e-12:
        raise CertError("north-pole", "stereographic inverse undefined at N")
    return p[:-1] / (1.0 - p[-1])


@dataclass(frozen=True)
class TangentFrame:
    """Orthonormal basis ``axes`` (shape n x (n+1)) of T_base S^n."""

    base: np.ndarray
    axes: np.ndarray

    @property
    def n(self):
        return self.axes.shape[0]

    def to_json(self):
        return [list(map(float, row)) for row in self.axes]

    @classmethod
    def from_axes(cls, base, axes, tol=1e-10):
        base = sphere_point(base)
        axes = np.asarray(axes, dtype=float)
        n = base.size - 1
        if axes.shape != (n, n + 1):
            raise CertError("bad-frame", f"expected {n}x{n + 1} axes, got {axes.shape}")
        gram = axes @ axes.T
        if np.max(np.abs(gram - np.eye(n))) > tol or np.max(np.abs(axes @ base)) > tol:
            raise CertError("bad-frame", "axes are not an orthonormal tangent basis")
        return cls(base, axes)


def normal_frame(y, seed=0):
    """Deterministic orthonormal tangent frame at ``y``.

    Seed 0 runs Gram-Schmidt over the standard basis e_1, ..., e_{n+1}
    in order, so at the north pole the axes are exactly e_1, ..., e_n.
    Other seeds first rotate the standard basis by a seeded random
    orthogonal matrix.
    """
    y = sphere_point(y)
    dim = y.size
    if seed == 0:
        candidates = np.eye(dim)
    else:
        rng = np.random.default_rng(seed)
        q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
        candidates = (q * np.sign(np.diag(r))).T
    axes = []
    for c in candidates:
        v = c - np.dot(c, y) * y
        for u in axes:
            v = v - np.dot(v, u) * u
        norm = np.linalg.norm(v)
        if norm > 1e-6:
            axes.append(v / norm)
        if len(axes) == dim - 1:
            break
    # one re-orthogonalization pass keeps the 1e-10 invariant at any base
    out = []
    for v in axes:
        v = v - np.dot(v, y) * y
        for u in out:
            v = v - np.dot(v, u) * u
        out.append(v / np.linalg.norm(v))
    return TangentFrame(y, np.array(out))


def exp_map(frame, v):
    """cos|v| base + sin|v| (sum v_k axis_k)/|v|, for |v| < pi."""
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size != frame.n:
        raise CertError("dimension-mismatch", f"tangent vector of size {v.size}, frame n={frame.n}")
    r = float(np.linalg.norm(v))
    if r >= np.pi:
        raise CertError("chart-overflow", f"|v|={r} >= pi")
    if r == 0.0:
        return frame.base.copy()
    w = v @ frame.axes
    p = np.cos(r) * frame.base + np.sin(r) * (w / r)
    return p / np.linalg.norm(p)


def log_map(frame, p):
    """Inverse of :func:`exp_map`: normal coordinates of ``p`` in ``frame``."""
    p = np.asarray(p, dtype=float)
    _check_same_dim(frame.base, p)
    c = float(np.dot(p, frame.base))
    w = p - c * frame.base
    coords = frame.axes @ w
    norm = float(np.linalg.norm(coords))
    theta = float(np.arctan2(norm, c))
    if theta >= np.pi - 1e-12:
        raise CertError("chart-overflow", "antipode of the base has no normal coordinates")
    if norm == 0.0:
        return np.zeros(frame.n)
    return coords * (theta / norm)


def chordal_distance(a, b):
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)))


def fibonacci_sphere(count, n):
    """Quasi-uniform points on S^n.

    For n = 2 this is the golden-angle spiral; in higher dimension the
    generalization uses a Kronecker (irrational-rotation) sequence on the
    unit cube mapped through the inverse normal CDF and then normalized.
    """
    if n == 2:
        i = np.arange(count) + 0.5
        z = 1.0 - 2.0 * i / count
        phi = np.pi * (1.0 + np.sqrt(5.0)) * i
        rxy = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
        return np.column_stack([rxy * np.cos(phi), rxy * np.sin(phi), z])
    from scipy.special import ndtri

    dim = n + 1
    # generalized golden ratio: the real root of x^{d+1} = x + 1
    g = 2.0
    for _ in range(60):
        g = (1.0 + g) ** (1.0 / (dim + 1))
    alpha = (1.0 / g) ** np.arange(1, dim + 1)
    u = (0.5 + np.outer(np.arange(1, count + 1), alpha)) % 1.0
    pts = ndtri(np.clip(u, 1e-12, 1 - 1e-12))
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)
