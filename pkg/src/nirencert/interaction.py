"""Interaction matrices of tuples of critical points with beta = n - 2 sigma.

For a tuple (y_1, ..., y_p) the symmetric matrix M has

    m_ii = (n - 2s)/n * c1_tilde * (-sum_k b_k(y_i)) / K(y_i)^{n/(2s)}
    m_ij = 2^{(n-2s)/2} * c1 * (-G(y_i, y_j)) / (K(y_i) K(y_j))^{(n-2s)/(4s)}

with G the kernel of :func:`geometry.green_kernel`.  Its least
eigenvalue rho decides whether the tuple is a critical point at infinity.
"""
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import _kernels
from .critpoints import BETA_TOL, classify
from .errors import CertError
from .geometry import geodesic_distance, green_kernel

DEGENERACY_REL_TOL = 1e-9
COINCIDENT_TOL = 1e-6


def status_of(rho, norm, rel_tol=DEGENERACY_REL_TOL):
    if abs(rho) <= rel_tol * norm:
        return "degenerate"
    return "positive" if rho > 0 else "negative"


@dataclass
class InteractionMatrix:
    points: list
    entries: np.ndarray
    rho: float
    norm: float          # spectral radius
    status: str

    @property
    def p(self):
        return len(self.points)

    @property
    def rho_margin(self):
        return abs(self.rho) / self.norm if self.norm > 0 else 0.0

    def to_json(self):
        return {
            "members": [cp.label for cp in self.points],
            "entries": self.entries.tolist(),
            "rho": self.rho,
            "rho_margin": self.rho_margin,
            "status": self.status,
        }


def matrix_entries(points, consts, n, sigma):
    """The p x p matrix; each off-diagonal entry is computed once and mirrored."""
    p = len(points)
    a = n - 2.0 * sigma
    diag_coef = a / n * consts.c1_tilde
    off_coef = 2.0 ** (a / 2.0) * consts.c1
    m = np.empty((p, p))
    for i, yi in enumerate(points):
        m[i, i] = diag_coef * (-yi.b_sum) / yi.K_val ** (n / (2.0 * sigma))
        for j in range(i + 1, p):
            yj = points[j]
            if geodesic_distance(yi.y, yj.y) <= COINCIDENT_TOL:
                raise CertError("coincident-points", f"{yi.label} and {yj.label} coincide")
            g = green_kernel(yi.y, yj.y, n, sigma)
            m[i, j] = m[j, i] = off_coef * (-g) / (yi.K_val * yj.K_val) ** (a / (4.0 * sigma))
    return m


def build_matrix(points, consts, n, sigma, beta_tol=BETA_TOL,
                 degeneracy_rel_tol=DEGENERACY_REL_TOL, check_stratum=True):
    """M(tau_p) for the tuple ``points`` with its least eigenvalue."""
    if not points:
        raise CertError("empty-tuple", "need at least one point")
    if check_stratum:
        for cp in points:
            if not classify(cp, n, sigma, beta_tol).in_K_beta_critical:
                raise CertError("wrong-stratum", f"{cp.label}: beta={cp.beta} != n - 2 sigma")
    m = matrix_entries(points, consts, n, sigma)
    ev = _kernels.symmetric_eigenvalues(m)
    rho = float(ev[0])
    norm = float(np.max(np.abs(ev)))
    return InteractionMatrix(list(points), m, rho, norm, status_of(rho, norm, degeneracy_rel_tol))


@dataclass
class A1Report:
    holds: bool
    subsets: list        # (member indices, rho, margin, status)
    max_p: int

    @property
    def degenerate(self):
        return [s for s in self.subsets if s[3] == "degenerate"]

    def to_json(self, labels=None):
        def name(ix):
            return [labels[i] for i in ix] if labels else list(ix)
        return {
            "holds": self.holds,
            "max_p": self.max_p,
            "subset_count": len(self.subsets),
            "counts": {k: sum(1 for s in self.subsets if s[3] == k)
                       for k in ("positive", "negative", "degenerate")},
            "subsets": [{"members": name(ix), "rho": rho, "margin": mg, "status": st}
                        for ix, rho, mg, st in self.subsets],
        }


def subset_masks(m, max_p):
    """Bitmasks of all nonempty subsets of size <= max_p, canonical order.

    Canonical order is by size, then lexicographic on sorted members.
    """
    masks = []
    for size in range(1, max_p + 1):
        for combo in combinations(range(m), size):
            mask = 0
            for i in combo:
                mask |= 1 << i
            masks.append(mask)
    return np.array(masks, dtype=np.int64)


def members_of(mask):
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return tuple(out)


def check_A1(beta_critical, consts, n, sigma, max_p=None,
             degeneracy_rel_tol=DEGENERACY_REL_TOL):
    """rho of every sub-tuple of the critical stratum; A1 holds iff none is ~0."""
    m = len(beta_critical)
    if m == 0:
        return A1Report(True, [], 0)
    if max_p is None:
        max_p = m
    if max_p > m:
        raise CertError("bad-max-p", f"max_p={max_p} exceeds stratum size {m}")
    full = matrix_entries(beta_critical, consts, n, sigma)
    masks = subset_masks(m, max_p)
    rho, norm = _kernels.subset_spectra(full, masks)
    subsets = []
    for mask, r, nm in zip(masks, rho, norm):
        st = status_of(r, nm, degeneracy_rel_tol)
        subsets.append((members_of(int(mask)), float(r), float(abs(r) / nm) if nm > 0 else 0.0, st))
    holds = not any(s[3] == "degenerate" for s in subsets)
    return A1Report(holds, subsets, max_p)
