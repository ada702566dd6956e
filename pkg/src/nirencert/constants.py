"""Universal integrals of the bubble profile (1 + |x|^2)^{-p} on R^n.

Every constant is computed twice: from its Beta/Gamma closed form and by
adaptive quadrature of the one-dimensional reduction.  The two routes
share nothing but the sphere-area formula, and must agree to 1e-8.
"""
import enum
import math
from dataclasses import dataclass, field

from scipy import integrate

from .errors import CertError

AGREEMENT_TOL = 1e-8


class C1TildeMode(enum.Enum):
    PAPER_HEADER = "paper-header"   # weight |x_1|^{n-2}
    PROOF_STEP = "proof-step"       # weight |x_1|^{n-2 sigma}

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower().replace("_", "-"))
        except ValueError:
            raise CertError("bad-option", f"unknown c1tilde mode {value!r}") from None


def sphere_area(m):
    """Surface measure of the unit sphere S^m in R^{m+1}."""
    return 2.0 * math.pi ** ((m + 1) / 2.0) / math.gamma((m + 1) / 2.0)


def beta_fn(a, b):
    return math.exp(math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b))


def _radial_closed(n, p):
    return sphere_area(n - 1) * 0.5 * beta_fn(n / 2.0, p - n / 2.0)


def _sin_cos_integral(a, b):
    """int_0^{pi/2} sin^a(t) cos^b(t) dt for a, b > -1, by quadrature.

    The endpoint behaviour t^a (pi/2 - t)^b is handed to QUADPACK's
    algebraic weight; the remaining factor is smooth.
    """
    half = math.pi / 2.0

    def smooth(t):
        s = math.sin(t) / t if t > 0 else 1.0
        u = half - t
        c = math.cos(t) / u if u > 0 else 1.0
        return s ** a * c ** b

    val, err = integrate.quad(smooth, 0.0, half, weight="alg", wvar=(a, b),
                              epsabs=0.0, epsrel=1e-13, limit=200)
    return val


def _radial_moment_quad(m, p):
    """int_0^inf r^m (1 + r^2)^{-p} dr via r = tan(t)."""
    return _sin_cos_integral(m, 2.0 * p - m - 2.0)


def radial_integral(n, p, method="closed"):
    """int_{R^n} (1 + |x|^2)^{-p} dx, finite iff p > n/2.

    ``method`` is ``"closed"`` (Beta function) or ``"quad"`` (adaptive
    quadrature of the radial profile).
    """
    if n < 1:
        raise CertError("bad-dimension", f"n={n}")
    if p <= n / 2.0:
        raise CertError("divergent-integral", f"p={p} <= n/2={n / 2}")
    if method == "closed":
        return _radial_closed(n, p)
    return sphere_area(n - 1) * _radial_moment_quad(n - 1, p)


def _angular_closed(n, alpha):
    # int_{S^{n-1}} |w_1|^alpha dw
    return 2.0 * math.pi ** ((n - 1) / 2.0) * math.exp(
        math.lgamma((alpha + 1) / 2.0) - math.lgamma((n + alpha) / 2.0))


def _angular_quad(n, alpha):
    if n == 1:
        return 2.0
    # w_1 = cos(phi); the slice at phi is an S^{n-2} of radius sin(phi)
    return sphere_area(n - 2) * 2.0 * _sin_cos_integral(n - 2.0, alpha)


def moment_integral(n, alpha, p, method="closed"):
    """int_{R^n} |x_1|^alpha (1 + |x|^2)^{-p} dx, finite iff p > (n+alpha)/2."""
    if alpha < 0:
        raise CertError("bad-exponent", f"alpha={alpha} < 0")
    if p <= (n + alpha) / 2.0:
        raise CertError("divergent-integral", f"p={p} <= (n+alpha)/2={(n + alpha) / 2}")
    if method == "closed":
        return _angular_closed(n, alpha) * 0.5 * beta_fn((n + alpha) / 2.0, p - (n + alpha) / 2.0)
    return _angular_quad(n, alpha) * _radial_moment_quad(n + alpha - 1.0, p)


def _checked(fn, *args):
    closed = fn(*args, method="closed")
    quad = fn(*args, method="quad")
    rel = abs(closed - quad) / abs(closed)
    if not rel <= AGREEMENT_TOL or not math.isfinite(closed) or closed <= 0:
        raise CertError("quadrature-mismatch", f"{fn.__name__}{args}: {closed} vs {quad}",
                        closed=closed, quad=quad)
    return closed, rel


def c_n_sigma(n, sigma):
    return math.gamma(n / 2.0 + sigma) / math.gamma(n / 2.0 - sigma)


@dataclass(frozen=True)
class Constants:
    n: int
    sigma: float
    c0: float
    mode: C1TildeMode
    c1: float
    c1_tilde: float
    c1_tilde_other: float   # the value under the other exponent convention
    c2: float
    c3: float
    c3_beta: float
    c5: float
    c_n_sigma: float
    max_rel_disagreement: float
    _c3_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def c0_power(self):
        return self.c0 ** (2.0 * self.n / (self.n - 2.0 * self.sigma))

    def c3_at(self, beta):
        """c_3 for a flatness order other than the one it was built with."""
        if beta == self.c3_beta:
            return self.c3
        if beta not in self._c3_cache:
            self._c3_cache[beta] = self.c0_power * moment_integral(self.n, beta, self.n)
        return self._c3_cache[beta]

    def to_json(self):
        return {
            "n": self.n, "sigma": self.sigma, "c0": self.c0,
            "c1tilde_mode": self.mode.value,
            "c1": self.c1, "c1_tilde": self.c1_tilde,
            "c1_tilde_other_mode": self.c1_tilde_other,
            "c2": self.c2, "c3": self.c3, "c3_beta": self.c3_beta, "c5": self.c5,
            "c_n_sigma": self.c_n_sigma,
            "max_rel_disagreement": self.max_rel_disagreement,
            "scale_note": "values in c0 units; rho magnitudes depend on c0, signs do not",
        }


def build_constants(n, sigma, c0=1.0, mode=C1TildeMode.PROOF_STEP, beta=None):
    """Assemble all constants for (n, sigma); ``beta`` selects c_3.

    ``beta`` defaults to the critical flatness order n - 2 sigma.
    """
    if n < 2:
        raise CertError("bad-dimension", f"n={n} < 2")
    if not 0.0 < sigma < 1.0:
        raise CertError("bad-sigma", f"sigma={sigma} outside (0, 1)")
    if not c0 > 0:
        raise CertError("bad-c0", f"c0={c0}")
    mode = C1TildeMode.parse(mode)
    if beta is None:
        beta = n - 2.0 * sigma
    scale = c0 ** (2.0 * n / (n - 2.0 * sigma))

    c1, e1 = _checked(radial_integral, n, (n + 2.0 * sigma) / 2.0)
    ct_proof, e2 = _checked(moment_integral, n, n - 2.0 * sigma, float(n))
    ct_header, e3 = _checked(moment_integral, n, n - 2.0, float(n))
    m3, e4 = _checked(moment_integral, n, float(beta), float(n))
    c5, e5 = _checked(radial_integral, n, float(n))
    if mode is C1TildeMode.PROOF_STEP:
        ct, other = ct_proof, ct_header
    else:
        ct, other = ct_header, ct_proof
    return Constants(
        n=n, sigma=sigma, c0=c0, mode=mode,
        c1=c1, c1_tilde=ct, c1_tilde_other=other,
        c2=scale * c1, c3=scale * m3, c3_beta=float(beta), c5=c5,
        c_n_sigma=c_n_sigma(n, sigma),
        max_rel_disagreement=max(e1, e2, e3, e4, e5),
    )
