"""Leading-order reduced pseudo-gradient flow of p interacting bubbles.

A state is p bubbles (alpha_i, a_i, lambda_i).  For each bubble we
evaluate the leading terms of the two pairings

    g_lam[i] = <dJ, lambda_i d delta_i / d lambda_i>
    g_a[i]   = <dJ, (1/lambda_i) d delta_i / d a_i>     (n-vector)

with J(u) set to 1 and all o(.)/O(.) remainders dropped, and move along
a direction W with coefficients (w_lam, w_a) chosen so that the pairing
sum(g . w) is never positive:

    d log(lambda_i)/dt = w_lam[i],        d a_i/dt = w_a[i] / lambda_i.

This is a qualitative model: the correction term v-bar is not simulated
(only a size estimate is logged), and region gluing is done by discrete
switching with hysteresis instead of smooth cut-offs.
"""
import csv
import enum
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate

from . import _kernels
from . import expr as ex
from .constants import radial_integral
from .errors import CertError
from .geometry import exp_map, geodesic_distance, log_map, normal_frame, sphere_point

log = logging.getLogger(__name__)


@dataclass
class FlowConfig:
    epsilon: float = 0.01        # size of V(p, eps): lambda > 1/eps, eps_ij < eps
    M1: float = 10.0             # L1/L2 threshold on lambda |a - y|
    delta: float = 0.1           # lambda |a - y| below which the point-form applies
    rho_ball: float = 0.3        # radius of the ball attaching a bubble to a critical point
    lambda_cap: float = 1e8
    dt_init: float = 1e-2
    dt_min: float = 1e-14
    t_max: float = 1e16
    max_steps: int = 20000
    max_dlog: float = 0.05       # largest change of log(lambda) per step
    max_da: float = 1e-2         # largest geodesic move of a centre per step
    hysteresis: float = 0.1
    cluster_gamma: float = 0.1   # chi(t) = 0 for t <= gamma, 1 for t >= 1
    alpha_min: float = 0.1
    alpha_max: float = 10.0

    def validate(self):
        for name in ("epsilon", "M1", "delta", "rho_ball", "lambda_cap", "dt_init", "dt_min",
                     "t_max", "max_dlog", "max_da"):
            if not getattr(self, name) > 0:
                raise CertError("bad-config", f"{name} must be positive")
        if not self.dt_min < self.dt_init:
            raise CertError("bad-config", "dt_min must be below dt_init")
        if not self.epsilon < 1:
            raise CertError("bad-config", "epsilon must be below 1")
        return self


@dataclass
class ReducedState:
    alphas: np.ndarray
    points: np.ndarray       # (p, n+1)
    lambdas: np.ndarray
    time: float = 0.0

    @property
    def p(self):
        return len(self.lambdas)

    def copy(self):
        return ReducedState(self.alphas.copy(), self.points.copy(), self.lambdas.copy(), self.time)


class Curvature:
    """K on the sphere: an expression, or the flatness models of known points.

    Without an expression, K and its gradient near a critical point come
    from ``K(y) + sum b_k |v_k|^beta``; far from every known point the
    gradient is taken to be zero and the value is that of the nearest
    point.
    """

    def __init__(self, critical_points, expression=None):
        self.cps = list(critical_points)
        self.expression = expression

    def nearest(self, a):
        if not self.cps:
            return None, math.inf
        d = [geodesic_distance(a, cp.y) for cp in self.cps]
        k = int(np.argmin(d))
        return k, d[k]

    def value(self, a):
        if self.expression is not None:
            return ex.eval_on_sphere(self.expression, a)
        k, d = self.nearest(a)
        if k is None:
            raise CertError("no-curvature", "neither an expression nor critical points")
        cp = self.cps[k]
        return cp.local_model(a) if d < math.pi / 2 else cp.K_val

    def gradient(self, a, frame):
        if self.expression is not None:
            return ex.sphere_gradient(self.expression, a, 1e-5, frame)
        k, d = self.nearest(a)
        if k is None or d >= math.pi / 2:
            return np.zeros(frame.n)
        cp = self.cps[k]
        h = 1e-6
        out = np.empty(frame.n)
        for m in range(frame.n):
            v = np.zeros(frame.n)
            v[m] = h
            out[m] = (cp.local_model(exp_map(frame, v)) - cp.local_model(exp_map(frame, -v))) / (2 * h)
        return out


def alpha_for(K_val, n, sigma):
    """alpha with alpha^{4 sigma/(n - 2 sigma)} K = 1 (J taken as 1)."""
    return K_val ** (-(n - 2.0 * sigma) / (4.0 * sigma))


def make_state(points, lambdas, curvature, n, sigma, time=0.0):
    pts = np.array([sphere_point(p) for p in points])
    lam = np.asarray(lambdas, dtype=float)
    alphas = np.array([alpha_for(curvature.value(a), n, sigma) for a in pts])
    return ReducedState(alphas, pts, lam, time)


# -- interaction -------------------------------------------------------------

def pairwise_interaction(state, i, j, n, sigma, frame=None):
    """(eps_ij, d eps_ij/d lambda_i, d eps_ij/d a_i in the frame at a_i).

    |a_i - a_j| is the chordal distance in R^{n+1}.
    """
    if i == j:
        raise CertError("bad-pair", "i == j")
    eps, lam_deps, da = _kernels.pair_interactions(state.lambdas, state.points, n, sigma)
    if frame is None:
        frame = normal_frame(state.points[i])
    return float(eps[i, j]), float(lam_deps[i, j] / state.lambdas[i]), frame.axes @ da[i, j]


# -- one-dimensional reductions of the flatness integrals ---------------------

def _line_integral(fn, t):
    """Integral of fn over R, split where the integrand has a kink (-t) or its bulk (0)."""
    cuts = sorted({-t, 0.0})
    pieces = [(-math.inf, cuts[0])] + list(zip(cuts[:-1], cuts[1:])) + [(cuts[-1], math.inf)]
    total = 0.0
    for lo, hi in pieces:
        val, err, info = integrate.quad(fn, lo, hi, epsabs=1e-13, epsrel=1e-11, limit=400,
                                        full_output=1)[:3]
        if not math.isfinite(val) or err > 1e-6 * max(1.0, abs(val)):
            raise CertError("integral-failure", f"quadrature on [{lo}, {hi}] failed",
                            t=t, value=val, abserr=err)
        total += val
    return total


@lru_cache(maxsize=4096)
def lambda_moment(n, beta, t):
    """int_{R^n} sign(x_k + t) |x_k + t|^{beta-1} x_k (1+|x|^2)^{-n} dx."""
    w = radial_integral(n - 1, n) if n > 1 else 1.0

    def fn(s):
        u = s + t
        return math.copysign(abs(u) ** (beta - 1.0), u) * s * (1.0 + s * s) ** (-(n + 1) / 2.0)

    return w * _line_integral(fn, t)


@lru_cache(maxsize=4096)
def point_moment(n, beta, t):
    """int_{R^n} |x_k + t|^beta x_k (1+|x|^2)^{-(n+1)} dx; odd in t."""
    if t == 0.0:
        return 0.0
    w = radial_integral(n - 1, n + 1) if n > 1 else 1.0

    def fn(s):
        return abs(s + t) ** beta * s * (1.0 + s * s) ** (-(n + 3) / 2.0)

    return w * _line_integral(fn, t)


def point_moment_asymptote(n, beta, t, consts_moment):
    """Large-|t| form c sign(t) |t|^{beta-1}, c = beta int x_k^2 (1+|x|^2)^{-(n+1)}."""
    return beta * consts_moment * math.copysign(abs(t) ** (beta - 1.0), t)


# -- velocities ----------------------------------------------------------------

@dataclass
class BubbleTag:
    cp_index: int = None       # attached critical point, or None
    group: str = "far"         # "L1" / "L2" / "far"
    near: bool = False         # lambda |a - y| < delta
    chart: np.ndarray = None   # normal coordinates of a in the attached chart

    def to_json(self):
        return {"cp": self.cp_index, "group": self.group, "near": self.near}


class Flow:
    """Reduced flow for fixed (n, sigma), constants and critical-point data."""

    def __init__(self, n, sigma, consts, curvature, classifications, config=None):
        self.n = n
        self.sigma = sigma
        self.consts = consts
        self.curv = curvature
        self.cls = list(classifications)
        self.config = (config or FlowConfig()).validate()
        self._prev_tags = None

    # region bookkeeping
    def tag(self, state, previous=None):
        cfg = self.config
        tags = []
        for i in range(state.p):
            a = state.points[i]
            k, d = self.curv.nearest(a)
            prev = previous[i] if previous else None
            radius = cfg.rho_ball
            if prev is not None and prev.cp_index is not None and prev.cp_index == k:
                radius *= 1.0 + cfg.hysteresis
            if k is None or d >= radius:
                tags.append(BubbleTag())
                continue
            cp = self.curv.cps[k]
            v = log_map(cp.frame, a)
            s = state.lambdas[i] * float(np.linalg.norm(v))
            m1 = cfg.M1
            if prev is not None and prev.cp_index == k:
                m1 *= (1.0 + cfg.hysteresis) if prev.group == "L1" else (1.0 - cfg.hysteresis)
            tags.append(BubbleTag(k, "L1" if s <= m1 else "L2", s < cfg.delta, v))
        return tags

    def region(self, tags):
        """Global label V1^k / V2^k / V12^k, or "far"."""
        if any(t.cp_index is None for t in tags):
            return "far"
        crit = [self.cls[t.cp_index].in_K_beta_critical for t in tags]
        prefix = "V2" if all(crit) else ("V1" if not any(crit) else "V12")
        attached = [t.cp_index for t in tags]
        if len(set(attached)) < len(attached):
            return prefix + ("^5" if prefix == "V2" else "^4")
        if not all(t.near for t in tags):
            return prefix + "^3"
        if not all(self.cls[k].in_K_plus for k in attached):
            return prefix + "^2"
        return prefix + "^1"

    def pairings(self, state, tags):
        """(g_lam, g_a, frames, interactions) at ``state``."""
        n, sigma, c = self.n, self.sigma, self.consts
        p = state.p
        eps, lam_deps, _ = _kernels.pair_interactions(state.lambdas, state.points, n, sigma)
        a_exp = (n + 2.0 * sigma) / (n - 2.0 * sigma)
        g_lam = np.empty(p)
        g_a = np.empty((p, n))
        frames = []
        for i in range(p):
            lam = state.lambdas[i]
            alpha = state.alphas[i]
            inter = -c.c2 * sum(state.alphas[j] * lam_deps[i, j] for j in range(p) if j != i)
            t = tags[i]
            if t.cp_index is None:
                frame = normal_frame(state.points[i])
                grad = self.curv.gradient(state.points[i], frame)
                g_lam[i] = 2.0 * inter
                g_a[i] = -c.c5 * alpha ** a_exp * grad / lam
            else:
                cp = self.curv.cps[t.cp_index]
                frame = cp.frame
                beta = cp.beta
                Ka = self.curv.value(state.points[i])
                pref = (n - 2.0 * sigma) / (2.0 * n) * beta * alpha / Ka / lam ** beta
                if t.near:
                    self_term = pref * c.c3_at(beta) * cp.b_sum
                else:
                    tk = lam * t.chart
                    self_term = pref * c.c0_power * sum(
                        cp.b[k] * lambda_moment(n, beta, float(tk[k])) for k in range(n))
                g_lam[i] = 2.0 * (self_term + inter)
                tk = lam * t.chart
                coef = -2.0 * (n - 2.0 * sigma) * c.c0_power * alpha ** a_exp / lam ** beta
                g_a[i] = [coef * cp.b[k] * point_moment(n, beta, float(tk[k])) for k in range(n)]
            frames.append(frame)
        return g_lam, g_a, frames, (eps, lam_deps)

    def direction(self, state, tags, g_lam, g_a):
        """Coefficients (w_lam, w_a) of W; sum(g * w) <= 0 by construction.

        Steepest descent in the (log lambda, a) coordinates, except that a
        bubble sharing its critical point with another bubble of
        comparable or smaller concentration may not increase lambda.
        """
        w_lam = -g_lam.copy()
        w_a = -g_a.copy()
        gamma = self.config.cluster_gamma
        groups = {}
        for i, t in enumerate(tags):
            if t.cp_index is not None:
                groups.setdefault(t.cp_index, []).append(i)
        for members in groups.values():
            if len(members) < 2:
                continue
            for j in members:
                chi_bar = sum(_chi(state.lambdas[j] / state.lambdas[i], gamma)
                              for i in members if i != j)
                if chi_bar > 0:
                    w_lam[j] = min(w_lam[j], 0.0)
        return w_lam, w_a

    def advance(self, state, tags, w_lam, w_a, dt):
        new = state.copy()
        new.lambdas = state.lambdas * np.exp(w_lam * dt)
        for i in range(state.p):
            step = w_a[i] * dt / state.lambdas[i]
            if not np.any(step):
                continue
            t = tags[i]
            if t.cp_index is not None:
                cp = self.curv.cps[t.cp_index]
                new.points[i] = exp_map(cp.frame, t.chart + step)
            else:
                new.points[i] = exp_map(normal_frame(state.points[i]), step)
            new.alphas[i] = alpha_for(self.curv.value(new.points[i]), self.n, self.sigma)
        new.time = state.time + dt
        return new


def _chi(t, gamma):
    if t <= gamma:
        return 0.0
    if t >= 1.0:
        return 1.0
    return (t - gamma) / (1.0 - gamma)


# -- module-level API ---------------------------------------------------------

def lambda_velocity(flow, state, i, tags=None):
    tags = tags or flow.tag(state)
    return float(flow.pairings(state, tags)[0][i])


def point_velocity(flow, state, i, tags=None):
    tags = tags or flow.tag(state)
    return flow.pairings(state, tags)[1][i]


def classify_region(flow, state, previous=None):
    tags = flow.tag(state, previous)
    return tags, flow.region(tags)


def pp_violations(state, eps, lam_deps, n, sigma, factor=0.9):
    """Pairs with lambda_i >= lambda_j breaking lambda_i d eps/d lambda_i <= -c eps."""
    c = factor * (n - 2.0 * sigma) / 2.0
    bad = []
    for i in range(state.p):
        for j in range(state.p):
            if i != j and state.lambdas[i] >= state.lambdas[j]:
                if lam_deps[i, j] > -c * eps[i, j]:
                    bad.append((i, j, float(lam_deps[i, j]), float(eps[i, j])))
    return bad


def vbar_estimate(state, eps, grads, betas, n, sigma):
    """Computable part of the size bound on the neglected correction v-bar."""
    lam = state.lambdas
    tot = 0.0
    for i in range(state.p):
        tot += lam[i] ** (-n / 2.0) + lam[i] ** (-betas[i]) + grads[i] / lam[i]
        tot += math.log(lam[i]) ** ((n + 2 * sigma) / (2 * n)) / lam[i] ** ((n + 2 * sigma) / 2)
    for k in range(state.p):
        for r in range(state.p):
            if k == r or eps[k, r] <= 0:
                continue
            e = eps[k, r]
            if n >= 3:
                tot += e ** ((n + 2 * sigma) / (2 * (n - 2 * sigma))) * math.log(1 / e) ** ((n + 2 * sigma) / (2 * n))
            else:
                tot += e * math.log(1 / e) ** ((n - 2 * sigma) / n)
    return tot


class Outcome(enum.Enum):
    BLOW_UP = "BlowUp"
    EXIT = "Exit"
    TIMEOUT = "Timeout"


@dataclass
class StepRecord:
    time: float
    dt: float
    lambdas: list
    points: list
    region: str
    tags: list
    pairing: float
    unit_pairing: float   # pairing against the field with unit coefficients
    bound: float          # sum lambda^-beta + sum_{i<j} eps_ij
    pp_ok: bool
    vbar: float


@dataclass
class FlowOutcome:
    outcome: Outcome
    state: ReducedState
    steps: int
    reason: str
    blown: list = field(default_factory=list)     # bubbles whose lambda reached the cap
    limit_tuple: list = field(default_factory=list)
    limit_weights: list = field(default_factory=list)
    descent_constant: float = None                # min over steps of -unit_pairing / bound
    max_pairing: float = None
    pp_ok: bool = True
    trajectory: list = field(default_factory=list)

    def to_json(self):
        return {
            "outcome": self.outcome.value, "reason": self.reason, "steps": self.steps,
            "time": self.state.time,
            "lambdas": self.state.lambdas.tolist(),
            "points": self.state.points.tolist(),
            "blown": self.blown, "limit_tuple": self.limit_tuple,
            "limit_weights": self.limit_weights,
            "descent_constant": self.descent_constant, "max_pairing": self.max_pairing,
            "pp_inequality_held": self.pp_ok,
        }


def step(flow, state, tags, dt):
    """One accepted explicit step; halves dt until the step does not overshoot.

    Returns (new_state, new_tags, dt_used, record data).  The acceptance
    predicate is that W computed at ``state`` still descends at the new
    state: sum(g_new . w) <= 0.
    """
    cfg = flow.config
    g_lam, g_a, frames, (eps, lam_deps) = flow.pairings(state, tags)
    w_lam, w_a = flow.direction(state, tags, g_lam, g_a)
    # bubbles that already reached the cap are held fixed
    capped = state.lambdas >= cfg.lambda_cap
    w_lam[capped] = 0.0
    w_a[capped] = 0.0
    pairing = float(np.dot(g_lam, w_lam) + np.sum(g_a * w_a))
    speed_lam = float(np.max(np.abs(w_lam))) if state.p else 0.0
    speed_a = float(np.max(np.linalg.norm(w_a, axis=1) / state.lambdas)) if state.p else 0.0
    limit = math.inf
    if speed_lam > 0:
        limit = cfg.max_dlog / speed_lam
    if speed_a > 0:
        limit = min(limit, cfg.max_da / speed_a)
    if not math.isfinite(limit):
        dt = cfg.t_max - state.time      # stationary for the leading-order model
    else:
        dt = min(dt, limit)
    while True:
        cand = flow.advance(state, tags, w_lam, w_a, dt)
        new_tags = flow.tag(cand, tags)
        if not math.isfinite(limit):
            break
        g2_lam, g2_a, _, _ = flow.pairings(cand, _same_charts(new_tags, tags, cand, flow))
        if np.dot(g2_lam, w_lam) + np.sum(g2_a * w_a) <= 0.0:
            break
        dt *= 0.5
        if dt < cfg.dt_min:
            raise CertError("stiff-step", f"no descending step above dt_min at t={state.time}",
                            time=state.time)
    grads = np.linalg.norm(g_a, axis=1)
    betas = [flow.curv.cps[t.cp_index].beta if t.cp_index is not None else
             max((cp.beta for cp in flow.curv.cps), default=2.0) for t in tags]
    bound = float(sum(state.lambdas[i] ** (-betas[i]) for i in range(state.p)))
    bound += float(np.sum(np.triu(eps, 1)))
    info = dict(pairing=pairing, unit_pairing=unit_pairing(g_lam, g_a, w_lam, w_a), bound=bound,
                pp_ok=not pp_violations(state, eps, lam_deps, flow.n, flow.sigma),
                vbar=vbar_estimate(state, eps, grads, betas, flow.n, flow.sigma), eps=eps)
    return cand, new_tags, dt, info


def unit_pairing(g_lam, g_a, w_lam, w_a):
    """<dJ, W> for W with coefficients sign(w_lam) and w_a/|w_a|.

    The dynamics move with speed proportional to the pairings, so their
    own pairing is quadratic in the small quantities; the descent bound
    is stated for a field with coefficients of order one.
    """
    tot = float(np.dot(g_lam, np.sign(w_lam)))
    for ga, wa in zip(g_a, w_a):
        nrm = float(np.linalg.norm(wa))
        if nrm > 0:
            tot += float(np.dot(ga, wa)) / nrm
    return tot


def _same_charts(new_tags, old_tags, state, flow):
    """Evaluate the predicate in the regions the step started from."""
    out = []
    for nt, ot in zip(new_tags, old_tags):
        if ot.cp_index is not None and nt.cp_index == ot.cp_index:
            out.append(BubbleTag(ot.cp_index, nt.group, nt.near, nt.chart))
        else:
            out.append(nt)
    return out


def run_to_infinity(flow, initial, log_path=None, keep_trajectory=False):
    """Integrate until blow-up, exit from V(p, eps), or the time/step horizon."""
    cfg = flow.config
    state = initial.copy()
    _check_membership(state, cfg, flow)
    tags = flow.tag(state)
    dt = cfg.dt_init
    traj = []
    min_ratio = math.inf
    max_pairing = -math.inf
    pp_all = True
    writer = None
    fh = None
    if log_path is not None:
        try:
            fh = open(log_path, "w", newline="")
        except OSError as exc:
            raise CertError("io-error", f"cannot write trajectory log: {exc}") from None
        writer = csv.writer(fh)
        writer.writerow(["time", "dt", "region", "pairing", "vbar_estimate"]
                        + [f"lambda_{i}" for i in range(state.p)]
                        + [f"a_{i}_{k}" for i in range(state.p) for k in range(state.points.shape[1])]
                        + [f"tag_{i}" for i in range(state.p)])
    outcome = None
    reason = ""
    steps = 0
    try:
        while True:
            if np.all(state.lambdas >= cfg.lambda_cap):
                outcome, reason = Outcome.BLOW_UP, "all concentrations reached the cap"
                break
            if state.time >= cfg.t_max or steps >= cfg.max_steps:
                outcome, reason = Outcome.TIMEOUT, "time or step horizon reached"
                break
            exit_reason = _exit_reason(state, cfg, flow)
            if exit_reason:
                outcome, reason = Outcome.EXIT, exit_reason
                break
            region = flow.region(tags)
            new, new_tags, dt_used, info = step(flow, state, tags, dt)
            steps += 1
            max_pairing = max(max_pairing, info["pairing"])
            if info["bound"] > 0:
                min_ratio = min(min_ratio, -info["unit_pairing"] / info["bound"])
            pp_all = pp_all and info["pp_ok"]
            rec = StepRecord(state.time, dt_used, state.lambdas.tolist(), state.points.tolist(),
                             region, [t.to_json() for t in tags], info["pairing"],
                             info["unit_pairing"], info["bound"], info["pp_ok"], info["vbar"])
            if keep_trajectory:
                traj.append(rec)
            if writer is not None:
                writer.writerow([rec.time, rec.dt, rec.region, rec.pairing, rec.vbar]
                                + rec.lambdas + [c for pt in rec.points for c in pt]
                                + [f"{t['group']}@{t['cp']}" for t in rec.tags])
            state, tags = new, new_tags
            dt = min(dt_used * 2.0, cfg.t_max)
    finally:
        if fh is not None:
            fh.close()
    if keep_trajectory:
        traj.append(StepRecord(state.time, 0.0, state.lambdas.tolist(), state.points.tolist(),
                               flow.region(tags), [t.to_json() for t in tags], 0.0, 0.0, 0.0, True, 0.0))
    out = FlowOutcome(outcome, state, steps, reason, trajectory=traj,
                      descent_constant=min_ratio if math.isfinite(min_ratio) else None,
                      max_pairing=max_pairing if steps else None, pp_ok=pp_all)
    out.blown = [i for i in range(state.p) if state.lambdas[i] >= cfg.lambda_cap]
    if outcome is Outcome.BLOW_UP:
        a = flow.n - 2.0 * flow.sigma
        for t in tags:
            cp = flow.curv.cps[t.cp_index] if t.cp_index is not None else None
            out.limit_tuple.append(cp.label if cp else None)
            out.limit_weights.append(cp.K_val ** (-a / 2.0) if cp else None)
    return out


def _check_membership(state, cfg, flow):
    if np.any(state.lambdas <= 1.0 / cfg.epsilon):
        raise CertError("bad-initial", f"every lambda must exceed 1/epsilon = {1 / cfg.epsilon}")
    if state.p > 1:
        eps, _, _ = _kernels.pair_interactions(state.lambdas, state.points, flow.n, flow.sigma)
        if np.max(eps) >= cfg.epsilon:
            raise CertError("bad-initial", f"bubbles interact too strongly (max eps_ij={np.max(eps):.3g})")


def _exit_reason(state, cfg, flow):
    if np.any(state.lambdas <= 1.0 / cfg.epsilon):
        return "a concentration fell to the V(p, eps) floor 1/eps"
    if state.p > 1:
        eps, _, _ = _kernels.pair_interactions(state.lambdas, state.points, flow.n, flow.sigma)
        if np.max(eps) >= cfg.epsilon:
            return "bubble interaction eps_ij reached eps"
    if np.any(state.alphas < cfg.alpha_min) or np.any(state.alphas > cfg.alpha_max):
        return "an amplitude left [alpha_min, alpha_max]"
    return ""
