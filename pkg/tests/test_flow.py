import csv
import math

import numpy as np
import pytest
from scipy import integrate

from nirencert import critpoints as cpm
from nirencert import expr as ex
from nirencert import flow as fl
from nirencert.constants import build_constants, moment_integral
from nirencert.errors import CertError
from nirencert.geometry import exp_map, geodesic_distance, normal_frame, pole, sphere_point

from oracles import eps_direct

N, SIGMA = 3, 0.5
CONSTS = build_constants(N, SIGMA)


def setup(records, config=None, expression=None, n=N, sigma=SIGMA):
    cps = [cpm.from_record(r, n, i) for i, r in enumerate(records)]
    cls = [cpm.classify(c, n, sigma) for c in cps]
    curv = fl.Curvature(cps, expression)
    consts = CONSTS if (n, sigma) == (N, SIGMA) else build_constants(n, sigma)
    return fl.Flow(n, sigma, consts, curv, cls, config or fl.FlowConfig()), curv


NORTH_KPLUS = {"label": "north", "y": [0, 0, 0, 1], "K": 2.0, "beta": 1.5, "b": [-1, -1, -1]}
NORTH_KMINUS = {"label": "north", "y": [0, 0, 0, 1], "K": 2.0, "beta": 1.5, "b": [1, 1, -1]}
PAIR = [{"label": "north", "y": [0, 0, 0, 1], "K": 1.0, "beta": 2.0, "b": [-3, -3, -3]},
        {"label": "south", "y": [0, 0, 0, -1], "K": 1.0, "beta": 2.0, "b": [-3, -3, -3]}]


# -- interaction ---------------------------------------------------------------

def test_pairwise_interaction_examples():
    st = fl.ReducedState(np.ones(2), np.array([pole(2), pole(2)]), np.array([7.0, 7.0]))
    e, dl, da = fl.pairwise_interaction(st, 0, 1, 2, 0.5)
    assert e == pytest.approx(2 ** -0.5, rel=1e-15)
    st.points[1] = sphere_point([0.3, 0.1, 1])
    st.lambdas[1] = 30.0
    assert fl.pairwise_interaction(st, 0, 1, 2, 0.5)[0] == fl.pairwise_interaction(st, 1, 0, 2, 0.5)[0]
    with pytest.raises(CertError):
        fl.pairwise_interaction(st, 1, 1, 2, 0.5)


def random_pair_state(rng, n):
    lam = 10 ** rng.uniform(0.5, 4, 2)
    pts = rng.standard_normal((2, n + 1))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    return fl.ReducedState(np.ones(2), pts, lam)


def check_derivatives(rng, count):
    worst = 0.0
    for _ in range(count):
        n = int(rng.integers(2, 6))
        sigma = float(rng.uniform(0.05, 0.95))
        st = random_pair_state(rng, n)
        frame = normal_frame(st.points[0])
        e, dl, da = fl.pairwise_interaction(st, 0, 1, n, sigma, frame)
        lam_i, lam_j = st.lambdas
        a_i, a_j = st.points
        h = 1e-6 * lam_i
        fd = (eps_direct(lam_i + h, lam_j, a_i, a_j, n, sigma)
              - eps_direct(lam_i - h, lam_j, a_i, a_j, n, sigma)) / (2 * h)
        worst = max(worst, abs(fd - dl) / abs(dl))
        for k in range(n):
            v = np.zeros(n)
            v[k] = 1e-6
            fd = (eps_direct(lam_i, lam_j, exp_map(frame, v), a_j, n, sigma)
                  - eps_direct(lam_i, lam_j, exp_map(frame, -v), a_j, n, sigma)) / 2e-6
            worst = max(worst, abs(fd - da[k]) / max(abs(da[k]), 1e-3 * np.linalg.norm(da)))
    return worst


def test_eps_derivatives_finite_differences(rng):
    assert check_derivatives(rng, 300) < 1e-6


# -- moment integrals ---------------------------------------------------------

def test_point_moment_zero_at_centre():
    assert fl.point_moment(3, 1.5, 0.0) == 0.0
    # odd in t
    assert fl.point_moment(3, 1.5, -2.0) == pytest.approx(-fl.point_moment(3, 1.5, 2.0), rel=1e-10)


def test_lambda_moment_at_centre_is_flatness_constant():
    for n, beta in [(2, 1.5), (3, 2.0), (4, 3.1)]:
        assert fl.lambda_moment(n, beta, 0.0) == pytest.approx(moment_integral(n, beta, n), rel=1e-8)


@pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
@pytest.mark.parametrize("beta, t", [(1.5, 0.7), (1.2, -2.0), (1.8, 3.0)])
def test_one_dimensional_reduction_against_plane_integral(beta, t):
    # n = 2: integrate over the plane directly, splitting at the kink x = -t
    def lam_f(y, x):
        u = x + t
        return math.copysign(abs(u) ** (beta - 1), u) * x / (1 + x * x + y * y) ** 2

    def pt_f(y, x):
        return abs(x + t) ** beta * x / (1 + x * x + y * y) ** 3
    for f, want in [(lam_f, fl.lambda_moment(2, beta, t)), (pt_f, fl.point_moment(2, beta, t))]:
        tot = 0.0
        for lo, hi in [(-np.inf, -t), (-t, np.inf)]:
            tot += integrate.dblquad(f, lo, hi, -np.inf, np.inf, epsabs=1e-11, epsrel=1e-10)[0]
        assert want == pytest.approx(tot, rel=1e-6, abs=1e-10)


@pytest.mark.parametrize("n, beta", [(2, 1.5), (3, 1.5), (3, 2.5), (5, 3.0)])
def test_point_moment_asymptote(n, beta):
    c = moment_integral(n, 2.0, n + 1)
    for t in (1e3, -1e3):
        got = fl.point_moment(n, beta, t)
        want = fl.point_moment_asymptote(n, beta, t, c)
        assert abs(got / want - 1) < 0.05


# -- velocities ----------------------------------------------------------------

def test_lambda_velocity_signs():
    flow, curv = setup([NORTH_KPLUS])
    st = fl.make_state([pole(3)], [500.0], curv, N, SIGMA)
    assert fl.lambda_velocity(flow, st, 0) < 0
    flow, curv = setup([NORTH_KMINUS])
    assert fl.lambda_velocity(flow, st, 0) > 0


def test_lambda_velocity_closed_form_at_critical_point():
    flow, curv = setup([NORTH_KPLUS])
    st = fl.make_state([pole(3)], [500.0], curv, N, SIGMA)
    alpha = 2.0 ** (-(N - 2 * SIGMA) / (4 * SIGMA))
    assert st.alphas[0] == pytest.approx(alpha)
    want = 2 * (N - 2 * SIGMA) / (2 * N) * 1.5 * CONSTS.c3_at(1.5) * alpha / 2.0 * (-3) / 500 ** 1.5
    assert fl.lambda_velocity(flow, st, 0) == pytest.approx(want, rel=1e-12)


def test_interaction_term_far_apart():
    flow, curv = setup([NORTH_KPLUS])
    a = sphere_point([1, 0, 0, 0])
    b = sphere_point([0, 1, 0, 0])
    st = fl.make_state([a, b], [300.0, 400.0], curv, N, SIGMA)
    tags = flow.tag(st)
    assert all(t.cp_index is None for t in tags)
    eps, lam_deps, _ = fl._kernels.pair_interactions(st.lambdas, st.points, N, SIGMA)
    for i, j in [(0, 1), (1, 0)]:
        want = 2 * (-CONSTS.c2 * st.alphas[j] * lam_deps[i, j])
        assert fl.lambda_velocity(flow, st, i, tags) == pytest.approx(want, rel=1e-12, abs=1e-300)


def test_point_velocity_zero_at_critical_point():
    flow, curv = setup([NORTH_KPLUS])
    st = fl.make_state([pole(3)], [500.0], curv, N, SIGMA)
    np.testing.assert_allclose(fl.point_velocity(flow, st, 0), 0.0, atol=1e-14)


def test_point_velocity_opposes_gradient_far_away():
    e = ex.parse("2 + x1")
    flow, curv = setup([NORTH_KPLUS], expression=e)
    a = sphere_point([0.3, 0.5, -0.8, 0.1])
    st = fl.make_state([a], [500.0], curv, N, SIGMA)
    tags = flow.tag(st)
    assert tags[0].cp_index is None
    frame = normal_frame(a)
    g = ex.sphere_gradient(e, a, frame=frame)
    v = fl.point_velocity(flow, st, 0, tags)
    assert np.dot(v, g) < 0
    np.testing.assert_allclose(v / np.linalg.norm(v), -g / np.linalg.norm(g), atol=1e-10)


def test_point_velocity_pulls_towards_maximum():
    # near a strict local max (all b < 0) the a-direction W = -g_a points back to y
    flow, curv = setup([NORTH_KPLUS])
    f = normal_frame(pole(3))
    a = exp_map(f, [0.01, -0.02, 0.005])
    st = fl.make_state([a], [500.0], curv, N, SIGMA)
    w = -fl.point_velocity(flow, st, 0)
    chart = flow.tag(st)[0].chart
    assert np.all(np.sign(w) == -np.sign(chart))


# -- regions -------------------------------------------------------------------

def test_classify_region_tags():
    cfg = fl.FlowConfig(M1=10.0)
    flow, curv = setup([NORTH_KPLUS], cfg)
    f = normal_frame(pole(3))
    st = fl.make_state([pole(3)], [500.0], curv, N, SIGMA)
    tags, region = fl.classify_region(flow, st)
    assert tags[0].group == "L1" and tags[0].near and region == "V1^1"
    st = fl.make_state([exp_map(f, [20.0 / 500, 0, 0])], [500.0], curv, N, SIGMA)
    tags, region = fl.classify_region(flow, st)
    assert tags[0].group == "L2" and region == "V1^3"
    st = fl.make_state([sphere_point([1, 0, 0, 0])], [500.0], curv, N, SIGMA)
    assert fl.classify_region(flow, st)[1] == "far"


def test_region_two_distinct_kplus_points():
    recs = [NORTH_KPLUS, dict(NORTH_KPLUS, label="east", y=[1, 0, 0, 0])]
    flow, curv = setup(recs)
    st = fl.make_state([pole(3), [1, 0, 0, 0]], [500.0, 500.0], curv, N, SIGMA)
    assert fl.classify_region(flow, st)[1] == "V1^1"
    st = fl.make_state([pole(3), exp_map(normal_frame(pole(3)), [0.05, 0, 0])], [500.0, 500.0],
                       curv, N, SIGMA)
    assert fl.classify_region(flow, st)[1] == "V1^4"


def test_hysteresis_keeps_group():
    flow, curv = setup([NORTH_KPLUS], fl.FlowConfig(M1=10.0))
    f = normal_frame(pole(3))
    st = fl.make_state([exp_map(f, [10.5 / 500, 0, 0])], [500.0], curv, N, SIGMA)
    fresh = flow.tag(st)
    assert fresh[0].group == "L2"
    prev = [fl.BubbleTag(0, "L1", False, None)]
    assert flow.tag(st, prev)[0].group == "L1"


def test_config_validation():
    with pytest.raises(CertError):
        fl.FlowConfig(epsilon=2.0).validate()
    with pytest.raises(CertError):
        fl.FlowConfig(dt_min=1.0, dt_init=0.1).validate()
    with pytest.raises(CertError):
        fl.FlowConfig(M1=-1).validate()


# -- runs ---------------------------------------------------------------------

def run(records, points, lambdas, **cfg):
    flow, curv = setup(records, fl.FlowConfig(**cfg))
    st = fl.make_state(points, lambdas, curv, N, SIGMA)
    return fl.run_to_infinity(flow, st, keep_trajectory=True), flow


def test_single_bubble_blows_up_and_follows_ode():
    out, flow = run([NORTH_KPLUS], [pole(3)], [200.0])
    assert out.outcome is fl.Outcome.BLOW_UP
    assert out.limit_tuple == ["north"]
    assert out.limit_weights == [pytest.approx(2.0 ** -1.0)]
    lam = np.array([r.lambdas[0] for r in out.trajectory])
    t = np.array([r.time for r in out.trajectory])
    assert np.all(np.diff(lam) > 0)
    beta = 1.5
    # fit c in lambda^beta = lambda0^beta + c beta t, then compare lambda(t)
    c = np.linalg.lstsq((beta * t)[:, None], lam ** beta - lam[0] ** beta, rcond=None)[0][0]
    model = (lam[0] ** beta + c * beta * t) ** (1 / beta)
    assert np.max(np.abs(model / lam - 1)) < 0.05
    alpha = 2.0 ** (-(N - 2 * SIGMA) / (4 * SIGMA))
    c_exact = -2 * (N - 2 * SIGMA) / (2 * N) * beta * CONSTS.c3_at(beta) * alpha / 2.0 * (-3)
    assert c == pytest.approx(c_exact, rel=0.05)


def test_positive_bsum_never_blows_up():
    out, _ = run([NORTH_KMINUS], [pole(3)], [200.0])
    assert out.outcome is fl.Outcome.EXIT
    assert "floor" in out.reason
    assert max(r.lambdas[0] for r in out.trajectory) <= 200.0


def test_two_bubbles_same_point_not_both_blow_up():
    f = normal_frame(pole(3))
    for lam2, offset in [(5000.0, 0.02), (300.0, 0.05), (200.0, 0.1)]:
        out, _ = run([NORTH_KPLUS], [pole(3), exp_map(f, [offset, 0, 0])], [200.0, lam2])
        assert len(out.blown) < 2


def test_pair_in_critical_stratum_blows_up_to_tuple():
    out, flow = run(PAIR, [[0.001, 0, 0, 1], [0, 0.001, 0, -1]], [200.0, 200.0])
    assert out.outcome is fl.Outcome.BLOW_UP
    assert out.limit_tuple == ["north", "south"]
    for a, y in zip(out.state.points, [pole(3), pole(3, south=True)]):
        assert geodesic_distance(a, y) < 1e-3


def test_descent_and_pp_along_runs():
    f = normal_frame(pole(3))
    cases = [([NORTH_KPLUS], [pole(3)], [200.0]),
             (PAIR, [[0.001, 0, 0, 1], [0, 0.001, 0, -1]], [200.0, 300.0]),
             ([NORTH_KPLUS], [pole(3), exp_map(f, [0.05, 0, 0])], [200.0, 300.0])]
    for recs, pts, lams in cases:
        out, _ = run(recs, pts, lams)
        steps = out.trajectory[:-1]
        assert steps
        assert all(r.pairing <= 0 for r in steps)
        assert all(r.pp_ok for r in steps)
        assert out.descent_constant is None or out.descent_constant > 0


def test_pp_inequality_direct(rng):
    for _ in range(200):
        st = random_pair_state(rng, 3)
        eps, lam_deps, _ = fl._kernels.pair_interactions(st.lambdas, st.points, 3, 0.5)
        if eps[0, 1] < 0.01:
            assert not fl.pp_violations(st, eps, lam_deps, 3, 0.5)


def test_initial_state_must_be_in_neighbourhood():
    with pytest.raises(CertError) as err:
        run([NORTH_KPLUS], [pole(3)], [50.0])
    assert err.value.code == "bad-initial"
    with pytest.raises(CertError):
        run([NORTH_KPLUS], [pole(3), pole(3)], [200.0, 200.0])


def test_timeout():
    out, _ = run([NORTH_KPLUS], [pole(3)], [200.0], max_steps=5)
    assert out.outcome is fl.Outcome.TIMEOUT and out.steps == 5


def test_trajectory_log(tmp_path):
    flow, curv = setup(PAIR)
    st = fl.make_state([[0.001, 0, 0, 1], [0, 0.001, 0, -1]], [200.0, 200.0], curv, N, SIGMA)
    path = tmp_path / "traj.csv"
    out = fl.run_to_infinity(flow, st, log_path=str(path))
    rows = list(csv.reader(open(path)))
    assert rows[0][:5] == ["time", "dt", "region", "pairing", "vbar_estimate"]
    assert "lambda_1" in rows[0] and "a_1_3" in rows[0] and "tag_0" in rows[0]
    assert len(rows) == out.steps + 1
    assert float(rows[-1][0]) > float(rows[1][0])


def test_unwritable_log():
    flow, curv = setup([NORTH_KPLUS])
    st = fl.make_state([pole(3)], [200.0], curv, N, SIGMA)
    with pytest.raises(CertError) as err:
        fl.run_to_infinity(flow, st, log_path="/nonexistent-dir/x.csv")
    assert err.value.code == "io-error"
