import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exprgen import random_flat_at_origin
from rescert.errors import PreconditionError
from rescert.expr import Box, eval_dual2_points, eval_interval_boxes, eval_points, parse
from rescert.net import init_net, to_expr
from rescert.residual import build_lyap_residual
from rescert.system import QuadraticLowerBound, load_system
from rescert.trainer import make_collocation, train_hjb, train_lyapunov
from rescert.verifier import (BUDGET_EXHAUSTED, CERTIFIED, REFUTED, BnbConfig, Certificate,
                              FrobeniusGoal, ResidualVerifier, VerifyTask, bnb_prove,
                              boundary_min_sampled, certify_quadratic_bound,
                              max_separated_level, min_certified_epsilon, sampled_ratio_sup,
                              verify_local_pd, verify_one_sided, verify_quadratic_bound,
                              verify_relative_residual, verify_sublevel_separation)
from systems import LINEAR2D, LQR_DI, SCALAR

NAMES = ("x1", "x2")
SQUARE = Box((-1.0, -1.0), (1.0, 1.0))
SMALL = BnbConfig(max_boxes=200_000)


def _dense(box: Box, count: int, seed: int = 0) -> np.ndarray:
    lo, hi = box.as_arrays()
    return np.random.default_rng(seed).uniform(lo[0], hi[0], (count, box.n))


def _assert_genuine(goal, witness):
    """The witness box really violates ``goal <= 0``: a sampled point does, or
    the interval lower bound over the box is positive."""
    lo, hi = witness.box.as_arrays()
    (iv,) = eval_interval_boxes([goal], lo, hi)
    assert iv.lo[0] > 0 or np.max(eval_points([goal], _dense(witness.box, 100))[0]) > 0


@pytest.fixture(scope="module")
def scalar_net():
    s = load_system(SCALAR)
    net, _ = train_lyapunov(s, init_net(1, 50, 0), make_collocation(s.domain, 1024))
    return s, net


@pytest.fixture(scope="module")
def qb1():
    qb, cert = certify_quadratic_bound(parse("x1^2", ("x1",)), 1.0, 0.1, 1)
    assert cert.certified
    return qb


@pytest.fixture(scope="module")
def lqr_net():
    s = load_system(LQR_DI)
    net, _ = train_hjb(s, init_net(2, 60, 0), make_collocation(s.domain, 1024))
    return s, net


class TestBnb:
    def test_certified(self):
        cert = bnb_prove(VerifyTask(parse("x1^2 + x2^2 - 5", NAMES), SQUARE), SMALL)
        assert cert.status == CERTIFIED and cert.witness is None

    def test_refuted_with_witness(self):
        goal = parse("x1^2 - 0.5", NAMES)
        cert = bnb_prove(VerifyTask(goal, SQUARE), SMALL)
        assert cert.status == REFUTED
        assert np.all(np.abs(np.array(cert.witness.box.lo[:1])) > 0.7)
        _assert_genuine(goal, cert.witness)

    def test_dependency(self):
        cert = bnb_prove(VerifyTask(parse("-(x1 - x1)*1e6", NAMES), SQUARE), SMALL)
        assert cert.status == CERTIFIED

    def test_budget_distinct_from_refutation(self):
        # tight but true: needs more boxes than the budget allows
        goal = parse("sin(x1)^2 + cos(x1)^2 - 1 - 1e-12", NAMES)
        cert = bnb_prove(VerifyTask(goal, SQUARE), BnbConfig(max_boxes=50))
        assert cert.status == BUDGET_EXHAUSTED
        assert cert.witness is None

    def test_excluded_ball(self):
        goal = parse("0.01 - x1^2 - x2^2", NAMES)
        assert bnb_prove(VerifyTask(goal, SQUARE), SMALL).status == REFUTED
        assert bnb_prove(VerifyTask(goal, SQUARE, excluded_ball_radius=0.2), SMALL).certified

    def test_workers_deterministic(self):
        goal = parse("sin(3*x1)*x2 + 0.2*x1^2 - 1.3", NAMES)
        one = bnb_prove(VerifyTask(goal, SQUARE), SMALL)
        many = bnb_prove(VerifyTask(goal, SQUARE),
                         BnbConfig(max_boxes=200_000, workers=3, chunk_size=64))
        few = bnb_prove(VerifyTask(goal, SQUARE), BnbConfig(max_boxes=200_000, chunk_size=64))
        assert one.status == many.status == few.status == CERTIFIED
        assert (many.boxes_processed, many.max_depth) == (few.boxes_processed, few.max_depth)

    def test_certificate_round_trip(self):
        cert = bnb_prove(VerifyTask(parse("x1^2 - 0.5", NAMES), SQUARE), SMALL)
        back = Certificate.from_dict(cert.to_dict())
        assert back.to_dict() == cert.to_dict()

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 100_000))
    def test_soundness_by_sampling(self, seed):
        rng = np.random.default_rng(seed)
        a, b, c = (float(v) for v in rng.uniform(-2, 2, 3))
        goal = parse(f"{a!r}*sin(x1*x2) + {b!r}*tanh(x1 - x2) + {c!r}*x1^2 - 2.5", NAMES)
        cert = bnb_prove(VerifyTask(goal, SQUARE), BnbConfig(max_boxes=20_000))
        (v,) = eval_points([goal], _dense(SQUARE, 100_000, seed))
        if cert.status == CERTIFIED:
            assert np.max(v) <= 1e-12
        elif cert.status == REFUTED:
            _assert_genuine(goal, cert.witness)


class TestQuadraticBound:
    def test_examples(self):
        w = parse("x1^2 + x2^2", NAMES)
        assert verify_quadratic_bound(w, 1.0, 0.1, n=2).status == CERTIFIED
        assert verify_quadratic_bound(w, 0.5, 0.1, n=2).status == CERTIFIED
        cert = verify_quadratic_bound(w, 1.5, 0.1, n=2)
        assert cert.status == REFUTED and cert.witness is not None

    def test_quartic_direction(self):
        w = parse("x1^2 + x2^4", NAMES)
        cert = verify_quadratic_bound(w, 0.9, 0.1, n=2)
        assert cert.status == REFUTED
        x = np.array([0.5 * (cert.witness.box.lo[j] + cert.witness.box.hi[j]) for j in range(2)])
        (v,) = eval_points([w], x[None])
        assert v[0] < 0.9 * float(x @ x)

    def test_uncertified_bound_rejected(self, scalar_net):
        s, net = scalar_net
        with pytest.raises(PreconditionError):
            verify_relative_residual(build_lyap_residual(s, net), 0.1,
                                     QuadraticLowerBound(1.0, 0.1), s.domain)


class TestResidual:
    def test_scalar_certified(self, scalar_net, qb1):
        s, net = scalar_net
        cert = verify_relative_residual(build_lyap_residual(s, net), 1e-3, qb1, s.domain)
        assert cert.certified
        assert [p.mode for p in cert.parts] == ["hessian_inner", "outer_two_sided"]

    def test_zero_net_refuted(self, qb1):
        s = load_system(SCALAR)
        b = build_lyap_residual(s, init_net(1, 10, 0))
        for eps in (0.0, 0.5, 0.9):
            two = verify_relative_residual(b, eps, qb1, s.domain, SMALL)
            one = verify_one_sided(b, eps, qb1, s.domain, SMALL)
            assert two.status == REFUTED and one.status == REFUTED
            # the inner curvature check fails first: |r''| = 2 exceeds 2*eps*alpha
            assert two.parts[-1].mode == "hessian_inner"
            lo, hi = two.witness.box.as_arrays()
            (d,) = eval_dual2_points([b.r], 0.5 * (lo + hi))
            assert abs(d.h[0, 0, 0]) > 2 * eps * qb1.alpha

    def test_two_sided_implies_one_sided(self, scalar_net, qb1):
        s, net = scalar_net
        b = build_lyap_residual(s, net)
        for eps in (1e-4, 1e-3):
            if verify_relative_residual(b, eps, qb1, s.domain).certified:
                assert verify_one_sided(b, eps, qb1, s.domain).certified

    def test_scaled_quadratic_one_sided_at_zero(self):
        s = load_system(LINEAR2D)
        # twice the exact value x'Px, P = [[1.25, 0.25], [0.25, 0.25]]: r = -|x|^2
        V = parse("2*(1.25*x1^2 + 0.5*x1*x2 + 0.25*x2^2)", NAMES)
        b = build_lyap_residual(s, V)
        X = _dense(s.domain, 1000)
        r, w = eval_points([b.r, b.weight], X)
        assert np.allclose(r, -w, atol=1e-14)
        qb, _ = certify_quadratic_bound(s.omega, 1.0, 0.1, 2)
        assert verify_one_sided(b, 0.0, qb, s.domain, SMALL).certified
        assert verify_relative_residual(b, 0.5, qb, s.domain, SMALL).status == REFUTED

    def test_min_epsilon_scalar(self, scalar_net, qb1):
        s, net = scalar_net
        b = build_lyap_residual(s, net)
        eps, cert = min_certified_epsilon(b, qb1, s.domain)
        sup = sampled_ratio_sup(b, s.domain, per_dim=2001)
        assert cert.certified and cert.epsilon == eps
        assert sup <= eps <= 2 * sup
        for larger in (1.01 * eps, 2 * eps):
            assert verify_relative_residual(b, larger, qb1, s.domain).certified
        probes = cert.details["probes"]
        assert probes[0][0] == 0.5 and all(st_ in (CERTIFIED, REFUTED) for _, st_ in probes)

    def test_min_epsilon_hi_fails(self, qb1):
        s = load_system(SCALAR)
        eps, cert = min_certified_epsilon(build_lyap_residual(s, init_net(1, 5, 0)), qb1,
                                          s.domain, SMALL, eps_hi=0.5)
        assert eps is None and cert.status == REFUTED

    def test_warm_start_same_verdicts(self, scalar_net, qb1):
        s, net = scalar_net
        b = build_lyap_residual(s, net)
        ver = ResidualVerifier(b, qb1, s.domain)
        eps_list = [1e-2, 1e-3, 1e-5, 2e-5]
        warm = [ver.check(e).status for e in eps_list]
        cold = [verify_relative_residual(b, e, qb1, s.domain).status for e in eps_list]
        assert warm == cold

    def test_soundness_by_sampling(self, scalar_net, qb1):
        s, net = scalar_net
        b = build_lyap_residual(s, net)
        eps, cert = min_certified_epsilon(b, qb1, s.domain)
        X = np.linspace(-0.5, 0.5, 1_000_001)[:, None]
        r, w = eval_points([b.r, b.weight], X)
        assert np.all(np.abs(r) <= eps * w + 1e-12)

    def test_not_flat_rejected(self, qb1):
        s = load_system(SCALAR)
        b = build_lyap_residual(s, parse("x1^2/2 + 0.01*x1", ("x1",)))
        with pytest.raises(PreconditionError):
            verify_relative_residual(b, 0.1, qb1, s.domain)


class TestSublevelAndPd:
    def test_separation(self, lqr_net):
        s, net = lqr_net
        m = boundary_min_sampled(net, s.domain)
        assert verify_sublevel_separation(net, 1e-3 * m, s.domain).certified
        cert = verify_sublevel_separation(net, 1.5 * m, s.domain)
        assert cert.status == REFUTED
        _assert_genuine(parse(f"{1.5 * m!r}", NAMES) - to_expr(net, fused=True), cert.witness)

    def test_max_separated_level(self, lqr_net):
        s, net = lqr_net
        c, cert = max_separated_level(net, s.domain)
        assert cert.certified and 0 < c <= boundary_min_sampled(net, s.domain)

    def test_local_pd_quadratic(self):
        P = np.array([[2.0, 0.5], [0.5, 1.0]])
        V = parse("2*x1^2 + x1*x2 + x2^2", NAMES)
        cert = verify_local_pd(V, 0.5, n=2)
        assert cert.certified
        assert cert.details["beta"] == pytest.approx(np.linalg.eigvalsh(P)[0] / 2)

    def test_local_pd_saddle(self):
        V = parse("x1^2 - x2^2", NAMES)
        cert = verify_local_pd(V, 0.1, n=2)
        assert cert.status == REFUTED
        lo, hi = cert.witness.box.as_arrays()
        (v,) = eval_points([V], 0.5 * (lo + hi))
        assert v[0] < 0

    def test_local_pd_trained(self, lqr_net):
        _, net = lqr_net
        assert verify_local_pd(net, 0.1).certified


class TestHessianToQuadratic:
    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 1_000_000))
    def test_hessian_bound_implies_quadratic_bound(self, seed):
        assert_prop1_instance(seed, samples=20_000)


def assert_prop1_instance(seed: int, samples: int) -> bool:
    """Certify a Frobenius Hessian bound ``M`` for a random flat-at-origin
    expression on a random box around the origin, then check
    ``|h(x)| <= M/2 |x|^2`` by sampling.  Returns whether a bound was certified."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    h = random_flat_at_origin(rng, n)
    lo = -rng.uniform(0.05, 0.6, n)
    hi = rng.uniform(0.05, 0.6, n)
    box = Box(tuple(lo), tuple(hi))
    X = rng.uniform(lo, hi, (samples, n))
    (d,) = eval_dual2_points([h], X[:2000])
    M = 1.5 * float(np.max(np.sqrt(np.sum(d.h ** 2, axis=(1, 2))))) + 1e-6
    goal = FrobeniusGoal(h, n)
    cert = None
    for _ in range(6):
        goal.bound = M
        cert = bnb_prove(VerifyTask(goal, box), BnbConfig(max_boxes=20_000))
        if cert.certified:
            break
        M *= 2
    if not cert.certified:
        return False
    (v,) = eval_points([h], X)
    r2 = np.sum(X * X, axis=1)
    assert np.all(np.abs(v) <= 0.5 * M * r2 * (1 + 1e-12) + 1e-300)
    return True
