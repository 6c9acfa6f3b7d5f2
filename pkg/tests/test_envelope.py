"""Tests for McCormick envelopes, repair, branching, and bisection."""

import numpy as np
import pytest

from isacbeam.envelope import (
    Box,
    FeasibleSolution,
    bisect,
    branch_index,
    envelope_constraints,
    interference,
    interference_caps,
    repair,
    root_box,
)
from isacbeam.model import BeamformingSolution, ProblemInstance, gen_scenario1, objective


class FakeRelax:
    def __init__(self, R_X, W, Gamma):
        self.R_X = R_X
        self.W = W
        self.Gamma = np.asarray(Gamma, float)


def feasible_range(cons, gamma, i):
    """Oracle: intersect the four half-planes to an interval for a."""
    lo, hi = -np.inf, np.inf
    for c in cons:
        # c_a*a + r >= 0 with r = c_gamma*gamma + c_i*i + const
        r = c.c_gamma * gamma + c.c_i * i + c.const
        if c.c_a > 0:
            lo = max(lo, -r / c.c_a)
        else:
            hi = min(hi, -r / c.c_a)
    return lo, hi


def test_envelope_example_unit_box():
    cons = envelope_constraints(0.0, 1.0, 1.0)
    lo, hi = feasible_range(cons, gamma=0.5, i=0.5)
    assert np.isclose(lo, 0.0) and np.isclose(hi, 0.5)


def test_envelope_degenerate_forces_bilinear():
    c = 0.7
    cons = envelope_constraints(c, c, 2.0)
    for i in (0.0, 0.3, 2.0):
        lo, hi = feasible_range(cons, gamma=c, i=i)
        assert np.isclose(lo, c * i, atol=1e-14)
        assert np.isclose(hi, c * i, atol=1e-14)


def test_envelope_soundness_grid():
    # bilinear point a = Gamma*I always satisfies all four inequalities
    rng = np.random.default_rng(0)
    for _ in range(200):
        l = rng.uniform(0, 5)
        u = l + rng.uniform(0, 5)
        b = rng.uniform(0, 10)
        cons = envelope_constraints(l, u, b)
        for g in np.linspace(l, u, 7):
            for i in np.linspace(0, b, 7):
                a = g * i
                for c in cons:
                    assert c.residual(a, g, i) >= -1e-12 * max(1.0, u * b)


def test_envelope_tightness_at_corners():
    l, u, b = 0.5, 2.0, 3.0
    cons = envelope_constraints(l, u, b)
    for g, i in [(l, 1.0), (u, 1.7), (0.9, 0.0), (1.3, b)]:
        lo, hi = feasible_range(cons, g, i)
        # at an edge of the rectangle the envelope pinches to the bilinear value
        assert np.isclose(lo, g * i, atol=1e-12) or np.isclose(hi, g * i, atol=1e-12)


def test_envelope_validation():
    with pytest.raises(ValueError):
        envelope_constraints(2.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        envelope_constraints(0.0, 1.0, -1.0)


def test_box_validation_and_geometry():
    with pytest.raises(ValueError):
        Box(np.array([-0.1]), np.array([1.0]))
    with pytest.raises(ValueError):
        Box(np.array([2.0]), np.array([1.0]))
    b = Box(np.array([0.0, 1.0]), np.array([4.0, 3.0]))
    assert b.volume() == 8.0
    assert b.contains([2.0, 2.0]) and not b.contains([5.0, 2.0])
    with pytest.raises(ValueError):
        b.lo[0] = 1.0  # frozen storage


def test_bisect_examples():
    parent = Box(np.array([0.0, 1.0]), np.array([4.0, 3.0]))
    c1, c2 = bisect(parent, 0)
    assert np.allclose(c1.lo, [0, 1]) and np.allclose(c1.hi, [2, 3])
    assert np.allclose(c2.lo, [2, 1]) and np.allclose(c2.hi, [4, 3])
    assert np.isclose(c1.volume() + c2.volume(), parent.volume())
    # degenerate interval splits into two identical copies
    d = Box(np.array([1.0]), np.array([1.0]))
    d1, d2 = bisect(d, 0)
    assert np.allclose(d1.lo, d2.lo) and np.allclose(d1.hi, d2.hi)


def test_bisect_volume_random():
    rng = np.random.default_rng(3)
    for _ in range(50):
        lo = rng.uniform(0, 2, size=3)
        hi = lo + rng.uniform(0.1, 2, size=3)
        box = Box(lo, hi)
        k = rng.integers(0, 3)
        c1, c2 = bisect(box, int(k))
        assert np.isclose(c1.volume() + c2.volume(), box.volume(), rtol=1e-12)
        assert np.allclose(np.minimum(c1.lo, c2.lo), box.lo)
        assert np.allclose(np.maximum(c1.hi, c2.hi), box.hi)


def test_root_box_and_caps():
    inst = gen_scenario1(K=3, Nt=6, seed=9)
    box = root_box(inst)
    caps = interference_caps(inst)
    assert np.allclose(box.lo, 0.0)
    for k in range(3):
        g = inst.channel_gain(k)
        assert np.isclose(box.hi[k], inst.P_T * g / inst.sigmaC2)
        assert np.isclose(caps[k], inst.P_T * g)


def make_relax_point(inst, p_signal, p_rest, gammas):
    K, Nt = inst.K, inst.Nt
    W = np.zeros((K, Nt, Nt), dtype=complex)
    for k in range(K):
        h = inst.channels[k]
        W[k] = p_signal * np.outer(h, h.conj()) / np.vdot(h, h).real
    R = W.sum(axis=0) + p_rest * np.eye(Nt)
    return FakeRelax(R, W, gammas)


def test_interference_oracle():
    inst = gen_scenario1(K=2, Nt=4, seed=1)
    pt = make_relax_point(inst, 1.0, 0.5, [0.1, 0.1])
    for k in range(2):
        Q = inst.gram(k)
        expect = np.trace(Q @ (pt.R_X - pt.W[k])).real
        assert np.isclose(interference(inst, pt.R_X, pt.W[k], k), expect, rtol=1e-12)


def test_repair_formula_example():
    # Gamma=1, lo=0.5, sigma^2=1, I=1 -> Gamma_hat = 0.75
    s2, gamma, lo, I = 1.0, 1.0, 0.5, 1.0
    ghat = (gamma * s2 + lo * I) / (s2 + I)
    assert ghat == 0.75


def test_repair_properties():
    inst = gen_scenario1(K=2, Nt=4, seed=4)
    box = Box(np.array([0.05, 0.1]), np.array([10.0, 10.0]))
    pt = make_relax_point(inst, 3.0, 1.0, [2.0, 1.5])
    rep = repair(pt, box, inst)
    s2 = inst.sigmaC2
    for k in range(2):
        I = interference(inst, pt.R_X, pt.W[k], k)
        expect = (pt.Gamma[k] * s2 + box.lo[k] * I) / (s2 + I)
        assert np.isclose(rep.Gamma_hat[k], expect, rtol=1e-12)
        assert box.lo[k] - 1e-12 <= rep.Gamma_hat[k] <= pt.Gamma[k] + 1e-12
        assert np.isclose(rep.a[k], rep.Gamma_hat[k] * I, rtol=1e-12)
    # matrices copied, not aliased
    assert rep.R_X is not pt.R_X
    assert np.array_equal(rep.R_X, pt.R_X)
    # value prices the repaired SINRs
    expect_val = objective(inst, BeamformingSolution(
        R_X=pt.R_X, W=pt.W, Gamma=rep.Gamma_hat))
    assert np.isclose(rep.value, expect_val, rtol=1e-12)


def test_repair_zero_interference_keeps_gamma():
    # single user, W = R_X: interference exactly 0 -> Gamma_hat = Gamma
    inst = gen_scenario1(K=1, Nt=3, seed=6)
    h = inst.channels[0]
    W = np.outer(h, h.conj())[None, :, :] * (1.0 + 0j)
    R = W[0] + 1e-9 * np.eye(3)  # PD for the trace-inverse term
    pt = FakeRelax(R, W, [0.8])
    box = Box(np.array([0.0]), np.array([2.0]))
    rep = repair(pt, box, inst)
    assert abs(rep.Gamma_hat[0] - 0.8) < 1e-6


def test_repair_feasibility_structural():
    # whenever the relaxation constraint tr(QW) >= Gamma*s2 + lo*I holds,
    # the repaired SINR is achieved: tr(QW) >= Gamma_hat*(s2 + I)
    rng = np.random.default_rng(12)
    inst = gen_scenario1(K=2, Nt=4, seed=12)
    box = Box(np.array([0.1, 0.0]), np.array([5.0, 5.0]))
    s2 = inst.sigmaC2
    for _ in range(25):
        B = rng.standard_normal((4, 6)) + 1j * rng.standard_normal((4, 6))
        W = np.stack([B @ B.conj().T * 0.1 for _ in range(2)])
        W[1] = 0.1 * np.eye(4)
        R = W.sum(axis=0) + np.diag(rng.uniform(0.1, 1.0, 4)).astype(complex)
        gamma = []
        for k in range(2):
            Q = inst.gram(k)
            sig = np.trace(Q @ W[k]).real
            I = np.trace(Q @ (R - W[k])).real
            # choose the largest Gamma the relaxation constraint allows
            g = (sig - box.lo[k] * I) / s2
            gamma.append(min(max(g, box.lo[k]), box.hi[k]))
        pt = FakeRelax(R, W, gamma)
        rep = repair(pt, box, inst)
        for k in range(2):
            Q = inst.gram(k)
            sig = np.trace(Q @ W[k]).real
            I = np.trace(Q @ (R - W[k])).real
            assert sig >= rep.Gamma_hat[k] * (s2 + I) - 1e-9 * max(1.0, sig)


def test_branch_index_examples():
    box = Box(np.zeros(3), np.ones(3) * 4)
    rep = FeasibleSolution(R_X=None, W=None, Gamma=np.array([0.1, 0.5, 0.2]),
                           Gamma_hat=np.zeros(3), a=np.zeros(3), value=0.0,
                           box=box)
    pt = FakeRelax(None, None, [0.1, 0.5, 0.2])
    assert branch_index(pt, rep) == 1
    # all gaps equal -> smallest index
    pt2 = FakeRelax(None, None, [0.3, 0.3, 0.3])
    rep2 = FeasibleSolution(R_X=None, W=None, Gamma=np.array([0.3] * 3),
                            Gamma_hat=np.zeros(3), a=np.zeros(3), value=0.0,
                            box=box)
    assert branch_index(pt2, rep2) == 0
    # hand-computed ratios with nonzero Gamma_hat
    gh = np.array([0.5, 1.0, 0.0])
    g = np.array([1.0, 2.0, 0.4])
    ratios = (g - gh) / (1.0 + gh)  # [1/3, 1/2, 2/5]
    rep3 = FeasibleSolution(R_X=None, W=None, Gamma=g, Gamma_hat=gh,
                            a=np.zeros(3), value=0.0, box=box)
    assert branch_index(FakeRelax(None, None, g), rep3) == int(np.argmax(ratios))


def test_branch_index_skips_degenerate_coordinates():
    box = Box(np.array([1.0, 0.0]), np.array([1.0, 4.0]))  # k=0 width zero
    g = np.array([2.0, 0.5])
    gh = np.array([0.0, 0.4])  # biggest gap is at k=0, but it is unbranchable
    rep = FeasibleSolution(R_X=None, W=None, Gamma=g, Gamma_hat=gh,
                           a=np.zeros(2), value=0.0, box=box)
    assert branch_index(FakeRelax(None, None, g), rep) == 1
    # fully degenerate box -> None
    box0 = Box(np.array([1.0, 2.0]), np.array([1.0, 2.0]))
    rep0 = FeasibleSolution(R_X=None, W=None, Gamma=g, Gamma_hat=gh,
                            a=np.zeros(2), value=0.0, box=box0)
    assert branch_index(FakeRelax(None, None, g), rep0) is None


def test_branch_index_zero_gap_falls_back_to_widest():
    box = Box(np.array([0.0, 0.0]), np.array([1.0, 3.0]))
    g = np.array([0.5, 0.5])
    rep = FeasibleSolution(R_X=None, W=None, Gamma=g, Gamma_hat=g.copy(),
                           a=np.zeros(2), value=0.0, box=box)
    assert branch_index(FakeRelax(None, None, g), rep) == 1  # widest
