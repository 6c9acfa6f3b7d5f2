"""Shared fixtures: the K=3 reference instance and its epsilon sweep.

The epsilon=1e-3 run takes around a minute on one core, so the sweep is
session-scoped and shared between the branch-and-bound tests and the
acceptance suite.
"""

import pytest

from isacbeam.bnb import solve_bnb
from isacbeam.model import gen_scenario1

SWEEP_EPS = (1e-1, 1e-2, 1e-3)


@pytest.fixture(scope="session")
def k3_instance():
    return gen_scenario1(K=3, Nt=6, P_T=1.0, rho=1.0, seed=7)


@pytest.fixture(scope="session")
def k3_sweep(k3_instance):
    """Map epsilon -> BnbResult for the shared K=3 instance.

    Nodes are kept so audits can replay every repair the searches produced.
    """
    return {eps: solve_bnb(k3_instance, eps=eps, keep_nodes=True)
            for eps in SWEEP_EPS}
