import numpy as np
import pytest

from rwsim.environment import Environment, EnvironmentLaw, ValueDist, sample_environment
from rwsim.lattice import Torus


@pytest.fixture
def torus2():
    return Torus(2, 6)


def random_conductance_env(torus, seed, low=0.2, high=2.0, speed_mode="variable"):
    law = EnvironmentLaw.elliptic_iid(ValueDist("uniform", (low, high)))
    env = sample_environment(law, torus, seed)
    if speed_mode != "variable":
        env = Environment.from_conductances(torus, env.bond_weights, speed_mode)
    return env


def constant_env(torus, c=1.0):
    return Environment.from_conductances(torus, np.full(torus.n_bonds, c), "variable")
