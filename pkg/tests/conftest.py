"""Shared test fixtures and independent oracles."""

import numpy as np
import pytest

from neuroswarm import hmm


def sample_hmm(model: hmm.GaussianHmm, length: int, rng: np.random.Generator):
    """Draw (observations, states) from a known model; generator oracle."""
    states = np.empty(length, dtype=int)
    obs = np.empty((length, model.l))
    states[0] = rng.choice(model.m, p=model.pi)
    for t in range(1, length):
        states[t] = rng.choice(model.m, p=model.trans[states[t - 1]])
    for t in range(length):
        obs[t] = rng.multivariate_normal(model.means[states[t]],
                                         model.covs[states[t]])
    return obs, states


def brute_force_posterior(model: hmm.GaussianHmm, observations):
    """Filtering distribution at the final step by explicit enumeration of
    every state path; densities via scipy, independent of the package's
    forward recursion."""
    from scipy.stats import multivariate_normal

    obs = np.asarray(observations, dtype=float)
    T = obs.shape[0]
    dens = np.column_stack([
        multivariate_normal.pdf(obs, mean=model.means[i], cov=model.covs[i])
        for i in range(model.m)
    ]).reshape(T, model.m)
    paths = np.array(np.meshgrid(*([range(model.m)] * T),
                                 indexing="ij")).reshape(T, -1).T
    joint = model.pi[paths[:, 0]] * dens[0, paths[:, 0]]
    for t in range(1, T):
        joint = joint * model.trans[paths[:, t - 1], paths[:, t]]
        joint = joint * dens[t, paths[:, t]]
    totals = np.zeros(model.m)
    np.add.at(totals, paths[:, -1], joint)
    return totals / totals.sum()


def random_model(rng: np.random.Generator, m: int = 2, l: int = 3,
                 assignment: bool = True) -> hmm.GaussianHmm:
    pi = rng.dirichlet(np.ones(m))
    trans = rng.dirichlet(np.ones(m), size=m)
    means = rng.random((m, l))
    covs = np.empty((m, l, l))
    for i in range(m):
        q = rng.normal(size=(l, l)) * 0.1
        covs[i] = q @ q.T + 0.01 * np.eye(l)
    model = hmm.GaussianHmm(pi, trans, means, covs)
    if assignment:
        model.thought_assignment = {i: hmm.THOUGHT_LABELS[i] for i in range(m)}
    model.validate()
    return model


def two_state_sticky(means=((0.2, 0.2, 0.2), (0.8, 0.8, 0.8)),
                     stay: float = 0.98, var: float = 0.01) -> hmm.GaussianHmm:
    """The separated-means model used as a generator oracle in EM tests."""
    m = len(means)
    model = hmm.GaussianHmm(
        pi=np.full(m, 1.0 / m),
        trans=np.full((m, m), (1 - stay) / (m - 1)) + np.eye(m) * (stay - (1 - stay) / (m - 1)),
        means=np.asarray(means, dtype=float),
        covs=np.array([np.eye(3) * var for _ in range(m)]),
        thought_assignment={i: hmm.THOUGHT_LABELS[i] for i in range(m)},
    )
    model.validate()
    return model


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
