import math

import numpy as np
import pytest

from dcpf import edm, generator
from dcpf.edm import ElementDistribution
from dcpf.gamma_chain import ChainHyper


def test_shapes_and_stored_cells():
    data = generator.generate(7, 9, 2, 4, seed=3)
    assert data.truth_user.state.shape == (7, 2, 4) and data.truth_item.state.shape == (9, 2, 4)
    assert data.tensor.M == 7 and data.tensor.N == 9 and data.tensor.T == 4
    assert np.all(data.tensor.y != 0) and np.all(data.tensor.y > 0)
    assert data.K == 2


def test_deterministic():
    a = generator.generate(6, 5, 2, 3, seed=8)
    b = generator.generate(6, 5, 2, 3, seed=8)
    assert np.array_equal(a.tensor.keys, b.tensor.keys) and np.array_equal(a.tensor.y, b.tensor.y)
    assert np.array_equal(a.truth_user.state, b.truth_user.state)


def test_single_window_is_static_process():
    data = generator.generate(5, 5, 2, 1, seed=0)
    assert data.tensor.T == 1 and data.truth_user.state.shape[2] == 1


def test_argument_and_budget_errors():
    with pytest.raises(ValueError):
        generator.generate(0, 3, 1, 1)
    with pytest.raises(generator.BudgetError, match="reduce"):
        generator.generate(100, 100, 2, 2, seed=0, max_cells=1)


def test_sparsity_grows_as_rates_shrink():
    nnz = []
    for mean in (1.0, 0.1, 0.01, 1e-6):
        hyper = ChainHyper(10.0, 10.0, 1.0, 1.0, init_shape=1.0, init_mean=mean)
        nnz.append(generator.generate(40, 40, 2, 2, hyper, hyper, seed=1).tensor.nnz)
    assert nnz[0] > nnz[1] > nnz[2] >= nnz[3]
    assert nnz[3] == 0


def test_latent_count_mean_matches_rate():
    rng = np.random.default_rng(0)
    lam = 1.7
    eta = rng.poisson(lam, 100_000)
    assert abs(eta.mean() - lam) < 3 * math.sqrt(lam / eta.size)


def test_cell_distribution_matches_compound_law():
    # one cell position replicated by regenerating with different seeds
    element = ElementDistribution("po", 0.0, 1.0)
    hyper = ChainHyper(10.0, 10.0, 1.0, 1.0, init_shape=1.0, init_mean=0.5)
    values, rates = [], []
    for seed in range(400):
        data = generator.generate(4, 4, 1, 1, hyper, hyper, element, seed=seed)
        lam = data.rate_matrix(0)
        dense = np.zeros((4, 4))
        dense[data.tensor.m, data.tensor.n] = data.tensor.y
        values.append(dense.ravel())
        rates.append(lam.ravel())
    values, rates = np.concatenate(values), np.concatenate(rates)
    expected = edm.response_mean(element, rates)
    resid = values - expected
    assert abs(resid.mean()) < 3.5 * resid.std() / math.sqrt(resid.size)


def test_oracle_loglik_zero_cell_and_local_optimality():
    data = generator.generate(30, 30, 2, 2, seed=5)
    cells = data.tensor
    empty = cells.select(np.zeros(cells.nnz, dtype=bool))
    total = generator.oracle_loglik(data, empty, "full", windows=[0]) * 900
    assert total == pytest.approx(-data.rate_matrix(0).sum(), rel=1e-12)

    # a component is doubled for every entity of one side at one window
    base = generator.oracle_loglik(data, cells, "full")
    rng = np.random.default_rng(0)
    for _ in range(100):
        side = data.truth_user if rng.random() < 0.5 else data.truth_item
        k = rng.integers(side.state.shape[1])
        t = rng.integers(side.state.shape[2])
        old = side.state[:, k, t].copy()
        side.state[:, k, t] *= 2.0
        perturbed = generator.oracle_loglik(data, cells, "full")
        side.state[:, k, t] = old
        assert perturbed <= base


def test_truth_file_round_trip(tmp_path):
    data = generator.generate(4, 3, 2, 3, seed=2)
    path = tmp_path / "x.truth"
    generator.write_truth(data, path)
    users, items, element = generator.read_truth(path)
    assert np.array_equal(users.state, data.truth_user.state)
    assert np.array_equal(items.aux, data.truth_item.aux)
    assert np.array_equal(users.init_rate, data.truth_user.init_rate)
    assert element == data.element
    assert path.read_text().startswith("DCPF-TRUTH v1\n4 3 2 3\n")
