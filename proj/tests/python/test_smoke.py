import numpy as np
import pytest
from scipy.linalg import null_space

import resaple


def rook_lattice(rows, cols):
    n = rows * cols
    w = np.zeros((n, n))
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < rows and 0 <= cc < cols:
                    w[i, rr * cols + cc] = 1.0
    return w / w.sum(axis=1, keepdims=True)


def oracle_parts(w, x):
    h = null_space(x.T)
    r = h.shape[1]
    wr = h.T @ w @ h
    k = 0.5 * (wr + wr.T)
    a = k - np.trace(k) / r * np.eye(r)
    b = wr.T @ wr + np.trace(wr @ wr) / r * np.eye(r)
    return h, k, a, b


@pytest.fixture
def data():
    rng = np.random.default_rng(7)
    w = rook_lattice(6, 7)
    n = w.shape[0]
    x = np.column_stack([np.ones(n), rng.standard_normal(n)])
    z = rng.standard_normal(n)
    return z, w, x


def test_lattice_weights_match_direct_construction():
    np.testing.assert_array_equal(resaple.lattice_weights(6, 7, "rook"), rook_lattice(6, 7))
    raw = resaple.lattice_weights(3, 3, "queen", standardize=False)
    assert raw[4].sum() == 8.0


def test_resaple_matches_numpy(data):
    z, w, x = data
    h, _, a, b = oracle_parts(w, x)
    e = h.T @ z
    got = resaple.estimate(z, w, x, method="resaple")
    assert got["rho_hat"] == pytest.approx((e @ a @ e) / (e @ b @ e), abs=1e-10)


def test_restricted_information_matches_numpy(data):
    _, w, x = data
    _, k, _, _ = oracle_parts(w, x)
    assert resaple.restricted_information(w, x) == pytest.approx(2 * np.sum(k * k), rel=1e-10)
    ones = np.ones((w.shape[0], 1))
    assert resaple.restricted_information(w) == pytest.approx(resaple.restricted_information(w, ones))


def test_exact_p_agrees_with_monte_carlo(data):
    z, w, x = data
    h, _, a, b = oracle_parts(w, x)
    res = resaple.test(z, w, x, method="exact")
    t = res["statistic"]
    draws = np.random.default_rng(3).standard_normal((200_000, h.shape[1]))
    q = np.einsum("ij,jk,ik->i", draws, a - t * b, draws)
    mc = np.mean(q > 0)
    assert abs(res["p_value"] - mc) < 4 * np.sqrt(mc * (1 - mc) / len(q)) + 1e-3
    assert res["p_greater"] + res["p_less"] == pytest.approx(1.0, abs=1e-8)


def test_permutation_is_seed_deterministic(data):
    z, w, x = data
    a = resaple.test(z, w, x, method="perm", permutations=99, seed=11, threads=1)
    b = resaple.test(z, w, x, method="perm", permutations=99, seed=11, threads=3)
    assert a == b
    assert a["min_attainable_p"] == pytest.approx(0.01)
    with pytest.raises(ValueError):
        resaple.test(z, w, x, method="perm")


def test_scatter_slope_is_the_estimate(data):
    z, w, x = data
    s = resaple.scatter(z, w, x)
    assert s["slope"] == pytest.approx(s["rho_hat"], abs=1e-10)
    assert len(s["c_i"]) == len(z)


def test_local_tests_shapes(data):
    z, w, x = data
    out = resaple.local_tests(z, w, x, permutations=99, seed=5, threads=1)
    assert out["p_value"].shape == (len(z),)
    assert np.all(out["p_adjusted"] >= out["p_value"] - 1e-15)
    assert len(out["significant"]) == len(z)


def test_compare_weights_orders_by_information():
    coords = np.array([[c, r] for r in range(6) for c in range(6)], dtype=float)
    cands = [("knn4", resaple.knn_weights(coords, 4)), ("rook", resaple.lattice_weights(6, 6, "rook"))]
    rows = resaple.compare_weights(cands)
    assert rows[0]["i_r0"] >= rows[1]["i_r0"]
    assert rows[0]["selected"] and not rows[1]["selected"]


def test_generate_and_estimate_recovers_positive_rho():
    w = resaple.lattice_weights(15, 15, "queen")
    x = np.ones((225, 1))
    est = [resaple.estimate(resaple.generate_sem(x, np.array([1.0]), w, 0.6, seed=s), w, x)["rho_hat"]
           for s in range(20)]
    assert np.mean(est) > 0.3


def test_validation_errors_become_value_error(data):
    z, w, x = data
    with pytest.raises(ValueError):
        resaple.estimate(z[:-1], w, x)
    bad = w.copy()
    bad[0] = 0.0
    with pytest.raises(ValueError):
        resaple.estimate(z, bad, x)
    with pytest.raises(ValueError):
        resaple.estimate(z, w, np.column_stack([x, x[:, 1]]))


def test_simulate_returns_csv():
    design = '{"study": "estimation", "lattice_sizes": [5], "p": [1], "rho_grid": [0.0, 0.3], "replicates": 10}'
    csv = resaple.simulate(design, seed=1)
    lines = csv.strip().splitlines()
    assert len(lines) > 1
    assert csv == resaple.simulate(design, seed=1)
