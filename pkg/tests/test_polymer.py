import math

import numpy as np
import pytest

from polymerlab.errors import InvalidParameterError, NumericalOverflowError
from polymerlab.functionals import pair_functional
from polymerlab.noise import NoiseBox
from polymerlab.polymer import (Estimate, horizon_weights, mean_exp, noise_variance, partition_mc,
                                partition_mc_coupled, partition_replicas, replica_box, replica_stream,
                                restricted_partition_mc, sample_paths)


def ball_survival(t, rho, terms=200):
    """P(sup_{s<=t} |B_s| <= rho) for 3-d Brownian motion from the centre (eigenfunction series)."""
    n = np.arange(1, terms + 1)
    return float(2 * np.sum((-1.0) ** (n + 1) * np.exp(-(n * math.pi / rho) ** 2 * t / 2)))


def test_bridge_paths_pinned():
    b = sample_paths(np.zeros(3), 2.0, 0.0625, 50, "bridge", rng=1, endpoint=np.zeros(3))
    assert np.all(b.trajectories[:, -1] == 0.0)
    assert np.all(b.trajectories[:, 0] == 0.0)
    b = sample_paths(np.zeros(3), 1.0, 0.0625, 10, "bridge", rng=1, endpoint=(1.0, 2.0, 3.0))
    assert np.all(b.trajectories[:, -1] == np.array([1.0, 2.0, 3.0]))


def test_free_path_scaling():
    n, T = 100000, 1.0
    b = sample_paths(np.zeros(3), T, 0.25, n, rng=2)
    end = b.trajectories[:, -1, 0]
    assert abs(end.var() - T) < 3 * T * math.sqrt(2 / n)
    inc = np.diff(b.trajectories[:2000], axis=1).reshape(-1, 3)
    cov = np.cov(inc.T)
    np.testing.assert_allclose(cov, 0.25 * np.eye(3), atol=4 * 0.25 * math.sqrt(2 / len(inc)))


def test_restricted_paths_stay_in_ball():
    b = sample_paths(np.ones(3), 2.0, 0.0625, 2000, "restricted", rng=3, rho=1.5)
    assert np.all(np.linalg.norm(b.trajectories - np.ones(3), axis=2) <= 1.5)
    assert b.n_total == 2000 and 0 < b.acceptance < 1


def test_restricted_acceptance_matches_exit_law():
    # exact survival from the Dirichlet eigen-expansion; the discrete monitor
    # is corrected by widening the ball by 0.5826 sqrt(dt)
    t = rho = 2.0
    dt = 0.004
    n = 10000
    acc = sample_paths(np.zeros(3), t, dt, n, "restricted", rng=4, rho=rho).acceptance
    target = ball_survival(t, rho + 0.5826 * math.sqrt(dt))
    assert abs(acc - target) < 3 * math.sqrt(target * (1 - target) / n) + 0.01


def test_sample_paths_validation():
    with pytest.raises(InvalidParameterError):
        sample_paths(np.zeros(3), 1.0, 0.1, 4, "levy")
    with pytest.raises(InvalidParameterError):
        sample_paths(np.zeros(3), 1.0, 0.1, 4, "bridge")
    with pytest.raises(InvalidParameterError):
        sample_paths(np.zeros(3), 1.0, 0.3, 4)


def test_beta_zero_is_exactly_one(bump):
    box = NoiseBox(seed=1, spatial_radius=14.0, horizon=2.0)
    assert partition_mc(0.0, 2.0, np.zeros(3), box.view(), bump).value == 1.0
    s, l = partition_mc_coupled(0.0, 1.0, 2.0, np.zeros(3), box.view(), bump)
    assert s.value == l.value == 1.0 and l.params["difference"]["value"] == 0.0


def test_equal_horizons_give_zero_difference(bump):
    box = NoiseBox(seed=2, spatial_radius=14.0, horizon=2.0)
    s, l = partition_mc_coupled(0.2, 2.0, 2.0, np.zeros(3), box.view(), bump, n_paths=256)
    assert s.value == l.value
    assert l.params["difference"] == dict(value=0.0, std_error=0.0)


def test_explicit_paths_match_kernel_paths(bump):
    box = NoiseBox(seed=3, spatial_radius=14.0, horizon=1.0)
    paths = sample_paths(np.zeros(3), 1.0, box.time_step, 32, rng=7)
    a = partition_mc(0.3, 1.0, np.zeros(3), box.view(), bump, paths=paths)
    b = partition_mc(0.3, 1.0, np.zeros(3), box.view(), bump, n_paths=32, rng=7)
    assert a.value == pytest.approx(b.value, rel=1e-10)


def test_unrestricted_limit_and_beta_zero(bump):
    box = NoiseBox(seed=4, spatial_radius=14.0, horizon=1.0)
    z = partition_mc(0.2, 1.0, np.zeros(3), box.view(), bump, n_paths=256, rng=1)
    r = restricted_partition_mc(0.2, 1.0, np.zeros(3), box.view(), bump, rho=1e9, n_paths=256, rng=1)
    assert r.value == z.value
    r0 = restricted_partition_mc(0.0, 1.0, np.zeros(3), box.view(), bump, rho=1.0, n_paths=4000, rng=1)
    paths = sample_paths(np.zeros(3), 1.0, box.time_step, 4000, "restricted", rng=1, rho=1.0)
    assert r0.value == pytest.approx(paths.acceptance, abs=1e-12)


def test_restricted_paths_route_agrees(bump):
    box = NoiseBox(seed=5, spatial_radius=14.0, horizon=1.0)
    paths = sample_paths(np.zeros(3), 1.0, box.time_step, 64, "restricted", rng=8, rho=1.2)
    a = restricted_partition_mc(0.3, 1.0, np.zeros(3), box.view(), bump, rho=1.2, paths=paths)
    b = restricted_partition_mc(0.3, 1.0, np.zeros(3), box.view(), bump, rho=1.2, n_paths=64, rng=8)
    assert a.value == pytest.approx(b.value, rel=1e-10)


def test_mean_one_and_second_moment(bump):
    beta, T = 0.2, 2.0
    vals, ses = partition_replicas(beta, [T], bump, 64, 1024, seed=77)
    z = vals[:, 0]
    assert abs(z.mean() - 1) < 3 * z.std(ddof=1) / math.sqrt(z.size)
    nv = noise_variance(z, ses[:, 0])
    pf = pair_functional(beta, T, 0.0, n=16384, rng=1, spec=bump)
    assert abs(nv.value - (pf.value - 1)) < 3 * math.hypot(nv.std_error, pf.std_error)


def test_coupled_difference_centered(bump):
    diffs = []
    for r in range(500):
        box = replica_box(31, r, np.zeros((1, 3)), 4.0, bump)
        _, l = partition_mc_coupled(0.2, 2.0, 4.0, np.zeros(3), box.view(), bump, n_paths=32,
                                    rng=replica_stream(31, r))
        diffs.append(l.params["difference"]["value"])
    d = np.array(diffs)
    assert abs(d.mean()) < 3 * d.std(ddof=1) / math.sqrt(d.size)


def test_restriction_gap_shrinks(bump):
    gaps = []
    for T in (4.0, 16.0, 64.0):
        tau = math.floor(T ** 0.4 / 0.0625) * 0.0625
        g = []
        for r in range(8):
            box = replica_box(41, r, np.zeros((1, 3)), T, bump)
            logw, ok = horizon_weights(0.2, [tau, T], np.zeros(3), box.view(), bump, 256, replica_stream(41, r),
                                       restrict_time=tau, rho=T ** 0.4)
            z_a, _ = mean_exp(logw[:, 0], mask=ok)
            z_t, _ = mean_exp(logw[:, 1])
            g.append(abs(z_t - z_a))
        gaps.append(np.mean(g))
    assert gaps[0] > gaps[1] > gaps[2]


def test_mean_exp_is_shift_stable():
    logw = np.array([800.0, 800.0 + math.log(3.0)])
    with pytest.raises(NumericalOverflowError):
        mean_exp(logw)
    m, _ = mean_exp(np.array([-800.0, -800.0]))
    assert m == 0.0 or m == pytest.approx(math.exp(-800.0))
    assert mean_exp(np.array([0.0, math.log(3.0)]))[0] == pytest.approx(2.0)


def test_estimate_json():
    e = Estimate(1.5, 0.1, 10, "mc", dict(beta=0.2))
    assert e.to_dict()["n"] == 10
    assert '"value": 1.5' in e.to_json()
