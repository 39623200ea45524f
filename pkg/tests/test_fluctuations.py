import json
import math

import numpy as np
import pytest
from scipy import special

from polymerlab.errors import EnsembleAbortError, InvalidParameterError
from polymerlab.fluctuations import (AveragingFunction, _tail, averaged_variance_reference,
                                     build_averaged_ensemble, build_ensemble, cov_U, cov_U_reference,
                                     decomposition_residual_stat, inner_relative_se, restricted_cell_overlap)

G2 = 0.0907598


def test_cov_U_closed_forms():
    # int_a^inf G_u(0) du = 2 (2 pi)^(-3/2) / sqrt(a); off the diagonal erf(r / sqrt(2a)) / (2 pi r)
    assert _tail(3, 0.7, 2.0) == pytest.approx(special.erf(0.35) / (2 * math.pi * 0.7), rel=1e-9)
    assert cov_U(G2, (0, 0, 0), 1.0, (0, 0, 0), 1.0) == pytest.approx(
        0.5 * G2 * 2 * (2 * math.pi) ** -1.5 / math.sqrt(2.0), rel=1e-9)
    r, a = 0.8, 1.5
    assert cov_U(G2, (0, 0, 0), 0.5, (r, 0, 0), 1.0) == pytest.approx(
        0.5 * G2 * special.erf(r / math.sqrt(2 * a)) / (2 * math.pi * r), rel=1e-9)


def test_cov_U_reference_matrix():
    pts = [((0, 0, 0), 1.0), ((1, 0, 0), 1.0), ((0, 0, 0), 2.0)]
    ref = cov_U_reference(pts, G2)
    assert np.allclose(ref.cov_U, ref.cov_U.T)
    assert np.all(np.linalg.eigvalsh(ref.cov_U) > 0)
    assert ref.cov_U[0, 1] < ref.cov_U[0, 0]
    assert np.all(cov_U_reference(pts, 0.0).cov_U == 0)


def test_averaged_reference_mixture_matches_nodes():
    f = AveragingFunction.mixture([0.7, 0.3], [(0, 0, 0), (1, 0, 0)], [0.5, 0.8])
    exact = averaged_variance_reference(f, 1.0, G2)
    x, w = f.nodes(3, order=6)
    r = np.linalg.norm(x[:, None] - x[None, :], axis=2)
    with np.errstate(invalid="ignore", divide="ignore"):
        tail = np.where(r > 0, special.erf(r / 2.0) / (2 * math.pi * r), 2 * (2 * math.pi) ** -1.5 / math.sqrt(2.0))
    num = 0.5 * w @ tail @ w
    assert exact == pytest.approx(G2 * num, rel=1e-5)
    assert averaged_variance_reference(AveragingFunction.mixture([0.0], [(0, 0, 0)], [1.0]), 1.0, G2) == 0.0


def test_box_nodes_integrate_constants():
    f = AveragingFunction.box(-1.0, 2.0, height=0.5)
    x, w = f.nodes(3, order=4)
    assert w.sum() == pytest.approx(0.5 * 27)
    assert np.all((x >= -1) & (x <= 2))
    assert AveragingFunction.box(1.0, 1.0).is_zero


def test_beta_zero_ensemble_is_zero(bump):
    ens = build_ensemble("PF", [((0, 0, 0), 1.0)], 0.0, 4.0, replicas=8, spec=bump)
    assert np.all(ens.samples == 0)
    avg = build_averaged_ensemble(AveragingFunction.box(-1, 1), 1.0, 0.0, 4.0, replicas=4, spec=bump)
    assert np.all(avg.samples == 0)


@pytest.fixture(scope="module")
def small_ensemble(bump):
    return build_ensemble("PF", [((0, 0, 0), 1.0), ((0.5, 0, 0), 0.5)], 0.1, 4.0, inner_n=128, replicas=64,
                          base_seed=3, spec=bump, t_max_factor=2.0)


def test_pf_centered(small_ensemble):
    s = small_ensemble.valid_samples()
    assert small_ensemble.n_invalid == 0
    assert np.all(np.abs(s.mean(axis=0)) < 3 * s.std(axis=0, ddof=1) / math.sqrt(len(s)))


def test_fe_close_to_normalised_pf(small_ensemble):
    fe = small_ensemble.as_kind("FE").samples
    pf_norm = small_ensemble.samples / small_ensemble.z_short
    gap = np.abs(fe - pf_norm) / np.maximum(np.abs(pf_norm), 1e-12)
    assert np.median(gap) < 0.1
    with pytest.raises(InvalidParameterError):
        small_ensemble.as_kind("XX")


def test_csv_round_trip(small_ensemble, tmp_path):
    p = tmp_path / "ens.csv"
    small_ensemble.to_csv(str(p))
    data = np.loadtxt(p, delimiter=",", skiprows=1)
    assert data.shape == (64 * 2, 3)
    np.testing.assert_array_equal(data[:, 2].reshape(64, 2), small_ensemble.samples)
    meta = json.loads((tmp_path / "ens.csv.json").read_text())
    assert meta["seeds"] == [int(s) for s in small_ensemble.seeds]
    assert meta["kind"] == "PF" and meta["n_invalid"] == 0


def test_ensemble_is_deterministic(bump):
    kw = dict(inner_n=64, replicas=4, base_seed=5, spec=bump, t_max_factor=2.0)
    a = build_ensemble("FE", [((0, 0, 0), 1.0)], 0.1, 4.0, **kw)
    b = build_ensemble("FE", [((0, 0, 0), 1.0)], 0.1, 4.0, **kw)
    np.testing.assert_array_equal(a.samples, b.samples)


def test_abort_when_inner_error_too_large(bump):
    with pytest.raises(EnsembleAbortError):
        build_ensemble("PF", [((0, 0, 0), 1.0)], 1.0, 4.0, inner_n=8, replicas=8, spec=bump, t_max_factor=16.0)


def test_ensemble_validation(bump):
    with pytest.raises(InvalidParameterError):
        build_ensemble("PF", [((0, 0, 0), 1.0), ((0, 0, 0), 1.0)], 0.1, 4.0, spec=bump)
    with pytest.raises(InvalidParameterError):
        build_ensemble("PF", [((0, 0, 0), 1.0)], 0.1, 4.0, T_max=2.0, spec=bump)


def test_residual_stat_beta_zero(bump):
    assert decomposition_residual_stat(0.0, 4.0, spec=bump).value == 0.0


def test_inner_relative_se():
    assert inner_relative_se(0.1, 0.49395046820666705, 1024.0, 4096) == pytest.approx(
        math.sqrt(math.expm1(0.01 * 0.49395046820666705 * 1024) / 4096))


def test_restricted_cells(bump):
    far = restricted_cell_overlap(64.0, [(0, 0, 0), (2, 0, 0)], n_paths=64, spec=bump)
    assert far.disjoint and far.tau <= far.rho
    same = restricted_cell_overlap(64.0, [(0, 0, 0), (0, 0, 0)], n_paths=64, spec=bump)
    assert not same.disjoint
