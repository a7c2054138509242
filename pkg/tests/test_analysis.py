import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from thunder.analysis import (
    ConvSpec,
    build_report,
    count_flops,
    count_params,
    haar_flops,
    pca_rank,
    projection_flops,
    subspace_ranks,
)
from thunder.autodiff import Tensor
from thunder.network import ABLATIONS, BasisSet, ModelConfig, Thunder, project


def test_one_conv_hand_counts():
    assert count_params([ConvSpec("c", 3, 8, 3)]) == 3 * 8 * 9 + 8 == 224
    assert count_flops([ConvSpec("c", 3, 3, 1)], input_size=4) == 2 * 1 * 3 * 3 * 16 == 288
    assert count_params([]) == 0 and count_flops([]) == 0
    assert ConvSpec("c", 3, 8, 3, bias=False).params == 216


def test_haar_and_projection_flops():
    # a 3x4x4 input gives 12 channels of 2x2 coefficients
    assert haar_flops(12, 2, 2) == 12 * 4 * 8 == 384
    n, c, q = 36, 5, 4
    assert projection_flops(n, c, q) == 2 * n * q * q + 2 * n * q * c + 21 + 2 * q * q * c + 2 * n * q * c


def test_rejects_non_specs():
    with pytest.raises(TypeError):
        count_params([("c", 3, 8, 3)])


@pytest.mark.parametrize("flag", [None, *ABLATIONS])
def test_plan_matches_built_model(flag):
    cfg = ModelConfig(M=2) if flag is None else ModelConfig(M=2).with_ablations(**{flag: True})
    built = sum(p.size for p in Thunder(cfg).parameters())
    assert count_params(cfg) == built


def test_report_totals_are_row_sums():
    report = build_report(ModelConfig(), 256)
    assert report.params == sum(r.params for r in report.rows)
    assert report.flops == sum(r.flops for r in report.rows)
    last = report.to_tsv().splitlines()[-1].split("\t")
    assert last[:4] == ["total", "-", str(report.params), str(report.flops)]
    assert count_flops(ModelConfig(), 256) == report.flops


def test_flops_scale_with_area():
    cfg = ModelConfig(M=1)
    small, large = count_flops(cfg, 64), count_flops(cfg, 128)
    # convs and wavelets scale exactly by 4; only the Q^3/3 factorisation does not
    assert 3.99 * small < large <= 4 * small


def test_report_rejects_indivisible_size():
    with pytest.raises(ValueError):
        build_report(ModelConfig(), 250)


def test_pca_rank_examples(rng):
    u, v = rng.standard_normal(6), rng.standard_normal(25)
    assert pca_rank(np.outer(u, v).reshape(6, 5, 5)) == 1
    assert pca_rank(np.zeros((4, 3, 3))) == 0
    assert pca_rank(rng.standard_normal((5, 8, 8)), energy=1.0) == 5
    with pytest.raises(ValueError):
        pca_rank(np.ones((2, 3, 3)), energy=0.0)
    with pytest.raises(ValueError):
        pca_rank(np.ones((2, 2, 3, 3)))


@given(st.integers(0, 2**31 - 1), st.floats(0.05, 1.0), st.floats(0.05, 1.0))
def test_pca_rank_monotone_in_energy(seed, e1, e2):
    lo, hi = sorted((e1, e2))
    feat = np.random.default_rng(seed).standard_normal((6, 4, 4))
    assert pca_rank(feat, lo) <= pca_rank(feat, hi)


def test_projected_feature_rank_bounded(double, rng):
    v = Tensor(rng.standard_normal((1, 36, 3)))
    h = Tensor(rng.standard_normal((1, 10, 6, 6)))
    assert pca_rank(project(h, BasisSet(v, 1)), 1 - 1e-6) <= 3


def test_subspace_ranks_rows(rng):
    model = Thunder(ModelConfig(M=1, Q=4))
    rows = subspace_ranks(model, rng.random((3, 32, 32)).astype(np.float32))
    assert [r[0] for r in rows] == [2, 1]
    assert all(post <= 4 for _, _, post in rows)
    with pytest.raises(ValueError, match="projection"):
        subspace_ranks(Thunder(ModelConfig(M=1, no_spr=True)), np.zeros((3, 32, 32), np.float32))
