import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kinverify import autodiff as ad
from kinverify.exceptions import ContractError, ShapeError
from kinverify.fusion import FusionKind, fuse, fuse_tensor, output_dim

K = FusionKind


def test_exactly_five_kinds_with_stable_tokens():
    assert [k.value for k in FusionKind] == ["cat", "sumdiff", "sumdiff_mul", "sqdiff", "sqdiff_mul"]
    assert FusionKind.parse("SQDIFF_MUL") is K.SQDIFF_MUL
    with pytest.raises(ContractError):
        FusionKind.parse("diff")


@pytest.mark.parametrize(
    "kind, d, expected",
    [(K.CAT, 2048, 4096), (K.SQDIFF_MUL, 64, 192), (K.SQDIFF, 1, 2),
     (K.SUMDIFF, 5, 10), (K.SUMDIFF_MUL, 5, 15)],
)
def test_output_dim(kind, d, expected):
    assert output_dim(kind, d) == expected


def test_output_dim_rejects_zero():
    with pytest.raises(ContractError):
        output_dim(K.CAT, 0)


@pytest.mark.parametrize(
    "kind, x, y, expected",
    [
        (K.SQDIFF_MUL, [1, 2], [1, 2], [0, 0, 0, 0, 1, 4]),
        (K.SQDIFF_MUL, [2, 1], [1, 3], [3, -8, 1, 4, 2, 3]),
        (K.CAT, [1], [2], [1, 2]),
        (K.SUMDIFF, [1, 0], [0, 1], [1, 1, 1, -1]),
        (K.SUMDIFF_MUL, [1, 2], [3, 4], [4, 6, -2, -2, 3, 8]),
        (K.SQDIFF, [3], [1], [8, 4]),
    ],
)
def test_fuse_examples(kind, x, y, expected):
    assert fuse(kind, x, y).tolist() == expected


def test_fuse_dimension_mismatch():
    with pytest.raises(ShapeError):
        fuse(K.CAT, [1, 2], [1, 2, 3])


def test_fuse_batch_matches_rows(rng):
    x, y = rng.standard_normal((5, 4)), rng.standard_normal((5, 4))
    batch = fuse(K.SQDIFF_MUL, x, y)
    for i in range(5):
        np.testing.assert_array_equal(batch[i], fuse(K.SQDIFF_MUL, x[i], y[i]))


@pytest.mark.parametrize("kind", list(FusionKind))
def test_fuse_tensor_matches_numpy(kind, rng):
    x, y = rng.standard_normal((3, 4)), rng.standard_normal((3, 4))
    np.testing.assert_array_equal(fuse_tensor(kind, ad.Tensor(x), ad.Tensor(y)).data, fuse(kind, x, y))


@pytest.mark.parametrize("kind", list(FusionKind))
def test_fuse_tensor_gradients(kind, rng):
    x = ad.Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    y = ad.Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    w = ad.Tensor(rng.standard_normal((output_dim(kind, 4), 1)))
    err = ad.finite_diff_check(lambda tape: ad.mean(ad.matmul(fuse_tensor(kind, x, y, tape), w, tape), tape),
                               [x, y])
    assert err < 1e-6


vecs = arrays(np.float64, st.integers(1, 8).map(lambda d: (d,)),
              elements=st.floats(-1e3, 1e3, allow_nan=False))


@settings(max_examples=60)
@given(vecs, st.data())
def test_swap_laws(x, data):
    y = data.draw(arrays(np.float64, x.shape, elements=st.floats(-1e3, 1e3)))
    d = x.size
    for kind in FusionKind:
        a, b = fuse(kind, x, y), fuse(kind, y, x)
        if kind is K.CAT:
            np.testing.assert_array_equal(b, np.concatenate([a[d:], a[:d]]))
        elif kind in (K.SUMDIFF, K.SUMDIFF_MUL):
            np.testing.assert_array_equal(b[:d], a[:d])
            np.testing.assert_array_equal(b[d:2 * d], -a[d:2 * d])
        else:
            np.testing.assert_array_equal(b[:d], -a[:d])
            np.testing.assert_array_equal(b[d:2 * d], a[d:2 * d])
        if kind in (K.SUMDIFF_MUL, K.SQDIFF_MUL):
            np.testing.assert_array_equal(b[2 * d:], a[2 * d:])


@settings(max_examples=60)
@given(vecs)
def test_equal_inputs_zero_difference_blocks(x):
    d = x.size
    assert np.all(fuse(K.SUMDIFF, x, x)[d:] == 0)
    assert np.all(fuse(K.SUMDIFF_MUL, x, x)[d:2 * d] == 0)
    assert np.all(fuse(K.SQDIFF, x, x) == 0)
    assert np.all(fuse(K.SQDIFF_MUL, x, x)[:2 * d] == 0)


# keep squares and products clear of the subnormal range, where doubling is inexact
normal = st.one_of(st.just(0.0), st.floats(1e-100, 1e3), st.floats(-1e3, -1e-100))


@settings(max_examples=60)
@given(st.integers(1, 6).flatmap(lambda n: arrays(np.float64, n, elements=normal)), st.data())
def test_scaling_by_two(x, data):
    y = data.draw(arrays(np.float64, x.shape, elements=normal))
    np.testing.assert_array_equal(fuse(K.SQDIFF, 2 * x, 2 * y), 4 * fuse(K.SQDIFF, x, y))
    np.testing.assert_array_equal(fuse(K.SUMDIFF, 2 * x, 2 * y), 2 * fuse(K.SUMDIFF, x, y))
    np.testing.assert_array_equal(fuse(K.CAT, 2 * x, 2 * y), 2 * fuse(K.CAT, x, y))
