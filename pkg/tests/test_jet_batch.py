import numpy as np
import pytest

from datasets.jet_batch import JetBatch, load_jets


@pytest.fixture
def batch(rng):
    return JetBatch.random(25, 3, rng, third=True)


@pytest.mark.parametrize("suffix", [".csv", ".h5"])
def test_file_round_trip(batch, tmp_path, suffix):
    path = tmp_path / f"jets{suffix}"
    if suffix == ".csv":
        batch.to_csv(path)
    else:
        batch.to_h5(path)
    loaded = load_jets(str(path))
    assert loaded.N == 3 and len(loaded) == 25
    np.testing.assert_array_equal(loaded.grad, batch.grad)
    np.testing.assert_array_equal(loaded.hess, batch.hess)
    np.testing.assert_allclose(loaded.third, batch.third, rtol=1e-15, atol=1e-15)
    assert loaded.rho is None


def test_collate_and_chunks(batch, rng):
    other = JetBatch.random(5, 3, rng, third=True)
    merged = JetBatch.collate([batch, other])
    assert len(merged) == 30
    np.testing.assert_array_equal(merged.third[25:], other.third)
    sizes = [len(chunk) for chunk in merged.chunks(8)]
    assert sizes == [8, 8, 8, 6]
    assert JetBatch.collate([batch, JetBatch.random(2, 3, rng)]).third is None


def test_jet(batch):
    jet = batch.jet()
    assert jet.rho.shape == (25,)
    assert np.all(jet.v > 0)


def test_repr(batch):
    text = repr(batch)
    assert "grad=ndarray(shape=(25, 3)" in text
    assert "rho" not in text


def test_load_none():
    assert load_jets(None) is None
