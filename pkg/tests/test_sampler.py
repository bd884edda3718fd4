import numpy as np
import pytest
from scipy import stats

from dpplab.errors import CapacityError, DomainError
from dpplab.kernel import l_to_k, membership, pmf_table, random_kernel
from dpplab.sampler import (
    SampleSet,
    read_samples,
    sample_exhaustive,
    sample_spectral,
    stream_uniforms,
    write_samples,
)

from conftest import L3


def frequencies(samples):
    return np.bincount(samples.draws.astype(np.int64), minlength=1 << samples.n_items) / len(samples)


def test_single_item_half():
    s = sample_exhaustive([[1.0]], 100_000, seed=1)
    assert abs(frequencies(s)[1] - 0.5) < 0.005


def test_zero_count():
    for sampler in (sample_exhaustive, sample_spectral):
        s = sampler(L3, 0, seed=0)
        assert len(s) == 0 and s.subsets() == []
    with pytest.raises(DomainError):
        sample_exhaustive(L3, -1, seed=0)


def test_exhaustive_diagonal_cells():
    count = 100_000
    s = sample_exhaustive(np.diag([1.0, 2.0]), count, seed=4)
    p = np.array([1 / 6, 1 / 6, 1 / 3, 1 / 3])
    sigma = np.sqrt(p * (1 - p) / count)
    assert np.all(np.abs(frequencies(s) - p) < 3 * sigma)


def test_exhaustive_capacity():
    with pytest.raises(CapacityError):
        sample_exhaustive(np.eye(21), 1, seed=0)


def test_spectral_diagonal_independent():
    d = np.array([0.5, 1.0, 3.0])
    s = sample_spectral(np.diag(d), 20_000, seed=2)
    member = membership(s.draws, 3)
    k = d / (1 + d)
    sigma = np.sqrt(k * (1 - k) / 20_000)
    assert np.all(np.abs(member.mean(axis=0) - k) < 4 * sigma)
    joint = np.mean(member[:, 0] & member[:, 2])
    assert abs(joint - k[0] * k[2]) < 4 * np.sqrt(k[0] * k[2] / 20_000)


@pytest.mark.parametrize("sampler", [sample_exhaustive, sample_spectral])
def test_marginals_and_negative_correlation(sampler):
    L = random_kernel(4, seed=8)
    count = 20_000
    s = sampler(L, count, seed=9)
    member = membership(s.draws, 4).astype(float)
    k = np.diag(l_to_k(L))
    sigma = np.sqrt(k * (1 - k) / count)
    assert np.all(np.abs(member.mean(axis=0) - k) < 4 * sigma)
    pi = member.mean(axis=0)
    for i in range(4):
        for j in range(i + 1, 4):
            pij = np.mean(member[:, i] * member[:, j])
            assert pij <= pi[i] * pi[j] + 4 * np.sqrt(pij / count)


def test_spectral_matches_table_chi_square():
    L = random_kernel(3, seed=21)
    count = 20_000
    s = sample_spectral(L, count, seed=5)
    observed = np.bincount(s.draws.astype(np.int64), minlength=8)
    expected = pmf_table(L) * count
    _, pval = stats.chisquare(observed, expected)
    assert pval > 0.001


def test_determinism_and_seed_dependence():
    a = sample_spectral(L3, 500, seed=17)
    b = sample_spectral(L3, 500, seed=17)
    c = sample_spectral(L3, 500, seed=18)
    np.testing.assert_array_equal(a.draws, b.draws)
    assert not np.array_equal(a.draws, c.draws)
    e1 = sample_exhaustive(L3, 500, seed=17)
    np.testing.assert_array_equal(e1.draws, sample_exhaustive(L3, 500, seed=17).draws)


def test_stream_offsets_are_independent_of_chunking():
    full = stream_uniforms(7, 0, 50, 8)
    parts = np.vstack([stream_uniforms(7, 0, 20, 8), stream_uniforms(7, 20, 50, 8)])
    np.testing.assert_array_equal(full, parts)
    np.testing.assert_array_equal(stream_uniforms(7, 33, 34, 8)[0], full[33])
    with pytest.raises(ValueError):
        stream_uniforms(7, 0, 1, 6)


def test_prefix_property():
    # draw i depends only on (seed, i): a longer run extends a shorter one
    short = sample_spectral(L3, 100, seed=3)
    long = sample_spectral(L3, 300, seed=3)
    np.testing.assert_array_equal(long.draws[:100], short.draws)


def test_sample_file_round_trip(tmp_path):
    s = sample_spectral(L3, 200, seed=1)
    path = tmp_path / "samples.txt"
    write_samples(path, s)
    lines = path.read_text().splitlines()
    assert lines[0] == "# n=3 count=200 seed=1"
    assert len(lines) == 201
    back = read_samples(path)
    np.testing.assert_array_equal(back.draws, s.draws)
    assert (back.n_items, back.seed) == (3, 1)


def test_sample_file_empty_set_line(tmp_path):
    s = SampleSet(np.array([0, 5], dtype=np.uint64), 3, 0)
    path = tmp_path / "s.txt"
    write_samples(path, s)
    assert path.read_text().splitlines()[1] == ""
    assert read_samples(path).subsets() == [(), (0, 2)]


@pytest.mark.parametrize("content", [
    "0 1\n",
    "# n=2 count=1 seed=0\n0 5\n",
    "# n=2 count=3 seed=0\n0\n",
])
def test_sample_file_rejects_bad(tmp_path, content):
    path = tmp_path / "bad.txt"
    path.write_text(content)
    with pytest.raises(DomainError):
        read_samples(path)
