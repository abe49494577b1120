import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vlqkd.hashing import (
    DISCARD,
    ToeplitzFamily,
    VirtualHasher,
    map_and_reconcile_cases,
    naive_variable_hash,
    same_length_collisions,
    toeplitz_hash,
    toeplitz_hash_batch,
    variable_length_collisions,
    virtual_output_uniformity,
    virtual_variable_hash,
)

bits = st.lists(st.integers(0, 1), min_size=8, max_size=40)
REPORT_KEYS = {"pair", "draws", "collisions", "rate", "bound", "verdict"}


def gf2_matvec(fam: ToeplitzFamily, z: np.ndarray) -> np.ndarray:
    """Row-by-row parity, built from the diagonal definition of a Toeplitz matrix."""
    out = np.zeros(fam.out_len, dtype=np.uint8)
    for r in range(fam.out_len):
        acc = 0
        for c in range(fam.in_len):
            acc ^= int(fam.diagonal_seed[r - c + fam.in_len - 1]) & int(z[c])
        out[r] = acc
    return out


def test_family_validation():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        ToeplitzFamily.draw(8, 16, rng)
    with pytest.raises(ValueError):
        ToeplitzFamily(8, 4, np.zeros(10, dtype=np.uint8))
    fam = ToeplitzFamily.draw(8, 4, rng)
    with pytest.raises(ValueError):
        toeplitz_hash(fam, np.zeros(7, dtype=np.uint8))


def test_matrix_is_toeplitz():
    fam = ToeplitzFamily.draw(12, 5, np.random.default_rng(1))
    m = fam.matrix()
    assert np.array_equal(m[1:, 1:], m[:-1, :-1])


@given(st.integers(0, 2**32 - 1), bits)
def test_hash_matches_explicit_parity(seed, z):
    z = np.array(z, dtype=np.uint8)
    fam = ToeplitzFamily.draw(len(z), 6, np.random.default_rng(seed))
    expected = gf2_matvec(fam, z)
    assert np.array_equal(toeplitz_hash(fam, z), expected)
    assert np.array_equal(toeplitz_hash_batch(fam.diagonal_seed[None, :], z, 6)[0], expected)


@given(st.integers(0, 2**32 - 1), st.data())
def test_linearity_and_zero(seed, data):
    n = data.draw(st.integers(8, 48))
    z1 = np.array(data.draw(st.lists(st.integers(0, 1), min_size=n, max_size=n)), dtype=np.uint8)
    z2 = np.array(data.draw(st.lists(st.integers(0, 1), min_size=n, max_size=n)), dtype=np.uint8)
    fam = ToeplitzFamily.draw(n, 8, np.random.default_rng(seed))
    assert not toeplitz_hash(fam, np.zeros(n, dtype=np.uint8)).any()
    assert np.array_equal(toeplitz_hash(fam, z1 ^ z2), toeplitz_hash(fam, z1) ^ toeplitz_hash(fam, z2))


def test_two_universality_many_pairs():
    rng = np.random.default_rng(2024)
    out_len, draws = 8, 100_000
    p = 2.0**-out_len
    for k in range(100):
        z1 = rng.integers(0, 2, 32, dtype=np.uint8)
        z2 = rng.integers(0, 2, 32, dtype=np.uint8)
        if np.array_equal(z1, z2):
            z2[0] ^= 1
        report = same_length_collisions(z1, z2, out_len, draws, seed=k)
        assert report.rate <= p + 5 * np.sqrt(p / draws)


def test_naive_counterexample_collides_always():
    for out_len in (4, 8, 16):
        report = variable_length_collisions(
            np.zeros(10, np.uint8), np.zeros(20, np.uint8), out_len, 20_000, seed=3, virtual=False
        )
        assert report.collisions == report.draws
        assert report.verdict == "VIOLATION"


def test_naive_single_length_is_plain_hash():
    rng = np.random.default_rng(5)
    fam = ToeplitzFamily.draw(24, 8, rng)
    z = rng.integers(0, 2, 24, dtype=np.uint8)
    assert np.array_equal(naive_variable_hash({24: fam}, z), toeplitz_hash(fam, z))


def test_naive_same_length_pairs_stay_universal():
    rng = np.random.default_rng(6)
    z1, z2 = rng.integers(0, 2, (2, 40), dtype=np.uint8)
    report = same_length_collisions(z1, z2, 10, 200_000, seed=6)
    assert report.verdict == "PASS"


def test_virtual_hasher_is_deterministic_and_lazy():
    vh = VirtualHasher(seed=77, out_len=8)
    z = np.array([1, 0, 1, 1, 0, 0, 1, 0, 1, 1], dtype=np.uint8)
    assert np.array_equal(virtual_variable_hash(vh, z), virtual_variable_hash(vh, z))
    fam_a, mask_a = vh.pair(10)
    fam_b, mask_b = VirtualHasher(seed=77, out_len=8).pair(10)
    assert np.array_equal(fam_a.diagonal_seed, fam_b.diagonal_seed) and np.array_equal(mask_a, mask_b)
    assert not np.array_equal(vh.pair(11)[0].diagonal_seed[:17], fam_a.diagonal_seed)
    with pytest.raises(ValueError):
        vh.pair(5000)


def test_virtual_short_inputs_are_padded():
    vh = VirtualHasher(seed=1, out_len=16)
    zero_short = virtual_variable_hash(vh, np.zeros(10, np.uint8))
    assert np.array_equal(zero_short, vh.pair(10)[1])  # f(0) = 0, so only the mask shows


def test_virtual_fix_restores_collision_rate():
    report = variable_length_collisions(
        np.zeros(10, np.uint8), np.zeros(20, np.uint8), 16, 1_000_000, seed=4, virtual=True
    )
    p = 2.0**-16
    assert abs(report.rate - p) <= 5 * np.sqrt(p * (1 - p) / report.draws)
    assert report.verdict == "PASS"


def test_virtual_output_is_uniform():
    z = np.random.default_rng(8).integers(0, 2, 20, dtype=np.uint8)
    report = virtual_output_uniformity(z, 8, 1_000_000, seed=8)
    assert report.p_value >= 0.01
    assert report.verdict == "PASS"


def test_report_schema():
    report = same_length_collisions(np.array([0, 1] * 8, np.uint8), np.array([1, 0] * 8, np.uint8), 4, 1000, seed=0)
    d = json.loads(json.dumps(report.to_dict()))
    assert set(d) == REPORT_KEYS
    assert d["verdict"] in {"PASS", "VIOLATION"}


def test_case_views_edge_cases():
    views = map_and_reconcile_cases([None, None, None])
    assert views.kept.size == 0 and views.discarded_positions == (0, 1, 2)
    views = map_and_reconcile_cases([0, 1, 1, 0])
    assert np.array_equal(views.case1, views.case2) and np.array_equal(views.case2, views.kept)
    with pytest.raises(ValueError):
        map_and_reconcile_cases([0, 3])


@given(st.lists(st.sampled_from([0, 1, None]), max_size=60))
def test_case_views_round_trip(raw):
    views = map_and_reconcile_cases(raw)
    assert np.array_equal(views.reconstruct_case1(), views.case1)
    assert np.all(views.case2[list(views.discarded_positions)] == 0)
    assert views.case1.tolist() == [DISCARD if s is None else s for s in raw]
