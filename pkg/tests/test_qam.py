import numpy as np
import pytest
from hypothesis import given, strategies as st

from poschan import qam


def test_unit_average_energy():
    assert np.mean(np.abs(qam.CONSTELLATION) ** 2) == pytest.approx(1.0, abs=1e-15)
    assert qam.UNIT_RING.size == 8


def test_gray_neighbours_differ_in_one_bit():
    # nearest neighbours sit 2/sqrt(10) apart
    step = 2 / np.sqrt(10)
    for i, a in enumerate(qam.CONSTELLATION):
        for j, b in enumerate(qam.CONSTELLATION):
            if np.isclose(abs(a - b), step):
                assert bin(i ^ j).count("1") == 1


@given(st.lists(st.integers(0, 1), min_size=4, max_size=64).filter(lambda b: len(b) % 4 == 0))
def test_roundtrip(bits):
    assert qam.demodulate(qam.modulate(bits)).tolist() == bits


def test_bad_bit_count():
    with pytest.raises(ValueError):
        qam.modulate([0, 1, 1])
