"""Gray-coded 16-QAM with unit average energy."""

import numpy as np

__all__ = ["BITS_PER_SYMBOL", "CONSTELLATION", "UNIT_RING", "modulate", "demodulate", "random_symbols"]

BITS_PER_SYMBOL = 4

_LEVELS = np.array([-3.0, -1.0, 3.0, 1.0])  # index = 2-bit Gray label
_SCALE = 1.0 / np.sqrt(10.0)

# constellation[i] carries the 4 bits of integer i, MSB first (I bits then Q bits)
CONSTELLATION = (_LEVELS[np.arange(16) >> 2] + 1j * _LEVELS[np.arange(16) & 3]) * _SCALE

# the eight points whose energy is exactly 1
UNIT_RING = CONSTELLATION[np.isclose(np.abs(CONSTELLATION) ** 2, 1.0)]

_WEIGHTS = np.array([8, 4, 2, 1])


def modulate(bits) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64)
    if bits.size % BITS_PER_SYMBOL:
        raise ValueError(f"bit count {bits.size} is not a multiple of {BITS_PER_SYMBOL}")
    return CONSTELLATION[bits.reshape(-1, BITS_PER_SYMBOL) @ _WEIGHTS]


def demodulate(symbols) -> np.ndarray:
    """Hard minimum-distance decision back to bits."""
    s = np.asarray(symbols).reshape(-1)
    idx = np.argmin(np.abs(s[:, None] - CONSTELLATION[None, :]), axis=1)
    return ((idx[:, None] >> np.arange(3, -1, -1)) & 1).reshape(-1)


def random_symbols(rng: np.random.Generator, n: int, unit_energy: bool = False) -> np.ndarray:
    """Uniform draws from the full alphabet, or from its unit-energy ring."""
    alphabet = UNIT_RING if unit_energy else CONSTELLATION
    return alphabet[rng.integers(alphabet.size, size=n)]
