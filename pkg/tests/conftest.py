import numpy as np
import pytest

from poschan.channel_model import ChannelModelConfig


@pytest.fixture
def cfg():
    """Default system: K=512, L=26, M=2."""
    return ChannelModelConfig()


@pytest.fixture
def small_cfg():
    """Tiny system with strong ICI (normalised Doppler up to 0.32)."""
    return ChannelModelConfig(W=1e5, tau_max=3e-5, T_d=1e-3, f_dmax=2000.0, K=16, cp_len=4, S=2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def brute_force_H(taps, K, cp_len):
    """Frequency-domain channel by the explicit sum over samples and delays.

    H[k, d] = 1/K sum_m sum_l h(l, m) exp(j2pi d (m - l)/K) exp(-j2pi k m/K),
    m running over the post-CP window, 0-based bins.
    """
    L = taps.shape[0]
    H = np.zeros((K, K), dtype=complex)
    for k in range(K):
        for d in range(K):
            acc = 0j
            for m in range(K):
                for ell in range(L):
                    acc += taps[ell, cp_len + m] * np.exp(2j * np.pi * d * (m - ell) / K) * np.exp(-2j * np.pi * k * m / K)
            H[k, d] = acc / K
    return H


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
