import numpy as np
import pytest

from rmtlab.ensemble import EntryLaw, make_profile, sample_goe, sample_matrix


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long Monte Carlo checks")


@pytest.fixture
def small_goe():
    return sample_goe(50, seed=3)


@pytest.fixture
def heavy_sample():
    prof = make_profile(60, "flat", eps=0.5)
    return sample_matrix(prof, EntryLaw("student_t", 2.6), seed=11)


def random_symmetric(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n)) / np.sqrt(n)
    return (a + a.T) / np.sqrt(2.0)


# N = 1000 spectra shared by the spectral tests and the acceptance suite;
# each ensemble is computed at most once per session.
SPECTRA_N = 1000
SPECTRA_REPLICAS = 500
_SPECTRA = {}


def spectra_1000(kind):
    from scipy import linalg
    if kind not in _SPECTRA:
        if kind == "goe":
            make = lambda s: sample_goe(SPECTRA_N, 1_000_000 + s)  # noqa: E731
        else:
            prof = make_profile(SPECTRA_N, "flat", eps=0.5)
            law = EntryLaw("student_t", 2.6)
            make = lambda s: sample_matrix(prof, law, s)  # noqa: E731
        _SPECTRA[kind] = np.array([linalg.eigvalsh(make(s).entries, check_finite=False)
                                   for s in range(SPECTRA_REPLICAS)])
    return _SPECTRA[kind]
