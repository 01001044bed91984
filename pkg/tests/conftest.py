import numpy as np
import pytest

import ssfamon
import ssfamon.ksfa
import ssfamon.monitor
import ssfamon.partition
import ssfamon.sfa
from ssfamon.data import RawDataset
from ssfamon.ksfa import centered_kernel, split_threshold
from ssfamon.sfa import slowness_index

# every SFA / KSFA model fitted anywhere in the run is checked for the
# slowness-sorted prefix property; the acceptance suite reports the count
PREFIX_CHECKS = {"sfa": 0, "ksfa": 0}

_fit_sfa = ssfamon.sfa.fit_sfa
_fit_ksfa = ssfamon.ksfa.fit_ksfa


def check_sfa_prefix(model, data):
    sl = model.slowness
    assert np.all(np.diff(sl) >= -1e-12), "features not sorted by slowness"
    thresh = max(slowness_index(data.X[:, j], data.Xdot[:, j]) for j in range(data.X.shape[1]))
    keep = sl <= thresh * (1 + 1e-9)
    assert keep[:model.M].all() and not keep[model.M:].any()


def check_ksfa_prefix(model):
    sl = model.slowness
    assert np.all(np.diff(sl) >= -1e-12), "super features not sorted by slowness"
    Kt, Kdt = centered_kernel(model.train, model.gamma)
    thresh = split_threshold(Kt, Kdt)
    keep = sl <= thresh * (1 + 1e-9)
    assert keep[:model.M].all() and not keep[model.M:].any()


def _checked_fit_sfa(data):
    model = _fit_sfa(data)
    check_sfa_prefix(model, data)
    PREFIX_CHECKS["sfa"] += 1
    return model


def _checked_fit_ksfa(Z, cfg=None):
    model = _fit_ksfa(Z, cfg)
    check_ksfa_prefix(model)
    PREFIX_CHECKS["ksfa"] += 1
    return model


@pytest.fixture(autouse=True)
def _prefix_guard(monkeypatch):
    for mod in (ssfamon.sfa, ssfamon.partition, ssfamon.monitor, ssfamon):
        monkeypatch.setattr(mod, "fit_sfa", _checked_fit_sfa)
    for mod in (ssfamon.ksfa, ssfamon.monitor):
        monkeypatch.setattr(mod, "fit_ksfa", _checked_fit_ksfa)


def ar_sources(n, phis, rng):
    """Unit-variance AR(1) columns with the given coefficients."""
    out = np.zeros((n + 100, len(phis)))
    e = rng.standard_normal(out.shape)
    for j, phi in enumerate(phis):
        for t in range(1, out.shape[0]):
            out[t, j] = phi * out[t - 1, j] + np.sqrt(1 - phi ** 2) * e[t, j]
    return out[100:]


def mixed_dataset(n=500, J=6, seed=0):
    """Random mixture of AR sources with well separated speeds."""
    rng = np.random.default_rng(seed)
    phis = np.linspace(0.97, 0.1, J)
    S = ar_sources(n, phis, rng)
    A = rng.standard_normal((J, J))
    return RawDataset(tuple(f"v{i}" for i in range(J)), S @ A)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        line = ACCEPTANCE[k]
        if k == 11:
            line += f" ({PREFIX_CHECKS['sfa']} SFA and {PREFIX_CHECKS['ksfa']} KSFA fits checked in this run)"
        terminalreporter.write_line(line)
