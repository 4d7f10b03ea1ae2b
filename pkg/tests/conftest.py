import hypothesis
import numpy as np
import pytest

hypothesis.settings.register_profile("default", max_examples=40, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=5, deadline=None)
hypothesis.settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20160)


def random_dense(rng, m, n, decay=None):
    """Random m x n matrix, optionally with geometric singular-value decay."""
    if decay is None:
        return rng.standard_normal((m, n))
    p = min(m, n)
    U, _ = np.linalg.qr(rng.standard_normal((m, p)))
    V, _ = np.linalg.qr(rng.standard_normal((n, p)))
    return U @ np.diag(decay ** np.arange(p)) @ V.T


# ------------------------------------------------------------ acceptance report

ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    """record(criterion, label, ok, detail): one entry per checked clause."""

    def record(criterion, label, ok, detail=""):
        ACCEPTANCE.setdefault(criterion, []).append((label, bool(ok), detail))
        print(f"criterion {criterion} [{label}]: {'PASS' if ok else 'FAIL'} {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE):
        clauses = ACCEPTANCE[crit]
        ok = all(c[1] for c in clauses)
        parts = "; ".join(f"{label}: {'ok' if good else 'FAIL'} ({detail})" for label, good, detail in clauses)
        tr.write_line(f"criterion {crit:>2}: {'PASS' if ok else 'FAIL'} | {parts}")
