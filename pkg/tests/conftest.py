import numpy as np
import pytest

from shrinklda.classifier import LabeledDataset


def separated_clusters(seed=0, n=40, p=5, delta=10.0):
    """Two identity-covariance clusters whose means differ by ``delta`` in coordinate 0."""
    rng = np.random.default_rng(seed)
    labels = np.repeat([1, 2], n // 2)
    x = rng.standard_normal((n, p))
    x[labels == 2, 0] += delta
    return LabeledDataset(x, labels)


def permuted_null(seed=0, **kw):
    """The separated fixture with labels shuffled, so features carry no signal."""
    data = separated_clusters(seed, **kw)
    labels = np.random.default_rng(seed + 1).permutation(data.labels)
    return LabeledDataset(data.features, labels)


@pytest.fixture
def separated():
    return separated_clusters()


@pytest.fixture
def null_data():
    return permuted_null()


# -- acceptance reporting ---------------------------------------------------

ACCEPTANCE = {}


def record_criterion(number, title, checks, elapsed=None):
    """Store and print one pass/fail line; ``checks`` is a list of (description, ok)."""
    ok = all(c for _, c in checks)
    failed = [d for d, c in checks if not c]
    detail = "; ".join(failed) if failed else f"{len(checks)} checks"
    timing = f" [{elapsed:.1f}s]" if elapsed is not None else ""
    line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title}{timing} -- {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return ok, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
