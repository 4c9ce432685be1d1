import warnings

import numpy as np
import pytest

from lrcal.classifier import (ClassifierConfig, ConvergenceWarning, PointPrior, UniformPrior,
                              build_training_set, train)
from lrcal.simulators import MultidimModel, UnivariateMixture


def quiet_train(*args, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        return train(*args, **kw)


@pytest.fixture(scope="session")
def mixture():
    return UnivariateMixture()


@pytest.fixture(scope="session")
def multidim():
    return MultidimModel()


@pytest.fixture(scope="session")
def mixture_classifier(mixture):
    """Plain 1D classifier for gamma=0.05 (label 0) against gamma=0 (label 1)."""
    ts = build_training_set(mixture, PointPrior([0.05]), PointPrior([0.0]), 200_000, seed=11)
    return quiet_train(ts.x, ClassifierConfig(epochs=10, seed=1), y=ts.y)


@pytest.fixture(scope="session")
def param_classifier(mixture):
    """Parameterized 1D classifier: gamma0 uniform on [0, 0.3], gamma1 uniform on [0, 0.3]."""
    ts = build_training_set(mixture, UniformPrior([0.0], [0.3]), UniformPrior([0.0], [0.3]),
                            200_000, seed=12)
    return quiet_train(ts, ClassifierConfig(epochs=10, seed=2))


@pytest.fixture(scope="session")
def decomposed(mixture):
    """Pairwise-decomposed, histogram-calibrated estimator for the 1D mixture."""
    from lrcal.ratio import fit_pairwise

    return fit_pairwise(mixture.components, mixture.component_weights, 200_000,
                        ClassifierConfig(epochs=10), seed=0)


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance(capsys):
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def report(number, ok, detail):
        line = f"ACCEPTANCE {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
