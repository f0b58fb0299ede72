import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "ci", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("dev", max_examples=15, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))

ACCEPTANCE_LINES = {}


def record_criterion(number: int, ok: bool, detail: str):
    ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture(scope="session")
def canon():
    from tctbundle.bundle_model import canonical_system_matrix

    return canonical_system_matrix()


@pytest.fixture(scope="session")
def snn1_fixed_run():
    """1e5 i.i.d. RND bundles at n0 = 1e5 with SNN1 and SVD reports."""
    from tctbundle.classical import snn1_batch
    from tctbundle.datasets import RndConfig, rnd_array
    from tctbundle.evaluation import evaluate

    recs = rnd_array(RndConfig(n_bundles=100_000, seed=7, tcm=None, fixed_n0=1e5))
    x, iters, conv = snn1_batch(recs["counts"], recs["n0"])
    return {
        "records": recs,
        "snn1": evaluate(recs, x, method="snn1"),
        "svd": evaluate(recs, recs["x_svd"], method="svd"),
        "iterations": iters,
    }


@pytest.fixture(scope="session")
def desk_nn():
    """Desk-profile V1, V2 and V4 networks on 2e5 RND bundles, plus a 1e5-bundle test set."""
    from tctbundle.datasets import RndConfig, rnd_array
    from tctbundle.nn.train import desk_config, train

    train_recs = rnd_array(RndConfig(n_bundles=200_000, seed=11))
    test_recs = rnd_array(RndConfig(n_bundles=100_000, seed=12))
    cfg = desk_config()
    v2, h2 = train(train_recs, "V2", cfg, seed=0)
    v4, h4 = train(train_recs, "V4", cfg, seed=0)
    v1, h1 = train(train_recs, "V1", cfg, seed=0)
    return {"test": test_recs, "v2": v2, "v2_history": h2, "v4": v4, "v4_history": h4,
            "v1": v1, "v1_history": h1}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
