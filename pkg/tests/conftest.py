import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "default",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def ecg_cohorts(tmp_path_factory):
    """Three small CSV-record manifests plus a fast pipeline config."""
    import json

    from divfuse.bench import write_ecg_cohorts

    root = tmp_path_factory.mktemp("cohorts")
    write_ecg_cohorts(root, n_records=30, seed=3)
    config = {
        "reference_manifest": "reference.json",
        "source_manifest": "source.json",
        "disease_manifest": "disease.json",
        "output_dir": "out",
        "experiment": {"n_runs": 5, "n_per_class": 20},
        "gbdt": {"n_trees": 20, "min_leaf": 3},
    }
    (root / "config.json").write_text(json.dumps(config))
    return root


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Collects ``(status, criterion, detail)`` lines for the summary."""
    return request.config.stash.setdefault(_ACCEPTANCE, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for status, name, detail in lines:
        terminalreporter.write_line(f"{status:4s}  {name}: {detail}")
