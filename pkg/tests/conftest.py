import numpy as np
import pandas as pd
import pytest

from bhpsensor import conditioning as C
from bhpsensor import synthgen

# Fault mix used wherever a realistic faulted field is needed.
FAULT_RATES = {"null": 0.005, "shut_in": 0.004, "short_open": 0.003, "frozen": 0.001, "outlier": 0.002}


def make_frame(rows):
    """Small hand-written well frame; unspecified channels get plausible constants."""
    base = {
        "bhp": 400.0, "bht": 90.0, "whp": 200.0, "wht": 50.0, "choke_up_p": 40.0, "choke_up_t": 40.0,
        "choke_aperture": 60.0, "q_oil": 3000.0, "q_gas": 800.0, "q_water": 300.0, "q_gaslift": 0.0,
        "depth_pdg": 4800.0, "open_hours": 24.0, "quality_flags": "",
    }
    out = []
    for r in rows:
        rec = dict(base)
        rec.update(r)
        out.append(rec)
    frame = pd.DataFrame(out)
    frame["date"] = pd.to_datetime(frame["date"])
    return frame


@pytest.fixture(scope="session")
def field1_faulted():
    cfg = synthgen.GenConfig(seed=0, fault_rates=FAULT_RATES)
    ds, ledger = synthgen.generate(cfg)
    return cfg, ds, ledger


@pytest.fixture(scope="session")
def small_field():
    """20 wells x 200 days, no faults: fast material for training tests."""
    cfg = synthgen.GenConfig(n_wells=20, n_days=200, seed=5)
    ds, _ = synthgen.generate(cfg)
    return C.condition(ds, C.ConditioningConfig(n_heldout=4, test_days=40, iqr_exceptions=("q_gaslift",)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
