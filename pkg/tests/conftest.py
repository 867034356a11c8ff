import numpy as np
import pytest

from tdimpute.panel import PanelDataset, PatientSeries, VariableMeta


def make_panel(values_per_patient, timestamps=None, names=None):
    """Panel from a list of (t_i, D) arrays (NaN = missing)."""
    values_per_patient = [np.asarray(v, dtype=np.float64)
                          for v in values_per_patient]
    d = values_per_patient[0].shape[1]
    if names is None:
        names = [f"v{j + 1}" for j in range(d)]
    patients = []
    for i, vals in enumerate(values_per_patient):
        ts = (np.arange(vals.shape[0], dtype=np.float64)
              if timestamps is None else np.asarray(timestamps[i], dtype=np.float64))
        patients.append(PatientSeries(f"p{i + 1}", ts, vals))
    return PanelDataset(tuple(patients), tuple(VariableMeta(n) for n in names))


@pytest.fixture
def small_panel():
    nan = np.nan
    return make_panel([
        [[5.0, nan], [nan, 3.0], [7.0, nan]],
        [[nan, 2.0], [1.0, nan]],
    ])


def random_panel(rng, n_patients=None, max_rows=8, n_vars=None, missing=0.4):
    """Random ragged panel with irregular timestamps."""
    n_patients = n_patients or int(rng.integers(1, 5))
    n_vars = n_vars or int(rng.integers(2, 5))
    values = []
    timestamps = []
    for _ in range(n_patients):
        t = int(rng.integers(1, max_rows + 1))
        vals = rng.normal(size=(t, n_vars))
        vals[rng.random((t, n_vars)) < missing] = np.nan
        values.append(vals)
        ts = np.sort(rng.choice(np.arange(3 * max_rows), size=t, replace=False))
        timestamps.append(ts.astype(np.float64))
    return make_panel(values, timestamps)
