"""Deterministic synthetic building-telemetry benchmark.

Rows imitate variable-air-volume controller readings.  A controller runs in
comfort mode on weekdays from 06:00 to 22:00 and in eco mode otherwise, so
three controlled channels are bimodal with tight modes far apart.  Three
further channels are broad unimodal sensor readings.  Anomalies displace one
controlled channel by 6 to 10 within-mode standard deviations.
"""

from __future__ import annotations

import numpy as np

from .preprocess import Dataset

# name: (eco mean, comfort mean, within-mode std)
CONTROLLED = {
    "zone_temp_setpoint": (26.0, 21.0, 0.03),
    "supply_air_flow": (300.0, 800.0, 3.0),
    "damper_position": (20.0, 60.0, 0.25),
}
# name: (mean, std)
SENSORS = {
    "outside_air_temp": (18.0, 4.0),
    "reheat_valve": (50.0, 15.0),
    "static_pressure": (1.0, 0.2),
}
FEATURES = list(CONTROLLED) + list(SENSORS)
COLUMNS = ["dow", "hod", *FEATURES, "label"]
NORMAL_LABEL = "1"
ANOMALY_LABEL = "0"


def make_synthetic(n_normal: int = 5000, n_anomalies: int = 250, seed: int = 0,
                   sigma_range: tuple[float, float] = (6.0, 10.0)) -> Dataset:
    """Build the benchmark table; anomalous rows are labeled ``"0"``.

    Rows are shuffled, and the same ``seed`` always gives the same table.
    """
    if n_normal < 0 or n_anomalies < 0 or n_normal + n_anomalies == 0:
        raise ValueError("need a positive number of rows")
    rng = np.random.default_rng(seed)
    n = n_normal + n_anomalies
    dow = rng.integers(0, 7, n)
    hod = rng.integers(0, 24, n)
    comfort = (dow < 5) & (hod >= 6) & (hod < 22)

    cols = [dow.astype(float), hod.astype(float)]
    for eco, com, sd in CONTROLLED.values():
        cols.append(np.where(comfort, com, eco) + rng.normal(0.0, sd, n))
    for mean, sd in SENSORS.values():
        cols.append(rng.normal(mean, sd, n))
    values = np.stack(cols, axis=1)

    is_anomaly = np.zeros(n, dtype=bool)
    is_anomaly[rng.choice(n, n_anomalies, replace=False)] = True
    specs = list(CONTROLLED.values())
    for i in np.flatnonzero(is_anomaly):
        j = int(rng.integers(len(specs)))
        eco, com, sd = specs[j]
        centre = com if comfort[i] else eco
        shift = rng.uniform(*sigma_range) * sd * rng.choice([-1.0, 1.0])
        values[i, 2 + j] = centre + shift

    labels = np.where(is_anomaly, ANOMALY_LABEL, NORMAL_LABEL)
    return Dataset(COLUMNS[:-1], values, labels.astype(object), "label")
