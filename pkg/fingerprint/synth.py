"""
Seeded synthetic driving telemetry for desk-scale runs.

Channel j of driver i is ``a_ij * sin(2 pi f_ij t + phi_ij)`` plus AR(1)
noise with the driver's own coefficient ``rho_i``. ``separation`` scales how
far each driver's parameters sit from the shared base; 0 makes every driver
statistically identical.
"""
import json
import logging
from itertools import combinations
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.signal import lfilter

from .exceptions import DataError
from .preprocessing import DRIVER_COLUMN, RECORD_COLUMN, TIMESTAMP_COLUMN, TimeSeriesRecord

logger = logging.getLogger(__name__)

NOISE_SCALE = 0.2


def _driver_parameters(rng, drivers, channels, separation):
    base_amplitude = rng.uniform(0.5, 1.5, size=channels)
    base_frequency = rng.uniform(0.02, 0.1, size=channels)
    base_phase = rng.uniform(0.0, 2 * np.pi, size=channels)
    params = []
    for i in range(drivers):
        amplitude = base_amplitude * (1.0 + separation * rng.uniform(-0.6, 0.6, size=channels))
        frequency = base_frequency * (1.0 + separation * rng.uniform(-0.6, 0.6, size=channels))
        phase = base_phase + separation * rng.uniform(-np.pi, np.pi, size=channels)
        rho = float(np.clip(0.5 + separation * rng.uniform(-0.4, 0.4), 0.0, 0.95))
        params.append({
            'driver_id': f'driver_{i:02d}',
            'amplitude': np.abs(amplitude),
            'frequency': frequency,
            'phase': phase,
            'rho': rho,
        })
    return params


def _separation(params):
    if len(params) < 2:
        return 0.0
    vectors = [np.concatenate([p['amplitude'], p['frequency'] * 10, [p['rho']]]) for p in params]
    return float(min(np.linalg.norm(a - b) for a, b in combinations(vectors, 2)))


def synth_generate(drivers=10, seconds_per_driver=3015, seed=0, channels=6, sample_rate=1.0, separation=1.0):
    """One record per driver; parameters and noise are drawn from ``seed`` only."""
    if drivers < 1 or channels < 1:
        raise DataError("need at least one driver and one channel")
    if seconds_per_driver <= 0 or sample_rate <= 0:
        raise DataError("duration and sample rate must be positive")
    rng = np.random.default_rng(seed)
    params = _driver_parameters(rng, drivers, channels, separation)
    steps = int(round(seconds_per_driver * sample_rate))
    t = np.arange(steps) / sample_rate
    names = [f'ch{j}' for j in range(channels)]
    min_separation = _separation(params)

    records = []
    for p in params:
        columns = {}
        for j, name in enumerate(names):
            noise = lfilter([1.0], [1.0, -p['rho']], rng.normal(0.0, NOISE_SCALE, size=steps))
            columns[name] = p['amplitude'][j] * np.sin(2 * np.pi * p['frequency'][j] * t + p['phase'][j]) + noise
        attrs = {
            'amplitude': p['amplitude'].tolist(),
            'frequency': p['frequency'].tolist(),
            'phase': p['phase'].tolist(),
            'rho': p['rho'],
            'min_parameter_separation': min_separation,
        }
        records.append(TimeSeriesRecord(p['driver_id'], pd.DataFrame(columns), sample_rate,
                                        record_id=p['driver_id'], attrs=attrs))
    logger.info(f"Generated {drivers} synthetic drivers x {steps} samples "
                f"(minimum parameter separation {min_separation:.3f})")
    return records


def write_dataset(records, output_dir, seed=None, separation=None):
    """``telemetry.csv`` in the ingestion format plus ``telemetry.json`` metadata."""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    frames = []
    for record in records:
        frame = record.channels.copy()
        frame.insert(0, TIMESTAMP_COLUMN, np.arange(len(record)) / record.sample_rate)
        frame[DRIVER_COLUMN] = record.driver_id
        frame[RECORD_COLUMN] = record.record_id
        frames.append(frame)
    csv_path = output_dir / 'telemetry.csv'
    pd.concat(frames, ignore_index=True).to_csv(csv_path, index=False, float_format='%.17g')
    metadata = {
        'seed': seed,
        'separation': separation,
        'sample_rate': records[0].sample_rate,
        'drivers': {r.driver_id: r.attrs for r in records},
        'min_parameter_separation': records[0].attrs.get('min_parameter_separation'),
    }
    meta_path = output_dir / 'telemetry.json'
    meta_path.write_text(json.dumps(metadata, indent=2, sort_keys=True))
    logger.info(f"Wrote {sum(len(r) for r in records)} rows to {csv_path}")
    return csv_path, meta_path
