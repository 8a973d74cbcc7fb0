"""
Telemetry preprocessing: CSV ingestion, MinMax scaling fitted on the training
split, overlapping windows and per-sub-window statistical features.

Window files are numpy ``.npz`` archives with these entries:

    windows    float64 [N, T, D]  normalised (and optionally featurised) windows
    labels     unicode [N]        driver id of each window
    offsets    int64   [N]        first sample index of the window in its record
    record_ids unicode [N]        record each window was cut from
    holdout    bool    [N]        True for windows in the held-out (test) split
    channels   unicode [D]        feature names
    __stats__  unicode scalar     JSON of the MinMax statistics
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from sklearn.model_selection import StratifiedKFold, train_test_split

from .exceptions import DataError, ShapeError

logger = logging.getLogger(__name__)

TIMESTAMP_COLUMN = 'timestamp'
DRIVER_COLUMN = 'driver_id'
RECORD_COLUMN = 'record_id'
STATISTICS = ('min', 'max', 'mean', 'q25', 'q50', 'q75')


@dataclass
class TimeSeriesRecord:
    driver_id: str
    channels: pd.DataFrame
    sample_rate: float
    record_id: str = ''
    attrs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise DataError(f"record {self.record_id or self.driver_id}: sample rate must be positive")

    @property
    def channel_names(self):
        return [str(c) for c in self.channels.columns]

    @property
    def matrix(self):
        return self.channels.to_numpy(dtype=np.float64)

    def __len__(self):
        return len(self.channels)


@dataclass(frozen=True)
class WindowedSample:
    matrix: np.ndarray
    label: str
    offset: int
    record_id: str = ''


@dataclass(frozen=True)
class NormalizationStats:
    minimum: np.ndarray
    maximum: np.ndarray
    channel_names: tuple = ()

    def __post_init__(self):
        if self.minimum.shape != self.maximum.shape:
            raise ShapeError("min and max must have one entry per channel")
        if (self.maximum < self.minimum).any():
            raise DataError("max must be at least min for every channel")

    def to_dict(self):
        return {
            'channels': list(self.channel_names),
            'min': self.minimum.tolist(),
            'max': self.maximum.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(np.asarray(data['min'], dtype=np.float64),
                   np.asarray(data['max'], dtype=np.float64),
                   tuple(data.get('channels', ())))


def load_csv(path, channels=None, sample_rate=None):
    """
    Read one CSV file, or every ``*.csv`` in a directory, into records.

    Rows are grouped by ``record_id`` when that column exists, otherwise
    each (file, driver) pair is one record. The sample rate is inferred from
    the median timestamp step unless given.
    """
    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob('*.csv'))
    elif path.exists():
        files = [path]
    else:
        raise DataError(f"input not found: {path}")
    if not files:
        raise DataError(f"no CSV files in {path}")

    records = []
    for csv_path in files:
        try:
            frame = pd.read_csv(csv_path, dtype={DRIVER_COLUMN: str, RECORD_COLUMN: str})
        except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError, ValueError) as exc:
            raise DataError(f"{csv_path}: unreadable CSV ({exc})") from None
        if DRIVER_COLUMN not in frame.columns:
            raise DataError(f"{csv_path}: missing '{DRIVER_COLUMN}' column")
        reserved = {TIMESTAMP_COLUMN, DRIVER_COLUMN, RECORD_COLUMN}
        names = list(channels) if channels else [c for c in frame.columns if c not in reserved]
        missing = [c for c in names if c not in frame.columns]
        if missing:
            raise DataError(f"{csv_path}: missing channel columns {missing}")
        group_key = RECORD_COLUMN if RECORD_COLUMN in frame.columns else DRIVER_COLUMN
        for key, rows in frame.groupby(group_key, sort=True):
            drivers = rows[DRIVER_COLUMN].unique()
            if len(drivers) != 1:
                raise DataError(f"{csv_path}: record {key} mixes drivers {list(drivers)}")
            rate = sample_rate or _infer_rate(rows, csv_path)
            record_id = str(key) if group_key == RECORD_COLUMN else f'{csv_path.stem}:{key}'
            try:
                values = rows[names].astype(np.float64).reset_index(drop=True)
            except (TypeError, ValueError) as exc:
                raise DataError(f"{csv_path}: record {record_id} has a non-numeric channel value ({exc})") from None
            if not np.isfinite(values.to_numpy()).all():
                raise DataError(f"{csv_path}: record {record_id} has missing or non-finite values")
            records.append(TimeSeriesRecord(str(drivers[0]), values, float(rate), record_id))
    logger.info(f"Loaded {len(records)} records from {len(files)} file(s)")
    return records


def _infer_rate(rows, csv_path):
    if TIMESTAMP_COLUMN not in rows.columns or len(rows) < 2:
        raise DataError(f"{csv_path}: cannot infer sample rate without timestamps; pass sample_rate")
    try:
        stamps = rows[TIMESTAMP_COLUMN].to_numpy(dtype=np.float64)
    except (TypeError, ValueError):
        raise DataError(f"{csv_path}: timestamps must be numeric seconds") from None
    step = float(np.median(np.diff(stamps)))
    if step <= 0:
        raise DataError(f"{csv_path}: timestamps must increase")
    return 1.0 / step


def fit_minmax(data, channel_names=()):
    """Per-channel extrema over training records (or raw [L, D] matrices)."""
    matrices = [r.matrix if isinstance(r, TimeSeriesRecord) else np.asarray(r, dtype=np.float64)
                for r in data]
    if not matrices:
        raise DataError("cannot fit normalisation on an empty training split")
    if not channel_names and isinstance(data[0], TimeSeriesRecord):
        channel_names = data[0].channel_names
    stacked = np.concatenate([m.reshape(-1, m.shape[-1]) for m in matrices], axis=0)
    return NormalizationStats(stacked.min(axis=0), stacked.max(axis=0), tuple(channel_names))


def apply_minmax(x, stats):
    """(x - min) / (max - min) clamped to [0, 1]; constant channels map to 0."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != stats.minimum.shape[0]:
        raise ShapeError(f"{x.shape[-1]} channels but statistics for {stats.minimum.shape[0]}")
    span = stats.maximum - stats.minimum
    degenerate = span == 0
    scaled = (x - stats.minimum) / np.where(degenerate, 1.0, span)
    scaled = np.where(degenerate, 0.0, scaled)
    return np.clip(scaled, 0.0, 1.0)


def window_length(window_seconds, sample_rate):
    length = int(round(window_seconds * sample_rate))
    if length < 1:
        raise DataError(f"{window_seconds}s at {sample_rate} Hz is shorter than one sample")
    return length


def window_stride(length, overlap):
    if not 0 <= overlap < 1:
        raise DataError(f"overlap must be in [0, 1), got {overlap}")
    return max(1, int(round(length * (1 - overlap))))


def slice_windows(record, window_seconds=30, overlap=0.5):
    """Overlapping windows of ``record``; a trailing partial window is dropped."""
    length = window_length(window_seconds, record.sample_rate)
    stride = window_stride(length, overlap)
    total = len(record)
    if total < length:
        logger.warning(f"Record {record.record_id or record.driver_id} has {total} samples, "
                       f"fewer than one {length}-sample window; skipped")
        return []
    matrix = record.matrix
    count = (total - length) // stride + 1
    return [
        WindowedSample(matrix[start:start + length].copy(), record.driver_id, start, record.record_id)
        for start in range(0, count * stride, stride)
    ]


def stat_features(window, sub_windows=6):
    """
    Split a [T, D] window into ``sub_windows`` consecutive pieces and emit, per
    piece and channel, min, max, mean and the 25/50/75% quantiles (linear
    interpolation between order statistics). Result: [sub_windows, 6 * D],
    grouped by channel.
    """
    window = np.asarray(window, dtype=np.float64)
    steps, channels = window.shape
    if sub_windows < 1 or sub_windows > steps:
        raise DataError(f"cannot cut {sub_windows} sub-windows from a {steps}-step window")
    if steps % sub_windows:
        raise DataError(f"{sub_windows} sub-windows do not divide a {steps}-step window")
    pieces = window.reshape(sub_windows, steps // sub_windows, channels)
    q25, q50, q75 = np.quantile(pieces, [0.25, 0.5, 0.75], axis=1, method='linear')
    stats = np.stack([pieces.min(axis=1), pieces.max(axis=1), pieces.mean(axis=1), q25, q50, q75], axis=-1)
    return stats.reshape(sub_windows, channels * len(STATISTICS))


def stat_feature_names(channel_names):
    return [f'{name}_{stat}' for name in channel_names for stat in STATISTICS]


def _labels(samples):
    return [s.label for s in samples]


def split(samples, train_fraction=0.8, seed=0):
    """Stratified, seeded train/test split over windows."""
    samples = list(samples)
    if not samples:
        raise DataError("nothing to split")
    if not 0 < train_fraction < 1:
        raise DataError(f"train fraction must be in (0, 1), got {train_fraction}")
    labels = _labels(samples)
    stratify = labels if len(set(labels)) > 1 else None
    try:
        train_idx, test_idx = train_test_split(
            np.arange(len(samples)), train_size=train_fraction, random_state=seed,
            shuffle=True, stratify=stratify,
        )
    except ValueError as exc:
        raise DataError(f"cannot split {len(samples)} windows: {exc}") from exc
    return [samples[i] for i in sorted(train_idx)], [samples[i] for i in sorted(test_idx)]


def kfold(samples, k=5, seed=0):
    """``k`` stratified (train, test) folds; test parts partition ``samples``."""
    samples = list(samples)
    labels = _labels(samples)
    try:
        splitter = StratifiedKFold(n_splits=k, shuffle=True, random_state=seed)
        folds = list(splitter.split(np.zeros(len(samples)), labels))
    except ValueError as exc:
        raise DataError(f"cannot make {k} folds from {len(samples)} windows: {exc}") from exc
    return [([samples[i] for i in train], [samples[i] for i in test]) for train, test in folds]


@dataclass
class WindowSet:
    windows: np.ndarray
    labels: np.ndarray
    offsets: np.ndarray
    record_ids: np.ndarray
    holdout: np.ndarray
    channel_names: tuple
    stats: NormalizationStats = None

    def __post_init__(self):
        count = len(self.windows)
        for name in ('labels', 'offsets', 'record_ids', 'holdout'):
            if len(getattr(self, name)) != count:
                raise ShapeError(f"window set: {name} has {len(getattr(self, name))} entries for {count} windows")

    def __len__(self):
        return len(self.windows)

    @property
    def window_length(self):
        return self.windows.shape[1]

    @property
    def channel_count(self):
        return self.windows.shape[2]

    @property
    def class_ids(self):
        return sorted(set(self.labels.tolist()))

    def samples(self, part='all'):
        if part == 'train':
            mask = ~self.holdout
        elif part == 'test':
            mask = self.holdout
        elif part == 'all':
            mask = np.ones(len(self), dtype=bool)
        else:
            raise DataError(f"unknown split part {part!r}")
        return [
            WindowedSample(self.windows[i], str(self.labels[i]), int(self.offsets[i]), str(self.record_ids[i]))
            for i in np.flatnonzero(mask)
        ]

    @classmethod
    def from_samples(cls, samples, channel_names, holdout=None, stats=None):
        if not samples:
            raise DataError("no windows to store")
        return cls(
            windows=np.stack([s.matrix for s in samples]).astype(np.float64),
            labels=np.array([s.label for s in samples], dtype=str),
            offsets=np.array([s.offset for s in samples], dtype=np.int64),
            record_ids=np.array([s.record_id for s in samples], dtype=str),
            holdout=np.zeros(len(samples), dtype=bool) if holdout is None else np.asarray(holdout, dtype=bool),
            channel_names=tuple(channel_names),
            stats=stats,
        )


def save_windows(path, window_set):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    stats = json.dumps(window_set.stats.to_dict() if window_set.stats else {}, sort_keys=True)
    with open(path, 'wb') as fh:
        np.savez(fh, windows=window_set.windows, labels=window_set.labels, offsets=window_set.offsets,
                 record_ids=window_set.record_ids, holdout=window_set.holdout,
                 channels=np.array(window_set.channel_names, dtype=str), __stats__=np.array(stats))
    logger.info(f"Wrote {len(window_set)} windows to {path}")
    return path


def load_windows(path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"window file not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as archive:
            stats = json.loads(str(archive['__stats__']))
            return WindowSet(
                windows=archive['windows'].astype(np.float64),
                labels=archive['labels'],
                offsets=archive['offsets'],
                record_ids=archive['record_ids'],
                holdout=archive['holdout'],
                channel_names=tuple(archive['channels'].tolist()),
                stats=NormalizationStats.from_dict(stats) if stats else None,
            )
    except (KeyError, ValueError, OSError) as exc:
        raise DataError(f"unreadable window file {path}: {exc}") from exc


def preprocess_records(records, window_seconds=30, overlap=0.5, use_stat_features=False,
                       sub_windows=6, train_fraction=0.8, seed=0):
    """
    Window every record, hold out a stratified test split, fit MinMax on the
    training windows only, scale everything and optionally replace each
    window by its statistical features.
    """
    if not records:
        raise DataError("no records to preprocess")
    names = records[0].channel_names
    for record in records:
        if record.channel_names != names:
            raise DataError(f"record {record.record_id} has channels {record.channel_names}, expected {names}")
    lengths = {}
    for record in records:
        lengths.setdefault(window_length(window_seconds, record.sample_rate), set()).add(record.sample_rate)
    if len(lengths) > 1:
        rates = ', '.join(f'{sorted(r)} Hz -> {n} samples' for n, r in sorted(lengths.items()))
        raise DataError(f"records disagree on window length for {window_seconds}s windows ({rates}); "
                        "resample to one rate or pass sample_rate")
    samples = [w for record in records for w in slice_windows(record, window_seconds, overlap)]
    if not samples:
        raise DataError("no record is long enough for a single window")
    train, _ = split(samples, train_fraction, seed)
    train_keys = {(s.record_id, s.offset) for s in train}
    holdout = [(s.record_id, s.offset) not in train_keys for s in samples]
    stats = fit_minmax([s.matrix for s in train], names)

    processed = []
    for s in samples:
        matrix = apply_minmax(s.matrix, stats)
        if use_stat_features:
            matrix = stat_features(matrix, sub_windows)
        processed.append(WindowedSample(matrix, s.label, s.offset, s.record_id))
    channel_names = stat_feature_names(names) if use_stat_features else names
    logger.info(f"Preprocessed {len(records)} records into {len(processed)} windows "
                f"({sum(holdout)} held out), window shape {processed[0].matrix.shape}")
    return WindowSet.from_samples(processed, channel_names, holdout, stats)
