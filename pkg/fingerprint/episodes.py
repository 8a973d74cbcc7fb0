"""
N-way K-shot episodes and the known/unknown driver split.
"""
import logging
from dataclasses import dataclass
from pathlib import Path

import pandas as pd

from .exceptions import DataError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Episode:
    class_ids: tuple
    support: tuple
    query: tuple

    @property
    def way(self):
        return len(self.class_ids)

    @property
    def shot(self):
        return len(self.support) // self.way


class WindowPool:
    """Windows grouped by class, in a stable class order."""

    def __init__(self, samples):
        self.by_class = {}
        for sample in samples:
            self.by_class.setdefault(sample.label, []).append(sample)
        self.class_ids = sorted(self.by_class)

    def __len__(self):
        return sum(len(v) for v in self.by_class.values())

    def samples(self):
        return [s for c in self.class_ids for s in self.by_class[c]]

    def subset(self, class_ids):
        return WindowPool([s for c in sorted(class_ids) for s in self.by_class[c]])


def _as_pool(pool):
    return pool if isinstance(pool, WindowPool) else WindowPool(pool)


def check_pool(pool, way, shot, queries):
    pool = _as_pool(pool)
    needed = shot + queries
    eligible = [c for c in pool.class_ids if len(pool.by_class[c]) >= needed]
    if way < 2 or shot < 1 or queries < 0:
        raise DataError(f"invalid episode shape: {way}-way {shot}-shot with {queries} queries")
    if len(eligible) < way:
        counts = {c: len(pool.by_class[c]) for c in pool.class_ids}
        raise DataError(
            f"pool cannot supply {way}-way episodes with {needed} windows per class: "
            f"{len(eligible)} eligible classes, windows per class {counts}"
        )
    return pool, eligible


def sample_episode(pool, way, shot, queries, rng):
    """Classes uniformly without replacement, then windows per class without replacement."""
    pool, eligible = check_pool(pool, way, shot, queries)
    chosen = sorted(rng.choice(len(eligible), size=way, replace=False))
    class_ids = tuple(eligible[i] for i in chosen)
    support, query = [], []
    for class_id in class_ids:
        members = pool.by_class[class_id]
        picks = rng.choice(len(members), size=shot + queries, replace=False)
        support.extend(members[i] for i in picks[:shot])
        query.extend(members[i] for i in picks[shot:])
    return Episode(class_ids, tuple(support), tuple(query))


def iter_episodes(pool, way, shot, queries, count, rng):
    pool = _as_pool(pool)
    for _ in range(count):
        yield sample_episode(pool, way, shot, queries, rng)


def split_known_unknown(pool, train_way, rng):
    """Known drivers: ``train_way`` random classes. Unknown drivers: all the rest."""
    pool = _as_pool(pool)
    total = len(pool.class_ids)
    if train_way < 2 or train_way >= total - 1:
        raise DataError(f"train way {train_way} must leave at least 2 of {total} classes unseen")
    known = sorted(pool.class_ids[i] for i in rng.choice(total, size=train_way, replace=False))
    unknown = [c for c in pool.class_ids if c not in known]
    logger.info(f"Known drivers {known}; unknown drivers {unknown}")
    return pool.subset(known), pool.subset(unknown)


def write_manifest(path, episodes):
    """CSV of episode_id, role, class_id, record_id, offset."""
    rows = []
    for episode_id, episode in enumerate(episodes):
        for role, samples in (('support', episode.support), ('query', episode.query)):
            for s in samples:
                rows.append({'episode_id': episode_id, 'role': role, 'class_id': s.label,
                             'record_id': s.record_id, 'offset': s.offset})
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows, columns=['episode_id', 'role', 'class_id', 'record_id', 'offset']).to_csv(path, index=False)
    return path
