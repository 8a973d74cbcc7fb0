"""
Prototypical-network head: class prototypes are mean support embeddings and
queries are scored by a softmax over negative squared Euclidean distances.
"""
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from . import tensor as tn
from .exceptions import DataError, ShapeError
from .tensor import Tensor

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PrototypeSet:
    class_ids: tuple
    prototypes: Tensor  # [N, M]
    support_counts: tuple

    def __post_init__(self):
        if len(set(self.class_ids)) != len(self.class_ids) or len(self.class_ids) < 2:
            raise DataError(f"a prototype set needs at least 2 distinct classes, got {list(self.class_ids)}")
        if self.prototypes.ndim != 2 or self.prototypes.shape[0] != len(self.class_ids):
            raise ShapeError(f"prototypes {self.prototypes.shape} do not match {len(self.class_ids)} classes")

    @property
    def way(self):
        return len(self.class_ids)

    @property
    def dim(self):
        return self.prototypes.shape[1]

    def position(self, class_id):
        try:
            return self.class_ids.index(class_id)
        except ValueError:
            raise DataError(f"class {class_id!r} has no prototype") from None


def prototypes_from_batch(embeddings, labels):
    """Prototypes from a batch of support embeddings [S, M] and their S labels."""
    embeddings = tn.as_tensor(embeddings)
    if embeddings.ndim != 2 or embeddings.shape[0] != len(labels):
        raise ShapeError(f"{len(labels)} labels for support embeddings of shape {embeddings.shape}")
    class_ids = tuple(sorted(set(labels), key=str))
    labels = np.asarray(labels, dtype=object)
    rows, counts = [], []
    for class_id in class_ids:
        members = np.flatnonzero(labels == class_id)
        rows.append(tn.mean(tn.index(embeddings, members), axis=0))
        counts.append(len(members))
    return PrototypeSet(class_ids, tn.stack(rows), tuple(counts))


def compute_prototypes(support):
    """``support`` is a sequence of ``(embedding [M], class_id)`` pairs."""
    support = list(support)
    if not support:
        raise DataError("support set is empty")
    embeddings = tn.stack([tn.as_tensor(e) for e, _ in support])
    return prototypes_from_batch(embeddings, [c for _, c in support])


def squared_distances(queries, protos):
    """[Q, M] x [N, M] -> [Q, N] squared Euclidean distances."""
    if queries.shape[-1] != protos.dim:
        raise ShapeError(f"query dim {queries.shape[-1]} != prototype dim {protos.dim}")
    q = tn.reshape(queries, (queries.shape[0], 1, protos.dim))
    c = tn.reshape(protos.prototypes, (1, protos.way, protos.dim))
    diff = tn.sub(q, c)
    return tn.sum(tn.mul(diff, diff), axis=-1)


def _as_rows(query):
    query = tn.as_tensor(query)
    if query.ndim == 1:
        return tn.reshape(query, (1, query.shape[0])), True
    return query, False


def classify_query(query, protos):
    """Probabilities over ``protos.class_ids`` for one query [M] or a batch [Q, M]."""
    rows, single = _as_rows(query)
    probs = tn.softmax_lastdim(tn.scale(squared_distances(rows, protos), -1.0))
    return tn.reshape(probs, (protos.way,)) if single else probs


def predict(query, protos):
    """Nearest-prototype class ids for a batch [Q, M]."""
    rows, _ = _as_rows(query)
    with tn.inference_mode():
        distances = squared_distances(rows, protos).values
    return [protos.class_ids[i] for i in distances.argmin(axis=1)]


def episode_loss_batch(embeddings, labels, protos):
    """Mean negative log-probability of the true class over query rows [Q, M]."""
    embeddings = tn.as_tensor(embeddings)
    if embeddings.shape[0] != len(labels):
        raise ShapeError(f"{len(labels)} labels for query embeddings of shape {embeddings.shape}")
    targets = np.zeros((len(labels), protos.way))
    for row, label in enumerate(labels):
        targets[row, protos.position(label)] = 1.0
    log_probs = tn.log_softmax_lastdim(tn.scale(squared_distances(embeddings, protos), -1.0))
    picked = tn.sum(tn.mul(log_probs, targets), axis=-1)
    return tn.scale(tn.mean(picked), -1.0)


def episode_loss(queries, protos):
    """``queries`` is a sequence of ``(embedding [M], true_class)`` pairs."""
    queries = list(queries)
    if not queries:
        raise DataError("query set is empty")
    embeddings = tn.stack([tn.as_tensor(e) for e, _ in queries])
    return episode_loss_batch(embeddings, [c for _, c in queries], protos)


def save_registry(path, protos):
    """CSV with ``class_id`` followed by one column per embedding dimension."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(protos.prototypes.values, columns=[f'e{i}' for i in range(protos.dim)])
    frame.insert(0, 'class_id', [str(c) for c in protos.class_ids])
    frame.to_csv(path, index=False, float_format='%.17g')
    logger.info(f"Wrote {protos.way} prototypes to {path}")
    return path


def load_registry(path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"prototype registry not found: {path}")
    frame = pd.read_csv(path, dtype={'class_id': str})
    columns = [c for c in frame.columns if c != 'class_id']
    if not columns:
        raise DataError(f"prototype registry {path} has no embedding columns")
    # support sizes are not part of the registry; each row counts as one enrolled prototype
    return PrototypeSet(tuple(frame['class_id']), Tensor(frame[columns].to_numpy()), (1,) * len(frame))
