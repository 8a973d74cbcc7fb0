"""
Stage-1 classifier training, Stage-2 episodic training and their evaluations.
"""
import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.stats import binomtest

from . import encoder as enc
from . import tensor as tn
from .episodes import WindowPool, check_pool, sample_episode
from .exceptions import DataError, NumericError
from .optim import AdamState, step_encoder
from .preprocessing import kfold
from .protonet import episode_loss_batch, predict, prototypes_from_batch

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainingConfig:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 150
    batch_size: int = 32
    way: int = 10
    shot: int = 5
    queries: int = 5
    episodes_per_epoch: int = 200
    proto_epochs: int = 50

    def adam(self):
        return AdamState(lr=self.lr, beta1=self.beta1, beta2=self.beta2, epsilon=self.adam_eps)


@dataclass
class EpochStats:
    epoch: int
    loss: float
    accuracy: float


@dataclass
class TrainReport:
    epochs: list = field(default_factory=list)
    param_count: int = 0
    test_accuracy: float = None
    test_accuracy_std: float = None
    fold_accuracies: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            'epochs': [vars(e) for e in self.epochs],
            'param_count': self.param_count,
            'test_accuracy': self.test_accuracy,
            'timings': self.timings,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            epochs=[EpochStats(**e) for e in data['epochs']],
            param_count=data['param_count'],
            test_accuracy=data['test_accuracy'],
            timings=dict(data['timings']),
        )

    def summary_line(self):
        parts = [f'params={self.param_count}']
        if self.epochs:
            last = self.epochs[-1]
            parts.append(f'final_loss={last.loss:.6f}')
            parts.append(f'final_accuracy={last.accuracy:.6f}')
        if self.fold_accuracies:
            parts.append(f'cv={format_mean_std(self.test_accuracy, self.test_accuracy_std)}')
            parts.append('folds=' + ','.join(f'{a:.6f}' for a in self.fold_accuracies))
        elif self.test_accuracy is not None:
            parts.append(f'test_accuracy={self.test_accuracy:.6f}')
        return ' '.join(parts)


@dataclass
class EpisodeEvaluation:
    way: int
    shot: int
    queries: int
    accuracies: list
    correct: int
    total: int

    @property
    def episodes(self):
        return len(self.accuracies)

    @property
    def mean(self):
        return float(np.mean(self.accuracies))

    @property
    def std(self):
        return float(np.std(self.accuracies))

    @property
    def chance(self):
        return 1.0 / self.way

    @property
    def p_value(self):
        """One-sided binomial test of pooled query accuracy against chance."""
        return float(binomtest(self.correct, self.total, self.chance, alternative='greater').pvalue)

    def as_row(self):
        return {'way': self.way, 'shot': self.shot, 'queries': self.queries, 'episodes': self.episodes,
                'accuracy': self.mean, 'std': self.std, 'chance': self.chance, 'p_value': self.p_value}


def at_least(higher, lower, margin=0.02, alpha=0.05):
    """
    True when ``higher`` scores at least ``lower``: ahead by ``margin`` or
    more, or not significantly behind under a paired sign test over episodes.
    """
    if higher.mean - lower.mean >= margin:
        return True
    pairs = list(zip(higher.accuracies, lower.accuracies))
    wins = sum(a > b for a, b in pairs)
    losses = sum(a < b for a, b in pairs)
    if wins >= losses:
        return True
    return binomtest(wins, wins + losses, 0.5).pvalue >= alpha


def format_mean_std(mean, std):
    return f'{mean * 100:.1f}({std * 100:.2f})'


def _stack(samples):
    return np.stack([s.matrix for s in samples]).astype(np.float64)


def _check_loss(loss, where):
    value = loss.item()
    if not np.isfinite(value):
        raise NumericError(f"non-finite loss during {where}")
    return value


def cross_entropy(logits, targets):
    """Mean negative log-likelihood of integer ``targets`` under ``logits`` [B, C]."""
    onehot = np.zeros(logits.shape)
    onehot[np.arange(len(targets)), targets] = 1.0
    picked = tn.sum(tn.mul(tn.log_softmax_lastdim(logits), onehot), axis=-1)
    return tn.scale(tn.mean(picked), -1.0)


def train_classifier(samples, encoder_config, training, seed, eval_samples=None):
    """Minimise cross-entropy of the softmax head over shuffled mini-batches."""
    samples = list(samples)
    if not samples:
        raise DataError("cannot train on an empty dataset")
    class_ids = sorted({s.label for s in samples})
    config = replace(encoder_config, class_count=len(class_ids))
    params = enc.init(config, seed)
    params.metadata.update({'class_ids': class_ids, 'seed': seed, 'stage': 'classifier'})
    state = training.adam()
    rng = np.random.default_rng([seed, 1])
    lookup = {c: i for i, c in enumerate(class_ids)}
    x = _stack(samples)
    y = np.array([lookup[s.label] for s in samples])

    report = TrainReport(param_count=enc.param_count(params))
    started = time.perf_counter()
    for epoch in range(1, training.epochs + 1):
        order = rng.permutation(len(samples))
        total_loss, correct = 0.0, 0
        for lo in range(0, len(order), training.batch_size):
            batch = order[lo:lo + training.batch_size]
            params.zero_grad()
            scores = enc.logits(x[batch], params)
            loss = cross_entropy(scores, y[batch])
            total_loss += _check_loss(loss, f'epoch {epoch}') * len(batch)
            correct += int((scores.values.argmax(axis=-1) == y[batch]).sum())
            tn.backward(loss)
            step_encoder(params, state)
        stats = EpochStats(epoch, total_loss / len(samples), correct / len(samples))
        report.epochs.append(stats)
        logger.info(f"[classifier] epoch {epoch}/{training.epochs} loss={stats.loss:.4f} acc={stats.accuracy:.4f}")
    report.timings['train_seconds'] = time.perf_counter() - started

    if eval_samples:
        started = time.perf_counter()
        report.test_accuracy = evaluate_classifier(params, eval_samples)
        report.timings['predict_seconds'] = time.perf_counter() - started
        logger.info(f"[classifier] held-out accuracy {report.test_accuracy:.4f}")
    return params, report


def evaluate_classifier(params, samples, batch_size=256):
    samples = list(samples)
    if not samples:
        raise DataError("no windows to evaluate")
    class_ids = params.metadata.get('class_ids')
    if not class_ids:
        raise DataError("checkpoint has no class ids for its classifier head")
    unknown = sorted({s.label for s in samples} - set(class_ids))
    if unknown:
        raise DataError(f"evaluation windows contain classes unseen in training: {unknown}")
    lookup = {c: i for i, c in enumerate(class_ids)}
    x = _stack(samples)
    y = np.array([lookup[s.label] for s in samples])
    predictions = []
    with tn.inference_mode():
        for lo in range(0, len(samples), batch_size):
            predictions.append(enc.logits(x[lo:lo + batch_size], params).values.argmax(axis=-1))
    return float((np.concatenate(predictions) == y).mean())


def _episode_batch(episode):
    windows = _stack(episode.support + episode.query)
    support_labels = [s.label for s in episode.support]
    query_labels = [s.label for s in episode.query]
    return windows, support_labels, query_labels


def train_protonet(pool, encoder_config, training, seed):
    """``proto_epochs`` epochs of ``episodes_per_epoch`` N-way K-shot episodes each."""
    pool = pool if isinstance(pool, WindowPool) else WindowPool(pool)
    check_pool(pool, training.way, training.shot, training.queries)
    if training.queries < 1:
        raise DataError("episodic training needs at least one query per class")
    config = replace(encoder_config, class_count=0)
    params = enc.init(config, seed)
    params.metadata.update({'class_ids': pool.class_ids, 'seed': seed, 'stage': 'protonet',
                            'train_way': training.way})
    state = training.adam()
    rng = np.random.default_rng([seed, 2])

    report = TrainReport(param_count=enc.param_count(params))
    started = time.perf_counter()
    for epoch in range(1, training.proto_epochs + 1):
        losses, accuracies = [], []
        for _ in range(training.episodes_per_epoch):
            episode = sample_episode(pool, training.way, training.shot, training.queries, rng)
            windows, support_labels, query_labels = _episode_batch(episode)
            params.zero_grad()
            embeddings = enc.encode(windows, params)
            n_support = len(support_labels)
            support = tn.index(embeddings, np.arange(n_support))
            query = tn.index(embeddings, np.arange(n_support, len(windows)))
            protos = prototypes_from_batch(support, support_labels)
            loss = episode_loss_batch(query, query_labels, protos)
            losses.append(_check_loss(loss, f'episode in epoch {epoch}'))
            predicted = predict(query.detach(), protos)
            accuracies.append(float(np.mean([p == t for p, t in zip(predicted, query_labels)])))
            tn.backward(loss)
            step_encoder(params, state)
        stats = EpochStats(epoch, float(np.mean(losses)), float(np.mean(accuracies)))
        report.epochs.append(stats)
        logger.info(f"[protonet] epoch {epoch}/{training.proto_epochs} "
                    f"episodes={training.episodes_per_epoch} loss={stats.loss:.4f} acc={stats.accuracy:.4f}")
    report.timings['train_seconds'] = time.perf_counter() - started
    return params, report


def embed_samples(params, samples, batch_size=256):
    """Frozen embeddings [len(samples), M]."""
    samples = list(samples)
    rows = []
    with tn.inference_mode():
        for lo in range(0, len(samples), batch_size):
            rows.append(enc.encode(_stack(samples[lo:lo + batch_size]), params).values)
    return np.concatenate(rows, axis=0)


def evaluate_episodes(params, pool, way, shot, queries, episode_count, seed):
    """Mean query accuracy over ``episode_count`` fresh episodes drawn from ``pool``."""
    pool = pool if isinstance(pool, WindowPool) else WindowPool(pool)
    check_pool(pool, way, shot, queries)
    if queries < 1 or episode_count < 1:
        raise DataError("evaluation needs at least one query and one episode")
    members = pool.samples()
    embeddings = embed_samples(params, members)
    row_of = {id(s): i for i, s in enumerate(members)}
    rng = np.random.default_rng([seed, 3])

    accuracies, correct, total = [], 0, 0
    with tn.inference_mode():
        for _ in range(episode_count):
            episode = sample_episode(pool, way, shot, queries, rng)
            support = tn.Tensor(embeddings[[row_of[id(s)] for s in episode.support]])
            query = tn.Tensor(embeddings[[row_of[id(s)] for s in episode.query]])
            protos = prototypes_from_batch(support, [s.label for s in episode.support])
            hits = [p == s.label for p, s in zip(predict(query, protos), episode.query)]
            accuracies.append(float(np.mean(hits)))
            correct += int(np.sum(hits))
            total += len(hits)
    result = EpisodeEvaluation(way, shot, queries, accuracies, correct, total)
    logger.info(f"[episodes] {way}-way {shot}-shot accuracy {result.mean:.4f} "
                f"(std {result.std:.4f}, chance {result.chance:.3f}, p={result.p_value:.3g})")
    return result


def run_fold(samples, encoder_config, training, k, fold, seed):
    """Train on every fold but ``fold`` and report accuracy on ``fold``."""
    folds = kfold(samples, k, seed)
    train, test = folds[fold]
    logger.info(f"Fold {fold + 1}/{k}: {len(train)} training windows, {len(test)} test windows")
    return train_classifier(train, encoder_config, training, seed + fold, eval_samples=test)


def summarize_folds(reports):
    accuracies = [r.test_accuracy for r in reports]
    summary = TrainReport(
        epochs=reports[0].epochs,
        param_count=reports[0].param_count,
        test_accuracy=float(np.mean(accuracies)),
        test_accuracy_std=float(np.std(accuracies)),
        fold_accuracies=accuracies,
    )
    for report in reports:
        for phase, seconds in report.timings.items():
            summary.timings[phase] = summary.timings.get(phase, 0.0) + seconds
    return summary


def cross_validate(samples, encoder_config, training, k=5, seed=0):
    """``k`` train/evaluate rounds; the summary carries mean and spread of fold accuracy."""
    samples = list(samples)
    reports = [run_fold(samples, encoder_config, training, k, fold, seed)[1] for fold in range(k)]
    summary = summarize_folds(reports)
    logger.info(f"Cross-validated accuracy {format_mean_std(summary.test_accuracy, summary.test_accuracy_std)}")
    return summary


def write_report(path, report):
    """Per-epoch CSV (epoch, loss, accuracy) followed by a ``# `` summary line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame([vars(e) for e in report.epochs], columns=['epoch', 'loss', 'accuracy'])
    text = frame.to_csv(index=False, float_format='%.17g')
    path.write_text(text + f'# {report.summary_line()}\n')
    return path


def write_timings(path, report):
    path = Path(path)
    path.write_text(json.dumps(report.timings, indent=2, sort_keys=True))
    return path


def write_evaluations(path, evaluations):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame([e.as_row() for e in evaluations])
    frame.to_csv(path, index=False, float_format='%.17g')
    return path
