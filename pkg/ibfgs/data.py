"""Sample files, label masking and train/test splits.

The sample file format is one sample per line, ``<label> <index>:<value> ...`` with labels
``+1``/``1``/``-1`` and 1-based, strictly increasing feature indices. A line that starts with
an ``<index>:<value>`` token carries an unlabeled sample. Blank lines and ``#`` comments are
ignored.
"""
import math
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse

from .errors import EmptyLabeledSetError, ParseError
from .models import Dataset, RawSample, SplitSpec


_LABELS = {'+1': 1, '1': 1, '-1': -1}


def _parse_label(token: str, line: int) -> int:
    if token not in _LABELS:
        raise ParseError(line, f'label {token!r} is not +1, 1 or -1')
    return _LABELS[token]


def _parse_feature(token: str, line: int) -> tuple[int, float]:
    index, colon, value = token.partition(':')
    if not colon:
        raise ParseError(line, f'feature {token!r} is missing a colon')
    try:
        index = int(index)
        value = float(value)
    except ValueError:
        raise ParseError(line, f'feature {token!r} is not numeric') from None
    if index < 1:
        raise ParseError(line, f'feature index {index} is below 1')
    if not math.isfinite(value):
        raise ParseError(line, f'feature {token!r} is not finite')
    return index, value


def parse_sparse_file(stream: Iterable[str]) -> list[RawSample]:
    samples = []
    for line_number, line in enumerate(stream, start=1):
        tokens = line.split('#', 1)[0].split()
        if not tokens:
            continue
        label = None
        if ':' not in tokens[0]:
            label = _parse_label(tokens[0], line_number)
            tokens = tokens[1:]
        features = {}
        last = 0
        for token in tokens:
            index, value = _parse_feature(token, line_number)
            if index <= last:
                raise ParseError(line_number, f'index {index} does not increase past {last}')
            features[index] = value
            last = index
        samples.append(RawSample(label=label, features=features))
    return samples


def serialize_sparse(samples: Iterable[RawSample]) -> str:
    lines = []
    for sample in samples:
        tokens = [] if sample.label is None else ['+1' if sample.label > 0 else '-1']
        tokens += [f'{index}:{sample.features[index]!r}' for index in sorted(sample.features)]
        lines.append(' '.join(tokens))
    return ''.join(line + '\n' for line in lines)


def max_index(samples: Iterable[RawSample]) -> int:
    return max((max(s.features) for s in samples if s.features), default=0)


def densify(samples: Sequence[RawSample], n: Optional[int] = None) -> tuple[np.ndarray, np.ndarray]:
    """Dense (features, labels) for ``samples``; unlabeled samples get label 0.

    ``n`` defaults to the largest feature index present and must be at least 1.
    """
    n = max(max_index(samples), 1) if n is None else n
    rows, cols, values = [], [], []
    for r, sample in enumerate(samples):
        for index, value in sample.features.items():
            if index > n:
                raise ValueError(f'feature index {index} exceeds dimension {n}')
            rows.append(r)
            cols.append(index - 1)
            values.append(value)
    matrix = scipy.sparse.csr_matrix((values, (rows, cols)), shape=(len(samples), n), dtype=float)
    labels = np.array([s.label or 0 for s in samples], dtype=float)
    return matrix.toarray(), labels


def _class_quotas(labels: np.ndarray, p: int) -> dict[int, int]:
    """Splits p labeled slots across the classes in proportion, by largest remainder."""
    classes, counts = np.unique(labels, return_counts=True)
    exact = p * counts / labels.shape[0]
    quotas = np.floor(exact).astype(int)
    for c in np.argsort(-(exact - quotas), kind='stable')[:p - int(quotas.sum())]:
        quotas[c] += 1
    return {int(cls): int(q) for cls, q in zip(classes, quotas)}


def mask_labels(samples: Sequence[RawSample], spec: SplitSpec, n: Optional[int] = None) -> Dataset:
    """Keeps the labels of a seeded, class-balanced ceil(fraction * count) subset.

    The labeled samples come first in the returned Dataset, each block in input order.
    """
    if any(s.label is None for s in samples):
        raise ValueError('label masking needs fully labeled samples')
    # The decimal reading of the fraction, so 0.07 * 100 gives 7 rather than 8.
    p = math.ceil(Fraction(repr(spec.labeled_fraction)) * len(samples))
    if p == 0:
        raise EmptyLabeledSetError(f'labeled fraction {spec.labeled_fraction} leaves no labeled sample')
    features, labels = densify(samples, n)

    rng = np.random.default_rng(spec.seed)
    chosen = []
    for cls, quota in _class_quotas(labels, p).items():
        members = np.flatnonzero(labels == cls)
        chosen.append(rng.permutation(members)[:quota])
    labeled = np.sort(np.concatenate(chosen))
    unlabeled = np.setdiff1d(np.arange(len(samples)), labeled)
    order = np.concatenate([labeled, unlabeled])
    return Dataset(features=features[order], labels=labels[labeled])


def kfold_split(samples: Sequence, fold_count: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """(train, test) index pairs; the test folds partition a seeded permutation of the samples."""
    count = len(samples)
    if not 1 <= fold_count <= count:
        raise ValueError(f'fold_count must be between 1 and {count}, got {fold_count}')
    permutation = np.random.default_rng(seed).permutation(count)
    folds = np.array_split(permutation, fold_count)
    splits = []
    for k, test in enumerate(folds):
        train = np.concatenate([f for j, f in enumerate(folds) if j != k]) if fold_count > 1 else test
        splits.append((np.sort(train), np.sort(test)))
    return splits


def fixed_split(count: int, train_count: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if not 1 <= train_count < count:
        raise ValueError(f'train_count must be between 1 and {count - 1}, got {train_count}')
    permutation = np.random.default_rng(seed).permutation(count)
    return np.sort(permutation[:train_count]), np.sort(permutation[train_count:])


def generate_gaussian_pair(n: int, count: int, separation: float, seed: int) -> list[RawSample]:
    """Two unit-variance Gaussian classes with means +/- (separation / 2) along a random unit direction."""
    if n < 1 or count < 2:
        raise ValueError(f'need n >= 1 and count >= 2, got n={n}, count={count}')
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal(n)
    direction /= np.linalg.norm(direction)
    labels = np.where(np.arange(count) < (count + 1) // 2, 1, -1)
    labels = rng.permutation(labels)
    points = rng.standard_normal((count, n)) + np.outer(labels * separation / 2.0, direction)
    return [
        RawSample(label=int(label), features={j + 1: float(x) for j, x in enumerate(point) if x != 0.0})
        for label, point in zip(labels, points)
    ]


def min_max_scale(train: np.ndarray, test: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Maps each training column onto [0, 1] and applies the same map to ``test``.

    Constant training columns map to 0.
    """
    low = train.min(axis=0)
    span = train.max(axis=0) - low
    constant = span == 0.0
    span = np.where(constant, 1.0, span)

    def scale(a: np.ndarray) -> np.ndarray:
        return np.where(constant, 0.0, (a - low) / span)

    return scale(train), scale(test)
