"""Synthetic classification tasks.

Three generators cover the two model families:

* duplicate detection: does a token sequence contain a repeat? The
  positive class needs pairwise token comparison, which only attention
  can do in one layer, so it exercises the transformer.
* majority vote: is a binary sequence mostly ones?
* gaussian blobs: linearly separable (at spread 0) feature vectors for
  the MLP.

Every generator is deterministic: the train split draws from one seeded
stream and the held-out split from another, so a dataset is a pure
function of its arguments.
"""

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


class TaskKind(enum.Enum):
    DUPLICATE = "duplicate"
    MAJORITY = "majority"
    BLOBS = "blobs"

    @classmethod
    def from_string(cls, s):
        try:
            return cls(s.strip().lower())
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise ConfigurationError(
                f"unknown task {s!r}; expected one of {valid}"
            ) from None


@dataclass
class Dataset:
    """Train and held-out splits; inputs are token grids (int64) or
    feature rows (float64), labels are class indices."""

    train_inputs: np.ndarray
    train_labels: np.ndarray
    test_inputs: np.ndarray
    test_labels: np.ndarray

    def __post_init__(self):
        if len(self.train_inputs) != len(self.train_labels):
            raise ConfigurationError("train inputs/labels count mismatch")
        if len(self.test_inputs) != len(self.test_labels):
            raise ConfigurationError("test inputs/labels count mismatch")


def _stream(seed, stream):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(
        [seed, stream])))


def _test_count(n):
    return max(1, n // 4)


def _gen_duplicate_split(rng, n, length, vocab):
    inputs = np.empty((n, length), dtype=np.int64)
    labels = np.empty(n, dtype=np.int64)
    for i in range(n):
        label = i % 2
        if label == 0:
            seq = rng.choice(vocab, size=length, replace=False)
        else:
            base = rng.choice(vocab, size=length - 1, replace=False)
            dup = base[rng.integers(length - 1)]
            seq = np.append(base, dup)
            rng.shuffle(seq)
        inputs[i] = seq
        labels[i] = label
    return inputs, labels


def gen_duplicate_task(seed, n, length, vocab):
    """Label 1 iff the sequence contains a repeated token.

    Negative examples sample `length` distinct tokens without
    replacement; positive examples sample length-1 distinct tokens,
    duplicate one uniformly at random and shuffle. Labels alternate, so
    class counts differ by at most one.
    """
    if n < 1:
        raise ConfigurationError(f"need at least one example, got n={n}")
    if length < 2:
        raise ConfigurationError(
            f"duplicate task needs length >= 2, got {length}"
        )
    if vocab <= length:
        raise ConfigurationError(
            f"vocab ({vocab}) must exceed length ({length}) so all-distinct "
            "sequences exist"
        )
    train = _gen_duplicate_split(_stream(seed, 1), n, length, vocab)
    test = _gen_duplicate_split(_stream(seed, 2), _test_count(n), length, vocab)
    return Dataset(*train, *test)


def _gen_majority_split(rng, n, length):
    inputs = rng.integers(0, 2, size=(n, length), dtype=np.int64)
    labels = (inputs.sum(axis=1) * 2 > length).astype(np.int64)
    return inputs, labels


def gen_majority_task(seed, n, length, vocab=2):
    """Label is the majority bit of a uniform random binary sequence."""
    if n < 1:
        raise ConfigurationError(f"need at least one example, got n={n}")
    if length < 1 or length % 2 == 0:
        raise ConfigurationError(
            f"majority task needs odd length, got {length}"
        )
    if vocab != 2:
        raise ConfigurationError(
            f"majority task is defined over a binary vocab, got {vocab}"
        )
    train = _gen_majority_split(_stream(seed, 1), n, length)
    test = _gen_majority_split(_stream(seed, 2), _test_count(n), length)
    return Dataset(*train, *test)


def _gen_blobs_split(rng, n, dim, classes, spread):
    inputs = np.empty((n, dim), dtype=np.float64)
    labels = np.empty(n, dtype=np.int64)
    for i in range(n):
        c = i % classes
        mean = np.zeros(dim)
        mean[c % dim] = 4.0 * c
        inputs[i] = mean + rng.normal(0.0, spread, size=dim)
        labels[i] = c
    return inputs, labels


def gen_blobs(seed, n, dim, classes, spread):
    """Gaussian clusters: class c centers at 4c times a cycling basis
    vector; spread 0 collapses each class onto its mean."""
    if n < 1:
        raise ConfigurationError(f"need at least one example, got n={n}")
    if dim < 1:
        raise ConfigurationError(f"dim must be >= 1, got {dim}")
    if classes < 2:
        raise ConfigurationError(f"classes must be >= 2, got {classes}")
    if spread < 0:
        raise ConfigurationError(f"spread must be >= 0, got {spread}")
    train = _gen_blobs_split(_stream(seed, 1), n, dim, classes, spread)
    test = _gen_blobs_split(_stream(seed, 2), _test_count(n), dim, classes,
                            spread)
    return Dataset(*train, *test)
