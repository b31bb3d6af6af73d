"""Input validation helpers used by the estimators and functional ops."""

from __future__ import annotations

import types

import numpy as np


def check_positive(name, value, minimum=1):
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value!r}")
    return value


def check_in_interval(name, value, lo, hi, *, lo_open=False):
    ok = (value > lo if lo_open else value >= lo) and value <= hi
    if not ok:
        bracket = "(" if lo_open else "["
        raise ValueError(f"{name} must be in {bracket}{lo}, {hi}], got {value!r}")
    return value


def check_rng(seed) -> np.random.Generator:
    """Turn a seed (or an existing Generator) into a numpy Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def as_restartable(sentences):
    """Make sure a sentence source can be iterated more than once.

    Multi-epoch trainers re-scan their input; a bare generator would be
    exhausted after the first pass, so it is materialized into a list.
    Lists, tuples and reader objects with a fresh ``__iter__`` pass through.
    """
    if isinstance(sentences, (types.GeneratorType, map, filter, zip)):
        return list(sentences)
    if iter(sentences) is sentences:  # generic one-shot iterator
        return list(sentences)
    return sentences
