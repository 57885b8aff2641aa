"""Finite jump-mark measures represented as weighted atoms."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class FiniteLevyMeasure:
    """A Lévy measure with finitely many atoms ``(mark, weight)``.

    Marks are stored as an ``(n_atoms, l)`` array and weights as ``(n_atoms,)``.
    Every weight is strictly positive and no mark is the zero vector.
    """

    marks: np.ndarray
    weights: np.ndarray
    dim: int = field(default=1)

    def __post_init__(self):
        marks = np.asarray(self.marks, dtype=float)
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if marks.size == 0:
            marks = marks.reshape(0, self.dim)
        elif marks.ndim == 1:
            marks = marks.reshape(-1, self.dim)
        if marks.ndim != 2 or marks.shape[1] != self.dim:
            raise ValueError(f"marks must have shape (n, {self.dim}), got {marks.shape}")
        if marks.shape[0] != weights.shape[0]:
            raise ValueError("marks and weights must have the same number of atoms")
        if not np.all(np.isfinite(marks)) or not np.all(np.isfinite(weights)):
            raise ValueError("atoms must be finite")
        if np.any(weights <= 0):
            raise ValueError("atom weights must be strictly positive")
        if marks.shape[0] and np.any(np.all(marks == 0.0, axis=1)):
            raise ValueError("marks must be nonzero (E excludes the origin)")
        marks.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "marks", marks)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_atoms(cls, atoms: Iterable[tuple[Sequence[float] | float, float]], dim: int = 1):
        marks, weights = [], []
        for mark, weight in atoms:
            marks.append(np.atleast_1d(np.asarray(mark, dtype=float)))
            weights.append(float(weight))
        if not marks:
            return cls(np.zeros((0, dim)), np.zeros(0), dim)
        return cls(np.vstack(marks), np.asarray(weights), dim)

    @classmethod
    def empty(cls, dim: int = 1):
        return cls(np.zeros((0, dim)), np.zeros(0), dim)

    @property
    def n_atoms(self) -> int:
        return int(self.weights.shape[0])

    def __len__(self):
        return self.n_atoms

    def __iter__(self):
        for a in range(self.n_atoms):
            yield self.marks[a], float(self.weights[a])

    def integrate(self, integrand: Callable[[np.ndarray], float]) -> float:
        """Sum ``weight * integrand(mark)`` over atoms in stored order."""
        total = 0.0
        for mark, weight in self:
            total += weight * float(integrand(mark))
        return total

    def total_mass(self) -> float:
        total = 0.0
        for w in self.weights:
            total += float(w)
        return total

    def small_jump_moment(self) -> float:
        """Integral of ``min(1, |e|^2)``; always finite for atomic measures."""
        return self.integrate(lambda e: min(1.0, float(np.dot(e, e))))

    def probabilities(self) -> np.ndarray:
        mass = self.total_mass()
        if mass == 0.0:
            return np.zeros(0)
        return self.weights / mass


def integrate(measure: FiniteLevyMeasure, integrand: Callable[[np.ndarray], float]) -> float:
    return measure.integrate(integrand)


def total_mass(measure: FiniteLevyMeasure) -> float:
    return measure.total_mass()
