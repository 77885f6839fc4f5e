"""Discrete platform configuration space.

A configuration fixes the number of active big and little cores and the two
cluster frequencies. The space is a finite grid; the online search walks its
one-step neighborhood graph (one knob moved by one level), so enumeration
order, indexing, and neighborhoods all live here and are deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KNOBS = ("n_big", "n_little", "f_big", "f_little")

DEFAULT_LEVELS = {
    "n_big": (1, 2, 3, 4),
    "n_little": (1, 2, 3, 4),
    "f_big": tuple(range(600, 2001, 200)),
    "f_little": tuple(range(600, 1401, 200)),
}


@dataclass(frozen=True, order=True)
class Configuration:
    """Active core counts per cluster and cluster frequencies in MHz."""

    n_big: int
    n_little: int
    f_big: int
    f_little: int

    def astuple(self) -> tuple[int, int, int, int]:
        return (self.n_big, self.n_little, self.f_big, self.f_little)

    def serialize(self) -> str:
        return f"{self.n_big},{self.n_little},{self.f_big},{self.f_little}"

    @staticmethod
    def parse(text: str) -> "Configuration":
        parts = text.strip().split(",")
        if len(parts) != 4:
            raise ValueError(f"expected 'nB,nL,fB,fL', got {text!r}")
        nb, nl, fb, fl = (int(p) for p in parts)
        return Configuration(nb, nl, fb, fl)


class ConfigSpace:
    """Ordered grid of configurations with a bijective index mapping.

    Index order is row-major over (n_big, n_little, f_big, f_little), so
    file formats and tie-breaking (always lowest index) are reproducible.
    """

    def __init__(self, levels: dict | None = None):
        self.levels = {k: tuple(v) for k, v in (levels or DEFAULT_LEVELS).items()}
        missing = [k for k in KNOBS if k not in self.levels]
        if missing:
            raise ValueError(f"missing level lists for knobs {missing}")
        for k in KNOBS:
            vals = self.levels[k]
            if len(vals) == 0 or list(vals) != sorted(set(vals)):
                raise ValueError(f"levels for {k} must be non-empty, sorted, unique")
        self._configs = [
            Configuration(nb, nl, fb, fl)
            for nb in self.levels["n_big"]
            for nl in self.levels["n_little"]
            for fb in self.levels["f_big"]
            for fl in self.levels["f_little"]
        ]
        self._index = {c: i for i, c in enumerate(self._configs)}
        self._level_pos = {
            k: {v: i for i, v in enumerate(self.levels[k])} for k in KNOBS
        }
        self._array = None
        self._nbr_table = None

    @property
    def size(self) -> int:
        return len(self._configs)

    def enumerate(self) -> list[Configuration]:
        return list(self._configs)

    def contains(self, c: Configuration) -> bool:
        return c in self._index

    def to_index(self, c: Configuration) -> int:
        try:
            return self._index[c]
        except KeyError:
            raise ValueError(f"configuration {c} not in space") from None

    def from_index(self, i: int) -> Configuration:
        return self._configs[i]

    def knob_level_index(self, c: Configuration, knob: str) -> int:
        if knob not in KNOBS:
            raise ValueError(f"unknown knob {knob!r}")
        return self._level_pos[knob][getattr(c, knob)]

    def level_count(self, knob: str) -> int:
        return len(self.levels[knob])

    @property
    def min_config(self) -> Configuration:
        return self._configs[0]

    @property
    def max_config(self) -> Configuration:
        return self._configs[-1]

    def neighbors(self, c: Configuration) -> list[Configuration]:
        """All configurations one knob-level away from c, in index order."""
        i = self.to_index(c)
        return [self._configs[j] for j in self.neighbor_table()[i]]

    def as_array(self) -> np.ndarray:
        """(size, 4) float array of knob values in index order."""
        if self._array is None:
            self._array = np.array([c.astuple() for c in self._configs], dtype=float)
            self._array.setflags(write=False)
        return self._array

    def neighbor_table(self) -> list[np.ndarray]:
        """Neighbor indices per configuration index, each sorted ascending."""
        if self._nbr_table is None:
            table = []
            for c in self._configs:
                out = []
                for knob in KNOBS:
                    pos = self._level_pos[knob][getattr(c, knob)]
                    vals = self.levels[knob]
                    for np_ in (pos - 1, pos + 1):
                        if 0 <= np_ < len(vals):
                            d = dict(zip(KNOBS, c.astuple()))
                            d[knob] = vals[np_]
                            out.append(self._index[Configuration(**d)])
                table.append(np.array(sorted(out), dtype=np.intp))
            self._nbr_table = table
        return self._nbr_table
