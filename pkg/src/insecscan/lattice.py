"""Finite security lattices.

Levels classify input/output channels and data. The default instantiation is
the two-point lattice with ``low`` below ``high``; chains of any length and
arbitrary finite partial orders can be configured. Every level carries an
integer code so level expressions can be evaluated like any other pure
expression.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence


@dataclass(frozen=True)
class SecLevel:
    name: str
    code: int

    def __str__(self) -> str:
        return self.name


class LatticeError(ValueError):
    pass


class SecLattice:
    """A finite lattice of security levels with a least and a greatest element.

    ``order`` lists the covering (or any generating) pairs ``(lo, hi)``; the
    reflexive-transitive closure is taken and the partial-order laws plus the
    existence of bottom/top are validated eagerly.
    """

    def __init__(self, names: Sequence[str], order: Iterable[tuple[str, str]]):
        if len(set(names)) != len(names) or not names:
            raise LatticeError("level names must be non-empty and unique")
        self._levels = tuple(SecLevel(n, i) for i, n in enumerate(names))
        self._by_name = {lv.name: lv for lv in self._levels}
        n = len(names)
        leq = [[i == j for j in range(n)] for i in range(n)]
        for lo, hi in order:
            leq[self._by_name[lo].code][self._by_name[hi].code] = True
        # transitive closure
        for k in range(n):
            for i in range(n):
                if leq[i][k]:
                    for j in range(n):
                        if leq[k][j]:
                            leq[i][j] = True
        for i in range(n):
            for j in range(n):
                if i != j and leq[i][j] and leq[j][i]:
                    raise LatticeError("order is not antisymmetric")
        self._leq = leq
        bottoms = [i for i in range(n) if all(leq[i][j] for j in range(n))]
        tops = [j for j in range(n) if all(leq[i][j] for i in range(n))]
        if not bottoms or not tops:
            raise LatticeError("lattice needs least and greatest elements")
        self.bottom = self._levels[bottoms[0]]
        self.top = self._levels[tops[0]]

    @classmethod
    def two_point(cls) -> "SecLattice":
        return cls(("low", "high"), [("low", "high")])

    @classmethod
    def chain(cls, names: Sequence[str]) -> "SecLattice":
        return cls(names, [(a, b) for a, b in zip(names, names[1:])])

    @property
    def levels(self) -> tuple[SecLevel, ...]:
        return self._levels

    def level(self, name: str) -> SecLevel:
        try:
            return self._by_name[name]
        except KeyError:
            raise LatticeError(f"unknown security level {name!r}") from None

    def has_level(self, name: str) -> bool:
        return name in self._by_name

    def by_code(self, code: int) -> SecLevel:
        # Codes produced by arbitrary expressions may fall outside the
        # lattice; clamp those to the greatest element (never visible below top).
        if 0 <= code < len(self._levels):
            return self._levels[code]
        return self.top

    def leq(self, a: SecLevel, b: SecLevel) -> bool:
        return self._leq[a.code][b.code]

    def leq_code(self, a: int, b: int) -> bool:
        return self.leq(self.by_code(a), self.by_code(b))


TWO_POINT = SecLattice.two_point()
