from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Tuple

import numpy as np


@dataclass(frozen=True, order=True)
class Configuration:
    """Simple finite configuration: a set of occupied site indices in [0, n_sites)."""

    n_sites: int
    occupied: Tuple[int, ...] = ()

    def __post_init__(self) -> None:
        occ = tuple(int(i) for i in self.occupied)
        if len(set(occ)) != len(occ):
            raise ValueError(f"Configuration has repeated sites: {occ}")
        if any(i < 0 or i >= self.n_sites for i in occ):
            raise ValueError(f"Site index out of range [0, {self.n_sites}): {occ}")
        object.__setattr__(self, "occupied", tuple(sorted(occ)))

    @classmethod
    def empty(cls, n_sites: int) -> "Configuration":
        return cls(n_sites, ())

    @classmethod
    def full(cls, n_sites: int) -> "Configuration":
        return cls(n_sites, tuple(range(n_sites)))

    @classmethod
    def from_bitmask(cls, mask: int, n_sites: int) -> "Configuration":
        return cls(n_sites, tuple(i for i in range(n_sites) if (mask >> i) & 1))

    @classmethod
    def from_indicator(cls, indicator: Iterable[bool]) -> "Configuration":
        ind = np.asarray(list(indicator), dtype=bool)
        return cls(int(ind.size), tuple(np.flatnonzero(ind).tolist()))

    @property
    def bitmask(self) -> int:
        mask = 0
        for i in self.occupied:
            mask |= 1 << i
        return mask

    @property
    def size(self) -> int:
        return len(self.occupied)

    def __len__(self) -> int:
        return len(self.occupied)

    def __contains__(self, site: object) -> bool:
        return site in self.occupied

    def indicator(self) -> np.ndarray:
        ind = np.zeros(self.n_sites, dtype=bool)
        ind[list(self.occupied)] = True
        return ind

    def vacant(self) -> Tuple[int, ...]:
        occ = set(self.occupied)
        return tuple(i for i in range(self.n_sites) if i not in occ)

    def add(self, site: int) -> "Configuration":
        if site in self.occupied:
            raise ValueError(f"Site {site} is already occupied")
        return Configuration(self.n_sites, self.occupied + (site,))

    def remove(self, site: int) -> "Configuration":
        if site not in self.occupied:
            raise ValueError(f"Site {site} is not occupied")
        return Configuration(self.n_sites, tuple(i for i in self.occupied if i != site))

    def move(self, source: int, target: int) -> "Configuration":
        return self.remove(source).add(target)


@lru_cache(maxsize=32)
def occupancy_matrix(n_sites: int) -> np.ndarray:
    """Row b is the occupancy indicator of the configuration with bitmask b."""
    masks = np.arange(1 << n_sites, dtype=np.int64)
    occ = ((masks[:, None] >> np.arange(n_sites)) & 1).astype(bool)
    occ.setflags(write=False)
    return occ


def particle_numbers(n_sites: int) -> np.ndarray:
    return occupancy_matrix(n_sites).sum(axis=1)


def indices_of(mask: int, n_sites: int) -> list[int]:
    return [i for i in range(n_sites) if (mask >> i) & 1]
