"""Particle species codes and the in-flight particle record."""

from dataclasses import dataclass

import numpy as np

GAMMA, MUON, NEUTRON, ELECTRON, ALPHA = 0, 1, 2, 3, 4
SPECIES = ("gamma", "muon", "neutron", "electron", "alpha")
SPECIES_CODE = {name: i for i, name in enumerate(SPECIES)}


def species_code(name):
    try:
        return SPECIES_CODE[name]
    except KeyError:
        raise ValueError(f"unknown species {name!r}") from None


@dataclass
class Particle:
    """One quantum in flight: species, kinetic energy (keV), position (cm), unit direction."""

    species: str
    energy: float
    position: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        species_code(self.species)
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        self.direction = np.asarray(self.direction, dtype=float).reshape(3)
        if not self.energy > 0:
            raise ValueError("particle energy must be positive")
        if abs(np.linalg.norm(self.direction) - 1.0) > 1e-9:
            raise ValueError("particle direction must be unit-norm")

    @property
    def momentum_direction(self):
        return self.direction
