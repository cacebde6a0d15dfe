"""CODATA constants used by the spectral-density formula."""

from dataclasses import dataclass

from scipy import constants as _sc


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float = _sc.hbar  # J s
    c: float = _sc.c  # m/s
    epsilon0: float = _sc.epsilon_0  # F/m
    h: float = _sc.h  # J s


CONSTANTS = PhysicalConstants()
