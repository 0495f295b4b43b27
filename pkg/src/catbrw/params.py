from __future__ import annotations

from dataclasses import dataclass

from .lattice import MAX_DIM


@dataclass(frozen=True)
class ModelParams:
    """Dimension and branching rates of the catalytic branching random walk.

    Particles jump at rate 1 to a uniform neighbour and split in two at
    rate ``lambda0`` at the origin and ``lam`` elsewhere.
    """

    d: int
    lam: float
    lambda0: float

    def __post_init__(self):
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "lambda0", float(self.lambda0))
        if not 1 <= self.d <= MAX_DIM:
            raise ValueError(f"d must be in 1..{MAX_DIM}, got {self.d}")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if self.lambda0 < self.lam:
            raise ValueError("lambda0 must be >= lam")

    @property
    def epsilon(self) -> float:
        """Excess branch rate at the catalyst."""
        return self.lambda0 - self.lam

    def rate(self, x) -> float:
        return self.lambda0 if not any(x) else self.lam

    @property
    def localisation_threshold(self) -> float:
        """``2d - 1 + 2d*lam``; strong localisation is proved above it."""
        return 2 * self.d - 1 + 2 * self.d * self.lam

    def to_dict(self) -> dict:
        return {"d": self.d, "lambda": self.lam, "lambda0": self.lambda0}
