from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Theta:
    """Real-valued model parameters (beta, tau2, sigma2, sigma_beta2, phi)."""

    beta: np.ndarray = field(default_factory=lambda: np.zeros(1))
    tau2: float = 1.0
    sigma2: float = 1.0
    sigma_beta2: float = 1.0
    phi: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "beta", np.atleast_1d(np.asarray(self.beta, dtype=float)))
