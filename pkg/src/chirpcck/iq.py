"""Complex baseband sample buffers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError, InvalidSampleRate

WIFI_CHIP_RATE = 11e6


@dataclass(frozen=True, eq=False)
class IqBuffer:
    """Complex baseband samples tagged with their sample rate in Hz."""

    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.complex128)
        if samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        if not self.sample_rate > 0:
            raise InvalidSampleRate(f"sample rate must be positive, got {self.sample_rate}")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", float(self.sample_rate))

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def with_samples(self, samples) -> "IqBuffer":
        return IqBuffer(samples, self.sample_rate)

    def concat(self, *others: "IqBuffer") -> "IqBuffer":
        for other in others:
            if other.sample_rate != self.sample_rate:
                raise ConsistencyError("cannot concatenate buffers with different sample rates")
        return IqBuffer(np.concatenate([self.samples, *(o.samples for o in others)]), self.sample_rate)

    def power(self) -> float:
        """Mean power over the non-silent samples (exact zeros are silence)."""
        active = self.samples[self.samples != 0]
        if active.size == 0:
            return 0.0
        return float(np.mean(np.abs(active) ** 2))
