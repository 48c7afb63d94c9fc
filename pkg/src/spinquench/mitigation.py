"""Post-selection onto the conserved total-magnetization sector.

The chain dynamics conserve sum_j Z_j, so any measured bitstring outside the
initial sector is certainly an error. A single bit flip always leaves the
sector, so discarding those shots removes the first-order contribution of
bit-flip noise; errors that survive need at least two flips.
"""

from __future__ import annotations

from dataclasses import dataclass

from .sim import Counts


@dataclass(frozen=True)
class PostselectionReport:
    kept: Counts
    retained_fraction: float
    target_sz: int

    @property
    def empty(self) -> bool:
        """True when no shot survived; observables on ``kept`` are undefined."""
        return self.kept.shots == 0


def bitstring_sz(bits: str) -> int:
    return len(bits) - 2 * bits.count("1")


def postselect(counts: Counts, target_sz: int) -> PostselectionReport:
    kept = {k: v for k, v in counts.table.items() if bitstring_sz(k) == target_sz}
    kept_counts = Counts(counts.n_qubits, kept)
    fraction = kept_counts.shots / counts.shots if counts.shots else 0.0
    return PostselectionReport(kept_counts, fraction, target_sz)
