"""Bus admittance matrix for series-only branches."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Network


@dataclass(frozen=True)
class AdmittanceMatrix:
    """Dense, read-only complex bus admittance matrix ``Y = G + jB``."""

    values: np.ndarray

    def g(self, i: int, j: int) -> float:
        return float(self.values[i, j].real)

    def b(self, i: int, j: int) -> float:
        return float(self.values[i, j].imag)

    @property
    def G(self) -> np.ndarray:  # noqa: N802
        return self.values.real

    @property
    def B(self) -> np.ndarray:  # noqa: N802
        return self.values.imag

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape  # type: ignore[return-value]

    def __getitem__(self, index: tuple[int, int]) -> complex:
        return complex(self.values[index])


def build_ybus(net: Network) -> AdmittanceMatrix:
    """Assemble the bus admittance matrix.

    ``Y[i][i]`` sums the series admittances ``1/(r + jx)`` of all incident
    branches and ``Y[i][j]`` is minus the admittance of the branch between
    ``i`` and ``j`` (summed over parallel branches). No shunt terms exist, so
    every row sums to zero.

    Args:
        net: A validated network.

    Returns:
        The read-only :class:`AdmittanceMatrix`.
    """
    n_bus = net.n_bus
    values = np.zeros((n_bus, n_bus), dtype=complex)
    for branch in net.branches:
        y = branch.admittance
        i, j = branch.from_bus, branch.to_bus
        values[i, i] += y
        values[j, j] += y
        values[i, j] -= y
        values[j, i] -= y
    values.setflags(write=False)
    return AdmittanceMatrix(values=values)


def branch_admittances(net: Network) -> np.ndarray:
    """Series admittance ``g + jb`` of every branch, in branch order."""
    return np.array([branch.admittance for branch in net.branches], dtype=complex)
