"""DC power flow: incidence/susceptance assembly and PTDF factors.

Positive flow on a branch runs from ``from_zone`` to ``to_zone``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .network import Network, connected_zone_groups


class DisconnectedNetworkError(ValueError):
    def __init__(self, groups):
        self.groups = groups
        super().__init__(f"branch graph is disconnected; components: {groups}")


def incidence_matrix(net: Network) -> np.ndarray:
    """Branch x zone matrix with +1 at the from-zone and -1 at the to-zone."""
    A = np.zeros((len(net.branches), net.n_zones))
    for k, b in enumerate(net.branches):
        A[k, net.zone_index(b.from_zone)] = 1.0
        A[k, net.zone_index(b.to_zone)] = -1.0
    return A


def susceptance_matrix(net: Network) -> np.ndarray:
    A = incidence_matrix(net)
    b = np.array([1.0 / br.reactance_pu for br in net.branches])
    return A.T @ (b[:, None] * A)


@dataclass(frozen=True)
class PtdfMatrix:
    values: np.ndarray  # branches x zones
    slack_zone: int
    zone_ids: tuple[int, ...]
    branch_ids: tuple[int, ...]

    def __post_init__(self):
        self.values.setflags(write=False)

    @property
    def shape(self):
        return self.values.shape

    def column(self, zone_id: int) -> np.ndarray:
        return self.values[:, self.zone_ids.index(zone_id)]


def compute_ptdf(net: Network, slack: Optional[int] = None) -> PtdfMatrix:
    """PTDF with injections withdrawn at ``slack`` (default: lowest zone id)."""
    groups = connected_zone_groups(net)
    if len(groups) > 1:
        raise DisconnectedNetworkError(groups)
    if slack is None:
        slack = min(net.zone_ids)
    if any(br.reactance_pu <= 0 for br in net.branches):
        raise ValueError("branch reactances must be > 0")
    s = net.zone_index(slack)
    A = incidence_matrix(net)
    b = np.array([1.0 / br.reactance_pu for br in net.branches])
    B = A.T @ (b[:, None] * A)
    keep = [k for k in range(net.n_zones) if k != s]
    ptdf = np.zeros((len(net.branches), net.n_zones))
    if keep:
        B_red = B[np.ix_(keep, keep)]
        # theta_red = B_red^-1 p_red ; f = diag(b) A theta
        X = np.linalg.solve(B_red, np.eye(len(keep)))
        ptdf[:, keep] = (b[:, None] * A[:, keep]) @ X
    return PtdfMatrix(ptdf, slack, tuple(net.zone_ids), tuple(br.id for br in net.branches))


def line_flows(ptdf: PtdfMatrix, injections, tol: float = 1e-6) -> np.ndarray:
    """Branch flows for a balanced zonal injection vector (MW)."""
    p = np.asarray(injections, dtype=float)
    if p.shape[0] != ptdf.values.shape[1]:
        raise ValueError(f"expected {ptdf.values.shape[1]} zonal injections, got {p.shape[0]}")
    imbalance = p.sum(axis=0)
    if np.any(np.abs(imbalance) > tol):
        raise ValueError(f"injections must sum to zero, imbalance {np.max(np.abs(imbalance)):.3g} MW")
    return ptdf.values @ p


def nodal_net_outflow(net: Network, flows) -> np.ndarray:
    """Per-zone net branch outflow implied by ``flows`` (branches first axis)."""
    return incidence_matrix(net).T @ np.asarray(flows)
