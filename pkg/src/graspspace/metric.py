"""Grasp map, minimum-singular-value quality and the static lift test.

Contacts are point contacts with friction.  Each contact contributes three
columns to the grasp map: two tangents and the inward normal, stacked over
the torque they produce about the object origin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import ContactError
from .mathcore import singular_values

GRAVITY = 9.81
FRICTION_EDGES = 8
RANK_TOL = 1e-9


@dataclass(frozen=True)
class Contact:
    """Contact point and inward (into the object) unit normal, object frame."""

    position: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))
        object.__setattr__(self, "normal", np.asarray(self.normal, dtype=float).reshape(3))


def tangent_basis(n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic tangents ``t1, t2`` so that ``[t1, t2, n]`` is right handed."""
    a = np.array([1.0, 0.0, 0.0])
    if abs(n @ a) > 0.9:
        a = np.array([0.0, 1.0, 0.0])
    t1 = np.cross(n, a)
    t1 /= np.linalg.norm(t1)
    return t1, np.cross(n, t1)


def skew(p: np.ndarray) -> np.ndarray:
    return np.array([
        [0.0, -p[2], p[1]],
        [p[2], 0.0, -p[0]],
        [-p[1], p[0], 0.0],
    ])


def _check_normal(c: Contact) -> None:
    if abs(np.linalg.norm(c.normal) - 1.0) > 1e-6:
        raise ContactError(f"contact normal {c.normal} is not unit length")


def build_grasp_map(contacts: list[Contact]) -> np.ndarray:
    """The ``6 x 3k`` grasp map of ``k`` frictional point contacts."""
    if len(contacts) == 0:
        raise ContactError("grasp map needs at least one contact")
    blocks = []
    for c in contacts:
        _check_normal(c)
        t1, t2 = tangent_basis(c.normal)
        R = np.column_stack([t1, t2, c.normal])
        blocks.append(np.vstack([R, skew(c.position) @ R]))
    return np.hstack(blocks)


def q_msv(contacts: list[Contact]) -> float:
    """Minimum of the six (zero padded) singular values of the grasp map."""
    if len(contacts) < 2:
        # three columns can never reach row rank six
        return 0.0
    return float(singular_values(build_grasp_map(contacts))[-1])


def grasp_rank(contacts: list[Contact], tol: float = RANK_TOL) -> int:
    if not contacts:
        return 0
    return int(np.sum(singular_values(build_grasp_map(contacts)) > tol))


def friction_edges(c: Contact, mu: float, n_edges: int = FRICTION_EDGES) -> np.ndarray:
    """Edge directions of the inscribed friction pyramid, one per row."""
    t1, t2 = tangent_basis(c.normal)
    phi = 2 * np.pi * np.arange(n_edges) / n_edges
    return c.normal + mu * (np.cos(phi)[:, None] * t1 + np.sin(phi)[:, None] * t2)


def can_resist_gravity(contacts: list[Contact], mass: float, mu: float, plane,
                       force_budget: float = 20.0, gravity: float = GRAVITY) -> bool:
    """Whether contact forces inside their friction pyramids can hold the object.

    Gravity pulls along ``-plane normal`` through the object origin.  Each
    contact force is a non-negative combination of its pyramid edges, whose
    normal components are all 1, so the per-contact normal force is the sum of
    the edge weights and is capped at ``force_budget``.
    """
    if not contacts:
        return False
    if mu <= 0.0:
        raise ValueError("friction coefficient must be positive")
    up = np.asarray(plane, dtype=float)[:3]
    up = up / np.linalg.norm(up)

    cols = []
    for c in contacts:
        _check_normal(c)
        E = friction_edges(c, mu)
        cols.append(np.vstack([E.T, np.cross(c.position, E).T]))
    W = np.hstack(cols)
    target = np.concatenate([mass * gravity * up, np.zeros(3)])

    k = len(contacts)
    budget = np.zeros((k, W.shape[1]))
    for i in range(k):
        budget[i, i * FRICTION_EDGES:(i + 1) * FRICTION_EDGES] = 1.0
    res = linprog(np.zeros(W.shape[1]), A_ub=budget, b_ub=np.full(k, force_budget),
                  A_eq=W, b_eq=target, bounds=(0, None), method="highs")
    return res.status == 0
