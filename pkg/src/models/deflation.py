"""
Deflation of known solutions for the constrained gradient flow.
The search direction g is multiplied by
M(u) = product_i ( shift + ||u - w_i||^(-2 power) )
which blows up next to every recorded solution w_i and tends to shift^k far from all of them.
"""

from typing import Iterable, List

import numpy as np

from src.features.spectral import Field


class DeflationOperator:
    def __init__(self, solutions: Iterable[Field] = (), power: float = 1.0, shift: float = 1.0) -> None:
        #: exponent of the L2 distance in the penalty
        self.power = power
        #: additive constant, keeps the factor at shift^k far away from the solutions
        self.shift = shift
        #: solutions suppressed by the operator
        self.solutions: List[Field] = list(solutions)

    def distances(self, u: Field) -> List[float]:
        return [(u - w_i).norm() for w_i in self.solutions]

    def operator(self, u: Field) -> float:
        """value of the deflation factor at u, 1 for an empty solution list"""
        floor = np.finfo(float).eps
        return float(
            np.prod([self.shift + max(d**2, floor) ** -self.power for d in self.distances(u)])
            if self.solutions
            else 1.0
        )

    def deflated_direction(self, g: Field, u: Field) -> Field:
        if not self.solutions:
            return g
        return self.operator(u) * g

    def relative_distance(self, u: Field) -> float:
        """min_i min(||u - w_i||, ||u + w_i||) / ||u||; +-w_i are the same solution"""
        if not self.solutions:
            return float("inf")
        scale = u.norm()
        nearest = min(min((u - w_i).norm(), (u + w_i).norm()) for w_i in self.solutions)
        return nearest / scale if scale > 0 else 0.0

    def add_solution(self, u: Field) -> None:
        self.solutions.append(u)

    def clear_solutions(self) -> None:
        self.solutions = []
