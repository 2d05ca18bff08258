from abc import ABC, abstractmethod
from typing import Optional

import numpy as np


class FiniteSum(ABC):
    """A function f(omega) = sum_i f_i(omega) that an incremental method can query one term at a time.

    Smoothing parameters are passed in explicitly: ``mu`` is one value per component for whole-sum
    queries and a single value for component queries. Formulations without smoothing ignore it.
    """

    @property
    @abstractmethod
    def num_components(self) -> int:
        pass

    @property
    @abstractmethod
    def dim(self) -> int:
        pass

    @abstractmethod
    def value(self, omega: np.ndarray, mu: Optional[np.ndarray] = None) -> float:
        """The objective being minimized (the governing formulation)."""
        pass

    @abstractmethod
    def gradient(self, index: int, omega: np.ndarray, mu: Optional[float] = None) -> np.ndarray:
        """One (generalized) gradient of component ``index`` at ``omega``."""
        pass

    def true_value(self, omega: np.ndarray) -> float:
        """The reference objective reported next to the governing one."""
        return self.value(omega)

    def is_nonconvex(self, index: int) -> bool:
        return False

    def dc_subgradients(self, index: int, omega: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Subgradients (of g_i, of h_i) of a DC split f_i = g_i - h_i."""
        raise NotImplementedError(f'{type(self).__name__} has no DC split')

    def anchor_curvature(self, index: int, mu: Optional[float] = None) -> Optional[np.ndarray]:
        """Diagonal Hessian of the quadratic anchored at the component's base point, if any.

        Added to a gradient displacement as ``y += curvature * s``.
        """
        return None
